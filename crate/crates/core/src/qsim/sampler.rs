//! Draws from the discrete measure that the Jackson integral over `[-nu, nu]` induces.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{QError, Result};
use crate::qcore::{QParam, SeriesPolicy};

/// Allowed deviation of the raw Jackson mass from 1.
pub const MASS_TOLERANCE: f64 = 0.01;

/// Categorical law on `{+-q^k nu}` with masses `(1-q) q^k nu f(+-q^k nu)`.
#[derive(Debug, Clone)]
pub struct QSampler {
    q: QParam,
    grid_points: Vec<f64>,
    masses: Vec<f64>,
    raw_mass: f64,
    index: WeightedIndex<f64>,
    rng_seed: u64,
}

/// Builds the sampler; masses are renormalized after the raw mass check.
pub fn build_sampler(f: impl Fn(f64) -> f64, q: QParam, policy: &SeriesPolicy, seed: u64) -> Result<QSampler> {
    let qv = q.value();
    let nu = q.nu();
    let (mut grid_points, mut masses) = (Vec::new(), Vec::new());
    let mut qk = 1.0f64;
    let mut raw_mass = 0.0;
    let mut prev = f64::INFINITY;
    let mut f_seen = 0.0f64;
    let mut complete = false;
    for k in 0..policy.max_terms {
        let p = qk * nu;
        let w = (1.0 - qv) * p;
        for point in [p, -p] {
            let v = f(point);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(QError::InvalidParameter(format!("density value {v} at x = {point}")));
            }
            f_seen = f_seen.max(v);
            grid_points.push(point);
            masses.push(w * v);
        }
        let mag = masses[masses.len() - 1] + masses[masses.len() - 2];
        raw_mass += mag;
        // same stopping rule as the Jackson integral
        let decaying = mag > 0.0 && mag < prev && k > 0;
        let exhausted = p * f_seen.max(1.0) < policy.tol;
        if mag / (1.0 - qv) < policy.tol && (decaying || exhausted) {
            complete = true;
            break;
        }
        prev = mag;
        qk *= qv;
    }
    if !complete {
        return Err(QError::TruncationIncomplete { terms: policy.max_terms, partial: raw_mass });
    }
    if (raw_mass - 1.0).abs() > MASS_TOLERANCE {
        return Err(QError::InvalidDensity { mass: raw_mass, tolerance: MASS_TOLERANCE });
    }
    for m in &mut masses {
        *m /= raw_mass;
    }
    let index = WeightedIndex::new(&masses).map_err(|e| QError::InvalidParameter(e.to_string()))?;
    Ok(QSampler { q, grid_points, masses, raw_mass, index, rng_seed: seed })
}

impl QSampler {
    pub fn q(&self) -> QParam {
        self.q
    }

    pub fn grid_points(&self) -> &[f64] {
        &self.grid_points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Mass before renormalization, the Jackson integral of `f` over `[-nu, nu]`.
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.grid_points[self.index.sample(rng)]
    }

    /// `n` draws from the sampler's own seeded stream.
    pub fn draws(&self, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }

    /// `sum_j masses_j x_j^k`, the normalized Jackson moment.
    pub fn moment(&self, k: u32) -> f64 {
        self.grid_points
            .iter()
            .zip(&self.masses)
            .map(|(x, m)| m * x.powi(k as i32))
            .sum()
    }
}
