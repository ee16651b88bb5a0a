//! q-arithmetic primitives and q-special functions.

mod arith;
mod param;
mod series;
mod tsallis;

pub use arith::{q_factorial, q_number, q_pochhammer};
pub use param::{QParam, SeriesPolicy, DEFAULT_ONE_LIMIT_EPSILON};
pub use series::{q_exp_big, q_exp_small, q_gauss_series};
pub use tsallis::{tsallis_exp, tsallis_ln};
