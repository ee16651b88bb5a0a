use std::process::ExitCode;

fn main() -> ExitCode {
    qkernel::cli::run(std::env::args_os())
}
