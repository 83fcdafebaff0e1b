use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdout = io::stdout();
    let code = omp_recovery::cli::main_with_args(std::env::args_os(), &mut stdout.lock());
    ExitCode::from(code as u8)
}
