use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(setrbm_cli::run(std::env::args_os()))
}
