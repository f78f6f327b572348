use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(fieldscribe_cli::run(std::env::args_os()))
}
