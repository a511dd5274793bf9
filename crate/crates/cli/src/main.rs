use std::process::ExitCode;

fn main() -> ExitCode {
    ps8net_cli::run(std::env::args_os())
}
