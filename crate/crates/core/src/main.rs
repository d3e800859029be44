use std::process::ExitCode;

fn main() -> ExitCode {
    swaykin::cli::run(std::env::args_os())
}
