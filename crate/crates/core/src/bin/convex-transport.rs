use std::process::ExitCode;

fn main() -> ExitCode {
    convex_transport::cli::main_with_args(std::env::args_os())
}
