use std::process::ExitCode;

fn main() -> ExitCode {
    aagan::cli::main_with(std::env::args_os())
}
