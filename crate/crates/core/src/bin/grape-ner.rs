use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(grape_ner::cli::main_with(std::env::args_os()))
}
