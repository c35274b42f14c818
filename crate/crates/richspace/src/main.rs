use std::process::ExitCode;

fn main() -> ExitCode {
    richspace::cli::main()
}
