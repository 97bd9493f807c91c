use std::process::ExitCode;

fn main() -> ExitCode {
    prime::cli::main()
}
