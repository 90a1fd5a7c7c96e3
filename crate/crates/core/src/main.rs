use std::process::ExitCode;

fn main() -> ExitCode {
    core_reft::cli::main()
}
