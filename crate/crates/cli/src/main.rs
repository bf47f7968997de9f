use std::process::ExitCode;

fn main() -> ExitCode {
    let mut stdout = std::io::stdout();
    match detnet_cli::run(std::env::args_os(), &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
