use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = ccfm_cli::Cli::parse();
    match ccfm_cli::run(cli) {
        Ok(summary) => {
            if !summary.is_empty() {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
