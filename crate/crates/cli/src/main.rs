use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use tailbound_cli::{run, Cli, EXIT_CONFIG, EXIT_OK};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(out) => {
            if out.code == EXIT_OK {
                println!("{}", out.summary);
            } else {
                eprintln!("{}", out.summary);
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(out.code as u8)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
