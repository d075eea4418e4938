use std::process::ExitCode;

use randwidth::cli::{execute, parse_config, CliError, CONFIG_ENV};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let file = match std::env::var_os(CONFIG_ENV) {
        Some(path) => match std::fs::read_to_string(&path) {
            Ok(text) => Some(text),
            Err(e) => {
                eprintln!(
                    "usage error: cannot read {CONFIG_ENV}={}: {e}",
                    path.to_string_lossy()
                );
                return ExitCode::from(2);
            }
        },
        None => None,
    };
    let result = parse_config(&args, file.as_deref()).and_then(|config| execute(&config));
    match result {
        Ok(out) => {
            println!(
                "{} ({} rows, sha256 {})",
                out.csv.display(),
                out.rows,
                out.sha256
            );
            println!("{}", out.manifest.display());
            ExitCode::SUCCESS
        }
        Err(CliError::Help) => {
            print!("{}", CliError::Help);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
