use std::process::ExitCode;

use dicelab_cli::{exit_code, parse_args, run, write_report, CliError};

fn main() -> ExitCode {
    let config = match parse_args(std::env::args_os()) {
        Ok(c) => c,
        Err(CliError::Usage(text)) => {
            // clap renders --help and --version through the same path
            let is_info = text.starts_with("Experiments") || text.starts_with("dicelab ");
            if is_info {
                print!("{text}");
                return ExitCode::SUCCESS;
            }
            eprint!("{text}");
            if !text.ends_with('\n') {
                eprintln!();
            }
            return ExitCode::from(64);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let report = match run(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for w in &report.warnings {
        eprintln!("{w}");
    }
    if let Err(e) = write_report(&report) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if let Some(a) = &report.assertion {
        if config.assert_thresholds {
            eprintln!("assert: {} ({})", if a.passed { "pass" } else { "FAIL" }, a.message);
        }
    }
    ExitCode::from(exit_code(&report) as u8)
}
