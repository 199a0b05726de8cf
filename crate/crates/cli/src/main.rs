use std::io::Write;
use std::process::ExitCode;

use impasse_cli::{execute, parse_invocation, write_csv, CliError};

fn run() -> Result<(), CliError> {
    let inv = parse_invocation(std::env::args_os())?;
    let report = execute(&inv)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let io = |e: std::io::Error| CliError::Io(format!("stdout: {e}"));
    match &inv.global.out {
        Some(path) => {
            write_csv(&report.table, path)?;
            for line in report.summary_lines() {
                writeln!(out, "{line}").map_err(io)?;
            }
        }
        None => {
            for line in report.summary_lines() {
                writeln!(out, "# {line}").map_err(io)?;
            }
            out.write_all(report.table.to_csv_string().as_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Display(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("impasse: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
