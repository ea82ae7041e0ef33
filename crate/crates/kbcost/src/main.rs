use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use kbcost::cli::Cli;
use kbcost::commands;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = commands::run(&cli.command).and_then(|o| {
        let text = o.report.emit(cli.format)?;
        Ok((text, o.failure))
    });
    match outcome {
        Ok((text, failure)) => {
            let mut out = std::io::stdout().lock();
            if out
                .write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .is_err()
            {
                return ExitCode::from(1);
            }
            match failure {
                Some(msg) => {
                    eprintln!("kbcost: {msg}");
                    ExitCode::from(1)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("kbcost: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
