use clap::Parser;
use idrate_cli::{configure_threads, emit, resolve, run, Cli};
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| {
        let settings = resolve(cli.task, &cli.flags)?;
        let report = run(&settings)?;
        emit(&report, settings.format, settings.out.as_deref())?;
        Ok(report.pass)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("idrate: one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("idrate: {e:#}");
            ExitCode::from(2)
        }
    }
}
