mod cli;
mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};
use serde::de::DeserializeOwned;
use serde::Serialize;

use cli::{Cli, Command, Format};
use output::{load_config, resolve, CliError, CliResult, Metadata};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("\nRun `obsopt --help` for usage.");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

/// Resolves a subcommand's options against `--config` and sets up its
/// metadata record.
fn prepare<T>(cli: &Cli, flags: &T, seed: impl Fn(&T) -> Option<u64>) -> CliResult<(T, Metadata)>
where
    T: Serialize + DeserializeOwned + Default,
{
    let file = cli.config.as_deref().map(|p| load_config(p, cli.command.name())).transpose()?;
    let args = resolve(flags, file)?;
    let meta = Metadata::new(cli.command.name(), cli.format, seed(&args), &args)?;
    Ok((args, meta))
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(output::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    let format: Format = cli.format;
    let meta = match &cli.command {
        Command::Simulate(flags) => {
            let (args, mut meta) = prepare(&cli, flags, |a| Some(a.seed.unwrap_or(0)))?;
            commands::simulate(&args, format, &mut meta)?;
            meta
        }
        Command::Predict(flags) => {
            let (args, mut meta) = prepare(&cli, flags, |_| None)?;
            commands::predict(&args, format, &mut meta)?;
            meta
        }
        Command::Prescribe(flags) => {
            let (args, mut meta) = prepare(&cli, flags, |_| None)?;
            commands::prescribe(&args, format, &mut meta)?;
            meta
        }
        Command::Test(flags) => {
            let (args, mut meta) = prepare(&cli, flags, |a| Some(a.seed.unwrap_or(0)))?;
            if args.candidate.is_none() && args.candidate_from.is_none() {
                let mut cmd = Cli::command();
                cmd.build();
                let usage = cmd.find_subcommand_mut("test").expect("test subcommand").render_usage();
                return Err(CliError::Usage(format!("--candidate <z> or --candidate-from <strategy> is required\n\n{usage}")));
            }
            commands::test(&args, &mut meta)?;
            meta
        }
        Command::Bounds(flags) => {
            let (args, mut meta) = prepare(&cli, flags, |a| a.verify.then(|| a.seed.unwrap_or(0)))?;
            commands::bounds(&args, format, &mut meta)?;
            meta
        }
        Command::Replicate(flags) => {
            let (args, mut meta) = prepare(&cli, flags, |a| Some(a.seed.unwrap_or(0)))?;
            commands::replicate(&args, format, &mut meta)?;
            meta
        }
    };
    meta.emit()
}
