use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sector_homog::experiments::{run, ExperimentKind, RunConfig};
use sector_homog::Error;

/// Corner-adapted two-scale expansion experiments on sectors.
#[derive(Parser, Debug)]
#[command(name = "sector-homog", version)]
struct Cli {
    /// cell | gain | corrector-growth | excess-decay | gamma-recovery | extend-check
    experiment: String,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output root; the run goes to <out>/<config hash>/.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "SECTOR_HOMOG_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                Error::Config(_) => "config",
                Error::Io(_) => "io",
                _ => "run",
            };
            eprintln!("error[{kind}]: {e}");
            ExitCode::from(if kind == "config" { 2 } else { 1 })
        }
    }
}

fn execute(cli: &Cli) -> sector_homog::Result<()> {
    let kind = ExperimentKind::parse(&cli.experiment)?;
    let config = RunConfig::from_file(&cli.config)?;
    if config.experiment.kind != kind {
        return Err(Error::Config(format!(
            "command '{}' does not match experiment.kind '{}' in {}",
            kind.as_str(),
            config.experiment.kind.as_str(),
            cli.config.display()
        )));
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let outcome = run(&config, &out)?;
    println!("{}", outcome.dir.display());
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}
