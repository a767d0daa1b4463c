mod config;
mod error;
mod experiments;

use clap::{CommandFactory, FromArgMatches, Parser, ValueEnum};
use config::{read_config_file, ExperimentConfig, Kind};
use error::CliError;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

const AFTER_HELP: &str = "\
Parameters are key=value tokens; unknown keys are rejected. Model keys:
  delta=<δ ≥ 0>   phi=const:c | logistic:a,b,lo,hi   g=const:c
  lambda=point:x | gamma:scale,shape | atoms:x1,x2,...
Every run writes its CSVs and manifest.txt to --out; `--config manifest.txt`
reproduces the CSVs byte for byte. The acceptance criteria run with
`cargo test -p besq-mf --test acceptance`.

Exit codes: 0 success, 2 invalid configuration or violated model assumption,
3 numerical failure.";

#[derive(Debug, Parser)]
#[command(
    name = "besq-mf",
    version,
    about = "Experiment runner for interacting square-root diffusions"
)]
struct Args {
    /// Experiment kind followed by key=value parameters; the kind may instead
    /// come from `kind=` in the config file.
    #[arg(value_name = "KIND] [KEY=VALUE")]
    tokens: Vec<String>,

    /// Line-oriented key=value file; command-line tokens take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Worker threads; results do not depend on this.
    #[arg(long, value_name = "K")]
    threads: Option<usize>,
}

fn run(args: Args) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    let (kind, params) = match args.tokens.split_first() {
        Some((first, rest)) if !first.contains('=') => {
            let kind = Kind::from_str(first, true)
                .map_err(|_| CliError::Config(format!("unknown experiment kind `{first}`")))?;
            (Some(kind), rest)
        }
        _ => (None, &args.tokens[..]),
    };
    let cfg = ExperimentConfig::resolve(kind, file, params)?;
    if let Some(k) = args.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let start = Instant::now();
    let outcome = experiments::run(&cfg)?;
    let wall = start.elapsed().as_secs_f64();

    std::fs::create_dir_all(&args.out)?;
    let mut names = Vec::new();
    for (name, contents) in &outcome.artifacts {
        std::fs::write(args.out.join(name), contents)?;
        names.push(name.clone());
    }
    let manifest = cfg.manifest(wall, rayon::current_num_threads(), &names);
    std::fs::write(args.out.join("manifest.txt"), manifest)?;
    println!("{}", outcome.summary);
    Ok(())
}

fn help_text() -> String {
    let mut s = String::from("Kinds (acceptance criteria exercised in brackets):\n");
    for kind in Kind::value_variants() {
        let help = kind
            .to_possible_value()
            .and_then(|v| v.get_help().map(|h| h.to_string()))
            .unwrap_or_default();
        s += &format!("  {:<11} {help}\n", kind.name());
    }
    s + "\n" + AFTER_HELP
}

fn main() -> ExitCode {
    let matches = Args::command().after_help(help_text()).get_matches();
    let args = Args::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("besq-mf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
