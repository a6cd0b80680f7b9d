use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use harmonia::config::ExperimentConfig;
use harmonia::output::check_schema;
use harmonia::suites::{SuiteRegistry, UnknownSuite};

#[derive(Parser)]
#[command(name = "harmonia", version, about = "Run numerical experiment suites on the discrete torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one suite and write results.csv and summary.txt.
    Run(RunArgs),
    /// List the registered suites.
    List,
    /// Check a results CSV against the schema of the suite that wrote it.
    Validate {
        csv: PathBuf,
        /// Suite name; inferred from the header when omitted.
        #[arg(long)]
        suite: Option<String>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    suite: Option<String>,
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "grid-J")]
    grid_j: Option<u32>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    exponents: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors from bad input rather than from a failed computation.
fn is_usage(e: &anyhow::Error) -> bool {
    use harmonia_core::Error as E;
    e.chain().any(|c| {
        c.downcast_ref::<UnknownSuite>().is_some()
            || c.downcast_ref::<std::num::ParseFloatError>().is_some()
            || c.downcast_ref::<std::num::ParseIntError>().is_some()
            || matches!(c.downcast_ref::<E>(), Some(E::Config(_) | E::Parameter(_) | E::Budget(_)))
    })
}

fn build_config(args: RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let flags: [(&str, Option<String>); 12] = [
        ("suite", args.suite),
        ("seed", args.seed.map(|v| v.to_string())),
        ("J", args.grid_j.map(|v| v.to_string())),
        ("d", args.dim.map(|v| v.to_string())),
        ("gamma", args.gamma.map(|v| v.to_string())),
        ("q", args.q),
        ("sigma", args.sigma.map(|v| v.to_string())),
        ("t", args.t),
        ("s", args.s.map(|v| v.to_string())),
        ("mu", args.mu),
        ("exponents", args.exponents),
        ("trials", args.trials.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    if let Some(o) = args.out {
        cfg.out = Some(o);
    }
    if cfg.suite.is_empty() {
        bail!(UnknownSuite { name: String::new(), valid: SuiteRegistry::builtin().names().join(", ") });
    }
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<bool> {
    let cfg = build_config(args)?;
    let registry = SuiteRegistry::builtin();
    let out = registry.run(&cfg)?;
    let dir = cfg.out_dir();
    out.write(&dir, &cfg.render())?;
    for (k, v) in &out.summary {
        println!("{k}={v}");
    }
    for f in &out.failures {
        eprintln!("failure: {f}");
    }
    println!("{}: {} ({} rows) -> {}", cfg.suite, if out.passed() { "pass" } else { "FAIL" }, out.results.rows.len(), dir.display());
    Ok(out.passed())
}

fn validate(path: PathBuf, suite: Option<String>) -> Result<bool> {
    let bytes = std::fs::read(&path)?;
    let registry = SuiteRegistry::builtin();
    let candidates: Vec<_> = match &suite {
        Some(name) => match registry.get(name) {
            Some(s) => vec![s],
            None => bail!(UnknownSuite { name: name.clone(), valid: registry.names().join(", ") }),
        },
        None => registry.iter().collect(),
    };
    let mut last = None;
    for s in candidates {
        match check_schema(&bytes, &s.schema()) {
            Ok(rows) => {
                println!("{}: valid {} table with {rows} rows", path.display(), s.name());
                return Ok(true);
            }
            Err(e) => last = Some(e),
        }
    }
    eprintln!("{}: {}", path.display(), last.map(|e| e.to_string()).unwrap_or_default());
    Ok(false)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List => {
            for s in SuiteRegistry::builtin().iter() {
                println!("{:<26} {}", s.name(), s.description());
            }
            Ok(true)
        }
        Command::Run(args) => run(args),
        Command::Validate { csv, suite } => validate(csv, suite),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
