//! `lab <experiment> [--config file] [--set key=value]... [--out dir] [--seed n]`
//!
//! Exit codes: 0 on success, 2 on validation errors, 3 on numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lplab_harness::{find, run_experiment, ExperimentConfig, HarnessError, Overrides};

#[derive(Debug, Parser)]
#[command(name = "lab", version, about = "Run a named lplab experiment and write CSV/JSON reports with a manifest")]
struct Cli {
    /// Experiment name or alias; `list` writes the registry.
    experiment: String,
    /// JSON config file with keys experiment, seed, out, params.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter override `key=value`; values parse as JSON or comma lists.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (default: $LAB_OUT_DIR, then lab-out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    example: Option<String>,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    per_path: bool,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long = "cap-K")]
    cap_k: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long = "mu-grid")]
    mu_grid: Option<String>,
    #[arg(long = "M")]
    m: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    branch: Option<String>,
    #[arg(long)]
    levels: Option<String>,
}

impl Cli {
    fn flags(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = [
            ("paths", &self.paths),
            ("dt", &self.dt),
            ("example", &self.example),
            ("domain", &self.domain),
            ("delta", &self.delta),
            ("cap_k", &self.cap_k),
            ("grid", &self.grid),
            ("mu_grid", &self.mu_grid),
            ("m", &self.m),
            ("p", &self.p),
            ("branch", &self.branch),
            ("levels", &self.levels),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect();
        if self.per_path {
            v.push(("per_path".into(), "true".into()));
        }
        v
    }
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let exp = find(&cli.experiment)?;
    let ov = Overrides { config: cli.config.clone(), sets: cli.sets.clone(), out: cli.out.clone(), seed: cli.seed, flags: cli.flags() };
    let config = ExperimentConfig::resolve(exp.name, &exp.params(), &ov)?;
    let manifest = run_experiment(&config)?;
    for f in &manifest.files {
        println!("{}", config.out.join(f).display());
    }
    println!("{}", config.out.join(lplab_harness::report::MANIFEST).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
