use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lenkf_core::experiment::{self, ExperimentConfig};
use serde_json::json;

/// Experiments with the domain-localized ensemble Kalman filter.
#[derive(Parser, Debug)]
#[command(name = "lenkf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run Kalman, EnKF and LEnKF on shared observations; write per-step and summary CSVs.
    Simulate(Common),
    /// Average localization profile of the LEnKF forecast covariance.
    PhiHat(Common),
    /// LEnKF MSE across noise scales, with the log-log slope.
    SweepEpsilon(Common),
    /// Theory report: weak-interaction coefficient, psi condition, sample sizes, theorem conditions.
    CheckTheory(Common),
    /// Tail curves of the sample-covariance concentration harness.
    Concentration(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `regime1` or `regime2`.
    #[arg(long)]
    regime: Option<String>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Number of assimilation steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Ensemble size.
    #[arg(short = 'k', long = "ensemble")]
    ensemble: Option<usize>,
    /// Any config field, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (simulate) or file (other commands); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ExperimentConfig::from_json(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(r) = &self.regime {
            cfg.regime = r.clone();
        }
        if let Some(d) = &self.dims {
            cfg.dims = d.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(t) = self.steps {
            cfg.steps = t;
        }
        if let Some(k) = self.ensemble {
            cfg.k = k;
        }
        for kv in &self.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| lenkf_core::Error::Config(format!("expected KEY=VALUE, got {kv:?}")))?;
            cfg.apply_override(key.trim(), value)?;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.display().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Simulate(c)
        | Command::PhiHat(c)
        | Command::SweepEpsilon(c)
        | Command::CheckTheory(c)
        | Command::Concentration(c) => c,
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = common.config()?;
    let out = common.out.as_deref();
    match &cli.command {
        Command::Simulate(_) => {
            let runs = experiment::run_regime(&cfg)?;
            let summary = experiment::summary_csv(&cfg, &runs);
            match out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    emit(Some(&dir.join("steps.csv")), &experiment::steps_csv(&cfg, &runs))?;
                    emit(Some(&dir.join("summary.csv")), &summary)?;
                }
                None => emit(None, &summary)?,
            }
        }
        Command::PhiHat(_) => {
            let phi = experiment::phi_hat(&cfg)?;
            emit(out, &experiment::phi_csv(&cfg, &phi))?;
        }
        Command::SweepEpsilon(_) => {
            let sweep = experiment::epsilon_sweep(&cfg)?;
            emit(out, &experiment::sweep_csv(&cfg, &sweep))?;
        }
        Command::CheckTheory(_) => {
            let mut report = experiment::check_theory(&cfg)?;
            report["config"] = serde_json::to_value(&cfg)?;
            emit(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
        }
        Command::Concentration(_) => {
            let res = experiment::concentration_cmd(&cfg)?;
            let csv = experiment::concentration_csv(&cfg, &res);
            emit(out, &csv)?;
            let fits = json!({ "decay_fits": res.fits });
            eprintln!("{}", serde_json::to_string_pretty(&fits)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<lenkf_core::Error>() {
                Some(lenkf_core::Error::Config(_)) | Some(lenkf_core::Error::Argument(_)) => ExitCode::from(2),
                Some(lenkf_core::Error::Degenerate { .. }) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
