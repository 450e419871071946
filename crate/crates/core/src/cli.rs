//! Subcommand orchestration: each run writes its module's artifacts and a `manifest.json`.
//!
//! The binary only parses arguments into an [`ExperimentConfig`] and a [`Command`]; everything
//! else lives here so it can be driven from tests and examples.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{BandwidthChoice, ExperimentConfig};
use crate::convergence::{emit_report, rate_experiment};
use crate::density_mc::{kde_estimate, Bandwidth};
use crate::duhamel::{solve_diffusion_duhamel, solve_scheme_density};
use crate::error::{Error, Result};
use crate::euler::{simulate_marginal, MarginalSample};
use crate::io;
use crate::lemma_checks::{run_suite, write_reports, SWEEP_VERSION};
use crate::stable_sampler::law_test;

pub const MARGINAL_BIN: &str = "marginal.bin";
pub const MARGINAL_CSV: &str = "marginal.csv";
pub const MANIFEST: &str = "manifest.json";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Monte Carlo sample of the scheme marginal at `time`.
    Simulate,
    /// KDE of a marginal sample (read from the output directory when present).
    Density,
    /// Picard solution of the limit equation and the scheme's deterministic density.
    Duhamel,
    /// Rate ladder against a reference density.
    Converge,
    /// Lemma suite reports.
    VerifyLemmas,
    /// KS law and additivity test of the increment sampler.
    SamplerTest,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::Simulate, Command::Density, Command::Duhamel, Command::Converge, Command::VerifyLemmas, Command::SamplerTest];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Density => "density",
            Command::Duhamel => "duhamel",
            Command::Converge => "converge",
            Command::VerifyLemmas => "verify-lemmas",
            Command::SamplerTest => "sampler-test",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown subcommand '{s}'")))
    }
}

/// What a run produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub command: Command,
    pub out: PathBuf,
    pub files: Vec<String>,
    /// Headline numbers of the run.
    pub summary: Value,
    /// False when a check inside the run failed (the artifacts are still written).
    pub pass: bool,
}

fn bandwidth(config: &ExperimentConfig) -> Bandwidth {
    match config.bandwidth {
        BandwidthChoice::Fixed(b) => Bandwidth::Fixed(b),
        BandwidthChoice::Rule => Bandwidth::Rule { step: config.horizon / config.steps as f64, alpha: config.alpha() },
    }
}

fn marginal(config: &ExperimentConfig) -> Result<MarginalSample> {
    simulate_marginal(&config.scheme()?, &config.drift, config.time, config.paths)
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|it| it.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    v.retain(|f| f != MANIFEST && f != ERROR_FILE);
    v.sort();
    v
}

fn execute(command: Command, config: &ExperimentConfig, out: &Path) -> Result<(Value, bool)> {
    match command {
        Command::Simulate => {
            let sample = marginal(config)?;
            sample.write_csv(&out.join(MARGINAL_CSV))?;
            sample.write_binary(&out.join(MARGINAL_BIN))?;
            let xs = sample.column(0);
            let mean = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
            Ok((json!({ "time": sample.time, "count": sample.count(), "dim": sample.dim, "mean": mean, "config_hash": sample.config_hash }), true))
        }
        Command::Density => {
            let input = out.join(MARGINAL_BIN);
            let (sample, source) = if input.exists() {
                (MarginalSample::read_binary(&input, config.time)?, "file")
            } else {
                (marginal(config)?, "simulated")
            };
            let lattice = config.lattice()?;
            let grid = kde_estimate(&sample, &lattice, bandwidth(config))?;
            grid.write_csv(&out.join("density.csv"))?;
            grid.write_json(&out.join("density.json"))?;
            Ok((json!({ "source": source, "count": sample.count(), "mass": grid.mass, "bandwidth": grid.bandwidth }), true))
        }
        Command::Duhamel => {
            let grid = config.space_time_grid()?;
            let limit = solve_diffusion_duhamel(config.alpha(), &config.drift, &grid, config.max_iter, config.tolerance)?;
            limit.write(&out.join("limit"))?;
            let scheme = solve_scheme_density(&config.scheme()?, &config.drift, &config.lattice()?)?;
            scheme.write(&out.join("scheme"))?;
            Ok((
                json!({
                    "iterations": limit.iterations,
                    "residual": limit.residual,
                    "limit_mass": limit.last().mass,
                    "scheme_mass": scheme.last().mass,
                }),
                true,
            ))
        }
        Command::Converge => {
            let report = rate_experiment(&config.rate_settings())?;
            emit_report(&report, out)?;
            Ok((json!({ "slope": report.slope, "rate": report.rate, "lower": report.lower, "pass": report.pass }), report.pass))
        }
        Command::VerifyLemmas => {
            let reports = run_suite(config.alpha(), config.suite)?;
            write_reports(&reports, out)?;
            let pass = reports.iter().all(|r| r.pass);
            let lines: Vec<String> = reports.iter().map(|r| r.summary()).collect();
            Ok((json!({ "sweep_version": SWEEP_VERSION, "checks": lines, "pass": pass }), pass))
        }
        Command::SamplerTest => {
            let t = law_test(config.alpha(), config.paths, config.seed, config.time)?;
            io::write_json(&out.join("sampler_test.json"), &t)?;
            Ok((serde_json::to_value(&t)?, t.pass))
        }
    }
}

/// Runs `command`, writing artifacts and `manifest.json` into `config.out`.
///
/// On failure `error.json` holds the error kind and message, and the error is returned.
pub fn run(command: Command, config: &ExperimentConfig) -> Result<RunOutcome> {
    let out = config.out.clone();
    std::fs::create_dir_all(&out)?;
    let started = Instant::now();
    let result = execute(command, config, &out);
    let seconds = started.elapsed().as_secs_f64();
    match result {
        Ok((summary, pass)) => {
            let files = files_in(&out);
            let manifest = json!({
                "command": command.name(),
                "config": config.entries,
                "config_hash": config.hash(),
                "versions": versions(),
                "timings": { "total_seconds": seconds },
                "workers": rayon::current_num_threads(),
                "files": files,
                "summary": summary,
                "pass": pass,
            });
            io::write_json(&out.join(MANIFEST), &manifest)?;
            Ok(RunOutcome { command, out, files, summary, pass })
        }
        Err(e) => {
            write_error(&out, &e, Some(command))?;
            Err(e)
        }
    }
}

pub fn versions() -> Value {
    json!({ "stablelab": env!("CARGO_PKG_VERSION"), "lemma_sweep": SWEEP_VERSION })
}

/// Structured form of an error.
pub fn error_json(e: &Error, command: Option<Command>) -> Value {
    let details = match e {
        Error::Config(list) => json!(list),
        Error::Supercritical { gamma } => json!({ "gamma": gamma }),
        Error::Divergence { history } => json!({ "history": history }),
        _ => Value::Null,
    };
    json!({ "error": e.kind(), "message": e.to_string(), "command": command.map(Command::name), "details": details })
}

pub fn write_error(dir: &Path, e: &Error, command: Option<Command>) -> Result<()> {
    io::write_json(&dir.join(ERROR_FILE), &error_json(e, command))
}

/// Process exit status for an error: 2 for invalid input, 1 for failures during a run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Argument(_) | Error::Supercritical { .. } | Error::UnsupportedDimension(_) => 2,
        _ => 1,
    }
}
