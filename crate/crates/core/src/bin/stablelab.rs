use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stablelab::cli::{self, Command};
use stablelab::config::{self, ExperimentConfig};
use stablelab::error::{Error, Result};

#[derive(Parser)]
#[command(name = "stablelab", version, about = "Euler schemes for alpha-stable SDEs with singular drift")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Sample the scheme marginal at the evaluation time
    Simulate(Common),
    /// Kernel density estimate of a marginal sample
    Density(Common),
    /// Solve the limit and scheme densities deterministically
    Duhamel(Common),
    /// Run a step-size ladder and fit the convergence rate
    Converge(Common),
    /// Run the lemma suite and write one report per check
    VerifyLemmas(Common),
    /// Test the increment sampler against the stable law
    SamplerTest(Common),
    /// Print the config file schema
    Schema,
}

#[derive(Args)]
struct Common {
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, env = "STABLELAB_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "STABLELAB_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Drift kind with optional inline parameters, e.g. radial:beta=0.3,c=1,R=1
    #[arg(long)]
    drift: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    /// Horizon
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    time: Option<f64>,
    #[arg(long)]
    ladder: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    suite: Option<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut o = Vec::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| Error::Argument(format!("--set expects KEY=VALUE, got '{s}'")))?;
            o.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        put("seed", self.seed.map(|v| v.to_string()));
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("drift", self.drift.clone());
        put("p", self.p.clone());
        put("q", self.q.clone());
        put("horizon", self.horizon.map(|v| v.to_string()));
        put("steps", self.steps.map(|v| v.to_string()));
        put("paths", self.paths.map(|v| v.to_string()));
        put("time", self.time.map(|v| v.to_string()));
        put("ladder", self.ladder.clone());
        put("variant", self.variant.clone());
        put("reference", self.reference.clone());
        put("suite", self.suite.clone());
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("workers", self.workers.map(|v| v.to_string()));
        Ok(o)
    }

    fn load(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| Error::Argument(format!("cannot read config {}: {e}", path.display())))?,
            None => String::new(),
        };
        ExperimentConfig::from_text(&text, &self.overrides()?)
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let (command, common) = match args.command {
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::Density(c) => (Command::Density, c),
        Sub::Duhamel(c) => (Command::Duhamel, c),
        Sub::Converge(c) => (Command::Converge, c),
        Sub::VerifyLemmas(c) => (Command::VerifyLemmas, c),
        Sub::SamplerTest(c) => (Command::SamplerTest, c),
        Sub::Schema => {
            let _ = write!(std::io::stdout(), "{}", config::schema());
            return ExitCode::SUCCESS;
        }
    };
    let config = match common.load() {
        Ok(c) => c,
        Err(e) => return fail(&e, command),
    };
    if let Some(w) = config.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            return fail(&Error::Argument(format!("cannot size the worker pool: {e}")), command);
        }
    }
    match cli::run(command, &config) {
        Ok(outcome) => {
            // a closed pipe on stdout is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => fail(&e, command),
    }
}

fn fail(e: &Error, command: Command) -> ExitCode {
    let _ = writeln!(std::io::stderr(), "{}", cli::error_json(e, Some(command)));
    ExitCode::from(cli::exit_code(e) as u8)
}
