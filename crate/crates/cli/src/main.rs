use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use multiphase::mc_engine::{run_experiment, ExperimentConfig};
use multiphase::model::registry::MODEL_IDS;
use multiphase::par::Workers;
use multiphase::preprocess::catalog;
use multiphase::report;
use multiphase::scenarios::{self, ScenarioConfig, ScenarioReport, SCENARIO_IDS};
use multiphase::Error;

const PASS: u8 = 0;
const CLAIM_FAILURE: u8 = 1;
const USAGE: u8 = 2;
const IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "mpl", version, about = "Multiphase inference laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed; every random draw derives from it. Defaults to 1, or
    /// to the experiment file's own seed.
    #[arg(long, global = true, env = "MPL_SEED")]
    seed: Option<u64>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Worker threads (1 forces the sequential path). Never affects output.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Monte Carlo replications override.
    #[arg(long, global = true)]
    reps: Option<usize>,

    /// Sample size override, for scenarios that have one.
    #[arg(long, global = true)]
    size: Option<usize>,

    /// Record wall-clock times in the report.
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List registered scenarios, models and preprocessors.
    List,
    /// Run one scenario.
    Run { scenario: String },
    /// Run a Monte Carlo risk experiment from a JSON config.
    Experiment { config: PathBuf },
    /// Run every scenario; exits 0 only if all claims pass.
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Lookup { .. } => USAGE,
            _ => CLAIM_FAILURE,
        };
        Failure::new(code, e.to_string())
    }
}

impl Cli {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    fn workers(&self) -> Workers {
        Workers(self.workers.map(|n| n.max(1)))
    }

    fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig { seed: self.seed(), reps: self.reps, size: self.size, workers: self.workers(), timings: self.timings }
    }

    fn emit(&self, text: &str) -> Result<(), Failure> {
        match &self.out {
            Some(path) => std::fs::write(path, text).map_err(|e| Failure::new(IO, format!("writing {}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn elapsed(&self, start: Instant) -> Option<u64> {
        self.timings.then(|| start.elapsed().as_millis() as u64)
    }

    fn scenarios(&self, command: &str, ids: &[&str]) -> Result<u8, Failure> {
        let start = Instant::now();
        let cfg = self.scenario_config();
        let reports: Vec<ScenarioReport> = ids.iter().map(|id| scenarios::run_scenario(id, &cfg)).collect::<Result<_, _>>()?;
        let text = match self.format {
            Format::Json => report::to_json(&report::envelope(command, self.seed(), &cfg, &reports, self.elapsed(start))?),
            Format::Csv => scenarios::to_csv(&reports),
        };
        self.emit(&text)?;
        for r in reports.iter().filter(|r| !r.passed) {
            let failed: Vec<&str> = r.claims.iter().filter(|c| !c.passed).map(|c| c.description.as_str()).collect();
            eprintln!("FAIL {}: {}", r.id, failed.join("; "));
        }
        Ok(if reports.iter().all(|r| r.passed) { PASS } else { CLAIM_FAILURE })
    }

    fn experiment(&self, path: &PathBuf) -> Result<u8, Failure> {
        let start = Instant::now();
        let text = std::fs::read_to_string(path).map_err(|e| Failure::new(IO, format!("reading {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::from_json(&text)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(r) = self.reps {
            cfg.replications = r;
        }
        cfg.workers = self.workers().0;
        let risk = run_experiment(&cfg)?;
        for w in &risk.warnings {
            eprintln!("warning: {w}");
        }
        let text = match self.format {
            Format::Json => report::to_json(&report::envelope("experiment", cfg.seed, &cfg, &[&risk], self.elapsed(start))?),
            Format::Csv => risk.to_csv(),
        };
        self.emit(&text)?;
        Ok(PASS)
    }

    fn list(&self) -> Result<u8, Failure> {
        let mut text = String::from("scenarios:\n");
        for id in SCENARIO_IDS {
            text.push_str(&format!("  {id}\n"));
        }
        text.push_str("models:\n");
        for id in MODEL_IDS {
            text.push_str(&format!("  {id}\n"));
        }
        text.push_str("preprocessors:\n");
        for p in catalog::all(4) {
            text.push_str(&format!("  {}\n", p.id));
        }
        self.emit(&text)?;
        Ok(PASS)
    }

    fn execute(&self) -> Result<u8, Failure> {
        match &self.command {
            Command::List => self.list(),
            Command::Run { scenario } => self.scenarios("run", &[scenario.as_str()]),
            Command::Experiment { config } => self.experiment(config),
            Command::Verify => self.scenarios("verify", SCENARIO_IDS),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.execute() {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
