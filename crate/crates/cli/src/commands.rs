use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use smcvar::acceptance::{run_suite, Suite, DEFAULT_SEED};
use smcvar::benchmarks::{read_series, simulate_bearings, simulate_changepoint, write_series, Series};
use smcvar::oracle::{changepoint_exact_mean, two_state_example, DiscreteHmm, DiscreteHmmSpec};

use crate::config::{ExperimentConfig, Settings};
use crate::experiment::{aggregate, run_replications, write_rows};

/// Exit status when the arguments or configuration are invalid.
pub const EXIT_USAGE: i32 = 2;
/// Exit status when some replications or acceptance checks failed.
pub const EXIT_FAILED: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "smcvar", version, about = "Particle filters with ancestral-origin standard errors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run replicated filters and write per-replication CSV plus aggregate JSON.
    Run(Box<RunArgs>),
    /// Run acceptance suites and report pass/fail per check.
    Accept(AcceptArgs),
    /// Simulate a benchmark data set as `t,x…,y` CSV.
    GenData(GenDataArgs),
    /// Compute exact reference values.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "model-file")]
    pub model_file: Option<String>,
    /// Fixed observations (series CSV).
    #[arg(long)]
    pub data: Option<String>,
    #[arg(short = 'm', long)]
    pub particles: Option<String>,
    #[arg(short = 'T', long)]
    pub horizon: Option<String>,
    #[arg(long)]
    pub scheme: Option<String>,
    /// `always`, `never` or a cv² threshold.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub gb: bool,
    #[arg(short = 'R', long)]
    pub replications: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub truth: Option<String>,
    #[arg(long)]
    pub csv: Option<String>,
    #[arg(long)]
    pub json: Option<String>,
    /// Worker threads; defaults to $SMCVAR_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<String>,
    /// Fill the runtime_ms column (makes output non-reproducible).
    #[arg(long)]
    pub record_timing: bool,
    /// Any other setting, e.g. `--set rho=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Replay a single replication from the seed recorded in a CSV row.
    #[arg(long, value_name = "SEED")]
    pub replay: Option<u64>,
}

impl RunArgs {
    pub fn settings(&self) -> Result<Settings, String> {
        let mut s = match &self.config {
            Some(path) => Settings::from_file(path).map_err(|e| e.to_string())?,
            None => Settings::default(),
        };
        for pair in &self.set {
            s.set_pair(pair).map_err(|e| e.to_string())?;
        }
        let flags = [
            ("model", &self.model),
            ("model_file", &self.model_file),
            ("data", &self.data),
            ("m", &self.particles),
            ("T", &self.horizon),
            ("scheme", &self.scheme),
            ("policy", &self.policy),
            ("split", &self.split),
            ("replications", &self.replications),
            ("seed", &self.seed),
            ("truth", &self.truth),
            ("csv", &self.csv),
            ("json", &self.json),
            ("threads", &self.threads),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set(key, v.clone()).map_err(|e| e.to_string())?;
            }
        }
        if self.gb {
            s.set("gb", "true").map_err(|e| e.to_string())?;
        }
        if self.record_timing {
            s.set("record_timing", "true").map_err(|e| e.to_string())?;
        }
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct AcceptArgs {
    /// Suite name, or `all`.
    #[arg(value_parser = parse_suites)]
    pub suite: SuiteSelection,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Print the reports as JSON instead of text lines.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone)]
pub struct SuiteSelection(pub Vec<Suite>);

fn parse_suites(s: &str) -> Result<SuiteSelection, String> {
    if s == "all" {
        return Ok(SuiteSelection(Suite::ALL.to_vec()));
    }
    s.parse::<Suite>().map(|suite| SuiteSelection(vec![suite])).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Benchmark {
    Changepoint,
    Bearings,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    pub model: Benchmark,
    #[arg(short = 'T', long)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub xi: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(subcommand)]
    pub target: OracleTarget,
}

#[derive(Debug, Subcommand)]
pub enum OracleTarget {
    /// Exact posterior means `E(X_t | Y_1..t)` for the change-point model.
    Changepoint {
        /// Series CSV whose `y` column is used.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        xi: f64,
        /// Print every stage, not only the last.
        #[arg(long)]
        all: bool,
    },
    /// Exact posterior mean, normalizing constants and asymptotic variances of a discrete model.
    Discrete {
        /// JSON table file; the built-in two-state chain when omitted.
        #[arg(long = "model-file")]
        model_file: Option<PathBuf>,
        /// Horizon of the built-in chain.
        #[arg(short = 'T', long, default_value_t = 4)]
        horizon: usize,
        /// cv² threshold whose limiting resampling schedule should be reported.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

/// Error with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.to_string(),
    }
}

fn runtime(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_FAILED,
        message: message.to_string(),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => run(&args),
        Command::Accept(args) => accept(&args),
        Command::GenData(args) => gen_data(&args),
        Command::Oracle(args) => oracle(&args.target),
    }
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let mut config = ExperimentConfig::from_settings(args.settings().map_err(usage)?).map_err(usage)?;
    let mut rows = match args.replay {
        Some(seed) => {
            // derive_seed is not invertible, so the replayed row runs with the recorded seed directly.
            config.replications = 1;
            vec![crate::experiment::run_replication_with_seed(&config, 0, seed)]
        }
        None => run_replications(&config).map_err(runtime)?,
    };
    rows.sort_by_key(|r| r.rep);
    write_rows(&rows, output(config.csv.as_deref())?).map_err(runtime)?;
    let summary = aggregate(&rows);
    if let Some(path) = &config.json {
        let mut json = serde_json::to_value(&summary).map_err(runtime)?;
        json["settings"] = serde_json::to_value(config.settings.study_settings()).map_err(runtime)?;
        let mut w = output(Some(path))?;
        serde_json::to_writer_pretty(&mut w, &json).map_err(runtime)?;
        writeln!(w).map_err(runtime)?;
    }
    if summary.incomplete {
        return Err(runtime(format!(
            "{} of {} replications failed (reps {:?}); see the status column",
            summary.failed_reps.len(),
            summary.replications,
            summary.failed_reps
        )));
    }
    Ok(())
}

fn accept(args: &AcceptArgs) -> Result<(), Failure> {
    let mut reports = Vec::new();
    for &suite in &args.suite.0 {
        let report = run_suite(suite, args.seed);
        if !args.json {
            for check in &report.checks {
                println!("{check}");
            }
            println!("{}", report.summary_line());
        }
        reports.push(report);
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&reports).map_err(runtime)?);
    }
    let failed: Vec<_> = reports.iter().filter(|r| !r.pass()).map(|r| r.suite.name()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!("failed suites: {}", failed.join(", "))))
    }
}

fn gen_data(args: &GenDataArgs) -> Result<(), Failure> {
    if args.horizon == 0 {
        return Err(usage("horizon must be at least 1"));
    }
    let series: Series = match args.model {
        Benchmark::Changepoint => simulate_changepoint(args.horizon, args.rho, args.xi, args.seed).map_err(usage)?.into(),
        Benchmark::Bearings => simulate_bearings(args.horizon, args.seed).map_err(usage)?.into(),
    };
    let mut w = output(args.out.as_deref())?;
    write_series(&series, &mut w).map_err(runtime)?;
    w.flush().map_err(runtime)
}

#[derive(Serialize)]
struct DiscreteReport {
    psi_t: f64,
    eta: Vec<f64>,
    sigma2_bootstrap_every_stage: f64,
    sigma2_residual_every_stage: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<ScheduleReport>,
}

#[derive(Serialize)]
struct ScheduleReport {
    c: f64,
    tau_star: Vec<usize>,
    sigma2_bootstrap: f64,
    sigma2_residual: f64,
}

fn load_discrete(model_file: Option<&Path>, horizon: usize) -> Result<DiscreteHmm, Failure> {
    match model_file {
        Some(path) => {
            let file = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let spec: DiscreteHmmSpec = serde_json::from_reader(file).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            spec.build().map_err(usage)
        }
        None => {
            if !(1..=smcvar::oracle::discrete::MAX_HORIZON).contains(&horizon) {
                return Err(usage(format!(
                    "horizon must be between 1 and {}",
                    smcvar::oracle::discrete::MAX_HORIZON
                )));
            }
            Ok(two_state_example(horizon))
        }
    }
}

fn oracle(target: &OracleTarget) -> Result<(), Failure> {
    match target {
        OracleTarget::Changepoint { data, rho, xi, all } => {
            let file = File::open(data).map_err(|e| usage(format!("{}: {e}", data.display())))?;
            let y = read_series(file).map_err(usage)?.y;
            let means = changepoint_exact_mean(&y, *rho, *xi).map_err(usage)?;
            let mut w = output(None)?;
            writeln!(w, "t,posterior_mean").map_err(runtime)?;
            let first = if *all { 0 } else { means.len().saturating_sub(1) };
            for (t, v) in means.iter().enumerate().skip(first) {
                writeln!(w, "{},{v:?}", t + 1).map_err(runtime)?;
            }
            w.flush().map_err(runtime)
        }
        OracleTarget::Discrete {
            model_file,
            horizon,
            threshold,
        } => {
            let model = load_discrete(model_file.as_deref(), *horizon)?;
            let e = model.enumerate().map_err(runtime)?;
            let every: Vec<usize> = (1..e.horizon).collect();
            let threshold = match threshold {
                Some(c) => {
                    let tau = e.tau_star(*c, 1e-9).map_err(runtime)?;
                    Some(ScheduleReport {
                        c: *c,
                        sigma2_bootstrap: e.sigma2(&tau, false).map_err(runtime)?.total(),
                        sigma2_residual: e.sigma2(&tau, true).map_err(runtime)?.total(),
                        tau_star: tau,
                    })
                }
                None => None,
            };
            let report = DiscreteReport {
                psi_t: e.psi_t,
                eta: e.eta[1..].to_vec(),
                sigma2_bootstrap_every_stage: e.sigma2(&every, false).map_err(runtime)?.total(),
                sigma2_residual_every_stage: e.sigma2(&every, true).map_err(runtime)?.total(),
                threshold,
            };
            println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
            Ok(())
        }
    }
}
