//! Replicated filter runs, their CSV rows and the aggregate summary.
//!
//! Replication `r` uses seed `derive_seed(master, r)`: lane 0 of that seed
//! simulates data (when `Y` is not fixed), lane 1 drives the filter. The
//! aggregate is computed from the rows alone, so it can be recomputed from
//! the CSV.

use std::io::{Read, Write};
use std::time::Instant;

use serde::Serialize;
use smcvar::benchmarks::{simulate_bearings, simulate_changepoint, BearingsModel, ChangePointModel};
use smcvar::oracle::changepoint_exact_mean;
use smcvar::rng::{derive_seed, substream};
use smcvar::stats::{mean, sample_variance};
use smcvar::{run_filter, FilterConfig, FilterOutput, SmcError, StateSpaceModel};

use crate::config::{ExperimentConfig, ModelChoice, Truth};

pub const SCHEMA_VERSION: u32 = 1;

/// One replication's outcome, exactly as written to the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub rep: usize,
    pub seed: u64,
    pub m: usize,
    pub horizon: usize,
    pub scheme: String,
    pub policy_c: f64,
    pub estimate: Vec<Option<f64>>,
    pub se_ancestral: Vec<Option<f64>>,
    pub se_split: Vec<Option<f64>>,
    pub se_gb: Vec<Option<f64>>,
    pub r_resamples: Option<usize>,
    pub tau_list: Vec<usize>,
    pub final_size: Option<usize>,
    pub runtime_ms: Option<u64>,
    pub truth: Vec<Option<f64>>,
    pub status: String,
}

impl Row {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

fn run_model<M: StateSpaceModel>(model: &M, filter: &FilterConfig, seed: u64) -> Result<FilterOutput, SmcError> {
    run_filter(model, filter, substream(seed, 1))
}

/// Runs replication `rep`.
pub fn run_replication(config: &ExperimentConfig, rep: usize) -> Row {
    run_replication_with_seed(config, rep, derive_seed(config.seed, rep as u64))
}

/// Runs one replication from an explicit per-replication seed, as recorded in the CSV.
pub fn run_replication_with_seed(config: &ExperimentConfig, rep: usize, seed: u64) -> Row {
    let dim = config.model.components();
    let start = Instant::now();
    let observations = |simulate: &dyn Fn() -> Result<Vec<f64>, SmcError>| -> Result<Vec<f64>, SmcError> {
        match &config.data {
            Some(y) => Ok(y[..config.horizon].to_vec()),
            None => simulate(),
        }
    };
    let result: Result<(FilterOutput, Vec<Option<f64>>), SmcError> = (|| match &config.model {
        ModelChoice::ChangePoint { rho, xi, proposal } => {
            let y = observations(&|| Ok(simulate_changepoint(config.horizon, *rho, *xi, substream(seed, 0))?.y))?;
            let oracle = match config.truth {
                Truth::Auto => changepoint_exact_mean(&y, *rho, *xi)?.last().copied(),
                _ => None,
            };
            let model = ChangePointModel::new(*rho, *xi, y)?.with_proposal(*proposal);
            Ok((run_model(&model, &config.filter, seed)?, vec![oracle]))
        }
        ModelChoice::Bearings { initial } => {
            let y = observations(&|| Ok(simulate_bearings(config.horizon, substream(seed, 0))?.y))?;
            let model = BearingsModel::new(y)?.with_initial(*initial);
            Ok((run_model(&model, &config.filter, seed)?, vec![None; 2]))
        }
        ModelChoice::Discrete(hmm) => {
            let oracle = match config.truth {
                Truth::Auto => Some(hmm.enumerate()?.psi_t),
                _ => None,
            };
            Ok((run_model(hmm, &config.filter, seed)?, vec![oracle]))
        }
    })();
    let runtime_ms = config.record_timing.then(|| start.elapsed().as_millis() as u64);
    let mut row = Row {
        rep,
        seed,
        m: config.filter.particles,
        horizon: config.horizon,
        scheme: config.filter.scheme.label().to_string(),
        policy_c: config.filter.policy.as_threshold(),
        estimate: vec![None; dim],
        se_ancestral: vec![None; dim],
        se_split: vec![None; dim],
        se_gb: vec![None; dim],
        r_resamples: None,
        tau_list: Vec::new(),
        final_size: None,
        runtime_ms,
        truth: vec![None; dim],
        status: "ok".into(),
    };
    match result {
        Ok((out, oracle)) => {
            for (c, est) in out.components.iter().enumerate() {
                row.estimate[c] = Some(est.estimate);
                row.se_ancestral[c] = est.se_ancestral(out.particles);
                row.se_split[c] = est.se_split(out.particles);
                row.se_gb[c] = est.se_gb();
            }
            row.r_resamples = Some(out.diagnostics.resample_times.len());
            row.tau_list = out.diagnostics.resample_times;
            row.final_size = Some(out.final_size);
            row.truth = match &config.truth {
                Truth::Fixed(v) => v.iter().copied().map(Some).collect(),
                _ => oracle,
            };
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

/// Runs every replication, in parallel when `threads` allows, ordered by `rep`.
pub fn run_replications(config: &ExperimentConfig) -> Result<Vec<Row>, String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| e.to_string())?;
    Ok(pool.install(|| smcvar::replicate::replicate(config.replications, |rep| run_replication(config, rep))))
}

fn header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["rep", "seed", "m", "T", "scheme", "policy_c", "estimate"].map(String::from).into();
    for c in 2..=dim {
        h.push(format!("estimate{c}"));
    }
    for name in ["se_ancestral", "se_split", "se_gb"] {
        h.push(name.into());
    }
    for c in 2..=dim {
        for name in ["se_ancestral", "se_split", "se_gb"] {
            h.push(format!("{name}{c}"));
        }
    }
    for name in ["r_resamples", "tau_list", "M_T", "runtime_ms", "truth"] {
        h.push(name.into());
    }
    for c in 2..=dim {
        h.push(format!("truth{c}"));
    }
    h.push("status".into());
    h
}

fn cell<T: std::fmt::Debug>(v: Option<T>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

fn record(row: &Row) -> Vec<String> {
    let dim = row.estimate.len();
    let mut r = vec![
        row.rep.to_string(),
        row.seed.to_string(),
        row.m.to_string(),
        row.horizon.to_string(),
        row.scheme.clone(),
        float(row.policy_c),
    ];
    r.extend(row.estimate.iter().map(|v| cell(*v)));
    r.extend([cell(row.se_ancestral[0]), cell(row.se_split[0]), cell(row.se_gb[0])]);
    for c in 1..dim {
        r.extend([cell(row.se_ancestral[c]), cell(row.se_split[c]), cell(row.se_gb[c])]);
    }
    r.push(row.r_resamples.map(|n| n.to_string()).unwrap_or_default());
    r.push(row.tau_list.iter().map(usize::to_string).collect::<Vec<_>>().join(";"));
    r.push(row.final_size.map(|n| n.to_string()).unwrap_or_default());
    r.push(row.runtime_ms.map(|n| n.to_string()).unwrap_or_default());
    r.extend(row.truth.iter().map(|v| cell(*v)));
    r.push(row.status.clone());
    r
}

pub fn write_rows<W: Write>(rows: &[Row], writer: W) -> Result<(), String> {
    let dim = rows.first().map_or(1, |r| r.estimate.len());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(dim)).map_err(|e| e.to_string())?;
    for row in rows {
        w.write_record(record(row)).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| format!("bad cell `{s}`"))
}

fn parse_float(s: &str) -> Result<f64, String> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| format!("bad number `{s}`")),
    }
}

/// Reads rows back from a CSV written by [`write_rows`].
pub fn read_rows<R: Read>(reader: R) -> Result<Vec<Row>, String> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let dim = headers.iter().filter(|h| h.starts_with("estimate")).count();
    if headers.iter().collect::<Vec<_>>() != header(dim) {
        return Err("unexpected CSV header".into());
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let mut i = 6;
        let mut take = |n: usize| -> Result<Vec<Option<f64>>, String> {
            let v = (i..i + n).map(|j| parse_opt::<f64>(f(j))).collect();
            i += n;
            v
        };
        let estimate = take(dim)?;
        let mut se = [Vec::with_capacity(dim), Vec::with_capacity(dim), Vec::with_capacity(dim)];
        for _ in 0..dim {
            for (k, v) in take(3)?.into_iter().enumerate() {
                se[k].push(v);
            }
        }
        let base = 6 + 4 * dim;
        let tau = f(base + 1);
        let truth = (0..dim).map(|c| parse_opt::<f64>(f(base + 4 + c))).collect::<Result<_, _>>()?;
        let [se_ancestral, se_split, se_gb] = se;
        rows.push(Row {
            rep: parse_opt(f(0))?.ok_or("missing rep")?,
            seed: parse_opt(f(1))?.ok_or("missing seed")?,
            m: parse_opt(f(2))?.ok_or("missing m")?,
            horizon: parse_opt(f(3))?.ok_or("missing T")?,
            scheme: f(4).to_string(),
            policy_c: parse_float(f(5))?,
            estimate,
            se_ancestral,
            se_split,
            se_gb,
            r_resamples: parse_opt(f(base))?,
            tau_list: if tau.is_empty() {
                Vec::new()
            } else {
                tau.split(';').map(|t| t.parse().map_err(|_| format!("bad tau `{t}`"))).collect::<Result<_, _>>()?
            },
            final_size: parse_opt(f(base + 2))?,
            runtime_ms: parse_opt(f(base + 3))?,
            truth,
            status: f(base + 4 + dim).to_string(),
        });
    }
    Ok(rows)
}

/// Per-component summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSummary {
    pub component: usize,
    pub mean_estimate: Option<f64>,
    /// Sample variance (`n − 1`) of the estimates across replications.
    pub variance_estimate: Option<f64>,
    pub mean_se_ancestral: Option<f64>,
    pub mean_se_split: Option<f64>,
    pub mean_se_gb: Option<f64>,
    pub mean_truth: Option<f64>,
    /// Fraction of `|estimate − truth| ≤ z·se` with the ancestral se.
    pub cover1se: Option<f64>,
    pub cover2se: Option<f64>,
    pub cover1se_split: Option<f64>,
    pub cover2se_split: Option<f64>,
    pub cover1se_gb: Option<f64>,
    pub cover2se_gb: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub schema_version: u32,
    pub replications: usize,
    pub completed: usize,
    /// Some replication failed; see `failed_reps` and the CSV `status` column.
    pub incomplete: bool,
    pub failed_reps: Vec<usize>,
    pub mean_resamples: Option<f64>,
    pub mean_final_size: Option<f64>,
    pub components: Vec<ComponentSummary>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| mean(&v))
}

fn coverage(rows: &[&Row], c: usize, se: impl Fn(&Row) -> Option<f64>, z: f64) -> Option<f64> {
    let hits: Vec<bool> = rows
        .iter()
        .filter_map(|r| {
            let (est, truth, s) = (r.estimate[c]?, r.truth[c]?, se(r)?);
            Some((est - truth).abs() <= z * s)
        })
        .collect();
    (!hits.is_empty()).then(|| hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64)
}

/// Summary statistics of a set of rows.
pub fn aggregate(rows: &[Row]) -> Aggregate {
    let dim = rows.first().map_or(1, |r| r.estimate.len());
    let ok: Vec<&Row> = rows.iter().filter(|r| r.ok()).collect();
    let components = (0..dim)
        .map(|c| {
            let estimates: Vec<f64> = ok.iter().filter_map(|r| r.estimate[c]).collect();
            ComponentSummary {
                component: c + 1,
                mean_estimate: (!estimates.is_empty()).then(|| mean(&estimates)),
                variance_estimate: (estimates.len() >= 2).then(|| sample_variance(&estimates)),
                mean_se_ancestral: mean_of(ok.iter().map(|r| r.se_ancestral[c])),
                mean_se_split: mean_of(ok.iter().map(|r| r.se_split[c])),
                mean_se_gb: mean_of(ok.iter().map(|r| r.se_gb[c])),
                mean_truth: mean_of(ok.iter().map(|r| r.truth[c])),
                cover1se: coverage(&ok, c, |r| r.se_ancestral[c], 1.0),
                cover2se: coverage(&ok, c, |r| r.se_ancestral[c], 2.0),
                cover1se_split: coverage(&ok, c, |r| r.se_split[c], 1.0),
                cover2se_split: coverage(&ok, c, |r| r.se_split[c], 2.0),
                cover1se_gb: coverage(&ok, c, |r| r.se_gb[c], 1.0),
                cover2se_gb: coverage(&ok, c, |r| r.se_gb[c], 2.0),
            }
        })
        .collect();
    let failed_reps: Vec<usize> = rows.iter().filter(|r| !r.ok()).map(|r| r.rep).collect();
    Aggregate {
        schema_version: SCHEMA_VERSION,
        replications: rows.len(),
        completed: ok.len(),
        incomplete: !failed_reps.is_empty(),
        failed_reps,
        mean_resamples: mean_of(ok.iter().map(|r| r.r_resamples.map(|n| n as f64))),
        mean_final_size: mean_of(ok.iter().map(|r| r.final_size.map(|n| n as f64))),
        components,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Settings;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_settings(Settings::parse(text).unwrap()).unwrap()
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let c = config("model = bearings\nT = 4\nm = 50\nsplit = 2\ngb = true\nreplications = 3\ntruth = 0.1,0.2\npolicy = 1");
        let rows: Vec<Row> = (0..3).map(|r| run_replication(&c, r)).collect();
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let back = read_rows(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        assert_eq!(aggregate(&back), aggregate(&rows));
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            header(1).join(","),
            "rep,seed,m,T,scheme,policy_c,estimate,se_ancestral,se_split,se_gb,r_resamples,tau_list,M_T,runtime_ms,truth,status"
        );
        assert!(header(2).join(",").starts_with("rep,seed,m,T,scheme,policy_c,estimate,estimate2,se_ancestral"));
    }

    #[test]
    fn oracle_truth_is_attached() {
        let c = config("model = oracle-discrete\nT = 3\nm = 100");
        let row = run_replication(&c, 0);
        let truth = smcvar::oracle::two_state_example(3).enumerate().unwrap().psi_t;
        assert_eq!(row.truth, vec![Some(truth)]);
        assert_eq!(row.tau_list, vec![1, 2]);
        assert!(row.runtime_ms.is_none());
    }

    #[test]
    fn aggregate_counts_failures_and_coverage() {
        let c = config("model = oracle-discrete\nT = 2\nm = 200\nreplications = 4");
        let mut rows: Vec<Row> = (0..4).map(|r| run_replication(&c, r)).collect();
        rows[2].status = "error: injected".into();
        let agg = aggregate(&rows);
        assert!(agg.incomplete);
        assert_eq!((agg.completed, agg.failed_reps.clone()), (3, vec![2]));
        let cover = agg.components[0].cover2se.unwrap();
        assert!((0.0..=1.0).contains(&cover));
        assert!(agg.components[0].cover1se_gb.is_none());
    }
}
