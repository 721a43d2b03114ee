//! Runs every (method, instance, seed) triple of an experiment and writes
//! per-run files plus merged tables.
//!
//! Layout under the output directory:
//!
//! ```text
//! runs/<method>__<instance>__<seed>.rounds.csv
//! runs/<method>__<instance>__<seed>.proposals.csv
//! runs/<method>__<instance>__<seed>.summary.json
//! rounds.csv      all round rows, triple order
//! summary.csv     one row per successful triple
//! summary.json    the same records as a JSON array
//! errors.csv      one row per failed triple
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PopulationSource, ResolvedMethod};
use super::fmt_float;
use crate::adaptive::sample_initial_population;
use crate::engine::{Engine, RoundRecord};
use crate::error::{Error, Result};
use crate::metrics::{
    auc_max_reward, enumerate_optima, fraction_of_optima, high_reward_clusters, max_reward_curve, mean_pairwise_hamming,
    mean_positional_entropy, Optima, OPTIMA_EDIT_DISTANCE, OPTIMA_REWARD,
};
use crate::oracles::{Oracle, OracleInstance};
use crate::rng;

pub const ROUND_COLUMNS: [&str; 19] = [
    "run_id",
    "method",
    "instance",
    "seed",
    "round",
    "row",
    "member",
    "class",
    "params",
    "probability",
    "draws",
    "attributed",
    "best",
    "reward",
    "score",
    "batch_max",
    "cumulative_max",
    "mean_hamming",
    "mean_entropy",
];

pub const SUMMARY_COLUMNS: [&str; 17] = [
    "method",
    "method_kind",
    "instance",
    "problem_kind",
    "seed",
    "run_seed",
    "rounds",
    "batch_size",
    "evaluations",
    "final_max",
    "auc",
    "f_max",
    "mean_hamming",
    "mean_entropy",
    "high_reward_clusters",
    "fraction_of_optima",
    "fallbacks",
];

/// Reward fraction and normalized distance cut for high-reward clusters.
pub const CLUSTER_FRACTION: f64 = 0.8;
pub const CLUSTER_DISTANCE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub method_kind: String,
    pub instance: String,
    pub problem_kind: String,
    pub seed: u64,
    pub run_seed: u64,
    pub rounds: usize,
    pub batch_size: usize,
    pub evaluations: usize,
    pub final_max: f64,
    pub auc: f64,
    pub f_max: f64,
    pub mean_hamming: Option<f64>,
    pub mean_entropy: Option<f64>,
    pub high_reward_clusters: Option<usize>,
    pub fraction_of_optima: Option<f64>,
    pub fallbacks: usize,
    /// Class histogram of the final population.
    pub final_population: BTreeMap<String, usize>,
    /// Max-reward curve, one value per round.
    pub curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub method: String,
    pub instance: String,
    pub seed: u64,
    pub error: String,
}

/// Everything one triple produced.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub summary: RunSummary,
    pub records: Vec<RoundRecord>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn mean_finite(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.filter(|x| x.is_finite()).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Seed of the run for `(method, instance, seed)`.
pub fn run_seed(method: &str, instance: &str, seed: u64) -> u64 {
    rng::child_seed(seed, &format!("{method}/{instance}"))
}

/// Optima of an enumerable instance, when it has them.
pub fn instance_optima(inst: &OracleInstance) -> Option<Optima> {
    match &inst.oracle {
        Oracle::Lookup(t) => Some(enumerate_optima(t, OPTIMA_REWARD, OPTIMA_EDIT_DISTANCE)),
        _ => None,
    }
}

/// Runs one triple in memory.
pub fn run_triple(method: &ResolvedMethod, inst: &OracleInstance, seed: u64, optima: Option<&Optima>) -> Result<RunResult> {
    let rs = run_seed(&method.name, &inst.id, seed);
    let mut config = method.engine.clone();
    config.seed = rs;
    let population = match &method.population {
        PopulationSource::Fixed(specs) => specs.clone(),
        PopulationSource::Sampled { spec, priors } => {
            sample_initial_population(priors, spec, config.population_size, &mut rng::stream(rs, "population"))?
        }
    };
    let mut engine = Engine::new(inst, &population, config)?;
    let records = engine.run()?;

    let curve = max_reward_curve(&records.iter().map(|r| r.batch_max).collect::<Vec<_>>());
    let proposed: Vec<_> = records.iter().flat_map(|r| r.batch.iter().cloned()).collect();
    let values: Vec<f64> = records.iter().flat_map(|r| r.values.iter().copied()).collect();
    let clusters = inst
        .known_max()
        .map(|m| high_reward_clusters(&proposed, &values, CLUSTER_FRACTION, m, CLUSTER_DISTANCE));
    let mut final_population = BTreeMap::new();
    for s in engine.population() {
        *final_population.entry(s.class.as_str().to_string()).or_insert(0) += 1;
    }
    let summary = RunSummary {
        method: method.name.clone(),
        method_kind: method.kind.as_str().to_string(),
        instance: inst.id.clone(),
        problem_kind: inst.kind().as_str().to_string(),
        seed,
        run_seed: rs,
        rounds: records.len(),
        batch_size: inst.batch_size,
        evaluations: proposed.len(),
        final_max: *curve.last().unwrap_or(&f64::NAN),
        auc: auc_max_reward(&curve),
        f_max: engine.f_max().unwrap_or(f64::NAN),
        mean_hamming: mean_finite(records.iter().map(|r| mean_pairwise_hamming(&r.batch))),
        mean_entropy: mean_finite(records.iter().map(|r| mean_positional_entropy(&r.batch))),
        high_reward_clusters: clusters,
        fraction_of_optima: optima.and_then(|o| finite(fraction_of_optima(o, &proposed))),
        fallbacks: records.iter().map(|r| r.fallbacks).sum(),
        final_population,
        curve,
    };
    Ok(RunResult { summary, records })
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

/// Round rows of one run: a `round` row followed by one `member` row per
/// population member.
pub fn round_rows(summary: &RunSummary, records: &[RoundRecord]) -> Vec<Vec<String>> {
    let run_id = format!("{}/{}/{}", summary.method, summary.instance, summary.seed);
    let head = |round: usize| {
        vec![
            run_id.clone(),
            summary.method.clone(),
            summary.instance.clone(),
            summary.seed.to_string(),
            round.to_string(),
        ]
    };
    let mut rows = Vec::new();
    for (r, cum) in records.iter().zip(&summary.curve) {
        let mut row = head(r.round);
        row.push("round".into());
        row.extend(std::iter::repeat_n(String::new(), 9));
        row.push(fmt_float(r.batch_max));
        row.push(fmt_float(*cum));
        row.push(fmt_float(mean_pairwise_hamming(&r.batch)));
        row.push(fmt_float(mean_positional_entropy(&r.batch)));
        rows.push(row);
        for a in &r.algorithms {
            let mut row = head(r.round);
            row.push("member".into());
            row.push(a.member.id.to_string());
            row.push(a.member.class.as_str().into());
            row.push(a.member.params.clone());
            row.push(fmt_float(a.probability));
            row.push(a.draws.to_string());
            row.push(a.attributed.to_string());
            row.push(opt(a.best));
            row.push(fmt_float(a.reward));
            row.push(fmt_float(a.score));
            row.extend(std::iter::repeat_n(String::new(), 4));
            rows.push(row);
        }
    }
    rows
}

pub fn summary_row(s: &RunSummary) -> Vec<String> {
    vec![
        s.method.clone(),
        s.method_kind.clone(),
        s.instance.clone(),
        s.problem_kind.clone(),
        s.seed.to_string(),
        s.run_seed.to_string(),
        s.rounds.to_string(),
        s.batch_size.to_string(),
        s.evaluations.to_string(),
        fmt_float(s.final_max),
        fmt_float(s.auc),
        fmt_float(s.f_max),
        opt(s.mean_hamming),
        opt(s.mean_entropy),
        s.high_reward_clusters.map(|c| c.to_string()).unwrap_or_default(),
        opt(s.fraction_of_optima),
        s.fallbacks.to_string(),
    ]
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_or_csv(path, e))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn io_or_csv(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked io"),
        }
    } else {
        Error::Csv(e)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_stem(method: &str, instance: &str, seed: u64) -> String {
    format!("{method}__{instance}__{seed}")
}

fn proposal_rows(inst: &OracleInstance, records: &[RoundRecord]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in records {
        for ((x, y), who) in r.batch.iter().zip(&r.values).zip(&r.proposers) {
            let who: Vec<String> = who.iter().map(|id| id.to_string()).collect();
            rows.push(vec![r.round.to_string(), inst.vocabulary.render(x), fmt_float(*y), who.join(";")]);
        }
    }
    rows
}

/// Outcome of a whole experiment.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub summaries: Vec<RunSummary>,
    pub errors: Vec<RunError>,
}

/// Runs every triple in parallel and writes all outputs. Failed triples are
/// recorded in `errors.csv` without aborting the others.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path, output_override: Option<&Path>) -> Result<ExperimentOutcome> {
    let methods = cfg.resolve_methods()?;
    let problems = cfg.load_problems(base)?;
    let seeds = cfg.seed_list();
    let out = output_override.map(Path::to_path_buf).unwrap_or_else(|| base.join(&cfg.output_dir));
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    let optima: Vec<Option<Optima>> = problems.iter().map(instance_optima).collect();

    let mut triples = Vec::new();
    for m in &methods {
        for (pi, _) in problems.iter().enumerate() {
            for &s in &seeds {
                triples.push((m, pi, s));
            }
        }
    }
    let results: Vec<Result<(RunSummary, Vec<Vec<String>>)>> = triples
        .par_iter()
        .map(|&(m, pi, seed)| {
            let inst = &problems[pi];
            let r = run_triple(m, inst, seed, optima[pi].as_ref())?;
            let stem = run_stem(&m.name, &inst.id, seed);
            let rows = round_rows(&r.summary, &r.records);
            write_csv(&runs_dir.join(format!("{stem}.rounds.csv")), &ROUND_COLUMNS, rows.clone())?;
            write_csv(
                &runs_dir.join(format!("{stem}.proposals.csv")),
                &["round", "sequence", "value", "proposers"],
                proposal_rows(inst, &r.records),
            )?;
            write_json(&runs_dir.join(format!("{stem}.summary.json")), &r.summary)?;
            Ok((r.summary, rows))
        })
        .collect();

    let mut outcome = ExperimentOutcome {
        output_dir: out.clone(),
        ..Default::default()
    };
    let mut all_rows = Vec::new();
    for ((m, pi, seed), r) in triples.iter().zip(results) {
        match r {
            Ok((summary, rows)) => {
                all_rows.extend(rows);
                outcome.summaries.push(summary);
            }
            Err(e) => outcome.errors.push(RunError {
                method: m.name.clone(),
                instance: problems[*pi].id.clone(),
                seed: *seed,
                error: e.to_string(),
            }),
        }
    }
    write_csv(&out.join("rounds.csv"), &ROUND_COLUMNS, all_rows)?;
    write_csv(&out.join("summary.csv"), &SUMMARY_COLUMNS, outcome.summaries.iter().map(summary_row))?;
    write_json(&out.join("summary.json"), &outcome.summaries)?;
    write_csv(
        &out.join("errors.csv"),
        &["method", "instance", "seed", "error"],
        outcome
            .errors
            .iter()
            .map(|e| vec![e.method.clone(), e.instance.clone(), e.seed.to_string(), e.error.clone()]),
    )?;
    Ok(outcome)
}
