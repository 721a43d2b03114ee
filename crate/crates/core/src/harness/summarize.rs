//! Aggregation of finished experiments: mean-rank tables and max-reward
//! curves with bootstrap confidence bands over seeds.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use super::fmt_float;
use super::runner::RunSummary;
use crate::error::{Error, Result};
use crate::metrics::rank_methods;
use crate::rng;
use crate::stats::{mean, percentile};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const BOOTSTRAP_SEED: u64 = 0x5eed;

/// Reads `summary.json` from each directory.
pub fn load_summaries(dirs: &[PathBuf]) -> Result<Vec<RunSummary>> {
    let mut out: Vec<RunSummary> = Vec::new();
    let mut seen = BTreeSet::new();
    for d in dirs {
        let path = d.join("summary.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let runs: Vec<RunSummary> = serde_json::from_str(&text)?;
        for r in runs {
            if !seen.insert((r.method.clone(), r.instance.clone(), r.seed)) {
                return Err(Error::invalid(format!(
                    "run {}/{}/{} appears more than once",
                    r.method, r.instance, r.seed
                )));
            }
            out.push(r);
        }
    }
    Ok(out)
}

/// One row of the curve table.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub instance: String,
    pub method: String,
    pub round: usize,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    /// Problem kinds, in column order.
    pub kinds: Vec<String>,
    /// Per method: mean rank per problem kind, then over all instances.
    pub ranks: BTreeMap<String, (BTreeMap<String, f64>, f64)>,
    pub curves: Vec<CurvePoint>,
}

/// Checks that every (method, instance) cell has the same seeds.
fn check_grid(runs: &[RunSummary]) -> Result<()> {
    let methods: BTreeSet<&str> = runs.iter().map(|r| r.method.as_str()).collect();
    let instances: BTreeSet<&str> = runs.iter().map(|r| r.instance.as_str()).collect();
    let seeds: BTreeSet<u64> = runs.iter().map(|r| r.seed).collect();
    let have: BTreeSet<(&str, &str, u64)> = runs.iter().map(|r| (r.method.as_str(), r.instance.as_str(), r.seed)).collect();
    let mut missing = Vec::new();
    for m in &methods {
        for i in &instances {
            for s in &seeds {
                if !have.contains(&(*m, *i, *s)) {
                    missing.push(format!("{m}/{i}/{s}"));
                }
            }
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingCells(missing))
    }
}

/// Percentile bootstrap of the mean curve over seeds.
pub fn bootstrap_band(curves: &[Vec<f64>], resamples: usize, seed: u64) -> Vec<(f64, f64)> {
    let n = curves.len();
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    let mut r = rng::from_seed(seed);
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(resamples); len];
    for _ in 0..resamples {
        let picks: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
        for (t, d) in draws.iter_mut().enumerate() {
            d.push(picks.iter().map(|&k| curves[k][t]).sum::<f64>() / n as f64);
        }
    }
    draws.iter().map(|d| (percentile(d, 2.5), percentile(d, 97.5))).collect()
}

pub fn summarize(runs: &[RunSummary]) -> Result<Summary> {
    if runs.is_empty() {
        return Err(Error::invalid("no runs to summarize"));
    }
    check_grid(runs)?;
    let mut auc: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut kind_of: BTreeMap<String, String> = BTreeMap::new();
    let mut curves: BTreeMap<(String, String), Vec<Vec<f64>>> = BTreeMap::new();
    for r in runs {
        auc.entry((r.method.clone(), r.instance.clone())).or_default().push(r.auc);
        kind_of.insert(r.instance.clone(), r.problem_kind.clone());
        curves.entry((r.instance.clone(), r.method.clone())).or_default().push(r.curve.clone());
    }
    let cells: BTreeMap<(String, String), f64> = auc.into_iter().map(|(k, v)| (k, mean(&v))).collect();
    let overall = rank_methods(&cells)?;
    let kinds: Vec<String> = kind_of.values().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let mut per_kind: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for k in &kinds {
        let sub: BTreeMap<(String, String), f64> = cells
            .iter()
            .filter(|((_, i), _)| &kind_of[i] == k)
            .map(|(key, v)| (key.clone(), *v))
            .collect();
        for (m, r) in rank_methods(&sub)? {
            per_kind.entry(m).or_default().insert(k.clone(), r);
        }
    }
    let ranks = overall
        .into_iter()
        .map(|(m, all)| (m.clone(), (per_kind.remove(&m).unwrap_or_default(), all)))
        .collect();

    let mut points = Vec::new();
    for ((instance, method), cs) in &curves {
        // band seed depends on the cell only, not on which other runs exist
        let seed = rng::child_seed(BOOTSTRAP_SEED, &format!("{method}/{instance}"));
        let band = bootstrap_band(cs, BOOTSTRAP_RESAMPLES, seed);
        for (t, (lo, hi)) in band.into_iter().enumerate() {
            let col: Vec<f64> = cs.iter().map(|c| c[t]).collect();
            points.push(CurvePoint {
                instance: instance.clone(),
                method: method.clone(),
                round: t + 1,
                mean: mean(&col),
                lo,
                hi,
                seeds: cs.len(),
            });
        }
    }
    Ok(Summary { kinds, ranks, curves: points })
}

/// Writes `ranks.csv` and `curves.csv` into `out`.
pub fn write_summary(s: &Summary, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("ranks.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["method".to_string()];
    header.extend(s.kinds.iter().cloned());
    header.push("all".into());
    w.write_record(&header)?;
    for (m, (per, all)) in &s.ranks {
        let mut row = vec![m.clone()];
        row.extend(s.kinds.iter().map(|k| per.get(k).map(|v| fmt_float(*v)).unwrap_or_default()));
        row.push(fmt_float(*all));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out.join("curves.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["instance", "method", "round", "mean", "lo", "hi", "seeds"])?;
    for p in &s.curves {
        w.write_record([
            p.instance.clone(),
            p.method.clone(),
            p.round.to_string(),
            fmt_float(p.mean),
            fmt_float(p.lo),
            fmt_float(p.hi),
            p.seeds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}
