//! Constituent optimizers behind a common `fit`/`propose` interface.
//!
//! Every solver is off-policy: `fit` accepts any observation archive,
//! including sequences proposed by other solvers, and rebuilds internal state
//! from it. `propose` returns one sequence at a time; solvers try to avoid
//! sequences they have already seen or proposed, but the engine is the final
//! authority on novelty.

pub mod cem;
pub mod evolution;
pub mod mbo;
pub mod regression;
pub mod smw;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::seq::{ObservationStore, SearchSpace, Sequence};

pub use cem::{CemParams, GenerativeModel};
pub use evolution::EvolutionParams;
pub use mbo::{Acquisition, MboParams, ModelCache, RegressorChoice};

pub trait Solver: Send {
    /// Rebuilds internal state from the archive.
    fn fit(&mut self, data: &ObservationStore);

    /// Next candidate sequence.
    fn propose(&mut self) -> Sequence;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverClass {
    Smw,
    Evolution,
    Cem,
    Mbo,
}

impl SolverClass {
    pub const ALL: [SolverClass; 4] = [SolverClass::Smw, SolverClass::Evolution, SolverClass::Cem, SolverClass::Mbo];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverClass::Smw => "smw",
            SolverClass::Evolution => "evolution",
            SolverClass::Cem => "cem",
            SolverClass::Mbo => "mbo",
        }
    }
}

impl fmt::Display for SolverClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown solver class `{s}` (expected smw, evolution, cem or mbo)")))
    }
}

/// A hyperparameter value: numeric or a categorical label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Real(f64),
    Choice(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Real(x) => write!(f, "{x}"),
            ParamValue::Choice(s) => f.write_str(s),
        }
    }
}

pub type HyperParams = BTreeMap<String, ParamValue>;

/// Class tag plus hyperparameters: everything needed to build a solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub class: SolverClass,
    #[serde(default)]
    pub params: HyperParams,
}

impl SolverSpec {
    pub fn new(class: SolverClass, params: HyperParams) -> Self {
        Self { class, params }
    }

    /// The class with every hyperparameter at its standalone default.
    pub fn default_for(class: SolverClass) -> Self {
        Self::new(class, HyperParams::new())
    }

    /// Checks keys and ranges without building anything.
    pub fn validate(&self) -> Result<()> {
        match self.class {
            SolverClass::Smw => reject_unknown(&self.params, &[]),
            SolverClass::Evolution => EvolutionParams::from_params(&self.params).map(|_| ()),
            SolverClass::Cem => CemParams::from_params(&self.params).map(|_| ()),
            SolverClass::Mbo => MboParams::from_params(&self.params).map(|_| ()),
        }
    }

    /// Hyperparameters as a compact JSON object.
    pub fn params_json(&self) -> String {
        serde_json::to_string(&self.params).unwrap_or_default()
    }

    pub fn build(&self, ctx: &SolverContext) -> Result<Box<dyn Solver>> {
        Ok(match self.class {
            SolverClass::Smw => {
                reject_unknown(&self.params, &[])?;
                Box::new(smw::SingleMutantWalker::new(ctx.space, ctx.rng()))
            }
            SolverClass::Evolution => Box::new(evolution::Evolution::new(
                ctx.space,
                EvolutionParams::from_params(&self.params)?,
                ctx.rng(),
            )),
            SolverClass::Cem => Box::new(cem::CrossEntropy::new(ctx.space, CemParams::from_params(&self.params)?, ctx.rng())),
            SolverClass::Mbo => Box::new(mbo::ModelBased::new(
                ctx.space,
                MboParams::from_params(&self.params)?,
                ctx.rng(),
                ctx.model_cache.clone(),
            )),
        })
    }
}

/// Construction context shared by the solvers of one run.
#[derive(Clone, Debug)]
pub struct SolverContext {
    pub space: SearchSpace,
    /// Seed of this solver's private stream.
    pub seed: u64,
    pub model_cache: ModelCache,
}

impl SolverContext {
    fn rng(&self) -> Rng {
        crate::rng::from_seed(self.seed)
    }
}

pub(crate) fn reject_unknown(params: &HyperParams, known: &[&str]) -> Result<()> {
    match params.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(Error::invalid(format!("unknown hyperparameter `{k}` (expected one of: {})", known.join(", ")))),
        None => Ok(()),
    }
}

pub(crate) fn real_param(params: &HyperParams, key: &str, default: f64, lo: f64, hi: f64) -> Result<f64> {
    let v = match params.get(key) {
        None => default,
        Some(ParamValue::Real(x)) => *x,
        Some(ParamValue::Choice(s)) => return Err(Error::invalid(format!("`{key}` must be numeric, got `{s}`"))),
    };
    if !(lo..=hi).contains(&v) {
        return Err(Error::invalid(format!("`{key}` = {v} outside [{lo}, {hi}]")));
    }
    Ok(v)
}

pub(crate) fn choice_param<'a>(params: &'a HyperParams, key: &str, default: &'a str, allowed: &[&str]) -> Result<&'a str> {
    let v = match params.get(key) {
        None => default,
        Some(ParamValue::Choice(s)) => s.as_str(),
        Some(ParamValue::Real(x)) => return Err(Error::invalid(format!("`{key}` must be one of {allowed:?}, got {x}"))),
    };
    if !allowed.contains(&v) {
        return Err(Error::invalid(format!("`{key}` must be one of {allowed:?}, got `{v}`")));
    }
    Ok(v)
}

/// Sequences a solver has observed or proposed.
#[derive(Clone, Debug, Default)]
pub(crate) struct Seen(HashSet<Sequence>);

impl Seen {
    pub fn absorb(&mut self, data: &ObservationStore) {
        for s in data.sequences() {
            if !self.0.contains(s) {
                self.0.insert(s.clone());
            }
        }
    }

    pub fn contains(&self, x: &Sequence) -> bool {
        self.0.contains(x)
    }

    /// Records `x`; returns whether it was new.
    pub fn mark(&mut self, x: &Sequence) -> bool {
        if self.0.contains(x) {
            false
        } else {
            self.0.insert(x.clone());
            true
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

/// A uniformly random sequence not in `seen`, when one can be found.
pub(crate) fn random_novel(space: SearchSpace, seen: &Seen, rng: &mut Rng) -> Option<Sequence> {
    random_excluding(space, seen.len(), |x| seen.contains(x), rng)
}

/// A uniformly random sequence for which `taken` is false, given that
/// `taken_count` sequences are taken. Small spaces are enumerated from a
/// random offset; large spaces are sampled.
pub fn random_excluding(
    space: SearchSpace,
    taken_count: usize,
    taken: impl Fn(&Sequence) -> bool,
    rng: &mut Rng,
) -> Option<Sequence> {
    let size = space.size();
    if (taken_count as u128) >= size {
        return None;
    }
    for _ in 0..64 {
        let x = Sequence::random(space, rng);
        if !taken(&x) {
            return Some(x);
        }
    }
    if size <= 1 << 22 {
        let n = size as usize;
        let start = rng.random_range(0..n);
        return (0..n)
            .map(|i| Sequence::from_index((start + i) % n, space))
            .find(|x| !taken(x));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_names_round_trip() {
        for c in SolverClass::ALL {
            assert_eq!(c.as_str().parse::<SolverClass>().unwrap(), c);
        }
        assert!("dbas".parse::<SolverClass>().is_err());
    }

    #[test]
    fn param_validation() {
        let mut p = HyperParams::new();
        p.insert("mutation".into(), ParamValue::Real(0.5));
        assert!(SolverSpec::new(SolverClass::Evolution, p.clone()).validate().is_ok());
        assert!(SolverSpec::new(SolverClass::Smw, p.clone()).validate().is_err());
        p.insert("mutation".into(), ParamValue::Real(1.5));
        assert!(SolverSpec::new(SolverClass::Evolution, p).validate().is_err());
        let mut q = HyperParams::new();
        q.insert("model".into(), ParamValue::Choice("vae".into()));
        assert!(SolverSpec::new(SolverClass::Cem, q).validate().is_err());
    }

    #[test]
    fn params_serialise_compactly() {
        let mut p = HyperParams::new();
        p.insert("acquisition".into(), ParamValue::Choice("ucb".into()));
        p.insert("ucb_scale".into(), ParamValue::Real(0.75));
        let spec = SolverSpec::new(SolverClass::Mbo, p);
        assert_eq!(spec.params_json(), r#"{"acquisition":"ucb","ucb_scale":0.75}"#);
    }

    #[test]
    fn random_novel_exhausts_small_spaces() {
        let space = SearchSpace::new(2, 3);
        let mut seen = Seen::default();
        let mut r = crate::rng::from_seed(0);
        for _ in 0..8 {
            let x = random_novel(space, &seen, &mut r).unwrap();
            assert!(seen.mark(&x));
        }
        assert!(random_novel(space, &seen, &mut r).is_none());
    }
}
