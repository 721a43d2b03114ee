//! Model-based optimization: fit a surrogate ensemble, then run an
//! evolutionary search against its acquisition function.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::Rng as _;

use super::evolution::{mutate, recombine, substitute, tournament};
use super::regression::FittedModels;
use super::{choice_param, random_novel, real_param, reject_unknown, HyperParams, Seen, Solver};
use crate::error::Result;
use crate::rng::{fnv1a64, Rng};
use crate::seq::{ObservationStore, SearchSpace, Sequence};

pub const MIN_OBSERVATIONS: usize = 10;
pub const SELECTION_THRESHOLD: f64 = 0.4;
pub const SEARCH_ITERATIONS: usize = 500;
pub const SEARCH_CHILDREN: usize = 25;
pub const SEARCH_POPULATION: usize = 100;
const SEARCH_TOURNAMENT: usize = 5;
const SEARCH_CROSSOVER: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Acquisition {
    PosteriorMean,
    Ucb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegressorChoice {
    Ensemble,
    BayesianRidge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MboParams {
    pub acquisition: Acquisition,
    pub ucb_scale: f64,
    pub regressor: RegressorChoice,
}

impl Default for MboParams {
    fn default() -> Self {
        Self {
            acquisition: Acquisition::PosteriorMean,
            ucb_scale: 1.0,
            regressor: RegressorChoice::Ensemble,
        }
    }
}

impl MboParams {
    pub fn from_params(p: &HyperParams) -> Result<Self> {
        reject_unknown(p, &["acquisition", "ucb_scale", "regressor"])?;
        let acquisition = match choice_param(p, "acquisition", "posterior_mean", &["posterior_mean", "ucb"])? {
            "ucb" => Acquisition::Ucb,
            _ => Acquisition::PosteriorMean,
        };
        let regressor = match choice_param(p, "regressor", "ensemble", &["ensemble", "bayesian_ridge"])? {
            "bayesian_ridge" => RegressorChoice::BayesianRidge,
            _ => RegressorChoice::Ensemble,
        };
        Ok(Self {
            acquisition,
            ucb_scale: real_param(p, "ucb_scale", 1.0, 0.0, 1e6)?,
            regressor,
        })
    }
}

/// Most recent regression fit, shared by the model-based solvers of a run.
/// Fits depend only on the data, so solvers that see the same archive reuse
/// one fit.
#[derive(Clone, Default)]
pub struct ModelCache(Arc<Mutex<Option<(u64, Arc<FittedModels>)>>>);

impl fmt::Debug for ModelCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ModelCache")
    }
}

fn fingerprint(data: &ObservationStore) -> u64 {
    let mut bytes = Vec::with_capacity(data.len() * 16);
    bytes.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for (s, o) in data.iter() {
        bytes.extend_from_slice(&s.0);
        bytes.extend_from_slice(&o.reward.to_bits().to_le_bytes());
    }
    fnv1a64(&bytes)
}

impl ModelCache {
    pub fn get_or_fit(&self, data: &ObservationStore, vocab_size: usize) -> Arc<FittedModels> {
        let key = fingerprint(data);
        let mut slot = self.0.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((k, m)) = slot.as_ref() {
            if *k == key {
                return Arc::clone(m);
            }
        }
        let seqs: Vec<&Sequence> = data.sequences().collect();
        let fitted = Arc::new(FittedModels::fit(&seqs, &data.rewards(), vocab_size));
        *slot = Some((key, Arc::clone(&fitted)));
        fitted
    }
}

/// The selected ensemble and its acquisition function.
pub struct Surrogate {
    models: Arc<FittedModels>,
    members: Vec<usize>,
    mean_weights: Vec<f64>,
    params: MboParams,
}

impl Surrogate {
    pub fn new(models: Arc<FittedModels>, params: MboParams) -> Self {
        let all = &models.members;
        let members: Vec<usize> = match params.regressor {
            RegressorChoice::BayesianRidge => vec![all.len() - 1],
            RegressorChoice::Ensemble => {
                let good: Vec<usize> = (0..all.len()).filter(|&i| all[i].cv_score >= SELECTION_THRESHOLD).collect();
                if good.is_empty() {
                    let best = (0..all.len())
                        .reduce(|a, b| if all[b].cv_score > all[a].cv_score { b } else { a })
                        .expect("members");
                    vec![best]
                } else {
                    good
                }
            }
        };
        let mut mean_weights = vec![0.0; models.dim];
        for &i in &members {
            for (acc, w) in mean_weights.iter_mut().zip(&all[i].weights) {
                *acc += w / members.len() as f64;
            }
        }
        Self {
            models,
            members,
            mean_weights,
            params,
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn models(&self) -> &FittedModels {
        &self.models
    }

    pub fn mean(&self, x: &Sequence) -> f64 {
        let v = self.models.vocab_size;
        self.models.intercept
            + x.0
                .iter()
                .enumerate()
                .map(|(p, &t)| self.mean_weights[p * v + usize::from(t)])
                .sum::<f64>()
    }

    /// Mean and variance: spread of member means plus the mean native
    /// variance of members that have one.
    pub fn mean_variance(&self, x: &Sequence) -> (f64, f64) {
        let all = &self.models.members;
        let preds: Vec<f64> = self.members.iter().map(|&i| self.models.predict(&all[i], x)).collect();
        let mean = crate::stats::mean(&preds);
        let spread = crate::stats::variance(&preds);
        let bayes: Vec<f64> = self
            .members
            .iter()
            .filter(|&&i| all[i].is_bayesian())
            .map(|_| self.models.bayesian_variance(x))
            .collect();
        let native = if bayes.is_empty() { 0.0 } else { crate::stats::mean(&bayes) };
        (mean, spread + native)
    }

    pub fn acquisition(&self, x: &Sequence) -> f64 {
        match self.params.acquisition {
            Acquisition::PosteriorMean => self.mean(x),
            Acquisition::Ucb => {
                let (m, v) = self.mean_variance(x);
                ucb(m, v.sqrt(), self.params.ucb_scale)
            }
        }
    }
}

pub fn ucb(mean: f64, std: f64, scale: f64) -> f64 {
    mean + scale * std
}

/// Regularized evolution against `score`, seeded with `seeds`. Returns every
/// evaluated child not in `exclude`, best first, ties in token order.
pub fn inner_search(
    seeds: &[Sequence],
    score: impl Fn(&Sequence) -> f64,
    exclude: impl Fn(&Sequence) -> bool,
    space: SearchSpace,
    rng: &mut Rng,
) -> Vec<(Sequence, f64)> {
    let mut population: VecDeque<(Sequence, f64)> = seeds.iter().map(|s| (s.clone(), score(s))).collect();
    while population.len() < 2 {
        let x = Sequence::random(space, rng);
        let f = score(&x);
        population.push_back((x, f));
    }
    let p_mut = 1.0 / space.length as f64;
    let mut found: HashMap<Sequence, f64> = HashMap::new();
    for _ in 0..SEARCH_ITERATIONS {
        let fitness: Vec<f64> = population.iter().map(|p| p.1).collect();
        let mut children = Vec::with_capacity(SEARCH_CHILDREN);
        for _ in 0..SEARCH_CHILDREN {
            let a = tournament(&fitness, SEARCH_TOURNAMENT, rng);
            let b = tournament(&fitness, SEARCH_TOURNAMENT, rng);
            let mut child = recombine(&population[a].0, &population[b].0, SEARCH_CROSSOVER, rng);
            if mutate(&mut child, p_mut, space.vocab_size, rng) == 0 {
                let pos = rng.random_range(0..space.length);
                child.0[pos] = substitute(child.0[pos], space.vocab_size, rng);
            }
            let f = match found.get(&child) {
                Some(&f) => f,
                None => {
                    let f = score(&child);
                    if !exclude(&child) {
                        found.insert(child.clone(), f);
                    }
                    f
                }
            };
            children.push((child, f));
        }
        population.extend(children);
        while population.len() > SEARCH_POPULATION {
            population.pop_front();
        }
    }
    let mut ranked: Vec<(Sequence, f64)> = found.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0 .0.cmp(&b.0 .0)));
    ranked
}

pub struct ModelBased {
    space: SearchSpace,
    params: MboParams,
    rng: Rng,
    seen: Seen,
    cache: ModelCache,
    surrogate: Option<Surrogate>,
    seeds: Vec<Sequence>,
    /// Ranked candidates, best last.
    queue: Vec<Sequence>,
    exhausted: bool,
}

impl ModelBased {
    pub fn new(space: SearchSpace, params: MboParams, rng: Rng, cache: ModelCache) -> Self {
        Self {
            space,
            params,
            rng,
            seen: Seen::default(),
            cache,
            surrogate: None,
            seeds: Vec::new(),
            queue: Vec::new(),
            exhausted: false,
        }
    }

    pub fn surrogate(&self) -> Option<&Surrogate> {
        self.surrogate.as_ref()
    }

    /// True once an inner search found no unseen candidate.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    /// Ranked novel candidates from a fresh inner search.
    pub fn search(&mut self) -> Vec<(Sequence, f64)> {
        let Some(s) = &self.surrogate else { return Vec::new() };
        let seen = &self.seen;
        inner_search(&self.seeds, |x| s.acquisition(x), |x| seen.contains(x), self.space, &mut self.rng)
    }

    fn random(&mut self) -> Sequence {
        match random_novel(self.space, &self.seen, &mut self.rng) {
            Some(x) => {
                self.seen.mark(&x);
                x
            }
            None => {
                self.exhausted = true;
                Sequence::random(self.space, &mut self.rng)
            }
        }
    }
}

impl Solver for ModelBased {
    fn fit(&mut self, data: &ObservationStore) {
        self.seen.absorb(data);
        self.queue.clear();
        if data.len() < MIN_OBSERVATIONS {
            self.surrogate = None;
            return;
        }
        let models = self.cache.get_or_fit(data, self.space.vocab_size);
        self.surrogate = Some(Surrogate::new(models, self.params.clone()));
        self.seeds = data
            .ranked()
            .into_iter()
            .take(SEARCH_POPULATION)
            .map(|(s, _)| s.clone())
            .collect();
    }

    fn propose(&mut self) -> Sequence {
        if self.surrogate.is_none() {
            return self.random();
        }
        loop {
            while let Some(x) = self.queue.pop() {
                if self.seen.mark(&x) {
                    return x;
                }
            }
            let ranked = self.search();
            if ranked.is_empty() {
                self.exhausted = true;
                return self.random();
            }
            self.queue = ranked.into_iter().rev().map(|(s, _)| s).collect();
        }
    }
}
