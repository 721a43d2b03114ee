//! The ensemble loop.
//!
//! Each round the engine draws algorithms from a categorical distribution,
//! collects one novel proposal per draw until the batch is full, evaluates
//! the batch, rewards every algorithm by the relative improvement of its
//! best attributed sequence over the previous best, decays credit scores,
//! optionally adapts the population, turns scores into sampling
//! probabilities with a min-max normalized softmax, and refits all solvers.

use indexmap::IndexMap;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::adaptive::{self, AdaptConfig, PriorCatalog};
use crate::error::{Error, Result};
use crate::oracles::OracleInstance;
use crate::rng::{self, Rng};
use crate::seq::{ObservationStore, SearchSpace, Sequence};
use crate::solvers::{random_excluding, ModelCache, Solver, SolverClass, SolverContext, SolverSpec};

/// Denominator floor for relative improvements.
pub const REWARD_EPS: f64 = 1e-6;

/// Consecutive draws without batch growth before a random novel sequence
/// is substituted.
const STALL_LIMIT: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub population_size: usize,
    pub temperature: f64,
    pub decay: f64,
    /// Rounds sampled with the initial weights regardless of scores.
    pub warmup_rounds: usize,
    /// Proposals requested from one algorithm per draw before resampling.
    pub retry_cap: usize,
    pub seed: u64,
    /// Initial sampling weights; uniform when absent.
    pub initial_weights: Option<Vec<f64>>,
    /// Whether every solver is fit on all observations or only on the
    /// init data plus its own attributed sequences.
    pub share_data: bool,
    pub adaptation: Option<Adaptation>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            population_size: 15,
            temperature: 1.0,
            decay: 0.25,
            warmup_rounds: 3,
            retry_cap: 10,
            seed: 0,
            initial_weights: None,
            share_data: true,
            adaptation: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Adaptation {
    pub config: AdaptConfig,
    pub priors: PriorCatalog,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::invalid("population size must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(Error::invalid("decay must lie in [0, 1)"));
        }
        if self.retry_cap == 0 {
            return Err(Error::invalid("retry cap must be at least 1"));
        }
        if let Some(w) = &self.initial_weights {
            if w.len() != self.population_size {
                return Err(Error::invalid(format!(
                    "{} initial weights for a population of {}",
                    w.len(),
                    self.population_size
                )));
            }
            if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::invalid("initial weights must be non-negative with a positive sum"));
            }
        }
        if let Some(a) = &self.adaptation {
            a.config.validate()?;
            a.priors.validate()?;
        }
        Ok(())
    }

    fn initial_probabilities(&self) -> Vec<f64> {
        match &self.initial_weights {
            Some(w) => {
                let total: f64 = w.iter().sum();
                w.iter().map(|x| x / total).collect()
            }
            None => vec![1.0 / self.population_size as f64; self.population_size],
        }
    }
}

/// Relative improvement of each algorithm's best attributed value over
/// `f_max`. Algorithms without attributed sequences get the round minimum
/// of the others; everything is zero before `f_max` exists.
pub fn compute_rewards(best: &[Option<f64>], f_max: Option<f64>) -> Vec<f64> {
    let Some(f_max) = f_max else {
        return vec![0.0; best.len()];
    };
    let denom = f_max.abs().max(REWARD_EPS);
    let raw: Vec<Option<f64>> = best.iter().map(|b| b.map(|y| (y - f_max) / denom)).collect();
    let floor = raw.iter().flatten().copied().reduce(f64::min).unwrap_or(0.0);
    raw.into_iter().map(|r| r.unwrap_or(floor)).collect()
}

/// `s_i <- decay * s_i + r_i`.
pub fn update_credit(scores: &mut [f64], rewards: &[f64], decay: f64) {
    for (s, r) in scores.iter_mut().zip(rewards) {
        *s = decay * *s + r;
    }
}

/// Explicit form of the credit recurrence: `sum_t r_t decay^(T - t)`.
pub fn decayed_sum(history: &[f64], decay: f64) -> f64 {
    let n = history.len();
    history
        .iter()
        .enumerate()
        .map(|(t, r)| r * decay.powi((n - 1 - t) as i32))
        .sum()
}

/// Softmax over min-max normalized scores.
pub fn selection_probabilities(scores: &[f64], temperature: f64) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm: Vec<f64> = if hi > lo {
        scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; scores.len()]
    };
    // normalized scores lie in [0, 1]; shifting by the max keeps exp finite
    let top = norm.iter().copied().fold(0.0, f64::max);
    let w: Vec<f64> = norm.iter().map(|x| ((x - top) / temperature).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// A batch of novel sequences with their attribution.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub sequences: Vec<Sequence>,
    /// Per algorithm, indices into `sequences` it proposed.
    pub attribution: Vec<Vec<usize>>,
    /// Per algorithm, how many times it was drawn.
    pub draws: Vec<usize>,
    /// Sequences substituted by the stall guard.
    pub fallbacks: usize,
}

pub struct BatchRequest<'a> {
    pub probabilities: &'a [f64],
    pub batch_size: usize,
    pub retry_cap: usize,
    pub history: &'a ObservationStore,
    pub space: SearchSpace,
    /// Named in the exhaustion error.
    pub instance: &'a str,
}

/// Fills a batch of `batch_size` sequences that are novel with respect to
/// `history` and to each other.
pub fn build_batch(solvers: &mut [Box<dyn Solver>], req: &BatchRequest<'_>, rng: &mut Rng) -> Result<Batch> {
    let n = solvers.len();
    if req.probabilities.len() != n {
        return Err(Error::invalid(format!("{} probabilities for {n} algorithms", req.probabilities.len())));
    }
    let space_size = req.space.size();
    if req.history.len() as u128 + req.batch_size as u128 > space_size {
        return Err(Error::SearchSpaceExhausted {
            instance: req.instance.to_string(),
            observed: req.history.len(),
            batch: req.batch_size,
            space: space_size,
        });
    }
    let dist = WeightedIndex::new(req.probabilities).map_err(|e| Error::invalid(format!("invalid sampling probabilities: {e}")))?;
    let mut batch: IndexMap<Sequence, Vec<usize>> = IndexMap::with_capacity(req.batch_size);
    let mut draws = vec![0; n];
    let mut stalled = 0;
    let mut fallbacks = 0;
    while batch.len() < req.batch_size {
        let i = dist.sample(rng);
        draws[i] += 1;
        let before = batch.len();
        for _ in 0..req.retry_cap {
            let x = solvers[i].propose();
            if req.history.contains(&x) {
                continue;
            }
            let owners = batch.entry(x).or_default();
            if !owners.contains(&i) {
                owners.push(i);
            }
            break;
        }
        if batch.len() > before {
            stalled = 0;
            continue;
        }
        stalled += 1;
        if stalled >= STALL_LIMIT {
            let taken = req.history.len() + batch.len();
            let x = random_excluding(req.space, taken, |x| req.history.contains(x) || batch.contains_key(x), rng)
                .ok_or_else(|| Error::SearchSpaceExhausted {
                    instance: req.instance.to_string(),
                    observed: req.history.len(),
                    batch: req.batch_size,
                    space: space_size,
                })?;
            batch.insert(x, vec![i]);
            fallbacks += 1;
            stalled = 0;
        }
    }
    let mut attribution = vec![Vec::new(); n];
    for (k, owners) in batch.values().enumerate() {
        for &i in owners {
            attribution[i].push(k);
        }
    }
    Ok(Batch {
        sequences: batch.into_keys().collect(),
        attribution,
        draws,
        fallbacks,
    })
}

/// Identity and hyperparameters of a population member.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberInfo {
    pub id: usize,
    pub class: SolverClass,
    pub params: String,
}

/// Per-algorithm outcome of one round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgorithmRound {
    pub member: MemberInfo,
    pub probability: f64,
    pub draws: usize,
    pub attributed: usize,
    /// Best oracle value among its attributed sequences.
    pub best: Option<f64>,
    pub reward: f64,
    /// Credit score after this round's update.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub batch: Vec<Sequence>,
    pub values: Vec<f64>,
    /// Member ids that proposed each batch sequence.
    pub proposers: Vec<Vec<usize>>,
    pub algorithms: Vec<AlgorithmRound>,
    pub batch_max: f64,
    /// Running max over proposed batches; init data excluded.
    pub cumulative_max: f64,
    /// Best value observed so far, init data included.
    pub f_max: f64,
    pub adapted: bool,
    pub fallbacks: usize,
}

struct Member {
    id: usize,
    spec: SolverSpec,
    solver: Box<dyn Solver>,
    history: Vec<f64>,
    score: f64,
    /// Init data plus attributed observations; kept only without sharing.
    own: Option<ObservationStore>,
}

impl Member {
    fn info(&self) -> MemberInfo {
        MemberInfo {
            id: self.id,
            class: self.spec.class,
            params: self.spec.params_json(),
        }
    }
}

pub struct Engine<'a> {
    instance: &'a OracleInstance,
    config: EngineConfig,
    members: Vec<Member>,
    next_id: usize,
    store: ObservationStore,
    init: ObservationStore,
    probabilities: Vec<f64>,
    f_max: Option<f64>,
    proposed_max: Option<f64>,
    round: usize,
    draw_rng: Rng,
    adapt_rng: Rng,
    cache: ModelCache,
}

impl<'a> Engine<'a> {
    /// Builds every member from its spec and fits it on the init data.
    pub fn new(instance: &'a OracleInstance, population: &[SolverSpec], config: EngineConfig) -> Result<Self> {
        let cache = ModelCache::default();
        let solvers = population
            .iter()
            .enumerate()
            .map(|(id, spec)| {
                spec.validate()?;
                Ok((spec.clone(), spec.build(&solver_context(instance, config.seed, id, &cache))?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(instance, solvers, config, cache)
    }

    /// Uses pre-built solvers; `specs` label them and seed any adaptation.
    pub fn with_solvers(instance: &'a OracleInstance, solvers: Vec<(SolverSpec, Box<dyn Solver>)>, config: EngineConfig) -> Result<Self> {
        Self::assemble(instance, solvers, config, ModelCache::default())
    }

    fn assemble(
        instance: &'a OracleInstance,
        solvers: Vec<(SolverSpec, Box<dyn Solver>)>,
        config: EngineConfig,
        cache: ModelCache,
    ) -> Result<Self> {
        config.validate()?;
        if solvers.len() != config.population_size {
            return Err(Error::invalid(format!(
                "population has {} members but population_size is {}",
                solvers.len(),
                config.population_size
            )));
        }
        let mut init = ObservationStore::new();
        for (x, y) in &instance.init_dataset {
            init.insert(x.clone(), *y, 0)?;
        }
        let members = solvers
            .into_iter()
            .enumerate()
            .map(|(id, (spec, solver))| Member {
                id,
                spec,
                solver,
                history: Vec::new(),
                score: 0.0,
                own: (!config.share_data).then(|| init.clone()),
            })
            .collect::<Vec<_>>();
        let mut engine = Self {
            instance,
            next_id: members.len(),
            members,
            store: init.clone(),
            f_max: init.max_reward(),
            proposed_max: None,
            init,
            probabilities: config.initial_probabilities(),
            round: 0,
            draw_rng: rng::stream(config.seed, "engine/draws"),
            adapt_rng: rng::stream(config.seed, "adapt"),
            cache,
            config,
        };
        engine.fit_all();
        Ok(engine)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &ObservationStore {
        &self.store
    }

    pub fn init_data(&self) -> &ObservationStore {
        &self.init
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn f_max(&self) -> Option<f64> {
        self.f_max
    }

    /// Sampling probabilities for the next round.
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn scores(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.score).collect()
    }

    /// Reward history of each current member, inherited through adaptation.
    pub fn reward_histories(&self) -> Vec<&[f64]> {
        self.members.iter().map(|m| m.history.as_slice()).collect()
    }

    pub fn population(&self) -> Vec<SolverSpec> {
        self.members.iter().map(|m| m.spec.clone()).collect()
    }

    pub fn members(&self) -> Vec<MemberInfo> {
        self.members.iter().map(Member::info).collect()
    }

    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let t = self.round + 1;
        let probabilities = self.probabilities.clone();
        let mut solvers: Vec<Box<dyn Solver>> = self
            .members
            .iter_mut()
            .map(|m| std::mem::replace(&mut m.solver, Box::new(Placeholder)))
            .collect();
        let built = build_batch(
            &mut solvers,
            &BatchRequest {
                probabilities: &probabilities,
                batch_size: self.instance.batch_size,
                retry_cap: self.config.retry_cap,
                history: &self.store,
                space: self.instance.space(),
                instance: &self.instance.id,
            },
            &mut self.draw_rng,
        );
        for (m, s) in self.members.iter_mut().zip(solvers) {
            m.solver = s;
        }
        let batch = built?;
        let values = self.instance.evaluate(&batch.sequences)?;
        for (x, y) in batch.sequences.iter().zip(&values) {
            self.store.insert(x.clone(), *y, t)?;
        }
        for (m, idx) in self.members.iter_mut().zip(&batch.attribution) {
            if let Some(own) = m.own.as_mut() {
                for &k in idx {
                    own.insert(batch.sequences[k].clone(), values[k], t)?;
                }
            }
        }

        let best: Vec<Option<f64>> = batch
            .attribution
            .iter()
            .map(|idx| idx.iter().map(|&k| values[k]).reduce(f64::max))
            .collect();
        let rewards = compute_rewards(&best, self.f_max);
        let batch_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.f_max = Some(self.f_max.map_or(batch_max, |f| f.max(batch_max)));
        self.proposed_max = Some(self.proposed_max.map_or(batch_max, |f| f.max(batch_max)));
        let mut scores = self.scores();
        update_credit(&mut scores, &rewards, self.config.decay);
        for ((m, s), r) in self.members.iter_mut().zip(&scores).zip(&rewards) {
            m.score = *s;
            m.history.push(*r);
        }

        let mut proposers = vec![Vec::new(); batch.sequences.len()];
        for (m, idx) in self.members.iter().zip(&batch.attribution) {
            for &k in idx {
                proposers[k].push(m.id);
            }
        }
        let algorithms = self
            .members
            .iter()
            .enumerate()
            .map(|(i, m)| AlgorithmRound {
                member: m.info(),
                probability: probabilities[i],
                draws: batch.draws[i],
                attributed: batch.attribution[i].len(),
                best: best[i],
                reward: rewards[i],
                score: m.score,
            })
            .collect();

        let adapted = match &self.config.adaptation {
            Some(a) if t > a.config.warmup_rounds => {
                self.adapt();
                true
            }
            _ => false,
        };

        self.probabilities = if t < self.config.warmup_rounds {
            self.config.initial_probabilities()
        } else {
            selection_probabilities(&self.scores(), self.config.temperature)
        };
        self.round = t;
        self.fit_all();

        Ok(RoundRecord {
            round: t,
            batch: batch.sequences,
            values,
            proposers,
            algorithms,
            batch_max,
            cumulative_max: self.proposed_max.expect("set above"),
            f_max: self.f_max.expect("set above"),
            adapted,
            fallbacks: batch.fallbacks,
        })
    }

    /// Runs the instance's configured number of rounds.
    pub fn run(&mut self) -> Result<Vec<RoundRecord>> {
        (0..self.instance.rounds).map(|_| self.run_round()).collect()
    }

    fn adapt(&mut self) {
        let Some(a) = &self.config.adaptation else { return };
        let specs = self.population();
        let scores = self.scores();
        let children = adaptive::adapt(&specs, &scores, &a.config, &a.priors, &mut self.adapt_rng);
        let mut next = Vec::with_capacity(children.len());
        for child in children {
            let id = self.next_id;
            self.next_id += 1;
            let parent = &self.members[child.parent];
            let ctx = solver_context(self.instance, self.config.seed, id, &self.cache);
            // children are sampled inside the prior support, so building cannot fail
            let solver = child.spec.build(&ctx).expect("adapted spec is valid");
            next.push(Member {
                id,
                spec: child.spec,
                solver,
                history: parent.history.clone(),
                score: parent.score,
                own: parent.own.clone(),
            });
        }
        self.members = next;
    }

    fn fit_all(&mut self) {
        for m in &mut self.members {
            match &m.own {
                Some(own) => m.solver.fit(own),
                None => m.solver.fit(&self.store),
            }
        }
    }
}

fn solver_context(instance: &OracleInstance, seed: u64, id: usize, cache: &ModelCache) -> SolverContext {
    SolverContext {
        space: instance.space(),
        seed: rng::child_seed(seed, &format!("solver/{id}")),
        model_cache: cache.clone(),
    }
}

/// Stand-in while solvers are lent to `build_batch`.
struct Placeholder;

impl Solver for Placeholder {
    fn fit(&mut self, _: &ObservationStore) {}

    fn propose(&mut self) -> Sequence {
        unreachable!("placeholder solver is never asked to propose")
    }
}
