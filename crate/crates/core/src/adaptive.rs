//! Online evolution of the population's hyperparameters: survivor
//! selection by credit-score quantile, tournament parent selection,
//! recombination and mutation against a prior catalog.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::solvers::{HyperParams, ParamValue, SolverClass, SolverSpec};
use crate::stats::quantile_threshold;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Prior {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    Categorical { values: Vec<String> },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::Uniform { lo, hi } if lo < hi => Ok(()),
            Prior::LogUniform { lo, hi } if *lo > 0.0 && lo < hi => Ok(()),
            Prior::Categorical { values } if !values.is_empty() => Ok(()),
            other => Err(Error::invalid(format!("invalid prior {other:?}"))),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> ParamValue {
        match self {
            Prior::Uniform { lo, hi } => ParamValue::Real(rng.random_range(*lo..*hi)),
            Prior::LogUniform { lo, hi } => ParamValue::Real(rng.random_range(lo.ln()..hi.ln()).exp().clamp(*lo, *hi)),
            Prior::Categorical { values } => ParamValue::Choice(values[rng.random_range(0..values.len())].clone()),
        }
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (Prior::Uniform { lo, hi } | Prior::LogUniform { lo, hi }, ParamValue::Real(x)) => (*lo..=*hi).contains(x),
            (Prior::Categorical { values }, ParamValue::Choice(c)) => values.contains(c),
            _ => false,
        }
    }

    fn clip(&self, x: f64) -> f64 {
        match self {
            Prior::Uniform { lo, hi } | Prior::LogUniform { lo, hi } => x.clamp(*lo, *hi),
            Prior::Categorical { .. } => x,
        }
    }
}

/// Hyperparameter priors per solver class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorCatalog(pub BTreeMap<SolverClass, BTreeMap<String, Prior>>);

impl Default for PriorCatalog {
    fn default() -> Self {
        let u = |lo, hi| Prior::Uniform { lo, hi };
        let cat = |vals: &[&str]| Prior::Categorical {
            values: vals.iter().map(|s| s.to_string()).collect(),
        };
        let mut m = BTreeMap::new();
        m.insert(SolverClass::Smw, BTreeMap::new());
        m.insert(
            SolverClass::Evolution,
            BTreeMap::from([("crossover".to_string(), u(0.1, 0.3)), ("mutation".to_string(), u(0.05, 0.2))]),
        );
        m.insert(
            SolverClass::Cem,
            BTreeMap::from([
                ("quantile".to_string(), u(0.825, 0.975)),
                ("smoothing".to_string(), Prior::LogUniform { lo: 0.1, hi: 10.0 }),
                ("model".to_string(), cat(&["pssm", "markov"])),
            ]),
        );
        m.insert(
            SolverClass::Mbo,
            BTreeMap::from([
                ("acquisition".to_string(), cat(&["posterior_mean", "ucb"])),
                ("ucb_scale".to_string(), u(0.5, 1.2)),
                ("regressor".to_string(), cat(&["ensemble", "bayesian_ridge"])),
            ]),
        );
        Self(m)
    }
}

impl PriorCatalog {
    pub fn validate(&self) -> Result<()> {
        for (class, priors) in &self.0 {
            for (k, p) in priors {
                p.validate()?;
                let probe = SolverSpec::new(*class, HyperParams::from([(k.clone(), p.sample(&mut crate::rng::from_seed(0)))]));
                probe.validate()?;
            }
        }
        Ok(())
    }

    pub fn priors(&self, class: SolverClass) -> Option<&BTreeMap<String, Prior>> {
        self.0.get(&class)
    }

    /// A spec of `class` with every prior-covered hyperparameter sampled.
    pub fn sample_spec(&self, class: SolverClass, rng: &mut Rng) -> SolverSpec {
        let params = self
            .priors(class)
            .map(|ps| ps.iter().map(|(k, p)| (k.clone(), p.sample(rng))).collect())
            .unwrap_or_default();
        SolverSpec::new(class, params)
    }

    /// Every hyperparameter with a prior lies in its support.
    pub fn contains(&self, spec: &SolverSpec) -> bool {
        let Some(ps) = self.priors(spec.class) else { return true };
        spec.params.iter().all(|(k, v)| ps.get(k).is_none_or(|p| p.contains(v)))
    }
}

/// Class composition constraints for the initial population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub classes: Vec<SolverClass>,
    pub min_per_class: usize,
    pub max_mbo: usize,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            classes: SolverClass::ALL.to_vec(),
            min_per_class: 1,
            max_mbo: 4,
        }
    }
}

impl PopulationSpec {
    /// `n` members, all of one class.
    pub fn single_class(class: SolverClass, n: usize) -> Self {
        Self {
            classes: vec![class],
            min_per_class: 1,
            max_mbo: n,
        }
    }
}

/// Samples `n` members: `min_per_class` of each listed class first, the rest
/// with uniformly drawn classes, never more than `max_mbo` model-based ones.
pub fn sample_initial_population(
    priors: &PriorCatalog,
    spec: &PopulationSpec,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<SolverSpec>> {
    if spec.classes.is_empty() {
        return Err(Error::invalid("population needs at least one class"));
    }
    let mut classes = spec.classes.clone();
    classes.sort();
    classes.dedup();
    let has_mbo = classes.contains(&SolverClass::Mbo);
    let required = classes.len() * spec.min_per_class;
    if n < required {
        return Err(Error::invalid(format!(
            "population size {n} is smaller than {} classes x {} required per class",
            classes.len(),
            spec.min_per_class
        )));
    }
    if has_mbo && spec.min_per_class > spec.max_mbo {
        return Err(Error::invalid("min_per_class exceeds max_mbo"));
    }
    let cap = |c: SolverClass| if c == SolverClass::Mbo { spec.max_mbo } else { usize::MAX };
    if classes.iter().map(|&c| cap(c).min(n)).sum::<usize>() < n {
        return Err(Error::invalid(format!("cannot fill {n} members with at most {} model-based ones", spec.max_mbo)));
    }
    let mut picked: Vec<SolverClass> = classes
        .iter()
        .flat_map(|&c| std::iter::repeat_n(c, spec.min_per_class))
        .collect();
    while picked.len() < n {
        let open: Vec<SolverClass> = classes
            .iter()
            .copied()
            .filter(|&c| picked.iter().filter(|&&p| p == c).count() < cap(c))
            .collect();
        picked.push(open[rng.random_range(0..open.len())]);
    }
    picked.shuffle(rng);
    Ok(picked.into_iter().map(|c| priors.sample_spec(c, rng)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub quantile: f64,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub scale_factors: [f64; 2],
    /// Adaptation runs only in rounds after this many.
    pub warmup_rounds: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            quantile: 0.5,
            tournament_size: 2,
            crossover_rate: 0.1,
            mutation_rate: 0.5,
            scale_factors: [0.8, 1.25],
            warmup_rounds: 3,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::invalid("adapt quantile must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::invalid("adapt rates must lie in [0, 1]"));
        }
        if self.tournament_size == 0 {
            return Err(Error::invalid("tournament size must be positive"));
        }
        if self.scale_factors.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::invalid("scale factors must be positive"));
        }
        Ok(())
    }
}

/// Indices whose score is at least the nearest-rank `q` quantile of all
/// scores; ties kept, never empty for a non-empty input.
pub fn select_survivors(scores: &[f64], q: f64) -> Vec<usize> {
    let Some(t) = quantile_threshold(scores, q) else {
        return Vec::new();
    };
    (0..scores.len()).filter(|&i| scores[i] >= t).collect()
}

/// Best of a random subset of `survivors`; lowest index wins ties.
pub fn tournament(survivors: &[usize], scores: &[f64], size: usize, rng: &mut Rng) -> usize {
    let k = size.clamp(1, survivors.len());
    let mut picks: Vec<usize> = sample(rng, survivors.len(), k).into_iter().map(|i| survivors[i]).collect();
    picks.sort_unstable();
    picks
        .into_iter()
        .reduce(|a, b| if scores[b] > scores[a] { b } else { a })
        .expect("survivors non-empty")
}

/// Child of parents `a` and `b` plus the index (0 for `a`, 1 for `b`) of the
/// parent that supplied its class.
pub fn recombine(a: &SolverSpec, b: &SolverSpec, rate: f64, rng: &mut Rng) -> (SolverSpec, usize) {
    if a.class == b.class {
        let params = a
            .params
            .iter()
            .map(|(k, va)| {
                let take_b = rng.random::<f64>() < rate;
                let v = match (take_b, b.params.get(k)) {
                    (true, Some(vb)) => vb.clone(),
                    _ => va.clone(),
                };
                (k.clone(), v)
            })
            .collect();
        (SolverSpec::new(a.class, params), 0)
    } else if rng.random::<bool>() {
        (b.clone(), 1)
    } else {
        (a.clone(), 0)
    }
}

/// Mutates each prior-covered hyperparameter with probability `rate`:
/// numeric values are resampled or scaled by one of `factors` and clipped,
/// categorical values are resampled.
pub fn mutate(spec: &mut SolverSpec, rate: f64, factors: [f64; 2], priors: &PriorCatalog, rng: &mut Rng) {
    let Some(ps) = priors.priors(spec.class) else { return };
    for (k, v) in spec.params.iter_mut() {
        let Some(prior) = ps.get(k) else { continue };
        if !(rng.random::<f64>() < rate) {
            continue;
        }
        *v = match (prior, &*v) {
            (Prior::Categorical { .. }, _) => prior.sample(rng),
            (_, ParamValue::Real(x)) => {
                if rng.random::<bool>() {
                    prior.sample(rng)
                } else {
                    let f = factors[rng.random_range(0..2)];
                    ParamValue::Real(prior.clip(x * f))
                }
            }
            _ => prior.sample(rng),
        };
    }
}

/// A new member and the index of the parent it descends from.
#[derive(Clone, Debug, PartialEq)]
pub struct Child {
    pub spec: SolverSpec,
    pub parent: usize,
}

/// One generation: `population.len()` children from survivors, tournament,
/// recombination and mutation.
pub fn adapt(population: &[SolverSpec], scores: &[f64], config: &AdaptConfig, priors: &PriorCatalog, rng: &mut Rng) -> Vec<Child> {
    let survivors = select_survivors(scores, config.quantile);
    (0..population.len())
        .map(|_| {
            let a = tournament(&survivors, scores, config.tournament_size, rng);
            let b = tournament(&survivors, scores, config.tournament_size, rng);
            let (mut spec, which) = recombine(&population[a], &population[b], config.crossover_rate, rng);
            mutate(&mut spec, config.mutation_rate, config.scale_factors, priors, rng);
            Child {
                spec,
                parent: if which == 0 { a } else { b },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn evo(c: f64, m: f64) -> SolverSpec {
        SolverSpec::new(
            SolverClass::Evolution,
            HyperParams::from([("crossover".into(), ParamValue::Real(c)), ("mutation".into(), ParamValue::Real(m))]),
        )
    }

    #[test]
    fn survivor_examples() {
        assert_eq!(select_survivors(&[1.0, 2.0, 3.0, 4.0], 0.5), vec![2, 3]);
        assert_eq!(select_survivors(&[0.5; 5], 0.5), vec![0, 1, 2, 3, 4]);
        assert_eq!(select_survivors(&[0.1, 0.9, 0.3, 0.9], 0.999), vec![1, 3]);
        assert_eq!(select_survivors(&[0.1, 0.9, 0.3], 1.0), vec![1]);
    }

    #[test]
    fn same_class_recombination_extremes() {
        let mut r = rng::from_seed(0);
        let a = evo(0.1, 0.05);
        let b = evo(0.3, 0.2);
        assert_eq!(recombine(&a, &b, 0.0, &mut r), (a.clone(), 0));
        assert_eq!(recombine(&a, &b, 1.0, &mut r).0, b);
    }

    #[test]
    fn cross_class_recombination_is_fair() {
        // chi-square with 1 dof; 10.83 is the 0.001 critical value
        let mut r = rng::from_seed(1);
        let a = evo(0.2, 0.1);
        let b = SolverSpec::default_for(SolverClass::Smw);
        let n = 4000;
        let from_b = (0..n).filter(|_| recombine(&a, &b, 0.5, &mut r).0.class == SolverClass::Smw).count() as f64;
        let e = n as f64 / 2.0;
        let chi2 = (from_b - e).powi(2) / e + ((n as f64 - from_b) - e).powi(2) / e;
        assert!(chi2 < 10.83, "chi2 = {chi2}");
    }

    #[test]
    fn scaled_mutation_is_clipped() {
        let priors = PriorCatalog::default();
        let prior = &priors.priors(SolverClass::Evolution).unwrap()["crossover"];
        assert_eq!(prior.clip(0.3 * 1.25), 0.3);
        let mut r = rng::from_seed(2);
        for _ in 0..200 {
            let mut s = evo(0.3, 0.2);
            mutate(&mut s, 1.0, [0.8, 1.25], &priors, &mut r);
            assert!(priors.contains(&s));
        }
    }

    #[test]
    fn zero_mutation_rate_is_identity() {
        let priors = PriorCatalog::default();
        let mut r = rng::from_seed(3);
        let mut s = priors.sample_spec(SolverClass::Mbo, &mut r);
        let before = s.clone();
        mutate(&mut s, 0.0, [0.8, 1.25], &priors, &mut r);
        assert_eq!(s, before);
    }

    #[test]
    fn categorical_mutation_matches_prior() {
        let priors = PriorCatalog::default();
        let mut r = rng::from_seed(4);
        let n = 4000;
        let mut ucb = 0;
        for _ in 0..n {
            let mut s = SolverSpec::new(
                SolverClass::Mbo,
                HyperParams::from([("acquisition".into(), ParamValue::Choice("posterior_mean".into()))]),
            );
            mutate(&mut s, 1.0, [0.8, 1.25], &priors, &mut r);
            if s.params["acquisition"] == ParamValue::Choice("ucb".into()) {
                ucb += 1;
            }
        }
        let f = ucb as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.03, "{f}");
    }

    #[test]
    fn initial_population_constraints() {
        let priors = PriorCatalog::default();
        let spec = PopulationSpec::default();
        for seed in 0..200 {
            let pop = sample_initial_population(&priors, &spec, 15, &mut rng::from_seed(seed)).unwrap();
            assert_eq!(pop.len(), 15);
            for c in SolverClass::ALL {
                assert!(pop.iter().any(|s| s.class == c));
            }
            assert!(pop.iter().filter(|s| s.class == SolverClass::Mbo).count() <= 4);
            assert!(pop.iter().all(|s| priors.contains(s) && s.validate().is_ok()));
        }
        let four = sample_initial_population(&priors, &spec, 4, &mut rng::from_seed(0)).unwrap();
        let mut classes: Vec<_> = four.iter().map(|s| s.class).collect();
        classes.sort();
        assert_eq!(classes, SolverClass::ALL.to_vec());
        assert!(sample_initial_population(&priors, &spec, 3, &mut rng::from_seed(0)).is_err());
        let a = sample_initial_population(&priors, &spec, 15, &mut rng::from_seed(9)).unwrap();
        let b = sample_initial_population(&priors, &spec, 15, &mut rng::from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_population() {
        let priors = PriorCatalog::default();
        let pop = sample_initial_population(&priors, &PopulationSpec::single_class(SolverClass::Mbo, 15), 15, &mut rng::from_seed(0))
            .unwrap();
        assert!(pop.iter().all(|s| s.class == SolverClass::Mbo));
    }

    #[test]
    fn funnel_collapses_to_best() {
        let priors = PriorCatalog::default();
        let mut r = rng::from_seed(5);
        let pop = sample_initial_population(&priors, &PopulationSpec::default(), 15, &mut r).unwrap();
        let scores: Vec<f64> = (0..15).map(|i| ((i * 7) % 15) as f64).collect();
        let best = scores.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let config = AdaptConfig {
            quantile: 1.0,
            crossover_rate: 0.0,
            mutation_rate: 0.0,
            ..Default::default()
        };
        let children = adapt(&pop, &scores, &config, &priors, &mut r);
        assert_eq!(children.len(), 15);
        for c in children {
            assert_eq!(c.spec, pop[best]);
            assert_eq!(c.parent, best);
        }
    }

    #[test]
    fn neutral_adaptation_preserves_class_frequencies() {
        // Everyone survives, no operators: each child copies a uniformly
        // drawn member, so the expected class histogram is unchanged.
        let priors = PriorCatalog::default();
        let mut r = rng::from_seed(6);
        let pop = sample_initial_population(&priors, &PopulationSpec::default(), 15, &mut r).unwrap();
        let scores = vec![0.0; 15];
        let config = AdaptConfig {
            quantile: 0.01,
            crossover_rate: 0.0,
            mutation_rate: 0.0,
            tournament_size: 1,
            ..Default::default()
        };
        let trials = 2000;
        let mut counts: BTreeMap<SolverClass, usize> = BTreeMap::new();
        for _ in 0..trials {
            for c in adapt(&pop, &scores, &config, &priors, &mut r) {
                *counts.entry(c.spec.class).or_default() += 1;
            }
        }
        for class in SolverClass::ALL {
            let expected = pop.iter().filter(|s| s.class == class).count() as f64 / 15.0;
            let got = counts.get(&class).copied().unwrap_or(0) as f64 / (15 * trials) as f64;
            assert!((got - expected).abs() < 0.01, "{class}: {got} vs {expected}");
        }
    }

    proptest! {
        #[test]
        fn adapt_preserves_size_and_support(seed in 0u64..10_000, n in 4usize..20) {
            let priors = PriorCatalog::default();
            let mut r = rng::from_seed(seed);
            let pop = sample_initial_population(&priors, &PopulationSpec::default(), n, &mut r).unwrap();
            let scores: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            let children = adapt(&pop, &scores, &AdaptConfig::default(), &priors, &mut r);
            prop_assert_eq!(children.len(), n);
            for c in &children {
                prop_assert!(priors.contains(&c.spec));
                prop_assert!(c.spec.validate().is_ok());
            }
        }

        #[test]
        fn survivors_monotone(scores in proptest::collection::vec(-5.0f64..5.0, 1..20), i in 0usize..20, bump in 0.0f64..3.0) {
            let i = i % scores.len();
            let before = select_survivors(&scores, 0.5);
            let mut raised = scores.clone();
            raised[i] += bump;
            let after = select_survivors(&raised, 0.5);
            if before.contains(&i) {
                prop_assert!(after.contains(&i));
            }
        }
    }
}
