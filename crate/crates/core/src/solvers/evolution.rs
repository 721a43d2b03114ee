//! Genetic search with tournament selection, single-parent-switch
//! recombination, per-position mutation and death by old age.

use rand::seq::index::sample;
use rand::Rng as _;

use super::{random_novel, real_param, reject_unknown, HyperParams, Seen, Solver};
use crate::error::Result;
use crate::rng::Rng;
use crate::seq::{ObservationStore, SearchSpace, Sequence};

const NOVELTY_ATTEMPTS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionParams {
    pub crossover: f64,
    pub mutation: f64,
    pub tournament: usize,
    /// Samples from rounds older than this many rounds are not parents.
    pub age_limit: usize,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        Self {
            crossover: 0.1,
            mutation: 0.01,
            tournament: 2,
            age_limit: 5,
        }
    }
}

impl EvolutionParams {
    pub fn from_params(p: &HyperParams) -> Result<Self> {
        reject_unknown(p, &["crossover", "mutation", "tournament", "age_limit"])?;
        let d = Self::default();
        Ok(Self {
            crossover: real_param(p, "crossover", d.crossover, 0.0, 1.0)?,
            mutation: real_param(p, "mutation", d.mutation, 0.0, 1.0)?,
            tournament: real_param(p, "tournament", d.tournament as f64, 1.0, 1e6)?.round() as usize,
            age_limit: real_param(p, "age_limit", d.age_limit as f64, 1.0, 1e6)?.round() as usize,
        })
    }
}

/// Index of the best of `size` members drawn without replacement; the
/// earliest index wins ties.
pub fn tournament(fitness: &[f64], size: usize, rng: &mut Rng) -> usize {
    let k = size.clamp(1, fitness.len());
    let mut picks = sample(rng, fitness.len(), k).into_vec();
    picks.sort_unstable();
    picks
        .into_iter()
        .reduce(|a, b| if fitness[b] > fitness[a] { b } else { a })
        .expect("non-empty population")
}

/// Copies left to right from `a`, switching to the other parent with
/// probability `p_cross` after each position.
pub fn recombine(a: &Sequence, b: &Sequence, p_cross: f64, rng: &mut Rng) -> Sequence {
    let parents = [a, b];
    let mut src = 0;
    let mut child = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        child.push(parents[src].0[i]);
        if p_cross > 0.0 && rng.random::<f64>() < p_cross {
            src = 1 - src;
        }
    }
    Sequence(child)
}

/// Changes each position to a uniformly chosen different token with
/// probability `p_mut`. Returns the number of changed positions.
pub fn mutate(x: &mut Sequence, p_mut: f64, vocab_size: usize, rng: &mut Rng) -> usize {
    let mut changed = 0;
    if p_mut <= 0.0 {
        return 0;
    }
    for t in x.0.iter_mut() {
        if rng.random::<f64>() < p_mut {
            *t = substitute(*t, vocab_size, rng);
            changed += 1;
        }
    }
    changed
}

/// A uniformly random token other than `t`.
pub fn substitute(t: u8, vocab_size: usize, rng: &mut Rng) -> u8 {
    let r = rng.random_range(0..vocab_size - 1) as u8;
    if r >= t {
        r + 1
    } else {
        r
    }
}

pub struct Evolution {
    space: SearchSpace,
    params: EvolutionParams,
    rng: Rng,
    seen: Seen,
    parents: Vec<Sequence>,
    fitness: Vec<f64>,
}

impl Evolution {
    pub fn new(space: SearchSpace, params: EvolutionParams, rng: Rng) -> Self {
        Self {
            space,
            params,
            rng,
            seen: Seen::default(),
            parents: Vec::new(),
            fitness: Vec::new(),
        }
    }

    pub fn params(&self) -> &EvolutionParams {
        &self.params
    }

    /// One child before any novelty check, or `None` without parents.
    pub fn offspring(&mut self) -> Option<Sequence> {
        if self.parents.is_empty() {
            return None;
        }
        let a = tournament(&self.fitness, self.params.tournament, &mut self.rng);
        let b = tournament(&self.fitness, self.params.tournament, &mut self.rng);
        let mut child = recombine(&self.parents[a], &self.parents[b], self.params.crossover, &mut self.rng);
        mutate(&mut child, self.params.mutation, self.space.vocab_size, &mut self.rng);
        Some(child)
    }
}

impl Solver for Evolution {
    fn fit(&mut self, data: &ObservationStore) {
        self.seen.absorb(data);
        self.parents.clear();
        self.fitness.clear();
        let Some(latest) = data.latest_round() else { return };
        let oldest = latest.saturating_sub(self.params.age_limit - 1);
        for (s, o) in data.iter() {
            if o.round >= oldest {
                self.parents.push(s.clone());
                self.fitness.push(o.reward);
            }
        }
    }

    fn propose(&mut self) -> Sequence {
        let mut last = None;
        for _ in 0..NOVELTY_ATTEMPTS {
            match self.offspring() {
                Some(child) => {
                    if self.seen.mark(&child) {
                        return child;
                    }
                    last = Some(child);
                }
                None => break,
            }
        }
        if let Some(x) = random_novel(self.space, &self.seen, &mut self.rng) {
            self.seen.mark(&x);
            return x;
        }
        last.unwrap_or_else(|| Sequence::random(self.space, &mut self.rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn evo(params: EvolutionParams) -> Evolution {
        Evolution::new(SearchSpace::new(2, 6), params, rng::from_seed(1))
    }

    fn data(entries: &[(Vec<u8>, f64, usize)]) -> ObservationStore {
        let mut s = ObservationStore::new();
        for (x, r, t) in entries {
            s.insert(Sequence(x.clone()), *r, *t).unwrap();
        }
        s
    }

    #[test]
    fn no_operators_reproduce_parent() {
        let mut r = rng::from_seed(0);
        let a = Sequence(vec![0, 1, 0, 1]);
        let b = Sequence(vec![1, 1, 1, 1]);
        let mut c = recombine(&a, &b, 0.0, &mut r);
        assert_eq!(mutate(&mut c, 0.0, 2, &mut r), 0);
        assert_eq!(c, a);
    }

    #[test]
    fn forced_flip_is_complement() {
        let mut r = rng::from_seed(0);
        let mut c = Sequence(vec![0, 1, 1, 0, 0]);
        mutate(&mut c, 1.0, 2, &mut r);
        assert_eq!(c, Sequence(vec![1, 0, 0, 1, 1]));
    }

    #[test]
    fn full_crossover_alternates() {
        let mut r = rng::from_seed(0);
        let a = Sequence(vec![0; 4]);
        let b = Sequence(vec![1; 4]);
        assert_eq!(recombine(&a, &b, 1.0, &mut r), Sequence(vec![0, 1, 0, 1]));
    }

    #[test]
    fn substitute_never_returns_input() {
        let mut r = rng::from_seed(0);
        for t in 0..4u8 {
            for _ in 0..50 {
                assert_ne!(substitute(t, 4, &mut r), t);
            }
        }
    }

    #[test]
    fn full_tournament_reproduces_best() {
        let mut e = evo(EvolutionParams {
            crossover: 0.0,
            mutation: 0.0,
            tournament: 3,
            age_limit: 5,
        });
        e.fit(&data(&[(vec![0; 6], 0.1, 1), (vec![1; 6], 0.9, 1), (vec![0, 1, 0, 1, 0, 1], 0.5, 1)]));
        for _ in 0..20 {
            assert_eq!(e.offspring().unwrap(), Sequence(vec![1; 6]));
        }
    }

    #[test]
    fn old_samples_are_not_parents() {
        let mut e = evo(EvolutionParams {
            crossover: 0.0,
            mutation: 0.0,
            tournament: 1,
            age_limit: 2,
        });
        e.fit(&data(&[(vec![1; 6], 9.0, 1), (vec![0; 6], 0.0, 3), (vec![0, 0, 0, 0, 0, 1], 0.0, 4)]));
        for _ in 0..50 {
            assert_ne!(e.offspring().unwrap(), Sequence(vec![1; 6]));
        }
    }

    #[test]
    fn proposals_avoid_observed() {
        let mut e = evo(EvolutionParams {
            crossover: 0.2,
            mutation: 0.2,
            ..Default::default()
        });
        let d = data(&[(vec![0; 6], 0.1, 0), (vec![1; 6], 0.9, 0)]);
        e.fit(&d);
        for _ in 0..30 {
            assert!(!d.contains(&e.propose()));
        }
    }

    #[test]
    fn tournament_breaks_ties_by_index() {
        let mut r = rng::from_seed(5);
        for _ in 0..20 {
            assert_eq!(tournament(&[1.0, 1.0, 1.0], 3, &mut r), 0);
        }
    }
}
