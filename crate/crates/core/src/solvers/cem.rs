//! Cross-entropy method: refit a generative model on the above-quantile
//! observations, then sample from it.

use rand::Rng as _;

use super::{choice_param, random_novel, real_param, reject_unknown, HyperParams, Seen, Solver};
use crate::error::Result;
use crate::rng::Rng;
use crate::seq::{ObservationStore, SearchSpace, Sequence};
use crate::stats::quantile_threshold;

const NOVELTY_ATTEMPTS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Pssm,
    Markov,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CemParams {
    pub quantile: f64,
    /// Pseudocount added to every count.
    pub smoothing: f64,
    pub model: ModelKind,
}

impl Default for CemParams {
    fn default() -> Self {
        Self {
            quantile: 0.85,
            smoothing: 1.0,
            model: ModelKind::Pssm,
        }
    }
}

impl CemParams {
    pub fn from_params(p: &HyperParams) -> Result<Self> {
        reject_unknown(p, &["quantile", "smoothing", "model"])?;
        let d = Self::default();
        let model = match choice_param(p, "model", "pssm", &["pssm", "markov"])? {
            "markov" => ModelKind::Markov,
            _ => ModelKind::Pssm,
        };
        Ok(Self {
            quantile: real_param(p, "quantile", d.quantile, 0.0, 1.0)?,
            smoothing: real_param(p, "smoothing", d.smoothing, 0.0, 1e6)?,
            model,
        })
    }
}

fn smoothed_row(counts: &[f64], alpha: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + alpha * counts.len() as f64;
    if total <= 0.0 {
        return vec![1.0 / counts.len() as f64; counts.len()];
    }
    counts.iter().map(|c| (c + alpha) / total).collect()
}

fn draw(row: &[f64], rng: &mut Rng) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u8;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u8
}

/// Independent categorical distribution per position, `L x |V|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pssm {
    rows: Vec<Vec<f64>>,
}

impl Pssm {
    /// `(count + alpha) / (n + alpha * |V|)` per position.
    pub fn fit(selected: &[&Sequence], space: SearchSpace, alpha: f64) -> Self {
        let mut counts = vec![vec![0.0; space.vocab_size]; space.length];
        for s in selected {
            for (p, &t) in s.0.iter().enumerate() {
                counts[p][usize::from(t)] += 1.0;
            }
        }
        Self {
            rows: counts.iter().map(|c| smoothed_row(c, alpha)).collect(),
        }
    }

    pub fn uniform(space: SearchSpace) -> Self {
        Self {
            rows: vec![vec![1.0 / space.vocab_size as f64; space.vocab_size]; space.length],
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn sample(&self, rng: &mut Rng) -> Sequence {
        Sequence(self.rows.iter().map(|r| draw(r, rng)).collect())
    }

    pub fn prob(&self, x: &Sequence) -> f64 {
        x.0.iter().zip(&self.rows).map(|(&t, r)| r[usize::from(t)]).product()
    }
}

/// First-order chain over adjacent positions: a start distribution and one
/// `|V| x |V|` transition matrix per later position.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    start: Vec<f64>,
    transitions: Vec<Vec<Vec<f64>>>,
}

impl MarkovChain {
    pub fn fit(selected: &[&Sequence], space: SearchSpace, alpha: f64) -> Self {
        let v = space.vocab_size;
        let mut start = vec![0.0; v];
        let mut counts = vec![vec![vec![0.0; v]; v]; space.length.saturating_sub(1)];
        for s in selected {
            start[usize::from(s.0[0])] += 1.0;
            for p in 1..s.len() {
                counts[p - 1][usize::from(s.0[p - 1])][usize::from(s.0[p])] += 1.0;
            }
        }
        Self {
            start: smoothed_row(&start, alpha),
            transitions: counts
                .iter()
                .map(|m| m.iter().map(|c| smoothed_row(c, alpha)).collect())
                .collect(),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Sequence {
        let mut x = Vec::with_capacity(self.transitions.len() + 1);
        x.push(draw(&self.start, rng));
        for m in &self.transitions {
            let prev = usize::from(*x.last().expect("non-empty"));
            x.push(draw(&m[prev], rng));
        }
        Sequence(x)
    }

    pub fn prob(&self, x: &Sequence) -> f64 {
        let mut p = self.start[usize::from(x.0[0])];
        for (i, m) in self.transitions.iter().enumerate() {
            p *= m[usize::from(x.0[i])][usize::from(x.0[i + 1])];
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GenerativeModel {
    Pssm(Pssm),
    Markov(MarkovChain),
}

impl GenerativeModel {
    pub fn sample(&self, rng: &mut Rng) -> Sequence {
        match self {
            GenerativeModel::Pssm(m) => m.sample(rng),
            GenerativeModel::Markov(m) => m.sample(rng),
        }
    }

    pub fn prob(&self, x: &Sequence) -> f64 {
        match self {
            GenerativeModel::Pssm(m) => m.prob(x),
            GenerativeModel::Markov(m) => m.prob(x),
        }
    }
}

/// Observations with reward at or above the nearest-rank `q` quantile.
pub fn select_elites(data: &ObservationStore, q: f64) -> Vec<&Sequence> {
    let rewards = data.rewards();
    let Some(threshold) = quantile_threshold(&rewards, q) else {
        return Vec::new();
    };
    data.iter()
        .filter(|(_, o)| o.reward >= threshold)
        .map(|(s, _)| s)
        .collect()
}

pub struct CrossEntropy {
    space: SearchSpace,
    params: CemParams,
    rng: Rng,
    seen: Seen,
    model: Option<GenerativeModel>,
}

impl CrossEntropy {
    pub fn new(space: SearchSpace, params: CemParams, rng: Rng) -> Self {
        Self {
            space,
            params,
            rng,
            seen: Seen::default(),
            model: None,
        }
    }

    pub fn model(&self) -> Option<&GenerativeModel> {
        self.model.as_ref()
    }
}

impl Solver for CrossEntropy {
    fn fit(&mut self, data: &ObservationStore) {
        self.seen.absorb(data);
        let mut elites = select_elites(data, self.params.quantile);
        if elites.is_empty() {
            elites.extend(data.best().map(|(s, _)| s));
        }
        if elites.is_empty() {
            self.model = None;
            return;
        }
        let alpha = self.params.smoothing;
        self.model = Some(match self.params.model {
            ModelKind::Pssm => GenerativeModel::Pssm(Pssm::fit(&elites, self.space, alpha)),
            ModelKind::Markov => GenerativeModel::Markov(MarkovChain::fit(&elites, self.space, alpha)),
        });
    }

    fn propose(&mut self) -> Sequence {
        if let Some(model) = &self.model {
            let mut last = None;
            for _ in 0..NOVELTY_ATTEMPTS {
                let x = model.sample(&mut self.rng);
                if self.seen.mark(&x) {
                    return x;
                }
                last = Some(x);
            }
            if let Some(x) = random_novel(self.space, &self.seen, &mut self.rng) {
                self.seen.mark(&x);
                return x;
            }
            return last.expect("at least one sample");
        }
        match random_novel(self.space, &self.seen, &mut self.rng) {
            Some(x) => {
                self.seen.mark(&x);
                x
            }
            None => Sequence::random(self.space, &mut self.rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::seq::Vocabulary;

    #[test]
    fn quantile_selection_nearest_rank() {
        let mut d = ObservationStore::new();
        let space = SearchSpace::new(4, 3);
        for i in 0..10 {
            d.insert(Sequence::from_index(i, space), i as f64, 0).unwrap();
        }
        let elites = select_elites(&d, 0.8);
        assert_eq!(elites.len(), 2);
        assert_eq!(elites, vec![&Sequence::from_index(8, space), &Sequence::from_index(9, space)]);
    }

    #[test]
    fn mle_counts() {
        let v = Vocabulary::letters(2).unwrap();
        let s: Vec<Sequence> = ["AA", "AA", "AB"].iter().map(|x| v.parse(x).unwrap()).collect();
        let refs: Vec<&Sequence> = s.iter().collect();
        let m = Pssm::fit(&refs, SearchSpace::new(2, 2), 0.0);
        assert_eq!(m.rows()[0], vec![1.0, 0.0]);
        assert!((m.rows()[1][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.rows()[1][1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn laplace_on_empty_counts_is_uniform() {
        let m = Pssm::fit(&[], SearchSpace::new(4, 2), 1.0);
        for row in m.rows() {
            assert_eq!(row, &vec![0.25; 4]);
        }
    }

    #[test]
    fn rows_normalised_and_positive() {
        let mut r = rng::from_seed(4);
        let space = SearchSpace::new(5, 7);
        let s: Vec<Sequence> = (0..13).map(|_| Sequence::random(space, &mut r)).collect();
        let refs: Vec<&Sequence> = s.iter().collect();
        let m = Pssm::fit(&refs, space, 0.3);
        for row in m.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn one_hot_rows_give_modal_sequence() {
        let x = Sequence(vec![2, 0, 3, 1]);
        let m = Pssm::fit(&[&x], SearchSpace::new(4, 4), 0.0);
        let mut r = rng::from_seed(1);
        for _ in 0..20 {
            assert_eq!(m.sample(&mut r), x);
        }
        let mc = MarkovChain::fit(&[&x], SearchSpace::new(4, 4), 0.0);
        assert_eq!(mc.sample(&mut r), x);
        assert_eq!(mc.prob(&x), 1.0);
    }

    #[test]
    fn uniform_probability() {
        let m = Pssm::uniform(SearchSpace::new(4, 8));
        assert!((m.prob(&Sequence(vec![1; 8])) - 4f64.powi(-8)).abs() < 1e-18);
    }

    #[test]
    fn sampling_frequency_within_binomial_bound() {
        // sd of the frequency is sqrt(0.09 / 10000) = 0.003, so +-0.02 is > 6 sd
        let m = Pssm {
            rows: vec![vec![0.9, 0.1]],
        };
        let mut r = rng::from_seed(12);
        let zeros = (0..10_000).filter(|_| m.sample(&mut r).0[0] == 0).count();
        let f = zeros as f64 / 10_000.0;
        assert!((0.88..=0.92).contains(&f), "{f}");
    }

    #[test]
    fn markov_rows_normalised() {
        let mut r = rng::from_seed(4);
        let space = SearchSpace::new(3, 6);
        let s: Vec<Sequence> = (0..9).map(|_| Sequence::random(space, &mut r)).collect();
        let refs: Vec<&Sequence> = s.iter().collect();
        let m = MarkovChain::fit(&refs, space, 0.5);
        let total: f64 = (0..space.size() as usize)
            .map(|i| m.prob(&Sequence::from_index(i, space)))
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn proposals_are_novel() {
        let space = SearchSpace::new(4, 6);
        let mut d = ObservationStore::new();
        let mut r = rng::from_seed(2);
        for i in 0..40 {
            let _ = d.insert(Sequence::random(space, &mut r), i as f64, 0);
        }
        let mut c = CrossEntropy::new(space, CemParams::default(), rng::from_seed(3));
        c.fit(&d);
        for _ in 0..50 {
            assert!(!d.contains(&c.propose()));
        }
    }
}
