//! Profile hidden Markov model scored by the forward algorithm.
//!
//! States follow the usual profile layout: a begin state (`M_0`), match
//! states `M_1..M_M`, insert states `I_0..I_M` and silent delete states
//! `D_1..D_M`. Column `k` (0..=M) holds the transitions out of `M_k`, `I_k`
//! and `D_k` towards `M_{k+1}`, `I_k` and `D_{k+1}`; at the last column
//! "towards `M_{M+1}`" means the end state and delete transitions are zero.

use std::collections::HashSet;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::seq::{SearchSpace, Sequence};
use crate::stats::{log_sum_exp, median};

pub const MATCH: usize = 0;
pub const INSERT: usize = 1;
pub const DELETE: usize = 2;

/// `[from][to]` over `{MATCH, INSERT, DELETE}`.
pub type Transition = [[f64; 3]; 3];

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ProfileHmm {
    match_emissions: Vec<Vec<f64>>,
    insert_emissions: Vec<Vec<f64>>,
    transitions: Vec<Transition>,
    log_match: Vec<Vec<f64>>,
    log_insert: Vec<Vec<f64>>,
    log_trans: Vec<Transition>,
}

fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid(format!("{what}: probabilities outside [0, 1]")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::invalid(format!("{what}: sums to {total}, expected 1")));
    }
    Ok(())
}

impl ProfileHmm {
    pub fn new(
        match_emissions: Vec<Vec<f64>>,
        insert_emissions: Vec<Vec<f64>>,
        transitions: Vec<Transition>,
    ) -> Result<Self> {
        let m = match_emissions.len();
        if m == 0 {
            return Err(Error::invalid("profile HMM needs at least one match state"));
        }
        if insert_emissions.len() != m + 1 || transitions.len() != m + 1 {
            return Err(Error::invalid(format!(
                "expected {} insert rows and transition columns for {m} match states",
                m + 1
            )));
        }
        let v = match_emissions[0].len();
        for (k, row) in match_emissions.iter().chain(&insert_emissions).enumerate() {
            if row.len() != v {
                return Err(Error::invalid("emission rows differ in width"));
            }
            check_distribution(row, &format!("emission row {k}"))?;
        }
        for (k, t) in transitions.iter().enumerate() {
            check_distribution(&t[MATCH], &format!("column {k} match transitions"))?;
            check_distribution(&t[INSERT], &format!("column {k} insert transitions"))?;
            if k > 0 {
                check_distribution(&t[DELETE], &format!("column {k} delete transitions"))?;
            }
            if k == m && t.iter().any(|row| row[DELETE] != 0.0) {
                return Err(Error::invalid("last column cannot transition to a delete state"));
            }
        }
        let log_rows = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(|&p| ln(p)).collect()).collect()
        };
        let log_trans = transitions
            .iter()
            .map(|t| t.map(|row| row.map(ln)))
            .collect();
        Ok(Self {
            log_match: log_rows(&match_emissions),
            log_insert: log_rows(&insert_emissions),
            log_trans,
            match_emissions,
            insert_emissions,
            transitions,
        })
    }

    pub fn match_states(&self) -> usize {
        self.match_emissions.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.match_emissions[0].len()
    }

    pub fn match_emissions(&self) -> &[Vec<f64>] {
        &self.match_emissions
    }

    pub fn insert_emissions(&self) -> &[Vec<f64>] {
        &self.insert_emissions
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Natural-log probability that the model emits exactly `x`, summed over
    /// all state paths. Returns negative infinity for impossible sequences.
    pub fn log_likelihood(&self, x: &Sequence) -> f64 {
        let m = self.match_states();
        let l = x.len();
        let t = x.tokens();
        let neg = f64::NEG_INFINITY;
        // [k][i]: emitted the first i tokens and currently in state k
        let mut fm = vec![vec![neg; l + 1]; m + 1];
        let mut fi = vec![vec![neg; l + 1]; m + 1];
        let mut fd = vec![vec![neg; l + 1]; m + 1];
        fm[0][0] = 0.0;
        for i in 0..=l {
            for k in 0..=m {
                if i >= 1 && k >= 1 {
                    let tr = &self.log_trans[k - 1];
                    let e = self.log_match[k - 1][usize::from(t[i - 1])];
                    fm[k][i] = e + log_sum_exp(&[
                        fm[k - 1][i - 1] + tr[MATCH][MATCH],
                        fi[k - 1][i - 1] + tr[INSERT][MATCH],
                        fd[k - 1][i - 1] + tr[DELETE][MATCH],
                    ]);
                }
                if i >= 1 {
                    let tr = &self.log_trans[k];
                    let e = self.log_insert[k][usize::from(t[i - 1])];
                    fi[k][i] = e + log_sum_exp(&[
                        fm[k][i - 1] + tr[MATCH][INSERT],
                        fi[k][i - 1] + tr[INSERT][INSERT],
                        fd[k][i - 1] + tr[DELETE][INSERT],
                    ]);
                }
                if k >= 1 {
                    let tr = &self.log_trans[k - 1];
                    fd[k][i] = log_sum_exp(&[
                        fm[k - 1][i] + tr[MATCH][DELETE],
                        fi[k - 1][i] + tr[INSERT][DELETE],
                        fd[k - 1][i] + tr[DELETE][DELETE],
                    ]);
                }
            }
        }
        let tr = &self.log_trans[m];
        log_sum_exp(&[
            fm[m][l] + tr[MATCH][MATCH],
            fi[m][l] + tr[INSERT][MATCH],
            fd[m][l] + tr[DELETE][MATCH],
        ])
    }

    /// Draws one sequence of arbitrary length from the generative model.
    /// Returns `None` if the path grows past `max_len` tokens.
    pub fn sample(&self, rng: &mut Rng, max_len: usize) -> Option<Vec<u8>> {
        let m = self.match_states();
        let mut out = Vec::new();
        let (mut state, mut k) = (MATCH, 0usize);
        loop {
            let next = categorical(&self.transitions[k][state], rng);
            match next {
                MATCH => {
                    if k == m {
                        return Some(out);
                    }
                    out.push(categorical(&self.match_emissions[k], rng) as u8);
                    k += 1;
                }
                INSERT => out.push(categorical(&self.insert_emissions[k], rng) as u8),
                _ => k += 1,
            }
            state = next;
            if out.len() > max_len {
                return None;
            }
        }
    }

    /// Samples a fixed-length sequence by rejection, falling back to a
    /// uniform draw when `attempts` samples all have the wrong length.
    pub fn sample_fixed_length(&self, length: usize, attempts: usize, rng: &mut Rng) -> (Sequence, bool) {
        for _ in 0..attempts {
            if let Some(s) = self.sample(rng, length) {
                if s.len() == length {
                    return (Sequence(s), true);
                }
            }
        }
        (Sequence::random(SearchSpace::new(self.vocab_size(), length), rng), false)
    }

    /// Initial dataset of `n` unique length-`length` sequences whose
    /// log-likelihood lies strictly below the median of a reference pool of
    /// `10 * n` sampled sequences.
    pub fn init_dataset(&self, n: usize, length: usize, seed: u64) -> Result<Vec<(Sequence, f64)>> {
        if n == 0 {
            return Err(Error::invalid("init dataset size must be at least 1"));
        }
        const ATTEMPTS: usize = 200;
        let mut rng = rng::stream(seed, "hmm/init");
        let pool: Vec<(Sequence, f64)> = (0..10 * n)
            .map(|_| {
                let (s, _) = self.sample_fixed_length(length, ATTEMPTS, &mut rng);
                let ll = self.log_likelihood(&s);
                (s, ll)
            })
            .collect();
        let cutoff = median(&pool.iter().map(|p| p.1).collect::<Vec<_>>());
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(n);
        for (s, ll) in pool {
            if out.len() == n {
                break;
            }
            if ll < cutoff && seen.insert(s.clone()) {
                out.push((s, ll));
            }
        }
        let mut retries = 0;
        while out.len() < n {
            if retries >= 100 * n {
                return Err(Error::InitDataset(format!(
                    "found only {} of {n} unique sequences below the median log-likelihood {cutoff}",
                    out.len()
                )));
            }
            retries += 1;
            let (s, _) = self.sample_fixed_length(length, ATTEMPTS, &mut rng);
            let ll = self.log_likelihood(&s);
            if ll < cutoff && seen.insert(s.clone()) {
                out.push((s, ll));
            }
        }
        Ok(out)
    }

    /// Random profile HMM: emissions drawn from symmetric Dirichlets, match
    /// self-transitions concentrated around `1 - 2 * indel_rate`.
    pub fn random(params: &HmmParams, rng: &mut Rng) -> Result<Self> {
        let m = params.match_states;
        let v = params.vocab_size;
        if m == 0 || v < 2 {
            return Err(Error::invalid("random HMM needs match_states >= 1 and vocab >= 2"));
        }
        if !(params.indel_rate > 0.0 && params.indel_rate < 0.5) {
            return Err(Error::invalid("indel_rate must lie in (0, 0.5)"));
        }
        let match_emissions = (0..m)
            .map(|_| dirichlet(&vec![params.match_concentration; v], rng))
            .collect::<Result<Vec<_>>>()?;
        let insert_emissions = (0..=m)
            .map(|_| dirichlet(&vec![params.insert_concentration; v], rng))
            .collect::<Result<Vec<_>>>()?;
        let c = params.transition_concentration;
        let r = params.indel_rate;
        let stay = 1.0 - 2.0 * r;
        let mut transitions = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let mut t: Transition = [[0.0; 3]; 3];
            t[MATCH] = dirichlet(&[c * stay, c * r, c * r], rng)?.try_into().expect("3 entries");
            t[INSERT] = dirichlet(&[c * 0.6, c * 0.4, c * r], rng)?.try_into().expect("3 entries");
            if k > 0 {
                t[DELETE] = dirichlet(&[c * 0.6, c * r, c * 0.4], rng)?.try_into().expect("3 entries");
            }
            if k == m {
                for (from, row) in t.iter_mut().enumerate() {
                    if from == DELETE && k == 0 {
                        continue;
                    }
                    row[DELETE] = 0.0;
                    let total = row[MATCH] + row[INSERT];
                    row[MATCH] /= total;
                    row[INSERT] = 1.0 - row[MATCH];
                }
            }
            transitions.push(t);
        }
        Self::new(match_emissions, insert_emissions, transitions)
    }
}

/// Generator parameters for [`ProfileHmm::random`].
#[derive(Clone, Debug)]
pub struct HmmParams {
    pub match_states: usize,
    pub vocab_size: usize,
    pub match_concentration: f64,
    pub insert_concentration: f64,
    pub transition_concentration: f64,
    pub indel_rate: f64,
}

fn categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Dirichlet draw via normalised Gamma variates; the last entry absorbs
/// rounding so the row sums to one exactly.
pub(crate) fn dirichlet(alpha: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    let mut draws = Vec::with_capacity(alpha.len());
    for &a in alpha {
        let g = Gamma::new(a, 1.0).map_err(|e| Error::invalid(format!("gamma({a}): {e}")))?;
        draws.push(g.sample(rng).max(1e-300));
    }
    let total: f64 = draws.iter().sum();
    let mut probs: Vec<f64> = draws.iter().map(|d| d / total).collect();
    let head: f64 = probs[..probs.len() - 1].iter().sum();
    *probs.last_mut().expect("non-empty") = (1.0 - head).max(0.0);
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::Vocabulary;

    fn single_state(emission: Vec<f64>) -> ProfileHmm {
        let mut t0: Transition = [[0.0; 3]; 3];
        t0[MATCH] = [1.0, 0.0, 0.0];
        t0[INSERT] = [1.0, 0.0, 0.0];
        let mut t1 = t0;
        t1[DELETE] = [1.0, 0.0, 0.0];
        ProfileHmm::new(vec![emission], vec![vec![0.5, 0.5]; 2], vec![t0, t1]).unwrap()
    }

    #[test]
    fn certain_emission() {
        let h = single_state(vec![1.0, 0.0]);
        let v = Vocabulary::letters(2).unwrap();
        assert_eq!(h.log_likelihood(&v.parse("A").unwrap()), 0.0);
        assert_eq!(h.log_likelihood(&v.parse("B").unwrap()), f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_emission() {
        let h = single_state(vec![0.5, 0.5]);
        let v = Vocabulary::letters(2).unwrap();
        assert!((h.log_likelihood(&v.parse("A").unwrap()) - 0.5f64.ln()).abs() < 1e-15);
    }

    /// Probability of emitting `x[pos..]` and then ending, summed over every
    /// state path starting from `state` in column `k`.
    fn enumerate_paths(h: &ProfileHmm, x: &[u8], state: usize, k: usize, pos: usize) -> f64 {
        let m = h.match_states();
        let t = &h.transitions()[k][state];
        let mut total = 0.0;
        if t[MATCH] > 0.0 {
            if k == m {
                if pos == x.len() {
                    total += t[MATCH];
                }
            } else if pos < x.len() {
                let e = h.match_emissions()[k][usize::from(x[pos])];
                total += t[MATCH] * e * enumerate_paths(h, x, MATCH, k + 1, pos + 1);
            }
        }
        if t[INSERT] > 0.0 && pos < x.len() {
            let e = h.insert_emissions()[k][usize::from(x[pos])];
            total += t[INSERT] * e * enumerate_paths(h, x, INSERT, k, pos + 1);
        }
        if t[DELETE] > 0.0 && k < m {
            total += t[DELETE] * enumerate_paths(h, x, DELETE, k + 1, pos);
        }
        total
    }

    #[test]
    fn forward_matches_path_enumeration() {
        let mut r = rng::from_seed(17);
        for m in 1..=3 {
            let params = HmmParams {
                match_states: m,
                vocab_size: 2,
                match_concentration: 1.0,
                insert_concentration: 1.0,
                transition_concentration: 3.0,
                indel_rate: 0.2,
            };
            let h = ProfileHmm::random(&params, &mut r).unwrap();
            for l in 1..=3 {
                let space = SearchSpace::new(2, l);
                for idx in 0..space.size() as usize {
                    let x = Sequence::from_index(idx, space);
                    let expected = enumerate_paths(&h, x.tokens(), MATCH, 0, 0).ln();
                    let got = h.log_likelihood(&x);
                    assert!((got - expected).abs() < 1e-9, "m={m} x={x:?}: {got} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn rejects_unnormalised_rows() {
        let mut t: Transition = [[0.0; 3]; 3];
        t[MATCH] = [0.9, 0.0, 0.0];
        t[INSERT] = [1.0, 0.0, 0.0];
        assert!(ProfileHmm::new(vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]; 2], vec![t, t]).is_err());
    }

    #[test]
    fn random_models_are_valid_and_finite() {
        let mut r = rng::from_seed(3);
        let params = HmmParams {
            match_states: 6,
            vocab_size: 4,
            match_concentration: 0.3,
            insert_concentration: 2.0,
            transition_concentration: 20.0,
            indel_rate: 0.05,
        };
        let h = ProfileHmm::random(&params, &mut r).unwrap();
        for _ in 0..20 {
            let s = Sequence::random(SearchSpace::new(4, 6), &mut r);
            let ll = h.log_likelihood(&s);
            assert!(ll.is_finite() && ll <= 0.0);
        }
    }

    #[test]
    fn init_dataset_below_median_and_deterministic() {
        let mut r = rng::from_seed(5);
        let params = HmmParams {
            match_states: 6,
            vocab_size: 4,
            match_concentration: 0.5,
            insert_concentration: 2.0,
            transition_concentration: 20.0,
            indel_rate: 0.05,
        };
        let h = ProfileHmm::random(&params, &mut r).unwrap();
        let a = h.init_dataset(20, 6, 11).unwrap();
        let b = h.init_dataset(20, 6, 11).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(
            a.iter().map(|p| &p.0).collect::<Vec<_>>(),
            b.iter().map(|p| &p.0).collect::<Vec<_>>()
        );
        let unique: HashSet<_> = a.iter().map(|p| p.0.clone()).collect();
        assert_eq!(unique.len(), 20);
        for (s, ll) in &a {
            assert_eq!(*ll, h.log_likelihood(s));
        }
    }
}
