//! Ising-style objective on a contact map:
//! `f(x) = sum_i phi_i(x_i) + beta * sum_{i<j} C_ij * phi(x_i, x_j)`
//! with `phi_i(a) = substitution[a][reference_i]`.

use crate::error::{Error, Result};
use crate::seq::Sequence;

#[derive(Clone, Debug)]
pub struct IsingOracle {
    reference: Sequence,
    substitution: Vec<Vec<f64>>,
    coupling: Vec<Vec<f64>>,
    /// Unordered contact pairs, `i < j`, each listed once.
    contacts: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    beta: f64,
}

fn check_square(m: &[Vec<f64>], n: usize, what: &str) -> Result<()> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!("{what} must be {n}x{n}")));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Normalises a contact list to sorted unique pairs with `i < j`.
pub fn normalize_contacts(pairs: &[(usize, usize)], length: usize) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        if a == b {
            return Err(Error::invalid(format!("self-contact at position {a}")));
        }
        if a >= length || b >= length {
            return Err(Error::invalid(format!("contact ({a}, {b}) outside length {length}")));
        }
        out.push((a.min(b), a.max(b)));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

impl IsingOracle {
    pub fn new(
        reference: Sequence,
        substitution: Vec<Vec<f64>>,
        coupling: Vec<Vec<f64>>,
        contacts: &[(usize, usize)],
        beta: f64,
    ) -> Result<Self> {
        let v = substitution.len();
        check_square(&substitution, v, "substitution matrix")?;
        check_square(&coupling, v, "coupling block")?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid("beta must be finite and non-negative"));
        }
        if reference.tokens().iter().any(|&t| usize::from(t) >= v) {
            return Err(Error::invalid("reference sequence outside vocabulary"));
        }
        let length = reference.len();
        let contacts = normalize_contacts(contacts, length)?;
        let mut neighbors = vec![Vec::new(); length];
        for &(i, j) in &contacts {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        Ok(Self {
            reference,
            substitution,
            coupling,
            contacts,
            neighbors,
            beta,
        })
    }

    pub fn reference(&self) -> &Sequence {
        &self.reference
    }

    pub fn substitution(&self) -> &[Vec<f64>] {
        &self.substitution
    }

    pub fn coupling(&self) -> &[Vec<f64>] {
        &self.coupling
    }

    pub fn contacts(&self) -> &[(usize, usize)] {
        &self.contacts
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn length(&self) -> usize {
        self.reference.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.substitution.len()
    }

    fn local(&self, pos: usize, tok: u8) -> f64 {
        self.substitution[usize::from(tok)][usize::from(self.reference.0[pos])]
    }

    fn pair(&self, a: u8, b: u8) -> f64 {
        self.coupling[usize::from(a)][usize::from(b)]
    }

    /// `L x |V|` matrix of local terms `phi_i(a)`.
    pub fn local_terms(&self) -> Vec<Vec<f64>> {
        (0..self.length())
            .map(|i| (0..self.vocab_size()).map(|a| self.local(i, a as u8)).collect())
            .collect()
    }

    pub fn score(&self, x: &Sequence) -> f64 {
        let t = x.tokens();
        let local: f64 = t.iter().enumerate().map(|(i, &a)| self.local(i, a)).sum();
        let pair: f64 = self
            .contacts
            .iter()
            .map(|&(i, j)| self.pair(t[i], t[j]))
            .sum();
        local + self.beta * pair
    }

    /// Change in `f` when position `pos` of `x` is set to `tok`, computed from
    /// that position's local term and its contacts only.
    pub fn flip_delta(&self, x: &Sequence, pos: usize, tok: u8) -> f64 {
        let t = x.tokens();
        let old = t[pos];
        let local = self.local(pos, tok) - self.local(pos, old);
        let pair: f64 = self.neighbors[pos]
            .iter()
            .map(|&j| self.pair(tok, t[j]) - self.pair(old, t[j]))
            .sum();
        local + self.beta * pair
    }
}

/// Coupling strength that balances local and pairwise terms:
/// `beta = lambda * sum_i range_i / (n_contacts * range_pair)`, where `range_i`
/// is the spread of position `i`'s local terms and `range_pair` the spread of
/// the coupling block. Zero when there are no contacts.
pub fn compute_beta(
    local_terms: &[Vec<f64>],
    contacts: &[(usize, usize)],
    coupling: &[Vec<f64>],
    lambda: f64,
) -> f64 {
    let spread = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    };
    if contacts.is_empty() {
        return 0.0;
    }
    let local_total: f64 = local_terms
        .iter()
        .map(|row| spread(&mut row.iter().copied()))
        .sum();
    let range_pair = spread(&mut coupling.iter().flatten().copied());
    if range_pair <= 0.0 {
        return 0.0;
    }
    lambda * local_total / (contacts.len() as f64 * range_pair)
}

/// Bundled toy substitution matrix: zero on the diagonal, between -4 and -2
/// elsewhere, symmetric. The diagonal strictly dominates every column, so the
/// reference sequence maximises the local term.
pub fn toy_substitution(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    if a == b {
                        0.0
                    } else {
                        -2.0 - 0.5 * (((7 * (a + b) + a * b) % 5) as f64)
                    }
                })
                .collect()
        })
        .collect()
}

/// Bundled toy coupling block, symmetric with entries in `[-1, 1]`.
pub fn toy_coupling(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    let (a, b) = (a as f64, b as f64);
                    let v = (0.7 * a + 1.3 * b).cos() * (1.3 * a + 0.7 * b).cos();
                    (v * 1e6).round() / 1e6
                })
                .collect()
        })
        .collect()
}
