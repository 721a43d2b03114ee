//! Sequences over a finite vocabulary and the shared observation archive.

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Ordered set of single-character tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<char>,
}

impl Vocabulary {
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self> {
        let symbols: Vec<char> = symbols.into_iter().collect();
        if symbols.len() < 2 {
            return Err(Error::invalid("vocabulary needs at least two symbols"));
        }
        if symbols.len() > usize::from(u8::MAX) + 1 {
            return Err(Error::invalid("vocabulary larger than 256 symbols"));
        }
        let mut seen = HashSet::new();
        for &c in &symbols {
            if c.is_whitespace() {
                return Err(Error::invalid("vocabulary symbols cannot be whitespace"));
            }
            if !seen.insert(c) {
                return Err(Error::invalid(format!("duplicate vocabulary symbol `{c}`")));
            }
        }
        Ok(Self { symbols })
    }

    pub fn dna() -> Self {
        Self::new("ACGT".chars()).expect("static vocabulary")
    }

    pub fn protein() -> Self {
        Self::new("ACDEFGHIKLMNPQRSTVWY".chars()).expect("static vocabulary")
    }

    /// First `n` letters of `A..Z`; handy for toy problems.
    pub fn letters(n: usize) -> Result<Self> {
        if n > 26 {
            return Err(Error::invalid("letters() supports at most 26 symbols"));
        }
        Self::new((b'A'..b'A' + n as u8).map(char::from))
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn index_of(&self, c: char) -> Option<u8> {
        self.symbols.iter().position(|&s| s == c).map(|i| i as u8)
    }

    /// Parses a token string without separators.
    pub fn parse(&self, text: &str) -> Result<Sequence> {
        text.chars()
            .map(|c| {
                self.index_of(c)
                    .ok_or_else(|| Error::invalid(format!("token `{c}` not in vocabulary")))
            })
            .collect::<Result<Vec<u8>>>()
            .map(Sequence)
    }

    pub fn render(&self, seq: &Sequence) -> String {
        seq.0.iter().map(|&t| self.symbols[usize::from(t)]).collect()
    }

    pub fn as_string(&self) -> String {
        self.symbols.iter().collect()
    }
}

/// A sequence stored as vocabulary indices.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sequence(pub Vec<u8>);

impl Sequence {
    pub fn new(tokens: Vec<u8>) -> Self {
        Self(tokens)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[u8] {
        &self.0
    }

    pub fn reversed(&self) -> Sequence {
        Sequence(self.0.iter().rev().copied().collect())
    }

    pub fn random(space: SearchSpace, rng: &mut Rng) -> Sequence {
        Sequence(
            (0..space.length)
                .map(|_| rng.random_range(0..space.vocab_size) as u8)
                .collect(),
        )
    }

    /// Checks length and token range against a search space.
    pub fn validate(&self, space: SearchSpace) -> std::result::Result<(), String> {
        if self.len() != space.length {
            return Err(format!("length {} != {}", self.len(), space.length));
        }
        if let Some(&t) = self.0.iter().find(|&&t| usize::from(t) >= space.vocab_size) {
            return Err(format!("token index {t} >= vocabulary size {}", space.vocab_size));
        }
        Ok(())
    }

    /// Rank of this sequence in lexicographic enumeration of `V^L`
    /// (position 0 most significant).
    pub fn to_index(&self, vocab_size: usize) -> usize {
        self.0
            .iter()
            .fold(0usize, |acc, &t| acc * vocab_size + usize::from(t))
    }

    pub fn from_index(mut index: usize, space: SearchSpace) -> Sequence {
        let mut tokens = vec![0u8; space.length];
        for slot in tokens.iter_mut().rev() {
            *slot = (index % space.vocab_size) as u8;
            index /= space.vocab_size;
        }
        Sequence(tokens)
    }
}

impl fmt::Debug for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sequence{:?}", self.0)
    }
}

/// Shape of the search space `V^L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchSpace {
    pub vocab_size: usize,
    pub length: usize,
}

impl SearchSpace {
    pub fn new(vocab_size: usize, length: usize) -> Self {
        Self { vocab_size, length }
    }

    /// `|V|^L`, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        let mut total: u128 = 1;
        for _ in 0..self.length {
            total = total.saturating_mul(self.vocab_size as u128);
        }
        total
    }

    pub fn features(&self) -> usize {
        self.vocab_size * self.length
    }
}

pub fn hamming_distance(a: &Sequence, b: &Sequence) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "hamming distance of sequences with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count())
}

/// Levenshtein distance with unit costs.
pub fn edit_distance(a: &Sequence, b: &Sequence) -> usize {
    let (a, b) = (a.tokens(), b.tokens());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ta) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &tb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ta != tb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Position-major one-hot encoding: entries `[p * |V|, (p + 1) * |V|)` hold
/// position `p`'s indicator.
pub fn one_hot_encode(x: &Sequence, vocab_size: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len() * vocab_size];
    for (p, &t) in x.0.iter().enumerate() {
        out[p * vocab_size + usize::from(t)] = 1.0;
    }
    out
}

/// Indices of the active one-hot features of `x`.
pub fn active_features(x: &Sequence, vocab_size: usize) -> impl Iterator<Item = usize> + '_ {
    x.0.iter()
        .enumerate()
        .map(move |(p, &t)| p * vocab_size + usize::from(t))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub reward: f64,
    /// Round in which the sequence was evaluated; 0 for initial data.
    pub round: usize,
}

/// Deduplicated archive of evaluated sequences, in insertion order.
#[derive(Clone, Debug, Default)]
pub struct ObservationStore {
    entries: IndexMap<Sequence, Observation>,
}

impl ObservationStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a new observation. Re-inserting a known sequence is an error:
    /// stored rewards are immutable.
    pub fn insert(&mut self, seq: Sequence, reward: f64, round: usize) -> Result<()> {
        if self.entries.contains_key(&seq) {
            return Err(Error::invalid(format!("{seq:?} already observed")));
        }
        self.entries.insert(seq, Observation { reward, round });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, seq: &Sequence) -> bool {
        self.entries.contains_key(seq)
    }

    pub fn get(&self, seq: &Sequence) -> Option<&Observation> {
        self.entries.get(seq)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&Sequence, &Observation)> {
        self.entries.iter()
    }

    pub fn sequences(&self) -> impl ExactSizeIterator<Item = &Sequence> {
        self.entries.keys()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.entries.values().map(|o| o.reward).collect()
    }

    pub fn max_reward(&self) -> Option<f64> {
        self.entries.values().map(|o| o.reward).reduce(f64::max)
    }

    /// Highest reward, earliest insertion on ties.
    pub fn best(&self) -> Option<(&Sequence, f64)> {
        let mut best: Option<(&Sequence, f64)> = None;
        for (s, o) in &self.entries {
            if best.is_none_or(|(_, r)| o.reward > r) {
                best = Some((s, o.reward));
            }
        }
        best
    }

    pub fn latest_round(&self) -> Option<usize> {
        self.entries.values().map(|o| o.round).max()
    }

    /// Entries sorted by reward, descending; stable in insertion order.
    pub fn ranked(&self) -> Vec<(&Sequence, f64)> {
        let mut v: Vec<(&Sequence, f64)> = self.entries.iter().map(|(s, o)| (s, o.reward)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ab(s: &str) -> Sequence {
        Vocabulary::letters(2).unwrap().parse(s).unwrap()
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_distance(&ab("AA"), &ab("AA")).unwrap(), 0);
        assert_eq!(hamming_distance(&ab("AA"), &ab("AB")).unwrap(), 1);
        assert_eq!(hamming_distance(&ab("AB"), &ab("BA")).unwrap(), 2);
        assert!(hamming_distance(&ab("AB"), &ab("A")).is_err());
    }

    #[test]
    fn edit_examples() {
        assert_eq!(edit_distance(&ab("AAA"), &ab("AAA")), 0);
        assert_eq!(edit_distance(&ab("AAA"), &ab("ABA")), 1);
        assert_eq!(edit_distance(&ab("AB"), &ab("BA")), 2);
        assert_eq!(edit_distance(&ab("AB"), &ab("")), 2);
        assert_eq!(edit_distance(&ab("ABAB"), &ab("BABA")), 2);
    }

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot_encode(&ab("A"), 2), vec![1.0, 0.0]);
        assert_eq!(one_hot_encode(&ab("AB"), 2), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn vocabulary_rejects_bad_symbols() {
        assert!(Vocabulary::new("A".chars()).is_err());
        assert!(Vocabulary::new("AA".chars()).is_err());
        assert!(Vocabulary::new("A C".chars()).is_err());
        let v = Vocabulary::dna();
        assert!(v.parse("ACGX").is_err());
        assert_eq!(v.render(&v.parse("GATTACA").unwrap()), "GATTACA");
    }

    #[test]
    fn store_keeps_first_reward() {
        let mut store = ObservationStore::new();
        store.insert(ab("AB"), 1.0, 1).unwrap();
        assert!(store.insert(ab("AB"), 2.0, 2).is_err());
        assert_eq!(store.get(&ab("AB")).unwrap().reward, 1.0);
        store.insert(ab("BB"), 1.0, 2).unwrap();
        // ties resolve to the earliest insertion
        assert_eq!(store.best().unwrap().0, &ab("AB"));
    }

    #[test]
    fn index_roundtrip() {
        let space = SearchSpace::new(4, 5);
        for i in [0usize, 1, 17, 1023] {
            assert_eq!(Sequence::from_index(i, space).to_index(4), i);
        }
        assert_eq!(space.size(), 1024);
    }

    fn seq_strategy(len: usize) -> impl Strategy<Value = Sequence> {
        proptest::collection::vec(0u8..4, len).prop_map(Sequence)
    }

    proptest! {
        #[test]
        fn hamming_bounds_edit(a in seq_strategy(7), b in seq_strategy(7)) {
            let h = hamming_distance(&a, &b).unwrap();
            let e = edit_distance(&a, &b);
            prop_assert!(e <= h);
            prop_assert!(h <= 7);
            prop_assert_eq!(h == 0, a == b);
            prop_assert_eq!(e, edit_distance(&b, &a));
        }

        #[test]
        fn edit_triangle(a in seq_strategy(6), b in seq_strategy(6), c in seq_strategy(6)) {
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        }

        #[test]
        fn one_hot_injective(a in seq_strategy(5), b in seq_strategy(5)) {
            let (ea, eb) = (one_hot_encode(&a, 4), one_hot_encode(&b, 4));
            prop_assert_eq!(ea.iter().sum::<f64>(), 5.0);
            prop_assert_eq!(ea == eb, a == b);
        }
    }
}
