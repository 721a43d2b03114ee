//! In-silico objective functions and the problem-instance container.

pub mod format;
pub mod hmm;
pub mod ising;
pub mod lookup;
pub mod randnet;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::seq::{SearchSpace, Sequence, Vocabulary};

pub use hmm::ProfileHmm;
pub use ising::IsingOracle;
pub use lookup::LookupOracle;
pub use randnet::{Architecture, RandomNetOracle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OracleKind {
    Ising,
    Hmm,
    RandomMlp,
    RandomRnn,
    Lookup,
}

impl OracleKind {
    pub const ALL: [OracleKind; 5] = [
        OracleKind::Ising,
        OracleKind::Hmm,
        OracleKind::RandomMlp,
        OracleKind::RandomRnn,
        OracleKind::Lookup,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OracleKind::Ising => "ising",
            OracleKind::Hmm => "hmm",
            OracleKind::RandomMlp => "random_mlp",
            OracleKind::RandomRnn => "random_rnn",
            OracleKind::Lookup => "lookup",
        }
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OracleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown oracle kind `{s}` (expected ising, hmm, random_mlp, random_rnn or lookup)")))
    }
}

#[derive(Clone, Debug)]
pub enum Oracle {
    Ising(IsingOracle),
    Hmm(ProfileHmm),
    RandomNet(RandomNetOracle),
    Lookup(LookupOracle),
}

impl Oracle {
    pub fn kind(&self) -> OracleKind {
        match self {
            Oracle::Ising(_) => OracleKind::Ising,
            Oracle::Hmm(_) => OracleKind::Hmm,
            Oracle::RandomNet(n) => match n.architecture() {
                Architecture::Mlp { .. } => OracleKind::RandomMlp,
                Architecture::Rnn { .. } => OracleKind::RandomRnn,
            },
            Oracle::Lookup(_) => OracleKind::Lookup,
        }
    }

    /// Reward of a sequence already validated against the oracle's space.
    pub fn score(&self, x: &Sequence) -> f64 {
        match self {
            Oracle::Ising(o) => o.score(x),
            Oracle::Hmm(h) => h.log_likelihood(x),
            Oracle::RandomNet(n) => n.forward(x),
            Oracle::Lookup(t) => t.get(x),
        }
    }

    fn vocab_size(&self) -> usize {
        match self {
            Oracle::Ising(o) => o.vocab_size(),
            Oracle::Hmm(h) => h.vocab_size(),
            Oracle::RandomNet(n) => n.vocab_size(),
            Oracle::Lookup(t) => t.space().vocab_size,
        }
    }

    fn fixed_length(&self) -> Option<usize> {
        match self {
            Oracle::Ising(o) => Some(o.length()),
            Oracle::Hmm(_) => None,
            Oracle::RandomNet(n) => Some(n.length()),
            Oracle::Lookup(t) => Some(t.space().length),
        }
    }
}

/// A black-box objective plus the metadata of one benchmark problem.
#[derive(Clone, Debug)]
pub struct OracleInstance {
    pub id: String,
    pub vocabulary: Vocabulary,
    pub length: usize,
    pub rounds: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_dataset: Vec<(Sequence, f64)>,
    pub oracle: Oracle,
}

impl OracleInstance {
    pub fn new(
        id: impl Into<String>,
        vocabulary: Vocabulary,
        length: usize,
        rounds: usize,
        batch_size: usize,
        seed: u64,
        init_dataset: Vec<(Sequence, f64)>,
        oracle: Oracle,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == '/' || c == '\\') {
            return Err(Error::invalid(format!("instance id `{id}` must be non-empty without whitespace or slashes")));
        }
        if length == 0 || rounds == 0 || batch_size == 0 {
            return Err(Error::invalid("length, rounds and batch_size must be positive"));
        }
        if oracle.vocab_size() != vocabulary.len() {
            return Err(Error::invalid(format!(
                "oracle expects {} symbols, vocabulary has {}",
                oracle.vocab_size(),
                vocabulary.len()
            )));
        }
        if let Some(l) = oracle.fixed_length() {
            if l != length {
                return Err(Error::invalid(format!("oracle expects length {l}, instance declares {length}")));
            }
        }
        let space = SearchSpace::new(vocabulary.len(), length);
        let mut seen = HashSet::new();
        for (i, (s, _)) in init_dataset.iter().enumerate() {
            s.validate(space).map_err(|reason| Error::InvalidSequence { index: i, reason })?;
            if !seen.insert(s) {
                return Err(Error::InvalidSequence {
                    index: i,
                    reason: "duplicate sequence in initial dataset".into(),
                });
            }
        }
        Ok(Self {
            id,
            vocabulary,
            length,
            rounds,
            batch_size,
            seed,
            init_dataset,
            oracle,
        })
    }

    pub fn space(&self) -> SearchSpace {
        SearchSpace::new(self.vocabulary.len(), self.length)
    }

    pub fn kind(&self) -> OracleKind {
        self.oracle.kind()
    }

    /// One reward per input, in order. Fails on the first invalid sequence.
    pub fn evaluate(&self, batch: &[Sequence]) -> Result<Vec<f64>> {
        let space = self.space();
        for (index, s) in batch.iter().enumerate() {
            s.validate(space).map_err(|reason| Error::InvalidSequence { index, reason })?;
        }
        Ok(batch.iter().map(|s| self.oracle.score(s)).collect())
    }

    /// Global maximum when it is known exactly.
    pub fn known_max(&self) -> Option<f64> {
        match &self.oracle {
            Oracle::Lookup(_) => Some(1.0),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lookup_instance() -> OracleInstance {
        let space = SearchSpace::new(2, 2);
        let oracle = LookupOracle::new(space, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        OracleInstance::new("toy", Vocabulary::letters(2).unwrap(), 2, 3, 2, 0, vec![], Oracle::Lookup(oracle)).unwrap()
    }

    #[test]
    fn evaluate_preserves_order() {
        let inst = lookup_instance();
        let v = &inst.vocabulary;
        let batch: Vec<Sequence> = ["BA", "AB", "AA"].iter().map(|s| v.parse(s).unwrap()).collect();
        assert_eq!(inst.evaluate(&batch).unwrap(), vec![0.5, 1.0, 0.0]);
        assert_eq!(inst.known_max(), Some(1.0));
    }

    #[test]
    fn evaluate_names_offending_index() {
        let inst = lookup_instance();
        let batch = vec![Sequence(vec![0, 1]), Sequence(vec![0, 2])];
        match inst.evaluate(&batch) {
            Err(Error::InvalidSequence { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        let short = vec![Sequence(vec![0])];
        assert!(matches!(inst.evaluate(&short), Err(Error::InvalidSequence { index: 0, .. })));
    }

    #[test]
    fn instance_validation() {
        let space = SearchSpace::new(2, 2);
        let oracle = Oracle::Lookup(LookupOracle::new(space, vec![0.0, 1.0, 0.5, 0.25]).unwrap());
        let v = Vocabulary::letters(2).unwrap();
        let dup = vec![(Sequence(vec![0, 0]), 0.0), (Sequence(vec![0, 0]), 0.0)];
        assert!(OracleInstance::new("x", v.clone(), 2, 1, 1, 0, dup, oracle.clone()).is_err());
        assert!(OracleInstance::new("x", v.clone(), 3, 1, 1, 0, vec![], oracle.clone()).is_err());
        assert!(OracleInstance::new("a b", v, 2, 1, 1, 0, vec![], oracle).is_err());
    }

    #[test]
    fn kind_round_trip() {
        for k in OracleKind::ALL {
            assert_eq!(k.as_str().parse::<OracleKind>().unwrap(), k);
        }
        assert!("nk".parse::<OracleKind>().is_err());
    }
}
