//! Single mutant walker: single-substitution neighbors of the best sequences.

use super::{random_novel, Seen, Solver};
use crate::rng::Rng;
use crate::seq::{ObservationStore, SearchSpace, Sequence};

pub struct SingleMutantWalker {
    space: SearchSpace,
    rng: Rng,
    seen: Seen,
    /// Distinct observed sequences, best first.
    anchors: Vec<Sequence>,
    anchor: usize,
    /// Next neighbor of the current anchor, as `position * |V| + token`.
    cursor: usize,
}

impl SingleMutantWalker {
    pub fn new(space: SearchSpace, rng: Rng) -> Self {
        Self {
            space,
            rng,
            seen: Seen::default(),
            anchors: Vec::new(),
            anchor: 0,
            cursor: 0,
        }
    }

    fn next_neighbor(&mut self) -> Option<Sequence> {
        let v = self.space.vocab_size;
        let end = self.space.length * v;
        while self.anchor < self.anchors.len() {
            let base = &self.anchors[self.anchor];
            while self.cursor < end {
                let (pos, tok) = (self.cursor / v, (self.cursor % v) as u8);
                self.cursor += 1;
                if base.0[pos] == tok {
                    continue;
                }
                let mut x = base.clone();
                x.0[pos] = tok;
                if self.seen.mark(&x) {
                    return Some(x);
                }
            }
            self.anchor += 1;
            self.cursor = 0;
        }
        None
    }
}

impl Solver for SingleMutantWalker {
    fn fit(&mut self, data: &ObservationStore) {
        self.seen.absorb(data);
        self.anchors = data.ranked().into_iter().map(|(s, _)| s.clone()).collect();
        self.anchor = 0;
        self.cursor = 0;
    }

    fn propose(&mut self) -> Sequence {
        if let Some(x) = self.next_neighbor() {
            return x;
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
    use std::collections::HashSet;

    fn store(entries: &[(&str, f64)]) -> ObservationStore {
        let v = Vocabulary::letters(2).unwrap();
        let mut s = ObservationStore::new();
        for (x, r) in entries {
            s.insert(v.parse(x).unwrap(), *r, 0).unwrap();
        }
        s
    }

    #[test]
    fn neighbors_of_best_in_order() {
        let v = Vocabulary::letters(2).unwrap();
        let mut w = SingleMutantWalker::new(SearchSpace::new(2, 3), rng::from_seed(0));
        w.fit(&store(&[("AAA", 1.0), ("BBB", 0.0)]));
        let got: Vec<String> = (0..3).map(|_| v.render(&w.propose())).collect();
        assert_eq!(got, ["BAA", "ABA", "AAB"]);
    }

    #[test]
    fn advances_to_next_anchor_then_random() {
        let v = Vocabulary::letters(2).unwrap();
        let mut w = SingleMutantWalker::new(SearchSpace::new(2, 3), rng::from_seed(0));
        w.fit(&store(&[("AAA", 1.0), ("BBB", 0.5)]));
        let got: Vec<String> = (0..6).map(|_| v.render(&w.propose())).collect();
        assert_eq!(got, ["BAA", "ABA", "AAB", "ABB", "BAB", "BBA"]);
        // every sequence of the space is now seen
        let _ = w.propose();
    }

    #[test]
    fn fit_resets_to_new_best() {
        let v = Vocabulary::letters(2).unwrap();
        let mut w = SingleMutantWalker::new(SearchSpace::new(2, 3), rng::from_seed(0));
        w.fit(&store(&[("AAA", 1.0)]));
        assert_eq!(v.render(&w.propose()), "BAA");
        w.fit(&store(&[("AAA", 1.0), ("BAA", 2.0)]));
        assert_eq!(v.render(&w.propose()), "BBA");
        assert_eq!(v.render(&w.propose()), "BAB");
    }

    #[test]
    fn random_without_data_and_distinct() {
        let mut w = SingleMutantWalker::new(SearchSpace::new(4, 5), rng::from_seed(3));
        let xs: HashSet<Sequence> = (0..50).map(|_| w.propose()).collect();
        assert_eq!(xs.len(), 50);
    }
}
