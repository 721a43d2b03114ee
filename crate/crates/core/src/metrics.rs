//! Sample-efficiency, diversity and optima-discovery measures, plus rank
//! aggregation across problem instances.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::error::{Error, Result};
use crate::oracles::lookup::LookupOracle;
use crate::seq::{edit_distance, Sequence};

/// Running maximum of per-round batch maxima.
pub fn max_reward_curve(batch_maxima: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    batch_maxima
        .iter()
        .map(|&y| {
            best = best.max(y);
            best
        })
        .collect()
}

/// Mean of the max-reward curve; NaN for an empty curve.
pub fn auc_max_reward(curve: &[f64]) -> f64 {
    if curve.is_empty() {
        return f64::NAN;
    }
    curve.iter().sum::<f64>() / curve.len() as f64
}

/// Per-position token counts; sequences must share one length.
fn position_counts(batch: &[Sequence]) -> Vec<BTreeMap<u8, usize>> {
    let len = batch.first().map_or(0, Sequence::len);
    let mut counts = vec![BTreeMap::new(); len];
    for x in batch {
        debug_assert_eq!(x.len(), len);
        for (c, &t) in counts.iter_mut().zip(x.tokens()) {
            *c.entry(t).or_insert(0) += 1;
        }
    }
    counts
}

/// Mean Hamming distance over unordered pairs; NaN below two sequences.
pub fn mean_pairwise_hamming(batch: &[Sequence]) -> f64 {
    let n = batch.len();
    if n < 2 {
        return f64::NAN;
    }
    let pairs = (n * (n - 1) / 2) as f64;
    // mismatching pairs at a position = all pairs minus same-token pairs
    let mismatches: usize = position_counts(batch)
        .iter()
        .map(|c| n * (n - 1) / 2 - c.values().map(|&k| k * k.saturating_sub(1) / 2).sum::<usize>())
        .sum();
    mismatches as f64 / pairs
}

/// Mean over positions of the empirical token entropy, in nats; NaN for an
/// empty batch.
pub fn mean_positional_entropy(batch: &[Sequence]) -> f64 {
    let n = batch.len();
    if n == 0 {
        return f64::NAN;
    }
    let counts = position_counts(batch);
    if counts.is_empty() {
        return 0.0;
    }
    let total: f64 = counts
        .iter()
        .map(|c| {
            -c.values()
                .map(|&k| {
                    let p = k as f64 / n as f64;
                    p * p.ln()
                })
                .sum::<f64>()
        })
        .sum();
    total / counts.len() as f64
}

/// Complete-linkage agglomerative clustering over `n` points, merging
/// while the closest pair of clusters is nearer than `threshold`. Ties go
/// to the lexicographically smallest pair of cluster indices. Returns a
/// cluster label per point, labels numbered by first occurrence.
pub fn complete_linkage(n: usize, dist: impl Fn(usize, usize) -> f64, threshold: f64) -> Vec<usize> {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = dist(i, j);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut active = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();
    // nearest active partner with a larger index, smallest index on ties
    let nearest = |a: usize, d: &[f64], active: &[bool]| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for b in a + 1..n {
            if active[b] && best.is_none_or(|(v, _)| d[a * n + b] < v) {
                best = Some((d[a * n + b], b));
            }
        }
        best
    };
    let mut nn: Vec<Option<(f64, usize)>> = (0..n).map(|a| nearest(a, &d, &active)).collect();
    loop {
        let mut pick: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            if let (true, Some((v, b))) = (active[a], nn[a]) {
                if pick.is_none_or(|(pv, _, _)| v < pv) {
                    pick = Some((v, a, b));
                }
            }
        }
        let Some((v, i, j)) = pick else { break };
        if !(v < threshold) {
            break;
        }
        active[j] = false;
        parent[j] = i;
        for k in 0..n {
            if active[k] && k != i {
                let m = d[i * n + k].max(d[j * n + k]);
                d[i * n + k] = m;
                d[k * n + i] = m;
            }
        }
        nn[j] = None;
        nn[i] = nearest(i, &d, &active);
        for a in 0..i {
            if active[a] && matches!(nn[a], Some((_, b)) if b == i || b == j) {
                nn[a] = nearest(a, &d, &active);
            }
        }
        for a in i + 1..j {
            if active[a] && matches!(nn[a], Some((_, b)) if b == j) {
                nn[a] = nearest(a, &d, &active);
            }
        }
    }
    let root = |mut x: usize| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };
    let mut labels = BTreeMap::new();
    (0..n)
        .map(|x| {
            let r = root(x);
            let next = labels.len();
            *labels.entry(r).or_insert(next)
        })
        .collect()
}

fn normalized_hamming(a: &Sequence, b: &Sequence) -> f64 {
    let diff = a.tokens().iter().zip(b.tokens()).filter(|(x, y)| x != y).count();
    diff as f64 / a.len().max(1) as f64
}

/// Number of complete-linkage clusters (length-normalized Hamming, cut at
/// `distance_threshold`) among sequences with reward at least
/// `fraction * max_reward`.
pub fn high_reward_clusters(
    sequences: &[Sequence],
    rewards: &[f64],
    fraction: f64,
    max_reward: f64,
    distance_threshold: f64,
) -> usize {
    let cut = fraction * max_reward;
    let kept: Vec<&Sequence> = sequences.iter().zip(rewards).filter(|(_, &r)| r >= cut).map(|(s, _)| s).collect();
    let labels = complete_linkage(kept.len(), |i, j| normalized_hamming(kept[i], kept[j]), distance_threshold);
    labels.into_iter().collect::<BTreeSet<_>>().len()
}

/// Distinct optima of an enumerable landscape.
#[derive(Clone, Debug, PartialEq)]
pub struct Optima {
    /// Cluster representatives followed by their reversals, deduplicated.
    pub sequences: Vec<Sequence>,
    /// Number of clusters before reversals were added.
    pub clusters: usize,
}

pub const OPTIMA_REWARD: f64 = 0.9;
pub const OPTIMA_EDIT_DISTANCE: f64 = 3.0;

/// Sequences with reward at least `reward_threshold`, complete-linkage
/// clustered by edit distance cut at `distance`; the best sequence of each
/// cluster (lexicographically smallest on ties) plus its literal reversal.
pub fn enumerate_optima(oracle: &LookupOracle, reward_threshold: f64, distance: f64) -> Optima {
    let high: Vec<(Sequence, f64)> = oracle.entries().filter(|(_, r)| *r >= reward_threshold).collect();
    let labels = complete_linkage(high.len(), |i, j| edit_distance(&high[i].0, &high[j].0) as f64, distance);
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (k, &c) in labels.iter().enumerate() {
        let e = best.entry(c).or_insert(k);
        let (cur, new) = (&high[*e], &high[k]);
        if new.1 > cur.1 || (new.1 == cur.1 && new.0.tokens() < cur.0.tokens()) {
            *e = k;
        }
    }
    let reps: Vec<Sequence> = best.values().map(|&k| high[k].0.clone()).collect();
    let mut seen: HashSet<Sequence> = reps.iter().cloned().collect();
    let mut sequences = reps.clone();
    for r in &reps {
        let rev = r.reversed();
        if seen.insert(rev.clone()) {
            sequences.push(rev);
        }
    }
    Optima {
        clusters: reps.len(),
        sequences,
    }
}

/// Share of `optima` that appear exactly in `proposed`; NaN without optima.
pub fn fraction_of_optima<'a>(optima: &Optima, proposed: impl IntoIterator<Item = &'a Sequence>) -> f64 {
    if optima.sequences.is_empty() {
        return f64::NAN;
    }
    let targets: HashSet<&Sequence> = optima.sequences.iter().collect();
    let found: HashSet<&Sequence> = proposed.into_iter().filter(|x| targets.contains(x)).collect();
    found.len() as f64 / targets.len() as f64
}

/// Average ranks of `values`, 1 for the lowest and `n` for the highest.
/// NaN ranks below every number.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| key(values[a]).total_cmp(&key(values[b])));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && key(values[order[j + 1]]) == key(values[order[i]]) {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mean rank of each method over instances from `(method, instance) -> auc`
/// cells; the best method on an instance gets the number of methods.
pub fn rank_methods(cells: &BTreeMap<(String, String), f64>) -> Result<BTreeMap<String, f64>> {
    let methods: BTreeSet<&String> = cells.keys().map(|(m, _)| m).collect();
    let instances: BTreeSet<&String> = cells.keys().map(|(_, i)| i).collect();
    let missing: Vec<String> = instances
        .iter()
        .flat_map(|i| methods.iter().map(move |m| (*m, *i)))
        .filter(|(m, i)| !cells.contains_key(&((*m).clone(), (*i).clone())))
        .map(|(m, i)| format!("{m}/{i}"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing));
    }
    let mut totals: BTreeMap<String, f64> = methods.iter().map(|m| ((*m).clone(), 0.0)).collect();
    for inst in &instances {
        let vals: Vec<f64> = methods.iter().map(|m| cells[&((*m).clone(), (*inst).clone())]).collect();
        for (m, r) in methods.iter().zip(average_ranks(&vals)) {
            *totals.get_mut(*m).expect("known method") += r;
        }
    }
    let n = instances.len().max(1) as f64;
    Ok(totals.into_iter().map(|(m, t)| (m, t / n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::lookup::{planted_motifs, LookupParams};
    use crate::rng;
    use crate::seq::{hamming_distance, SearchSpace, Vocabulary};
    use proptest::prelude::*;

    fn parse(words: &[&str]) -> Vec<Sequence> {
        let v = Vocabulary::letters(4).unwrap();
        words.iter().map(|w| v.parse(w).unwrap()).collect()
    }

    /// Complete linkage by full rescans over explicit member lists.
    fn naive_linkage(n: usize, dist: impl Fn(usize, usize) -> f64, threshold: f64) -> Vec<Vec<usize>> {
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let d = clusters[a]
                        .iter()
                        .flat_map(|&x| clusters[b].iter().map(move |&y| (x, y)))
                        .map(|(x, y)| dist(x, y))
                        .fold(f64::NEG_INFINITY, f64::max);
                    let lower = |x: &[usize]| *x.iter().min().unwrap();
                    let key = (lower(&clusters[a]).min(lower(&clusters[b])), lower(&clusters[a]).max(lower(&clusters[b])));
                    let better = match best {
                        None => true,
                        Some((bd, ba, bb)) => {
                            let bkey = {
                                let (la, lb) = (lower(&clusters[ba]), lower(&clusters[bb]));
                                (la.min(lb), la.max(lb))
                            };
                            d < bd || (d == bd && key < bkey)
                        }
                    };
                    if better {
                        best = Some((d, a, b));
                    }
                }
            }
            match best {
                Some((d, a, b)) if d < threshold => {
                    let moved = clusters.remove(b);
                    clusters[a].extend(moved);
                }
                _ => break,
            }
        }
        let mut out: Vec<Vec<usize>> = clusters
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        out.sort();
        out
    }

    fn groups(labels: &[usize]) -> Vec<Vec<usize>> {
        let mut by: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            by.entry(l).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = by.into_values().collect();
        out.sort();
        out
    }

    #[test]
    fn auc_examples() {
        assert!((auc_max_reward(&[0.5, 0.7, 0.7]) - 1.9 / 3.0).abs() < 1e-12);
        assert!((auc_max_reward(&[0.4; 6]) - 0.4).abs() < 1e-12);
        assert_eq!(max_reward_curve(&[0.5, 0.3, 0.7, 0.6]), vec![0.5, 0.5, 0.7, 0.7]);
        assert!(auc_max_reward(&[]).is_nan());
    }

    #[test]
    fn hamming_examples() {
        assert!((mean_pairwise_hamming(&parse(&["AA", "AB", "BB"])) - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(mean_pairwise_hamming(&parse(&["ABC", "ABC", "ABC"])), 0.0);
        assert_eq!(mean_pairwise_hamming(&parse(&["AA", "BB"])), 2.0);
        assert!(mean_pairwise_hamming(&parse(&["AB"])).is_nan());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(mean_positional_entropy(&parse(&["ABCD", "ABCD"])), 0.0);
        let e = mean_positional_entropy(&parse(&["ABCD", "BCDA", "CDAB", "DABC"]));
        assert!((e - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cluster_examples() {
        let a = parse(&["AAAAAAAAAA", "AAAAAABBBB"]);
        assert_eq!(high_reward_clusters(&a, &[1.0, 1.0], 0.8, 1.0, 0.5), 1);
        let b = parse(&["AAAAAAAAAA", "AAAABBBBBB"]);
        assert_eq!(high_reward_clusters(&b, &[1.0, 1.0], 0.8, 1.0, 0.5), 2);
        assert_eq!(high_reward_clusters(&b, &[0.1, 0.2], 0.8, 1.0, 0.5), 0);
    }

    #[test]
    fn hand_computed_dendrogram() {
        // 0-1: 0.1, 2-3: 0.2, 1-2: 0.3 (others 0.9); complete linkage merges
        // {0,1} then {2,3}; their linkage is 0.9, so a 0.5 cut leaves two.
        let m = [[0.0, 0.1, 0.9, 0.9], [0.1, 0.0, 0.3, 0.9], [0.9, 0.3, 0.0, 0.2], [0.9, 0.9, 0.2, 0.0]];
        assert_eq!(groups(&complete_linkage(4, |i, j| m[i][j], 0.5)), vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(complete_linkage(4, |i, j| m[i][j], 1.0), vec![0, 0, 0, 0]);
        assert_eq!(complete_linkage(4, |i, j| m[i][j], 0.1), vec![0, 1, 2, 3]);
        // single linkage would chain all four at 0.31
        assert_eq!(groups(&complete_linkage(4, |i, j| m[i][j], 0.31)), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn linkage_matches_naive_rescan() {
        let mut r = rng::from_seed(11);
        for trial in 0..60 {
            let n = r.random_range(1..30);
            let space = SearchSpace::new(3, 6);
            let pts: Vec<Sequence> = (0..n).map(|_| Sequence::random(space, &mut r)).collect();
            let dist = |i: usize, j: usize| hamming_distance(&pts[i], &pts[j]).unwrap() as f64;
            let t = 1.0 + (trial % 5) as f64;
            assert_eq!(groups(&complete_linkage(n, dist, t)), naive_linkage(n, dist, t), "trial {trial}");
        }
    }

    #[test]
    fn optima_match_brute_force() {
        let params = LookupParams {
            vocab_size: 4,
            length: 4,
            motifs: 2,
            ..Default::default()
        };
        let (oracle, _) = planted_motifs(&params, 3).unwrap();
        let got = enumerate_optima(&oracle, 0.9, 3.0);

        // independent: full enumeration, naive clustering, per-cluster argmax
        let space = oracle.space();
        let all: Vec<(Sequence, f64)> = (0..256)
            .map(|i| {
                let x = Sequence::from_index(i, space);
                let y = oracle.get(&x);
                (x, y)
            })
            .filter(|(_, y)| *y >= 0.9)
            .collect();
        let clusters = naive_linkage(all.len(), |i, j| edit_distance(&all[i].0, &all[j].0) as f64, 3.0);
        let mut expected: BTreeSet<Vec<u8>> = BTreeSet::new();
        for c in &clusters {
            let mut members: Vec<&(Sequence, f64)> = c.iter().map(|&k| &all[k]).collect();
            members.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.tokens().cmp(b.0.tokens())));
            let rep = members[0].0.tokens().to_vec();
            let mut rev = rep.clone();
            rev.reverse();
            expected.insert(rep);
            expected.insert(rev);
        }
        assert_eq!(got.clusters, clusters.len());
        let got_set: BTreeSet<Vec<u8>> = got.sequences.iter().map(|s| s.tokens().to_vec()).collect();
        assert_eq!(got_set, expected);
        assert_eq!(got.sequences.len(), expected.len());

        assert_eq!(fraction_of_optima(&got, &got.sequences), 1.0);
        assert_eq!(fraction_of_optima(&got, &[]), 0.0);
    }

    #[test]
    fn rank_examples() {
        let cell = |m: &str, i: &str, v: f64| ((m.to_string(), i.to_string()), v);
        let t: BTreeMap<_, _> = [cell("a", "x", 0.9), cell("b", "x", 0.1), cell("a", "y", 0.5), cell("b", "y", 0.2)].into();
        let r = rank_methods(&t).unwrap();
        assert_eq!((r["a"], r["b"]), (2.0, 1.0));
        let tie: BTreeMap<_, _> = [cell("a", "x", 0.5), cell("b", "x", 0.5)].into();
        let r = rank_methods(&tie).unwrap();
        assert_eq!((r["a"], r["b"]), (1.5, 1.5));
        let mut seven = BTreeMap::new();
        for k in 0..7 {
            for inst in ["p", "q", "r"] {
                seven.insert((format!("m{k}"), inst.to_string()), k as f64);
            }
        }
        assert_eq!(rank_methods(&seven).unwrap()["m6"], 7.0);
        let hole: BTreeMap<_, _> = [cell("a", "x", 0.5), cell("b", "x", 0.5), cell("a", "y", 0.1)].into();
        match rank_methods(&hole) {
            Err(Error::MissingCells(m)) => assert_eq!(m, vec!["b/y".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_method_ranks_one() {
        let t: BTreeMap<_, _> = [(("solo".to_string(), "x".to_string()), 0.3)].into();
        assert_eq!(rank_methods(&t).unwrap()["solo"], 1.0);
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        let (ra, rb) = (average_ranks(a), average_ranks(b));
        let ma = ra.iter().sum::<f64>() / ra.len() as f64;
        let mb = rb.iter().sum::<f64>() / rb.len() as f64;
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn entropy_tracks_hamming() {
        // batches drawn around a centre with varying mutation rates
        let mut r = rng::from_seed(21);
        let space = SearchSpace::new(4, 12);
        let (mut h, mut e) = (Vec::new(), Vec::new());
        for _ in 0..200 {
            let centre = Sequence::random(space, &mut r);
            let rate: f64 = r.random_range(0.0..1.0);
            let batch: Vec<Sequence> = (0..20)
                .map(|_| {
                    Sequence(
                        centre
                            .tokens()
                            .iter()
                            .map(|&t| if r.random::<f64>() < rate { r.random_range(0..4) } else { t })
                            .collect(),
                    )
                })
                .collect();
            h.push(mean_pairwise_hamming(&batch));
            e.push(mean_positional_entropy(&batch));
        }
        assert!(spearman(&h, &e) > 0.9);
    }

    proptest! {
        #[test]
        fn hamming_matches_pairwise_loop(words in proptest::collection::vec(proptest::collection::vec(0u8..4, 5), 2..15)) {
            let batch: Vec<Sequence> = words.into_iter().map(Sequence).collect();
            let mut total = 0usize;
            let mut pairs = 0usize;
            for i in 0..batch.len() {
                for j in i + 1..batch.len() {
                    total += hamming_distance(&batch[i], &batch[j]).unwrap();
                    pairs += 1;
                }
            }
            prop_assert!((mean_pairwise_hamming(&batch) - total as f64 / pairs as f64).abs() < 1e-9);
            prop_assert!(mean_positional_entropy(&batch) <= 4f64.ln() + 1e-12);
        }

        #[test]
        fn cluster_count_bounded(words in proptest::collection::vec(proptest::collection::vec(0u8..3, 6), 0..20), seed in 0u64..100) {
            let batch: Vec<Sequence> = words.into_iter().map(Sequence).collect();
            let mut r = rng::from_seed(seed);
            let rewards: Vec<f64> = batch.iter().map(|_| r.random()).collect();
            let kept = rewards.iter().filter(|&&y| y >= 0.8).count();
            prop_assert!(high_reward_clusters(&batch, &rewards, 0.8, 1.0, 0.5) <= kept);
        }

        #[test]
        fn fraction_is_monotone(picks in proptest::collection::vec(0usize..256, 0..60), extra in proptest::collection::vec(0usize..256, 0..20)) {
            let params = LookupParams { vocab_size: 4, length: 4, motifs: 2, ..Default::default() };
            let (oracle, _) = planted_motifs(&params, 5).unwrap();
            let optima = enumerate_optima(&oracle, 0.9, 3.0);
            let space = oracle.space();
            let small: Vec<Sequence> = picks.iter().map(|&i| Sequence::from_index(i, space)).collect();
            let mut big = small.clone();
            big.extend(extra.iter().map(|&i| Sequence::from_index(i, space)));
            prop_assert!(fraction_of_optima(&optima, &big) >= fraction_of_optima(&optima, &small));
        }
    }
}
