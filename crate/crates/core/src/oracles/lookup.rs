//! Fully enumerated landscapes over `V^L`, min-max normalised to `[0, 1]`.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::seq::{SearchSpace, Sequence};

/// Largest table the oracle will materialise.
pub const MAX_TABLE: u128 = 1 << 24;

#[derive(Clone, Debug)]
pub struct LookupOracle {
    space: SearchSpace,
    table: Vec<f64>,
}

impl LookupOracle {
    /// Builds the oracle from raw values indexed by [`Sequence::to_index`],
    /// rescaling them to `[0, 1]`. Already-normalised tables pass through
    /// unchanged.
    pub fn new(space: SearchSpace, raw: Vec<f64>) -> Result<Self> {
        if space.size() > MAX_TABLE || raw.len() as u128 != space.size() {
            return Err(Error::invalid(format!(
                "lookup table has {} entries, expected |V|^L = {}",
                raw.len(),
                space.size()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("lookup table has non-finite entries"));
        }
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            return Err(Error::invalid("lookup table is constant"));
        }
        let table = raw.into_iter().map(|v| (v - lo) / (hi - lo)).collect();
        Ok(Self { space, table })
    }

    pub fn space(&self) -> SearchSpace {
        self.space
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn get(&self, x: &Sequence) -> f64 {
        self.table[x.to_index(self.space.vocab_size)]
    }

    /// Every sequence with its reward, in enumeration order.
    pub fn entries(&self) -> impl Iterator<Item = (Sequence, f64)> + '_ {
        self.table
            .iter()
            .enumerate()
            .map(|(i, &r)| (Sequence::from_index(i, self.space), r))
    }
}

/// Synthetic landscape parameters.
#[derive(Clone, Debug)]
pub struct LookupParams {
    pub vocab_size: usize,
    pub length: usize,
    pub motifs: usize,
    /// Sharpness of each motif's peak.
    pub power: f64,
    /// Motif weights are spaced evenly in `[min_weight, 1]`.
    pub min_weight: f64,
    /// Standard deviation of the additive noise before normalisation.
    pub noise: f64,
}

impl Default for LookupParams {
    fn default() -> Self {
        Self {
            vocab_size: 4,
            length: 8,
            motifs: 4,
            power: 4.0,
            min_weight: 0.94,
            noise: 0.02,
        }
    }
}

/// Planted-motif landscape: `f(x) = sum_k w_k * s_k(x)^power + noise(x)`,
/// where `s_k(x)` is the larger fraction of positions at which `x` or its
/// reversal matches motif `k`. The noise is shared between `x` and its
/// reversal, so `f(x) = f(reverse(x))`. Returns the oracle and the motifs.
pub fn planted_motifs(params: &LookupParams, seed: u64) -> Result<(LookupOracle, Vec<Sequence>)> {
    let space = SearchSpace::new(params.vocab_size, params.length);
    if params.vocab_size < 2 || params.length == 0 || params.motifs == 0 {
        return Err(Error::invalid("lookup generator needs vocab >= 2, length >= 1, motifs >= 1"));
    }
    if space.size() > MAX_TABLE {
        return Err(Error::invalid(format!("|V|^L = {} exceeds {MAX_TABLE}", space.size())));
    }
    if !(params.power > 0.0 && params.noise >= 0.0 && (0.0..=1.0).contains(&params.min_weight)) {
        return Err(Error::invalid("lookup generator needs power > 0, noise >= 0, min_weight in [0, 1]"));
    }
    let mut motif_rng = rng::stream(seed, "lookup/motifs");
    let mut motifs: Vec<Sequence> = Vec::with_capacity(params.motifs);
    let mut attempts = 0;
    while motifs.len() < params.motifs {
        let m = Sequence::random(space, &mut motif_rng);
        attempts += 1;
        // keep motifs, and their reversals, well separated
        let far = motifs.iter().all(|o| {
            let d = |a: &Sequence, b: &Sequence| a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count();
            d(&m, o).min(d(&m, &o.reversed())) * 2 >= params.length
        });
        if far || attempts > 10_000 {
            motifs.push(m);
        }
    }
    let weights: Vec<f64> = (0..params.motifs)
        .map(|k| {
            if params.motifs == 1 {
                1.0
            } else {
                1.0 - (1.0 - params.min_weight) * k as f64 / (params.motifs - 1) as f64
            }
        })
        .collect();
    let n = space.size() as usize;
    let mut noise_rng: Rng = rng::stream(seed, "lookup/noise");
    let noise: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            z * params.noise
        })
        .collect();
    let l = params.length as f64;
    let raw = (0..n)
        .map(|i| {
            let x = Sequence::from_index(i, space);
            let rev = x.reversed();
            let canon = i.min(rev.to_index(space.vocab_size));
            let signal: f64 = motifs
                .iter()
                .zip(&weights)
                .map(|(m, w)| {
                    let fwd = x.0.iter().zip(&m.0).filter(|(a, b)| a == b).count();
                    let bwd = rev.0.iter().zip(&m.0).filter(|(a, b)| a == b).count();
                    w * (fwd.max(bwd) as f64 / l).powf(params.power)
                })
                .sum();
            signal + noise[canon]
        })
        .collect();
    Ok((LookupOracle::new(space, raw)?, motifs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalisation_contract() {
        let o = LookupOracle::new(SearchSpace::new(2, 2), vec![3.0, -1.0, 1.0, 0.0]).unwrap();
        assert_eq!(o.table(), &[1.0, 0.0, 0.5, 0.25]);
        let again = LookupOracle::new(o.space(), o.table().to_vec()).unwrap();
        assert_eq!(again.table(), o.table());
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(LookupOracle::new(SearchSpace::new(2, 2), vec![1.0; 3]).is_err());
        assert!(LookupOracle::new(SearchSpace::new(2, 2), vec![1.0; 4]).is_err());
        assert!(LookupOracle::new(SearchSpace::new(2, 2), vec![1.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn generated_landscape_properties() {
        let (o, motifs) = planted_motifs(&LookupParams::default(), 4).unwrap();
        assert_eq!(o.table().len(), 65536);
        let max = o.entries().map(|(_, r)| r).fold(f64::NEG_INFINITY, f64::max);
        let min = o.entries().map(|(_, r)| r).fold(f64::INFINITY, f64::min);
        assert_eq!(max, 1.0);
        assert_eq!(min, 0.0);
        for (x, r) in o.entries().step_by(97) {
            assert_eq!(o.get(&x.reversed()), r);
        }
        for m in &motifs {
            assert!(o.get(m) >= 0.9, "motif {m:?} scores {}", o.get(m));
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let p = LookupParams::default();
        let (a, _) = planted_motifs(&p, 8).unwrap();
        let (b, _) = planted_motifs(&p, 8).unwrap();
        let (c, _) = planted_motifs(&p, 9).unwrap();
        assert_eq!(a.table(), b.table());
        assert_ne!(a.table(), c.table());
    }
}
