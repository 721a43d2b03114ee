//! Seeded synthesis of problem instances from `key=value` parameters.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::oracles::hmm::HmmParams;
use crate::oracles::ising::{compute_beta, toy_coupling, toy_substitution};
use crate::oracles::lookup::{planted_motifs, LookupParams};
use crate::oracles::{Architecture, IsingOracle, Oracle, OracleInstance, OracleKind, ProfileHmm, RandomNetOracle};
use crate::rng::{self, Rng};
use crate::seq::{SearchSpace, Sequence, Vocabulary};

/// Generator parameters; every key must be consumed.
#[derive(Clone, Debug, Default)]
pub struct Params {
    values: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl Params {
    pub fn new(values: BTreeMap<String, String>) -> Self {
        Self {
            values,
            used: BTreeSet::new(),
        }
    }

    /// Parses `key=value` words.
    pub fn parse<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for w in words {
            let w = w.as_ref();
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value, got `{w}`")))?;
            if values.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::invalid(format!("parameter `{k}` given twice")));
            }
        }
        Ok(Self::new(values))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.values.get(key).cloned()
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::invalid(format!("parameter `{key}`: cannot parse `{v}`"))),
        }
    }

    fn sizes(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::invalid(format!("parameter `{key}`: cannot parse `{v}`")))
                })
                .collect(),
        }
    }

    fn finish(&self) -> Result<()> {
        let unknown: Vec<&String> = self.values.keys().filter(|k| !self.used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "unknown parameter(s): {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    }

    /// Canonical `key=value` listing.
    pub fn describe(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }
}

fn vocabulary(spec: &str) -> Result<Vocabulary> {
    match spec {
        "protein" => Ok(Vocabulary::protein()),
        "dna" => Ok(Vocabulary::dna()),
        other => Vocabulary::new(other.chars()),
    }
}

/// Pairs `(i, j)`, `j > i + 1`, whose points on a 3-D random walk with unit
/// steps are closest; `density` is the fraction of such pairs kept.
pub fn geometric_contacts(length: usize, density: f64, rng: &mut Rng) -> Result<Vec<(usize, usize)>> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::invalid("contact_density must lie in [0, 1]"));
    }
    let mut pos = vec![[0.0f64; 3]; length];
    for i in 1..length {
        let mut step = [0.0f64; 3];
        for s in &mut step {
            *s = StandardNormal.sample(rng);
        }
        let norm = step.iter().map(|s| s * s).sum::<f64>().sqrt().max(1e-12);
        for d in 0..3 {
            pos[i][d] = pos[i - 1][d] + step[d] / norm;
        }
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..length {
        for j in i + 2..length {
            let d2: f64 = (0..3).map(|d| (pos[i][d] - pos[j][d]).powi(2)).sum();
            pairs.push((d2, i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let k = (density * pairs.len() as f64).round() as usize;
    let mut out: Vec<(usize, usize)> = pairs.into_iter().take(k).map(|(_, i, j)| (i, j)).collect();
    out.sort_unstable();
    Ok(out)
}

/// `n` distinct uniformly random sequences.
fn random_init(space: SearchSpace, n: usize, rng: &mut Rng) -> Result<Vec<Sequence>> {
    if n as u128 > space.size() {
        return Err(Error::invalid(format!("init_size {n} exceeds the search space")));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = Sequence::random(space, rng);
        if seen.insert(x.clone()) {
            out.push(x);
        }
    }
    Ok(out)
}

/// A generated instance plus the canonical parameter listing.
pub struct Generated {
    pub instance: OracleInstance,
    pub description: String,
}

/// Builds an instance of `kind`. Common keys: `id`, `seed`, `rounds`,
/// `batch_size`, `length`, `vocab` and `init_size`; see the README for the
/// kind-specific keys.
pub fn gen_problem(kind: OracleKind, mut p: Params) -> Result<Generated> {
    let seed: u64 = p.parsed("seed", 0)?;
    let id: String = p.parsed("id", format!("{kind}-{seed}"))?;
    let rounds: usize = p.parsed("rounds", 10)?;
    let batch_size: usize = p.parsed("batch_size", 100)?;
    let default_vocab = if kind == OracleKind::Lookup { "dna" } else { "protein" };
    let vocab = vocabulary(&p.parsed("vocab", default_vocab.to_string())?)?;
    let default_len = match kind {
        OracleKind::Ising => 20,
        OracleKind::Hmm => 30,
        OracleKind::RandomMlp | OracleKind::RandomRnn => 20,
        OracleKind::Lookup => 8,
    };
    let length: usize = p.parsed("length", default_len)?;
    let default_init = if kind == OracleKind::Hmm { 500 } else { 0 };
    let init_size: usize = p.parsed("init_size", default_init)?;
    if length == 0 {
        return Err(Error::invalid("length must be positive"));
    }
    let v = vocab.len();
    let space = SearchSpace::new(v, length);
    let mut init_rng = rng::stream(seed, "gen/init");

    let (oracle, init) = match kind {
        OracleKind::Ising => {
            let density: f64 = p.parsed("contact_density", 0.15)?;
            let lambda: f64 = p.parsed("lambda", 1.0)?;
            if !(lambda > 0.0) {
                return Err(Error::invalid("lambda must be positive"));
            }
            let contacts = geometric_contacts(length, density, &mut rng::stream(seed, "gen/contacts"))?;
            let reference = Sequence::random(space, &mut rng::stream(seed, "gen/reference"));
            let substitution = toy_substitution(v);
            let coupling = toy_coupling(v);
            let local: Vec<Vec<f64>> = reference
                .tokens()
                .iter()
                .map(|&r| (0..v).map(|a| substitution[a][usize::from(r)]).collect())
                .collect();
            let beta = compute_beta(&local, &contacts, &coupling, lambda);
            let o = IsingOracle::new(reference, substitution, coupling, &contacts, beta)?;
            let init = random_init(space, init_size, &mut init_rng)?;
            (Oracle::Ising(o), init.into_iter().map(|x| (x, f64::NAN)).collect::<Vec<_>>())
        }
        OracleKind::Hmm => {
            let params = HmmParams {
                match_states: p.parsed("match_states", length)?,
                vocab_size: v,
                match_concentration: p.parsed("match_concentration", 0.5)?,
                insert_concentration: p.parsed("insert_concentration", 1.0)?,
                transition_concentration: p.parsed("transition_concentration", 20.0)?,
                indel_rate: p.parsed("indel_rate", 0.05)?,
            };
            let h = ProfileHmm::random(&params, &mut rng::stream(seed, "gen/hmm"))?;
            let init = if init_size == 0 {
                Vec::new()
            } else {
                h.init_dataset(init_size, length, rng::child_seed(seed, "gen/init"))?
            };
            (Oracle::Hmm(h), init)
        }
        OracleKind::RandomMlp | OracleKind::RandomRnn => {
            let arch = if kind == OracleKind::RandomMlp {
                Architecture::Mlp {
                    conv: p.parsed("conv", true)?,
                    dense: p.sizes("dense", &[128])?,
                }
            } else {
                Architecture::Rnn {
                    lstm: p.sizes("lstm", &[128])?,
                }
            };
            let weight_seed = p.parsed("weight_seed", rng::child_seed(seed, "gen/weights"))?;
            let net = RandomNetOracle::new(arch, v, length, weight_seed)?;
            let init = random_init(space, init_size, &mut init_rng)?;
            (Oracle::RandomNet(net), init.into_iter().map(|x| (x, f64::NAN)).collect())
        }
        OracleKind::Lookup => {
            let d = LookupParams::default();
            let params = LookupParams {
                vocab_size: v,
                length,
                motifs: p.parsed("motifs", d.motifs)?,
                power: p.parsed("power", d.power)?,
                min_weight: p.parsed("min_weight", d.min_weight)?,
                noise: p.parsed("noise", d.noise)?,
            };
            let (table, _) = planted_motifs(&params, seed)?;
            let init = random_init(space, init_size, &mut init_rng)?;
            (Oracle::Lookup(table), init.into_iter().map(|x| (x, f64::NAN)).collect())
        }
    };
    p.finish()?;
    // score init sequences that were drawn without an oracle at hand
    let init = init
        .into_iter()
        .map(|(x, y)| {
            let y = if y.is_nan() { oracle.score(&x) } else { y };
            (x, y)
        })
        .collect();
    let instance = OracleInstance::new(id, vocab, length, rounds, batch_size, seed, init, oracle)?;
    Ok(Generated {
        description: format!("{kind} {}", p.describe()),
        instance,
    })
}
