//! Fixed random-weight networks over one-hot sequences.
//!
//! Weights are i.i.d. `N(0, 1/fan_in)` drawn from `ChaCha8Rng::seed_from_u64(weight_seed)`
//! in layer order, each weight matrix row-major (`[out][in]`). Convolution
//! kernels are laid out `[filter][offset][channel]`. LSTM layers draw one
//! `[4h][in + h]` matrix with gate blocks ordered input, forget, cell, output;
//! the last draw is the `1 x fan_in` output layer. Biases are zero except
//! the LSTM forget gate, which is 1.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::seq::Sequence;

pub const CONV_FILTERS: usize = 128;
pub const CONV_WIDTH: usize = 13;
const LAYER_SIZES: [usize; 3] = [128, 256, 512];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// Optional convolution, then dense ReLU layers, then a linear output.
    Mlp { conv: bool, dense: Vec<usize> },
    /// Stacked LSTM; the final hidden state maps linearly to the output.
    Rnn { lstm: Vec<usize> },
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let check = |sizes: &[usize], what: &str| -> Result<()> {
            if sizes.is_empty() || sizes.len() > 3 {
                return Err(Error::invalid(format!("{what} needs 1 to 3 layers")));
            }
            if sizes.iter().any(|s| !LAYER_SIZES.contains(s)) {
                return Err(Error::invalid(format!("{what} layer sizes must be 128, 256 or 512")));
            }
            Ok(())
        };
        match self {
            Architecture::Mlp { dense, .. } => check(dense, "dense stack"),
            Architecture::Rnn { lstm } => check(lstm, "recurrent stack"),
        }
    }
}

#[derive(Clone, Debug)]
struct Dense {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl Dense {
    fn apply(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }
}

#[derive(Clone, Debug)]
struct Conv {
    /// `[filter][offset * vocab + channel]`
    kernels: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
struct Lstm {
    hidden: usize,
    /// `[4 * hidden][input + hidden]`
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Body {
    Mlp { conv: Option<Conv>, dense: Vec<Dense> },
    Rnn { layers: Vec<Lstm> },
}

#[derive(Clone, Debug)]
pub struct RandomNetOracle {
    architecture: Architecture,
    weight_seed: u64,
    vocab_size: usize,
    length: usize,
    body: Body,
    output: Dense,
}

fn draw_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let std = (1.0 / cols as f64).sqrt();
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * std
                })
                .collect()
        })
        .collect()
}

fn relu(v: &mut [f64]) {
    for x in v {
        *x = x.max(0.0);
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl RandomNetOracle {
    pub fn new(architecture: Architecture, vocab_size: usize, length: usize, weight_seed: u64) -> Result<Self> {
        architecture.validate()?;
        if vocab_size < 2 || length == 0 {
            return Err(Error::invalid("random network needs vocab >= 2 and length >= 1"));
        }
        let mut rng = Rng::seed_from_u64(weight_seed);
        let (body, last) = match &architecture {
            Architecture::Mlp { conv, dense } => {
                let conv = conv.then(|| Conv {
                    kernels: draw_matrix(CONV_FILTERS, CONV_WIDTH * vocab_size, &mut rng),
                });
                let mut width = if conv.is_some() {
                    CONV_FILTERS * length
                } else {
                    vocab_size * length
                };
                let mut layers = Vec::with_capacity(dense.len());
                for &units in dense {
                    layers.push(Dense {
                        weights: draw_matrix(units, width, &mut rng),
                        bias: vec![0.0; units],
                    });
                    width = units;
                }
                (Body::Mlp { conv, dense: layers }, width)
            }
            Architecture::Rnn { lstm } => {
                let mut input = vocab_size;
                let mut layers = Vec::with_capacity(lstm.len());
                for &hidden in lstm {
                    let mut bias = vec![0.0; 4 * hidden];
                    bias[hidden..2 * hidden].fill(1.0);
                    layers.push(Lstm {
                        hidden,
                        weights: draw_matrix(4 * hidden, input + hidden, &mut rng),
                        bias,
                    });
                    input = hidden;
                }
                (Body::Rnn { layers }, input)
            }
        };
        let output = Dense {
            weights: draw_matrix(1, last, &mut rng),
            bias: vec![0.0],
        };
        Ok(Self {
            architecture,
            weight_seed,
            vocab_size,
            length,
            body,
            output,
        })
    }

    /// Dense-only network with explicit `(weights, bias)` per layer, the last
    /// layer being the single-unit output. Test hook.
    pub fn from_dense_layers(vocab_size: usize, length: usize, layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>) -> Result<Self> {
        let mut width = vocab_size * length;
        let mut dense = Vec::new();
        for (weights, bias) in layers {
            if weights.len() != bias.len() || weights.iter().any(|r| r.len() != width) {
                return Err(Error::invalid("dense layer shape mismatch"));
            }
            width = weights.len();
            dense.push(Dense { weights, bias });
        }
        let output = dense.pop().ok_or_else(|| Error::invalid("need at least an output layer"))?;
        if output.weights.len() != 1 {
            return Err(Error::invalid("output layer must have one unit"));
        }
        let sizes = dense.iter().map(|d| d.bias.len()).collect();
        Ok(Self {
            architecture: Architecture::Mlp { conv: false, dense: sizes },
            weight_seed: 0,
            vocab_size,
            length,
            body: Body::Mlp { conv: None, dense },
            output,
        })
    }

    /// Same shapes as [`RandomNetOracle::new`] with every weight and bias set
    /// to zero. Test hook.
    pub fn zeroed(architecture: Architecture, vocab_size: usize, length: usize) -> Result<Self> {
        let mut net = Self::new(architecture, vocab_size, length, 0)?;
        let zero = |m: &mut Vec<Vec<f64>>| m.iter_mut().flatten().for_each(|w| *w = 0.0);
        match &mut net.body {
            Body::Mlp { conv, dense } => {
                if let Some(c) = conv {
                    zero(&mut c.kernels);
                }
                for d in dense {
                    zero(&mut d.weights);
                    d.bias.fill(0.0);
                }
            }
            Body::Rnn { layers } => {
                for l in layers {
                    zero(&mut l.weights);
                    l.bias.fill(0.0);
                }
            }
        }
        zero(&mut net.output.weights);
        net.output.bias.fill(0.0);
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn weight_seed(&self) -> u64 {
        self.weight_seed
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn forward(&self, x: &Sequence) -> f64 {
        let v = self.vocab_size;
        let tokens = x.tokens();
        let features = match &self.body {
            Body::Mlp { conv, dense } => {
                let mut h = match conv {
                    Some(c) => self.convolve(c, tokens),
                    None => crate::seq::one_hot_encode(x, v),
                };
                for layer in dense {
                    h = layer.apply(&h);
                    relu(&mut h);
                }
                h
            }
            Body::Rnn { layers } => {
                let mut inputs: Vec<Vec<f64>> = tokens
                    .iter()
                    .map(|&t| {
                        let mut e = vec![0.0; v];
                        e[usize::from(t)] = 1.0;
                        e
                    })
                    .collect();
                for layer in layers {
                    inputs = run_lstm(layer, &inputs);
                }
                inputs.pop().unwrap_or_default()
            }
        };
        self.output.apply(&features)[0]
    }

    /// "Same" zero-padded convolution with ReLU, flattened position-major.
    fn convolve(&self, conv: &Conv, tokens: &[u8]) -> Vec<f64> {
        let v = self.vocab_size;
        let half = CONV_WIDTH / 2;
        let mut out = vec![0.0; tokens.len() * CONV_FILTERS];
        for p in 0..tokens.len() {
            for (f, kernel) in conv.kernels.iter().enumerate() {
                let mut acc = 0.0;
                for offset in 0..CONV_WIDTH {
                    let q = p + offset;
                    if q < half || q - half >= tokens.len() {
                        continue;
                    }
                    acc += kernel[offset * v + usize::from(tokens[q - half])];
                }
                out[p * CONV_FILTERS + f] = acc.max(0.0);
            }
        }
        out
    }
}

fn run_lstm(layer: &Lstm, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h_n = layer.hidden;
    let mut h = vec![0.0; h_n];
    let mut c = vec![0.0; h_n];
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut z = vec![0.0; inputs.first().map_or(0, Vec::len) + h_n];
    for x in inputs {
        z.clear();
        z.extend_from_slice(x);
        z.extend_from_slice(&h);
        let pre: Vec<f64> = layer
            .weights
            .iter()
            .zip(&layer.bias)
            .map(|(row, b)| b + row.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        for j in 0..h_n {
            let i = sigmoid(pre[j]);
            let f = sigmoid(pre[h_n + j]);
            let g = pre[2 * h_n + j].tanh();
            let o = sigmoid(pre[3 * h_n + j]);
            c[j] = f * c[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        outputs.push(h.clone());
    }
    outputs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::seq::{SearchSpace, Vocabulary};

    fn archs() -> Vec<Architecture> {
        vec![
            Architecture::Mlp { conv: false, dense: vec![128] },
            Architecture::Mlp { conv: true, dense: vec![128] },
            Architecture::Mlp { conv: false, dense: vec![128, 256, 512] },
            Architecture::Rnn { lstm: vec![128] },
            Architecture::Rnn { lstm: vec![128, 256] },
        ]
    }

    #[test]
    fn zeroed_network_outputs_zero() {
        let mut r = rng::from_seed(0);
        for arch in archs() {
            let net = RandomNetOracle::zeroed(arch, 4, 10).unwrap();
            for _ in 0..5 {
                let x = Sequence::random(SearchSpace::new(4, 10), &mut r);
                assert_eq!(net.forward(&x), 0.0);
            }
        }
    }

    #[test]
    fn hand_checked_dense_layer() {
        // hidden = relu(W x + b) with W 2x4, output = u . hidden + c
        let w = vec![vec![1.0, -2.0, 0.5, 3.0], vec![-1.0, 1.0, 2.0, -0.5]];
        let b = vec![0.25, -0.5];
        let u = vec![vec![2.0, -1.0]];
        let c = vec![0.1];
        let net = RandomNetOracle::from_dense_layers(2, 2, vec![(w, b), (u, c)]).unwrap();
        let v = Vocabulary::letters(2).unwrap();
        // AB -> x = [1,0,0,1]: W x + b = [4.25, -2.0] -> relu [4.25, 0] -> 8.6
        assert!((net.forward(&v.parse("AB").unwrap()) - 8.6).abs() < 1e-12);
        // BA -> x = [0,1,1,0]: W x + b = [-1.25, 2.5] -> relu [0, 2.5] -> -2.4
        assert!((net.forward(&v.parse("BA").unwrap()) + 2.4).abs() < 1e-12);
    }

    #[test]
    fn single_output_layer_is_affine() {
        let w = vec![vec![0.5, -1.0, 2.0, 4.0]];
        let net = RandomNetOracle::from_dense_layers(2, 2, vec![(w, vec![1.0])]).unwrap();
        let v = Vocabulary::letters(2).unwrap();
        assert_eq!(net.forward(&v.parse("AA").unwrap()), 1.0 + 0.5 + 2.0);
        assert_eq!(net.forward(&v.parse("BB").unwrap()), 1.0 - 1.0 + 4.0);
    }

    #[test]
    fn same_seed_same_outputs() {
        let mut r = rng::from_seed(9);
        for arch in archs() {
            let a = RandomNetOracle::new(arch.clone(), 4, 12, 77).unwrap();
            let b = RandomNetOracle::new(arch.clone(), 4, 12, 77).unwrap();
            let c = RandomNetOracle::new(arch, 4, 12, 78).unwrap();
            let x = Sequence::random(SearchSpace::new(4, 12), &mut r);
            assert_eq!(a.forward(&x).to_bits(), b.forward(&x).to_bits());
            assert_ne!(a.forward(&x), c.forward(&x));
        }
    }

    #[test]
    fn conv_sees_only_local_window() {
        // Positions beyond the kernel half-width do not affect the first
        // convolution output; check via a network whose dense layer reads
        // only position 0's filters.
        let net = RandomNetOracle::new(Architecture::Mlp { conv: true, dense: vec![128] }, 4, 20, 3).unwrap();
        let Body::Mlp { conv: Some(c), .. } = &net.body else { unreachable!() };
        let mut a = vec![0u8; 20];
        let mut b = a.clone();
        b[19] = 3;
        let fa = net.convolve(c, &a);
        let fb = net.convolve(c, &b);
        assert_eq!(fa[..CONV_FILTERS], fb[..CONV_FILTERS]);
        a[6] = 2;
        let fc = net.convolve(c, &a);
        assert_ne!(fc[..CONV_FILTERS], fb[..CONV_FILTERS]);
    }

    #[test]
    fn rejects_bad_architectures() {
        assert!(RandomNetOracle::new(Architecture::Mlp { conv: false, dense: vec![] }, 4, 5, 0).is_err());
        assert!(RandomNetOracle::new(Architecture::Rnn { lstm: vec![64] }, 4, 5, 0).is_err());
        assert!(RandomNetOracle::new(Architecture::Rnn { lstm: vec![128; 4] }, 4, 5, 0).is_err());
    }
}
