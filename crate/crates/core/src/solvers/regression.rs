//! Linear surrogates on one-hot features: a ridge grid and Bayesian ridge,
//! scored by 5-fold cross-validated explained variance.
//!
//! One eigendecomposition `X^T X = V diag(s) V^T` serves every model: ridge
//! with penalty `l` has weights `V diag(1/(s + l)) V^T X^T y`, Bayesian ridge
//! runs its evidence updates in the same basis, and each held-out fold is
//! downdated with the Woodbury identity instead of being refit. Targets are
//! centred by the mean of the full dataset throughout.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;

use crate::rng;
use crate::seq::{active_features, Sequence};
use crate::stats::{explained_variance, mean, variance};

pub const RIDGE_GRID: [f64; 5] = [1e-3, 0.1, 1.0, 10.0, 100.0];
pub const CV_FOLDS: usize = 5;
const CV_SEED: u64 = 0x5eed_cf01d;
const BR_MAX_ITER: usize = 300;
const BR_TOL: f64 = 1e-3;
const BR_HYPER: f64 = 1e-6;
const MIN_PENALTY: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MemberKind {
    Ridge { lambda: f64 },
    /// Noise precision `alpha` and weight precision `lambda`.
    BayesianRidge { alpha: f64, lambda: f64 },
}

#[derive(Clone, Debug)]
pub struct Member {
    pub kind: MemberKind,
    pub weights: Vec<f64>,
    /// Mean explained variance over the held-out folds.
    pub cv_score: f64,
}

impl Member {
    pub fn is_bayesian(&self) -> bool {
        matches!(self.kind, MemberKind::BayesianRidge { .. })
    }
}

/// All candidate regressors fitted on one dataset.
#[derive(Debug)]
pub struct FittedModels {
    pub dim: usize,
    pub vocab_size: usize,
    pub intercept: f64,
    /// Ridge members in grid order, then Bayesian ridge last.
    pub members: Vec<Member>,
    /// Labels had (numerically) zero variance; every member is the constant.
    pub low_confidence: bool,
    eigen: Option<(DMatrix<f64>, Vec<f64>)>,
    covariance: OnceLock<DMatrix<f64>>,
}

/// Row partition used for cross-validation; fold of row `perm[i]` is `i % folds`.
pub fn fold_assignment(n: usize, folds: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::from_seed(CV_SEED));
    let mut fold = vec![0; n];
    for (i, &row) in perm.iter().enumerate() {
        fold[row] = i % folds;
    }
    fold
}

struct Evidence {
    alpha: f64,
    lambda: f64,
}

/// Evidence maximisation for Bayesian ridge (MacKay updates with Gamma
/// hyperpriors), in the eigenbasis of `X^T X`.
fn bayesian_evidence(s: &[f64], c: &[f64], yy: f64, n: usize, var_y: f64) -> Evidence {
    let mut alpha = 1.0 / (var_y + f64::EPSILON);
    let mut lambda = 1.0;
    let mut prev: Option<Vec<f64>> = None;
    for _ in 0..BR_MAX_ITER {
        let coef: Vec<f64> = s.iter().zip(c).map(|(si, ci)| ci / (si + lambda / alpha)).collect();
        let coef_sq: f64 = coef.iter().map(|w| w * w).sum();
        let fit_cross: f64 = coef.iter().zip(c).map(|(w, ci)| w * ci).sum();
        let fit_sq: f64 = coef.iter().zip(s).map(|(w, si)| si * w * w).sum();
        let rss = (yy - 2.0 * fit_cross + fit_sq).max(0.0);
        let gamma: f64 = s.iter().map(|si| alpha * si / (lambda + alpha * si)).sum();
        lambda = (gamma + 2.0 * BR_HYPER) / (coef_sq + 2.0 * BR_HYPER);
        alpha = (n as f64 - gamma + 2.0 * BR_HYPER) / (rss + 2.0 * BR_HYPER);
        if let Some(p) = &prev {
            let delta: f64 = p.iter().zip(&coef).map(|(a, b)| (a - b).abs()).sum();
            if delta < BR_TOL {
                break;
            }
        }
        prev = Some(coef);
    }
    Evidence { alpha, lambda }
}

impl FittedModels {
    pub fn fit(sequences: &[&Sequence], y: &[f64], vocab_size: usize) -> Self {
        assert_eq!(sequences.len(), y.len());
        assert!(!sequences.is_empty(), "regression needs data");
        let length = sequences[0].len();
        let d = length * vocab_size;
        let n = y.len();
        let intercept = mean(y);
        let var_y = variance(y);
        let constant = |kind| Member {
            kind,
            weights: vec![0.0; d],
            cv_score: 0.0,
        };
        if !(var_y > 1e-12) {
            let mut members: Vec<Member> = RIDGE_GRID.iter().map(|&l| constant(MemberKind::Ridge { lambda: l })).collect();
            members.push(constant(MemberKind::BayesianRidge {
                alpha: f64::INFINITY,
                lambda: 1.0,
            }));
            return Self {
                dim: d,
                vocab_size,
                intercept,
                members,
                low_confidence: true,
                eigen: None,
                covariance: OnceLock::new(),
            };
        }

        let rows: Vec<Vec<usize>> = sequences.iter().map(|s| active_features(s, vocab_size).collect()).collect();
        let yc: Vec<f64> = y.iter().map(|v| v - intercept).collect();
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut b = DVector::<f64>::zeros(d);
        for (row, &t) in rows.iter().zip(&yc) {
            for &a in row {
                b[a] += t;
                for &c in row {
                    gram[(a, c)] += 1.0;
                }
            }
        }
        let eig = SymmetricEigen::new(gram);
        let basis = eig.eigenvectors;
        let s: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let c_full = basis.tr_mul(&b);
        let c: Vec<f64> = c_full.iter().copied().collect();
        let yy: f64 = yc.iter().map(|v| v * v).sum();
        let ev = bayesian_evidence(&s, &c, yy, n, var_y);

        let mut penalties: Vec<f64> = RIDGE_GRID.to_vec();
        penalties.push((ev.lambda / ev.alpha).max(MIN_PENALTY));
        let scores = cv_scores(&rows, y, &yc, intercept, &basis, &s, &c_full, &penalties);

        let members = penalties
            .iter()
            .zip(scores)
            .enumerate()
            .map(|(i, (&pen, cv_score))| {
                let scaled = DVector::from_iterator(d, s.iter().zip(&c).map(|(si, ci)| ci / (si + pen)));
                let w = &basis * scaled;
                let kind = if i < RIDGE_GRID.len() {
                    MemberKind::Ridge { lambda: pen }
                } else {
                    MemberKind::BayesianRidge {
                        alpha: ev.alpha,
                        lambda: ev.lambda,
                    }
                };
                Member {
                    kind,
                    weights: w.iter().copied().collect(),
                    cv_score,
                }
            })
            .collect();
        Self {
            dim: d,
            vocab_size,
            intercept,
            members,
            low_confidence: false,
            eigen: Some((basis, s)),
            covariance: OnceLock::new(),
        }
    }

    pub fn bayesian(&self) -> &Member {
        self.members.last().expect("bayesian ridge member")
    }

    pub fn predict(&self, member: &Member, x: &Sequence) -> f64 {
        self.intercept
            + active_features(x, self.vocab_size)
                .map(|f| member.weights[f])
                .sum::<f64>()
    }

    /// Bayesian ridge predictive variance `1/alpha + x^T Sigma x`.
    pub fn bayesian_variance(&self, x: &Sequence) -> f64 {
        let MemberKind::BayesianRidge { alpha, lambda } = self.bayesian().kind else {
            unreachable!("last member is bayesian ridge")
        };
        let Some((basis, s)) = &self.eigen else {
            return 0.0;
        };
        let sigma = self.covariance.get_or_init(|| {
            let mut scaled = basis.clone();
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                col *= 1.0 / (alpha * s[j] + lambda).sqrt();
            }
            &scaled * scaled.transpose()
        });
        let active: Vec<usize> = active_features(x, self.vocab_size).collect();
        let quad: f64 = active
            .iter()
            .map(|&a| active.iter().map(|&b| sigma[(a, b)]).sum::<f64>())
            .sum();
        1.0 / alpha + quad.max(0.0)
    }
}

/// Held-out explained variance per penalty, averaged over folds.
///
/// With `A = X^T X + l I` and the fold's rows `U`, the training-only solution
/// is `(A - U^T U)^{-1} (b - U^T y_k)`; its held-out predictions equal
/// `(I - H)^{-1} u` where `H = U A^{-1} U^T` and `u = U A^{-1} b_train`.
#[allow(clippy::too_many_arguments)]
fn cv_scores(
    rows: &[Vec<usize>],
    y: &[f64],
    yc: &[f64],
    intercept: f64,
    basis: &DMatrix<f64>,
    s: &[f64],
    c: &DVector<f64>,
    penalties: &[f64],
) -> Vec<f64> {
    let n = rows.len();
    let d = s.len();
    let folds = fold_assignment(n, CV_FOLDS);
    let mut totals = vec![0.0; penalties.len()];
    let mut used = 0usize;
    for k in 0..CV_FOLDS {
        let held: Vec<usize> = (0..n).filter(|&i| folds[i] == k).collect();
        if held.is_empty() {
            continue;
        }
        used += 1;
        let m = held.len();
        let mut z = DMatrix::<f64>::zeros(m, d);
        for (r, &i) in held.iter().enumerate() {
            for &a in &rows[i] {
                for j in 0..d {
                    z[(r, j)] += basis[(a, j)];
                }
            }
        }
        let yk = DVector::from_iterator(m, held.iter().map(|&i| yc[i]));
        let c_train = c - z.tr_mul(&yk);
        let y_true: Vec<f64> = held.iter().map(|&i| y[i]).collect();
        for (p, &pen) in penalties.iter().enumerate() {
            let dvec: Vec<f64> = s.iter().map(|si| 1.0 / (si + pen)).collect();
            let u = &z * DVector::from_iterator(d, c_train.iter().zip(&dvec).map(|(ci, di)| ci * di));
            let mut zs = z.clone();
            for (j, mut col) in zs.column_iter_mut().enumerate() {
                col *= dvec[j].sqrt();
            }
            let h = &zs * zs.transpose();
            let system = DMatrix::<f64>::identity(m, m) - h;
            let pred = match system.clone().cholesky() {
                Some(ch) => ch.solve(&u),
                None => system.lu().solve(&u).unwrap_or_else(|| DVector::zeros(m)),
            };
            let y_hat: Vec<f64> = pred.iter().map(|v| intercept + v).collect();
            totals[p] += explained_variance(&y_true, &y_hat);
        }
    }
    totals.into_iter().map(|t| t / used.max(1) as f64).collect()
}
