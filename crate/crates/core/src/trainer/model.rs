use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::SparseVector;
use super::TrainConfig;
use crate::{Error, Result};

/// Per-code logistic regression over hashed features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    n_codes: usize,
    dim: usize,
    /// Row-major `n_codes × dim`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(n_codes: usize, dim: usize) -> Self {
        ModelParams {
            n_codes,
            dim,
            weights: vec![0.0; n_codes * dim],
            biases: vec![0.0; n_codes],
        }
    }

    pub fn from_parts(n_codes: usize, dim: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != n_codes * dim || biases.len() != n_codes {
            return Err(Error::Shape(format!(
                "{} weights and {} biases for {n_codes} codes × {dim} features",
                weights.len(),
                biases.len()
            )));
        }
        if let Some(k) = weights.iter().chain(&biases).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("parameter {k}"),
            });
        }
        Ok(ModelParams {
            n_codes,
            dim,
            weights,
            biases,
        })
    }

    pub fn n_codes(&self) -> usize {
        self.n_codes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weight(&self, code: usize, feature: usize) -> f64 {
        self.weights[code * self.dim + feature]
    }

    pub fn weight_mut(&mut self, code: usize, feature: usize) -> &mut f64 {
        &mut self.weights[code * self.dim + feature]
    }

    pub fn bias_mut(&mut self, code: usize) -> &mut f64 {
        &mut self.biases[code]
    }

    /// Takes a gradient step `params -= lr * grad`.
    pub fn apply(&mut self, grad: &Gradient, lr: f64) {
        for (&j, column) in &grad.columns {
            for (c, g) in column.iter().enumerate() {
                self.weights[c * self.dim + j as usize] -= lr * g;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            *b -= lr * g;
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unclamped sigmoid outputs.
fn raw_probabilities(params: &ModelParams, x: &SparseVector) -> Result<Vec<f64>> {
    if let Some(max) = x.max_index() {
        if max as usize >= params.dim {
            return Err(Error::Shape(format!("feature {max} outside dimension {}", params.dim)));
        }
    }
    (0..params.n_codes)
        .map(|c| {
            let mut z = params.biases[c];
            for &(j, v) in x.entries() {
                z += params.weight(c, j as usize) * v;
            }
            if z.is_finite() {
                Ok(sigmoid(z))
            } else {
                Err(Error::NonFinite {
                    what: format!("logit for code {c}"),
                })
            }
        })
        .collect()
}

/// Per-code probabilities `clamp(sigmoid(w·x + b), eps, 1 - eps)`.
pub fn forward(params: &ModelParams, x: &SparseVector, eps: f64) -> Result<Vec<f64>> {
    Ok(raw_probabilities(params, x)?
        .into_iter()
        .map(|s| s.clamp(eps, 1.0 - eps))
        .collect())
}

/// Mean binary cross-entropy over codes.
pub fn ce_loss(p: &[f64], y: &[bool]) -> f64 {
    assert_eq!(p.len(), y.len());
    let sum: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| if y { -p.ln() } else { -(1.0 - p).ln() })
        .sum();
    sum / p.len() as f64
}

fn kl_bernoulli(p: f64, q: f64) -> f64 {
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

/// Mean over codes of the symmetric Bernoulli KL, `½(KL[p‖q] + KL[q‖p])`.
pub fn cons_loss(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let sum: f64 = p
        .iter()
        .zip(q)
        .map(|(&p, &q)| 0.5 * (kl_bernoulli(p, q) + kl_bernoulli(q, p)))
        .sum();
    sum / p.len() as f64
}

/// `½(CE(P, y) + CE(P_a, y)) + α·cons(P, P_a)` for one note.
pub fn total_loss(params: &ModelParams, x_p: &SparseVector, x_pa: &SparseVector, y: &[bool], config: &TrainConfig) -> Result<f64> {
    let p = forward(params, x_p, config.prob_clamp)?;
    let q = forward(params, x_pa, config.prob_clamp)?;
    Ok(0.5 * (ce_loss(&p, y) + ce_loss(&q, y)) + config.alpha * cons_loss(&p, &q))
}

/// One training example: feature vectors of the two prompts and the labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x_p: SparseVector,
    pub x_pa: SparseVector,
    pub labels: Vec<bool>,
}

/// Gradient with weight columns stored only for touched features.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub n_codes: usize,
    pub dim: usize,
    /// feature index → per-code partial derivatives.
    pub columns: BTreeMap<u32, Vec<f64>>,
    pub biases: Vec<f64>,
}

impl Gradient {
    fn zeros(n_codes: usize, dim: usize) -> Self {
        Gradient {
            n_codes,
            dim,
            columns: BTreeMap::new(),
            biases: vec![0.0; n_codes],
        }
    }

    fn add_features(&mut self, x: &SparseVector, dz: &[f64]) {
        for &(j, v) in x.entries() {
            let column = self.columns.entry(j).or_insert_with(|| vec![0.0; self.n_codes]);
            for (g, d) in column.iter_mut().zip(dz) {
                *g += d * v;
            }
        }
        for (g, d) in self.biases.iter_mut().zip(dz) {
            *g += d;
        }
    }

    /// Row-major `n_codes × dim` weight gradient and the bias gradient.
    pub fn to_dense(&self) -> (Vec<f64>, Vec<f64>) {
        let mut w = vec![0.0; self.n_codes * self.dim];
        for (&j, column) in &self.columns {
            for (c, g) in column.iter().enumerate() {
                w[c * self.dim + j as usize] = *g;
            }
        }
        (w, self.biases.clone())
    }
}

/// Logit-space derivative of the per-note loss for one prompt's codes, given
/// its own probabilities `own` and the other prompt's `other`. Codes whose
/// probability is clamped get zero.
fn logit_grad(raw: &[f64], own: &[f64], other: &[f64], y: &[bool], config: &TrainConfig) -> Vec<f64> {
    let n = own.len() as f64;
    let eps = config.prob_clamp;
    raw.iter()
        .zip(own)
        .zip(other)
        .zip(y)
        .map(|(((&s, &p), &q), &y)| {
            if s < eps || s > 1.0 - eps {
                return 0.0;
            }
            let ce = 0.5 * (p - f64::from(u8::from(y)));
            let cons = 0.5 * (p * (1.0 - p) * (logit(p) - logit(q)) + (p - q));
            (ce + config.alpha * cons) / n
        })
        .collect()
}

/// Analytic gradient of the batch-mean `total_loss`.
pub fn gradient(params: &ModelParams, batch: &[Example], config: &TrainConfig) -> Result<Gradient> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("gradient of an empty batch".into()));
    }
    let mut grad = Gradient::zeros(params.n_codes, params.dim);
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        if ex.labels.len() != params.n_codes {
            return Err(Error::Shape(format!("{} labels for {} codes", ex.labels.len(), params.n_codes)));
        }
        let raw_p = raw_probabilities(params, &ex.x_p)?;
        let raw_q = raw_probabilities(params, &ex.x_pa)?;
        let eps = config.prob_clamp;
        let p: Vec<f64> = raw_p.iter().map(|s| s.clamp(eps, 1.0 - eps)).collect();
        let q: Vec<f64> = raw_q.iter().map(|s| s.clamp(eps, 1.0 - eps)).collect();
        let dz_p: Vec<f64> = logit_grad(&raw_p, &p, &q, &ex.labels, config).iter().map(|d| d * scale).collect();
        let dz_q: Vec<f64> = logit_grad(&raw_q, &q, &p, &ex.labels, config).iter().map(|d| d * scale).collect();
        grad.add_features(&ex.x_p, &dz_p);
        grad.add_features(&ex.x_pa, &dz_q);
    }
    Ok(grad)
}

/// Mean `total_loss` over a batch.
pub fn batch_loss(params: &ModelParams, batch: &[Example], config: &TrainConfig) -> Result<f64> {
    let mut sum = 0.0;
    for ex in batch {
        sum += total_loss(params, &ex.x_p, &ex.x_pa, &ex.labels, config)?;
    }
    Ok(sum / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::features::featurize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(alpha: f64) -> TrainConfig {
        TrainConfig {
            alpha,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn forward_basics() {
        let params = ModelParams::zeros(3, 8);
        let x = SparseVector::from_buckets(&[1, 1, 5]);
        assert_eq!(forward(&params, &x, 1e-7).unwrap(), vec![0.5; 3]);
        let mut big = ModelParams::zeros(1, 4);
        *big.bias_mut(0) = 100.0;
        assert_eq!(forward(&big, &SparseVector::default(), 1e-7).unwrap(), vec![1.0 - 1e-7]);
        *big.bias_mut(0) = f64::NAN;
        assert!(forward(&big, &SparseVector::default(), 1e-7).is_err());
        assert!(forward(&params, &SparseVector::from_buckets(&[9]), 1e-7).is_err());
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let weights: Vec<f64> = (0..3 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let biases = vec![0.3, -0.2, 0.0];
        let params = ModelParams::from_parts(3, 5, weights.clone(), biases.clone()).unwrap();
        let x = SparseVector::from_buckets(&[0, 2, 2, 4]);
        let dense = [1.0, 0.0, 2.0, 0.0, 1.0];
        let p = forward(&params, &x, 1e-7).unwrap();
        for c in 0..3 {
            let z: f64 = biases[c] + (0..5).map(|j| weights[c * 5 + j] * dense[j]).sum::<f64>();
            assert!((p[c] - 1.0 / (1.0 + (-z).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_hand_values() {
        assert!((ce_loss(&[0.5], &[true]) - std::f64::consts::LN_2).abs() < 1e-15);
        let eps = 1e-7;
        assert!((ce_loss(&[1.0 - eps, eps], &[true, false]) + (1.0 - eps).ln()).abs() < 1e-15);
        // 0.1927 and 0.2231 averaged.
        let kl = cons_loss(&[0.8], &[0.5]);
        assert!((kl - 0.2079).abs() < 1e-3, "{kl}");
        assert!((kl_bernoulli(0.8, 0.5) - 0.19274).abs() < 1e-4);
        assert!((kl_bernoulli(0.5, 0.8) - 0.22314).abs() < 1e-4);
        assert_eq!(cons_loss(&[0.3, 0.9], &[0.3, 0.9]), 0.0);
        assert_eq!(cons_loss(&[0.2, 0.7], &[0.6, 0.1]), cons_loss(&[0.6, 0.1], &[0.2, 0.7]));
    }

    #[test]
    fn total_loss_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = random_params(&mut rng, 4, 16);
        let xp = featurize("oa left knee", 16).unwrap();
        let xa = featurize("osteoarthritis left knee", 16).unwrap();
        let y = [true, false, true, false];
        let p = forward(&params, &xp, 1e-7).unwrap();
        let q = forward(&params, &xa, 1e-7).unwrap();
        let l0 = total_loss(&params, &xp, &xa, &y, &config(0.0)).unwrap();
        assert_eq!(l0, 0.5 * (ce_loss(&p, &y) + ce_loss(&q, &y)));
        let l = total_loss(&params, &xp, &xa, &y, &config(0.05)).unwrap();
        assert_eq!(l, 0.5 * (ce_loss(&p, &y) + ce_loss(&q, &y)) + 0.05 * cons_loss(&p, &q));
        assert_eq!(total_loss(&params, &xa, &xp, &y, &config(0.05)).unwrap(), l);
        let same = total_loss(&params, &xp, &xp, &y, &config(0.05)).unwrap();
        assert_eq!(same, ce_loss(&p, &y));
    }

    fn random_params(rng: &mut ChaCha8Rng, n_codes: usize, dim: usize) -> ModelParams {
        let w = (0..n_codes * dim).map(|_| rng.random_range(-0.5..0.5)).collect();
        let b = (0..n_codes).map(|_| rng.random_range(-0.5..0.5)).collect();
        ModelParams::from_parts(n_codes, dim, w, b).unwrap()
    }

    fn random_batch(rng: &mut ChaCha8Rng, n_codes: usize, dim: usize) -> Vec<Example> {
        (0..rng.random_range(1..4))
            .map(|_| {
                let bp: Vec<u32> = (0..rng.random_range(0..6)).map(|_| rng.random_range(0..dim as u32)).collect();
                let ba: Vec<u32> = (0..rng.random_range(0..6)).map(|_| rng.random_range(0..dim as u32)).collect();
                Example {
                    x_p: SparseVector::from_buckets(&bp),
                    x_pa: SparseVector::from_buckets(&ba),
                    labels: (0..n_codes).map(|_| rng.random_bool(0.4)).collect(),
                }
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let n_codes = rng.random_range(1..5);
            let dim = rng.random_range(2..10);
            let params = random_params(&mut rng, n_codes, dim);
            let batch = random_batch(&mut rng, n_codes, dim);
            let cfg = config(rng.random_range(0.0..2.0));
            let (gw, gb) = gradient(&params, &batch, &cfg).unwrap().to_dense();
            let h = 1e-5;
            for k in 0..n_codes * dim + n_codes {
                let bump = |delta: f64| {
                    let mut p = params.clone();
                    if k < n_codes * dim {
                        *p.weight_mut(k / dim, k % dim) += delta;
                    } else {
                        *p.bias_mut(k - n_codes * dim) += delta;
                    }
                    batch_loss(&p, &batch, &cfg).unwrap()
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = if k < n_codes * dim { gw[k] } else { gb[k - n_codes * dim] };
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-6) + 1e-9, "coord {k}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn gradient_is_linear_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = random_params(&mut rng, 3, 6);
        let batch = random_batch(&mut rng, 3, 6);
        let g = |a: f64| gradient(&params, &batch, &config(a)).unwrap().to_dense();
        let (w0, b0) = g(0.0);
        let (w1, b1) = g(0.3);
        let (w2, b2) = g(0.6);
        for ((a, b), c) in w0.iter().chain(&b0).zip(w1.iter().chain(&b1)).zip(w2.iter().chain(&b2)) {
            assert!(((c - a) - 2.0 * (b - a)).abs() < 1e-10);
        }
    }

    #[test]
    fn clamped_outputs_have_zero_gradient() {
        let mut params = ModelParams::zeros(1, 2);
        *params.bias_mut(0) = 40.0;
        let ex = Example {
            x_p: SparseVector::from_buckets(&[0]),
            x_pa: SparseVector::from_buckets(&[1]),
            labels: vec![true],
        };
        let g = gradient(&params, &[ex], &config(0.05)).unwrap();
        assert!(g.biases.iter().chain(g.columns.values().flatten()).all(|&v| v == 0.0));
    }
}
