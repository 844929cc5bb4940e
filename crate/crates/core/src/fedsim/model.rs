//! Small classifiers with analytic gradients: multinomial logistic
//! regression and a one-hidden-layer tanh MLP. Parameters live in one flat
//! vector so that model deltas are directly update vectors.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Rng;

use super::data::SyntheticDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    Logistic,
    Mlp { hidden: usize },
}

/// Shape of a model: architecture plus input and output widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub num_features: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn param_count(&self) -> usize {
        let (p, c) = (self.num_features, self.num_classes);
        match self.architecture {
            Architecture::Logistic => c * p + c,
            Architecture::Mlp { hidden: h } => h * p + h + c * h + c,
        }
    }

    /// Uniform Glorot initialization for weights, zero biases.
    pub fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let (p, c) = (self.num_features, self.num_classes);
        let mut params = vec![0.0; self.param_count()];
        let mut fill = |slice: &mut [f64], fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            slice.iter_mut().for_each(|w| *w = rng.random_range(-a..a));
        };
        match self.architecture {
            Architecture::Logistic => fill(&mut params[..c * p], p, c),
            Architecture::Mlp { hidden: h } => {
                fill(&mut params[..h * p], p, h);
                let w2 = h * p + h;
                fill(&mut params[w2..w2 + c * h], h, c);
            }
        }
        params
    }

    fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: self.param_count(),
                found: params.len(),
            });
        }
        Ok(())
    }

    /// Class logits for one input row.
    pub fn logits(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let (p, c) = (self.num_features, self.num_classes);
        match self.architecture {
            Architecture::Logistic => affine(&params[..c * p], &params[c * p..c * p + c], x),
            Architecture::Mlp { hidden: h } => {
                let (w1, rest) = params.split_at(h * p);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                let hidden: Vec<f64> = affine(w1, b1, x).into_iter().map(f64::tanh).collect();
                affine(w2, b2, &hidden)
            }
        }
    }

    /// Predicted class; ties go to the lowest class index.
    pub fn predict(&self, params: &[f64], x: &[f64]) -> usize {
        argmax(&self.logits(params, x))
    }

    pub fn accuracy(&self, params: &[f64], data: &SyntheticDataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let correct = (0..data.len())
            .filter(|&i| self.predict(params, data.row(i)) == data.labels[i])
            .count();
        correct as f64 / data.len() as f64
    }

    /// Mean cross-entropy over `rows` plus `0.5 * weight_decay * ||params||^2`.
    pub fn loss(
        &self,
        params: &[f64],
        data: &SyntheticDataset,
        rows: &[usize],
        weight_decay: f64,
    ) -> f64 {
        let ce: f64 = rows
            .iter()
            .map(|&i| {
                let z = self.logits(params, data.row(i));
                log_sum_exp(&z) - z[data.labels[i]]
            })
            .sum::<f64>()
            / rows.len() as f64;
        ce + 0.5 * weight_decay * params.iter().map(|w| w * w).sum::<f64>()
    }

    /// Loss and its gradient with respect to `params` over the given rows.
    pub fn loss_and_grad(
        &self,
        params: &[f64],
        data: &SyntheticDataset,
        rows: &[usize],
        weight_decay: f64,
    ) -> Result<(f64, Vec<f64>)> {
        self.check(params)?;
        if rows.is_empty() {
            return Err(Error::Empty("gradient over zero rows"));
        }
        let (p, c) = (self.num_features, self.num_classes);
        let mut grad = vec![0.0; params.len()];
        let mut ce = 0.0;
        let scale = 1.0 / rows.len() as f64;

        match self.architecture {
            Architecture::Logistic => {
                let (w, b) = params.split_at(c * p);
                for &i in rows {
                    let x = data.row(i);
                    let z = affine(w, &b[..c], x);
                    let (probs, lse) = softmax(&z);
                    let y = data.labels[i];
                    ce += lse - z[y];
                    let (gw, gb) = grad.split_at_mut(c * p);
                    for k in 0..c {
                        let delta = (probs[k] - f64::from(u8::from(k == y))) * scale;
                        gb[k] += delta;
                        for (g, xj) in gw[k * p..(k + 1) * p].iter_mut().zip(x) {
                            *g += delta * xj;
                        }
                    }
                }
            }
            Architecture::Mlp { hidden: h } => {
                let (w1, rest) = params.split_at(h * p);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                let (gw1, grest) = grad.split_at_mut(h * p);
                let (gb1, grest) = grest.split_at_mut(h);
                let (gw2, gb2) = grest.split_at_mut(c * h);
                let mut back = vec![0.0; h];
                for &i in rows {
                    let x = data.row(i);
                    let a: Vec<f64> = affine(w1, b1, x).into_iter().map(f64::tanh).collect();
                    let z = affine(w2, b2, &a);
                    let (probs, lse) = softmax(&z);
                    let y = data.labels[i];
                    ce += lse - z[y];
                    back.iter_mut().for_each(|v| *v = 0.0);
                    for k in 0..c {
                        let delta = (probs[k] - f64::from(u8::from(k == y))) * scale;
                        gb2[k] += delta;
                        let row = &w2[k * h..(k + 1) * h];
                        for j in 0..h {
                            gw2[k * h + j] += delta * a[j];
                            back[j] += delta * row[j];
                        }
                    }
                    for j in 0..h {
                        let dz = back[j] * (1.0 - a[j] * a[j]);
                        gb1[j] += dz;
                        for (g, xk) in gw1[j * p..(j + 1) * p].iter_mut().zip(x) {
                            *g += dz * xk;
                        }
                    }
                }
            }
        }

        let mut sq = 0.0;
        for (g, w) in grad.iter_mut().zip(params) {
            *g += weight_decay * w;
            sq += w * w;
        }
        Ok((ce * scale + 0.5 * weight_decay * sq, grad))
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(k, bk)| bk + crate::tensor::dot(&w[k * cols..(k + 1) * cols], x))
        .collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> (Vec<f64>, f64) {
    let lse = log_sum_exp(z);
    (z.iter().map(|v| (v - lse).exp()).collect(), lse)
}

pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = k;
        }
    }
    best
}
