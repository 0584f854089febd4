//! Attention MIL with plain (non-gated) attention acting directly on the
//! patch features:
//!
//! ```text
//! e_n = w . tanh(V f_n)      a = softmax(e)      z' = sum_n a_n f_n
//! logits = W_c z' + b_c
//! ```
//!
//! The hidden width is `h = max(1, d / 4)`. Gradients are derived by hand.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{adamw_step, cosine_lr, AdamState, AdamWConfig};
use crate::error::{Error, Result};
use crate::feature_store::FeatureBag;
use crate::linalg::{self, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SHBABM01";

/// ABMIL weights stored contiguously as `[V (h x d) | w (h) | W_c (S x d) | b_c (S)]`.
///
/// The same type carries gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AbmilParams {
    d: usize,
    h: usize,
    s: usize,
    theta: Vec<f64>,
}

impl AbmilParams {
    pub fn zeros(d: usize, s: usize) -> Self {
        let h = (d / 4).max(1);
        Self::zeros_with_hidden(d, h, s)
    }

    pub fn zeros_with_hidden(d: usize, h: usize, s: usize) -> Self {
        AbmilParams {
            d,
            h,
            s,
            theta: vec![0.0; h * d + h + s * d + s],
        }
    }

    /// PyTorch-style init: every tensor uniform in `+-1/sqrt(fan_in)`.
    pub fn init_uniform(d: usize, s: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(d, s);
        let h = p.h;
        let fill = |xs: &mut [f64], fan_in: usize, rng: &mut dyn rand::RngCore| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            xs.iter_mut()
                .for_each(|x| *x = rng.gen_range(-bound..bound));
        };
        fill(p.v_mut(), d, rng);
        fill(p.w_mut(), h, rng);
        fill(p.wc_mut(), d, rng);
        fill(p.bc_mut(), d, rng);
        p
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.h
    }

    pub fn num_classes(&self) -> usize {
        self.s
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn offsets(&self) -> [usize; 4] {
        let v = 0;
        let w = self.h * self.d;
        let wc = w + self.h;
        let bc = wc + self.s * self.d;
        [v, w, wc, bc]
    }

    pub fn v(&self) -> &[f64] {
        let [v, w, _, _] = self.offsets();
        &self.theta[v..w]
    }

    pub fn w(&self) -> &[f64] {
        let [_, w, wc, _] = self.offsets();
        &self.theta[w..wc]
    }

    pub fn wc(&self) -> &[f64] {
        let [_, _, wc, bc] = self.offsets();
        &self.theta[wc..bc]
    }

    pub fn bc(&self) -> &[f64] {
        let [_, _, _, bc] = self.offsets();
        &self.theta[bc..]
    }

    pub fn v_mut(&mut self) -> &mut [f64] {
        let [v, w, _, _] = self.offsets();
        &mut self.theta[v..w]
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        let [_, w, wc, _] = self.offsets();
        &mut self.theta[w..wc]
    }

    pub fn wc_mut(&mut self) -> &mut [f64] {
        let [_, _, wc, bc] = self.offsets();
        &mut self.theta[wc..bc]
    }

    pub fn bc_mut(&mut self) -> &mut [f64] {
        let [_, _, _, bc] = self.offsets();
        &mut self.theta[bc..]
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    fn check_bag(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.d {
            return Err(Error::Shape(format!(
                "bag dim {} does not match model dim {}",
                x.cols(),
                self.d
            )));
        }
        if x.rows() == 0 {
            return Err(Error::Shape("empty bag".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbmilForward {
    pub attention: Vec<f64>,
    pub pooled: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Forward pass keeping the tanh activations for backprop.
fn forward_cached(p: &AbmilParams, x: &Matrix) -> (AbmilForward, Vec<f64>) {
    let (n, d, h, s) = (x.rows(), p.d, p.h, p.s);
    let (v, w) = (p.v(), p.w());
    let mut hidden = vec![0.0; n * h];
    let mut scores = vec![0.0; n];
    for i in 0..n {
        let f = x.row(i);
        for k in 0..h {
            let t = linalg::dot(&v[k * d..(k + 1) * d], f).tanh();
            hidden[i * h + k] = t;
        }
        scores[i] = linalg::dot(w, &hidden[i * h..(i + 1) * h]);
    }
    let attention = linalg::softmax(&scores);
    // order-free sums keep the pooled vector bit-identical under row permutation
    let mut acc = vec![linalg::ExactSum::new(); d];
    for (i, &a) in attention.iter().enumerate() {
        for (z, &f) in acc.iter_mut().zip(x.row(i)) {
            z.add(a * f);
        }
    }
    let pooled: Vec<f64> = acc.iter().map(linalg::ExactSum::value).collect();
    let (wc, bc) = (p.wc(), p.bc());
    let logits = (0..s)
        .map(|c| linalg::dot(&wc[c * d..(c + 1) * d], &pooled) + bc[c])
        .collect();
    (
        AbmilForward {
            attention,
            pooled,
            logits,
        },
        hidden,
    )
}

pub(crate) fn forward_matrix(p: &AbmilParams, x: &Matrix) -> Result<AbmilForward> {
    p.check_bag(x)?;
    Ok(forward_cached(p, x).0)
}

pub fn abmil_forward(p: &AbmilParams, bag: &FeatureBag) -> Result<AbmilForward> {
    forward_matrix(p, &bag.to_matrix())
}

/// `weight[label] * -log softmax(logits)[label]`.
pub fn weighted_ce(logits: &[f64], label: usize, class_weights: &[f64]) -> f64 {
    class_weights[label] * (linalg::log_sum_exp(logits) - logits[label])
}

/// Loss and exact gradients of `weighted_ce(abmil_forward(..))`.
pub(crate) fn backward_matrix(
    p: &AbmilParams,
    x: &Matrix,
    label: usize,
    class_weights: &[f64],
) -> Result<(f64, AbmilParams)> {
    p.check_bag(x)?;
    let (n, d, h, s) = (x.rows(), p.d, p.h, p.s);
    if label >= s || class_weights.len() != s {
        return Err(Error::Shape(format!(
            "label {label} / {} class weights for {s} classes",
            class_weights.len()
        )));
    }
    let (fwd, hidden) = forward_cached(p, x);
    let loss = weighted_ce(&fwd.logits, label, class_weights);
    let omega = class_weights[label];

    let mut g = AbmilParams::zeros_with_hidden(d, h, s);
    // dL/dlogits
    let mut dlogits = linalg::softmax(&fwd.logits);
    dlogits[label] -= 1.0;
    dlogits.iter_mut().for_each(|v| *v *= omega);

    let wc = p.wc();
    let mut dpooled = vec![0.0; d];
    {
        let gwc = g.wc_mut();
        for c in 0..s {
            for j in 0..d {
                gwc[c * d + j] = dlogits[c] * fwd.pooled[j];
                dpooled[j] += wc[c * d + j] * dlogits[c];
            }
        }
    }
    g.bc_mut().copy_from_slice(&dlogits);

    // through the attention softmax
    let da: Vec<f64> = (0..n).map(|i| linalg::dot(x.row(i), &dpooled)).collect();
    let mean_da = linalg::dot(&fwd.attention, &da);
    let de: Vec<f64> = fwd
        .attention
        .iter()
        .zip(&da)
        .map(|(a, d)| a * (d - mean_da))
        .collect();

    let w = p.w();
    let mut gw = vec![0.0; h];
    let mut gv = vec![0.0; h * d];
    for i in 0..n {
        let t = &hidden[i * h..(i + 1) * h];
        let f = x.row(i);
        for k in 0..h {
            gw[k] += de[i] * t[k];
            let du = de[i] * w[k] * (1.0 - t[k] * t[k]);
            let row = &mut gv[k * d..(k + 1) * d];
            for (gvj, &fj) in row.iter_mut().zip(f) {
                *gvj += du * fj;
            }
        }
    }
    g.w_mut().copy_from_slice(&gw);
    g.v_mut().copy_from_slice(&gv);
    Ok((loss, g))
}

pub fn abmil_backward(
    p: &AbmilParams,
    bag: &FeatureBag,
    label: usize,
    class_weights: &[f64],
) -> Result<AbmilParams> {
    backward_matrix(p, &bag.to_matrix(), label, class_weights).map(|(_, g)| g)
}

/// Predicted class (ties to the lower index) and class probabilities.
pub fn predict_abmil(p: &AbmilParams, bag: &FeatureBag) -> Result<(usize, Vec<f64>)> {
    let fwd = abmil_forward(p, bag)?;
    let probs = linalg::softmax(&fwd.logits);
    Ok((linalg::argmax(&probs), probs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub peak_lr: f64,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    /// Explicit loss weights; `None` means inverse class frequency.
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            peak_lr: 1e-4,
            optimizer: AdamWConfig::default(),
            seed: 0,
            class_weights: None,
        }
    }
}

/// `n_total / (S * n_s)`. Fails when a class has no training bag.
pub fn default_class_weights(labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label {l} >= {num_classes} classes"
            )));
        }
        counts[l] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidInput(format!(
            "class {missing} absent from training split"
        )));
    }
    let total = labels.len() as f64;
    Ok(counts
        .iter()
        .map(|&c| total / (num_classes as f64 * c as f64))
        .collect())
}

/// Batch size 1, one AdamW step per bag, bags reshuffled every epoch, cosine
/// schedule over `epochs * n_bags` steps.
pub fn train_abmil(
    bags: &[&FeatureBag],
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<AbmilParams> {
    if cfg.epochs == 0 || !(cfg.peak_lr > 0.0) {
        return Err(Error::InvalidInput(
            "epochs must be >= 1 and peak_lr > 0".into(),
        ));
    }
    let first = bags
        .first()
        .ok_or_else(|| Error::InvalidInput("no training bags".into()))?;
    let d = first.dim();
    let labels: Vec<usize> = bags.iter().map(|b| b.class_label).collect();
    let defaults = default_class_weights(&labels, num_classes)?;
    let weights = match &cfg.class_weights {
        Some(w) if w.len() != num_classes || w.iter().any(|&x| !(x > 0.0)) => {
            return Err(Error::InvalidInput(format!(
                "class_weights must hold {num_classes} positive values"
            )))
        }
        Some(w) => w.clone(),
        None => defaults,
    };
    let xs: Vec<Matrix> = bags.iter().map(|b| b.to_matrix()).collect();
    if let Some(bad) = xs.iter().position(|x| x.cols() != d) {
        return Err(Error::Shape(format!(
            "bag {bad} has dim {}, expected {d}",
            xs[bad].cols()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = AbmilParams::init_uniform(d, num_classes, &mut rng);
    let mut state = AdamState::new(params.as_slice().len());
    let total_steps = cfg.epochs * xs.len();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let (loss, grad) = backward_matrix(&params, &xs[i], labels[i], &weights)?;
            let lr = cosine_lr(step, total_steps, cfg.peak_lr);
            adamw_step(
                params.as_mut_slice(),
                grad.as_slice(),
                &mut state,
                lr,
                &cfg.optimizer,
            );
            epoch_loss += loss;
            step += 1;
        }
        log::debug!(
            "epoch {}: mean loss {:.5}",
            epoch + 1,
            epoch_loss / xs.len() as f64
        );
    }
    if !params.is_finite() {
        return Err(Error::InvalidInput(
            "training diverged to non-finite weights".into(),
        ));
    }
    Ok(params)
}

pub fn write_checkpoint(p: &AbmilParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(20 + 8 * p.theta.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for dim in [p.d, p.h, p.s] {
        let v = u32::try_from(dim)
            .map_err(|_| Error::InvalidInput(format!("dimension {dim} exceeds u32")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &p.theta {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<AbmilParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    if bytes.len() < 20 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: 20,
            found: bytes.len() as u64,
        });
    }
    let field =
        |k: usize| u32::from_le_bytes(bytes[8 + 4 * k..12 + 4 * k].try_into().unwrap()) as usize;
    let (d, h, s) = (field(0), field(1), field(2));
    let mut p = AbmilParams::zeros_with_hidden(d, h, s);
    let expected = 20 + 8 * p.theta.len();
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    for (v, chunk) in p.theta.iter_mut().zip(bytes[20..].chunks_exact(8)) {
        *v = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(p)
}
