//! Exact t-SNE (O(n^2) per iteration) for slide-level embeddings.
//!
//! Conditional Gaussian affinities are calibrated per point by bisection on
//! the precision so that the row perplexity matches the target, symmetrized
//! into a joint distribution `P`, and matched by a Student-t kernel in 2-D via
//! gradient descent with momentum and adaptive gains.
//!
//! All reductions run in index order, so output is bit-reproducible.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;
/// Maximum bisection steps per row during calibration.
pub const MAX_BISECTION_ITERS: usize = 64;
/// Accepted absolute error between the achieved and the target perplexity.
pub const PERPLEXITY_TOL: f64 = 1e-3;
/// Iteration stride of the KL trace.
pub const TRACE_EVERY: usize = 50;

const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub early_exaggeration_factor: f64,
    pub early_exaggeration_iters: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            n_iter: 1000,
            early_exaggeration_factor: 12.0,
            early_exaggeration_iters: 250,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            init_std: 1e-4,
            seed: 42,
        }
    }
}

impl TsneConfig {
    /// Copy with the perplexity clamped to `(n - 1) / 3` for small inputs.
    pub fn clamped_for(&self, n: usize) -> Self {
        let cap = (n.saturating_sub(1)) as f64 / 3.0;
        TsneConfig {
            perplexity: self.perplexity.min(cap),
            ..self.clone()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("t-SNE config: {m}")));
        if !(self.perplexity > 1.0) || self.perplexity >= n as f64 {
            return bad(format!(
                "perplexity {} must lie in (1, {n})",
                self.perplexity
            ));
        }
        if self.early_exaggeration_iters > self.n_iter || self.momentum_switch_iter > self.n_iter {
            return bad("exaggeration and momentum switch must not exceed n_iter".into());
        }
        if !(self.learning_rate > 0.0) || !(self.init_std > 0.0) {
            return bad("learning_rate and init_std must be positive".into());
        }
        for m in [self.initial_momentum, self.final_momentum] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("momentum {m} outside [0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    /// `n x 2`; row `i` is input row `i`.
    pub points: Matrix,
    pub final_kl: f64,
    /// `(iteration, KL)` pairs, iterations counted from 1.
    pub kl_trace: Vec<(usize, f64)>,
}

impl Embedding2D {
    pub fn kl_at(&self, iter: usize) -> Option<f64> {
        self.kl_trace
            .iter()
            .find(|(i, _)| *i == iter)
            .map(|(_, k)| *k)
    }

    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("iter,kl\n");
        for (it, kl) in &self.kl_trace {
            out.push_str(&format!("{it},{kl}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn pairwise_sq_dists(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = crate::linalg::sq_dist(x.row(i), x.row(j)).max(0.0);
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

/// Row entropy (nats) and normalized probabilities for precision `beta`.
/// `shifted` holds the row distances minus their minimum, with the diagonal
/// marked by `None`.
fn row_distribution(shifted: &[Option<f64>], beta: f64, out: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (o, d) in out.iter_mut().zip(shifted) {
        *o = match d {
            Some(d) => (-beta * d).exp(),
            None => 0.0,
        };
        total += *o;
    }
    let mut weighted = 0.0;
    for (o, d) in out.iter_mut().zip(shifted) {
        *o /= total;
        if let Some(d) = d {
            weighted += *o * d;
        }
    }
    total.ln() + beta * weighted
}

/// Conditional affinities `p_{j|i}` with per-row bandwidths chosen so that
/// `exp(H(P_i))` (entropy in nats) is within [`PERPLEXITY_TOL`] of `perplexity`.
pub fn calibrate_conditionals(d: &Matrix, perplexity: f64) -> Result<Matrix> {
    let n = d.rows();
    if n < 2 || d.cols() != n {
        return Err(Error::Shape(format!(
            "need a square distance matrix, got {n}x{}",
            d.cols()
        )));
    }
    if !(perplexity > 1.0) || perplexity >= n as f64 {
        return Err(Error::InvalidInput(format!(
            "perplexity {perplexity} must lie in (1, {n})"
        )));
    }
    let mut p = Matrix::zeros(n, n);
    let mut shifted: Vec<Option<f64>> = vec![None; n];
    for i in 0..n {
        let row = d.row(i);
        let min = (0..n)
            .filter(|&j| j != i)
            .map(|j| row[j])
            .fold(f64::INFINITY, f64::min);
        let mut mean = 0.0;
        for j in 0..n {
            shifted[j] = (j != i).then(|| row[j] - min);
            mean += shifted[j].unwrap_or(0.0);
        }
        mean /= (n - 1) as f64;

        let mut beta = if mean > 0.0 { 1.0 / mean } else { 1.0 };
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let out = p.row_mut(i);
        let mut converged = false;
        for _ in 0..MAX_BISECTION_ITERS {
            let h = row_distribution(&shifted, beta, out);
            if (h.exp() - perplexity).abs() <= PERPLEXITY_TOL {
                converged = true;
                break;
            }
            if h > perplexity.ln() {
                lo = beta;
                beta = if hi.is_finite() {
                    0.5 * (beta + hi)
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = 0.5 * (lo + beta);
            }
        }
        if !converged {
            return Err(Error::Calibration { row: i });
        }
    }
    Ok(p)
}

/// Joint affinities `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn symmetrize(cond: &Matrix) -> Matrix {
    let n = cond.rows();
    let denom = 2.0 * n as f64;
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = (cond.get(i, j) + cond.get(j, i)) / denom;
            p.set(i, j, v);
            p.set(j, i, v);
        }
    }
    p
}

/// Unnormalized Student-t kernel `1 / (1 + |y_i - y_j|^2)` (zero diagonal)
/// and its off-diagonal sum.
fn student_t_kernel(y: &Matrix) -> (Matrix, f64) {
    let n = y.rows();
    let mut num = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = 1.0 / (1.0 + crate::linalg::sq_dist(y.row(i), y.row(j)));
            num.set(i, j, v);
            num.set(j, i, v);
        }
    }
    let total = num.sum();
    (num, total)
}

/// Normalized low-dimensional affinities `q_ij`.
pub fn student_t_affinities(y: &Matrix) -> Matrix {
    let (mut q, total) = student_t_kernel(y);
    q.scale(1.0 / total);
    q
}

/// `KL(P || Q)` where `Q` is induced by the embedded points.
pub fn kl_divergence(p: &Matrix, y: &Matrix) -> f64 {
    let q = student_t_affinities(y);
    let n = p.rows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p.get(i, j);
            if pij > 0.0 {
                kl += pij * (pij.max(PROB_FLOOR) / q.get(i, j).max(PROB_FLOOR)).ln();
            }
        }
    }
    kl
}

fn gradient_into(p: &Matrix, exaggeration: f64, y: &Matrix, grad: &mut Matrix) {
    let n = y.rows();
    let dims = y.cols();
    let (num, total) = student_t_kernel(y);
    let mut acc = vec![0.0; dims];
    for i in 0..n {
        let yi = y.row(i);
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = num.get(i, j);
            let coeff = (exaggeration * p.get(i, j) - w / total) * w;
            for ((a, &yik), &yjk) in acc.iter_mut().zip(yi).zip(y.row(j)) {
                *a += coeff * (yik - yjk);
            }
        }
        for (g, a) in grad.row_mut(i).iter_mut().zip(&acc) {
            *g = 4.0 * a;
        }
    }
}

/// Analytic gradient of `KL(P || Q)` with respect to the embedded points.
pub fn kl_gradient(p: &Matrix, y: &Matrix) -> Matrix {
    let mut g = Matrix::zeros(y.rows(), y.cols());
    gradient_into(p, 1.0, y, &mut g);
    g
}

/// Joint affinities of the input rows at the given perplexity.
pub fn joint_affinities(z: &Matrix, perplexity: f64) -> Result<Matrix> {
    let d = pairwise_sq_dists(z);
    Ok(symmetrize(&calibrate_conditionals(&d, perplexity)?))
}

pub fn tsne_embed(z: &Matrix, cfg: &TsneConfig) -> Result<Embedding2D> {
    let n = z.rows();
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "t-SNE needs at least 4 points, got {n}"
        )));
    }
    if !z.is_finite() {
        return Err(Error::InvalidInput(
            "t-SNE input contains non-finite values".into(),
        ));
    }
    cfg.validate(n)?;
    let p = joint_affinities(z, cfg.perplexity)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, cfg.init_std)
        .map_err(|e| Error::InvalidInput(format!("init_std: {e}")))?;
    let mut y = Matrix::zeros(n, 2);
    for v in y.as_mut_slice() {
        *v = init.sample(&mut rng);
    }

    let mut update = Matrix::zeros(n, 2);
    let mut gains = Matrix::from_vec(n, 2, vec![1.0; n * 2])?;
    let mut grad = Matrix::zeros(n, 2);
    let mut trace = Vec::new();

    for it in 0..cfg.n_iter {
        let exaggeration = if it < cfg.early_exaggeration_iters {
            cfg.early_exaggeration_factor
        } else {
            1.0
        };
        let momentum = if it < cfg.momentum_switch_iter {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };
        gradient_into(&p, exaggeration, &y, &mut grad);

        let g = grad.as_slice();
        let u = update.as_mut_slice();
        let gn = gains.as_mut_slice();
        for k in 0..g.len() {
            gn[k] = if (g[k] > 0.0) != (u[k] > 0.0) {
                gn[k] + 0.2
            } else {
                gn[k] * 0.8
            }
            .max(MIN_GAIN);
            u[k] = momentum * u[k] - cfg.learning_rate * gn[k] * g[k];
        }
        for (yv, uv) in y.as_mut_slice().iter_mut().zip(update.as_slice()) {
            *yv += uv;
        }
        for col in 0..2 {
            let mean = (0..n).map(|i| y.get(i, col)).sum::<f64>() / n as f64;
            for i in 0..n {
                y.set(i, col, y.get(i, col) - mean);
            }
        }
        if !y.is_finite() {
            return Err(Error::Divergence { iter: it + 1 });
        }
        let step = it + 1;
        if step % TRACE_EVERY == 0 || step == cfg.n_iter {
            let kl = kl_divergence(&p, &y);
            log::debug!("t-SNE iter {step}: KL {kl:.6}");
            trace.push((step, kl));
        }
    }
    let final_kl = match trace.last() {
        Some((_, kl)) => *kl,
        None => kl_divergence(&p, &y),
    };
    Ok(Embedding2D {
        points: y,
        final_kl: final_kl.max(0.0),
        kl_trace: trace,
    })
}
