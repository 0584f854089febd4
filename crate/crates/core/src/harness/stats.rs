use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean per-class recall over the classes present in `y_true`.
pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::InvalidInput(
            "balanced accuracy of empty input".into(),
        ));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "{} truths vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut support = vec![0usize; num_classes];
    let mut hits = vec![0usize; num_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label {t} >= {num_classes} classes"
            )));
        }
        support[t] += 1;
        if t == p {
            hits[t] += 1;
        }
    }
    let present: Vec<(usize, usize)> = support
        .iter()
        .zip(&hits)
        .filter(|(&s, _)| s > 0)
        .map(|(&s, &h)| (s, h))
        .collect();
    Ok(mean_of_ratios(&present))
}

/// Mean of `h / s` over the pairs. Evaluated as a single division over a
/// common denominator when it fits in `u128`, so the result is correctly
/// rounded (and equals plain accuracy bit-for-bit on balanced truth).
fn mean_of_ratios(pairs: &[(usize, usize)]) -> f64 {
    let common = pairs.iter().try_fold(1u128, |l, &(s, _)| {
        let s = s as u128;
        let g = gcd(l, s);
        (l / g).checked_mul(s)
    });
    if let Some(l) = common {
        let num = pairs.iter().try_fold(0u128, |acc, &(s, h)| {
            acc.checked_add(h as u128 * (l / s as u128))
        });
        let den = l.checked_mul(pairs.len() as u128);
        if let (Some(num), Some(den)) = (num, den) {
            if num < (1u128 << 53) && den < (1u128 << 53) {
                return num as f64 / den as f64;
            }
        }
    }
    pairs.iter().map(|&(s, h)| h as f64 / s as f64).sum::<f64>() / pairs.len() as f64
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "pearson needs two equal-length series of >= 2 values ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidInput("pearson: zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
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

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x`, with `r2 = 1 - SS_res / SS_tot`.
pub fn linfit_r2(x: &[f64], y: &[f64]) -> Result<LinFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidInput(
            "linear fit needs >= 3 paired points".into(),
        ));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("linear fit: degenerate x".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (intercept + slope * a)).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LinFit {
        slope,
        intercept,
        r2,
    })
}
