//! Center-shift metrics on slide embeddings.
//!
//! - silhouette coefficient (per point and mean);
//! - FM-SI: silhouette of center labels on a 2-D t-SNE of the mean-pooled
//!   slide embeddings, averaged over t-SNE seeds;
//! - RI: ratio of same-class to same-center neighbors over all k-NN
//!   neighborhoods in the original embedding space.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::feature_store::Dataset;
use crate::linalg::{self, Matrix};
use crate::tsne::{self, Embedding2D, TsneConfig};

/// Default neighborhood size of the robustness index.
pub const DEFAULT_RI_K: usize = 25;
pub const DEFAULT_FMSI_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq)]
pub struct FmsiResult {
    pub score: f64,
    pub per_seed_scores: Vec<f64>,
    /// Embedding produced by the last seed.
    pub embedding: Embedding2D,
    pub config_hash: String,
}

/// JSON view of an [`FmsiResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmsiJson {
    pub score: f64,
    pub per_seed_scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ri: Option<f64>,
    pub config_hash: String,
}

impl FmsiResult {
    pub fn to_json(&self, ri: Option<&RiResult>) -> FmsiJson {
        FmsiJson {
            score: self.score,
            per_seed_scores: self.per_seed_scores.clone(),
            k: ri.map(|r| r.k),
            ri: ri.map(|r| r.ri),
            config_hash: self.config_hash.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiResult {
    pub ri: f64,
    pub k: usize,
    pub numerator: u64,
    pub denominator: u64,
}

/// Per-point silhouette values.
///
/// Singleton members score 0, and so do points with `a = b = 0`.
pub fn silhouette_scores(points: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    let n = points.rows();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{n} points but {} labels",
            labels.len()
        )));
    }
    let num_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; num_labels];
    for &l in labels {
        sizes[l] += 1;
    }
    let present = sizes.iter().filter(|&&s| s > 0).count();
    if n < 2 || present < 2 {
        return Err(Error::SilhouetteUndefined(format!(
            "{present} distinct cluster(s) among {n} points"
        )));
    }
    let mut sums = vec![0.0f64; num_labels];
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[labels[j]] += linalg::dist(points.row(i), points.row(j));
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            scores.push(0.0);
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..num_labels)
            .filter(|&l| l != own && sizes[l] > 0)
            .map(|l| sums[l] / sizes[l] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        scores.push(if denom > 0.0 { (b - a) / denom } else { 0.0 });
    }
    Ok(scores)
}

pub fn silhouette_mean(points: &Matrix, labels: &[usize]) -> Result<f64> {
    let s = silhouette_scores(points, labels)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

fn fmsi_hash(cfg: &TsneConfig, seeds: &[u64], n: usize) -> String {
    let canon = format!(
        "perplexity={}\nn_iter={}\nearly_exaggeration_factor={}\nearly_exaggeration_iters={}\n\
         learning_rate={}\ninitial_momentum={}\nfinal_momentum={}\nmomentum_switch_iter={}\n\
         init_std={}\nseeds={:?}\nn={n}\n",
        cfg.perplexity,
        cfg.n_iter,
        cfg.early_exaggeration_factor,
        cfg.early_exaggeration_iters,
        cfg.learning_rate,
        cfg.initial_momentum,
        cfg.final_momentum,
        cfg.momentum_switch_iter,
        cfg.init_std,
        seeds,
    );
    hex::encode(Sha256::digest(canon.as_bytes()))
}

/// FM-SI on an already pooled embedding matrix. The perplexity is clamped to
/// `(n - 1) / 3` for small inputs; `cfg.seed` is replaced by each of `seeds`.
pub fn fm_si_from_embeddings(
    z: &Matrix,
    centers: &[usize],
    cfg: &TsneConfig,
    seeds: &[u64],
) -> Result<FmsiResult> {
    let n = z.rows();
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "FM-SI needs at least 4 slides, got {n}"
        )));
    }
    let mut distinct: Vec<usize> = centers.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InvalidInput(
            "FM-SI needs at least 2 centers represented".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidInput("FM-SI needs at least one seed".into()));
    }
    let base = cfg.clamped_for(n);
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut last = None;
    for &seed in seeds {
        let run = TsneConfig {
            seed,
            ..base.clone()
        };
        let emb = tsne::tsne_embed(z, &run)?;
        let s = silhouette_mean(&emb.points, centers)?;
        log::info!("FM-SI seed {seed}: {s:.4} (KL {:.4})", emb.final_kl);
        per_seed.push(s);
        last = Some(emb);
    }
    let score = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    Ok(FmsiResult {
        score,
        per_seed_scores: per_seed,
        embedding: last.expect("at least one seed"),
        config_hash: fmsi_hash(&base, seeds, n),
    })
}

/// Mean-pool every bag, embed with t-SNE, score center clustering.
pub fn fm_si(ds: &Dataset, cfg: &TsneConfig, seeds: &[u64]) -> Result<FmsiResult> {
    fm_si_from_embeddings(&ds.embedding_matrix(), &ds.center_labels(), cfg, seeds)
}

/// Plot data: `slide_id,x,y,center,label`, one row per slide.
pub fn write_embedding_csv(ds: &Dataset, emb: &Embedding2D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if emb.points.rows() != ds.len() {
        return Err(Error::Shape(format!(
            "{} embedded points for {} slides",
            emb.points.rows(),
            ds.len()
        )));
    }
    let mut out = String::from("slide_id,x,y,center,label\n");
    for (bag, p) in ds.bags.iter().zip(emb.points.iter_rows()) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            bag.slide_id, p[0], p[1], bag.center_label, bag.class_label
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// The `k` nearest rows of each row by Euclidean distance, self excluded,
/// ties broken by the smaller index.
pub fn knn_indices(z: &Matrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = z.rows();
    if k >= n {
        return Err(Error::InvalidInput(format!(
            "k = {k} must be smaller than n = {n}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        cand.clear();
        cand.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (linalg::sq_dist(z.row(i), z.row(j)), j)),
        );
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k > 0 && k < cand.len() {
            cand.select_nth_unstable_by(k - 1, by_dist);
        }
        let head = &mut cand[..k];
        head.sort_unstable_by(by_dist);
        out.push(head.iter().map(|&(_, j)| j).collect());
    }
    Ok(out)
}

pub fn robustness_index(
    z: &Matrix,
    classes: &[usize],
    centers: &[usize],
    k: usize,
) -> Result<RiResult> {
    let n = z.rows();
    if classes.len() != n || centers.len() != n {
        return Err(Error::Shape(format!(
            "{n} rows, {} class labels, {} center labels",
            classes.len(),
            centers.len()
        )));
    }
    let neighbors = knn_indices(z, k)?;
    let (mut numerator, mut denominator) = (0u64, 0u64);
    for (i, nb) in neighbors.iter().enumerate() {
        numerator += nb.iter().filter(|&&j| classes[j] == classes[i]).count() as u64;
        denominator += nb.iter().filter(|&&j| centers[j] == centers[i]).count() as u64;
    }
    if denominator == 0 {
        return Err(Error::NoSameCenterNeighbors);
    }
    Ok(RiResult {
        ri: numerator as f64 / denominator as f64,
        k,
        numerator,
        denominator,
    })
}

/// RI on the dataset's mean-pooled slide embeddings.
pub fn dataset_robustness_index(ds: &Dataset, k: usize) -> Result<RiResult> {
    robustness_index(
        &ds.embedding_matrix(),
        &ds.class_labels(),
        &ds.center_labels(),
        k,
    )
}
