//! MI-SimpleShot: class prototypes are centroids of mean-pooled training
//! embeddings; a query takes the class of the most cosine-similar prototype.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::SlideEmbedding;
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimpleShotConfig {
    /// Subtract the training mean and L2-normalize before building
    /// prototypes and before scoring queries. Off by default.
    pub center_l2: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    /// `S x d` centroids.
    pub centroids: Matrix,
    pub counts: Vec<usize>,
    /// Training mean used by the centering + L2 variant.
    pub center: Option<Vec<f64>>,
}

fn centered_unit(z: &[f64], center: &[f64]) -> Result<Vec<f64>> {
    let c: Vec<f64> = z.iter().zip(center).map(|(a, b)| a - b).collect();
    let n = linalg::norm(&c);
    if !(n > 0.0) {
        return Err(Error::DegenerateCosine(
            "embedding equals the training mean".into(),
        ));
    }
    Ok(c.into_iter().map(|v| v / n).collect())
}

pub fn build_prototypes(embeddings: &[SlideEmbedding], num_classes: usize) -> Result<Prototypes> {
    build_prototypes_with(embeddings, num_classes, &SimpleShotConfig::default())
}

pub fn build_prototypes_with(
    embeddings: &[SlideEmbedding],
    num_classes: usize,
    cfg: &SimpleShotConfig,
) -> Result<Prototypes> {
    let d = embeddings
        .first()
        .map(|e| e.z.len())
        .ok_or_else(|| Error::InvalidInput("no training embeddings".into()))?;
    if let Some(e) = embeddings.iter().find(|e| e.z.len() != d) {
        return Err(Error::Shape(format!(
            "{} has dim {}, expected {d}",
            e.slide_id,
            e.z.len()
        )));
    }
    let center = cfg.center_l2.then(|| {
        let mut m = vec![0.0; d];
        for e in embeddings {
            for (a, b) in m.iter_mut().zip(&e.z) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= embeddings.len() as f64);
        m
    });

    let mut sums = Matrix::zeros(num_classes, d);
    let mut counts = vec![0usize; num_classes];
    for e in embeddings {
        if e.class_label >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label {} >= {num_classes} classes",
                e.class_label
            )));
        }
        let z = match &center {
            Some(c) => centered_unit(&e.z, c)?,
            None => e.z.clone(),
        };
        for (a, b) in sums.row_mut(e.class_label).iter_mut().zip(&z) {
            *a += b;
        }
        counts[e.class_label] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidInput(format!(
            "class {empty} has no training slides"
        )));
    }
    for (s, &c) in counts.iter().enumerate() {
        sums.row_mut(s).iter_mut().for_each(|v| *v /= c as f64);
    }
    Ok(Prototypes {
        centroids: sums,
        counts,
        center,
    })
}

/// Cosine similarity to each prototype and the argmax class (ties to the
/// lower index).
pub fn simpleshot_predict(
    protos: &Prototypes,
    query: &SlideEmbedding,
) -> Result<(usize, Vec<f64>)> {
    let d = protos.centroids.cols();
    if query.z.len() != d {
        return Err(Error::Shape(format!(
            "query dim {} vs prototypes {d}",
            query.z.len()
        )));
    }
    let z = match &protos.center {
        Some(c) => centered_unit(&query.z, c)?,
        None => query.z.clone(),
    };
    let zn = linalg::norm(&z);
    if !(zn > 0.0) {
        return Err(Error::DegenerateCosine("zero-norm query".into()));
    }
    let mut sims = Vec::with_capacity(protos.centroids.rows());
    for (s, p) in protos.centroids.iter_rows().enumerate() {
        let pn = linalg::norm(p);
        if !(pn > 0.0) {
            return Err(Error::DegenerateCosine(format!("zero-norm prototype {s}")));
        }
        sims.push(linalg::dot(&z, p) / (zn * pn));
    }
    Ok((linalg::argmax(&sims), sims))
}
