//! Dataset model, on-disk formats and the synthetic generator.
//!
//! A slide is a bag of patch features (`N x d`, stored as `f32`). All
//! arithmetic downstream of loading happens in `f64`.
//!
//! Bag files are `SHBMIL01` followed by little-endian `u32` N, `u32` d and
//! `N * d` little-endian `f32` values in row-major order. Manifests are CSV
//! with the header `slide_id,label,center,path,n_patches,dim`.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub const BAG_MAGIC: &[u8; 8] = b"SHBMIL01";
pub const BAG_HEADER_LEN: usize = 16;
pub const MANIFEST_HEADER: [&str; 6] = ["slide_id", "label", "center", "path", "n_patches", "dim"];

/// Patch features of one slide plus its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBag {
    pub slide_id: String,
    pub class_label: usize,
    pub center_label: usize,
    /// Provenance of the upstream patch encoder. Never executed here.
    pub extractor_id: String,
    n: usize,
    d: usize,
    features: Vec<f32>,
}

impl FeatureBag {
    pub fn new(
        slide_id: impl Into<String>,
        class_label: usize,
        center_label: usize,
        n: usize,
        d: usize,
        features: Vec<f32>,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput(format!("empty bag shape {n}x{d}")));
        }
        if features.len() != n * d {
            return Err(Error::Shape(format!(
                "{} feature values for a {n}x{d} bag",
                features.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(FeatureBag {
            slide_id: slide_id.into(),
            class_label,
            center_label,
            extractor_id: String::new(),
            n,
            d,
            features,
        })
    }

    /// Number of patches.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    /// Row `i` widened to `f64`.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    /// All features widened to `f64`, row-major.
    pub fn to_matrix(&self) -> Matrix {
        let data = self.features.iter().map(|&v| f64::from(v)).collect();
        Matrix::from_vec(self.n, self.d, data).expect("bag shape is consistent")
    }

    pub fn with_extractor(mut self, extractor_id: impl Into<String>) -> Self {
        self.extractor_id = extractor_id.into();
        self
    }
}

/// Mean-pooled slide representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideEmbedding {
    pub slide_id: String,
    pub z: Vec<f64>,
    pub class_label: usize,
    pub center_label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub bags: Vec<FeatureBag>,
    pub num_classes: usize,
    pub num_centers: usize,
    pub dim: usize,
}

impl Dataset {
    /// Validates the bags and infers `S` and `C` from the label maxima unless
    /// overridden.
    pub fn new(
        name: impl Into<String>,
        bags: Vec<FeatureBag>,
        num_classes: Option<usize>,
        num_centers: Option<usize>,
    ) -> Result<Self> {
        let first = bags
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset has no bags".into()))?;
        let dim = first.dim();
        let mut seen = HashSet::with_capacity(bags.len());
        for bag in &bags {
            if bag.dim() != dim {
                return Err(Error::Shape(format!(
                    "slide {} has dim {}, expected {dim}",
                    bag.slide_id,
                    bag.dim()
                )));
            }
            if !seen.insert(bag.slide_id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate slide_id {}",
                    bag.slide_id
                )));
            }
        }
        let max_class = bags.iter().map(|b| b.class_label).max().unwrap_or(0);
        let max_center = bags.iter().map(|b| b.center_label).max().unwrap_or(0);
        let num_classes = resolve_count("classes", num_classes, max_class)?;
        let num_centers = resolve_count("centers", num_centers, max_center)?;
        Ok(Dataset {
            name: name.into(),
            bags,
            num_classes,
            num_centers,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn class_labels(&self) -> Vec<usize> {
        self.bags.iter().map(|b| b.class_label).collect()
    }

    pub fn center_labels(&self) -> Vec<usize> {
        self.bags.iter().map(|b| b.center_label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for b in &self.bags {
            counts[b.class_label] += 1;
        }
        counts
    }

    pub fn center_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_centers];
        for b in &self.bags {
            counts[b.center_label] += 1;
        }
        counts
    }

    pub fn embeddings(&self) -> Vec<SlideEmbedding> {
        self.bags.iter().map(mean_pool).collect()
    }

    /// Stacked mean-pooled embeddings, one row per bag in dataset order.
    pub fn embedding_matrix(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self.bags.iter().map(|b| mean_pool(b).z).collect();
        Matrix::from_rows(&rows).expect("all bags share dim")
    }
}

fn resolve_count(what: &str, explicit: Option<usize>, max_label: usize) -> Result<usize> {
    match explicit {
        Some(n) if n <= max_label => Err(Error::InvalidInput(format!(
            "{n} {what} requested but label {max_label} present"
        ))),
        Some(n) => Ok(n),
        None => Ok(max_label + 1),
    }
}

/// Column means of the bag.
pub fn mean_pool(bag: &FeatureBag) -> SlideEmbedding {
    let mut z = vec![0.0f64; bag.dim()];
    for i in 0..bag.n() {
        for (acc, &v) in z.iter_mut().zip(bag.row(i)) {
            *acc += f64::from(v);
        }
    }
    let n = bag.n() as f64;
    z.iter_mut().for_each(|v| *v /= n);
    SlideEmbedding {
        slide_id: bag.slide_id.clone(),
        z,
        class_label: bag.class_label,
        center_label: bag.center_label,
    }
}

pub fn encode_bag(bag: &FeatureBag) -> Result<Vec<u8>> {
    let n = u32::try_from(bag.n()).map_err(|_| Error::SizeOverflow {
        n: bag.n() as u64,
        d: bag.dim() as u64,
    })?;
    let d = u32::try_from(bag.dim()).map_err(|_| Error::SizeOverflow {
        n: bag.n() as u64,
        d: bag.dim() as u64,
    })?;
    let mut buf = Vec::with_capacity(BAG_HEADER_LEN + bag.features.len() * 4);
    buf.extend_from_slice(BAG_MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    for (k, v) in bag.features.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                row: k / bag.dim(),
                col: k % bag.dim(),
            });
        }
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn write_bag(bag: &FeatureBag, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_bag(bag)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes a bag buffer. Labels and ids are left at their defaults.
pub fn decode_bag(bytes: &[u8], origin: &Path) -> Result<FeatureBag> {
    if bytes.len() >= BAG_MAGIC.len() && &bytes[..8] != BAG_MAGIC {
        return Err(Error::BadMagic(origin.to_path_buf()));
    }
    if bytes.len() < BAG_HEADER_LEN {
        return Err(Error::Truncated {
            path: origin.to_path_buf(),
            expected: BAG_HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as u64;
    let payload = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .filter(|&v| usize::try_from(v).is_ok())
        .ok_or(Error::SizeOverflow { n, d })?;
    let found = (bytes.len() - BAG_HEADER_LEN) as u64;
    if found < payload {
        return Err(Error::Truncated {
            path: origin.to_path_buf(),
            expected: payload,
            found,
        });
    }
    if found > payload {
        return Err(Error::InvalidInput(format!(
            "{} trailing bytes in {}",
            found - payload,
            origin.display()
        )));
    }
    let features: Vec<f32> = bytes[BAG_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let stem = origin
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    FeatureBag::new(stem, 0, 0, n as usize, d as usize, features)
}

pub fn read_bag(path: impl AsRef<Path>) -> Result<FeatureBag> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bag(&bytes, path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub slide_id: String,
    pub label: usize,
    pub center: usize,
    pub path: String,
    pub n_patches: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub num_classes: Option<usize>,
    pub num_centers: Option<usize>,
    pub extractor_id: Option<String>,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Manifest(e.to_string()))?
        .clone();
    for h in headers.iter() {
        if !MANIFEST_HEADER.contains(&h) {
            return Err(Error::Manifest(format!("unknown column {h:?}")));
        }
    }
    for required in MANIFEST_HEADER {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Manifest(format!("missing column {required:?}")));
        }
    }
    let mut rows = Vec::new();
    for (line, record) in reader.deserialize::<ManifestRow>().enumerate() {
        rows.push(record.map_err(|e| Error::Manifest(format!("row {}: {e}", line + 1)))?);
    }
    if rows.is_empty() {
        return Err(Error::Manifest("manifest has no rows".into()));
    }
    Ok(rows)
}

/// Loads every bag referenced by the manifest. Relative paths resolve against
/// the manifest's directory; dataset order follows manifest row order.
pub fn load_manifest(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let rows = read_manifest(path)?;
    let mut seen = HashSet::with_capacity(rows.len());
    for row in &rows {
        if !seen.insert(row.slide_id.as_str()) {
            return Err(Error::Manifest(format!(
                "duplicate slide_id {}",
                row.slide_id
            )));
        }
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let extractor = opts.extractor_id.clone().unwrap_or_default();
    let bags = rows
        .par_iter()
        .map(|row| {
            let bag_path = resolve(&base, &row.path);
            let mut bag = read_bag(&bag_path)?;
            if bag.n() != row.n_patches || bag.dim() != row.dim {
                return Err(Error::Manifest(format!(
                    "slide {}: manifest says {}x{}, file holds {}x{}",
                    row.slide_id,
                    row.n_patches,
                    row.dim,
                    bag.n(),
                    bag.dim()
                )));
            }
            bag.slide_id = row.slide_id.clone();
            bag.class_label = row.label;
            bag.center_label = row.center;
            bag.extractor_id = extractor.clone();
            Ok(bag)
        })
        .collect::<Result<Vec<_>>>()?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Dataset::new(name, bags, opts.num_classes, opts.num_centers).map_err(|e| match e {
        Error::Shape(m) => Error::Manifest(format!("dim mismatch: {m}")),
        other => other,
    })
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Manifest(e.to_string()))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Manifest(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Writes `bags/<slide_id>.bin` files plus `manifest.csv` under `dir`.
/// Returns the manifest path.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let bag_dir = dir.join("bags");
    fs::create_dir_all(&bag_dir).map_err(|e| Error::io(&bag_dir, e))?;
    let mut rows = Vec::with_capacity(ds.len());
    for bag in &ds.bags {
        let rel = format!("bags/{}.bin", bag.slide_id);
        write_bag(bag, dir.join(&rel))?;
        rows.push(ManifestRow {
            slide_id: bag.slide_id.clone(),
            label: bag.class_label,
            center: bag.center_label,
            path: rel,
            n_patches: bag.n(),
            dim: bag.dim(),
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &rows)?;
    Ok(manifest)
}

/// Shape and bias knobs of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub num_centers: usize,
    pub dim: usize,
    pub slides_per_class_center: usize,
    /// Per-(class, center) slide counts; overrides `slides_per_class_center`.
    pub cell_counts: Option<Vec<Vec<usize>>>,
    pub patches_per_slide: (usize, usize),
    pub class_separation: f64,
    /// Scale of the per-center offset added to every patch.
    pub center_bias: f64,
    pub noise_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 6,
            num_centers: 2,
            dim: 64,
            slides_per_class_center: 10,
            cell_counts: None,
            patches_per_slide: (16, 48),
            class_separation: 2.0,
            center_bias: 0.0,
            noise_std: 1.0,
        }
    }
}

/// Slide counts per subtype (rows) and center (columns) of the six-class,
/// two-center skin cohort the benchmark was designed around.
pub const SKIN_COHORT_COUNTS: [[usize; 2]; 6] =
    [[31, 73], [21, 23], [101, 93], [21, 34], [48, 74], [44, 58]];

impl SynthConfig {
    /// Generator shaped like the six-subtype, two-center cohort (621 slides).
    pub fn skin_cohort_shape() -> Self {
        SynthConfig {
            cell_counts: Some(SKIN_COHORT_COUNTS.iter().map(|r| r.to_vec()).collect()),
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("synth config: {m}")));
        if self.num_classes == 0 || self.num_centers == 0 || self.dim == 0 {
            return bad("classes, centers and dim must be >= 1");
        }
        let (lo, hi) = self.patches_per_slide;
        if lo == 0 || lo > hi {
            return bad("patches_per_slide must satisfy 1 <= min <= max");
        }
        match &self.cell_counts {
            Some(cells) => {
                if cells.len() != self.num_classes
                    || cells.iter().any(|r| r.len() != self.num_centers)
                {
                    return bad("cell_counts must be classes x centers");
                }
            }
            None if self.slides_per_class_center == 0 => {
                return bad("slides_per_class_center must be >= 1")
            }
            None => {}
        }
        if !(self.class_separation >= 0.0) || !(self.center_bias >= 0.0) {
            return bad("class_separation and center_bias must be >= 0");
        }
        if !(self.noise_std > 0.0) || !self.noise_std.is_finite() {
            return bad("noise_std must be > 0");
        }
        Ok(())
    }

    fn cell_count(&self, class: usize, center: usize) -> usize {
        match &self.cell_counts {
            Some(cells) => cells[class][center],
            None => self.slides_per_class_center,
        }
    }
}

/// Means used by the generator: class means (already scaled by
/// `class_separation`) and unit-norm center directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthMeans {
    pub class_means: Vec<Vec<f64>>,
    pub center_dirs: Vec<Vec<f64>>,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = linalg::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn min_pairwise_dist(vs: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            best = best.min(linalg::dist(&vs[i], &vs[j]));
        }
    }
    best
}

/// `k` orthonormal rows in a random orientation (Gram-Schmidt on Gaussian
/// draws, redrawn on the rare near-dependent candidate).
fn random_orthonormal(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let proj = linalg::dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = linalg::norm(&v);
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Draws the generator's class and center means. Consumes the RNG before any
/// patch is sampled, so means depend on `(cfg, seed)` only.
pub fn synth_means(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> SynthMeans {
    let (s, d) = (cfg.num_classes, cfg.dim);
    let unit_means: Vec<Vec<f64>> = if d >= s {
        random_orthonormal(rng, s, d)
    } else {
        // best of a fixed number of random draws by minimum pairwise distance
        let mut best: Vec<Vec<f64>> = Vec::new();
        let mut best_score = f64::NEG_INFINITY;
        for _ in 0..64 {
            let cand: Vec<Vec<f64>> = (0..s).map(|_| random_unit(rng, d)).collect();
            let score = min_pairwise_dist(&cand);
            if score > best_score {
                best_score = score;
                best = cand;
            }
        }
        best
    };
    let class_means = unit_means
        .into_iter()
        .map(|v| v.into_iter().map(|x| x * cfg.class_separation).collect())
        .collect();
    let center_dirs = (0..cfg.num_centers).map(|_| random_unit(rng, d)).collect();
    SynthMeans {
        class_means,
        center_dirs,
    }
}

/// Deterministic synthetic dataset. Each patch is
/// `class_mean + center_bias * center_dir + N(0, noise_std^2 I)`.
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = synth_means(cfg, &mut rng);
    let noise = Normal::new(0.0, cfg.noise_std)
        .map_err(|e| Error::InvalidInput(format!("noise_std: {e}")))?;
    let (lo, hi) = cfg.patches_per_slide;
    let d = cfg.dim;
    let mut bags = Vec::new();
    for class in 0..cfg.num_classes {
        for center in 0..cfg.num_centers {
            let offset: Vec<f64> = means.class_means[class]
                .iter()
                .zip(&means.center_dirs[center])
                .map(|(m, c)| m + cfg.center_bias * c)
                .collect();
            for _ in 0..cfg.cell_count(class, center) {
                let n = rng.gen_range(lo..=hi);
                let mut features = Vec::with_capacity(n * d);
                for _ in 0..n {
                    for &m in &offset {
                        features.push((m + noise.sample(&mut rng)) as f32);
                    }
                }
                let id = format!("slide_{:05}", bags.len());
                bags.push(
                    FeatureBag::new(id, class, center, n, d, features)?.with_extractor("synthetic"),
                );
            }
        }
    }
    if bags.is_empty() {
        return Err(Error::InvalidInput(
            "synth config produces no slides".into(),
        ));
    }
    Dataset::new(
        "synthetic",
        bags,
        Some(cfg.num_classes),
        Some(cfg.num_centers),
    )
}

pub fn write_summary(ds: &Dataset, mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "dataset {}: {} slides, dim {}, {} classes, {} centers",
        ds.name,
        ds.len(),
        ds.dim,
        ds.num_classes,
        ds.num_centers
    )?;
    writeln!(out, "class counts:  {:?}", ds.class_counts())?;
    writeln!(out, "center counts: {:?}", ds.center_counts())
}
