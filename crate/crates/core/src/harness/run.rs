use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{stratified_kfold, FoldSplit};
use super::reference::ModelStatsRow;
use super::stats::{balanced_accuracy, linfit_r2, mean, pearson, spearman, std_dev};
use crate::config::{join_list, KvConfig};
use crate::error::{Error, Result};
use crate::feature_store::{Dataset, FeatureBag, SlideEmbedding};
use crate::mil::{
    build_prototypes_with, predict_abmil, simpleshot_predict, train_abmil, AbmilParams,
    SimpleShotConfig, TrainConfig,
};
use crate::shift_metrics::{self, FmsiResult, RiResult, DEFAULT_FMSI_SEED, DEFAULT_RI_K};
use crate::tsne::TsneConfig;

/// Everything that determines a benchmark run (and therefore its hash).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub folds: usize,
    pub cv_seed: u64,
    pub ri_k: usize,
    pub fmsi_seeds: Vec<u64>,
    pub tsne: TsneConfig,
    pub train: TrainConfig,
    pub simpleshot: SimpleShotConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            folds: 5,
            cv_seed: 0,
            ri_k: DEFAULT_RI_K,
            fmsi_seeds: vec![DEFAULT_FMSI_SEED],
            tsne: TsneConfig::default(),
            train: TrainConfig::default(),
            simpleshot: SimpleShotConfig::default(),
        }
    }
}

impl BenchConfig {
    pub const KEYS: [&'static str; 22] = [
        "folds",
        "cv_seed",
        "ri_k",
        "fmsi_seeds",
        "tsne.perplexity",
        "tsne.n_iter",
        "tsne.early_exaggeration_factor",
        "tsne.early_exaggeration_iters",
        "tsne.learning_rate",
        "tsne.initial_momentum",
        "tsne.final_momentum",
        "tsne.momentum_switch_iter",
        "tsne.init_std",
        "train.epochs",
        "train.peak_lr",
        "train.weight_decay",
        "train.adam_beta1",
        "train.adam_beta2",
        "train.adam_eps",
        "train.seed",
        "train.class_weights",
        "simpleshot.center_l2",
    ];

    /// Canonical key/value view; `tsne.seed` is omitted since FM-SI uses
    /// `fmsi_seeds`.
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("folds", self.folds);
        kv.set("cv_seed", self.cv_seed);
        kv.set("ri_k", self.ri_k);
        kv.set("fmsi_seeds", join_list(&self.fmsi_seeds));
        let t = &self.tsne;
        kv.set("tsne.perplexity", t.perplexity);
        kv.set("tsne.n_iter", t.n_iter);
        kv.set(
            "tsne.early_exaggeration_factor",
            t.early_exaggeration_factor,
        );
        kv.set("tsne.early_exaggeration_iters", t.early_exaggeration_iters);
        kv.set("tsne.learning_rate", t.learning_rate);
        kv.set("tsne.initial_momentum", t.initial_momentum);
        kv.set("tsne.final_momentum", t.final_momentum);
        kv.set("tsne.momentum_switch_iter", t.momentum_switch_iter);
        kv.set("tsne.init_std", t.init_std);
        let tr = &self.train;
        kv.set("train.epochs", tr.epochs);
        kv.set("train.peak_lr", tr.peak_lr);
        kv.set("train.weight_decay", tr.optimizer.weight_decay);
        kv.set("train.adam_beta1", tr.optimizer.beta1);
        kv.set("train.adam_beta2", tr.optimizer.beta2);
        kv.set("train.adam_eps", tr.optimizer.eps);
        kv.set("train.seed", tr.seed);
        kv.set(
            "train.class_weights",
            tr.class_weights
                .as_deref()
                .map(join_list)
                .unwrap_or_else(|| "auto".into()),
        );
        kv.set("simpleshot.center_l2", self.simpleshot.center_l2);
        kv
    }

    /// Applies the keys present in `kv` on top of `self`. Unknown keys fail.
    pub fn apply_kv(&mut self, kv: &KvConfig) -> Result<()> {
        kv.reject_unknown(&Self::KEYS)?;
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.parse_value($key)? {
                    $field = v;
                }
            };
        }
        take!("folds", self.folds);
        take!("cv_seed", self.cv_seed);
        take!("ri_k", self.ri_k);
        if let Some(seeds) = kv.parse_list::<u64>("fmsi_seeds")? {
            self.fmsi_seeds = seeds;
        }
        take!("tsne.perplexity", self.tsne.perplexity);
        take!("tsne.n_iter", self.tsne.n_iter);
        take!(
            "tsne.early_exaggeration_factor",
            self.tsne.early_exaggeration_factor
        );
        take!(
            "tsne.early_exaggeration_iters",
            self.tsne.early_exaggeration_iters
        );
        take!("tsne.learning_rate", self.tsne.learning_rate);
        take!("tsne.initial_momentum", self.tsne.initial_momentum);
        take!("tsne.final_momentum", self.tsne.final_momentum);
        take!("tsne.momentum_switch_iter", self.tsne.momentum_switch_iter);
        take!("tsne.init_std", self.tsne.init_std);
        take!("train.epochs", self.train.epochs);
        take!("train.peak_lr", self.train.peak_lr);
        take!("train.weight_decay", self.train.optimizer.weight_decay);
        take!("train.adam_beta1", self.train.optimizer.beta1);
        take!("train.adam_beta2", self.train.optimizer.beta2);
        take!("train.adam_eps", self.train.optimizer.eps);
        take!("train.seed", self.train.seed);
        if let Some(v) = kv.get("train.class_weights") {
            self.train.class_weights = if v == "auto" {
                None
            } else {
                Some(
                    kv.parse_list::<f64>("train.class_weights")?
                        .unwrap_or_default(),
                )
            };
        }
        take!("simpleshot.center_l2", self.simpleshot.center_l2);
        Ok(())
    }

    pub fn config_hash(&self) -> String {
        self.to_kv().hash()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub cv: u64,
    pub train: u64,
    pub fmsi: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSummary {
    /// Per-fold balanced accuracy as a fraction.
    pub folds: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl ClassifierSummary {
    fn from_folds(folds: Vec<f64>) -> Self {
        ClassifierSummary {
            mean: mean(&folds),
            std: std_dev(&folds),
            folds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifiers {
    pub abmil: ClassifierSummary,
    pub simpleshot: ClassifierSummary,
}

/// Cross-encoder statistics. Undefined (null) for a single-dataset report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportStats {
    pub pearson_fmsi_ri: Option<f64>,
    pub spearman_fmsi_ri: Option<f64>,
    pub r2_abmil: Option<f64>,
    pub r2_simpleshot: Option<f64>,
}

/// Field order is the JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset: String,
    pub config_hash: String,
    pub seeds: SeedInfo,
    pub fm_si: f64,
    pub ri: f64,
    pub classifiers: Classifiers,
    pub stats: ReportStats,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("report JSON: {e}")))
    }

    /// Human-readable summary with BACC in percent.
    pub fn summary(&self) -> String {
        let pct =
            |c: &ClassifierSummary| format!("{:6.2} +- {:5.2}", 100.0 * c.mean, 100.0 * c.std);
        let folds = |c: &ClassifierSummary| {
            c.folds
                .iter()
                .map(|f| format!("{:.2}", 100.0 * f))
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!(
            "dataset       {}\nconfig_hash   {}\nFM-SI         {:.4}\nRI            {:.4}\n\
             ABMIL         {}  [{}]\nMI-SimpleShot {}  [{}]\n",
            self.dataset,
            self.config_hash,
            self.fm_si,
            self.ri,
            pct(&self.classifiers.abmil),
            folds(&self.classifiers.abmil),
            pct(&self.classifiers.simpleshot),
            folds(&self.classifiers.simpleshot),
        )
    }

    pub fn as_stats_row(&self) -> ModelStatsRow {
        ModelStatsRow {
            name: self.dataset.clone(),
            bacc_abmil: 100.0 * self.classifiers.abmil.mean,
            bacc_abmil_std: 100.0 * self.classifiers.abmil.std,
            bacc_simpleshot: 100.0 * self.classifiers.simpleshot.mean,
            bacc_simpleshot_std: 100.0 * self.classifiers.simpleshot.std,
            fm_si: self.fm_si,
            ri: self.ri,
        }
    }
}

/// Report plus the artifacts a run produces.
#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub report: BenchReport,
    pub folds: Vec<FoldSplit>,
    /// One trained model per fold, in fold order.
    pub checkpoints: Vec<AbmilParams>,
    pub fmsi: FmsiResult,
    pub ri: RiResult,
}

struct FoldResult {
    abmil_bacc: f64,
    simpleshot_bacc: f64,
    model: AbmilParams,
}

fn run_fold(
    ds: &Dataset,
    embeddings: &[SlideEmbedding],
    fold: &FoldSplit,
    cfg: &BenchConfig,
) -> Result<FoldResult> {
    let s = ds.num_classes;
    let train: Vec<&FeatureBag> = fold.train_ids.iter().map(|&i| &ds.bags[i]).collect();
    let train_cfg = TrainConfig {
        seed: cfg.train.seed.wrapping_add(fold.fold_id as u64),
        ..cfg.train.clone()
    };
    let model = train_abmil(&train, s, &train_cfg)?;

    let train_emb: Vec<SlideEmbedding> = fold
        .train_ids
        .iter()
        .map(|&i| embeddings[i].clone())
        .collect();
    let protos = build_prototypes_with(&train_emb, s, &cfg.simpleshot)?;

    let truth: Vec<usize> = fold
        .test_ids
        .iter()
        .map(|&i| ds.bags[i].class_label)
        .collect();
    let mut ab_pred = Vec::with_capacity(truth.len());
    let mut ss_pred = Vec::with_capacity(truth.len());
    for &i in &fold.test_ids {
        ab_pred.push(predict_abmil(&model, &ds.bags[i])?.0);
        ss_pred.push(simpleshot_predict(&protos, &embeddings[i])?.0);
    }
    Ok(FoldResult {
        abmil_bacc: balanced_accuracy(&truth, &ab_pred, s)?,
        simpleshot_bacc: balanced_accuracy(&truth, &ss_pred, s)?,
        model,
    })
}

/// Full benchmark on one dataset: FM-SI and RI on all slides, then k-fold
/// ABMIL and MI-SimpleShot. `threads > 1` trains folds concurrently; results
/// do not depend on it.
pub fn run_benchmark(ds: &Dataset, cfg: &BenchConfig, threads: usize) -> Result<BenchOutcome> {
    let stage = |name: &'static str| move |e: Error| Error::InvalidInput(format!("{name}: {e}"));
    let fmsi = shift_metrics::fm_si(ds, &cfg.tsne, &cfg.fmsi_seeds).map_err(stage("fm-si"))?;
    let ri = shift_metrics::dataset_robustness_index(ds, cfg.ri_k).map_err(stage("ri"))?;
    let folds =
        stratified_kfold(&ds.class_labels(), cfg.folds, cfg.cv_seed).map_err(stage("cv"))?;
    let embeddings = ds.embeddings();

    let results: Vec<Result<FoldResult>> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        pool.install(|| {
            folds
                .par_iter()
                .map(|f| run_fold(ds, &embeddings, f, cfg))
                .collect()
        })
    } else {
        folds
            .iter()
            .map(|f| run_fold(ds, &embeddings, f, cfg))
            .collect()
    };
    let mut abmil = Vec::with_capacity(folds.len());
    let mut simpleshot = Vec::with_capacity(folds.len());
    let mut checkpoints = Vec::with_capacity(folds.len());
    for r in results {
        let r = r.map_err(stage("classification"))?;
        abmil.push(r.abmil_bacc);
        simpleshot.push(r.simpleshot_bacc);
        checkpoints.push(r.model);
    }
    let report = BenchReport {
        dataset: ds.name.clone(),
        config_hash: cfg.config_hash(),
        seeds: SeedInfo {
            cv: cfg.cv_seed,
            train: cfg.train.seed,
            fmsi: cfg.fmsi_seeds.clone(),
        },
        fm_si: fmsi.score,
        ri: ri.ri,
        classifiers: Classifiers {
            abmil: ClassifierSummary::from_folds(abmil),
            simpleshot: ClassifierSummary::from_folds(simpleshot),
        },
        stats: ReportStats::default(),
    };
    Ok(BenchOutcome {
        report,
        folds,
        checkpoints,
        fmsi,
        ri,
    })
}

/// Correlations across several encoders' rows (needs at least three rows).
pub fn cross_model_stats(rows: &[ModelStatsRow]) -> Result<ReportStats> {
    let fmsi: Vec<f64> = rows.iter().map(|r| r.fm_si).collect();
    let ri: Vec<f64> = rows.iter().map(|r| r.ri).collect();
    let ab: Vec<f64> = rows.iter().map(|r| r.bacc_abmil).collect();
    let ss: Vec<f64> = rows.iter().map(|r| r.bacc_simpleshot).collect();
    Ok(ReportStats {
        pearson_fmsi_ri: Some(pearson(&fmsi, &ri)?),
        spearman_fmsi_ri: Some(spearman(&fmsi, &ri)?),
        r2_abmil: Some(linfit_r2(&fmsi, &ab)?.r2),
        r2_simpleshot: Some(linfit_r2(&fmsi, &ss)?.r2),
    })
}

/// One scatter point of BACC against FM-SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub model: String,
    pub fm_si: f64,
    pub bacc: f64,
    pub classifier: String,
}

pub fn plot_rows(rows: &[ModelStatsRow]) -> Vec<PlotRow> {
    let mut out = Vec::with_capacity(rows.len() * 2);
    for r in rows {
        out.push(PlotRow {
            model: r.name.clone(),
            fm_si: r.fm_si,
            bacc: r.bacc_abmil,
            classifier: "abmil".into(),
        });
        out.push(PlotRow {
            model: r.name.clone(),
            fm_si: r.fm_si,
            bacc: r.bacc_simpleshot,
            classifier: "simpleshot".into(),
        });
    }
    out
}

/// `model,fm_si,bacc,classifier`.
pub fn write_plot_csv(rows: &[PlotRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("model,fm_si,bacc,classifier\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.model, r.fm_si, r.bacc, r.classifier
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::{synth_generate, SynthConfig};

    #[test]
    fn kv_round_trip_preserves_config() {
        let mut cfg = BenchConfig::default();
        cfg.train.class_weights = Some(vec![1.0, 2.5]);
        cfg.fmsi_seeds = vec![1, 2, 3];
        cfg.simpleshot.center_l2 = true;
        let kv = cfg.to_kv();
        let mut back = BenchConfig::default();
        back.apply_kv(&kv).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(kv.keys().count(), BenchConfig::KEYS.len());
    }

    #[test]
    fn unknown_config_key_rejected() {
        let kv = KvConfig::parse("train.lr = 3").unwrap();
        assert!(BenchConfig::default().apply_kv(&kv).is_err());
    }

    #[test]
    fn small_benchmark_report_is_consistent() {
        let ds = synth_generate(
            &SynthConfig {
                slides_per_class_center: 5,
                num_classes: 3,
                dim: 16,
                class_separation: 5.0,
                patches_per_slide: (4, 8),
                ..SynthConfig::default()
            },
            1,
        )
        .unwrap();
        let cfg = BenchConfig {
            ri_k: 5,
            tsne: TsneConfig {
                n_iter: 300,
                ..TsneConfig::default()
            },
            train: TrainConfig {
                epochs: 3,
                ..TrainConfig::default()
            },
            ..BenchConfig::default()
        };
        let out = run_benchmark(&ds, &cfg, 1).unwrap();
        let r = &out.report;
        assert_eq!(r.classifiers.abmil.folds.len(), 5);
        assert_eq!(out.checkpoints.len(), 5);
        for c in [&r.classifiers.abmil, &r.classifiers.simpleshot] {
            assert!(c.folds.iter().all(|b| (0.0..=1.0).contains(b)));
            assert_eq!(c.mean, mean(&c.folds));
            assert_eq!(c.std, std_dev(&c.folds));
        }
        let parallel = run_benchmark(&ds, &cfg, 3).unwrap();
        assert_eq!(parallel.report.to_json(), r.to_json());
        assert_eq!(BenchReport::from_json(&r.to_json()).unwrap(), *r);
    }

    #[test]
    fn report_json_key_order() {
        let r = BenchReport {
            dataset: "d".into(),
            config_hash: "h".into(),
            seeds: SeedInfo {
                cv: 0,
                train: 0,
                fmsi: vec![42],
            },
            fm_si: 0.1,
            ri: 1.0,
            classifiers: Classifiers {
                abmil: ClassifierSummary::from_folds(vec![0.5]),
                simpleshot: ClassifierSummary::from_folds(vec![0.5]),
            },
            stats: ReportStats::default(),
        };
        let json = r.to_json();
        let keys = [
            "\"dataset\"",
            "\"config_hash\"",
            "\"seeds\"",
            "\"fm_si\"",
            "\"ri\"",
            "\"classifiers\"",
            "\"stats\"",
        ];
        let pos: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }
}
