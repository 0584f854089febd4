use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::CommandFactory;
use serde_json::json;

use shbmil_core::config::KvConfig;
use shbmil_core::feature_store::{self, LoadOptions};
use shbmil_core::harness::{self, stratified_kfold, BenchReport};
use shbmil_core::mil::{self, SimpleShotConfig};
use shbmil_core::shift_metrics::{self, DEFAULT_FMSI_SEED};
use shbmil_core::{BenchConfig, Dataset, SynthConfig, TrainConfig, TsneConfig};

use crate::{
    AbmilTrainArgs, BenchArgs, Cli, Command, FmsiArgs, GenArgs, GlobalOpts, ReportArgs, RiArgs,
    SimpleShotArgs, TrainArgs, TsneArgs,
};

// stdout writes return errors instead of panicking, so a closed pipe ends the
// command cleanly
macro_rules! out {
    ($($t:tt)*) => { writeln!(io::stdout().lock(), $($t)*)? };
}

macro_rules! out_raw {
    ($($t:tt)*) => { write!(io::stdout().lock(), $($t)*)? };
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let g = cli.global;
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.threads as usize)
        .build_global()
        .context("configuring the thread pool")?;
    match cli.command {
        Command::Gen(a) => gen(&g, a),
        Command::Fmsi(a) => fmsi(&g, a),
        Command::Ri(a) => ri(&g, a),
        Command::AbmilTrain(a) => abmil_train(&g, a),
        Command::Simpleshot(a) => simpleshot(&g, a),
        Command::Bench(a) => bench(&g, a),
        Command::Paperstats => paperstats(&g),
        Command::Report(a) => report(&g, a),
    }
}

/// Reports a flag combination clap cannot check on its own; exits with 2.
fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, msg).exit()
}

fn load(path: &Path) -> Result<Dataset> {
    feature_store::load_manifest(path, &LoadOptions::default())
        .with_context(|| format!("loading {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    out!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn gen(g: &GlobalOpts, a: GenArgs) -> Result<ExitCode> {
    if a.min_patches > a.max_patches {
        usage_error("--min-patches must not exceed --max-patches");
    }
    let Some(out) = &g.out else {
        usage_error("gen needs --out <DIR>");
    };
    let base = if a.cohort {
        if a.classes != 6 || a.centers != 2 {
            usage_error("--cohort fixes 6 classes and 2 centers");
        }
        SynthConfig::skin_cohort_shape()
    } else {
        SynthConfig::default()
    };
    let cfg = SynthConfig {
        num_classes: a.classes as usize,
        num_centers: a.centers as usize,
        dim: a.dim as usize,
        slides_per_class_center: a.per_cell as usize,
        patches_per_slide: (a.min_patches as usize, a.max_patches as usize),
        class_separation: a.separation,
        center_bias: a.beta,
        noise_std: a.noise,
        ..base
    };
    let ds = feature_store::synth_generate(&cfg, g.seed.unwrap_or(0))?;
    let manifest = feature_store::write_dataset(&ds, out)?;
    if g.json {
        print_json(&json!({
            "manifest": manifest,
            "slides": ds.len(),
            "dim": ds.dim,
            "classes": ds.num_classes,
            "centers": ds.num_centers,
            "class_counts": ds.class_counts(),
            "center_counts": ds.center_counts(),
        }))?;
    } else {
        let mut stdout = io::stdout().lock();
        feature_store::write_summary(&ds, &mut stdout)?;
        writeln!(stdout, "manifest: {}", manifest.display())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn tsne_config(base: TsneConfig, a: &TsneArgs) -> TsneConfig {
    TsneConfig {
        perplexity: a.perplexity.unwrap_or(base.perplexity),
        n_iter: a.tsne_iters.unwrap_or(base.n_iter),
        ..base
    }
}

fn fmsi(g: &GlobalOpts, a: FmsiArgs) -> Result<ExitCode> {
    let ds = load(&a.manifest)?;
    let seeds = a
        .seeds
        .clone()
        .unwrap_or_else(|| vec![g.seed.unwrap_or(DEFAULT_FMSI_SEED)]);
    let cfg = tsne_config(TsneConfig::default(), &a.tsne);
    let res = shift_metrics::fm_si(&ds, &cfg, &seeds).context("computing FM-SI")?;
    if let Some(p) = &a.embedding_csv {
        shift_metrics::write_embedding_csv(&ds, &res.embedding, p)?;
    }
    if let Some(p) = &a.trace_csv {
        res.embedding.write_trace_csv(p)?;
    }
    let view = res.to_json(None);
    if let Some(p) = &g.out {
        write_json(p, &view)?;
    }
    if g.json {
        print_json(&view)?;
    } else {
        if seeds.len() > 1 {
            for (s, v) in seeds.iter().zip(&res.per_seed_scores) {
                out!("seed {s}: {v:.4}");
            }
        }
        out!("FM-SI {:.4}", res.score);
    }
    Ok(ExitCode::SUCCESS)
}

fn ri(g: &GlobalOpts, a: RiArgs) -> Result<ExitCode> {
    let ds = load(&a.manifest)?;
    let res = shift_metrics::dataset_robustness_index(&ds, a.k).context("computing RI")?;
    if let Some(p) = &g.out {
        write_json(p, &res)?;
    }
    if g.json {
        print_json(&res)?;
    } else {
        out!(
            "RI {:.4} (k = {}, {} same-class / {} same-center neighbors)",
            res.ri, res.k, res.numerator, res.denominator
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn train_config(base: TrainConfig, a: &TrainArgs) -> TrainConfig {
    let mut cfg = base;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.peak_lr {
        cfg.peak_lr = lr;
    }
    if let Some(wd) = a.weight_decay {
        cfg.optimizer.weight_decay = wd;
    }
    cfg
}

fn abmil_bacc(params: &shbmil_core::AbmilParams, ds: &Dataset) -> Result<f64> {
    let truth = ds.class_labels();
    let pred = ds
        .bags
        .iter()
        .map(|b| mil::predict_abmil(params, b).map(|p| p.0))
        .collect::<shbmil_core::Result<Vec<_>>>()?;
    Ok(harness::balanced_accuracy(
        &truth,
        &pred,
        params.num_classes(),
    )?)
}

fn abmil_train(g: &GlobalOpts, a: AbmilTrainArgs) -> Result<ExitCode> {
    let ds = load(&a.manifest)?;
    let cfg = TrainConfig {
        seed: g.seed.unwrap_or(0),
        ..train_config(TrainConfig::default(), &a.train)
    };
    let bags: Vec<_> = ds.bags.iter().collect();
    let params = mil::train_abmil(&bags, ds.num_classes, &cfg).context("training ABMIL")?;
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("abmil.ckpt"));
    mil::write_checkpoint(&params, &out)?;
    let train_bacc = abmil_bacc(&params, &ds)?;
    let eval_bacc = match &a.eval {
        Some(p) => Some(abmil_bacc(&params, &load(p)?)?),
        None => None,
    };
    if g.json {
        print_json(&json!({
            "checkpoint": out,
            "train_bacc": train_bacc,
            "eval_bacc": eval_bacc,
        }))?;
    } else {
        out!("checkpoint: {}", out.display());
        out!("train BACC {:.2}%", 100.0 * train_bacc);
        if let Some(b) = eval_bacc {
            out!("eval BACC  {:.2}%", 100.0 * b);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn simpleshot_bacc(train: &Dataset, test: &Dataset, cfg: &SimpleShotConfig) -> Result<f64> {
    let s = train.num_classes.max(test.num_classes);
    let protos = mil::build_prototypes_with(&train.embeddings(), s, cfg)?;
    let pred = test
        .embeddings()
        .iter()
        .map(|z| mil::simpleshot_predict(&protos, z).map(|p| p.0))
        .collect::<shbmil_core::Result<Vec<_>>>()?;
    Ok(harness::balanced_accuracy(&test.class_labels(), &pred, s)?)
}

fn subset(ds: &Dataset, ids: &[usize]) -> Result<Dataset> {
    let bags = ids.iter().map(|&i| ds.bags[i].clone()).collect();
    Ok(Dataset::new(
        ds.name.clone(),
        bags,
        Some(ds.num_classes),
        Some(ds.num_centers),
    )?)
}

fn simpleshot(g: &GlobalOpts, a: SimpleShotArgs) -> Result<ExitCode> {
    let cfg = SimpleShotConfig {
        center_l2: a.center_l2,
    };
    let ds = load(&a.manifest)?;
    let folds = match &a.test {
        Some(p) => vec![simpleshot_bacc(&ds, &load(p)?, &cfg)?],
        None => {
            let splits =
                stratified_kfold(&ds.class_labels(), a.folds as usize, g.seed.unwrap_or(0))?;
            splits
                .iter()
                .map(|f| {
                    simpleshot_bacc(
                        &subset(&ds, &f.train_ids)?,
                        &subset(&ds, &f.test_ids)?,
                        &cfg,
                    )
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let mean = harness::mean(&folds);
    let std = harness::std_dev(&folds);
    let view = json!({ "folds": folds, "mean": mean, "std": std });
    if let Some(p) = &g.out {
        write_json(p, &view)?;
    }
    if g.json {
        print_json(&view)?;
    } else if folds.len() == 1 {
        out!("MI-SimpleShot BACC {:.2}%", 100.0 * mean);
    } else {
        out!(
            "MI-SimpleShot BACC {:.2} +- {:.2}% over {} folds",
            100.0 * mean,
            100.0 * std,
            folds.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

/// Defaults, then the config file, then explicit flags.
fn bench_config(g: &GlobalOpts, a: &BenchArgs) -> Result<BenchConfig> {
    let mut cfg = BenchConfig::default();
    if let Some(p) = &a.config {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let kv = KvConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))?;
        cfg.apply_kv(&kv)
            .with_context(|| format!("applying {}", p.display()))?;
    }
    if let Some(seed) = g.seed {
        cfg.cv_seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(f) = a.folds {
        cfg.folds = f as usize;
    }
    if let Some(k) = a.k {
        cfg.ri_k = k;
    }
    if let Some(s) = &a.fmsi_seeds {
        cfg.fmsi_seeds = s.clone();
    }
    if a.center_l2 {
        cfg.simpleshot.center_l2 = true;
    }
    cfg.tsne = tsne_config(cfg.tsne, &a.tsne);
    cfg.train = train_config(cfg.train, &a.train);
    Ok(cfg)
}

fn dataset_name(manifest: &Path) -> String {
    manifest
        .canonicalize()
        .ok()
        .and_then(|p| {
            p.parent()
                .and_then(|d| d.file_name())
                .map(|n| n.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "dataset".into())
}

fn bench(g: &GlobalOpts, a: BenchArgs) -> Result<ExitCode> {
    let cfg = bench_config(g, &a)?;
    let mut ds = load(&a.manifest)?;
    ds.name = a.name.clone().unwrap_or_else(|| dataset_name(&a.manifest));
    let out_dir = g.out.clone().unwrap_or_else(|| PathBuf::from("bench_out"));
    let outcome = harness::run_benchmark(&ds, &cfg, g.threads as usize)?;

    create_dir(&out_dir)?;
    fs::write(out_dir.join("config.txt"), cfg.to_kv().canonical())
        .with_context(|| format!("writing config under {}", out_dir.display()))?;
    fs::write(out_dir.join("report.json"), outcome.report.to_json())
        .with_context(|| format!("writing report under {}", out_dir.display()))?;
    let rows = [outcome.report.as_stats_row()];
    harness::write_plot_csv(&harness::plot_rows(&rows), out_dir.join("plot.csv"))?;
    shift_metrics::write_embedding_csv(
        &ds,
        &outcome.fmsi.embedding,
        out_dir.join("embedding.csv"),
    )?;
    let ckpt_dir = out_dir.join("checkpoints");
    create_dir(&ckpt_dir)?;
    for (i, p) in outcome.checkpoints.iter().enumerate() {
        mil::write_checkpoint(p, ckpt_dir.join(format!("fold{i}.ckpt")))?;
    }

    if g.json {
        out_raw!("{}", outcome.report.to_json());
    } else {
        out_raw!("{}", outcome.report.summary());
        out!("outputs       {}", out_dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn paperstats(g: &GlobalOpts) -> Result<ExitCode> {
    let summary = harness::reference_stats_check(&harness::reference_rows())?;
    if let Some(p) = &g.out {
        write_json(p, &summary)?;
    }
    if g.json {
        print_json(&summary)?;
    } else {
        out!("ABMIL - MI-SimpleShot BACC per encoder (pp):");
        for (name, gap) in &summary.gaps_pp {
            out!("  {name:<10} {gap:6.2}");
        }
        out!(
            "Spearman(FM-SI, RI) {:.4}; lowest FM-SI {}, highest {}",
            summary.spearman_fmsi_ri, summary.lowest_fmsi, summary.highest_fmsi
        );
        for c in &summary.checks {
            out!(
                "{} {:<32} {:10.6} expected {:8.4} +- {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.expected,
                c.tolerance
            );
        }
    }
    Ok(if summary.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn report(g: &GlobalOpts, a: ReportArgs) -> Result<ExitCode> {
    let mut reports = Vec::with_capacity(a.reports.len());
    for p in &a.reports {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        reports.push(
            BenchReport::from_json(&text).with_context(|| format!("parsing {}", p.display()))?,
        );
    }
    let rows: Vec<_> = reports.iter().map(BenchReport::as_stats_row).collect();
    let stats = if rows.len() >= 3 {
        harness::cross_model_stats(&rows).context("cross-model statistics")?
    } else {
        log::warn!("fewer than 3 reports; correlations left undefined");
        Default::default()
    };
    let view = json!({ "models": rows, "stats": stats });
    if let Some(dir) = &g.out {
        create_dir(dir)?;
        write_json(&dir.join("summary.json"), &view)?;
        harness::write_plot_csv(&harness::plot_rows(&rows), dir.join("plot.csv"))?;
    }
    if g.json {
        print_json(&view)?;
    } else {
        out!(
            "{:<16} {:>8} {:>8} {:>16} {:>16}",
            "model", "FM-SI", "RI", "ABMIL", "MI-SimpleShot"
        );
        for r in &rows {
            out!(
                "{:<16} {:>8.4} {:>8.4} {:>7.2} +- {:>5.2} {:>7.2} +- {:>5.2}",
                r.name,
                r.fm_si,
                r.ri,
                r.bacc_abmil,
                r.bacc_abmil_std,
                r.bacc_simpleshot,
                r.bacc_simpleshot_std
            );
        }
        let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        out!("pearson(FM-SI, RI)  {}", show(stats.pearson_fmsi_ri));
        out!("spearman(FM-SI, RI) {}", show(stats.spearman_fmsi_ri));
        out!("R2 ABMIL ~ FM-SI    {}", show(stats.r2_abmil));
        out!("R2 SimpleShot ~ FM-SI {}", show(stats.r2_simpleshot));
    }
    Ok(ExitCode::SUCCESS)
}
