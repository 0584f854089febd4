//! Cross-validation, metrics, reference statistics and report assembly.

mod cv;
mod reference;
mod run;
mod stats;

pub use cv::{stratified_kfold, FoldSplit};
pub use reference::{
    reference_rows, reference_stats_check, ModelStatsRow, ReferenceSummary, StatCheck,
};
pub use run::{
    cross_model_stats, plot_rows, run_benchmark, write_plot_csv, BenchConfig, BenchOutcome,
    BenchReport, ClassifierSummary, Classifiers, PlotRow, ReportStats, SeedInfo,
};
pub use stats::{
    average_ranks, balanced_accuracy, linfit_r2, mean, pearson, spearman, std_dev, LinFit,
};
