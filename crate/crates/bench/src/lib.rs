//! Fixtures shared by the criterion benchmarks in `benches/`.

use shbmil_core::feature_store::synth_generate;
use shbmil_core::{Dataset, SynthConfig};

/// Six-class, two-center synthetic cohort with `per_cell * 12` slides.
pub fn cohort(per_cell: usize, dim: usize, center_bias: f64) -> Dataset {
    let cfg = SynthConfig {
        dim,
        slides_per_class_center: per_cell,
        center_bias,
        ..SynthConfig::default()
    };
    synth_generate(&cfg, 0).expect("valid synthetic config")
}
