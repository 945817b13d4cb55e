//! Shared scene fixtures for the pipeline benchmarks.

use planocheck_core::planogram::{planogram_from_rows, Planogram};
use planocheck_core::scene::{synthesize, FeatureScene, SynthSpec};

/// A single-type shelf with `rows x per_row` instances and mild noise.
pub fn shelf_scene(rows: usize, per_row: usize, seed: u64) -> (Planogram, FeatureScene) {
    let planogram =
        planogram_from_rows(&vec![vec!["SKU".to_string(); per_row]; rows]).unwrap();
    let spec = SynthSpec {
        features_per_instance: 6,
        descriptor_noise: 0.05,
        position_jitter: 2.0,
        clutter: rows * per_row,
        seed,
        ..SynthSpec::default()
    };
    let (scene, _) = synthesize(&planogram, &spec).unwrap();
    (planogram, scene)
}
