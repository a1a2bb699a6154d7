//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use smallnoise_core::config::{preset_config, ResolvedModel};
use smallnoise_core::rng::path_seed;
use smallnoise_core::{sample_noise_path, NoisePath, TimeGrid};

pub fn preset(name: &str) -> ResolvedModel {
    preset_config(name)
        .and_then(|(cfg, _)| cfg.resolve())
        .expect("built-in presets resolve")
}

/// One noise realization of `model` on `[0, 1]` with `steps` steps.
pub fn noise(model: &ResolvedModel, steps: usize, replicate: u64) -> NoisePath {
    let grid = Arc::new(TimeGrid::uniform(1.0, steps).expect("valid grid"));
    sample_noise_path(&model.noise, grid, path_seed(1, replicate))
}

/// Coefficient vectors `u_0..u_k` with entries in `[-1, 1)`.
pub fn coefficients(dim: usize, k: usize) -> Vec<Vec<f64>> {
    (0..=k)
        .map(|j| {
            (0..dim)
                .map(|i| ((7 * j + 3 * i + 1) % 11) as f64 / 5.5 - 1.0)
                .collect()
        })
        .collect()
}
