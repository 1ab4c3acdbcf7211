//! Fixtures shared by the pipeline benchmarks.

use pfilter_core::synth::TownOptions;
use pfilter_core::{render_scan, PipelineConfig, Scan, SceneSpec};

/// Short town drive with traffic and ghosts, rendered up front so the
/// benchmarks time only the pipeline.
pub fn town_scans(frames: usize) -> Vec<Scan> {
    let spec = SceneSpec::town(&TownOptions {
        frames,
        moving_objects: true,
        transient_fraction: 0.2,
        range_sigma: 0.01,
        ..TownOptions::default()
    });
    (0..frames).map(|k| render_scan(&spec, k).scan).collect()
}

pub fn pipeline(pfilter: bool) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.filter.enabled = pfilter;
    cfg
}
