//! File formats, dataset layout and the command implementations behind the
//! `eit` binary.

mod commands;
mod dataset;
mod frame;
mod plot;

use sha2::{Digest, Sha256};

pub use commands::{
    evaluate_files, export_plot, load_scene, reconstruct, reconstruct_scene, sweep_frequency, sweep_noise, GridInput,
    Method, ReconstructOutput, Scene, SceneInput, ReconstructOptions, SweepRow,
};
pub use dataset::{
    generate_dataset, generate_record, read_dataset_info, plan_manifest, read_manifest, split_assignment, DatasetInfo, DatasetOptions,
    DatasetRecord, ManifestRow, Split, MANIFEST_HEADER,
};
pub use frame::{frame_from_bytes, frame_to_bytes, import_frame_csv, read_frame_file, write_frame_file, FRAME_MAGIC};
pub use plot::{grid_to_pgm, PlotSidecar, MASK_SHADE};

/// Leading hex digits of the SHA-256 of `text`; embedded in every output
/// that depends on a configuration.
pub fn config_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Parses an angle such as `0.3927`, `pi/8`, `3pi/4` or `pi`.
pub fn parse_angle(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim().parse::<f64>().ok()?),
        None => (s, 1.0),
    };
    let coef = num.strip_suffix("pi")?.trim().trim_end_matches('*');
    let coef = if coef.is_empty() { 1.0 } else { coef.parse::<f64>().ok()? };
    Some(coef * std::f64::consts::PI / den)
}
