//! Experiment presets shipped with the binary. The JSON sources live in
//! `crates/cli/presets/` and double as config examples.

use erd_core::propcheck::PropCheckConfig;

use crate::config::ExperimentSpec;
use crate::error::{CliError, Result};

const PRESETS: [(&str, &str); 4] = [
    ("clusterable-k6", include_str!("../presets/clusterable-k6.json")),
    ("bands-2d", include_str!("../presets/bands-2d.json")),
    ("moons-2d", include_str!("../presets/moons-2d.json")),
    ("blobs-far-ood", include_str!("../presets/blobs-far-ood.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

pub fn experiment(name: &str) -> Result<ExperimentSpec> {
    let (_, source) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        CliError::Config(format!(
            "unknown preset {name:?}; available: {}",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    serde_json::from_str(source).map_err(|e| CliError::Config(format!("preset {name} is malformed: {e}")))
}

/// Verifier preset: six clusters in 16 dimensions, 1200 points, 20 seeds.
pub fn propcheck() -> PropCheckConfig {
    PropCheckConfig::default()
}
