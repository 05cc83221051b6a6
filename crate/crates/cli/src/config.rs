//! The configuration file: one optional table per subcommand.

use std::path::Path;

use anyhow::{anyhow, Context as _};
use serde::Deserialize;

use crate::pipelines::{
    cook::CookSection, dump::DumpSection, propagation::PropagationSection, reconstruct::ReconstructSection,
    scatter::ScatterSection, uniqueness::UniquenessSection,
};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub verify_propagation: Option<PropagationSection>,
    pub cook_integral: Option<CookSection>,
    pub scatter: Option<ScatterSection>,
    pub reconstruct: Option<ReconstructSection>,
    pub uniqueness: Option<UniquenessSection>,
    pub dump_field: Option<DumpSection>,
}

impl Config {
    /// Returns the raw text, for the manifest, and the parsed config.
    pub fn load(path: &Path) -> anyhow::Result<(String, Config)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("config: cannot read {}", path.display()))?;
        let config = toml::from_str(&text).map_err(|e| anyhow!("config: {}: {e}", path.display()))?;
        Ok((text, config))
    }
}

/// The section of `name`, or a config error naming the missing table.
pub fn section<'a, T>(value: &'a Option<T>, name: &str) -> anyhow::Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| anyhow!("config: no [{name}] table for this subcommand"))
}
