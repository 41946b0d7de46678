//! Optional TOML config. Every key mirrors a long flag (dashes become underscores) inside a
//! table named after the subcommand; top-level `seed` and `threads` apply everywhere.
//!
//! ```toml
//! threads = 4
//! seed = 7
//!
//! [simulate]
//! sigma = "ushape"
//! phi = [0.55]
//! sigma_eps2 = 0.25
//! n = 2000
//! m = 78
//! output = "panel.bin"
//! ```

use std::path::Path;

use fsvol_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub simulate: toml::Table,
    #[serde(default)]
    pub estimate: toml::Table,
    #[serde(default)]
    pub mc: toml::Table,
    #[serde(default)]
    pub ingest: toml::Table,
    #[serde(default)]
    pub avar: toml::Table,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn section<T: DeserializeOwned + Default>(&self, name: &str) -> Result<T> {
        let table = match name {
            "simulate" => &self.simulate,
            "estimate" => &self.estimate,
            "mc" => &self.mc,
            "ingest" => &self.ingest,
            "avar" => &self.avar,
            _ => unreachable!("unknown section {name}"),
        };
        if table.is_empty() {
            return Ok(T::default());
        }
        T::deserialize(toml::Value::Table(table.clone()))
            .map_err(|e| Error::Validation(format!("config section [{name}]: {e}")))
    }
}

/// Field-wise `flag.or(config)` for structs whose fields are all `Option`s.
macro_rules! overlay {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl $ty {
            pub fn overlay(self, base: $ty) -> $ty {
                $ty { $($field: self.$field.or(base.$field)),* }
            }
        }
    };
}
pub(crate) use overlay;
