//! Run configuration: a TOML file plus dotted `key=value` overrides.
//!
//! ```toml
//! [network]
//! bands = 4
//! features = 16
//! ratio = 4
//!
//! [train]
//! lr = 2.5e-4
//! batch_size = 4
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_atomic};
use crate::data::DegradeSpec;
use crate::error::{Error, Result};
use crate::metrics::MetricsConfig;
use crate::network::NetworkConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub degrade: DegradeSpec,
    pub metrics: MetricsConfig,
}

fn parse_override(raw: &str) -> toml::Value {
    // TOML literal if it parses as one, else a bare string
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty key in {key:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parse TOML text and apply `key=value` overrides in order.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<RunConfig> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_dotted(&mut table, k.trim(), parse_override(v.trim()))?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let text = match path {
            Some(p) => String::from_utf8(read_file(p)?).map_err(|_| Error::Config(format!("{}: not UTF-8", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()?;
        self.degrade.validate()?;
        if self.degrade.ratio != self.network.ratio {
            return Err(Error::Config(format!(
                "degrade.ratio {} differs from network.ratio {}",
                self.degrade.ratio, self.network.ratio
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Write the effective configuration as `config.toml` in `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("config.toml"), self.to_toml().as_bytes())
    }
}
