//! JSON dataset manifests.
//!
//! ```json
//! {
//!   "ratio": 4,
//!   "radiometric_max": 2047.0,
//!   "entries": [
//!     {"role": "train", "pan": "p0.npy", "ms": "m0.npy", "reference": "r0.npy"},
//!     {"role": "test",  "pan": "p1.npy", "ms": "m1.npy"}
//!   ]
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::array::{load_array, save_array};
use super::FusionPair;
use crate::binio::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    #[serde(default)]
    pub role: Role,
    pub pan: PathBuf,
    pub ms: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub ratio: usize,
    #[serde(default = "unit_max")]
    pub radiometric_max: f64,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn unit_max() -> f64 {
    1.0
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let bytes = read_file(path)?;
        let mut m: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        write_atomic(path, s.as_bytes())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Load every entry with the given role (all entries when `None`).
    pub fn load_pairs<T: Scalar>(&self, role: Option<Role>) -> Result<Vec<FusionPair<T>>> {
        self.entries
            .iter()
            .filter(|e| role.map_or(true, |r| e.role == r))
            .map(|e| {
                let pair = FusionPair {
                    pan: load_array(&self.resolve(&e.pan))?,
                    ms: load_array(&self.resolve(&e.ms))?,
                    reference: e.reference.as_ref().map(|r| load_array(&self.resolve(r))).transpose()?,
                    ratio: self.ratio,
                    radiometric_max: self.radiometric_max,
                };
                pair.validate()
                    .map_err(|err| Error::Data(format!("{}: {err}", e.pan.display())))?;
                Ok(pair)
            })
            .collect()
    }
}

/// Write pairs as `<stem>_<i>_{pan,ms,ref}.npy` plus `manifest.json` into `dir`.
pub fn write_dataset<T: Scalar>(dir: &Path, stem: &str, pairs: &[(Role, &FusionPair<T>)]) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let first = pairs.first().ok_or_else(|| Error::Data("no pairs to write".into()))?.1;
    let mut entries = Vec::new();
    for (i, (role, p)) in pairs.iter().enumerate() {
        let name = |kind: &str| PathBuf::from(format!("{stem}_{i:03}_{kind}.npy"));
        save_array(&dir.join(name("pan")), &p.pan)?;
        save_array(&dir.join(name("ms")), &p.ms)?;
        let reference = match &p.reference {
            Some(r) => {
                save_array(&dir.join(name("ref")), r)?;
                Some(name("ref"))
            }
            None => None,
        };
        entries.push(ManifestEntry {
            role: *role,
            pan: name("pan"),
            ms: name("ms"),
            reference,
        });
    }
    let m = Manifest {
        ratio: first.ratio,
        radiometric_max: first.radiometric_max,
        entries,
        base_dir: dir.to_path_buf(),
    };
    m.save(&dir.join("manifest.json"))?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, DegradeSpec};

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let data = synth_dataset::<f32>(0, 3, 16, 2, &DegradeSpec::default()).unwrap();
        let tagged: Vec<_> = data
            .iter()
            .enumerate()
            .map(|(i, p)| (if i == 2 { Role::Test } else { Role::Train }, p))
            .collect();
        write_dataset(dir.path(), "s", &tagged).unwrap();
        let m = Manifest::load(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(m.load_pairs::<f32>(Some(Role::Train)).unwrap(), data[..2]);
        assert_eq!(m.load_pairs::<f32>(Some(Role::Test)).unwrap(), data[2..]);
        assert_eq!(m.load_pairs::<f32>(None).unwrap().len(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, r#"{"ratio": 4, "entries": [], "bogus": 1}"#).unwrap();
        assert!(matches!(Manifest::load(&p), Err(Error::Format { .. })));
    }
}
