//! Dataset manifest: the instance list, train/test split, generator echo and
//! per-instance reference bounds.

use crate::error::{Error, Result};
use crate::harness::config::ProblemKind;
use crate::oracles::{load_instance, Instance};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceEntry {
    /// File name relative to the manifest directory.
    pub file: String,
    pub seed: u64,
    pub split: Split,
    /// Best known raw Lagrangian bound `LR(pi*)`, merged by maximum.
    pub reference: Option<f64>,
}

impl InstanceEntry {
    /// Instance identifier used in reports: the file stem.
    pub fn id(&self) -> &str {
        Path::new(&self.file)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(&self.file)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub problem: ProblemKind,
    pub instances: Vec<InstanceEntry>,
    /// Echo of the generator parameters that produced the dataset.
    pub generator: serde_json::Value,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<(Self, PathBuf)> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::contract(format!("{}: {e}", path.display())))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::contract(format!("{}: {e}", path.display())))?;
        Ok((manifest, path))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &InstanceEntry> {
        self.instances.iter().filter(move |e| e.split == split)
    }

    pub fn load_instance(&self, dir: &Path, entry: &InstanceEntry) -> Result<Instance> {
        let instance = load_instance(&dir.join(&entry.file))?;
        let matches = matches!(
            (&instance, self.problem),
            (Instance::Mcnd(_), ProblemKind::Mcnd) | (Instance::Gap(_), ProblemKind::Gap)
        );
        if !matches {
            return Err(Error::instance(format!(
                "{}: instance family does not match manifest problem {:?}",
                entry.file, self.problem
            )));
        }
        Ok(instance)
    }

    /// Raises the stored reference to `bound` when it improves it.
    pub fn merge_reference(&mut self, index: usize, bound: f64) {
        let slot = &mut self.instances[index].reference;
        *slot = Some(match *slot {
            Some(old) => old.max(bound),
            None => bound,
        });
    }

    pub fn require_references(&self, split: Split) -> Result<()> {
        for entry in self.split(split) {
            if entry.reference.is_none() {
                return Err(Error::contract(format!(
                    "instance {} has no reference bound; run the reference command first",
                    entry.id()
                )));
            }
        }
        Ok(())
    }
}

/// Percentage gap of a bound against the reference:
/// `100 * (reference - bound) / reference`.
pub fn gap_pct(reference: f64, bound: f64) -> Result<f64> {
    if !reference.is_finite() || reference.abs() < 1e-12 {
        return Err(Error::contract(format!(
            "reference bound {reference} unusable for the gap metric"
        )));
    }
    Ok(100.0 * (reference - bound) / reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_formula() {
        assert_eq!(gap_pct(100.0, 90.0).unwrap(), 10.0);
        assert_eq!(gap_pct(100.0, 100.0).unwrap(), 0.0);
        assert!(gap_pct(0.0, 1.0).is_err());
    }

    #[test]
    fn merge_reference_is_max() {
        let mut manifest = DatasetManifest {
            name: "d".into(),
            problem: ProblemKind::Mcnd,
            instances: vec![InstanceEntry {
                file: "a.json".into(),
                seed: 0,
                split: Split::Train,
                reference: Some(5.0),
            }],
            generator: serde_json::Value::Null,
        };
        manifest.merge_reference(0, 3.0);
        assert_eq!(manifest.instances[0].reference, Some(5.0));
        manifest.merge_reference(0, 7.0);
        assert_eq!(manifest.instances[0].reference, Some(7.0));
    }

    #[test]
    fn missing_references_are_reported() {
        let manifest = DatasetManifest {
            name: "d".into(),
            problem: ProblemKind::Mcnd,
            instances: vec![InstanceEntry {
                file: "a.json".into(),
                seed: 0,
                split: Split::Test,
                reference: None,
            }],
            generator: serde_json::Value::Null,
        };
        assert!(manifest.require_references(Split::Test).is_err());
        assert!(manifest.require_references(Split::Train).is_ok());
    }
}
