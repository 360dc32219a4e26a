use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EvoError, Result};
use crate::model::{EvolutionDataset, InstanceMeta, RepresentationKind};

pub const MANIFEST_VERSION: &str = "evoembed-manifest/1";
pub const DTYPE_F32LE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInstance {
    pub instance_id: String,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail_dir: Option<String>,
}

/// JSON sidecar describing a raw feature payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    /// Path of the payload, relative to the manifest's directory.
    pub feature_file: String,
    pub dtype: String,
    /// `(T_s, N, D)`.
    pub shape: [usize; 3],
    pub iteration_labels: Vec<i64>,
    pub instances: Vec<ManifestInstance>,
    #[serde(default)]
    pub representation_kind: RepresentationKind,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| EvoError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| EvoError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn expected_bytes(&self) -> usize {
        self.shape.iter().product::<usize>() * 4
    }

    fn check(&self, path: &Path) -> Result<()> {
        let fail = |message: String| {
            Err(EvoError::Format {
                path: path.to_path_buf(),
                message,
            })
        };
        if self.dtype != DTYPE_F32LE {
            return fail(format!("unsupported dtype {:?}, expected {DTYPE_F32LE:?}", self.dtype));
        }
        let [t, n, _] = self.shape;
        if self.iteration_labels.len() != t {
            return fail(format!(
                "shape declares {t} iterations but {} labels are listed",
                self.iteration_labels.len()
            ));
        }
        if self.instances.len() != n {
            return fail(format!(
                "shape declares {n} instances but {} are listed",
                self.instances.len()
            ));
        }
        Ok(())
    }
}

/// Reads a manifest and its feature payload. Values are widened from `f32`
/// exactly; nothing is normalized.
pub fn load_dataset(manifest_path: &Path) -> Result<EvolutionDataset> {
    load_with_manifest(manifest_path).map(|(_, ds)| ds)
}

pub fn load_with_manifest(manifest_path: &Path) -> Result<(Manifest, EvolutionDataset)> {
    let manifest = Manifest::read(manifest_path)?;
    manifest.check(manifest_path)?;

    let mut ids = HashSet::new();
    let dups: Vec<String> = manifest
        .instances
        .iter()
        .filter(|m| !ids.insert(m.instance_id.as_str()))
        .map(|m| format!("instance_meta: duplicate instance_id {:?}", m.instance_id))
        .collect();
    if !dups.is_empty() {
        return Err(EvoError::Validation(dups));
    }

    let feature_path = resolve(manifest_path, &manifest.feature_file);
    let bytes = fs::read(&feature_path).map_err(|e| EvoError::io(&feature_path, e))?;
    let expected = manifest.expected_bytes();
    if bytes.len() != expected {
        return Err(EvoError::Format {
            path: feature_path,
            message: format!(
                "size mismatch: shape {:?} needs {expected} bytes, file has {}",
                manifest.shape,
                bytes.len()
            ),
        });
    }
    let features = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();

    let [_, n, d] = manifest.shape;
    let ds = EvolutionDataset {
        num_instances: n,
        iteration_labels: manifest.iteration_labels.clone(),
        feature_dim: d,
        features,
        instance_meta: manifest
            .instances
            .iter()
            .map(|m| InstanceMeta {
                instance_id: m.instance_id.clone(),
                prompt: m.prompt.clone(),
                keywords: m.keywords.iter().cloned().collect::<BTreeSet<_>>(),
            })
            .collect(),
        representation_kind: manifest.representation_kind,
    };
    ds.ensure_valid()?;
    Ok((manifest, ds))
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.f32`. Features are narrowed
/// to `f32`, so the round trip is exact for data that is `f32`-representable.
pub fn write_dataset(ds: &EvolutionDataset, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| EvoError::io(dir, e))?;
    let feature_file = format!("{stem}.f32");
    let manifest = Manifest {
        version: MANIFEST_VERSION.to_string(),
        feature_file: feature_file.clone(),
        dtype: DTYPE_F32LE.to_string(),
        shape: [ds.num_iterations(), ds.num_instances, ds.feature_dim],
        iteration_labels: ds.iteration_labels.clone(),
        instances: ds
            .instance_meta
            .iter()
            .map(|m| ManifestInstance {
                instance_id: m.instance_id.clone(),
                prompt: m.prompt.clone(),
                keywords: m.keywords.iter().cloned().collect(),
                thumbnail_dir: None,
            })
            .collect(),
        representation_kind: ds.representation_kind,
    };

    let mut payload = Vec::with_capacity(ds.features.len() * 4);
    for v in &ds.features {
        payload.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let feature_path = dir.join(&feature_file);
    fs::write(&feature_path, payload).map_err(|e| EvoError::io(&feature_path, e))?;

    let manifest_path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| EvoError::io(&manifest_path, e))?;
    Ok(manifest_path)
}

fn resolve(manifest_path: &Path, rel: &str) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(rel)
}
