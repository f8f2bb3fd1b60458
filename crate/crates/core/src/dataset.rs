//! Labelled image folders and their manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::label::{ClassSet, LabelClass};
use crate::pixels::{standardize, Pixels, RESIZE_FILTER};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Real,
    Gan,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSample {
    pub id: String,
    pub label: LabelClass,
    pub source: Source,
    pub pixels: Pixels,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// `<class>/<file name>`, unique within a manifest.
    pub id: String,
    pub path: PathBuf,
    pub label: LabelClass,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub counts: BTreeMap<LabelClass, usize>,
    /// SHA-256 over the ordered `(id, byte length)` list.
    pub checksum: String,
    pub resize_filter: String,
    /// Files that were skipped because they could not be decoded.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl DatasetManifest {
    /// Builds a manifest from entries; they are sorted by id.
    pub fn from_entries(root: impl Into<PathBuf>, mut entries: Vec<ManifestEntry>) -> Result<Self, Error> {
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = entries.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidInput(format!("duplicate id {}", w[0].id)));
        }
        let mut counts = BTreeMap::new();
        let mut hasher = Sha256::new();
        for e in &entries {
            *counts.entry(e.label).or_insert(0) += 1;
            let len = fs::metadata(&e.path).map(|m| m.len()).unwrap_or(0);
            hasher.update(e.id.as_bytes());
            hasher.update([0]);
            hasher.update(len.to_le_bytes());
        }
        Ok(DatasetManifest {
            root: root.into(),
            entries,
            counts,
            checksum: hex(&hasher.finalize()),
            resize_filter: RESIZE_FILTER.to_string(),
            warnings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Keeps only entries whose label is in `classes`.
    pub fn restrict(&self, classes: &ClassSet) -> Result<Self, Error> {
        let entries = self.entries.iter().filter(|e| classes.contains(e.label)).cloned().collect();
        let mut m = Self::from_entries(self.root.clone(), entries)?;
        m.warnings = self.warnings.clone();
        Ok(m)
    }

    /// CSV with columns `id,path,label,width,height`.
    pub fn to_csv(&self) -> Result<String, Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "path", "label", "width", "height"])?;
        for e in &self.entries {
            w.write_record([
                e.id.as_str(),
                &e.path.to_string_lossy(),
                e.label.as_str(),
                &e.width.to_string(),
                &e.height.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Decodes and standardizes the listed ids in the given order.
    pub fn load_samples(&self, ids: &[String]) -> Result<Vec<ImageSample>, Error> {
        ids.iter()
            .map(|id| {
                let e = self
                    .entry(id)
                    .ok_or_else(|| Error::InvalidInput(format!("id {id} not in manifest")))?;
                let img = image::open(&e.path).map_err(|err| Error::Decode {
                    path: e.path.clone(),
                    message: err.to_string(),
                })?;
                Ok(ImageSample {
                    id: e.id.clone(),
                    label: e.label,
                    source: Source::Real,
                    pixels: standardize(&img)?,
                })
            })
            .collect()
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

/// Scans `<root>/<class>/*.{png,jpg,jpeg}` for every class in `classes`.
///
/// Files that fail to decode are skipped and listed in `warnings`.
pub fn load_dataset(root: &Path, classes: &ClassSet) -> Result<DatasetManifest, Error> {
    let missing: Vec<&str> = classes
        .classes()
        .iter()
        .filter(|c| !root.join(c.as_str()).is_dir())
        .map(|c| c.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Structure(format!(
            "{} is missing class directories: {}",
            root.display(),
            missing.join(", ")
        )));
    }
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for &class in classes.classes() {
        let dir = root.join(class.as_str());
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image(p))
            .collect();
        files.sort();
        for path in files {
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            match image::open(&path) {
                Ok(img) if img.width() > 0 && img.height() > 0 => entries.push(ManifestEntry {
                    id: format!("{}/{name}", class.as_str()),
                    path: path.clone(),
                    label: class,
                    width: img.width(),
                    height: img.height(),
                }),
                Ok(_) => warnings.push(format!("{}: empty image", path.display())),
                Err(e) => warnings.push(format!("{}: {e}", path.display())),
            }
        }
    }
    for w in &warnings {
        log::warn!("skipped {w}");
    }
    let mut m = DatasetManifest::from_entries(root, entries)?;
    m.warnings = warnings;
    Ok(m)
}

/// Writes samples as PNGs under `<dir>/<class>/<id-with-slashes-replaced>.png`.
pub fn write_image_folder(dir: &Path, samples: &[ImageSample]) -> Result<(), Error> {
    for s in samples {
        let class_dir = dir.join(s.label.as_str());
        fs::create_dir_all(&class_dir)?;
        let stem = s.id.replace(['/', '\\'], "_");
        s.pixels
            .to_rgb8()
            .save(class_dir.join(format!("{stem}.png")))
            .map_err(|e| Error::Encode(e.to_string()))?;
    }
    Ok(())
}
