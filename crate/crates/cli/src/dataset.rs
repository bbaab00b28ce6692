//! Film discovery and the prepared-dataset manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weldscan::classifier::{prepare_input, Sample};
use weldscan::config::PreprocessConfig;
use weldscan::dataprep::{AugmentConfig, AugmentationOp, DatasetSplit, FilterSpec, SplitName};
use weldscan::io::{self, Provenance};
use weldscan::preprocess::{normalize_film, NormalizedFilm};
use weldscan::{Error, QualityClass};

use crate::Failure;

pub const MANIFEST: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    /// Relative to the dataset directory; absent for count-only runs.
    pub file: Option<String>,
    pub split: SplitName,
    pub label: QualityClass,
    pub film_id: String,
    pub frame: usize,
    /// 0 for the original image.
    pub copy: usize,
    pub aug_chain: Vec<AugmentationOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub provenance: Provenance,
    pub filter: FilterSpec,
    pub augmentation: AugmentConfig,
    pub preprocess: PreprocessConfig,
    pub split: DatasetSplit,
    /// Images per split, in class order.
    pub counts: BTreeMap<String, [usize; 3]>,
    pub warnings: Vec<String>,
    pub images: Vec<ImageRecord>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self, Failure> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(Failure::Core(Error::Format {
                path,
                reason: "dataset manifest not found; run `weldscan prepare` first".into(),
            }));
        }
        Ok(io::read_json(&path)?)
    }

    /// Network inputs of one split with their records.
    pub fn samples(
        &self,
        dir: &Path,
        split: SplitName,
    ) -> Result<Vec<(Sample, &ImageRecord)>, Failure> {
        self.images
            .iter()
            .filter(|r| r.split == split)
            .map(|r| {
                let file = r.file.as_ref().ok_or_else(|| {
                    Failure::Usage(
                        "dataset was prepared with --count-only and has no images".into(),
                    )
                })?;
                let img = image::open(dir.join(file)).map_err(Error::from)?.to_rgb8();
                Ok((
                    Sample {
                        input: prepare_input(&img),
                        label: r.label,
                    },
                    r,
                ))
            })
            .collect()
    }
}

/// Film files under `input`, sorted by path. A file argument is returned
/// as is.
pub fn film_files(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let entries = std::fs::read_dir(input).map_err(|e| Error::Io {
        path: input.to_path_buf(),
        source: e,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("tfilm" | "nfilm")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Core(Error::Format {
            path: input.to_path_buf(),
            reason: "no .tfilm or .nfilm files found".into(),
        }));
    }
    Ok(files)
}

/// Reads a normalized film, normalizing raw films with `pre`.
pub fn load_normalized(path: &Path, pre: &PreprocessConfig) -> Result<NormalizedFilm, Failure> {
    if path.extension().and_then(|e| e.to_str()) == Some("nfilm") {
        return Ok(io::read_nfilm(path)?);
    }
    let film = io::read_tfilm(path)?;
    Ok(normalize_film(
        &film,
        pre.t0_frames,
        pre.t_norm_frame,
        pre.eps,
    )?)
}

/// Specimen id and label from the header alone.
pub fn film_identity(path: &Path) -> Result<(String, QualityClass), Failure> {
    let h = io::read_header(path)?;
    let label = h.label.ok_or_else(|| {
        Failure::Core(Error::Format {
            path: path.to_path_buf(),
            reason: "film is unlabeled".into(),
        })
    })?;
    Ok((h.specimen_id, label))
}
