//! Pipeline configuration shared by the command-line tool and bindings.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::TrainConfig;
use crate::dataprep::{builtin_filter, AugmentConfig};
use crate::eval::{hex, AblationSetup};
use crate::thermal::SimulationConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Inclusive 1-based cold reference frames.
    pub t0_frames: (usize, usize),
    pub t_norm_frame: usize,
    /// Smallest normalizing difference, in digits, for a valid pixel.
    pub eps: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            t0_frames: (1, 10),
            t_norm_frame: 250,
            eps: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub filters: Vec<String>,
    /// Augmentation names, see [`AugmentConfig::from_name`].
    pub augmentations: Vec<String>,
    pub n_seeds: usize,
    pub frames_per_film: Option<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            filters: ["F3", "F9", "F10", "F11"].map(String::from).to_vec(),
            augmentations: ["none", "positional", "positional+color", "color"]
                .map(String::from)
                .to_vec(),
            n_seeds: 3,
            frames_per_film: Some(6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every random stream of the pipeline derives from it.
    pub seed: u64,
    pub n_films: usize,
    pub simulation: SimulationConfig,
    pub preprocess: PreprocessConfig,
    pub filter: String,
    pub augment: AugmentConfig,
    pub split: [f64; 3],
    pub train: TrainConfig,
    pub ablation: AblationConfig,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_films: 115,
            simulation: SimulationConfig::default(),
            preprocess: PreprocessConfig::default(),
            filter: "F10".into(),
            augment: AugmentConfig::positional(),
            split: [0.7, 0.15, 0.15],
            train: TrainConfig::default(),
            ablation: AblationConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.simulation.validate()?;
        let p = &self.preprocess;
        let (a, b) = p.t0_frames;
        if !(1 <= a && a <= b && b < p.t_norm_frame && p.t_norm_frame <= self.simulation.n_frames) {
            return Err(Error::InvalidParameter(format!(
                "reference frames {a}..={b} and t_norm {} do not fit {} frames",
                p.t_norm_frame, self.simulation.n_frames
            )));
        }
        if !(p.eps >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps must be non-negative, got {}",
                p.eps
            )));
        }
        builtin_filter(&self.filter)?.validate(self.simulation.n_frames)?;
        for f in &self.ablation.filters {
            builtin_filter(f)?;
        }
        for a in &self.ablation.augmentations {
            AugmentConfig::from_name(a)?;
        }
        if self.ablation.n_seeds == 0 {
            return Err(Error::InvalidParameter(
                "ablation needs at least one seed".into(),
            ));
        }
        self.augment.validate()?;
        self.train.validate()?;
        if self.split.iter().any(|r| !(r.is_finite() && *r >= 0.0))
            || self.split.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::InvalidParameter(format!(
                "invalid split ratios {:?}",
                self.split
            )));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))[..16].to_string()
    }

    pub fn ablation_setup(&self) -> AblationSetup {
        AblationSetup {
            split_ratios: self.split,
            split_seed: self.seed,
            train: self.train.clone(),
            n_seeds: self.ablation.n_seeds,
            frames_per_film: self.ablation.frames_per_film,
            augment: self.augment.clone(),
            verbose: false,
        }
    }
}
