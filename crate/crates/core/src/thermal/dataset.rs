use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::thermal::diffusion::STEFAN_BOLTZMANN;
use crate::thermal::params::{LaserPulse, MaterialParams, RenderParams, SpecimenSpec};
use crate::thermal::render::{render_film, ThermalFilm};
use crate::{seed, Error, QualityClass, Result};

/// Probability of each quality class when sampling specimens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassMix {
    pub good: f64,
    pub medium: f64,
    pub bad: f64,
}

impl Default for ClassMix {
    fn default() -> Self {
        Self {
            good: 0.45,
            medium: 0.17,
            bad: 0.38,
        }
    }
}

impl ClassMix {
    pub fn validate(&self) -> Result<()> {
        let p = [self.good, self.medium, self.bad];
        if p.iter().any(|&v| !(v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "class mix must be non-negative and sum to 1, got {p:?}"
            )));
        }
        Ok(())
    }

    pub fn probability(&self, class: QualityClass) -> f64 {
        match class {
            QualityClass::Good => self.good,
            QualityClass::Medium => self.medium,
            QualityClass::Bad => self.bad,
        }
    }

    /// Maps a uniform draw in `[0, 1)` onto a class.
    pub fn pick(&self, u: f64) -> QualityClass {
        let mut acc = 0.0;
        let mut last = QualityClass::Good;
        for c in QualityClass::ALL {
            let p = self.probability(c);
            if p > 0.0 {
                acc += p;
                last = c;
                if u < acc {
                    return c;
                }
            }
        }
        last
    }
}

/// Sampling ranges for the per-specimen parameters. Lengths in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamRanges {
    pub good_diameter: (f64, f64),
    pub medium_diameter: (f64, f64),
    pub bad_diameter: (f64, f64),
    /// Thermal contact through a stick weld; sound joints have contact 1.
    pub bad_contact: (f64, f64),
    pub sheet_thickness: f64,
    pub stack_thickness: f64,
    /// Nugget centre displacement from the image centre, in pixels.
    pub center_jitter: f64,
    /// Relative spread of the absorbed energy.
    pub energy_jitter: f64,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            good_diameter: (4.5e-3, 6.5e-3),
            medium_diameter: (2.0e-3, 4.0e-3),
            bad_diameter: (0.0, 1.0e-3),
            bad_contact: (0.0, 0.3),
            sheet_thickness: 1.0e-3,
            stack_thickness: 2.0e-3,
            center_jitter: 4.0,
            energy_jitter: 0.02,
        }
    }
}

impl ParamRanges {
    pub fn diameter(&self, class: QualityClass) -> (f64, f64) {
        match class {
            QualityClass::Good => self.good_diameter,
            QualityClass::Medium => self.medium_diameter,
            QualityClass::Bad => self.bad_diameter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("good diameter", self.good_diameter),
            ("medium diameter", self.medium_diameter),
            ("bad diameter", self.bad_diameter),
        ] {
            if !(lo >= 0.0 && lo <= hi) {
                return Err(Error::InvalidParameter(format!(
                    "{name} range [{lo}, {hi}] is invalid"
                )));
            }
        }
        let (c0, c1) = self.bad_contact;
        if !(0.0 <= c0 && c0 <= c1 && c1 <= 1.0) {
            return Err(Error::InvalidParameter(
                "bad contact range must lie in [0, 1]".into(),
            ));
        }
        if !(self.center_jitter >= 0.0 && (0.0..1.0).contains(&self.energy_jitter)) {
            return Err(Error::InvalidParameter(
                "jitter must be non-negative, energy jitter < 1".into(),
            ));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Zero-mean sum of a few random low-frequency cosines, scaled so its
/// largest magnitude is `amplitude`.
fn smooth_field(rng: &mut ChaCha8Rng, width: usize, height: usize, amplitude: f64) -> Vec<f64> {
    let mut field = vec![0.0; width * height];
    if amplitude == 0.0 {
        return field;
    }
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            let kx = rng.random_range(0.3..1.5) * std::f64::consts::TAU / width as f64;
            let ky = rng.random_range(0.3..1.5) * std::f64::consts::TAU / height as f64;
            (kx, ky, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    for j in 0..height {
        for i in 0..width {
            field[j * width + i] = waves
                .iter()
                .map(|&(kx, ky, ph)| (kx * i as f64 + ky * j as f64 + ph).cos())
                .sum();
        }
    }
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let peak = field.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
    field.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    field
}

/// Per-pixel emissivity: independent uniform draws plus a smooth zero-mean
/// variation standing in for coating thickness changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmissivityModel {
    pub min: f64,
    pub max: f64,
    pub smooth_amplitude: f64,
}

impl Default for EmissivityModel {
    fn default() -> Self {
        Self {
            min: 0.55,
            max: 0.95,
            smooth_amplitude: 0.04,
        }
    }
}

impl EmissivityModel {
    pub fn mean(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, width: usize, height: usize) -> Vec<f64> {
        let smooth = smooth_field(rng, width, height, self.smooth_amplitude);
        smooth
            .into_iter()
            .map(|s| (uniform(rng, (self.min, self.max)) + s).clamp(1e-3, 1.0))
            .collect()
    }
}

/// Additive ambient and path radiation in digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OffsetModel {
    pub mean: f64,
    pub smooth_amplitude: f64,
}

impl Default for OffsetModel {
    fn default() -> Self {
        Self {
            mean: 4605.0,
            smooth_amplitude: 20.0,
        }
    }
}

impl OffsetModel {
    pub fn sample(&self, rng: &mut ChaCha8Rng, width: usize, height: usize) -> Vec<f64> {
        smooth_field(rng, width, height, self.smooth_amplitude)
            .into_iter()
            .map(|s| (self.mean + s).max(0.0))
            .collect()
    }
}

/// Everything needed to turn a seed into a labeled film.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub frame_rate: f64,
    pub pixel_pitch: f64,
    pub noise_sigma: f64,
    pub gain: f64,
    pub adc_max: u16,
    pub blur_sigma: f64,
    pub material: MaterialParams,
    pub pulse: LaserPulse,
    pub emissivity: EmissivityModel,
    pub offset: OffsetModel,
    pub ranges: ParamRanges,
    pub class_mix: ClassMix,
}

/// Emitted black-body baseline at ambient, in digits, for a film-mean
/// emissivity. Used to calibrate `gain`.
const BASELINE_EMISSION_DIGITS: f64 = 1400.0;

impl Default for SimulationConfig {
    fn default() -> Self {
        let material = MaterialParams::default();
        let emissivity = EmissivityModel::default();
        let t0 = material.ambient;
        let gain = BASELINE_EMISSION_DIGITS / (emissivity.mean() * STEFAN_BOLTZMANN * t0.powi(4));
        Self {
            width: 131,
            height: 146,
            n_frames: 250,
            frame_rate: 40.0,
            pixel_pitch: 133e-6,
            noise_sigma: 4.0,
            gain,
            adc_max: 16383,
            blur_sigma: 1.0,
            material,
            pulse: LaserPulse::default(),
            emissivity,
            offset: OffsetModel::default(),
            ranges: ParamRanges::default(),
            class_mix: ClassMix::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.pulse.validate(self.n_frames)?;
        self.ranges.validate()?;
        self.class_mix.validate()?;
        if (self.pulse.frame_rate - self.frame_rate).abs() > 1e-12 {
            return Err(Error::InvalidParameter(
                "pulse and camera frame rates differ".into(),
            ));
        }
        let e = &self.emissivity;
        if !(0.0 < e.min - e.smooth_amplitude
            && e.min <= e.max
            && e.max + e.smooth_amplitude <= 1.0)
        {
            return Err(Error::InvalidParameter(
                "emissivity model must stay inside (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Render parameters for one film, with fields drawn from `film_seed`.
    pub fn render_params(&self, film_seed: u64) -> RenderParams {
        let mut erng = seed::rng(seed::derive(&[film_seed, 2]));
        let mut orng = seed::rng(seed::derive(&[film_seed, 3]));
        RenderParams {
            width: self.width,
            height: self.height,
            n_frames: self.n_frames,
            frame_rate: self.frame_rate,
            pixel_pitch: self.pixel_pitch,
            emissivity: self.emissivity.sample(&mut erng, self.width, self.height),
            env_flux_digits: self.offset.sample(&mut orng, self.width, self.height),
            noise_sigma: self.noise_sigma,
            gain: self.gain,
            adc_max: self.adc_max,
            blur_sigma: self.blur_sigma,
            rng_seed: seed::derive(&[film_seed, 1]),
        }
    }
}

/// The sampled parameters of one film, enough to render it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilmPlan {
    pub index: usize,
    pub seed: u64,
    pub spec: SpecimenSpec,
    pub pulse: LaserPulse,
}

impl FilmPlan {
    pub fn render(&self, cfg: &SimulationConfig) -> Result<ThermalFilm> {
        let rp = cfg.render_params(self.seed);
        render_film(&self.spec, &cfg.material, &self.pulse, &rp)
    }
}

/// Samples specimen parameters for `n_films` films without rendering them.
pub fn plan_dataset(
    cfg: &SimulationConfig,
    n_films: usize,
    master_seed: u64,
) -> Result<Vec<FilmPlan>> {
    cfg.validate()?;
    let r = &cfg.ranges;
    let (cx, cy) = (cfg.width as f64 / 2.0, cfg.height as f64 / 2.0);
    (0..n_films)
        .map(|index| {
            let film_seed = seed::derive(&[master_seed, index as u64]);
            let mut rng = seed::rng(film_seed);
            let quality = cfg.class_mix.pick(rng.random::<f64>());
            let nugget_diameter = uniform(&mut rng, r.diameter(quality));
            let contact_quality = match quality {
                QualityClass::Bad => uniform(&mut rng, r.bad_contact),
                _ => 1.0,
            };
            let jx = uniform(&mut rng, (-r.center_jitter, r.center_jitter));
            let jy = uniform(&mut rng, (-r.center_jitter, r.center_jitter));
            let scale = 1.0 + uniform(&mut rng, (-r.energy_jitter, r.energy_jitter));
            let spec = SpecimenSpec {
                sheet_thickness: r.sheet_thickness,
                stack_thickness: r.stack_thickness,
                nugget_diameter,
                nugget_center: (
                    (cx + jx).clamp(0.0, cfg.width as f64),
                    (cy + jy).clamp(0.0, cfg.height as f64),
                ),
                contact_quality,
                quality,
                specimen_id: format!("film-{index:04}"),
            };
            spec.validate(cfg.width, cfg.height)?;
            let mut pulse = cfg.pulse.clone();
            pulse.absorbed_energy *= scale;
            Ok(FilmPlan {
                index,
                seed: film_seed,
                spec,
                pulse,
            })
        })
        .collect()
}

/// Samples and renders `n_films` labeled films. Each film depends only on
/// `master_seed` and its index.
pub fn generate_dataset(
    cfg: &SimulationConfig,
    n_films: usize,
    master_seed: u64,
) -> Result<Vec<ThermalFilm>> {
    plan_dataset(cfg, n_films, master_seed)?
        .iter()
        .map(|p| p.render(cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_mix_pick_respects_boundaries() {
        let mix = ClassMix::default();
        assert_eq!(mix.pick(0.0), QualityClass::Good);
        assert_eq!(mix.pick(0.449), QualityClass::Good);
        assert_eq!(mix.pick(0.45), QualityClass::Medium);
        assert_eq!(mix.pick(0.619), QualityClass::Medium);
        assert_eq!(mix.pick(0.63), QualityClass::Bad);
        let only_good = ClassMix {
            good: 1.0,
            medium: 0.0,
            bad: 0.0,
        };
        assert_eq!(only_good.pick(0.999), QualityClass::Good);
        assert!(ClassMix {
            good: 0.5,
            medium: 0.2,
            bad: 0.2
        }
        .validate()
        .is_err());
    }

    #[test]
    fn smooth_field_is_zero_mean_and_bounded() {
        let mut rng = seed::rng(3);
        let f = smooth_field(&mut rng, 31, 17, 0.04);
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!(f.iter().all(|v| v.abs() <= 0.04 + 1e-12));
    }

    #[test]
    fn default_gain_hits_baseline_emission() {
        let cfg = SimulationConfig::default();
        let emitted = cfg.gain * 0.75 * STEFAN_BOLTZMANN * cfg.material.ambient.powi(4);
        assert!((emitted - 1400.0).abs() < 1e-9);
        cfg.validate().unwrap();
    }

    #[test]
    fn plans_are_deterministic_and_prefix_stable() {
        let cfg = SimulationConfig::default();
        let a = plan_dataset(&cfg, 20, 9).unwrap();
        let b = plan_dataset(&cfg, 5, 9).unwrap();
        assert_eq!(&a[..5], &b[..]);
        assert!(plan_dataset(&cfg, 0, 9).unwrap().is_empty());
        for p in &a {
            let (lo, hi) = cfg.ranges.diameter(p.spec.quality);
            assert!(p.spec.nugget_diameter >= lo && p.spec.nugget_diameter <= hi);
        }
    }
}
