use std::collections::HashMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::thermal::diffusion::{frame_rise_series, STEFAN_BOLTZMANN};
use crate::thermal::params::{LaserPulse, MaterialParams, RenderParams, SpecimenSpec};
use crate::{seed, Error, QualityClass, Result};

/// A recorded film: `n_frames` frames of `height × width` ADC digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalFilm {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub frame_rate: f64,
    /// Frame-major, then row-major.
    pub data: Vec<u16>,
    pub label: Option<QualityClass>,
    pub specimen_id: String,
    /// Samples clipped at the ADC ceiling during quantization.
    pub saturated: u32,
}

impl ThermalFilm {
    pub fn new(
        width: usize,
        height: usize,
        n_frames: usize,
        frame_rate: f64,
        data: Vec<u16>,
        label: Option<QualityClass>,
        specimen_id: impl Into<String>,
    ) -> Result<Self> {
        if data.len() != width * height * n_frames {
            return Err(Error::Shape {
                expected: format!("{width}x{height}x{n_frames} samples"),
                actual: format!("{} samples", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            n_frames,
            frame_rate,
            data,
            label,
            specimen_id: specimen_id.into(),
            saturated: 0,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Frame by 1-based frame number.
    pub fn frame(&self, frame: usize) -> &[u16] {
        let n = self.pixel_count();
        &self.data[(frame - 1) * n..frame * n]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[u16]> {
        self.data.chunks_exact(self.pixel_count())
    }
}

/// Noise-free surface temperature (K) for every frame and pixel, laid out
/// like [`ThermalFilm::data`]. Pixels within half the nugget diameter of its
/// centre see the effective nugget thickness, all others the sheet.
pub fn temperature_field(
    spec: &SpecimenSpec,
    mat: &MaterialParams,
    pulse: &LaserPulse,
    rp: &RenderParams,
) -> Result<Vec<f64>> {
    rp.validate()?;
    mat.validate()?;
    pulse.validate(rp.n_frames)?;
    spec.validate(rp.width, rp.height)?;

    let (w, h, n_frames) = (rp.width, rp.height, rp.n_frames);
    let npix = w * h;
    let radius_px = spec.nugget_diameter / 2.0 / rp.pixel_pitch;
    let nugget_thickness = spec.effective_nugget_thickness();
    let (cx, cy) = spec.nugget_center;

    // Responses depend on the pixel only through its thickness and lateral
    // offset, so a handful of series cover the whole image.
    let mut cache: HashMap<(u64, u64, u64), Vec<f64>> = HashMap::new();
    let mut field = vec![0.0; npix * n_frames];
    for j in 0..h {
        for i in 0..w {
            let (px, py) = (i as f64 + 0.5, j as f64 + 0.5);
            let inside = (px - cx).hypot(py - cy) <= radius_px;
            let thickness = if inside {
                nugget_thickness
            } else {
                spec.sheet_thickness
            };
            let (dx, dy) = pulse.lateral_offset(i, j, rp.pixel_pitch);
            let key = (thickness.to_bits(), dx.to_bits(), dy.to_bits());
            let rise = cache
                .entry(key)
                .or_insert_with(|| frame_rise_series(dx, dy, thickness, mat, pulse, n_frames));
            let p = j * w + i;
            for (f, r) in rise.iter().enumerate() {
                field[f * npix + p] = mat.ambient + r;
            }
        }
    }
    Ok(field)
}

/// Renders a film: temperature → black-body flux → lateral blur →
/// emissivity, gain and ambient offset → detector noise → quantization.
///
/// The blur acts on the emitted black-body flux before the per-pixel
/// emissivity is applied, so emissivity still cancels exactly in the
/// normalized flux difference.
pub fn render_film(
    spec: &SpecimenSpec,
    mat: &MaterialParams,
    pulse: &LaserPulse,
    rp: &RenderParams,
) -> Result<ThermalFilm> {
    let temps = temperature_field(spec, mat, pulse, rp)?;
    let (w, h) = (rp.width, rp.height);
    let npix = w * h;
    let kernel = gaussian_kernel(rp.blur_sigma);
    let mut rng = seed::rng(seed::derive(&[
        rp.rng_seed,
        seed::hash_str(&spec.specimen_id),
    ]));
    let noise = if rp.noise_sigma > 0.0 {
        Some(Normal::new(0.0, rp.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?)
    } else {
        None
    };
    let adc_max = rp.adc_max as f64;

    let mut data = Vec::with_capacity(temps.len());
    let mut saturated = 0u32;
    let mut flux = vec![0.0; npix];
    let mut scratch = vec![0.0; npix];
    for frame in temps.chunks_exact(npix) {
        for (f, &t) in flux.iter_mut().zip(frame) {
            let t2 = t * t;
            *f = STEFAN_BOLTZMANN * t2 * t2;
        }
        if let Some(k) = &kernel {
            blur_separable(&mut flux, &mut scratch, w, h, k);
        }
        for p in 0..npix {
            let mut digits = rp.gain * rp.emissivity[p] * flux[p] + rp.env_flux_digits[p];
            if let Some(n) = &noise {
                digits += n.sample(&mut rng);
            }
            let q = digits.round();
            let q = if q > adc_max {
                saturated += 1;
                adc_max
            } else if q < 0.0 {
                0.0
            } else {
                q
            };
            data.push(q as u16);
        }
    }

    Ok(ThermalFilm {
        width: w,
        height: h,
        n_frames: rp.n_frames,
        frame_rate: rp.frame_rate,
        data,
        label: Some(spec.quality),
        specimen_id: spec.specimen_id.clone(),
        saturated,
    })
}

fn gaussian_kernel(sigma: f64) -> Option<Vec<f64>> {
    if sigma <= 0.0 {
        return None;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    Some(k)
}

/// Separable convolution with edge replication.
fn blur_separable(img: &mut [f64], scratch: &mut [f64], w: usize, h: usize, k: &[f64]) {
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for y in 0..h {
        let row = &img[y * w..(y + 1) * w];
        for x in 0..w {
            scratch[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * row[clamp(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    for y in 0..h {
        for x in 0..w {
            img[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * scratch[clamp(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
}
