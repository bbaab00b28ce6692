//! Intensity curves, emissivity/background normalization and the RGB
//! colormap.
//!
//! The camera reading of a pixel is `gain · ε · Φ_BB(T) + Φ_env`. Taking the
//! difference to a cold reference removes `Φ_env`, and dividing by the same
//! difference at a late reference frame removes `gain · ε`, leaving a
//! dimensionless value that depends on the temperature history alone.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::thermal::ThermalFilm;
use crate::{Error, QualityClass, Result};

/// Per-frame spatial mean of the raw digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityCurve {
    pub values: Vec<f64>,
}

impl IntensityCurve {
    pub fn n_frames(&self) -> usize {
        self.values.len()
    }

    /// Value at a 1-based frame number.
    pub fn at(&self, frame: usize) -> f64 {
        self.values[frame - 1]
    }
}

pub fn mean_intensity_curve(film: &ThermalFilm) -> IntensityCurve {
    let n = film.pixel_count() as f64;
    IntensityCurve {
        values: film
            .frames()
            .map(|f| f.iter().map(|&d| d as u64).sum::<u64>() as f64 / n)
            .collect(),
    }
}

/// Normalized radiant flux difference of every pixel and frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedFilm {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub frame_rate: f64,
    /// Frame-major, then row-major. Invalid pixels hold 0 in every frame.
    pub data: Vec<f32>,
    /// Inclusive 1-based frame range averaged as the cold reference.
    pub t0_frames: (usize, usize),
    pub t_norm_frame: usize,
    pub eps: f64,
    /// Row-major, `true` where the normalizing difference exceeded `eps`.
    pub valid: Vec<bool>,
    /// Raw intensity curve of the source film, used by the frame filters.
    pub curve: IntensityCurve,
    pub label: Option<QualityClass>,
    pub specimen_id: String,
}

impl NormalizedFilm {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Frame by 1-based frame number.
    pub fn frame(&self, frame: usize) -> &[f32] {
        let n = self.pixel_count();
        &self.data[(frame - 1) * n..frame * n]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Colormapped frame together with the display range that was used.
    pub fn frame_rgb(&self, frame: usize) -> (RgbImage, f32, f32) {
        let pixels = self.frame(frame);
        let (lo, hi) = display_range(pixels, &self.valid).unwrap_or((0.0, 1.0));
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let img = to_rgb(pixels, &self.valid, self.width, self.height, lo, hi)
            .expect("display range is non-empty");
        (img, lo, hi)
    }
}

/// Normalizes a film against the mean of `t0_frames` and the frame
/// `t_norm_frame` (1-based, inclusive range).
///
/// The arithmetic is carried out on integer sums, `n₀·d(t) − Σd₀` over
/// `n₀·d(t_norm) − Σd₀`, so a constant digit offset leaves the output
/// bit-identical. Pixels whose normalizing difference is at most `eps`
/// digits are marked invalid and zeroed.
pub fn normalize_film(
    film: &ThermalFilm,
    t0_frames: (usize, usize),
    t_norm_frame: usize,
    eps: f64,
) -> Result<NormalizedFilm> {
    let (a, b) = t0_frames;
    let nt = film.n_frames;
    if !(1 <= a && a <= b && b < t_norm_frame && t_norm_frame <= nt) {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= t0 start <= t0 end < t_norm <= {nt}, got {a}..={b} and {t_norm_frame}"
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eps must be non-negative, got {eps}"
        )));
    }
    let npix = film.pixel_count();
    if npix == 0 {
        return Err(Error::DegenerateFilm(format!(
            "{}: film has no pixels",
            film.specimen_id
        )));
    }
    let n0 = (b - a + 1) as i64;
    let mut ref_sum = vec![0i64; npix];
    for f in a..=b {
        for (s, &d) in ref_sum.iter_mut().zip(film.frame(f)) {
            *s += d as i64;
        }
    }
    let norm_frame = film.frame(t_norm_frame);
    let denom: Vec<i64> = ref_sum
        .iter()
        .zip(norm_frame)
        .map(|(&s, &d)| n0 * d as i64 - s)
        .collect();
    let limit = eps * n0 as f64;
    let valid: Vec<bool> = denom.iter().map(|&d| (d.abs() as f64) > limit).collect();
    if !valid.iter().any(|&v| v) {
        return Err(Error::DegenerateFilm(format!(
            "{}: no pixel changes by more than {eps} digits between the reference frames",
            film.specimen_id
        )));
    }

    let mut data = Vec::with_capacity(npix * nt);
    for frame in film.frames() {
        for p in 0..npix {
            data.push(if valid[p] {
                ((n0 * frame[p] as i64 - ref_sum[p]) as f64 / denom[p] as f64) as f32
            } else {
                0.0
            });
        }
    }

    Ok(NormalizedFilm {
        width: film.width,
        height: film.height,
        n_frames: nt,
        frame_rate: film.frame_rate,
        data,
        t0_frames,
        t_norm_frame,
        eps,
        valid,
        curve: mean_intensity_curve(film),
        label: film.label,
        specimen_id: film.specimen_id.clone(),
    })
}

fn round_half_up(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Blue → green → red ramp for `v` in `[0, 1]`.
pub fn colormap(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.5 {
        let s = 2.0 * v;
        [
            0,
            round_half_up(255.0 * s),
            round_half_up(255.0 * (1.0 - s)),
        ]
    } else {
        let s = 2.0 * v - 1.0;
        [
            round_half_up(255.0 * s),
            round_half_up(255.0 * (1.0 - s)),
            0,
        ]
    }
}

/// Maps a normalized frame onto the colormap over `[lo, hi]`. Invalid
/// pixels are black.
pub fn to_rgb(
    frame: &[f32],
    valid: &[bool],
    width: usize,
    height: usize,
    lo: f32,
    hi: f32,
) -> Result<RgbImage> {
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "display range needs hi > lo, got [{lo}, {hi}]"
        )));
    }
    if frame.len() != width * height || valid.len() != frame.len() {
        return Err(Error::Shape {
            expected: format!("{} pixels", width * height),
            actual: format!("{} values, {} mask entries", frame.len(), valid.len()),
        });
    }
    let span = (hi - lo) as f64;
    Ok(RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let p = y as usize * width + x as usize;
        if valid[p] {
            Rgb(colormap((frame[p] - lo) as f64 / span))
        } else {
            Rgb([0, 0, 0])
        }
    }))
}

/// 1st and 99th percentile (nearest rank) of the valid pixels.
pub fn display_range(frame: &[f32], valid: &[bool]) -> Option<(f32, f32)> {
    let mut v: Vec<f32> = frame
        .iter()
        .zip(valid)
        .filter(|(_, &ok)| ok)
        .map(|(&x, _)| x)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f32::total_cmp);
    let rank = |p: f64| {
        let r = (p / 100.0 * v.len() as f64).ceil() as usize;
        v[r.clamp(1, v.len()) - 1]
    };
    Some((rank(1.0), rank(99.0)))
}
