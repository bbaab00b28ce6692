//! Frame filters, image augmentation and film-level dataset splits.

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::preprocess::{IntensityCurve, NormalizedFilm};
use crate::{seed, Error, QualityClass, Result};

/// A frame window intersected with a band of the raw mean intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub id: String,
    /// Inclusive 1-based frame range.
    pub frames: (usize, usize),
    /// Inclusive band of the film-mean digits.
    pub intensity: (f64, f64),
    pub description: String,
}

impl FilterSpec {
    pub fn new(id: &str, frames: (usize, usize), intensity: (f64, f64), description: &str) -> Self {
        Self {
            id: id.into(),
            frames,
            intensity,
            description: description.into(),
        }
    }

    pub fn validate(&self, n_frames: usize) -> Result<()> {
        let (a, b) = self.frames;
        if !(1 <= a && a <= b && b <= n_frames) {
            return Err(Error::InvalidParameter(format!(
                "filter {}: frame range {a}..={b} outside 1..={n_frames}",
                self.id
            )));
        }
        if !(self.intensity.0 < self.intensity.1) {
            return Err(Error::InvalidParameter(format!(
                "filter {}: empty intensity band",
                self.id
            )));
        }
        Ok(())
    }

    pub fn accepts(&self, frame: usize, mean_digits: f64) -> bool {
        let (a, b) = self.frames;
        let (lo, hi) = self.intensity;
        frame >= a && frame <= b && mean_digits >= lo && mean_digits <= hi
    }
}

/// The twelve frame/intensity filters of the reference study.
pub fn builtin_filters() -> Vec<FilterSpec> {
    vec![
        FilterSpec::new("F1", (1, 25), (5000.0, 7000.0), "No Heating"),
        FilterSpec::new("F2", (35, 45), (9000.0, 11000.0), "Intensity Peak 2"),
        FilterSpec::new("F3", (51, 60), (12500.0, 14400.0), "Maximum Intensity"),
        FilterSpec::new("F4", (61, 75), (9700.0, 11000.0), "After-Maximum"),
        FilterSpec::new("F5", (76, 100), (8000.0, 9100.0), "Cool Down"),
        FilterSpec::new("F6", (101, 135), (7000.0, 8000.0), "Cool Down"),
        FilterSpec::new("F7", (136, 170), (6600.0, 7000.0), "Cool Down"),
        FilterSpec::new("F8", (171, 210), (6200.0, 6500.0), "Cool Down"),
        FilterSpec::new("F9", (211, 250), (6050.0, 6100.0), "End"),
        FilterSpec::new("F10", (20, 75), (8000.0, 14400.0), "Peaks Combined"),
        FilterSpec::new("F11", (1, 250), (400.0, 14000.0), "Cool Down"),
        FilterSpec::new("F12", (101, 250), (6200.0, 8000.0), "Cool Down"),
    ]
}

pub fn builtin_filter(id: &str) -> Result<FilterSpec> {
    builtin_filters()
        .into_iter()
        .find(|f| f.id.eq_ignore_ascii_case(id))
        .ok_or_else(|| Error::InvalidParameter(format!("unknown filter {id:?}")))
}

/// 1-based frames of a film accepted by `spec`, in ascending order.
pub fn select_frames(curve: &IntensityCurve, spec: &FilterSpec) -> Vec<usize> {
    let (a, b) = spec.frames;
    (a..=b.min(curve.n_frames()))
        .filter(|&f| spec.accepts(f, curve.at(f)))
        .collect()
}

/// A 3-channel training image with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: RgbImage,
    pub label: QualityClass,
    pub film_id: String,
    pub frame_index: usize,
    pub aug_chain: Vec<AugmentationOp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterStatus {
    Selected,
    /// No frame of any film passed the filter.
    Empty,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub images: Vec<LabeledImage>,
    pub status: FilterStatus,
}

/// Total number of frames `spec` selects across `films`.
pub fn count_selected(films: &[NormalizedFilm], spec: &FilterSpec) -> usize {
    films
        .iter()
        .map(|f| select_frames(&f.curve, spec).len())
        .sum()
}

/// Colormapped images of every selected frame, ordered by film id and then
/// frame number.
pub fn apply_filter(films: &[NormalizedFilm], spec: &FilterSpec) -> Result<FilterOutput> {
    let mut order: Vec<&NormalizedFilm> = films.iter().collect();
    order.sort_by(|a, b| a.specimen_id.cmp(&b.specimen_id));
    let mut images = Vec::new();
    for film in order {
        spec.validate(film.n_frames)?;
        let label = film.label.ok_or_else(|| {
            Error::InvalidParameter(format!("film {} has no label", film.specimen_id))
        })?;
        for frame in select_frames(&film.curve, spec) {
            images.push(LabeledImage {
                pixels: film.frame_rgb(frame).0,
                label,
                film_id: film.specimen_id.clone(),
                frame_index: frame,
                aug_chain: Vec::new(),
            });
        }
    }
    let status = if images.is_empty() {
        FilterStatus::Empty
    } else {
        FilterStatus::Selected
    };
    Ok(FilterOutput { images, status })
}

// ---------------------------------------------------------------------------
// Augmentation

/// One applied transform with the parameters that were drawn for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugmentationOp {
    /// M1
    HFlip,
    /// M2
    VFlip,
    /// M3, degrees counter-clockwise in `[-90, 90]`.
    Rotate { angle: f64 },
    /// C1: `Σ αᵢ λᵢ pᵢ` added to every pixel, on a 0–1 channel scale.
    PcaColor { alphas: [f64; 3], shift: [f64; 3] },
    /// C2: hue shift in turns, saturation factor.
    HueSaturation {
        hue_shift: f64,
        saturation_scale: f64,
    },
    /// C3: brightness offset as a fraction of full scale, contrast factor
    /// about the image mean.
    Illumination { offset: f64, scale: f64 },
}

impl AugmentationOp {
    pub fn is_positional(&self) -> bool {
        matches!(self, Self::HFlip | Self::VFlip | Self::Rotate { .. })
    }

    pub fn apply(&self, img: &RgbImage) -> RgbImage {
        match *self {
            Self::HFlip => image::imageops::flip_horizontal(img),
            Self::VFlip => image::imageops::flip_vertical(img),
            Self::Rotate { angle } => rotate(img, angle),
            Self::PcaColor { shift, .. } => {
                map_pixels(img, |p| [0, 1, 2].map(|c| p[c] as f64 + 255.0 * shift[c]))
            }
            Self::HueSaturation {
                hue_shift,
                saturation_scale,
            } => map_pixels(img, |p| {
                let (h, s, v) = rgb_to_hsv(p.map(|c| c as f64 / 255.0));
                let h = (h + hue_shift).rem_euclid(1.0);
                let s = (s * saturation_scale).clamp(0.0, 1.0);
                hsv_to_rgb(h, s, v).map(|c| c * 255.0)
            }),
            Self::Illumination { offset, scale } => {
                let mean = img.as_raw().iter().map(|&c| c as f64).sum::<f64>()
                    / img.as_raw().len().max(1) as f64;
                map_pixels(img, |p| {
                    p.map(|c| (c as f64 - mean) * scale + mean + 255.0 * offset)
                })
            }
        }
    }
}

fn to_u8(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn map_pixels(img: &RgbImage, f: impl Fn([u8; 3]) -> [f64; 3]) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        p.0 = f(p.0).map(to_u8);
    }
    out
}

/// Bilinear rotation about the image centre on the original canvas. Samples
/// falling outside the source take the mean colour of the border pixels.
fn rotate(img: &RgbImage, angle_deg: f64) -> RgbImage {
    let (w, h) = img.dimensions();
    let fill = border_mean(img);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (wmax, hmax) = (w as f64 - 1.0, h as f64 - 1.0);
    RgbImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        // inverse map of a counter-clockwise rotation in image coordinates
        let sx = cos * dx - sin * dy + cx;
        let sy = sin * dx + cos * dy + cy;
        if !(sx >= 0.0 && sx <= wmax && sy >= 0.0 && sy <= hmax) {
            return Rgb(fill.map(to_u8));
        }
        let (x0, y0) = (sx.floor() as u32, sy.floor() as u32);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
        let px = |xx, yy| img.get_pixel(xx, yy).0.map(|c| c as f64);
        let (a, b, c, d) = (px(x0, y0), px(x1, y0), px(x0, y1), px(x1, y1));
        Rgb([0, 1, 2].map(|k| {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bottom = c[k] + (d[k] - c[k]) * fx;
            to_u8(top + (bottom - top) * fy)
        }))
    })
}

fn border_mean(img: &RgbImage) -> [f64; 3] {
    let (w, h) = img.dimensions();
    let mut sum = [0.0; 3];
    let mut n = 0.0;
    for (x, y, p) in img.enumerate_pixels() {
        if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
            for c in 0..3 {
                sum[c] += p[c] as f64;
            }
            n += 1.0;
        }
    }
    if n == 0.0 {
        sum
    } else {
        sum.map(|s| s / n)
    }
}

fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h * 6.0).rem_euclid(6.0);
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

/// Principal axes of the RGB distribution on a 0–1 channel scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    /// Descending.
    pub eigenvalues: [f64; 3],
    /// `eigenvectors[i]` belongs to `eigenvalues[i]`.
    pub eigenvectors: [[f64; 3]; 3],
}

impl PcaBasis {
    pub fn from_pixels<'a>(pixels: impl IntoIterator<Item = &'a [u8; 3]>) -> Self {
        // exact integer moments, so a constant image has exactly zero covariance
        let mut n: i128 = 0;
        let mut sum = [0i128; 3];
        let mut outer = [[0i128; 3]; 3];
        for p in pixels {
            n += 1;
            for i in 0..3 {
                sum[i] += p[i] as i128;
                for j in 0..3 {
                    outer[i][j] += p[i] as i128 * p[j] as i128;
                }
            }
        }
        let cov = if n < 2 {
            Matrix3::zeros()
        } else {
            let scale = (n * n) as f64 * 255.0 * 255.0;
            Matrix3::from_fn(|i, j| (n * outer[i][j] - sum[i] * sum[j]) as f64 / scale)
        };
        Self::from_covariance(cov)
    }

    fn from_covariance(cov: Matrix3<f64>) -> Self {
        let eig = SymmetricEigen::new(cov);
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        // tiny negative round-off on rank-deficient covariances
        let floor = 1e-12 * cov.abs().max();
        let eigenvalues = idx.map(|i| {
            let l = eig.eigenvalues[i];
            if l <= floor {
                0.0
            } else {
                l
            }
        });
        let eigenvectors = idx.map(|i| {
            let v = eig.eigenvectors.column(i);
            [v[0], v[1], v[2]]
        });
        Self {
            eigenvalues,
            eigenvectors,
        }
    }

    /// Covariance rebuilt as `Σ λᵢ pᵢ pᵢᵀ`.
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        let mut c = [[0.0; 3]; 3];
        for (l, p) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            for i in 0..3 {
                for j in 0..3 {
                    c[i][j] += l * p[i] * p[j];
                }
            }
        }
        c
    }

    pub fn shift(&self, alphas: [f64; 3]) -> [f64; 3] {
        let mut s = [0.0; 3];
        for k in 0..3 {
            for c in 0..3 {
                s[c] += alphas[k] * self.eigenvalues[k] * self.eigenvectors[k][c];
            }
        }
        s
    }
}

/// Basis over a sample of images, using every `stride`-th pixel.
pub fn pca_color_basis(images: &[LabeledImage], stride: usize) -> PcaBasis {
    let stride = stride.max(1);
    let mut buf = Vec::new();
    for img in images {
        buf.extend(img.pixels.pixels().step_by(stride).map(|p| p.0));
    }
    PcaBasis::from_pixels(buf.iter())
}

/// Which transforms may be drawn and their magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub positional: bool,
    pub color: bool,
    /// Output images per input image, original included.
    pub multiplier: usize,
    pub max_rotation: f64,
    pub pca_sigma: f64,
    pub max_hue_shift: f64,
    pub saturation_range: (f64, f64),
    pub max_offset: f64,
    pub contrast_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            positional: true,
            color: false,
            multiplier: 8,
            max_rotation: 90.0,
            pca_sigma: 0.1,
            max_hue_shift: 0.05,
            saturation_range: (0.8, 1.2),
            max_offset: 0.1,
            contrast_range: (0.8, 1.2),
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            positional: false,
            color: false,
            ..Self::default()
        }
    }

    pub fn positional() -> Self {
        Self {
            positional: true,
            color: false,
            ..Self::default()
        }
    }

    pub fn color() -> Self {
        Self {
            positional: false,
            color: true,
            ..Self::default()
        }
    }

    /// Parses `none`, `positional`, `color` or `positional+color`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(Self::none()),
            "positional" => Ok(Self::positional()),
            "color" => Ok(Self::color()),
            "positional+color" | "all" => Ok(Self {
                positional: true,
                color: true,
                ..Self::default()
            }),
            _ => Err(Error::InvalidParameter(format!(
                "unknown augmentation {name:?}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.positional, self.color) {
            (false, false) => "none",
            (true, false) => "positional",
            (false, true) => "color",
            (true, true) => "positional+color",
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.positional || self.color
    }

    pub fn validate(&self) -> Result<()> {
        if self.multiplier < 1 {
            return Err(Error::InvalidParameter(
                "augmentation multiplier must be >= 1".into(),
            ));
        }
        if !(0.0..=90.0).contains(&self.max_rotation) {
            return Err(Error::InvalidParameter(
                "rotation bound must lie in [0, 90]".into(),
            ));
        }
        let (s0, s1) = self.saturation_range;
        let (c0, c1) = self.contrast_range;
        if !(self.pca_sigma >= 0.0 && self.max_hue_shift >= 0.0 && self.max_offset >= 0.0)
            || !(0.0 <= s0 && s0 <= s1 && 0.0 <= c0 && c0 <= c1)
        {
            return Err(Error::InvalidParameter(
                "invalid color augmentation bounds".into(),
            ));
        }
        Ok(())
    }

    fn draw_positional(&self, rng: &mut impl Rng) -> AugmentationOp {
        match rng.random_range(0..3) {
            0 => AugmentationOp::HFlip,
            1 => AugmentationOp::VFlip,
            _ => AugmentationOp::Rotate {
                angle: symmetric(rng, self.max_rotation),
            },
        }
    }

    fn draw_color(&self, rng: &mut impl Rng, basis: &PcaBasis) -> AugmentationOp {
        match rng.random_range(0..3) {
            0 => {
                let alphas = if self.pca_sigma > 0.0 {
                    let n = Normal::new(0.0, self.pca_sigma).expect("sigma is positive");
                    [n.sample(rng), n.sample(rng), n.sample(rng)]
                } else {
                    [0.0; 3]
                };
                AugmentationOp::PcaColor {
                    alphas,
                    shift: basis.shift(alphas),
                }
            }
            1 => AugmentationOp::HueSaturation {
                hue_shift: symmetric(rng, self.max_hue_shift),
                saturation_scale: range(rng, self.saturation_range),
            },
            _ => AugmentationOp::Illumination {
                offset: symmetric(rng, self.max_offset),
                scale: range(rng, self.contrast_range),
            },
        }
    }

    /// Draws the transform chain for one augmented copy.
    pub fn draw_chain(&self, rng: &mut impl Rng, basis: &PcaBasis) -> Vec<AugmentationOp> {
        // kinds 0..3 positional, 3..6 colour, 6 positional then colour
        let mut kinds: Vec<u8> = Vec::new();
        if self.positional {
            kinds.extend([0, 1, 2]);
        }
        if self.color {
            kinds.extend([3, 4, 5]);
        }
        if self.positional && self.color {
            kinds.push(6);
        }
        if kinds.is_empty() {
            return Vec::new();
        }
        match kinds[rng.random_range(0..kinds.len())] {
            k @ 0..=2 => vec![self.positional_kind(k, rng)],
            k @ 3..=5 => vec![self.color_kind(k - 3, rng, basis)],
            _ => vec![self.draw_positional(rng), self.draw_color(rng, basis)],
        }
    }

    fn positional_kind(&self, k: u8, rng: &mut impl Rng) -> AugmentationOp {
        match k {
            0 => AugmentationOp::HFlip,
            1 => AugmentationOp::VFlip,
            _ => AugmentationOp::Rotate {
                angle: symmetric(rng, self.max_rotation),
            },
        }
    }

    fn color_kind(&self, k: u8, rng: &mut impl Rng, basis: &PcaBasis) -> AugmentationOp {
        // reuse the colour sampler with a fixed kind
        loop {
            let op = self.draw_color(rng, basis);
            let kind = match op {
                AugmentationOp::PcaColor { .. } => 0,
                AugmentationOp::HueSaturation { .. } => 1,
                _ => 2,
            };
            if kind == k {
                return op;
            }
        }
    }
}

fn symmetric(rng: &mut impl Rng, bound: f64) -> f64 {
    if bound > 0.0 {
        rng.random_range(-bound..=bound)
    } else {
        0.0
    }
}

fn range(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Seed of augmented copy `copy` of one source frame.
pub fn copy_seed(seed: u64, film_id: &str, frame: usize, copy: usize) -> u64 {
    seed::derive(&[seed, seed::hash_str(film_id), frame as u64, copy as u64])
}

/// Augmented copy `copy` (1-based; copy 0 is the original) of `img`.
pub fn augment_copy(
    img: &LabeledImage,
    cfg: &AugmentConfig,
    basis: &PcaBasis,
    seed: u64,
    copy: usize,
) -> LabeledImage {
    let mut rng = seed::rng(copy_seed(seed, &img.film_id, img.frame_index, copy));
    let chain = cfg.draw_chain(&mut rng, basis);
    let mut pixels = img.pixels.clone();
    for op in &chain {
        pixels = op.apply(&pixels);
    }
    let mut aug_chain = img.aug_chain.clone();
    aug_chain.extend(chain);
    LabeledImage {
        pixels,
        label: img.label,
        film_id: img.film_id.clone(),
        frame_index: img.frame_index,
        aug_chain,
    }
}

/// Each input image followed by `multiplier − 1` transformed copies. With
/// no transform kind enabled the input is returned unchanged.
pub fn augment(
    images: &[LabeledImage],
    cfg: &AugmentConfig,
    basis: &PcaBasis,
    seed: u64,
) -> Result<Vec<LabeledImage>> {
    cfg.validate()?;
    if !cfg.is_enabled() {
        return Ok(images.to_vec());
    }
    let mut out = Vec::with_capacity(images.len() * cfg.multiplier);
    for img in images {
        out.push(img.clone());
        for copy in 1..cfg.multiplier {
            out.push(augment_copy(img, cfg, basis, seed, copy));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Splits

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

/// Disjoint film-id sets, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub stratified: bool,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn ids(&self, which: SplitName) -> &[String] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn split_of(&self, id: &str) -> Option<SplitName> {
        SplitName::ALL
            .into_iter()
            .find(|&s| self.ids(s).binary_search_by(|x| x.as_str().cmp(id)).is_ok())
    }
}

/// Largest-remainder apportionment of `n` items; ties go to the earlier
/// share.
pub fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * n as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Stratified film-level split: each class is shuffled with its own seeded
/// stream and apportioned by largest remainder.
pub fn split_films(
    films: &[(String, QualityClass)],
    ratios: [f64; 3],
    seed: u64,
) -> Result<DatasetSplit> {
    if ratios.iter().any(|&r| !(r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split ratios must be non-negative and sum to 1, got {ratios:?}"
        )));
    }
    let mut split = DatasetSplit {
        train: vec![],
        val: vec![],
        test: vec![],
        stratified: true,
        seed,
    };
    for class in QualityClass::ALL {
        let mut ids: Vec<&String> = films
            .iter()
            .filter(|(_, c)| *c == class)
            .map(|(id, _)| id)
            .collect();
        ids.sort();
        ids.dedup();
        let mut rng = seed::rng(seed::derive(&[seed, class.index() as u64]));
        ids.shuffle(&mut rng);
        let counts = apportion(ids.len(), ratios);
        for (k, which) in SplitName::ALL.into_iter().enumerate() {
            if ids.len() >= 3 && ratios[k] > 0.0 && counts[k] == 0 {
                return Err(Error::Stratification {
                    class: class.name(),
                    total: ids.len(),
                    split: which.name(),
                });
            }
        }
        let mut it = ids.into_iter().cloned();
        split.train.extend(it.by_ref().take(counts[0]));
        split.val.extend(it.by_ref().take(counts[1]));
        split.test.extend(it);
    }
    split.train.sort();
    split.val.sort();
    split.test.sort();
    Ok(split)
}
