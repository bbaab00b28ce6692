use serde::{Deserialize, Serialize};

use crate::{Error, QualityClass, Result};

/// Thermal properties of the sheet material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialParams {
    /// kg/m³
    pub density: f64,
    /// J/(kg·K)
    pub specific_heat: f64,
    /// m²/s
    pub diffusivity: f64,
    /// Fraction of the thermal wave reflected at the back face, in `[0, 1)`.
    pub reflectivity: f64,
    /// Relative truncation tolerance of the reflection series.
    pub series_tol: f64,
    /// Ambient temperature in kelvin.
    pub ambient: f64,
    /// Time constant (s) of the volumetric heat loss applied when rendering
    /// films. `f64::INFINITY` disables it. The point solutions
    /// [`impulse_temperature`](super::impulse_temperature) and
    /// [`pulse_temperature`](super::pulse_temperature) are lossless.
    pub loss_time: f64,
}

impl Default for MaterialParams {
    /// Mild-steel-like sheet.
    fn default() -> Self {
        Self {
            density: 7850.0,
            specific_heat: 490.0,
            diffusivity: 1.2e-5,
            reflectivity: 0.9,
            series_tol: 1e-9,
            ambient: 293.15,
            loss_time: 1.2,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("density", self.density),
            ("specific_heat", self.specific_heat),
            ("diffusivity", self.diffusivity),
            ("series_tol", self.series_tol),
            ("ambient", self.ambient),
            ("loss_time", self.loss_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.reflectivity) {
            return Err(Error::InvalidParameter(format!(
                "reflectivity must lie in [0, 1), got {}",
                self.reflectivity
            )));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in continuous pixel coordinates. Pixel `(i, j)`
/// covers `[i, i+1) × [j, j+1)` and has its centre at `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PixelRect {
    /// Distance (in pixels) from `(x, y)` to the rectangle along each axis;
    /// zero inside.
    pub fn outside_offset(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = if x < self.x0 {
            self.x0 - x
        } else if x > self.x1 {
            x - self.x1
        } else {
            0.0
        };
        let dy = if y < self.y0 {
            self.y0 - y
        } else if y > self.y1 {
            y - self.y1
        } else {
            0.0
        };
        (dx, dy)
    }
}

/// Laser heating: total absorbed energy spread over the illuminated area,
/// switched on at `on_frame` and off at `off_frame` (1-based frame numbers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaserPulse {
    /// J
    pub absorbed_energy: f64,
    /// m²
    pub area: f64,
    pub on_frame: usize,
    pub off_frame: usize,
    /// Hz; sets the sub-impulse spacing.
    pub frame_rate: f64,
    pub illum_rect: PixelRect,
}

impl Default for LaserPulse {
    fn default() -> Self {
        Self::centered_square(395.0, 19e-3, 133e-6, 131, 146, 20, 60, 40.0)
    }
}

impl LaserPulse {
    /// A square spot of side `side` metres centred on a `width × height`
    /// image with the given pixel pitch.
    #[allow(clippy::too_many_arguments)]
    pub fn centered_square(
        energy: f64,
        side: f64,
        pixel_pitch: f64,
        width: usize,
        height: usize,
        on_frame: usize,
        off_frame: usize,
        frame_rate: f64,
    ) -> Self {
        let half = side / pixel_pitch / 2.0;
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        Self {
            absorbed_energy: energy,
            area: side * side,
            on_frame,
            off_frame,
            frame_rate,
            illum_rect: PixelRect {
                x0: cx - half,
                y0: cy - half,
                x1: cx + half,
                y1: cy + half,
            },
        }
    }

    pub fn sub_impulses(&self) -> usize {
        self.off_frame - self.on_frame
    }

    /// Film time of the first sub-impulse.
    pub fn onset_time(&self) -> f64 {
        (self.on_frame - 1) as f64 / self.frame_rate
    }

    pub fn sub_impulse_time(&self, k: usize) -> f64 {
        (self.on_frame + k - 1) as f64 / self.frame_rate
    }

    /// Lateral offset in metres of pixel `(i, j)` from the illuminated area.
    pub fn lateral_offset(&self, i: usize, j: usize, pixel_pitch: f64) -> (f64, f64) {
        let (dx, dy) = self
            .illum_rect
            .outside_offset(i as f64 + 0.5, j as f64 + 0.5);
        (dx * pixel_pitch, dy * pixel_pitch)
    }

    pub fn validate(&self, n_frames: usize) -> Result<()> {
        if !(self.absorbed_energy >= 0.0) || !(self.area > 0.0) {
            return Err(Error::InvalidParameter(
                "pulse energy must be non-negative and area positive".into(),
            ));
        }
        if !(self.on_frame >= 1 && self.on_frame < self.off_frame && self.off_frame < n_frames) {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= on_frame < off_frame < n_frames, got {} / {} / {}",
                self.on_frame, self.off_frame, n_frames
            )));
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::InvalidParameter(
                "frame rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Geometry and ground truth of one welded specimen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecimenSpec {
    /// Thickness of the illuminated sheet (m).
    pub sheet_thickness: f64,
    /// Thickness of both sheets together (m), seen through a fused nugget.
    pub stack_thickness: f64,
    /// m
    pub nugget_diameter: f64,
    /// Nugget centre in continuous pixel coordinates.
    pub nugget_center: (f64, f64),
    /// Thermal contact through the nugget in `[0, 1]`; the effective
    /// thickness over the nugget is `sheet + contact · (stack - sheet)`.
    pub contact_quality: f64,
    pub quality: QualityClass,
    pub specimen_id: String,
}

impl SpecimenSpec {
    pub fn effective_nugget_thickness(&self) -> f64 {
        self.sheet_thickness + self.contact_quality * (self.stack_thickness - self.sheet_thickness)
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.sheet_thickness > 0.0 && self.sheet_thickness < self.stack_thickness) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < sheet thickness < stack thickness, got {} / {}",
                self.sheet_thickness, self.stack_thickness
            )));
        }
        if !(self.nugget_diameter >= 0.0) {
            return Err(Error::InvalidParameter(
                "nugget diameter must be >= 0".into(),
            ));
        }
        let (cx, cy) = self.nugget_center;
        if !(cx >= 0.0 && cx <= width as f64 && cy >= 0.0 && cy <= height as f64) {
            return Err(Error::InvalidParameter(format!(
                "nugget centre ({cx}, {cy}) outside the {width}x{height} image"
            )));
        }
        if !(0.0..=1.0).contains(&self.contact_quality) {
            return Err(Error::InvalidParameter(
                "contact quality must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Camera model and per-pixel radiometric disturbances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub frame_rate: f64,
    /// m per pixel
    pub pixel_pitch: f64,
    /// Row-major `height × width`, each in `(0, 1]`.
    pub emissivity: Vec<f64>,
    /// Row-major `height × width` additive ambient/path radiation, in digits.
    pub env_flux_digits: Vec<f64>,
    /// Standard deviation of additive detector noise, in digits.
    pub noise_sigma: f64,
    /// Digits per W/m² of emitted flux.
    pub gain: f64,
    pub adc_max: u16,
    /// Gaussian smoothing of the emitted flux, in pixels.
    pub blur_sigma: f64,
    pub rng_seed: u64,
}

impl RenderParams {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.n_frames == 0 {
            return Err(Error::InvalidParameter(
                "image dimensions must be positive".into(),
            ));
        }
        if !(self.frame_rate > 0.0 && self.pixel_pitch > 0.0) {
            return Err(Error::InvalidParameter(
                "frame rate and pixel pitch must be positive".into(),
            ));
        }
        let n = self.pixel_count();
        if self.emissivity.len() != n || self.env_flux_digits.len() != n {
            return Err(Error::Shape {
                expected: format!("{n} per-pixel values"),
                actual: format!(
                    "{} emissivities, {} offsets",
                    self.emissivity.len(),
                    self.env_flux_digits.len()
                ),
            });
        }
        if let Some(e) = self.emissivity.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "emissivity {e} outside (0, 1]"
            )));
        }
        let adc = self.adc_max as f64;
        if let Some(o) = self
            .env_flux_digits
            .iter()
            .find(|&&o| !(o >= 0.0 && o < adc))
        {
            return Err(Error::InvalidParameter(format!(
                "environment offset {o} outside [0, adc_max)"
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.blur_sigma >= 0.0 && self.gain >= 0.0) {
            return Err(Error::InvalidParameter(
                "noise, blur and gain must be non-negative".into(),
            ));
        }
        Ok(())
    }
}
