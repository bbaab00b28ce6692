use crate::thermal::params::{LaserPulse, MaterialParams};
use crate::{Error, Result};

pub const STEFAN_BOLTZMANN: f64 = 5.670_374_419e-8;

/// `1 + 2 Σ_{n≥1} Rⁿ exp(-(nL)²/(αt))`, the back-face reflection sum.
///
/// Terms shrink by at least a factor `R` each, so the tail after term `n` is
/// bounded by `termₙ / (1 - R)`. Summation stops once that bound drops below
/// `series_tol` relative to the partial sum.
pub fn reflection_series(t: f64, thickness: f64, mat: &MaterialParams) -> f64 {
    let r = mat.reflectivity;
    if r == 0.0 {
        return 1.0;
    }
    let decay = thickness * thickness / (mat.diffusivity * t);
    let tail_ratio = r / (1.0 - r);
    let mut sum = 1.0;
    let mut rn = 1.0;
    for n in 1..=1_000_000u32 {
        rn *= r;
        let nf = n as f64;
        let term = 2.0 * rn * (-(nf * nf) * decay).exp();
        sum += term;
        // every later term is at most R times the previous one
        if term * tail_ratio < mat.series_tol * sum {
            break;
        }
    }
    sum
}

/// In-plane decay `exp(-(x² + y²)/(4αt))` for a point at lateral offset
/// `(x, y)` metres from the illuminated region.
pub fn lateral_factor(x: f64, y: f64, t: f64, diffusivity: f64) -> f64 {
    if x == 0.0 && y == 0.0 {
        return 1.0;
    }
    (-(x * x + y * y) / (4.0 * diffusivity * t)).exp()
}

fn impulse_rise(
    energy_density: f64,
    x: f64,
    y: f64,
    t: f64,
    thickness: f64,
    mat: &MaterialParams,
) -> f64 {
    let volumetric = mat.density * mat.specific_heat;
    energy_density / (volumetric * (std::f64::consts::PI * mat.diffusivity * t).sqrt())
        * lateral_factor(x, y, t, mat.diffusivity)
        * reflection_series(t, thickness, mat)
}

fn check_domain(t: f64, thickness: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    if !(thickness > 0.0) {
        return Err(Error::Domain(format!(
            "thickness must be positive, got {thickness}"
        )));
    }
    Ok(())
}

/// Surface temperature `t` seconds after an instantaneous pulse delivering
/// `pulse.absorbed_energy` over `pulse.area`.
///
/// `(x_rel, y_rel)` is the lateral offset in metres from the illuminated
/// rectangle; points inside it use `(0, 0)`.
pub fn impulse_temperature(
    x_rel: f64,
    y_rel: f64,
    t: f64,
    thickness: f64,
    mat: &MaterialParams,
    pulse: &LaserPulse,
) -> Result<f64> {
    check_domain(t, thickness)?;
    let q = pulse.absorbed_energy / pulse.area;
    Ok(mat.ambient + impulse_rise(q, x_rel, y_rel, t, thickness, mat))
}

/// Surface temperature at film time `t` (frame 1 at `t = 0`) under the
/// finite laser pulse, as a sum of equal sub-impulses fired at the start of
/// each frame interval between `on_frame` and `off_frame`.
pub fn pulse_temperature(
    x_rel: f64,
    y_rel: f64,
    t: f64,
    thickness: f64,
    mat: &MaterialParams,
    pulse: &LaserPulse,
) -> Result<f64> {
    let start = pulse.onset_time();
    if !(t > start) {
        return Err(Error::Domain(format!(
            "time {t} s is not after the pulse onset at {start} s"
        )));
    }
    check_domain(t, thickness)?;
    let n_sub = pulse.sub_impulses();
    let q = pulse.absorbed_energy / pulse.area / n_sub as f64;
    // a sub-impulse firing at `t` up to rounding has not contributed yet
    let min_elapsed = 1e-9 / pulse.frame_rate;
    let mut rise = 0.0;
    for k in 0..n_sub {
        let elapsed = t - pulse.sub_impulse_time(k);
        if elapsed > min_elapsed {
            rise += impulse_rise(q, x_rel, y_rel, elapsed, thickness, mat);
        }
    }
    Ok(mat.ambient + rise)
}

/// Temperature rise per frame for one pixel class, with elapsed times taken
/// as exact integer frame differences and an optional volumetric loss
/// `exp(-elapsed / loss_time)` applied to every sub-impulse.
pub(crate) fn frame_rise_series(
    x_rel: f64,
    y_rel: f64,
    thickness: f64,
    mat: &MaterialParams,
    pulse: &LaserPulse,
    n_frames: usize,
) -> Vec<f64> {
    let n_sub = pulse.sub_impulses();
    let q = pulse.absorbed_energy / pulse.area / n_sub as f64;
    let dt = 1.0 / pulse.frame_rate;
    // response to one sub-impulse after m frames
    let kernel: Vec<f64> = (0..n_frames)
        .map(|m| {
            if m == 0 {
                return 0.0;
            }
            let elapsed = m as f64 * dt;
            let loss = if mat.loss_time.is_finite() {
                (-elapsed / mat.loss_time).exp()
            } else {
                1.0
            };
            impulse_rise(q, x_rel, y_rel, elapsed, thickness, mat) * loss
        })
        .collect();
    (1..=n_frames)
        .map(|frame| {
            (pulse.on_frame..pulse.off_frame)
                .filter(|&k| k < frame)
                .map(|k| kernel[frame - k])
                .sum()
        })
        .collect()
}
