#![allow(dead_code)]

use weldscan::thermal::MaterialParams;

/// Surface temperature rise of a sheet of thickness `thickness` after an
/// instantaneous surface deposit of `q` J/m², from an explicit
/// finite-volume scheme on a vertex grid.
///
/// The sheet sits on a backing layer with the same diffusivity whose
/// effusivity makes the back face reflect a fraction `R` of the thermal
/// wave; the backing is long enough that its own insulated far end is
/// never reached. `R = 0` gives a homogeneous semi-infinite body.
///
/// Returns the rise at every multiple of `sample_dt` up to `t_end`.
pub fn fd_surface_rise(
    q: f64,
    thickness: f64,
    mat: &MaterialParams,
    nodes: usize,
    sample_dt: f64,
    t_end: f64,
) -> Vec<(f64, f64)> {
    let alpha = mat.diffusivity;
    let rho_c1 = mat.density * mat.specific_heat;
    let k1 = alpha * rho_c1;
    let gamma = (1.0 - mat.reflectivity) / (1.0 + mat.reflectivity);
    let (rho_c2, k2) = (gamma * rho_c1, gamma * k1);

    let backing = 5.0 * (alpha * t_end).sqrt();
    // whole number of cells in the sheet
    let dx_target = (thickness + backing) / (nodes - 1) as f64;
    let sheet_cells = (thickness / dx_target).ceil() as usize;
    let dx = thickness / sheet_cells as f64;
    let cells = (((thickness + backing) / dx).ceil() as usize).max(nodes - 1);
    let nodes = cells + 1;

    // cell j spans nodes j..j+1
    let cond: Vec<f64> = (0..cells)
        .map(|j| if j < sheet_cells { k1 / dx } else { k2 / dx })
        .collect();
    let cell_cap: Vec<f64> = (0..cells)
        .map(|j| {
            if j < sheet_cells {
                rho_c1 * dx
            } else {
                rho_c2 * dx
            }
        })
        .collect();
    let cap: Vec<f64> = (0..nodes)
        .map(|i| {
            let left = if i > 0 { cell_cap[i - 1] / 2.0 } else { 0.0 };
            let right = if i < cells { cell_cap[i] / 2.0 } else { 0.0 };
            left + right
        })
        .collect();
    let dt_max = (0..nodes)
        .map(|i| {
            let g = if i > 0 { cond[i - 1] } else { 0.0 } + if i < cells { cond[i] } else { 0.0 };
            cap[i] / g
        })
        .fold(f64::INFINITY, f64::min);
    let substeps = (sample_dt / (0.45 * dt_max)).ceil() as usize;
    let dt = sample_dt / substeps as f64;

    let mut theta = vec![0.0; nodes];
    theta[0] = q / cap[0];
    let mut flow = vec![0.0; cells];
    let mut out = Vec::new();
    let samples = (t_end / sample_dt).round() as usize;
    for s in 1..=samples {
        for _ in 0..substeps {
            for j in 0..cells {
                flow[j] = cond[j] * (theta[j] - theta[j + 1]);
            }
            theta[0] -= dt * flow[0] / cap[0];
            for i in 1..cells {
                theta[i] += dt * (flow[i - 1] - flow[i]) / cap[i];
            }
            theta[cells] += dt * flow[cells - 1] / cap[cells];
        }
        out.push((s as f64 * sample_dt, theta[0]));
    }
    out
}
