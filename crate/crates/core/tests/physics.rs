mod common;

use std::f64::consts::PI;

use weldscan::preprocess::mean_intensity_curve;
use weldscan::thermal::*;
use weldscan::QualityClass;

fn small_render(width: usize, height: usize) -> RenderParams {
    let cfg = SimulationConfig::default();
    let n = width * height;
    RenderParams {
        width,
        height,
        n_frames: 120,
        frame_rate: 40.0,
        pixel_pitch: 133e-6,
        emissivity: (0..n).map(|p| 0.6 + 0.3 * (p % 7) as f64 / 6.0).collect(),
        env_flux_digits: vec![4600.0; n],
        noise_sigma: 0.0,
        gain: cfg.gain,
        adc_max: 16383,
        blur_sigma: 0.0,
        rng_seed: 1,
    }
}

fn spec(diameter_px: f64, contact: f64, quality: QualityClass) -> SpecimenSpec {
    SpecimenSpec {
        sheet_thickness: 1e-3,
        stack_thickness: 2e-3,
        nugget_diameter: diameter_px * 133e-6,
        nugget_center: (12.0, 10.0),
        contact_quality: contact,
        quality,
        specimen_id: "probe".into(),
    }
}

/// Spot smaller than the image, so both lit and unlit pixels occur.
fn small_pulse(energy: f64, rp: &RenderParams) -> LaserPulse {
    LaserPulse::centered_square(
        energy,
        12.0 * rp.pixel_pitch,
        rp.pixel_pitch,
        rp.width,
        rp.height,
        20,
        60,
        40.0,
    )
}

#[test]
fn zero_reflectivity_matches_semi_infinite_body() {
    let mat = MaterialParams {
        reflectivity: 0.0,
        ..MaterialParams::default()
    };
    let pulse = LaserPulse::default();
    let q = pulse.absorbed_energy / pulse.area;
    for &(t, l) in &[(0.01, 1e-3), (0.3, 2e-3), (4.0, 0.5e-3), (9.0, 1e-3)] {
        let expected =
            mat.ambient + q / (mat.density * mat.specific_heat * (PI * mat.diffusivity * t).sqrt());
        let got = impulse_temperature(0.0, 0.0, t, l, &mat, &pulse).unwrap();
        assert!(
            (got - expected).abs() <= 1e-12 * expected,
            "t={t}: {got} vs {expected}"
        );

        let (x, y) = (3e-4, -2e-4);
        let lateral = (-(x * x + y * y) / (4.0 * mat.diffusivity * t)).exp();
        let expected = mat.ambient + (expected - mat.ambient) * lateral;
        let got = impulse_temperature(x, y, t, l, &mat, &pulse).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
    }
}

#[test]
fn late_time_approaches_geometric_limit() {
    let mat = MaterialParams::default();
    let pulse = LaserPulse::default();
    let q = pulse.absorbed_energy / pulse.area;
    let t = 1e5;
    let envelope = q / (mat.density * mat.specific_heat * (PI * mat.diffusivity * t).sqrt());
    let rise = impulse_temperature(0.0, 0.0, t, 1e-3, &mat, &pulse).unwrap() - mat.ambient;
    let limit = 1.0 + 2.0 * 0.9 / (1.0 - 0.9);
    assert!(
        (rise / envelope - limit).abs() < 1e-3 * limit,
        "{}",
        rise / envelope
    );
}

#[test]
fn fd_oracle_reproduces_semi_infinite_body() {
    // checks the oracle itself against the closed form
    let mat = MaterialParams {
        reflectivity: 0.0,
        ..MaterialParams::default()
    };
    let q = 1e6;
    let rc = mat.density * mat.specific_heat;
    for (t, rise) in common::fd_surface_rise(q, 1e-3, &mat, 2000, 0.025, 3.0) {
        let exact = q / (rc * (PI * mat.diffusivity * t).sqrt());
        assert!(
            (rise - exact).abs() < 0.01 * exact,
            "t={t}: {rise} vs {exact}"
        );
    }
}

#[test]
fn doubling_energy_doubles_the_rise() {
    let rp = small_render(24, 20);
    let s = spec(8.0, 1.0, QualityClass::Good);
    let mat = MaterialParams::default();
    let a = temperature_field(&s, &mat, &small_pulse(200.0, &rp), &rp).unwrap();
    let b = temperature_field(&s, &mat, &small_pulse(400.0, &rp), &rp).unwrap();
    for (ta, tb) in a.iter().zip(&b) {
        let (ra, rb) = (ta - mat.ambient, tb - mat.ambient);
        assert!(
            (rb - 2.0 * ra).abs() <= 1e-9 * rb.abs().max(1e-300),
            "{ra} {rb}"
        );
    }
    assert!(a.iter().any(|&t| t > mat.ambient + 1.0));
}

#[test]
fn thin_sheet_stays_hotter_while_cooling() {
    let rp = small_render(24, 20);
    let mat = MaterialParams::default();
    let pulse = small_pulse(395.0, &rp);
    // no nugget: sheet everywhere; huge fused nugget: full stack everywhere
    let thin = temperature_field(&spec(0.0, 1.0, QualityClass::Bad), &mat, &pulse, &rp).unwrap();
    let thick =
        temperature_field(&spec(200.0, 1.0, QualityClass::Good), &mat, &pulse, &rp).unwrap();
    let npix = rp.width * rp.height;
    for f in pulse.off_frame..rp.n_frames {
        for p in 0..npix {
            let k = f * npix + p;
            assert!(thin[k] >= thick[k], "frame {} pixel {p}", f + 1);
        }
    }
    let k = 80 * npix + 10 * rp.width + 12;
    assert!(thin[k] > thick[k] + 1.0);
}

#[test]
fn looser_series_tolerance_is_within_tolerance() {
    let rp = small_render(24, 20);
    let pulse = small_pulse(395.0, &rp);
    let s = spec(10.0, 1.0, QualityClass::Good);
    let tight = MaterialParams {
        series_tol: 1e-10,
        ..MaterialParams::default()
    };
    let loose = MaterialParams {
        series_tol: 1e-9,
        ..MaterialParams::default()
    };
    let a = temperature_field(&s, &tight, &pulse, &rp).unwrap();
    let b = temperature_field(&s, &loose, &pulse, &rp).unwrap();
    for (ta, tb) in a.iter().zip(&b) {
        let rise = ta - tight.ambient;
        assert!((ta - tb).abs() <= loose.series_tol * rise.max(1e-12) + 1e-12);
    }
}

#[test]
fn zero_energy_gives_flat_frames() {
    let mut rp = small_render(24, 20);
    let mat = MaterialParams::default();
    let pulse = small_pulse(0.0, &rp);
    let s = spec(8.0, 1.0, QualityClass::Good);
    let film = render_film(&s, &mat, &pulse, &rp).unwrap();
    let t4 = mat.ambient.powi(4);
    let expected: Vec<u16> = (0..rp.pixel_count())
        .map(|p| {
            (rp.gain * rp.emissivity[p] * STEFAN_BOLTZMANN * t4 + rp.env_flux_digits[p]).round()
                as u16
        })
        .collect();
    for f in film.frames() {
        assert_eq!(f, &expected[..]);
    }

    rp.noise_sigma = 4.0;
    let film = render_film(&s, &mat, &pulse, &rp).unwrap();
    let curve = mean_intensity_curve(&film);
    let mean = curve.values.iter().sum::<f64>() / curve.n_frames() as f64;
    // sigma of a frame mean is 4 / sqrt(480) ≈ 0.18
    assert!(curve.values.iter().all(|v| (v - mean).abs() < 1.0));
}

#[test]
fn rendering_is_deterministic_and_order_free() {
    let cfg = SimulationConfig {
        width: 40,
        height: 36,
        ..SimulationConfig::default()
    };
    let a = generate_dataset(&cfg, 4, 21).unwrap();
    let b = generate_dataset(&cfg, 4, 21).unwrap();
    assert_eq!(a, b);
    let plans = plan_dataset(&cfg, 4, 21).unwrap();
    assert_eq!(plans[3].render(&cfg).unwrap(), a[3]);
    assert_ne!(a[0].data, generate_dataset(&cfg, 1, 22).unwrap()[0].data);
}

#[test]
fn default_calibration_hits_digit_bands() {
    let cfg = SimulationConfig::default();
    for plan in plan_dataset(&cfg, 6, 0).unwrap() {
        let film = plan.render(&cfg).unwrap();
        let c = mean_intensity_curve(&film);
        assert!(c.values[..19].iter().all(|v| (v - 6000.0).abs() < 300.0));
        assert!(c.values[..25].iter().all(|v| (5000.0..=7000.0).contains(v)));
        let (peak_frame, peak) =
            c.values.iter().enumerate().fold(
                (0, f64::MIN),
                |a, (i, &v)| if v > a.1 { (i + 1, v) } else { a },
            );
        assert!((51..=60).contains(&peak_frame), "{peak_frame}");
        assert!((12500.0..=14400.0).contains(&peak), "{peak}");
        assert_eq!(film.saturated, 0);
    }
}

#[test]
fn good_weld_shows_cold_spot_and_hot_rim() {
    let cfg = SimulationConfig {
        class_mix: ClassMix {
            good: 1.0,
            medium: 0.0,
            bad: 0.0,
        },
        ..SimulationConfig::default()
    };
    let plan = &plan_dataset(&cfg, 1, 4).unwrap()[0];
    let film = plan.render(&cfg).unwrap();
    let n = weldscan::preprocess::normalize_film(&film, (1, 10), 250, 8.0).unwrap();
    let r = plan.spec.nugget_diameter / 2.0 / cfg.pixel_pitch;
    let (cx, cy) = plan.spec.nugget_center;
    for f in 61..=100 {
        let (mut inside, mut ni, mut rim, mut nr) = (0.0, 0, 0.0, 0);
        for (p, &v) in n.frame(f).iter().enumerate() {
            let d = ((p % n.width) as f64 + 0.5 - cx).hypot((p / n.width) as f64 + 0.5 - cy);
            if !n.valid[p] {
                continue;
            }
            if d <= r {
                inside += v as f64;
                ni += 1;
            } else if d <= r + 15.0 {
                rim += v as f64;
                nr += 1;
            }
        }
        assert!(inside / (ni as f64) < rim / (nr as f64), "frame {f}");
    }
}

#[test]
fn degenerate_mix_and_empty_dataset() {
    let cfg = SimulationConfig {
        class_mix: ClassMix {
            good: 1.0,
            medium: 0.0,
            bad: 0.0,
        },
        ..SimulationConfig::default()
    };
    let plans = plan_dataset(&cfg, 10, 5).unwrap();
    assert!(plans.iter().all(|p| p.spec.quality == QualityClass::Good));
    assert!(generate_dataset(&cfg, 0, 5).unwrap().is_empty());
}

/// Smallest `k` with `P(X <= k) >= prob` for `X ~ Binomial(n, p)`.
fn binomial_quantile(n: u64, p: f64, prob: f64) -> u64 {
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut cdf = pmf;
    for k in 0..n {
        if cdf >= prob {
            return k;
        }
        pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
        cdf += pmf;
    }
    n
}

#[test]
fn default_mix_counts_lie_in_binomial_interval() {
    // (class, p, frozen 0.5% and 99.5% quantiles for n = 115)
    let bands = [
        (QualityClass::Good, 0.45, 38, 66),
        (QualityClass::Medium, 0.17, 10, 30),
        (QualityClass::Bad, 0.38, 31, 57),
    ];
    let cfg = SimulationConfig::default();
    let plans = plan_dataset(&cfg, 115, 0).unwrap();
    for (class, p, lo, hi) in bands {
        assert_eq!(binomial_quantile(115, p, 0.005), lo);
        assert_eq!(binomial_quantile(115, p, 0.995), hi);
        let count = plans.iter().filter(|f| f.spec.quality == class).count() as u64;
        assert!((lo..=hi).contains(&count), "{class:?}: {count}");
    }
}

#[test]
fn domain_errors() {
    let mat = MaterialParams::default();
    let pulse = LaserPulse::default();
    assert!(impulse_temperature(0.0, 0.0, 0.0, 1e-3, &mat, &pulse).is_err());
    assert!(impulse_temperature(0.0, 0.0, 1.0, -1e-3, &mat, &pulse).is_err());
    assert!(pulse_temperature(0.0, 0.0, pulse.onset_time(), 1e-3, &mat, &pulse).is_err());
}
