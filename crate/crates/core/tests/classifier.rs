use rand::Rng;
use weldscan::classifier::{
    aggregate_probabilities, fit, grad_check, gradient_pairs, relative_error, softmax, CnnModel,
    Layer, Sample, TrainConfig, Variant, INPUT_LEN,
};
use weldscan::{seed, QualityClass};

fn noise_batch(n: usize, seed_value: u64) -> Vec<(Vec<f64>, QualityClass)> {
    let mut rng = seed::rng(seed_value);
    (0..n)
        .map(|i| {
            let x = (0..INPUT_LEN).map(|_| rng.random::<f64>()).collect();
            (x, QualityClass::ALL[i % 3])
        })
        .collect()
}

fn samples(n: usize, seed_value: u64) -> Vec<Sample> {
    noise_batch(n, seed_value)
        .into_iter()
        .map(|(x, label)| Sample {
            input: x.into_iter().map(|v| v as f32).collect(),
            label,
        })
        .collect()
}

fn model(seed_value: u64) -> CnnModel<f64> {
    CnnModel::<f64>::new(Variant::Small, &mut seed::rng(seed_value))
}

#[test]
fn grad_check_at_random_init() {
    let r = grad_check(&model(1), &noise_batch(3, 2), 1e-5, 100, 5).unwrap();
    assert_eq!(r.checked, 100);
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

#[test]
fn linear_map_gradients_are_exact() {
    // with ReLUs bypassed the logits are linear in every dense-layer
    // parameter; conv weights also move max-pool winners, so they are left out
    let mut m = model(1);
    m.bypass_relu = true;
    let c = [1.0, -2.0, 0.5];
    let dense: Vec<usize> = m
        .layers()
        .iter()
        .filter_map(|l| match *l {
            Layer::Dense { w, b, nout, .. } => Some(w..b + nout),
            _ => None,
        })
        .flatten()
        .collect();
    let mut rng = seed::rng(6);
    for (x, _) in noise_batch(2, 2) {
        let f = |m: &CnnModel<f64>| -> f64 {
            let l = m.logits(&x).unwrap();
            (0..3).map(|k| c[k] * l[k]).sum()
        };
        let mut g = vec![0.0; m.param_count()];
        m.backward(&m.trace(&x).unwrap(), &c, &mut g);
        let mut probe = m.clone();
        for _ in 0..100 {
            let i = dense[rng.random_range(0..dense.len())];
            let eps = 1e-3;
            probe.params[i] += eps;
            let up = f(&probe);
            probe.params[i] -= 2.0 * eps;
            let down = f(&probe);
            probe.params[i] = m.params[i];
            let n = (up - down) / (2.0 * eps);
            assert!(relative_error(g[i], n) < 1e-8, "param {i}: {} vs {n}", g[i]);
        }
    }
}

#[test]
fn smooth_parameter_converges_as_epsilon_shrinks() {
    // output biases sit after the last ReLU, so the loss is smooth in them
    let m = model(8);
    let batch = noise_batch(3, 9);
    let idx = [m.param_count() - 3];
    let err = |eps| {
        let (a, n) = gradient_pairs(&m, &batch, eps, &idx).unwrap()[0];
        relative_error(a, n)
    };
    let (e3, e4, e5) = (err(1e-3), err(1e-4), err(1e-5));
    assert!(e4 < e3 && e5 < e4, "{e3:e} {e4:e} {e5:e}");
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = samples(6, 3);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 3,
        ..TrainConfig::default()
    };
    let out = fit(&data, &[], &cfg).unwrap();
    let init = CnnModel::<f32>::new(cfg.variant, &mut seed::rng(cfg.seed));
    assert_eq!(out.model.params, init.params);
    let l0 = out.history[0].loss;
    assert!(out.history.iter().all(|h| h.loss == l0));
}

#[test]
fn same_seed_same_history() {
    let data = samples(9, 4);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 12,
        ..TrainConfig::default()
    };
    let a = fit(&data, &data, &cfg).unwrap();
    let b = fit(&data, &data, &cfg).unwrap();
    assert_eq!(a.model.params, b.model.params);
    let key = |h: &[weldscan::classifier::EpochStats]| {
        h.iter()
            .map(|e| (e.loss.to_bits(), e.train_acc.to_bits(), e.val_acc.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(key(&a.history), key(&b.history));
}

#[test]
fn overfits_ten_images() {
    let data = samples(10, 5);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 200,
        ..TrainConfig::default()
    };
    let out = fit(&data, &[], &cfg).unwrap();
    let acc = weldscan::classifier::accuracy(&out.model, &data).unwrap();
    assert_eq!(acc, 1.0, "final loss {}", out.history.last().unwrap().loss);
}

#[test]
fn zeroed_output_layer_is_uniform() {
    let mut m = model(2);
    m.zero_output_layer();
    for (x, _) in noise_batch(3, 1) {
        let p = softmax(&m.logits(&x).unwrap());
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }
}

#[test]
fn duplicated_inputs_give_identical_rows() {
    let m = model(3);
    let (x, _) = noise_batch(1, 7).pop().unwrap();
    let rows = m.forward(&[x.clone(), x]).unwrap();
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn film_aggregation_examples() {
    let (c, conf, _) = aggregate_probabilities(&[[1.0, 0.0, 0.0]; 4]).unwrap();
    assert_eq!((c, conf), (QualityClass::Good, 1.0));
    let (c, _, mean) = aggregate_probabilities(&[[0.6, 0.3, 0.1], [0.2, 0.5, 0.3]]).unwrap();
    assert_eq!(c, QualityClass::Good);
    assert!((mean[0] - 0.4).abs() < 1e-12 && (mean[1] - 0.4).abs() < 1e-12);
    assert!(aggregate_probabilities(&[]).is_err());
}
