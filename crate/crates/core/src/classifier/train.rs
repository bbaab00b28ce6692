use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{softmax, CnnModel, Variant, INPUT_SIZE, N_CLASSES};
use super::scalar::Scalar;
use crate::dataprep::{select_frames, FilterSpec};
use crate::preprocess::NormalizedFilm;
use crate::{seed, Error, QualityClass, Result};

/// Resizes to the network input (bilinear) and scales channels to `[0, 1]`,
/// channel-major.
pub fn prepare_input(img: &RgbImage) -> Vec<f32> {
    let n = INPUT_SIZE as u32;
    let resized;
    let src = if img.dimensions() == (n, n) {
        img
    } else {
        resized = imageops::resize(img, n, n, FilterType::Triangle);
        &resized
    };
    let plane = INPUT_SIZE * INPUT_SIZE;
    let mut out = vec![0.0f32; 3 * plane];
    for (i, p) in src.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = p[c] as f32 / 255.0;
        }
    }
    out
}

/// A network input with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f32>,
    pub label: QualityClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Weight each sample's loss by the inverse frequency of its class.
    pub class_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            epochs: 10,
            seed: 0,
            variant: Variant::Small,
            class_weights: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean (weighted) cross-entropy over the epoch's training pass.
    pub loss: f64,
    /// Fraction of training samples classified correctly during the pass.
    pub train_acc: f64,
    /// Accuracy on the validation set after the epoch; NaN without one.
    pub val_acc: f64,
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,train_acc,val_acc\n");
    for h in history {
        s.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch, h.loss, h.train_acc, h.val_acc
        ));
    }
    s
}

pub struct TrainOutcome {
    pub model: CnnModel<f32>,
    pub history: Vec<EpochStats>,
}

fn class_weights(samples: &[Sample], enabled: bool) -> [f64; N_CLASSES] {
    let mut counts = [0usize; N_CLASSES];
    for s in samples {
        counts[s.label.index()] += 1;
    }
    if !enabled {
        return [1.0; N_CLASSES];
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    counts.map(|c| {
        if c == 0 {
            0.0
        } else {
            samples.len() as f64 / (present * c as f64)
        }
    })
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(model: &CnnModel<f32>, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0;
    for s in samples {
        let p = softmax(&model.logits(&s.input)?);
        if argmax(&p.map(|v| v as f64)) == s.label.index() {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Initializes a network from `cfg.seed` and trains it, shuffling from the
/// same random stream.
pub fn fit(train_set: &[Sample], val_set: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut rng = seed::rng(cfg.seed);
    let model = CnnModel::new(cfg.variant, &mut rng);
    train_with_rng(model, train_set, val_set, cfg, &mut rng)
}

/// Trains an existing network, shuffling with a stream derived from
/// `cfg.seed`.
pub fn train(
    model: CnnModel<f32>,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut rng = seed::rng(seed::derive(&[cfg.seed, 1]));
    train_with_rng(model, train_set, val_set, cfg, &mut rng)
}

/// Mini-batch SGD with momentum on the mean cross-entropy.
pub fn train_with_rng(
    mut model: CnnModel<f32>,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidParameter("training set is empty".into()));
    }
    for class in QualityClass::ALL {
        if !train_set.iter().any(|s| s.label == class) {
            return Err(Error::InvalidParameter(format!(
                "training set has no {class} samples"
            )));
        }
    }
    let weights = class_weights(train_set, cfg.class_weights);
    let lr = cfg.learning_rate as f32;
    let mu = cfg.momentum as f32;
    let mut velocity = vec![0.0f32; model.param_count()];
    let mut grad = vec![0.0f32; model.param_count()];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut losses = vec![0.0f64; train_set.len()];
    let mut correct = vec![false; train_set.len()];
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f32;
            for &i in batch {
                let s = &train_set[i];
                let trace = model.trace(&s.input)?;
                let p = softmax(trace.logits());
                let y = s.label.index();
                let w = weights[y];
                let loss = w * cross_entropy(trace.logits(), y);
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss in epoch {epoch}; the learning rate {} is probably too high",
                        cfg.learning_rate
                    )));
                }
                losses[i] = loss;
                correct[i] = argmax(&p.map(|v| v as f64)) == y;
                let mut d = p;
                d[y] -= 1.0;
                let dl: Vec<f32> = d.iter().map(|&v| v * w as f32 * scale).collect();
                model.backward(&trace, &dl, &mut grad);
            }
            for ((p, v), &g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = mu * *v - lr * g;
                *p += *v;
            }
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!(
                "parameters diverged in epoch {epoch}; lower the learning rate"
            )));
        }
        // summed in sample order so the value does not depend on the shuffle
        let loss = losses.iter().sum::<f64>() / train_set.len() as f64;
        let train_acc = correct.iter().filter(|&&c| c).count() as f64 / train_set.len() as f64;
        let val_acc = accuracy(&model, val_set)?;
        history.push(EpochStats {
            epoch,
            loss,
            train_acc,
            val_acc,
        });
    }
    Ok(TrainOutcome { model, history })
}

/// `-ln softmax(logits)[y]` via log-sum-exp; non-finite logits give a
/// non-finite result.
fn cross_entropy<S: Scalar>(logits: &[S], y: usize) -> f64 {
    let l: Vec<f64> = logits.iter().map(|v| v.to_f64()).collect();
    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + l.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - l[y]
}

/// Mean cross-entropy of a batch.
pub fn batch_loss<S: Scalar>(model: &CnnModel<S>, batch: &[(Vec<S>, QualityClass)]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in batch {
        total += cross_entropy(&model.logits(x)?, y.index());
    }
    Ok(total / batch.len() as f64)
}

/// Analytic gradient of [`batch_loss`].
pub fn batch_gradient<S: Scalar>(
    model: &CnnModel<S>,
    batch: &[(Vec<S>, QualityClass)],
) -> Result<Vec<S>> {
    let mut grad = vec![S::ZERO; model.param_count()];
    let scale = S::from_f64(1.0 / batch.len() as f64);
    for (x, y) in batch {
        let trace = model.trace(x)?;
        let mut d = softmax(trace.logits());
        d[y.index()] -= S::ONE;
        let d: Vec<S> = d.iter().map(|&v| v * scale).collect();
        model.backward(&trace, &d, &mut grad);
    }
    Ok(grad)
}

/// Analytic and central-difference derivatives for the given parameters.
pub fn gradient_pairs(
    model: &CnnModel<f64>,
    batch: &[(Vec<f64>, QualityClass)],
    epsilon: f64,
    indices: &[usize],
) -> Result<Vec<(f64, f64)>> {
    let analytic = batch_gradient(model, batch)?;
    let mut probe = model.clone();
    indices
        .iter()
        .map(|&i| {
            let orig = probe.params[i];
            probe.params[i] = orig + epsilon;
            let up = batch_loss(&probe, batch)?;
            probe.params[i] = orig - epsilon;
            let down = batch_loss(&probe, batch)?;
            probe.params[i] = orig;
            Ok((analytic[i], (up - down) / (2.0 * epsilon)))
        })
        .collect()
}

/// `|a − n| / max(|a|, |n|)`, or 0 when both vanish below `1e-10`.
pub fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters whose derivatives were both below `1e-10`.
    pub vanishing: usize,
}

/// Parameter tensors as index ranges: weights then bias of every layer.
fn tensor_ranges<S: Scalar>(model: &CnnModel<S>) -> Vec<std::ops::Range<usize>> {
    use super::model::Layer;
    model
        .layers()
        .iter()
        .filter_map(|l| match *l {
            Layer::Conv {
                cin, cout, w, b, ..
            } => Some([w..w + cout * cin * 9, b..b + cout]),
            Layer::Dense { nin, nout, w, b } => Some([w..w + nout * nin, b..b + nout]),
            _ => None,
        })
        .flatten()
        .collect()
}

/// `n` distinct parameter indices spread evenly over the tensors, so small
/// early layers are checked as well as the large dense one.
pub fn sample_parameters<S: Scalar>(
    model: &CnnModel<S>,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let ranges = tensor_ranges(model);
    let n = n.min(model.param_count());
    let mut quota: Vec<usize> = ranges
        .iter()
        .map(|r| (n / ranges.len()).min(r.len()))
        .collect();
    let mut left = n - quota.iter().sum::<usize>();
    // hand the remainder to the tensors with spare capacity, largest first
    let mut by_size: Vec<usize> = (0..ranges.len()).collect();
    by_size.sort_by_key(|&i| std::cmp::Reverse(ranges[i].len()));
    while left > 0 {
        for &i in &by_size {
            if left > 0 && quota[i] < ranges[i].len() {
                quota[i] += 1;
                left -= 1;
            }
        }
    }
    ranges
        .iter()
        .zip(quota)
        .flat_map(|(r, q)| {
            index::sample(rng, r.len(), q)
                .into_vec()
                .into_iter()
                .map(move |i| r.start + i)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Compares backprop against central differences on `n_params` distinct
/// parameters drawn across all tensors.
pub fn grad_check(
    model: &CnnModel<f64>,
    batch: &[(Vec<f64>, QualityClass)],
    epsilon: f64,
    n_params: usize,
    seed_value: u64,
) -> Result<GradCheckReport> {
    let mut rng = seed::rng(seed_value);
    let indices = sample_parameters(model, n_params, &mut rng);
    let n = indices.len();
    let pairs = gradient_pairs(model, batch, epsilon, &indices)?;
    let vanishing = pairs
        .iter()
        .filter(|(a, n)| a.abs().max(n.abs()) < 1e-10)
        .count();
    let max_relative_error = pairs
        .iter()
        .map(|&(a, n)| relative_error(a, n))
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        checked: n,
        vanishing,
    })
}

/// Mean of per-frame probability rows and its argmax (lowest class index on
/// ties).
pub fn aggregate_probabilities(
    rows: &[[f64; N_CLASSES]],
) -> Result<(QualityClass, f64, [f64; N_CLASSES])> {
    if rows.is_empty() {
        return Err(Error::NoEvidence("no frames to aggregate".into()));
    }
    let mut mean = [0.0; N_CLASSES];
    for r in rows {
        for c in 0..N_CLASSES {
            mean[c] += r[c];
        }
    }
    let n = rows.len() as f64;
    let mean = mean.map(|v| v / n);
    let best = argmax(&mean);
    Ok((QualityClass::from_index(best).unwrap(), mean[best], mean))
}

/// Per-frame probabilities of every frame `spec` selects from `film`.
pub fn frame_probabilities(
    model: &CnnModel<f32>,
    film: &NormalizedFilm,
    spec: &FilterSpec,
) -> Result<Vec<(usize, [f64; N_CLASSES])>> {
    select_frames(&film.curve, spec)
        .into_iter()
        .map(|f| {
            let input = prepare_input(&film.frame_rgb(f).0);
            let p = softmax(&model.logits(&input)?);
            Ok((f, p.map(|v| v as f64)))
        })
        .collect()
}

/// Film-level verdict: mean class probability over the selected frames.
pub fn predict_film(
    model: &CnnModel<f32>,
    film: &NormalizedFilm,
    spec: &FilterSpec,
) -> Result<(QualityClass, f64)> {
    let rows: Vec<[f64; N_CLASSES]> = frame_probabilities(model, film, spec)?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    if rows.is_empty() {
        return Err(Error::NoEvidence(format!(
            "filter {} selects no frame of {}",
            spec.id, film.specimen_id
        )));
    }
    let (class, conf, _) = aggregate_probabilities(&rows)?;
    Ok((class, conf))
}
