//! Classification metrics and the filter/augmentation ablation harness.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{
    aggregate_probabilities, argmax, fit, prepare_input, softmax, CnnModel, Sample, TrainConfig,
    N_CLASSES,
};
use crate::dataprep::{
    augment_copy, builtin_filter, select_frames, split_films, AugmentConfig, DatasetSplit,
    FilterSpec, LabeledImage, PcaBasis, SplitName,
};
use crate::preprocess::NormalizedFilm;
use crate::{seed, Error, QualityClass, Result};

/// One classified sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub truth: QualityClass,
    pub predicted: QualityClass,
    /// Class probabilities in class order.
    pub scores: [f64; N_CLASSES],
}

impl Prediction {
    pub fn from_scores(truth: QualityClass, scores: [f64; N_CLASSES]) -> Self {
        let predicted = QualityClass::from_index(argmax(&scores)).unwrap();
        Self {
            truth,
            predicted,
            scores,
        }
    }
}

/// Area under the step-interpolated precision-recall curve of a scored
/// one-vs-rest list, `Σ ΔR · P` over distinct score thresholds. `None`
/// without positives.
pub fn average_precision(scored: &[(f64, bool)]) -> Option<f64> {
    let positives = scored.iter().filter(|(_, p)| *p).count();
    if positives == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        // samples sharing a score enter together
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Some(ap)
}

/// Provenance of a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub filter: Option<String>,
    pub augmentation: Option<String>,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub tool_version: Option<String>,
}

/// Per-class error rates and AP in percent, with the confusion matrix
/// (`confusion[truth][predicted]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    /// `None` for classes absent from the evaluated set.
    pub error_rate: [Option<f64>; N_CLASSES],
    pub ap: [Option<f64>; N_CLASSES],
    pub map: Option<f64>,
    pub confusion: [[usize; N_CLASSES]; N_CLASSES],
    /// Frame-level accuracy in percent.
    pub accuracy: f64,
    /// Film-level accuracy in percent, when film verdicts were formed.
    pub film_accuracy: Option<f64>,
    pub warnings: Vec<String>,
    pub metadata: ReportMetadata,
}

pub fn compute_metrics(predictions: &[Prediction]) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::InvalidParameter("no predictions to evaluate".into()));
    }
    let mut confusion = [[0usize; N_CLASSES]; N_CLASSES];
    for p in predictions {
        confusion[p.truth.index()][p.predicted.index()] += 1;
    }
    let mut error_rate = [None; N_CLASSES];
    let mut ap = [None; N_CLASSES];
    let mut warnings = Vec::new();
    for class in QualityClass::ALL {
        let c = class.index();
        let total: usize = confusion[c].iter().sum();
        if total == 0 {
            warnings.push(format!(
                "class {class} absent from the evaluated set; AP undefined and excluded from mAP"
            ));
            continue;
        }
        error_rate[c] = Some(100.0 * (total - confusion[c][c]) as f64 / total as f64);
        let scored: Vec<(f64, bool)> = predictions
            .iter()
            .map(|p| (p.scores[c], p.truth == class))
            .collect();
        ap[c] = average_precision(&scored).map(|v| 100.0 * v);
    }
    let defined: Vec<f64> = ap.iter().flatten().copied().collect();
    let map = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let correct: usize = (0..N_CLASSES).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        n_samples: predictions.len(),
        error_rate,
        ap,
        map,
        confusion,
        accuracy: 100.0 * correct as f64 / predictions.len() as f64,
        film_accuracy: None,
        warnings,
        metadata: ReportMetadata::default(),
    })
}

/// Published per-class results of the three detection architectures
/// (error rate %, mAP %), kept for side-by-side display only.
pub struct ReferenceRow {
    pub architecture: &'static str,
    pub error_rate: [f64; N_CLASSES],
    pub map: [f64; N_CLASSES],
}

pub const REFERENCE_RESULTS: [ReferenceRow; 3] = [
    ReferenceRow {
        architecture: "Faster-RCNN",
        error_rate: [6.33, 36.78, 8.85],
        map: [92.14, 81.57, 94.234],
    },
    ReferenceRow {
        architecture: "RetinaNet",
        error_rate: [9.97, 45.6, 12.66],
        map: [78.12, 74.21, 80.97],
    },
    ReferenceRow {
        architecture: "Cascade-RCNN",
        error_rate: [2.72, 34.66, 16.54],
        map: [95.31, 84.4, 94.7],
    },
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

/// Text table with rows Error Rate and AP over the three classes, followed
/// by the confusion matrix and the published reference rows.
pub fn report_text(report: &EvalReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<12}{:>10}{:>10}{:>10}\n",
        "", "good", "medium", "bad"
    ));
    s.push_str(&format!(
        "{:<12}{:>10}{:>10}{:>10}\n",
        "Error Rate",
        cell(report.error_rate[0]),
        cell(report.error_rate[1]),
        cell(report.error_rate[2])
    ));
    s.push_str(&format!(
        "{:<12}{:>10}{:>10}{:>10}\n",
        "AP",
        cell(report.ap[0]),
        cell(report.ap[1]),
        cell(report.ap[2])
    ));
    s.push_str(&format!(
        "\nmAP {}  accuracy {:.2}",
        cell(report.map),
        report.accuracy
    ));
    if let Some(f) = report.film_accuracy {
        s.push_str(&format!("  film accuracy {f:.2}"));
    }
    s.push_str(&format!(
        "  ({} samples)\n\nconfusion (rows truth, columns predicted)\n",
        report.n_samples
    ));
    for (c, row) in report.confusion.iter().enumerate() {
        let name = QualityClass::from_index(c).unwrap().name();
        s.push_str(&format!(
            "{:<12}{:>10}{:>10}{:>10}\n",
            name, row[0], row[1], row[2]
        ));
    }
    s.push_str("\npublished reference (error rate / mAP)\n");
    for r in &REFERENCE_RESULTS {
        s.push_str(&format!(
            "{:<14}{:>7.2} /{:>7.2}{:>7.2} /{:>7.2}{:>7.2} /{:>7.2}\n",
            r.architecture,
            r.error_rate[0],
            r.map[0],
            r.error_rate[1],
            r.map[1],
            r.error_rate[2],
            r.map[2]
        ));
    }
    for w in &report.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    s
}

// ---------------------------------------------------------------------------
// Ablations

/// Settings shared by every run of an ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSetup {
    pub split_ratios: [f64; 3],
    pub split_seed: u64,
    pub train: TrainConfig,
    pub n_seeds: usize,
    /// Evenly spaced frames kept per training/validation film; `None`
    /// keeps all selected frames. Test films always use every selected
    /// frame.
    pub frames_per_film: Option<usize>,
    /// Augmentation of the filter ablation runs.
    pub augment: AugmentConfig,
    pub verbose: bool,
}

impl Default for AblationSetup {
    fn default() -> Self {
        Self {
            split_ratios: [0.7, 0.15, 0.15],
            split_seed: 0,
            train: TrainConfig {
                epochs: 8,
                ..TrainConfig::default()
            },
            n_seeds: 3,
            frames_per_film: Some(6),
            augment: AugmentConfig::positional(),
            verbose: false,
        }
    }
}

/// Result of training and testing one (filter, augmentation, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub report: EvalReport,
    /// Test films for which the filter selected no frame; they count as
    /// misclassified in the film-level accuracy.
    pub films_without_evidence: usize,
    pub train_samples: usize,
    /// SHA-256 over every test input, identical across runs that saw the
    /// same test images.
    pub test_inputs_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub name: String,
    pub filter: String,
    pub augmentation: String,
    pub feasible: bool,
    pub note: Option<String>,
    pub runs: Vec<RunResult>,
    /// Mean and sample standard deviation over seeds, `None` if infeasible.
    pub film_accuracy_mean: Option<f64>,
    pub film_accuracy_std: Option<f64>,
    pub frame_accuracy_mean: Option<f64>,
    pub frame_accuracy_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub entries: Vec<AblationEntry>,
    pub seeds: Vec<u64>,
    /// SHA-256 over the test film ids and normalization settings shared by
    /// every entry.
    pub test_manifest_hash: String,
    pub split: DatasetSplit,
}

impl AblationResult {
    pub fn entry(&self, name: &str) -> Option<&AblationEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// `entry,mean,stddev` of the film-level accuracy; infeasible entries
    /// have empty fields.
    pub fn to_csv(&self) -> String {
        let field = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        let mut s = String::from("entry,mean,stddev\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{}\n",
                e.name,
                field(e.film_accuracy_mean),
                field(e.film_accuracy_std)
            ));
        }
        s
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `k` evenly spaced items of `frames` (all of them if there are fewer).
pub fn even_subsample(frames: &[usize], k: Option<usize>) -> Vec<usize> {
    match k {
        Some(k) if k < frames.len() => {
            let n = frames.len();
            (0..k).map(|j| frames[(2 * j + 1) * n / (2 * k)]).collect()
        }
        _ => frames.to_vec(),
    }
}

fn labeled(film: &NormalizedFilm, frame: usize) -> Result<LabeledImage> {
    let label = film.label.ok_or_else(|| {
        Error::InvalidParameter(format!("film {} has no label", film.specimen_id))
    })?;
    Ok(LabeledImage {
        pixels: film.frame_rgb(frame).0,
        label,
        film_id: film.specimen_id.clone(),
        frame_index: frame,
        aug_chain: Vec::new(),
    })
}

/// Hash identifying the test films and preprocessing of a split.
pub fn test_manifest_hash(films: &[NormalizedFilm], split: &DatasetSplit) -> String {
    let mut h = Sha256::new();
    for id in &split.test {
        h.update(id.as_bytes());
        h.update([0]);
        if let Some(f) = films.iter().find(|f| &f.specimen_id == id) {
            h.update(format!("{:?}|{}|{}", f.t0_frames, f.t_norm_frame, f.eps).as_bytes());
        }
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn films_in<'a>(
    films: &'a [NormalizedFilm],
    split: &DatasetSplit,
    which: SplitName,
) -> Vec<&'a NormalizedFilm> {
    let mut v: Vec<&NormalizedFilm> = films
        .iter()
        .filter(|f| split.split_of(&f.specimen_id) == Some(which))
        .collect();
    v.sort_by(|a, b| a.specimen_id.cmp(&b.specimen_id));
    v
}

/// Training samples (augmented) and validation samples for one run.
fn build_samples(
    train_films: &[&NormalizedFilm],
    val_films: &[&NormalizedFilm],
    spec: &FilterSpec,
    aug: &AugmentConfig,
    frames_per_film: Option<usize>,
    aug_seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let mut originals = Vec::new();
    for film in train_films {
        for f in even_subsample(&select_frames(&film.curve, spec), frames_per_film) {
            originals.push(labeled(film, f)?);
        }
    }
    let basis = if aug.color {
        crate::dataprep::pca_color_basis(&originals, 17)
    } else {
        PcaBasis::from_pixels(std::iter::empty())
    };
    let copies = if aug.is_enabled() { aug.multiplier } else { 1 };
    let mut train = Vec::with_capacity(originals.len() * copies);
    for img in &originals {
        train.push(Sample {
            input: prepare_input(&img.pixels),
            label: img.label,
        });
        for copy in 1..copies {
            let a = augment_copy(img, aug, &basis, aug_seed, copy);
            train.push(Sample {
                input: prepare_input(&a.pixels),
                label: a.label,
            });
        }
    }
    let mut val = Vec::new();
    for film in val_films {
        for f in even_subsample(&select_frames(&film.curve, spec), frames_per_film) {
            let img = labeled(film, f)?;
            val.push(Sample {
                input: prepare_input(&img.pixels),
                label: img.label,
            });
        }
    }
    Ok((train, val))
}

/// Predictions on a set of test films.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    /// One per selected frame, in film-id then frame order.
    pub predictions: Vec<Prediction>,
    pub films: usize,
    pub films_correct: usize,
    pub films_without_evidence: usize,
    /// SHA-256 over every test input.
    pub inputs_hash: String,
}

impl TestOutcome {
    /// Frame-level metrics with the film-level accuracy filled in. Films
    /// without evidence count as misclassified.
    pub fn report(&self) -> Result<EvalReport> {
        let mut report = compute_metrics(&self.predictions)?;
        report.film_accuracy = Some(100.0 * self.films_correct as f64 / self.films.max(1) as f64);
        if self.films_without_evidence > 0 {
            report.warnings.push(format!(
                "{} films had no selected frame",
                self.films_without_evidence
            ));
        }
        Ok(report)
    }
}

/// Initializes and trains a network on the split's training films
/// (validation on its validation films). Returns the model and the number
/// of training samples.
pub fn train_on_split(
    films: &[NormalizedFilm],
    split: &DatasetSplit,
    spec: &FilterSpec,
    aug: &AugmentConfig,
    train_cfg: &TrainConfig,
    frames_per_film: Option<usize>,
) -> Result<(CnnModel<f32>, usize)> {
    let train_films = films_in(films, split, SplitName::Train);
    let val_films = films_in(films, split, SplitName::Val);
    let aug_seed = seed::derive(&[train_cfg.seed, 2]);
    let (train_set, val_set) = build_samples(
        &train_films,
        &val_films,
        spec,
        aug,
        frames_per_film,
        aug_seed,
    )?;
    let outcome = fit(&train_set, &val_set, train_cfg)?;
    Ok((outcome.model, train_set.len()))
}

/// Classifies every frame `spec` selects in each film and forms the
/// film verdicts from the mean probabilities.
pub fn predict_films(
    model: &CnnModel<f32>,
    films: &[&NormalizedFilm],
    spec: &FilterSpec,
) -> Result<TestOutcome> {
    let mut predictions = Vec::new();
    let mut films_correct = 0;
    let mut films_without_evidence = 0;
    let mut hasher = Sha256::new();
    for film in films {
        let truth = film.label.ok_or_else(|| {
            Error::InvalidParameter(format!("film {} has no label", film.specimen_id))
        })?;
        let mut rows = Vec::new();
        for f in select_frames(&film.curve, spec) {
            let input = prepare_input(&film.frame_rgb(f).0);
            for v in &input {
                hasher.update(v.to_le_bytes());
            }
            let p = softmax(&model.logits(&input)?).map(|v| v as f64);
            predictions.push(Prediction::from_scores(truth, p));
            rows.push(p);
        }
        if rows.is_empty() {
            films_without_evidence += 1;
            continue;
        }
        if aggregate_probabilities(&rows)?.0 == truth {
            films_correct += 1;
        }
    }
    Ok(TestOutcome {
        predictions,
        films: films.len(),
        films_correct,
        films_without_evidence,
        inputs_hash: hex(&hasher.finalize()),
    })
}

/// Trains on the split's training films and evaluates every selected frame
/// of its test films.
pub fn run_experiment(
    films: &[NormalizedFilm],
    split: &DatasetSplit,
    spec: &FilterSpec,
    aug: &AugmentConfig,
    train_cfg: &TrainConfig,
    frames_per_film: Option<usize>,
) -> Result<RunResult> {
    let (model, train_samples) =
        train_on_split(films, split, spec, aug, train_cfg, frames_per_film)?;
    let test = predict_films(&model, &films_in(films, split, SplitName::Test), spec)?;
    if test.predictions.is_empty() {
        return Err(Error::NoEvidence(format!(
            "filter {} selects no test frame",
            spec.id
        )));
    }
    let mut report = test.report()?;
    report.metadata = ReportMetadata {
        filter: Some(spec.id.clone()),
        augmentation: Some(aug.name().into()),
        seed: Some(train_cfg.seed),
        ..ReportMetadata::default()
    };
    Ok(RunResult {
        seed: train_cfg.seed,
        report,
        films_without_evidence: test.films_without_evidence,
        train_samples,
        test_inputs_hash: test.inputs_hash,
    })
}

fn run_entry(
    films: &[NormalizedFilm],
    split: &DatasetSplit,
    spec: &FilterSpec,
    aug: &AugmentConfig,
    setup: &AblationSetup,
    seeds: &[u64],
) -> Result<AblationEntry> {
    let name = format!("{}/{}", spec.id, aug.name());
    let mut runs = Vec::new();
    let mut note = None;
    for &s in seeds {
        let cfg = TrainConfig {
            seed: s,
            ..setup.train.clone()
        };
        let started = std::time::Instant::now();
        match run_experiment(films, split, spec, aug, &cfg, setup.frames_per_film) {
            Ok(r) => {
                if setup.verbose {
                    eprintln!(
                        "{name} seed {s}: film accuracy {:.1}%, frame accuracy {:.1}% ({} training samples, {:.0?})",
                        r.report.film_accuracy.unwrap_or(f64::NAN),
                        r.report.accuracy,
                        r.train_samples,
                        started.elapsed()
                    );
                }
                runs.push(r);
            }
            // an empty or class-incomplete training set makes the entry infeasible
            Err(e @ (Error::InvalidParameter(_) | Error::NoEvidence(_))) => {
                note = Some(e.to_string());
                runs.clear();
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let film: Vec<f64> = runs.iter().filter_map(|r| r.report.film_accuracy).collect();
    let frame: Vec<f64> = runs.iter().map(|r| r.report.accuracy).collect();
    let summary = |v: &[f64]| {
        if v.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(v);
            (Some(m), Some(s))
        }
    };
    let (film_accuracy_mean, film_accuracy_std) = summary(&film);
    let (frame_accuracy_mean, frame_accuracy_std) = summary(&frame);
    Ok(AblationEntry {
        name,
        filter: spec.id.clone(),
        augmentation: aug.name().into(),
        feasible: !runs.is_empty(),
        note,
        runs,
        film_accuracy_mean,
        film_accuracy_std,
        frame_accuracy_mean,
        frame_accuracy_std,
    })
}

fn prepare_split(
    films: &[NormalizedFilm],
    setup: &AblationSetup,
) -> Result<(DatasetSplit, Vec<u64>, String)> {
    let ids: Vec<(String, QualityClass)> = films
        .iter()
        .map(|f| {
            f.label.map(|l| (f.specimen_id.clone(), l)).ok_or_else(|| {
                Error::InvalidParameter(format!("film {} has no label", f.specimen_id))
            })
        })
        .collect::<Result<_>>()?;
    let split = split_films(&ids, setup.split_ratios, setup.split_seed)?;
    let seeds = (0..setup.n_seeds as u64)
        .map(|i| seed::derive(&[setup.train.seed, i]))
        .collect();
    let hash = test_manifest_hash(films, &split);
    Ok((split, seeds, hash))
}

/// One entry per filter, all trained with `setup.augment` on the same split.
pub fn run_filter_ablation(
    films: &[NormalizedFilm],
    filter_ids: &[&str],
    setup: &AblationSetup,
) -> Result<AblationResult> {
    let (split, seeds, test_manifest_hash) = prepare_split(films, setup)?;
    let entries = filter_ids
        .iter()
        .map(|id| {
            run_entry(
                films,
                &split,
                &builtin_filter(id)?,
                &setup.augment,
                setup,
                &seeds,
            )
        })
        .collect::<Result<_>>()?;
    Ok(AblationResult {
        entries,
        seeds,
        test_manifest_hash,
        split,
    })
}

/// One entry per augmentation config on a single filter; splits, seeds and
/// test images are identical across entries.
pub fn run_augmentation_ablation(
    films: &[NormalizedFilm],
    filter_id: &str,
    configs: &[AugmentConfig],
    setup: &AblationSetup,
) -> Result<AblationResult> {
    let (split, seeds, test_manifest_hash) = prepare_split(films, setup)?;
    let spec = builtin_filter(filter_id)?;
    let entries = configs
        .iter()
        .map(|aug| run_entry(films, &split, &spec, aug, setup, &seeds))
        .collect::<Result<_>>()?;
    Ok(AblationResult {
        entries,
        seeds,
        test_manifest_hash,
        split,
    })
}

/// Frame and film-level report of `model` on `films` under `spec`.
pub fn evaluate_films(
    model: &CnnModel<f32>,
    films: &[NormalizedFilm],
    spec: &FilterSpec,
) -> Result<EvalReport> {
    let refs: Vec<&NormalizedFilm> = films.iter().collect();
    let mut report = predict_films(model, &refs, spec)?.report()?;
    report.metadata.filter = Some(spec.id.clone());
    Ok(report)
}
