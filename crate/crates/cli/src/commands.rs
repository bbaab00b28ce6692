use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use weldscan::classifier::{
    aggregate_probabilities, fit, history_csv, softmax, EpochStats, TrainConfig, Variant,
};
use weldscan::config::PipelineConfig;
use weldscan::dataprep::{
    augment_copy, builtin_filter, pca_color_basis, select_frames, split_films, AugmentConfig,
    LabeledImage, PcaBasis, SplitName,
};
use weldscan::eval::{
    compute_metrics, report_text, run_augmentation_ablation, run_filter_ablation, AblationResult,
    Prediction, ReportMetadata,
};
use weldscan::io::{self, Provenance};
use weldscan::preprocess::{mean_intensity_curve, normalize_film, IntensityCurve};
use weldscan::thermal::{plan_dataset, LaserPulse, SimulationConfig, SpecimenSpec};
use weldscan::{seed, Error, QualityClass};

use crate::dataset::{
    film_files, film_identity, load_normalized, DatasetManifest, ImageRecord, MANIFEST,
};
use crate::{Command, Failure, PreprocessArgs, TrainArgs};

type Res<T = ()> = Result<T, Failure>;

pub fn run(command: Command, mut cfg: PipelineConfig) -> Res {
    match command {
        Command::Simulate { films, out } => {
            if let Some(n) = films {
                cfg.n_films = n;
            }
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("films"));
            simulate(&cfg, &out)
        }
        Command::Curve { inputs, out } => curve(&inputs, out.as_deref()),
        Command::Normalize { input, pre, out } => {
            apply_preprocess(&mut cfg, &pre)?;
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("normalized"));
            normalize(&cfg, &input.input, &out)
        }
        Command::Prepare {
            input,
            pre,
            filter,
            augment,
            multiplier,
            split,
            count_only,
            out,
        } => {
            apply_preprocess(&mut cfg, &pre)?;
            if let Some(f) = filter {
                cfg.filter = f;
            }
            if let Some(a) = augment {
                let named = AugmentConfig::from_name(&a)?;
                cfg.augment.positional = named.positional;
                cfg.augment.color = named.color;
            }
            if let Some(m) = multiplier {
                cfg.augment.multiplier = m;
            }
            if let Some(s) = split {
                cfg.split = [s[0], s[1], s[2]];
            }
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("dataset"));
            prepare(&cfg, &input.input, &out, count_only)
        }
        Command::Train {
            dataset,
            train,
            out,
        } => {
            apply_train(&mut cfg, &train)?;
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("model.ckpt"));
            train_cmd(&cfg, &dataset, &out)
        }
        Command::Eval {
            checkpoint,
            dataset,
            split,
            out,
        } => {
            cfg.validate()?;
            let which = parse_split(&split)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("eval"));
            eval_cmd(&cfg, &checkpoint, &dataset, which, &out)
        }
        Command::Ablate {
            input,
            pre,
            train,
            filters,
            augmentations,
            filter,
            seeds,
            frames_per_film,
            out,
        } => {
            apply_preprocess(&mut cfg, &pre)?;
            apply_train(&mut cfg, &train)?;
            if let Some(f) = filters {
                cfg.ablation.filters = f;
            }
            let by_augmentation = augmentations.is_some();
            if let Some(a) = augmentations {
                cfg.ablation.augmentations = a;
            }
            if let Some(f) = filter {
                cfg.filter = f;
            }
            if let Some(n) = seeds {
                cfg.ablation.n_seeds = n;
            }
            if frames_per_film.is_some() {
                cfg.ablation.frames_per_film = frames_per_film;
            }
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("ablation"));
            ablate(&cfg, &input.input, &out, by_augmentation)
        }
        Command::ExportFrames {
            input,
            frames,
            pre,
            out,
        } => {
            apply_preprocess(&mut cfg, &pre)?;
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("frames"));
            export_frames(&cfg, &input, &frames, &out)
        }
    }
}

fn apply_preprocess(cfg: &mut PipelineConfig, pre: &PreprocessArgs) -> Res {
    if let Some(t0) = &pre.t0 {
        cfg.preprocess.t0_frames = (t0[0], t0[1]);
    }
    if let Some(t) = pre.t_norm {
        cfg.preprocess.t_norm_frame = t;
    }
    if let Some(e) = pre.eps {
        cfg.preprocess.eps = e;
    }
    Ok(())
}

fn apply_train(cfg: &mut PipelineConfig, args: &TrainArgs) -> Res {
    let t = &mut cfg.train;
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = args.momentum {
        t.momentum = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = &args.variant {
        t.variant = Variant::parse(v)?;
    }
    if args.class_weights {
        t.class_weights = true;
    }
    Ok(())
}

fn parse_split(s: &str) -> Res<SplitName> {
    SplitName::ALL
        .into_iter()
        .find(|n| n.name() == s)
        .ok_or_else(|| Failure::Usage(format!("unknown split `{s}`, expected train, val or test")))
}

fn provenance(cfg: &PipelineConfig) -> Provenance {
    Provenance::new(cfg.hash(), cfg.seed)
}

#[derive(Serialize)]
struct FilmRecord<'a> {
    file: String,
    specimen_id: &'a str,
    label: QualityClass,
    film_seed: u64,
    spec: &'a SpecimenSpec,
    pulse: &'a LaserPulse,
    saturated: u32,
}

#[derive(Serialize)]
struct SimulationManifest<'a> {
    provenance: Provenance,
    n_films: usize,
    simulation: &'a SimulationConfig,
    films: Vec<FilmRecord<'a>>,
}

fn simulate(cfg: &PipelineConfig, out: &Path) -> Res {
    let plans = plan_dataset(&cfg.simulation, cfg.n_films, cfg.seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let mut films = Vec::with_capacity(plans.len());
    let mut counts = [0usize; 3];
    for plan in &plans {
        let film = plan.render(&cfg.simulation)?;
        let file = format!("{}.tfilm", plan.spec.specimen_id);
        io::write_tfilm(&out.join(&file), &film)?;
        counts[plan.spec.quality.index()] += 1;
        if film.saturated > 0 {
            eprintln!(
                "warning: {} has {} saturated samples",
                plan.spec.specimen_id, film.saturated
            );
        }
        films.push(FilmRecord {
            file,
            specimen_id: &plan.spec.specimen_id,
            label: plan.spec.quality,
            film_seed: plan.seed,
            spec: &plan.spec,
            pulse: &plan.pulse,
            saturated: film.saturated,
        });
    }
    let manifest = SimulationManifest {
        provenance: provenance(cfg),
        n_films: cfg.n_films,
        simulation: &cfg.simulation,
        films,
    };
    io::write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} films to {} (good {}, medium {}, bad {})",
        plans.len(),
        out.display(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(())
}

fn film_curve(path: &Path) -> Res<(String, IntensityCurve)> {
    if path.extension().and_then(|e| e.to_str()) == Some("nfilm") {
        let sidecar: io::NfilmSidecar = io::read_json(&io::sidecar_path(path))?;
        return Ok((
            sidecar.specimen_id,
            IntensityCurve {
                values: sidecar.curve,
            },
        ));
    }
    let film = io::read_tfilm(path)?;
    Ok((film.specimen_id.clone(), mean_intensity_curve(&film)))
}

fn curve(inputs: &[PathBuf], out: Option<&Path>) -> Res {
    let mut files = Vec::new();
    for input in inputs {
        files.extend(film_files(input)?);
    }
    match out {
        None if files.len() == 1 => {
            let (_, c) = film_curve(&files[0])?;
            print!("{}", io::curve_csv(&c));
        }
        None => {
            return Err(Failure::Usage(
                "--out is required for more than one film".into(),
            ))
        }
        Some(dir) => {
            for f in &files {
                let (id, c) = film_curve(f)?;
                io::write_file(&dir.join(format!("{id}.csv")), io::curve_csv(&c).as_bytes())?;
            }
            println!("wrote {} curves to {}", files.len(), dir.display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct NormalizedRecord {
    file: String,
    specimen_id: String,
    label: Option<QualityClass>,
    valid_pixels: usize,
}

#[derive(Serialize)]
struct NormalizedManifest<'a> {
    provenance: Provenance,
    preprocess: &'a weldscan::config::PreprocessConfig,
    films: Vec<NormalizedRecord>,
}

fn normalize(cfg: &PipelineConfig, input: &Path, out: &Path) -> Res {
    let pre = &cfg.preprocess;
    let prov = provenance(cfg);
    let mut films = Vec::new();
    for path in film_files(input)? {
        if path.extension().and_then(|e| e.to_str()) != Some("tfilm") {
            continue;
        }
        let film = io::read_tfilm(&path)?;
        let n = normalize_film(&film, pre.t0_frames, pre.t_norm_frame, pre.eps)?;
        let file = format!("{}.nfilm", n.specimen_id);
        io::write_nfilm(&out.join(&file), &n, Some(&prov))?;
        films.push(NormalizedRecord {
            file,
            specimen_id: n.specimen_id.clone(),
            label: n.label,
            valid_pixels: n.valid_count(),
        });
    }
    if films.is_empty() {
        return Err(Failure::Core(Error::Format {
            path: input.to_path_buf(),
            reason: "no raw .tfilm files to normalize".into(),
        }));
    }
    let count = films.len();
    io::write_json(
        &out.join("normalized.json"),
        &NormalizedManifest {
            provenance: prov,
            preprocess: pre,
            films,
        },
    )?;
    println!("normalized {count} films into {}", out.display());
    Ok(())
}

struct Emitter<'a> {
    out: &'a Path,
    write: bool,
    records: Vec<ImageRecord>,
    counts: BTreeMap<String, [usize; 3]>,
}

impl Emitter<'_> {
    fn emit(&mut self, img: &LabeledImage, split: SplitName, copy: usize) -> Res {
        let file = format!(
            "{}/{}_f{:03}_c{}.png",
            split.name(),
            img.film_id,
            img.frame_index,
            copy
        );
        if self.write {
            io::write_png(&self.out.join(&file), &img.pixels)?;
        }
        self.counts.entry(split.name().to_string()).or_default()[img.label.index()] += 1;
        self.records.push(ImageRecord {
            file: self.write.then_some(file),
            split,
            label: img.label,
            film_id: img.film_id.clone(),
            frame: img.frame_index,
            copy,
            aug_chain: img.aug_chain.clone(),
        });
        Ok(())
    }
}

fn prepare(cfg: &PipelineConfig, input: &Path, out: &Path, count_only: bool) -> Res {
    let spec = builtin_filter(&cfg.filter)?;
    let files = film_files(input)?;
    let ids = files
        .iter()
        .map(|p| film_identity(p))
        .collect::<Res<Vec<_>>>()?;
    let split = split_films(&ids, cfg.split, cfg.seed)?;
    let mut warnings = Vec::new();
    for which in SplitName::ALL {
        if split.ids(which).is_empty() {
            warnings.push(format!("split {} has no films", which.name()));
        }
    }
    let aug = &cfg.augment;
    let copies = if aug.is_enabled() { aug.multiplier } else { 1 };
    let aug_seed = seed::derive(&[cfg.seed, 2]);
    let empty_basis = PcaBasis::from_pixels(std::iter::empty());
    let mut em = Emitter {
        out,
        write: !count_only,
        records: Vec::new(),
        counts: BTreeMap::new(),
    };
    for which in SplitName::ALL {
        em.counts.insert(which.name().to_string(), [0; 3]);
    }
    // colour augmentation needs every training image for its basis first
    let mut held = Vec::new();
    for (path, (id, label)) in files.iter().zip(&ids) {
        let which = split.split_of(id).expect("every film is split");
        let film = load_normalized(path, &cfg.preprocess)?;
        for f in select_frames(&film.curve, &spec) {
            let img = LabeledImage {
                pixels: film.frame_rgb(f).0,
                label: *label,
                film_id: id.clone(),
                frame_index: f,
                aug_chain: Vec::new(),
            };
            if which != SplitName::Train {
                em.emit(&img, which, 0)?;
            } else if aug.color {
                held.push(img);
            } else {
                em.emit(&img, which, 0)?;
                for c in 1..copies {
                    em.emit(
                        &augment_copy(&img, aug, &empty_basis, aug_seed, c),
                        which,
                        c,
                    )?;
                }
            }
        }
    }
    if aug.color {
        let basis = pca_color_basis(&held, 17);
        for img in &held {
            em.emit(img, SplitName::Train, 0)?;
            for c in 1..copies {
                em.emit(
                    &augment_copy(img, aug, &basis, aug_seed, c),
                    SplitName::Train,
                    c,
                )?;
            }
        }
    }
    if em.records.is_empty() {
        return Err(Failure::Core(Error::NoEvidence(format!(
            "no images selected by filter {}",
            spec.id
        ))));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{:<8}{:>8}{:>8}{:>8}{:>8}",
        "split", "good", "medium", "bad", "total"
    );
    for which in SplitName::ALL {
        let c = em.counts[which.name()];
        println!(
            "{:<8}{:>8}{:>8}{:>8}{:>8}",
            which.name(),
            c[0],
            c[1],
            c[2],
            c.iter().sum::<usize>()
        );
    }
    println!(
        "{} images selected by {} ({} films)",
        em.records.len(),
        spec.id,
        files.len()
    );
    if count_only {
        return Ok(());
    }
    let manifest = DatasetManifest {
        provenance: provenance(cfg),
        filter: spec,
        augmentation: aug.clone(),
        preprocess: cfg.preprocess.clone(),
        split,
        counts: em.counts,
        warnings,
        images: em.records,
    };
    io::write_json(&out.join(MANIFEST), &manifest)?;
    Ok(())
}

fn file_sha256(path: &Path) -> Res<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    provenance: Provenance,
    train: &'a TrainConfig,
    dataset_manifest_sha256: String,
    train_samples: usize,
    val_samples: usize,
    history: &'a [EpochStats],
}

fn train_cmd(cfg: &PipelineConfig, dataset: &Path, out: &Path) -> Res {
    let manifest = DatasetManifest::load(dataset)?;
    let train: Vec<_> = manifest
        .samples(dataset, SplitName::Train)?
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    let val: Vec<_> = manifest
        .samples(dataset, SplitName::Val)?
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    eprintln!(
        "training on {} images, validating on {}",
        train.len(),
        val.len()
    );
    let outcome = fit(&train, &val, &cfg.train)?;
    for e in &outcome.history {
        eprintln!(
            "epoch {:>3}  loss {:.4}  train acc {:.3}  val acc {:.3}",
            e.epoch, e.loss, e.train_acc, e.val_acc
        );
    }
    io::write_checkpoint(out, &outcome.model)?;
    let record = TrainRecord {
        provenance: provenance(cfg),
        train: &cfg.train,
        dataset_manifest_sha256: file_sha256(&dataset.join(MANIFEST))?,
        train_samples: train.len(),
        val_samples: val.len(),
        history: &outcome.history,
    };
    io::write_json(&io::sidecar_path(out), &record)?;
    io::write_file(
        &out.with_extension("history.csv"),
        history_csv(&outcome.history).as_bytes(),
    )?;
    println!("wrote checkpoint {}", out.display());
    Ok(())
}

fn eval_cmd(
    cfg: &PipelineConfig,
    checkpoint: &Path,
    dataset: &Path,
    which: SplitName,
    out: &Path,
) -> Res {
    if !checkpoint.exists() {
        return Err(Failure::Core(Error::Format {
            path: checkpoint.to_path_buf(),
            reason: "checkpoint not found".into(),
        }));
    }
    let model = io::read_checkpoint(checkpoint)?;
    let manifest = DatasetManifest::load(dataset)?;
    let samples = manifest.samples(dataset, which)?;
    if samples.is_empty() {
        return Err(Failure::Usage(format!(
            "split {} of the dataset has no images",
            which.name()
        )));
    }
    let mut predictions = Vec::with_capacity(samples.len());
    let mut by_film: BTreeMap<&str, (QualityClass, Vec<[f64; 3]>)> = BTreeMap::new();
    for (s, rec) in &samples {
        let p = softmax(&model.logits(&s.input)?).map(|v| v as f64);
        predictions.push(Prediction::from_scores(s.label, p));
        if rec.copy == 0 {
            by_film
                .entry(&rec.film_id)
                .or_insert((s.label, Vec::new()))
                .1
                .push(p);
        }
    }
    let mut report = compute_metrics(&predictions)?;
    let mut hits = 0;
    for (truth, rows) in by_film.values() {
        if aggregate_probabilities(rows)?.0 == *truth {
            hits += 1;
        }
    }
    report.film_accuracy = Some(100.0 * hits as f64 / by_film.len().max(1) as f64);
    let prov = provenance(cfg);
    report.metadata = ReportMetadata {
        filter: Some(manifest.filter.id.clone()),
        augmentation: Some(manifest.augmentation.name().to_string()),
        seed: Some(cfg.seed),
        config_hash: Some(prov.config_hash),
        tool_version: Some(prov.tool_version),
    };
    let text = report_text(&report);
    io::write_json(&out.join("report.json"), &report)?;
    io::write_file(&out.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct AblationRecord<'a> {
    provenance: Provenance,
    kind: &'static str,
    result: &'a AblationResult,
}

fn ablate(cfg: &PipelineConfig, input: &Path, out: &Path, by_augmentation: bool) -> Res {
    let films = film_files(input)?
        .iter()
        .map(|p| load_normalized(p, &cfg.preprocess))
        .collect::<Res<Vec<_>>>()?;
    let mut setup = cfg.ablation_setup();
    setup.verbose = true;
    let result = if by_augmentation {
        let configs = cfg
            .ablation
            .augmentations
            .iter()
            .map(|name| {
                let named = AugmentConfig::from_name(name)?;
                Ok(AugmentConfig {
                    positional: named.positional,
                    color: named.color,
                    ..cfg.augment.clone()
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        run_augmentation_ablation(&films, &cfg.filter, &configs, &setup)?
    } else {
        let ids: Vec<&str> = cfg.ablation.filters.iter().map(String::as_str).collect();
        run_filter_ablation(&films, &ids, &setup)?
    };
    let record = AblationRecord {
        provenance: provenance(cfg),
        kind: if by_augmentation {
            "augmentation"
        } else {
            "filter"
        },
        result: &result,
    };
    io::write_json(&out.join("ablation.json"), &record)?;
    io::write_file(&out.join("ablation.csv"), result.to_csv().as_bytes())?;
    println!(
        "{:<24}{:>18}{:>18}",
        "entry", "film accuracy", "frame accuracy"
    );
    for e in &result.entries {
        match (
            e.film_accuracy_mean,
            e.film_accuracy_std,
            e.frame_accuracy_mean,
            e.frame_accuracy_std,
        ) {
            (Some(fm), Some(fs), Some(m), Some(s)) => {
                println!(
                    "{:<24}{:>11.1} ± {:<4.1}{:>11.1} ± {:<4.1}",
                    e.name, fm, fs, m, s
                )
            }
            _ => println!(
                "{:<24}  infeasible: {}",
                e.name,
                e.note.as_deref().unwrap_or("")
            ),
        }
    }
    println!("test manifest {}", result.test_manifest_hash);
    Ok(())
}

fn export_frames(cfg: &PipelineConfig, input: &Path, frames: &[usize], out: &Path) -> Res {
    let film = load_normalized(input, &cfg.preprocess)?;
    for &f in frames {
        if f == 0 || f > film.n_frames {
            return Err(Failure::Usage(format!(
                "frame {f} outside 1..={}",
                film.n_frames
            )));
        }
    }
    for &f in frames {
        let (img, lo, hi) = film.frame_rgb(f);
        let path = out.join(format!("{}_f{:03}.png", film.specimen_id, f));
        io::write_png(&path, &img)?;
        println!("{} range [{lo}, {hi}]", path.display());
    }
    Ok(())
}
