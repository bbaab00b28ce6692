//! Python bindings: simulation, normalization, frame filters, training and
//! metrics. Pixel data crosses the boundary as flat lists or raw bytes.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use weldscan::classifier::{self, CnnModel, Sample, TrainConfig, Variant};
use weldscan::config::PipelineConfig;
use weldscan::dataprep::{self, AugmentConfig, PcaBasis};
use weldscan::eval;
use weldscan::preprocess;
use weldscan::thermal::{self, SimulationConfig};
use weldscan::{io, seed, Error, QualityClass};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_label(label: &str) -> PyResult<QualityClass> {
    label.parse().map_err(py_err)
}

fn sim_config(config_json: Option<&str>) -> PyResult<SimulationConfig> {
    match config_json {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string())),
        None => Ok(SimulationConfig::default()),
    }
}

/// Raw film of 16-bit camera digits.
#[pyclass(name = "ThermalFilm", module = "weldscan")]
struct PyThermalFilm {
    inner: thermal::ThermalFilm,
}

#[pymethods]
impl PyThermalFilm {
    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }
    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }
    #[getter]
    fn n_frames(&self) -> usize {
        self.inner.n_frames
    }
    #[getter]
    fn frame_rate(&self) -> f64 {
        self.inner.frame_rate
    }
    #[getter]
    fn label(&self) -> Option<&'static str> {
        self.inner.label.map(QualityClass::name)
    }
    #[getter]
    fn specimen_id(&self) -> String {
        self.inner.specimen_id.clone()
    }
    #[getter]
    fn saturated(&self) -> u32 {
        self.inner.saturated
    }

    /// Digits of a 1-based frame, row-major.
    fn frame(&self, frame: usize) -> PyResult<Vec<u16>> {
        check_frame(frame, self.inner.n_frames)?;
        Ok(self.inner.frame(frame).to_vec())
    }

    fn intensity_curve(&self) -> Vec<f64> {
        preprocess::mean_intensity_curve(&self.inner).values
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_tfilm(&path, &self.inner).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::read_tfilm(&path).map_err(py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "ThermalFilm({}, {}x{}x{}, label={:?})",
            self.inner.specimen_id,
            self.inner.width,
            self.inner.height,
            self.inner.n_frames,
            self.label()
        )
    }
}

fn check_frame(frame: usize, n: usize) -> PyResult<()> {
    if frame == 0 || frame > n {
        return Err(PyValueError::new_err(format!(
            "frame {frame} outside 1..={n}"
        )));
    }
    Ok(())
}

/// Film normalized against its cold reference and a late frame.
#[pyclass(name = "NormalizedFilm", module = "weldscan")]
struct PyNormalizedFilm {
    inner: preprocess::NormalizedFilm,
}

#[pymethods]
impl PyNormalizedFilm {
    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }
    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }
    #[getter]
    fn n_frames(&self) -> usize {
        self.inner.n_frames
    }
    #[getter]
    fn label(&self) -> Option<&'static str> {
        self.inner.label.map(QualityClass::name)
    }
    #[getter]
    fn specimen_id(&self) -> String {
        self.inner.specimen_id.clone()
    }
    #[getter]
    fn valid_count(&self) -> usize {
        self.inner.valid_count()
    }

    fn frame(&self, frame: usize) -> PyResult<Vec<f32>> {
        check_frame(frame, self.inner.n_frames)?;
        Ok(self.inner.frame(frame).to_vec())
    }

    fn valid_mask(&self) -> Vec<bool> {
        self.inner.valid.clone()
    }

    fn intensity_curve(&self) -> Vec<f64> {
        self.inner.curve.values.clone()
    }

    /// Colormapped frame as `(rgb_bytes, width, height)`.
    fn frame_rgb<'py>(
        &self,
        py: Python<'py>,
        frame: usize,
    ) -> PyResult<(Bound<'py, PyBytes>, usize, usize)> {
        check_frame(frame, self.inner.n_frames)?;
        let (img, _, _) = self.inner.frame_rgb(frame);
        Ok((
            PyBytes::new(py, img.as_raw()),
            self.inner.width,
            self.inner.height,
        ))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_nfilm(&path, &self.inner, None).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::read_nfilm(&path).map_err(py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "NormalizedFilm({}, {}x{}x{}, valid={})",
            self.inner.specimen_id,
            self.inner.width,
            self.inner.height,
            self.inner.n_frames,
            self.inner.valid_count()
        )
    }
}

/// Convolutional classifier over 64×64 colormapped frames.
#[pyclass(name = "Model", module = "weldscan")]
struct PyModel {
    inner: CnnModel<f32>,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (variant = "small", seed = 0))]
    fn new(variant: &str, seed: u64) -> PyResult<Self> {
        let v = Variant::parse(variant).map_err(py_err)?;
        Ok(Self {
            inner: CnnModel::new(v, &mut seed::rng(seed)),
        })
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.name()
    }

    /// Class probabilities (good, medium, bad) of one frame.
    fn predict_frame(&self, film: &PyNormalizedFilm, frame: usize) -> PyResult<[f64; 3]> {
        check_frame(frame, film.inner.n_frames)?;
        let input = classifier::prepare_input(&film.inner.frame_rgb(frame).0);
        let logits = self.inner.logits(&input).map_err(py_err)?;
        Ok(classifier::softmax(&logits).map(|v| v as f64))
    }

    /// Film verdict and its mean probability over the frames the filter
    /// selects.
    fn predict_film(
        &self,
        film: &PyNormalizedFilm,
        filter_id: &str,
    ) -> PyResult<(&'static str, f64)> {
        let spec = dataprep::builtin_filter(filter_id).map_err(py_err)?;
        let (class, conf) =
            classifier::predict_film(&self.inner, &film.inner, &spec).map_err(py_err)?;
        Ok((class.name(), conf))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_checkpoint(&path, &self.inner).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::read_checkpoint(&path).map_err(py_err)?,
        })
    }
}

/// Renders `n_films` films. `config_json` overrides simulation defaults.
#[pyfunction]
#[pyo3(signature = (n_films, seed = 0, config_json = None))]
fn simulate(
    py: Python<'_>,
    n_films: usize,
    seed: u64,
    config_json: Option<&str>,
) -> PyResult<Vec<PyThermalFilm>> {
    let cfg = sim_config(config_json)?;
    let films = py
        .detach(|| thermal::generate_dataset(&cfg, n_films, seed))
        .map_err(py_err)?;
    Ok(films
        .into_iter()
        .map(|inner| PyThermalFilm { inner })
        .collect())
}

#[pyfunction]
#[pyo3(signature = (film, t0_frames = (1, 10), t_norm_frame = 250, eps = 8.0))]
fn normalize(
    film: &PyThermalFilm,
    t0_frames: (usize, usize),
    t_norm_frame: usize,
    eps: f64,
) -> PyResult<PyNormalizedFilm> {
    let inner =
        preprocess::normalize_film(&film.inner, t0_frames, t_norm_frame, eps).map_err(py_err)?;
    Ok(PyNormalizedFilm { inner })
}

/// Built-in frame filters as `(id, (first, last), (low, high), description)`.
#[pyfunction]
fn builtin_filters() -> Vec<(String, (usize, usize), (f64, f64), String)> {
    dataprep::builtin_filters()
        .into_iter()
        .map(|f| (f.id, f.frames, f.intensity, f.description))
        .collect()
}

/// 1-based frames of a film accepted by a filter.
#[pyfunction]
fn select_frames(film: &PyNormalizedFilm, filter_id: &str) -> PyResult<Vec<usize>> {
    let spec = dataprep::builtin_filter(filter_id).map_err(py_err)?;
    Ok(dataprep::select_frames(&film.inner.curve, &spec))
}

#[pyfunction]
fn colormap(v: f64) -> (u8, u8, u8) {
    let [r, g, b] = preprocess::colormap(v);
    (r, g, b)
}

/// Area under the precision-recall curve; `None` without positives.
#[pyfunction]
fn average_precision(scores: Vec<f64>, positives: Vec<bool>) -> PyResult<Option<f64>> {
    if scores.len() != positives.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    let pairs: Vec<(f64, bool)> = scores.into_iter().zip(positives).collect();
    Ok(eval::average_precision(&pairs))
}

/// Stratified split of `(film_id, label)` pairs into train, val and test ids.
#[pyfunction]
#[pyo3(signature = (films, ratios = (0.7, 0.15, 0.15), seed = 0))]
fn split_films(
    films: Vec<(String, String)>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> PyResult<(Vec<String>, Vec<String>, Vec<String>)> {
    let labeled = films
        .into_iter()
        .map(|(id, l)| Ok((id, parse_label(&l)?)))
        .collect::<PyResult<Vec<_>>>()?;
    let s =
        dataprep::split_films(&labeled, [ratios.0, ratios.1, ratios.2], seed).map_err(py_err)?;
    Ok((s.train, s.val, s.test))
}

/// Trains a model on every frame the filter selects (up to
/// `frames_per_film` per film), with the named augmentation.
#[pyfunction]
#[pyo3(signature = (films, filter_id = "F10", augment = "positional", epochs = 10, seed = 0, frames_per_film = None, variant = "small", learning_rate = 0.01))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    films: Vec<PyRef<'_, PyNormalizedFilm>>,
    filter_id: &str,
    augment: &str,
    epochs: usize,
    seed: u64,
    frames_per_film: Option<usize>,
    variant: &str,
    learning_rate: f64,
) -> PyResult<(PyModel, Vec<f64>)> {
    let spec = dataprep::builtin_filter(filter_id).map_err(py_err)?;
    let aug = AugmentConfig::from_name(augment).map_err(py_err)?;
    let cfg = TrainConfig {
        epochs,
        seed,
        learning_rate,
        variant: Variant::parse(variant).map_err(py_err)?,
        ..TrainConfig::default()
    };
    let mut originals = Vec::new();
    for film in &films {
        let f = &film.inner;
        let label = f
            .label
            .ok_or_else(|| PyValueError::new_err(format!("film {} has no label", f.specimen_id)))?;
        for frame in
            eval::even_subsample(&dataprep::select_frames(&f.curve, &spec), frames_per_film)
        {
            originals.push(dataprep::LabeledImage {
                pixels: f.frame_rgb(frame).0,
                label,
                film_id: f.specimen_id.clone(),
                frame_index: frame,
                aug_chain: Vec::new(),
            });
        }
    }
    let outcome = py
        .detach(|| {
            let basis = if aug.color {
                dataprep::pca_color_basis(&originals, 17)
            } else {
                PcaBasis::from_pixels(std::iter::empty())
            };
            let copies = if aug.is_enabled() { aug.multiplier } else { 1 };
            let aug_seed = seed::derive(&[seed, 2]);
            let mut samples = Vec::with_capacity(originals.len() * copies);
            for img in &originals {
                samples.push(Sample {
                    input: classifier::prepare_input(&img.pixels),
                    label: img.label,
                });
                for c in 1..copies {
                    let a = dataprep::augment_copy(img, &aug, &basis, aug_seed, c);
                    samples.push(Sample {
                        input: classifier::prepare_input(&a.pixels),
                        label: a.label,
                    });
                }
            }
            classifier::fit(&samples, &[], &cfg)
        })
        .map_err(py_err)?;
    let losses = outcome.history.iter().map(|e| e.loss).collect();
    Ok((
        PyModel {
            inner: outcome.model,
        },
        losses,
    ))
}

/// Hash of a pipeline configuration given as JSON.
#[pyfunction]
fn config_hash(config_json: &str) -> PyResult<String> {
    Ok(PipelineConfig::from_json(config_json)
        .map_err(py_err)?
        .hash())
}

#[pymodule]
#[pyo3(name = "weldscan")]
fn weldscan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyThermalFilm>()?;
    m.add_class::<PyNormalizedFilm>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_filters, m)?)?;
    m.add_function(wrap_pyfunction!(select_frames, m)?)?;
    m.add_function(wrap_pyfunction!(colormap, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(split_films, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    Ok(())
}
