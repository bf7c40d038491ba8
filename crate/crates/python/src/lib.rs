//! Python bindings. Audio crosses the boundary as lists of floats at 16 kHz.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;

use dereverb::dataset::{make_reverberant, synth_clean_source, synth_rir, RirSpec};
use dereverb::metrics;
use dereverb::signal::{Waveform, SAMPLE_RATE};
use dereverb::unet::{enhance_utterance, UNetModel};
use dereverb::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::MissingArtifact(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::Io { .. } | Error::Format { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn wave(samples: Vec<f64>) -> PyResult<Waveform> {
    Waveform::new(samples, SAMPLE_RATE).map_err(py_err)
}

/// Synthetic voiced "speech" of the given length.
#[pyfunction]
#[pyo3(signature = (duration_s, seed=0))]
fn synth_speech(duration_s: f64, seed: u64) -> PyResult<Vec<f64>> {
    Ok(synth_clean_source(duration_s, seed, SAMPLE_RATE)
        .map_err(py_err)?
        .samples)
}

/// Exponentially decaying noise room response with a unit direct path.
#[pyfunction]
#[pyo3(signature = (t60, seed=0))]
fn room_response(t60: f64, seed: u64) -> PyResult<Vec<f64>> {
    synth_rir(&RirSpec::new(t60, seed, SAMPLE_RATE), SAMPLE_RATE).map_err(py_err)
}

/// Convolves with `rir` and adds white noise at `snr_db` (`inf` for none).
#[pyfunction]
#[pyo3(signature = (clean, rir, snr_db=f64::INFINITY, seed=0))]
fn reverberate(clean: Vec<f64>, rir: Vec<f64>, snr_db: f64, seed: u64) -> PyResult<Vec<f64>> {
    Ok(make_reverberant(&wave(clean)?, &rir, snr_db, seed)
        .map_err(py_err)?
        .samples)
}

#[pyfunction]
fn cepstral_distance(reference: Vec<f64>, degraded: Vec<f64>) -> PyResult<f64> {
    metrics::cepstral_distance(&wave(reference)?, &wave(degraded)?).map_err(py_err)
}

#[pyfunction]
fn llr(reference: Vec<f64>, degraded: Vec<f64>) -> PyResult<f64> {
    metrics::llr(&wave(reference)?, &wave(degraded)?).map_err(py_err)
}

#[pyfunction]
fn fwsegsnr(reference: Vec<f64>, degraded: Vec<f64>) -> PyResult<f64> {
    metrics::fwsegsnr(&wave(reference)?, &wave(degraded)?).map_err(py_err)
}

#[pyfunction]
fn srmr(signal: Vec<f64>) -> PyResult<f64> {
    metrics::srmr_simplified(&wave(signal)?).map_err(py_err)
}

/// A trained generator loaded from a checkpoint.
#[pyclass(frozen)]
struct Model {
    inner: UNetModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            inner: UNetModel::load(&path).map_err(py_err)?,
        })
    }

    fn enhance(&self, py: Python<'_>, samples: Vec<f64>) -> PyResult<Vec<f64>> {
        let w = wave(samples)?;
        let out = py.detach(|| enhance_utterance(&self.inner, &w));
        Ok(out.map_err(py_err)?.samples)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }
}

/// Runs the command-line front end and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("dereverb".to_string()).chain(args).collect();
    py.detach(|| dereverb::cli::run(argv))
}

#[pymodule]
fn dereverb_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SAMPLE_RATE", SAMPLE_RATE)?;
    m.add_function(wrap_pyfunction!(synth_speech, m)?)?;
    m.add_function(wrap_pyfunction!(room_response, m)?)?;
    m.add_function(wrap_pyfunction!(reverberate, m)?)?;
    m.add_function(wrap_pyfunction!(cepstral_distance, m)?)?;
    m.add_function(wrap_pyfunction!(llr, m)?)?;
    m.add_function(wrap_pyfunction!(fwsegsnr, m)?)?;
    m.add_function(wrap_pyfunction!(srmr, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
