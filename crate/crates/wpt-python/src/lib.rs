//! Python bindings: channel generation and IO, the rectenna model, and the
//! waveform/beamforming optimizers, exposed as the `wpt_sim` module.

use num_complex::Complex;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use wpt_core::channel::{BandPlan, Channel, TapProfile};
use wpt_core::harness::{csv_to_string, run_experiment, summary_to_json, ExperimentSpec};
use wpt_core::rectenna::{self, RectifierParams};
use wpt_core::{Error, ReceiveCombiner, Scheme, SolverOpts};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::Invalid(_) | Error::Dimension(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// A realized multi-tone MIMO channel.
#[pyclass(name = "Channel")]
struct PyChannel {
    inner: Channel,
}

#[pymethods]
impl PyChannel {
    /// Draw a random tapped-delay-line channel realization.
    #[staticmethod]
    #[pyo3(signature = (tx, rx, tones, seed=0, center_hz=5.18e9, bandwidth_hz=1e7))]
    fn generate(
        tx: usize,
        rx: usize,
        tones: usize,
        seed: u64,
        center_hz: f64,
        bandwidth_hz: f64,
    ) -> PyResult<Self> {
        let band = BandPlan::new(center_hz, bandwidth_hz, tones).map_err(to_py_err)?;
        let profile = TapProfile::indoor_default();
        let inner = Channel::generate(tx, rx, band, &profile, seed).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Channel::load(std::path::Path::new(path)).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Channel::from_json_str(text).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner
            .save(std::path::Path::new(path))
            .map_err(to_py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    #[getter]
    fn tx_antennas(&self) -> usize {
        self.inner.tx_antennas()
    }

    #[getter]
    fn rx_antennas(&self) -> usize {
        self.inner.rx_antennas()
    }

    #[getter]
    fn tones(&self) -> usize {
        self.inner.tones()
    }

    /// Complex gain from transmit antenna `tx` to receive antenna `rx` on
    /// tone `tone`.
    fn gain(&self, tone: usize, rx: usize, tx: usize) -> PyResult<Complex<f64>> {
        if tone >= self.inner.tones() || rx >= self.inner.rx_antennas() || tx >= self.inner.tx_antennas() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.tone_matrix(tone)[(rx, tx)])
    }

    /// The rx-by-tx gain matrix of one tone as nested lists.
    fn tone_matrix(&self, tone: usize) -> PyResult<Vec<Vec<Complex<f64>>>> {
        if tone >= self.inner.tones() {
            return Err(PyValueError::new_err("tone index out of range"));
        }
        let h = self.inner.tone_matrix(tone);
        Ok((0..self.inner.rx_antennas())
            .map(|q| (0..self.inner.tx_antennas()).map(|m| h[(q, m)]).collect())
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Channel(tx={}, rx={}, tones={}, seed={})",
            self.inner.tx_antennas(),
            self.inner.rx_antennas(),
            self.inner.tones(),
            self.inner.seed()
        )
    }
}

/// Result of one optimizer run.
#[pyclass(name = "Solution")]
struct PySolution {
    #[pyo3(get)]
    scheme: String,
    /// Rectifier objective: summed DC voltages (DC combining) or the
    /// combined rectifier voltage (RF combining), volts.
    #[pyo3(get)]
    objective_v: f64,
    #[pyo3(get)]
    p_out_w: f64,
    #[pyo3(get)]
    p_rf_w: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    relative_step: f64,
    #[pyo3(get)]
    objective_trace: Vec<f64>,
    /// Stacked per-tone transmit weights, tone-major.
    #[pyo3(get)]
    waveform: Vec<Complex<f64>>,
    /// "none", "per-tone", or "common".
    #[pyo3(get)]
    receive_kind: String,
    /// Per-tone receive vectors; empty for DC combining, one shared entry
    /// repeated is NOT used - the common combiner appears once.
    #[pyo3(get)]
    receive_vectors: Vec<Vec<Complex<f64>>>,
}

#[pymethods]
impl PySolution {
    fn __repr__(&self) -> String {
        format!(
            "Solution(scheme={}, p_out_w={:.3e}, iterations={}, converged={})",
            self.scheme, self.p_out_w, self.iterations, self.converged
        )
    }
}

/// Optimize one scheme on a channel.
#[pyfunction]
#[pyo3(signature = (channel, scheme, power_dbm=-30.0, epsilon=1e-4, max_iterations=100))]
fn optimize(
    channel: &PyChannel,
    scheme: &str,
    power_dbm: f64,
    epsilon: f64,
    max_iterations: usize,
) -> PyResult<PySolution> {
    let scheme: Scheme = scheme.parse().map_err(to_py_err)?;
    if !(power_dbm.is_finite() && epsilon.is_finite() && epsilon > 0.0) || max_iterations == 0 {
        return Err(PyValueError::new_err("solver options out of range"));
    }
    let power = 1e-3 * 10f64.powf(power_dbm / 10.0);
    let opts = SolverOpts {
        epsilon,
        max_iterations,
    };
    let params = RectifierParams::default();
    let sol = wpt_core::harness::solve_scheme(&channel.inner, scheme, power, &params, &opts)
        .map_err(to_py_err)?;
    let (p_out, p_rf) = wpt_core::harness::solution_powers(&sol, &channel.inner, &params);
    let (receive_kind, receive_vectors) = match &sol.receive {
        ReceiveCombiner::None => ("none".to_string(), vec![]),
        ReceiveCombiner::PerTone(ws) => (
            "per-tone".to_string(),
            ws.iter().map(|w| w.iter().copied().collect()).collect(),
        ),
        ReceiveCombiner::Common(w) => {
            ("common".to_string(), vec![w.iter().copied().collect()])
        }
    };
    Ok(PySolution {
        scheme: sol.scheme.to_string(),
        objective_v: sol.objective,
        p_out_w: p_out,
        p_rf_w: p_rf,
        iterations: sol.report.iterations,
        converged: sol.report.converged,
        relative_step: sol.report.relative_step,
        objective_trace: sol.report.objective_trace.clone(),
        waveform: sol.waveform.stacked().iter().copied().collect(),
        receive_kind,
        receive_vectors,
    })
}

/// Diode expansion coefficients (b2, b4) for the given rectifier.
#[pyfunction]
#[pyo3(signature = (r_antenna=50.0, v_thermal=25.86e-3, ideality=1.05, r_load=10_000.0))]
fn beta_coefficients(
    r_antenna: f64,
    v_thermal: f64,
    ideality: f64,
    r_load: f64,
) -> PyResult<(f64, f64)> {
    let params = RectifierParams {
        r_antenna,
        v_thermal,
        ideality,
        r_load,
    };
    params.validate().map_err(to_py_err)?;
    Ok(rectenna::beta_coefficients(&params))
}

/// Second and fourth moments (E{y^2}, E{y^4}) of a multi-sine signal with
/// the given per-tone complex amplitudes.
#[pyfunction]
fn signal_moments(amplitudes: Vec<Complex<f64>>) -> (f64, f64) {
    rectenna::signal_moments(&amplitudes)
}

/// Same moments from the slow time-averaging oracle.
#[pyfunction]
fn time_average_moments(amplitudes: Vec<Complex<f64>>) -> (f64, f64) {
    rectenna::time_average_moments(&amplitudes)
}

/// Run a Monte-Carlo sweep from an experiment config JSON string.
/// Returns (csv, summary_json).
#[pyfunction]
#[pyo3(signature = (config_json, threads=None))]
fn run_experiment_json(config_json: &str, threads: Option<usize>) -> PyResult<(String, String)> {
    let spec = ExperimentSpec::from_json_str(config_json).map_err(to_py_err)?;
    let run = run_experiment(&spec, threads).map_err(to_py_err)?;
    Ok((csv_to_string(&run.rows), summary_to_json(&run.summary)))
}

#[pymodule]
fn wpt_sim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChannel>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(beta_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(signal_moments, m)?)?;
    m.add_function(wrap_pyfunction!(time_average_moments, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment_json, m)?)?;
    m.add("SCHEMES", vec!["dc-opt", "dc-ass", "rf-opt", "rf-ass", "rf-abf"])?;
    Ok(())
}
