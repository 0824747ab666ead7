//! Python bindings for the emitter model, stream simulation, correlator and fits.

use std::path::PathBuf;

use photonstat::correlator::{self, CorrelationConfig, CorrelationHistogram, HistogramMeta, Stage};
use photonstat::emitter::{self, DetectionChain, DeviceResponse, G2Coefficients as CoreCoefficients};
use photonstat::fit::{self, spectrum::peaks, FitResult as CoreFit, Spectrum};
use photonstat::sim::{self, DetectorConfig, SeriesPoint, SimulationPlan, TimestampStream as CoreStream};
use photonstat::{io, selftest};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn format_error(e: io::FormatError) -> PyErr {
    match e {
        io::FormatError::Io(e) => PyIOError::new_err(e.to_string()),
        other => value_error(other),
    }
}

/// Transition rates of the three-level emitter, 1/ns.
#[pyclass(frozen, module = "photonstat_py")]
struct TransitionRates {
    inner: emitter::TransitionRates,
}

#[pymethods]
impl TransitionRates {
    #[new]
    fn new(r12: f64, r21: f64, r23: f64, r31: f64) -> PyResult<Self> {
        Ok(Self { inner: emitter::TransitionRates::new(r12, r21, r23, r31).map_err(value_error)? })
    }

    /// Rates reproducing `coefficients` at pump rate `r12`.
    #[staticmethod]
    fn from_coefficients(coefficients: &G2Coefficients, r12: f64) -> PyResult<Self> {
        let inner = emitter::rates_from_coefficients(&coefficients.inner, r12).map_err(value_error)?;
        Ok(Self { inner })
    }

    #[getter]
    fn r12(&self) -> f64 {
        self.inner.r12()
    }
    #[getter]
    fn r21(&self) -> f64 {
        self.inner.r21()
    }
    #[getter]
    fn r23(&self) -> f64 {
        self.inner.r23()
    }
    #[getter]
    fn r31(&self) -> f64 {
        self.inner.r31()
    }

    fn coefficients(&self) -> PyResult<G2Coefficients> {
        Ok(G2Coefficients { inner: emitter::derive_coefficients(&self.inner).map_err(value_error)? })
    }

    /// Stationary populations `(p1, p2, p3)`.
    fn steady_state(&self) -> (f64, f64, f64) {
        emitter::steady_state_populations(&self.inner)
    }

    /// Mean detected count rate, counts/s, for detection efficiency `eta`.
    fn mean_count_rate(&self, eta: f64) -> PyResult<f64> {
        let chain = DetectionChain::new(eta).map_err(value_error)?;
        Ok(emitter::mean_count_rate(&self.inner, &chain))
    }

    fn __repr__(&self) -> String {
        let r = &self.inner;
        format!("TransitionRates(r12={}, r21={}, r23={}, r31={})", r.r12(), r.r21(), r.r23(), r.r31())
    }
}

/// Coefficients of g²(τ) = 1 − (1+a)·exp(−|τ|/τ1) + a·exp(−|τ|/τ2), τ in ns.
#[pyclass(frozen, module = "photonstat_py")]
struct G2Coefficients {
    inner: CoreCoefficients,
}

#[pymethods]
impl G2Coefficients {
    #[new]
    fn new(tau1: f64, tau2: f64, a: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreCoefficients::new(tau1, tau2, a).map_err(value_error)? })
    }

    #[staticmethod]
    fn reference() -> Self {
        Self { inner: CoreCoefficients::REFERENCE }
    }

    #[getter]
    fn tau1(&self) -> f64 {
        self.inner.tau1()
    }
    #[getter]
    fn tau2(&self) -> f64 {
        self.inner.tau2()
    }
    #[getter]
    fn a(&self) -> f64 {
        self.inner.a()
    }

    /// g²(τ), convolved with a Gaussian detector response of width `w` when `w > 0`.
    #[pyo3(signature = (tau, w = 0.0))]
    fn g2(&self, tau: f64, w: f64) -> PyResult<f64> {
        g2_convolved(self, tau, w)
    }

    fn __repr__(&self) -> String {
        format!("G2Coefficients(tau1={}, tau2={}, a={})", self.inner.tau1(), self.inner.tau2(), self.inner.a())
    }
}

/// Photon arrival times of one channel, integer picoseconds.
#[pyclass(frozen, module = "photonstat_py")]
struct TimestampStream {
    inner: CoreStream,
}

#[pymethods]
impl TimestampStream {
    #[new]
    #[pyo3(signature = (timestamps_ps, duration_ps, channel = "A"))]
    fn new(timestamps_ps: Vec<u64>, duration_ps: u64, channel: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreStream::new(timestamps_ps, duration_ps, channel).map_err(value_error)? })
    }

    /// Reads a binary (.pstm) or CSV (.csv) timestamp file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            let file = std::fs::File::open(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
            let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            io::read_timestamps_csv(std::io::BufReader::new(file), &label).map_err(format_error)?
        } else {
            io::load_timestamps(&path).map_err(format_error)?
        };
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let result = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            std::fs::File::create(&path).and_then(|f| io::write_timestamps_csv(std::io::BufWriter::new(f), &self.inner))
        } else {
            io::save_timestamps(&path, &self.inner)
        };
        result.map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn timestamps_ps(&self) -> Vec<u64> {
        self.inner.timestamps().to_vec()
    }
    #[getter]
    fn duration_ps(&self) -> u64 {
        self.inner.duration_ps()
    }
    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }
    #[getter]
    fn channel(&self) -> String {
        self.inner.channel().to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TimestampStream(channel={:?}, events={}, duration_s={})",
            self.inner.channel(),
            self.inner.len(),
            self.inner.duration_s()
        )
    }
}

/// A start-stop coincidence histogram at one processing stage.
#[pyclass(frozen, module = "photonstat_py")]
struct Histogram {
    inner: CorrelationHistogram,
}

#[pymethods]
impl Histogram {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: io::load_histogram(&path).map_err(format_error)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_histogram(&path, &self.inner).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    /// Builds a normalized histogram from bin centers (ns) and g² values;
    /// `expected` is the coincidence count corresponding to g² = 1.
    #[staticmethod]
    #[pyo3(signature = (tau_ns, g2, expected = 1e4))]
    fn from_values(tau_ns: Vec<f64>, g2: Vec<f64>, expected: f64) -> PyResult<Self> {
        if tau_ns.len() < 2 || !(expected > 0.0) {
            return Err(value_error("need at least two bins and expected > 0"));
        }
        let bin_width = tau_ns[1] - tau_ns[0];
        let counts = g2.iter().map(|v| (v * expected).round().max(0.0) as u64).collect();
        let (n1, n2) = (1e5, 1e5);
        let meta = HistogramMeta {
            n1,
            n2,
            duration: expected / (n1 * n2 * bin_width * 1e-9),
            bin_width,
            rho: None,
            scale: 1.0 / expected,
        };
        let inner =
            CorrelationHistogram::from_parts(tau_ns, counts, g2, Stage::Normalized, meta).map_err(value_error)?;
        Ok(Self { inner })
    }

    #[getter]
    fn tau_ns(&self) -> Vec<f64> {
        self.inner.bin_centers().to_vec()
    }
    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.counts().to_vec()
    }
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }
    #[getter]
    fn sigma(&self) -> Vec<f64> {
        self.inner.sigma()
    }
    #[getter]
    fn stage(&self) -> &'static str {
        self.inner.stage().as_str()
    }

    /// Metadata: count rates, duration, bin width, rho and count scale.
    fn meta<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = self.inner.meta();
        let d = PyDict::new(py);
        d.set_item("n1", m.n1)?;
        d.set_item("n2", m.n2)?;
        d.set_item("duration_s", m.duration)?;
        d.set_item("bin_width_ns", m.bin_width)?;
        d.set_item("rho", m.rho)?;
        d.set_item("scale", m.scale)?;
        Ok(d)
    }

    fn normalize(&self) -> PyResult<Self> {
        Ok(Self { inner: correlator::normalize(&self.inner).map_err(value_error)? })
    }

    fn background_correct(&self, rho: f64) -> PyResult<Self> {
        Ok(Self { inner: correlator::background_correct(&self.inner, rho).map_err(value_error)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Histogram(stage={}, bins={}, bin_width_ns={})",
            self.inner.stage().as_str(),
            self.inner.len(),
            self.inner.meta().bin_width
        )
    }
}

/// Outcome of a weighted least-squares fit.
#[pyclass(frozen, module = "photonstat_py")]
struct FitResult {
    inner: CoreFit,
}

#[pymethods]
impl FitResult {
    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names.clone()
    }
    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.params.clone()
    }
    #[getter]
    fn stderr(&self) -> Option<Vec<f64>> {
        self.inner.stderr.clone()
    }
    #[getter]
    fn covariance(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.covariance.clone()
    }
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }
    #[getter]
    fn residual_norm(&self) -> f64 {
        self.inner.residual_norm
    }

    /// Derived quantities as `{name: (value, stderr)}`.
    #[getter]
    fn derived<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for q in &self.inner.derived {
            d.set_item(&q.name, (q.value, q.stderr))?;
        }
        Ok(d)
    }

    /// Fitted value of a parameter or derived quantity.
    fn __getitem__(&self, name: &str) -> PyResult<f64> {
        self.inner
            .param(name)
            .or_else(|| self.inner.derived(name).map(|d| d.value))
            .ok_or_else(|| pyo3::exceptions::PyKeyError::new_err(name.to_string()))
    }

    /// Lorentzian lines `(center, fwhm, amplitude)` of a spectrum fit.
    fn peaks(&self) -> Vec<(f64, f64, f64)> {
        peaks(&self.inner).iter().map(|p| (p.center, p.fwhm, p.amplitude)).collect()
    }

    fn __repr__(&self) -> String {
        let body: Vec<String> =
            self.inner.names.iter().zip(&self.inner.params).map(|(n, v)| format!("{n}={v:.6}")).collect();
        format!("FitResult({}, converged={})", body.join(", "), self.inner.converged)
    }
}

#[pyfunction]
fn g2_ideal(coefficients: &G2Coefficients, tau: f64) -> f64 {
    emitter::g2_ideal(&coefficients.inner, tau)
}

#[pyfunction]
fn g2_convolved(coefficients: &G2Coefficients, tau: f64, w: f64) -> PyResult<f64> {
    let drf = DeviceResponse::new(w).map_err(value_error)?;
    Ok(emitter::g2_convolved(&coefficients.inner, &drf, tau))
}

/// Low-power lifetime τ1·(1 + P/Psat), ns.
#[pyfunction]
fn corrected_lifetime(tau1: f64, power: f64, p_sat: f64) -> f64 {
    emitter::corrected_lifetime(tau1, power, p_sat)
}

/// Saturation intensity in kW/cm² for power in mW and focal half-width in nm.
#[pyfunction]
fn saturation_intensity(p_sat: f64, focus_half_width: f64) -> f64 {
    emitter::saturation_intensity(p_sat, focus_half_width)
}

#[pyfunction]
fn visibility(i_max: f64, i_min: f64) -> PyResult<f64> {
    emitter::visibility(i_max, i_min).map_err(value_error)
}

#[pyfunction]
fn snr_to_rho(snr: f64) -> PyResult<f64> {
    correlator::snr_to_rho(snr).map_err(value_error)
}

/// Simulates a two-detector measurement; returns the two channels.
#[pyfunction]
#[pyo3(signature = (rates, duration_s, seed, eta = 1.0, jitter_w = 0.0, background_rate = 0.0, dead_time_ns = 0.0))]
fn simulate(
    py: Python<'_>,
    rates: &TransitionRates,
    duration_s: f64,
    seed: u64,
    eta: f64,
    jitter_w: f64,
    background_rate: f64,
    dead_time_ns: f64,
) -> PyResult<(TimestampStream, TimestampStream)> {
    let jitter = DeviceResponse::new(jitter_w).map_err(value_error)?;
    let plan = SimulationPlan {
        rates: rates.inner,
        detector: DetectorConfig { eta, jitter, background_rate, dead_time: dead_time_ns },
        duration: duration_s,
        seed,
    };
    let (a, b) = py.detach(|| sim::simulate_plan(&plan)).map_err(value_error)?;
    Ok((TimestampStream { inner: a }, TimestampStream { inner: b }))
}

/// Uncorrelated Poisson timestamps at `rate` counts/s.
#[pyfunction]
#[pyo3(signature = (rate, duration_s, seed, channel = "A"))]
fn poisson_stream(rate: f64, duration_s: f64, seed: u64, channel: &str) -> PyResult<TimestampStream> {
    let mut inner = sim::simulate_poisson_stream(rate, duration_s, seed).map_err(value_error)?;
    inner.set_channel(channel);
    Ok(TimestampStream { inner })
}

/// Raw start-stop histogram of delays `t_b − t_a`, bins and window in ns.
#[pyfunction]
#[pyo3(signature = (a, b, bin_width = 0.1, tau_max = 100.0))]
fn cross_correlate(
    py: Python<'_>,
    a: &TimestampStream,
    b: &TimestampStream,
    bin_width: f64,
    tau_max: f64,
) -> PyResult<Histogram> {
    let cfg = CorrelationConfig::new(bin_width, tau_max).map_err(value_error)?;
    let inner = py.detach(|| correlator::cross_correlate(&a.inner, &b.inner, &cfg)).map_err(value_error)?;
    Ok(Histogram { inner })
}

fn series(x: Vec<f64>, y: Vec<f64>, sigma: Option<Vec<f64>>) -> PyResult<Vec<SeriesPoint>> {
    let sigma = sigma.unwrap_or_else(|| vec![1.0; x.len()]);
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(value_error(format!("x, y and sigma lengths differ ({}, {}, {})", x.len(), y.len(), sigma.len())));
    }
    Ok(x.into_iter().zip(y).zip(sigma).map(|((x, y), sigma)| SeriesPoint { x, y, sigma }).collect())
}

/// Fits the jitter-convolved g² model; raw histograms are normalized first.
#[pyfunction]
#[pyo3(signature = (histogram, drf_width = emitter::REFERENCE_DRF_WIDTH_NS))]
fn fit_g2(py: Python<'_>, histogram: &Histogram, drf_width: f64) -> PyResult<FitResult> {
    let h = &histogram.inner;
    let inner = py
        .detach(|| match h.stage() {
            Stage::Raw => correlator::normalize(h)
                .map_err(|e| e.to_string())
                .and_then(|n| fit::fit_g2(&n, drf_width, None).map_err(|e| e.to_string())),
            _ => fit::fit_g2(h, drf_width, None).map_err(|e| e.to_string()),
        })
        .map_err(PyValueError::new_err)?;
    Ok(FitResult { inner })
}

/// Fits R(P) = R∞·P/(P + Psat) to count rate versus power.
#[pyfunction]
#[pyo3(signature = (power, rate, sigma = None))]
fn fit_saturation(power: Vec<f64>, rate: Vec<f64>, sigma: Option<Vec<f64>>) -> PyResult<FitResult> {
    let inner = fit::fit_saturation(&series(power, rate, sigma)?).map_err(value_error)?;
    Ok(FitResult { inner })
}

/// Fits I(θ) = Imin + (Imax − Imin)·cos²(θ − θ0), angles in degrees.
#[pyfunction]
#[pyo3(signature = (angle_deg, intensity, sigma = None))]
fn fit_polarization(angle_deg: Vec<f64>, intensity: Vec<f64>, sigma: Option<Vec<f64>>) -> PyResult<FitResult> {
    let inner = fit::fit_polarization(&series(angle_deg, intensity, sigma)?).map_err(value_error)?;
    Ok(FitResult { inner })
}

/// Fits `npeaks` Lorentzian lines plus a constant baseline.
#[pyfunction]
#[pyo3(signature = (wavelength_nm, intensity, sigma = None, npeaks = 1))]
fn fit_spectrum(
    wavelength_nm: Vec<f64>,
    intensity: Vec<f64>,
    sigma: Option<Vec<f64>>,
    npeaks: usize,
) -> PyResult<FitResult> {
    let s = Spectrum::with_estimated_baseline(wavelength_nm, intensity, sigma).map_err(value_error)?;
    Ok(FitResult { inner: fit::fit_spectrum(&s, npeaks, None).map_err(value_error)? })
}

/// Runs the acceptance checks; returns `(id, name, passed, detail)` tuples.
#[pyfunction]
#[pyo3(signature = (criterion = None))]
fn run_selftest(py: Python<'_>, criterion: Option<u32>) -> PyResult<Vec<(u32, String, bool, String)>> {
    let reports = py.detach(|| match criterion {
        Some(id) => selftest::run_criterion(id).map(|r| vec![r]),
        None => Some(selftest::run_all()),
    });
    let reports = reports.ok_or_else(|| value_error("criterion must be between 1 and 10"))?;
    Ok(reports.into_iter().map(|r| (r.id, r.name.to_string(), r.passed, r.detail)).collect())
}

#[pymodule]
fn photonstat_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<TransitionRates>()?;
    m.add_class::<G2Coefficients>()?;
    m.add_class::<TimestampStream>()?;
    m.add_class::<Histogram>()?;
    m.add_class::<FitResult>()?;
    m.add_function(wrap_pyfunction!(g2_ideal, m)?)?;
    m.add_function(wrap_pyfunction!(g2_convolved, m)?)?;
    m.add_function(wrap_pyfunction!(corrected_lifetime, m)?)?;
    m.add_function(wrap_pyfunction!(saturation_intensity, m)?)?;
    m.add_function(wrap_pyfunction!(visibility, m)?)?;
    m.add_function(wrap_pyfunction!(snr_to_rho, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_stream, m)?)?;
    m.add_function(wrap_pyfunction!(cross_correlate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_g2, m)?)?;
    m.add_function(wrap_pyfunction!(fit_saturation, m)?)?;
    m.add_function(wrap_pyfunction!(fit_polarization, m)?)?;
    m.add_function(wrap_pyfunction!(fit_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
