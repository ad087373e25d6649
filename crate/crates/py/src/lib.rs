//! Python bindings for `tcm_core`.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tcm_core::mc_harness::{self, ErrorNorm, Reference, StudyConfig};
use tcm_core::problems::{self as core_problems, Candidates, SamplingSpec};
use tcm_core::scheme::{self as core_scheme, Scheme, WienerIncrements};
use tcm_core::{subordinator, truncation, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Domain(_) | Error::Config { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        Error::ResourceLimit(_) | Error::NumericOverflow(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
    }
}

fn scheme(name: &str) -> PyResult<Scheme> {
    name.parse().map_err(to_py)
}

/// Subordinator driving the time change.
#[pyclass(frozen, skip_from_py_object, module = "tcmilstein")]
#[derive(Clone)]
struct SubordinatorModel {
    inner: subordinator::SubordinatorModel,
}

#[pymethods]
impl SubordinatorModel {
    /// One-sided α-stable subordinator with `E e^{-λD(h)} = e^{-h·scale·λ^α}`.
    #[staticmethod]
    #[pyo3(signature = (alpha, scale = 1.0))]
    fn stable(alpha: f64, scale: f64) -> PyResult<Self> {
        let inner =
            subordinator::SubordinatorModel::stable_with_scale(alpha, scale).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// `D(t) = t`, the classical limit.
    #[staticmethod]
    fn deterministic() -> Self {
        Self {
            inner: subordinator::SubordinatorModel::deterministic(),
        }
    }

    #[getter]
    fn alpha(&self) -> Option<f64> {
        self.inner.alpha()
    }

    fn laplace_transform(&self, h: f64, lam: f64) -> f64 {
        self.inner.laplace_transform(h, lam)
    }

    /// `count` independent draws of `D(h)`.
    fn sample_increments(&self, h: f64, count: usize, seed: u64) -> PyResult<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| self.inner.sample_increment(h, &mut rng))
            .collect::<Result<_, _>>()
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("SubordinatorModel({})", self.inner.describe())
    }
}

#[pyclass(frozen, skip_from_py_object, module = "tcmilstein")]
#[derive(Clone)]
struct TruncationConfig {
    inner: truncation::TruncationConfig,
}

#[pymethods]
impl TruncationConfig {
    #[new]
    #[pyo3(signature = (mu_coeff = 2.0, mu_exponent = 5.0, epsilon = 0.02, kappa_floor = false))]
    fn new(mu_coeff: f64, mu_exponent: f64, epsilon: f64, kappa_floor: bool) -> PyResult<Self> {
        let inner = truncation::TruncationConfig::new(mu_coeff, mu_exponent, epsilon, kappa_floor)
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    fn mu(&self, u: f64) -> f64 {
        self.inner.mu(u)
    }

    fn mu_inverse(&self, v: f64) -> f64 {
        self.inner.mu_inverse(v)
    }

    fn kappa(&self, h: f64) -> f64 {
        self.inner.kappa(h)
    }

    fn truncation_radius(&self, h: f64) -> PyResult<f64> {
        self.inner.truncation_radius(h).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "TruncationConfig(mu_coeff={}, mu_exponent={}, epsilon={}, kappa_floor={})",
            self.inner.mu_coeff(),
            self.inner.mu_exponent(),
            self.inner.epsilon(),
            if self.inner.kappa_floor() {
                "True"
            } else {
                "False"
            }
        )
    }
}

/// A built-in time-changed SDE.
#[pyclass(frozen, skip_from_py_object, module = "tcmilstein")]
#[derive(Clone)]
struct Problem {
    inner: core_scheme::SdeProblem,
}

#[pymethods]
impl Problem {
    /// Looks up `example1`, `example2`, `gbm`, `quintic-growth` or `linear-contractive`.
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core_problems::by_name(name).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (mu = 0.1, sigma = 0.2, y0 = 1.0, horizon = 1.0))]
    fn gbm(mu: f64, sigma: f64, y0: f64, horizon: f64) -> PyResult<Self> {
        Ok(Self {
            inner: core_problems::gbm(mu, sigma, y0, horizon).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn y0(&self) -> Vec<f64> {
        self.inner.y0().to_vec()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    fn drift(&self, t: f64, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&y)?;
        let mut out = vec![0.0; y.len()];
        self.inner.drift(t, &y, &mut out);
        Ok(out)
    }

    fn diffusion(&self, t: f64, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&y)?;
        let mut out = vec![0.0; y.len()];
        self.inner.diffusion(t, &y, &mut out);
        Ok(out)
    }

    fn lg(&self, t: f64, y: Vec<f64>) -> PyResult<Vec<f64>> {
        core_scheme::lg(&self.inner, t, &y).map_err(to_py)
    }

    /// Truncation recommended by the problem (the default `μ(u) = 2u⁵` otherwise).
    fn truncation(&self) -> TruncationConfig {
        TruncationConfig {
            inner: self.inner.truncation(),
        }
    }

    fn __repr__(&self) -> String {
        format!("Problem({:?})", self.inner.name())
    }
}

impl Problem {
    fn check(&self, y: &[f64]) -> PyResult<()> {
        if y.len() == self.inner.dim() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!(
                "state has dimension {}, problem expects {}",
                y.len(),
                self.inner.dim()
            )))
        }
    }
}

#[pyclass(frozen, module = "tcmilstein")]
struct TimeChangeGrid {
    inner: subordinator::TimeChangeGrid,
}

#[pymethods]
impl TimeChangeGrid {
    /// Runs the clock recursion until it passes `horizon`.
    #[staticmethod]
    #[pyo3(signature = (model, h, horizon = 1.0, seed = 42))]
    fn build(model: &SubordinatorModel, h: f64, horizon: f64, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = subordinator::TimeChangeGrid::build(&model.inner, h, horizon, &mut rng)
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_nodes(h: f64, horizon: f64, tau: Vec<f64>) -> PyResult<Self> {
        let inner = subordinator::TimeChangeGrid::from_nodes(h, horizon, tau).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn tau(&self) -> Vec<f64> {
        self.inner.tau().to_vec()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    fn evaluate_inverse(&self, t: f64) -> PyResult<f64> {
        self.inner.evaluate_inverse(t).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("TimeChangeGrid(h={}, N={})", self.inner.h(), self.inner.n())
    }
}

#[pyclass(frozen, get_all, module = "tcmilstein")]
struct Trajectory {
    tau: Vec<f64>,
    internal_time: Vec<f64>,
    /// One list per node `n = 0..N`.
    states: Vec<Vec<f64>>,
}

/// Simulates one path; the grid and Wiener increments come from `seed`.
#[pyfunction]
#[pyo3(signature = (problem, model, h, seed = 42, truncation = None, scheme = "milstein"))]
fn simulate(
    problem: &Problem,
    model: &SubordinatorModel,
    h: f64,
    seed: u64,
    truncation: Option<&TruncationConfig>,
    scheme: &str,
) -> PyResult<Trajectory> {
    let scheme = self::scheme(scheme)?;
    let cfg = truncation.map_or_else(|| problem.inner.truncation(), |t| t.inner);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid =
        subordinator::TimeChangeGrid::build(&model.inner, h, problem.inner.horizon(), &mut rng)
            .map_err(to_py)?;
    let wiener = WienerIncrements::sample(h, grid.n(), &mut rng);
    let traj =
        core_scheme::simulate_path(&problem.inner, &cfg, &grid, &wiener, scheme).map_err(to_py)?;
    Ok(Trajectory {
        tau: grid.tau()[..=grid.n()].to_vec(),
        internal_time: (0..=grid.n()).map(|i| grid.internal_time(i)).collect(),
        states: traj.states().map(<[f64]>::to_vec).collect(),
    })
}

#[pyfunction]
fn project(x: Vec<f64>, radius: f64) -> Vec<f64> {
    truncation::project(&x, radius)
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "tcmilstein")]
#[derive(Clone)]
struct ErrorRow {
    h: f64,
    trajectories: usize,
    p_bar: f64,
    error: f64,
    stderr: f64,
    mean_sup_sq: f64,
}

#[pyclass(frozen, module = "tcmilstein")]
struct ErrorTable {
    inner: mc_harness::ErrorTable,
}

#[pymethods]
impl ErrorTable {
    #[getter]
    fn rows(&self) -> Vec<ErrorRow> {
        self.inner
            .rows
            .iter()
            .map(|r| ErrorRow {
                h: r.h,
                trajectories: r.trajectories,
                p_bar: r.p_bar,
                error: r.error,
                stderr: r.stderr,
                mean_sup_sq: r.mean_sup_sq,
            })
            .collect()
    }

    #[getter]
    fn blowups(&self) -> usize {
        self.inner.blowups
    }

    /// CSV with the fitted regression appended; no timestamp line.
    fn to_csv(&self) -> PyResult<String> {
        let fit = mc_harness::fit_convergence_order(&self.inner).map_err(to_py)?;
        Ok(self.inner.to_csv(Some(&fit), None))
    }

    fn __repr__(&self) -> String {
        format!(
            "ErrorTable(problem={:?}, rows={})",
            self.inner.problem,
            self.inner.rows.len()
        )
    }
}

/// Coupled Monte Carlo estimate of the strong error at each ladder step.
#[pyfunction]
#[pyo3(signature = (
    problem, model, ladder = None, h_ref = 1e-5, trajectories = 100, p_bar = 2.0, seed = 42,
    truncation = None, scheme = "milstein", threads = None, skip_blowups = false,
    exact_reference = false, coarse_nodes = false,
))]
#[allow(clippy::too_many_arguments)]
fn strong_error_table(
    py: Python<'_>,
    problem: &Problem,
    model: &SubordinatorModel,
    ladder: Option<Vec<f64>>,
    h_ref: f64,
    trajectories: usize,
    p_bar: f64,
    seed: u64,
    truncation: Option<&TruncationConfig>,
    scheme: &str,
    threads: Option<usize>,
    skip_blowups: bool,
    exact_reference: bool,
    coarse_nodes: bool,
) -> PyResult<ErrorTable> {
    let study = StudyConfig {
        ladder: ladder.unwrap_or_else(|| StudyConfig::default().ladder),
        h_ref,
        trajectories,
        p_bar,
        seed,
        scheme: self::scheme(scheme)?,
        threads,
        skip_blowups,
        reference: if exact_reference {
            Reference::Exact
        } else {
            Reference::FinePath
        },
        norm: if coarse_nodes {
            ErrorNorm::CoarseNodes
        } else {
            ErrorNorm::ReferenceNodes
        },
    };
    let cfg = truncation.map_or_else(|| problem.inner.truncation(), |t| t.inner);
    let (p, m) = (problem.inner.clone(), model.inner);
    let inner = py
        .detach(move || mc_harness::strong_error_table(&p, &cfg, &m, &study))
        .map_err(to_py)?;
    Ok(ErrorTable { inner })
}

/// Least-squares fit of `log10 error` on `log10 h`: `(slope, intercept, residuals)`.
#[pyfunction]
fn fit_convergence_order(table: &ErrorTable) -> PyResult<(f64, f64, Vec<f64>)> {
    let fit = mc_harness::fit_convergence_order(&table.inner).map_err(to_py)?;
    Ok((fit.slope, fit.intercept, fit.residuals))
}

#[pyclass(frozen, get_all, module = "tcmilstein")]
struct AssumptionReport {
    assumption: String,
    constant: String,
    samples: usize,
    worst_ratio: f64,
    candidate: f64,
    violated: bool,
    witness_x: Option<Vec<f64>>,
}

/// Samples the assumption ratios on `[-radius, radius]^d`.
///
/// Candidates default to fitted values from an independent calibration
/// sample on `[-fit_radius, fit_radius]^d`, scaled by `margin`; pass
/// `candidate` to use one fixed constant for every assumption instead.
#[pyfunction]
#[pyo3(signature = (problem, radius = 3.0, samples = 100_000, p = 3.0, q = 3.0, seed = 42, margin = 1.5, fit_radius = None, candidate = None))]
#[allow(clippy::too_many_arguments)]
fn check_assumptions(
    problem: &Problem,
    radius: f64,
    samples: usize,
    p: f64,
    q: f64,
    seed: u64,
    margin: f64,
    fit_radius: Option<f64>,
    candidate: Option<f64>,
) -> PyResult<Vec<AssumptionReport>> {
    let mut spec = SamplingSpec {
        radius: fit_radius.unwrap_or(radius),
        samples,
        p,
        q,
        seed,
        candidates: Candidates::uniform(candidate.unwrap_or(0.0)),
    };
    if candidate.is_none() {
        spec.candidates =
            core_problems::fit_candidates(&problem.inner, &spec, margin).map_err(to_py)?;
    }
    spec.radius = radius;
    let reports = core_problems::check_assumptions(&problem.inner, &spec).map_err(to_py)?;
    Ok(reports
        .into_iter()
        .map(|r| AssumptionReport {
            assumption: r.assumption.id().to_string(),
            constant: r.assumption.constant_name().to_string(),
            samples: r.samples,
            worst_ratio: r.worst_ratio,
            candidate: r.candidate,
            violated: r.violated,
            witness_x: r.witness.map(|w| w.x),
        })
        .collect())
}

#[pymodule]
fn tcmilstein(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SubordinatorModel>()?;
    m.add_class::<TruncationConfig>()?;
    m.add_class::<Problem>()?;
    m.add_class::<TimeChangeGrid>()?;
    m.add_class::<Trajectory>()?;
    m.add_class::<ErrorRow>()?;
    m.add_class::<ErrorTable>()?;
    m.add_class::<AssumptionReport>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(strong_error_table, m)?)?;
    m.add_function(wrap_pyfunction!(fit_convergence_order, m)?)?;
    m.add_function(wrap_pyfunction!(check_assumptions, m)?)?;
    Ok(())
}
