//! Problem definition and the truncated Milstein / Euler–Maruyama steppers.
//!
//! Along a clock grid the internal-time increment is always `h` and the
//! Wiener increment is `W((n+1)h) - W(nh)`, so one step reads
//!
//! ```text
//! X_{n+1} = X_n + f_h(τ_n, X_n) h + g_h(τ_n, X_n) ΔW_n + ½ Lg_h(τ_n, X_n) (ΔW_n² - h)
//! ```

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, OverflowSite, Result};
use crate::subordinator::TimeChangeGrid;
use crate::truncation::{check_step, project_into, TruncationConfig};

/// Drift `f`, diffusion `g` (one noise column) and the columns
/// `G^l = (∂g¹/∂y^l, …, ∂g^d/∂y^l)` of its Jacobian.
pub trait Coefficients: Send + Sync {
    fn drift(&self, t: f64, y: &[f64], out: &mut [f64]);
    fn diffusion(&self, t: f64, y: &[f64], out: &mut [f64]);
    fn diffusion_gradient(&self, t: f64, y: &[f64], l: usize, out: &mut [f64]);
}

/// Closed-form solution expressed through the clock: `t` is real time,
/// `e = E(t)` and `w = W(E(t))`.
pub trait ExactSolution: Send + Sync {
    fn value(&self, t: f64, e: f64, w: f64, out: &mut [f64]);
}

type VecFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
type GradFn = dyn Fn(f64, &[f64], usize, &mut [f64]) + Send + Sync;

/// Coefficients given as closures.
pub struct FnCoefficients {
    drift: Box<VecFn>,
    diffusion: Box<VecFn>,
    gradient: Box<GradFn>,
}

impl FnCoefficients {
    pub fn new(
        drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        gradient: impl Fn(f64, &[f64], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
            gradient: Box::new(gradient),
        }
    }
}

impl Coefficients for FnCoefficients {
    fn drift(&self, t: f64, y: &[f64], out: &mut [f64]) {
        (self.drift)(t, y, out)
    }
    fn diffusion(&self, t: f64, y: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, y, out)
    }
    fn diffusion_gradient(&self, t: f64, y: &[f64], l: usize, out: &mut [f64]) {
        (self.gradient)(t, y, l, out)
    }
}

/// A time-changed SDE `dY = f(t,Y) dE(t) + g(t,Y) dW(E(t))` on `[0, T]`.
#[derive(Clone)]
pub struct SdeProblem {
    name: String,
    y0: Vec<f64>,
    horizon: f64,
    alpha: f64,
    gamma_f: f64,
    gamma_g: f64,
    coefficients: Arc<dyn Coefficients>,
    exact: Option<Arc<dyn ExactSolution>>,
    truncation: Option<TruncationConfig>,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem")
            .field("name", &self.name)
            .field("y0", &self.y0)
            .field("horizon", &self.horizon)
            .field("alpha", &self.alpha)
            .field("gamma_f", &self.gamma_f)
            .field("gamma_g", &self.gamma_g)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl SdeProblem {
    pub fn new(
        name: impl Into<String>,
        y0: Vec<f64>,
        horizon: f64,
        coefficients: impl Coefficients + 'static,
    ) -> Result<Self> {
        if y0.is_empty() {
            return Err(Error::invalid("state dimension must be at least 1"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self {
            name: name.into(),
            y0,
            horizon,
            alpha: 1.0,
            gamma_f: 1.0,
            gamma_g: 1.0,
            coefficients: Arc::new(coefficients),
            exact: None,
            truncation: None,
        })
    }

    /// Polynomial growth exponent and temporal Hölder exponents.
    pub fn with_regularity(mut self, alpha: f64, gamma_f: f64, gamma_g: f64) -> Self {
        self.alpha = alpha;
        self.gamma_f = gamma_f;
        self.gamma_g = gamma_g;
        self
    }

    pub fn with_exact(mut self, exact: impl ExactSolution + 'static) -> Self {
        self.exact = Some(Arc::new(exact));
        self
    }

    /// Growth bound suited to this problem's coefficients.
    pub fn with_truncation(mut self, cfg: TruncationConfig) -> Self {
        self.truncation = Some(cfg);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.y0.len()
    }
    pub fn y0(&self) -> &[f64] {
        &self.y0
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn gamma_f(&self) -> f64 {
        self.gamma_f
    }
    pub fn gamma_g(&self) -> f64 {
        self.gamma_g
    }
    pub fn exact(&self) -> Option<&dyn ExactSolution> {
        self.exact.as_deref()
    }

    /// The problem's recommended truncation, or the default `μ(u) = 2u⁵`.
    pub fn truncation(&self) -> TruncationConfig {
        self.truncation.unwrap_or_default()
    }

    pub fn drift(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self.coefficients.drift(t, y, out)
    }
    pub fn diffusion(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self.coefficients.diffusion(t, y, out)
    }
    pub fn diffusion_gradient(&self, t: f64, y: &[f64], l: usize, out: &mut [f64]) {
        self.coefficients.diffusion_gradient(t, y, l, out)
    }

    pub(crate) fn check_state(&self, t: f64, y: &[f64]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::invalid(format!(
                "state has dimension {}, problem expects {}",
                y.len(),
                self.dim()
            )));
        }
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::domain(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Largest relative mismatch between the analytic `G^l` and central
    /// differences of `g`, over `samples` points in `[0,T] × [-radius, radius]^d`.
    pub fn gradient_mismatch(&self, radius: f64, samples: usize, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let (mut gp, mut gm, mut col) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let t = rng.random_range(0.0..=self.horizon);
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..=radius)).collect();
            for l in 0..d {
                let step = 1e-6 * (1.0 + y[l].abs());
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[l] += step;
                ym[l] -= step;
                self.diffusion(t, &yp, &mut gp);
                self.diffusion(t, &ym, &mut gm);
                self.diffusion_gradient(t, &y, l, &mut col);
                let scale = 1.0 + crate::truncation::norm(&col);
                for i in 0..d {
                    let fd = (gp[i] - gm[i]) / (yp[l] - ym[l]);
                    worst = worst.max((fd - col[i]).abs() / scale);
                }
            }
        }
        worst
    }
}

/// `Lg(t, y) = Σ_l g^l(t, y) G^l(t, y)`.
pub fn lg(problem: &SdeProblem, t: f64, y: &[f64]) -> Result<Vec<f64>> {
    problem.check_state(t, y)?;
    let d = problem.dim();
    let mut g = vec![0.0; d];
    let mut col = vec![0.0; d];
    let mut out = vec![0.0; d];
    problem.diffusion(t, y, &mut g);
    for (l, gl) in g.iter().enumerate() {
        problem.diffusion_gradient(t, y, l, &mut col);
        for (o, c) in out.iter_mut().zip(&col) {
            *o += gl * c;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    TruncatedMilstein,
    TruncatedEm,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::TruncatedMilstein => "milstein",
            Scheme::TruncatedEm => "em",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "milstein" => Ok(Scheme::TruncatedMilstein),
            "em" => Ok(Scheme::TruncatedEm),
            other => Err(Error::invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Reusable one-step integrator with its scratch buffers.
pub struct Stepper<'a> {
    problem: &'a SdeProblem,
    scheme: Scheme,
    h: f64,
    radius: f64,
    projected: Vec<f64>,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    column: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        problem: &'a SdeProblem,
        cfg: &TruncationConfig,
        h: f64,
        scheme: Scheme,
    ) -> Result<Self> {
        let radius = cfg.truncation_radius(h)?;
        Ok(Self::with_radius(problem, h, radius, scheme))
    }

    /// Stepper with an explicit projection radius (`f64::INFINITY` disables truncation).
    pub fn with_radius(problem: &'a SdeProblem, h: f64, radius: f64, scheme: Scheme) -> Self {
        let d = problem.dim();
        Self {
            problem,
            scheme,
            h,
            radius,
            projected: vec![0.0; d],
            drift: vec![0.0; d],
            diffusion: vec![0.0; d],
            column: vec![0.0; d],
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Writes `X_{n+1}` into `out`. The caller reports the step index on overflow.
    pub fn step(&mut self, tau: f64, x: &[f64], dw: f64, out: &mut [f64]) -> bool {
        let h = self.h;
        project_into(x, self.radius, &mut self.projected);
        let px = &self.projected;
        self.problem.drift(tau, px, &mut self.drift);
        self.problem.diffusion(tau, px, &mut self.diffusion);
        for i in 0..out.len() {
            out[i] = x[i] + self.drift[i] * h + self.diffusion[i] * dw;
        }
        if self.scheme == Scheme::TruncatedMilstein {
            let correction = 0.5 * (dw * dw - h);
            for l in 0..out.len() {
                let gl = self.diffusion[l];
                if gl == 0.0 {
                    continue;
                }
                self.problem
                    .diffusion_gradient(tau, px, l, &mut self.column);
                for (o, c) in out.iter_mut().zip(&self.column) {
                    *o += correction * gl * c;
                }
            }
        }
        out.iter().all(|v| v.is_finite())
    }
}

fn single_step(
    problem: &SdeProblem,
    cfg: &TruncationConfig,
    h: f64,
    tau_n: f64,
    x: &[f64],
    dw: f64,
    scheme: Scheme,
) -> Result<Vec<f64>> {
    check_step(h)?;
    problem.check_state(tau_n, x)?;
    let mut stepper = Stepper::new(problem, cfg, h, scheme)?;
    let mut out = vec![0.0; x.len()];
    if stepper.step(tau_n, x, dw, &mut out) {
        Ok(out)
    } else {
        Err(Error::NumericOverflow(OverflowSite {
            trajectory: None,
            step: 0,
        }))
    }
}

/// One truncated Milstein step from `(τ_n, X_n)` with Wiener increment `dw`.
pub fn milstein_step(
    problem: &SdeProblem,
    cfg: &TruncationConfig,
    h: f64,
    tau_n: f64,
    x: &[f64],
    dw: f64,
) -> Result<Vec<f64>> {
    single_step(problem, cfg, h, tau_n, x, dw, Scheme::TruncatedMilstein)
}

/// One truncated Euler–Maruyama step; the Itô correction is omitted.
pub fn em_step(
    problem: &SdeProblem,
    cfg: &TruncationConfig,
    h: f64,
    tau_n: f64,
    x: &[f64],
    dw: f64,
) -> Result<Vec<f64>> {
    single_step(problem, cfg, h, tau_n, x, dw, Scheme::TruncatedEm)
}

/// Wiener increments over internal-time cells `[nh, (n+1)h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    h: f64,
    increments: Vec<f64>,
}

impl WienerIncrements {
    pub fn new(h: f64, increments: Vec<f64>) -> Self {
        Self { h, increments }
    }

    pub fn sample<R: rand::Rng + ?Sized>(h: f64, count: usize, rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let sd = h.sqrt();
        let increments = (0..count)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect();
        Self { h, increments }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.increments
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }
}

/// Discrete solution `X_{τ_0} … X_{τ_N}`; `X̄` is its piecewise-constant extension.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeChangeGrid,
    dim: usize,
    states: Vec<f64>,
    scheme: Scheme,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeChangeGrid {
        &self.grid
    }
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    /// Number of stored states, `N + 1`.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.dim..(n + 1) * self.dim]
    }
    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }
    /// `X̄(t)` for `t ∈ [0, T]`.
    pub fn value_at(&self, t: f64) -> Result<&[f64]> {
        self.grid.evaluate_inverse(t)?;
        Ok(self.state(self.grid.node_index(t)))
    }
}

/// Iterates the stepper over `n = 0..N-1` from `X_0 = Y0`.
pub fn simulate_path(
    problem: &SdeProblem,
    cfg: &TruncationConfig,
    grid: &TimeChangeGrid,
    wiener: &WienerIncrements,
    scheme: Scheme,
) -> Result<Trajectory> {
    let n = grid.n();
    if wiener.len() != n {
        return Err(Error::invalid(format!(
            "grid has {n} steps but {} Wiener increments were supplied",
            wiener.len()
        )));
    }
    if (wiener.h() - grid.h()).abs() > 1e-12 * grid.h() {
        return Err(Error::invalid(format!(
            "Wiener step {} does not match grid step {}",
            wiener.h(),
            grid.h()
        )));
    }
    let mut stepper = Stepper::new(problem, cfg, grid.h(), scheme)?;
    let states = integrate(&mut stepper, problem.y0(), grid.tau(), wiener.as_slice())?;
    Ok(Trajectory {
        grid: grid.clone(),
        dim: problem.dim(),
        states,
        scheme,
    })
}

/// Flattened states `X_0 … X_n` for `n = dw.len()` steps along `tau`.
pub(crate) fn integrate(
    stepper: &mut Stepper<'_>,
    y0: &[f64],
    tau: &[f64],
    dw: &[f64],
) -> Result<Vec<f64>> {
    let d = y0.len();
    let mut states = Vec::with_capacity((dw.len() + 1) * d);
    states.extend_from_slice(y0);
    let mut next = vec![0.0; d];
    for (n, &w) in dw.iter().enumerate() {
        let x = &states[n * d..(n + 1) * d];
        if !stepper.step(tau[n], x, w, &mut next) {
            return Err(Error::NumericOverflow(OverflowSite {
                trajectory: None,
                step: n,
            }));
        }
        states.extend_from_slice(&next);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;
    use crate::subordinator::SubordinatorModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_noise(c: f64) -> SdeProblem {
        SdeProblem::new(
            "constant-noise",
            vec![0.7],
            1.0,
            FnCoefficients::new(
                |_, _, f| f[0] = 0.0,
                move |_, _, g| g[0] = c,
                |_, _, _, col| col[0] = 0.0,
            ),
        )
        .unwrap()
    }

    fn drift_only() -> SdeProblem {
        SdeProblem::new(
            "drift-only",
            vec![0.4],
            1.0,
            FnCoefficients::new(
                |t, y, f| f[0] = t - y[0],
                |_, _, g| g[0] = 0.0,
                |_, _, _, col| col[0] = 0.0,
            ),
        )
        .unwrap()
    }

    #[test]
    fn lg_examples() {
        assert_eq!(lg(&constant_noise(0.3), 0.2, &[5.0]).unwrap(), vec![0.0]);
        let v = lg(&problems::example1(), 0.5, &[1.0]).unwrap();
        assert!((v[0] - 0.125).abs() < 1e-15);
        let v = lg(&problems::example2(), 0.5, &[1.0, 1.0]).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lg_matches_finite_differences() {
        let p = problems::example2();
        let (t, y) = (0.3, [0.7, -0.4]);
        let analytic = lg(&p, t, &y).unwrap();
        let mut g = [0.0; 2];
        p.diffusion(t, &y, &mut g);
        let mut fd = [0.0; 2];
        for l in 0..2 {
            let step = 1e-6;
            let (mut yp, mut ym) = (y, y);
            yp[l] += step;
            ym[l] -= step;
            let (mut gp, mut gm) = ([0.0; 2], [0.0; 2]);
            p.diffusion(t, &yp, &mut gp);
            p.diffusion(t, &ym, &mut gm);
            for i in 0..2 {
                fd[i] += g[l] * (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        for i in 0..2 {
            assert!((fd[i] - analytic[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn trivial_steps() {
        let cfg = TruncationConfig::default();
        let p = drift_only();
        let m = milstein_step(&p, &cfg, 0.1, 0.5, &[0.4], 0.3).unwrap();
        let e = em_step(&p, &cfg, 0.1, 0.5, &[0.4], 0.3).unwrap();
        assert_eq!(m, vec![0.4 + (0.5 - 0.4) * 0.1]);
        assert_eq!(m, e);

        let p = constant_noise(0.3);
        let big = TruncationConfig::new(0.3, 1.0, 0.02, false).unwrap();
        let m = milstein_step(&p, &big, 0.1, 0.5, &[0.7], -0.2).unwrap();
        assert_eq!(m, vec![0.7 + 0.3 * -0.2]);
    }

    #[test]
    fn example1_hand_values() {
        let p = problems::example1();
        let cfg = TruncationConfig::default();
        let f = 0.25f64.powf(0.25) * 0.5 - 0.5f64.powi(5);
        let m = milstein_step(&p, &cfg, 0.01, 0.5, &[0.5], 0.1).unwrap()[0];
        let e = em_step(&p, &cfg, 0.01, 0.5, &[0.5], 0.1).unwrap()[0];
        let expect = 0.5 + f * 0.01 + 0.0625 * 0.1;
        assert!((m - expect).abs() <= 1e-12 * expect);
        assert!((m - 0.509473).abs() < 5e-7);
        assert!((e - m).abs() < 1e-15);

        let e = em_step(&p, &cfg, 0.01, 0.5, &[0.5], 0.2).unwrap()[0];
        let m = milstein_step(&p, &cfg, 0.01, 0.5, &[0.5], 0.2).unwrap()[0];
        assert!((e - 0.515723).abs() < 5e-7, "{e}");
        assert!((m - 0.515957).abs() < 5e-7, "{m}");
        assert!((m - e - 0.5 * 0.015625 * 0.03).abs() < 1e-15);
    }

    #[test]
    fn step_errors() {
        let p = problems::example1();
        let cfg = TruncationConfig::default();
        assert!(milstein_step(&p, &cfg, 0.0, 0.5, &[0.5], 0.1).is_err());
        assert!(milstein_step(&p, &cfg, 0.1, 1.5, &[0.5], 0.1).is_err());
        assert!(milstein_step(&p, &cfg, 0.1, 0.5, &[0.5, 1.0], 0.1).is_err());
        assert!(matches!(
            milstein_step(&p, &cfg, 0.1, 0.5, &[0.5], f64::INFINITY),
            Err(Error::NumericOverflow(_))
        ));
    }

    #[test]
    fn zero_coefficients_keep_initial_value() {
        let p = SdeProblem::new(
            "still",
            vec![0.3, -0.2],
            1.0,
            FnCoefficients::new(
                |_, _, f| f.fill(0.0),
                |_, _, g| g.fill(0.0),
                |_, _, _, c| c.fill(0.0),
            ),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = SubordinatorModel::stable(0.9).unwrap();
        let grid = TimeChangeGrid::build(&model, 0.01, 1.0, &mut rng).unwrap();
        let w = WienerIncrements::sample(0.01, grid.n(), &mut rng);
        let traj = simulate_path(
            &p,
            &TruncationConfig::default(),
            &grid,
            &w,
            Scheme::TruncatedMilstein,
        )
        .unwrap();
        assert_eq!(traj.len(), grid.n() + 1);
        assert!(traj.states().all(|s| s == [0.3, -0.2]));
    }

    #[test]
    fn increment_count_mismatch() {
        let p = problems::example1();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid = TimeChangeGrid::build(&SubordinatorModel::deterministic(), 0.25, 1.0, &mut rng)
            .unwrap();
        let w = WienerIncrements::new(0.25, vec![0.0; 3]);
        assert!(matches!(
            simulate_path(
                &p,
                &TruncationConfig::default(),
                &grid,
                &w,
                Scheme::TruncatedMilstein
            ),
            Err(Error::InvalidArgument(_))
        ));
        let w = WienerIncrements::new(0.1, vec![0.0; 4]);
        assert!(simulate_path(
            &p,
            &TruncationConfig::default(),
            &grid,
            &w,
            Scheme::TruncatedMilstein
        )
        .is_err());
    }

    #[test]
    fn classical_milstein_on_gbm() {
        let (mu, sigma) = (0.1, 0.2);
        let p = problems::gbm(mu, sigma, 1.0, 1.0).unwrap();
        let cfg = p.truncation();
        let h = 1.0 / 64.0;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let grid =
            TimeChangeGrid::build(&SubordinatorModel::deterministic(), h, 1.0, &mut rng).unwrap();
        let w = WienerIncrements::sample(h, grid.n(), &mut rng);
        let traj = simulate_path(&p, &cfg, &grid, &w, Scheme::TruncatedMilstein).unwrap();
        // Textbook Milstein for dX = μX dt + σX dW.
        let mut x = 1.0;
        for (n, dw) in w.as_slice().iter().enumerate() {
            assert_eq!(traj.state(n)[0], x);
            x = x + mu * x * h + sigma * x * dw + 0.5 * sigma * sigma * x * (dw * dw - h);
        }
        assert!((traj.state(grid.n())[0] - x).abs() <= 1e-14 * x);
    }

    #[test]
    fn reproducible_path() {
        let p = problems::example1();
        let cfg = TruncationConfig::default();
        let model = SubordinatorModel::stable(0.9).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let grid = TimeChangeGrid::build(&model, 0.1, 1.0, &mut rng).unwrap();
            let w = WienerIncrements::sample(0.1, grid.n(), &mut rng);
            simulate_path(&p, &cfg, &grid, &w, Scheme::TruncatedMilstein).unwrap()
        };
        let (a, b) = (run(), run());
        assert!(a.states().all(|s| s[0].is_finite()));
        assert_eq!(a, b);
        assert_eq!(a.value_at(0.0).unwrap(), &[1.0]);
    }

    #[test]
    fn truncation_is_local() {
        // Paths that never leave the ball are unaffected by the projection.
        let cfg = TruncationConfig::default();
        let model = SubordinatorModel::stable(0.9).unwrap();
        let p_inside = SdeProblem::new(
            "example1-from-half",
            vec![0.5],
            1.0,
            FnCoefficients::new(
                |t, y, f| f[0] = (t * (1.0 - t)).powf(0.25) * y[0] - y[0].powi(5),
                |t, y, g| g[0] = t * (1.0 - t) * y[0] * y[0],
                |t, y, _, c| c[0] = 2.0 * t * (1.0 - t) * y[0],
            ),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = TimeChangeGrid::build(&model, 0.01, 1.0, &mut rng).unwrap();
        let w = WienerIncrements::sample(0.01, grid.n(), &mut rng);
        let truncated =
            simulate_path(&p_inside, &cfg, &grid, &w, Scheme::TruncatedMilstein).unwrap();
        let radius = cfg.truncation_radius(0.01).unwrap();
        assert!(truncated.states().all(|s| s[0].abs() <= radius));
        let mut free =
            Stepper::with_radius(&p_inside, 0.01, f64::INFINITY, Scheme::TruncatedMilstein);
        let raw = integrate(&mut free, &[0.5], grid.tau(), w.as_slice()).unwrap();
        assert!(truncated.states().zip(raw.iter()).all(|(a, b)| a[0] == *b));
    }
}
