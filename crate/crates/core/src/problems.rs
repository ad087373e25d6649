//! Benchmark problems and sampling diagnostics for the coefficient assumptions.
//!
//! The diagnostics falsify by sampling: a report with `violated == false`
//! only says no counterexample was found on the sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scheme::{lg, Coefficients, ExactSolution, FnCoefficients, SdeProblem};
use crate::truncation::{norm, TruncationConfig};

struct Example1;

impl Coefficients for Example1 {
    fn drift(&self, t: f64, y: &[f64], out: &mut [f64]) {
        out[0] = (t * (1.0 - t)).powf(0.25) * y[0] - y[0].powi(5);
    }
    fn diffusion(&self, t: f64, y: &[f64], out: &mut [f64]) {
        out[0] = t * (1.0 - t) * y[0] * y[0];
    }
    fn diffusion_gradient(&self, t: f64, y: &[f64], _l: usize, out: &mut [f64]) {
        out[0] = 2.0 * t * (1.0 - t) * y[0];
    }
}

/// `dY = ([t(1-t)]^{1/4} Y - Y⁵) dE + t(1-t) Y² dW(E)`, `Y(0) = 1`, `T = 1`.
pub fn example1() -> SdeProblem {
    SdeProblem::new("example1", vec![1.0], 1.0, Example1)
        .expect("valid problem")
        .with_regularity(4.0, 0.25, 1.0)
        .with_truncation(TruncationConfig::default())
}

struct Example2;

impl Coefficients for Example2 {
    fn drift(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let a = (t * (1.0 - t)).powf(0.2);
        out[0] = a * y[0] - y[1].powi(5);
        out[1] = a * y[1] - y[0].powi(5);
    }
    fn diffusion(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let c = (t * (1.0 - t)).sqrt();
        out[0] = c * y[1] * y[1];
        out[1] = c * y[0] * y[0];
    }
    fn diffusion_gradient(&self, t: f64, y: &[f64], l: usize, out: &mut [f64]) {
        let c = (t * (1.0 - t)).sqrt();
        // column l: (∂g¹/∂y^l, ∂g²/∂y^l)
        if l == 0 {
            out[0] = 0.0;
            out[1] = 2.0 * c * y[0];
        } else {
            out[0] = 2.0 * c * y[1];
            out[1] = 0.0;
        }
    }
}

/// Two-dimensional cross-coupled quintic system with `[t(1-t)]^{1/2}` noise on
/// both components and `Y(0) = (1, 1)`.
pub fn example2() -> SdeProblem {
    SdeProblem::new("example2", vec![1.0, 1.0], 1.0, Example2)
        .expect("valid problem")
        .with_regularity(4.0, 0.2, 0.5)
        .with_truncation(TruncationConfig::default())
}

struct GbmExact {
    mu: f64,
    sigma: f64,
    y0: f64,
}

impl ExactSolution for GbmExact {
    fn value(&self, _t: f64, e: f64, w: f64, out: &mut [f64]) {
        out[0] = self.y0 * ((self.mu - 0.5 * self.sigma * self.sigma) * e + self.sigma * w).exp();
    }
}

/// Time-changed geometric Brownian motion `dY = μY dE + σY dW(E)` with its
/// closed-form solution `Y0 exp((μ - σ²/2)E + σW(E))`.
///
/// Growth bound `μ(u) = max(|μ|, |σ|)·u` dominates `|f| ∨ |g| ∨ |G|` for `u ≥ 1`.
pub fn gbm(mu: f64, sigma: f64, y0: f64, horizon: f64) -> Result<SdeProblem> {
    let bound = mu.abs().max(sigma.abs()).max(1e-3);
    let cfg = TruncationConfig::new(bound, 1.0, 0.02, false)?;
    Ok(SdeProblem::new(
        "gbm",
        vec![y0],
        horizon,
        FnCoefficients::new(
            move |_, y, f| f[0] = mu * y[0],
            move |_, y, g| g[0] = sigma * y[0],
            move |_, _, _, c| c[0] = sigma,
        ),
    )?
    .with_regularity(0.0, 1.0, 1.0)
    .with_exact(GbmExact { mu, sigma, y0 })
    .with_truncation(cfg))
}

/// `f(t, y) = y⁵`, `g ≡ 0`: fails the one-sided Lipschitz condition.
pub fn quintic_growth() -> SdeProblem {
    SdeProblem::new(
        "quintic-growth",
        vec![0.1],
        1.0,
        FnCoefficients::new(
            |_, y, f| f[0] = y[0].powi(5),
            |_, _, g| g[0] = 0.0,
            |_, _, _, c| c[0] = 0.0,
        ),
    )
    .expect("valid problem")
    .with_regularity(4.0, 1.0, 1.0)
}

/// `f(t, y) = -y`, `g ≡ 0`.
pub fn linear_contractive() -> SdeProblem {
    SdeProblem::new(
        "linear-contractive",
        vec![1.0],
        1.0,
        FnCoefficients::new(
            |_, y, f| f[0] = -y[0],
            |_, _, g| g[0] = 0.0,
            |_, _, _, c| c[0] = 0.0,
        ),
    )
    .expect("valid problem")
    .with_regularity(0.0, 1.0, 1.0)
}

pub const PROBLEM_NAMES: [&str; 5] = [
    "example1",
    "example2",
    "gbm",
    "quintic-growth",
    "linear-contractive",
];

/// Looks a problem up by name; `gbm` uses μ = 0.1, σ = 0.2, Y0 = 1, T = 1.
pub fn by_name(name: &str) -> Result<SdeProblem> {
    match name {
        "example1" => Ok(example1()),
        "example2" => Ok(example2()),
        "gbm" => gbm(0.1, 0.2, 1.0, 1.0),
        "quintic-growth" => Ok(quintic_growth()),
        "linear-contractive" => Ok(linear_contractive()),
        other => Err(Error::invalid(format!(
            "unknown problem `{other}`; expected one of {}",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Assumption {
    /// Local Lipschitz with polynomial growth (`C`).
    LocalLipschitz,
    /// One-sided Lipschitz / monotonicity (`K`, `p`).
    Monotone,
    /// Coercivity (`K₁`, `q`).
    Coercive,
    /// First and second spatial derivative growth (`M′`).
    DerivativeGrowth,
    /// Temporal Hölder continuity (`H₁`, `H₂`, `γ_f`, `γ_g`).
    TemporalHolder,
}

impl Assumption {
    pub const ALL: [Assumption; 5] = [
        Assumption::LocalLipschitz,
        Assumption::Monotone,
        Assumption::Coercive,
        Assumption::DerivativeGrowth,
        Assumption::TemporalHolder,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Assumption::LocalLipschitz => "lipschitz",
            Assumption::Monotone => "monotone",
            Assumption::Coercive => "coercive",
            Assumption::DerivativeGrowth => "derivative",
            Assumption::TemporalHolder => "holder",
        }
    }

    pub fn constant_name(&self) -> &'static str {
        match self {
            Assumption::LocalLipschitz => "C",
            Assumption::Monotone => "K",
            Assumption::Coercive => "K1",
            Assumption::DerivativeGrowth => "M'",
            Assumption::TemporalHolder => "H",
        }
    }
}

/// Candidate constants the sampled ratios are compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidates {
    pub c: f64,
    pub k: f64,
    pub k1: f64,
    pub m_prime: f64,
    /// Common Hölder constant for drift and diffusion (`H₁ ∨ H₂`).
    pub holder: f64,
}

impl Candidates {
    pub fn uniform(value: f64) -> Self {
        Self {
            c: value,
            k: value,
            k1: value,
            m_prime: value,
            holder: value,
        }
    }

    pub fn get(&self, a: Assumption) -> f64 {
        match a {
            Assumption::LocalLipschitz => self.c,
            Assumption::Monotone => self.k,
            Assumption::Coercive => self.k1,
            Assumption::DerivativeGrowth => self.m_prime,
            Assumption::TemporalHolder => self.holder,
        }
    }

    fn set(&mut self, a: Assumption, v: f64) {
        match a {
            Assumption::LocalLipschitz => self.c = v,
            Assumption::Monotone => self.k = v,
            Assumption::Coercive => self.k1 = v,
            Assumption::DerivativeGrowth => self.m_prime = v,
            Assumption::TemporalHolder => self.holder = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    /// Half-width of the cube `[-R, R]^d` the states are drawn from.
    pub radius: f64,
    pub samples: usize,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    pub candidates: Candidates,
}

impl SamplingSpec {
    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!(
                "box radius must be positive, got {}",
                self.radius
            )));
        }
        if self.samples < 1000 {
            return Err(Error::invalid(format!(
                "at least 1000 samples are required, got {}",
                self.samples
            )));
        }
        if !(self.p > 2.0 && self.q > 2.0) {
            return Err(Error::invalid(format!(
                "moment exponents must exceed 2, got p = {}, q = {}",
                self.p, self.q
            )));
        }
        Ok(())
    }
}

/// Point at which the worst ratio was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub t: f64,
    pub s: Option<f64>,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub assumption: Assumption,
    pub samples: usize,
    pub worst_ratio: f64,
    pub candidate: f64,
    pub violated: bool,
    pub witness: Option<Witness>,
}

struct Sampler<'a> {
    problem: &'a SdeProblem,
    spec: &'a SamplingSpec,
}

impl Sampler<'_> {
    fn point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let r = self.spec.radius;
        (0..self.problem.dim())
            .map(|_| rng.random_range(-r..=r))
            .collect()
    }

    /// Every other pair sits close to the diagonal to probe local behaviour.
    fn pair(&self, i: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let x = self.point(rng);
        let y = if i.is_multiple_of(2) {
            self.point(rng)
        } else {
            let delta = 1e-3 * self.spec.radius;
            x.iter()
                .map(|v| v + rng.random_range(-delta..=delta))
                .collect()
        };
        (x, y)
    }

    fn time(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.random_range(0.0..=self.problem.horizon())
    }

    fn ratio(&self, a: Assumption, rng: &mut ChaCha8Rng, i: usize) -> Option<(f64, Witness)> {
        let p = self.problem;
        let d = p.dim();
        let alpha = p.alpha();
        let eval = |t: f64, x: &[f64]| {
            let (mut f, mut g) = (vec![0.0; d], vec![0.0; d]);
            p.drift(t, x, &mut f);
            p.diffusion(t, x, &mut g);
            (f, g)
        };
        match a {
            Assumption::LocalLipschitz => {
                let t = self.time(rng);
                let (x, y) = self.pair(i, rng);
                let dist = dist(&x, &y);
                if dist == 0.0 {
                    return None;
                }
                let (fx, gx) = eval(t, &x);
                let (fy, gy) = eval(t, &y);
                let lx = lg(p, t, &x).ok()?;
                let ly = lg(p, t, &y).ok()?;
                let num = dist_v(&fx, &fy).max(dist_v(&gx, &gy)).max(dist_v(&lx, &ly));
                let den = (1.0 + norm(&x).powf(alpha) + norm(&y).powf(alpha)) * dist;
                Some((
                    num / den,
                    Witness {
                        t,
                        s: None,
                        x,
                        y: Some(y),
                    },
                ))
            }
            Assumption::Monotone => {
                let t = self.time(rng);
                let (x, y) = self.pair(i, rng);
                let d2 = dist(&x, &y).powi(2);
                if d2 == 0.0 {
                    return None;
                }
                let (fx, gx) = eval(t, &x);
                let (fy, gy) = eval(t, &y);
                let inner: f64 = (0..d).map(|k| (x[k] - y[k]) * (fx[k] - fy[k])).sum();
                let num = inner + (5.0 * self.spec.p - 1.0) * dist_v(&gx, &gy).powi(2);
                Some((
                    num / d2,
                    Witness {
                        t,
                        s: None,
                        x,
                        y: Some(y),
                    },
                ))
            }
            Assumption::Coercive => {
                let t = self.time(rng);
                let x = self.point(rng);
                let (fx, gx) = eval(t, &x);
                let inner: f64 = x.iter().zip(&fx).map(|(a, b)| a * b).sum();
                let num = inner + (5.0 * self.spec.q - 1.0) * norm(&gx).powi(2);
                let den = 1.0 + norm(&x).powi(2);
                Some((
                    num / den,
                    Witness {
                        t,
                        s: None,
                        x,
                        y: None,
                    },
                ))
            }
            Assumption::DerivativeGrowth => {
                let t = self.time(rng);
                let x = self.point(rng);
                let mut worst: f64 = 0.0;
                for which in [Field::Drift, Field::Diffusion] {
                    let (j1, j2) = derivative_norms(p, which, t, &x);
                    worst = worst.max(j1).max(j2);
                }
                let den = 1.0 + norm(&x).powf(alpha + 1.0);
                Some((
                    worst / den,
                    Witness {
                        t,
                        s: None,
                        x,
                        y: None,
                    },
                ))
            }
            Assumption::TemporalHolder => {
                let s = self.time(rng);
                let t = self.time(rng);
                if s == t {
                    return None;
                }
                let x = self.point(rng);
                let (fs, gs) = eval(s, &x);
                let (ft, gt) = eval(t, &x);
                let gap = (s - t).abs();
                let growth = 1.0 + norm(&x).powf(alpha + 1.0);
                let rf = dist_v(&fs, &ft) / (growth * gap.powf(p.gamma_f()));
                let rg = dist_v(&gs, &gt) / (growth * gap.powf(p.gamma_g()));
                Some((
                    rf.max(rg),
                    Witness {
                        t,
                        s: Some(s),
                        x,
                        y: None,
                    },
                ))
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Field {
    Drift,
    Diffusion,
}

/// Frobenius norms of the finite-difference Jacobian and Hessian of `f` or `g`.
fn derivative_norms(p: &SdeProblem, which: Field, t: f64, x: &[f64]) -> (f64, f64) {
    let d = p.dim();
    let eval = |y: &[f64]| {
        let mut out = vec![0.0; d];
        match which {
            Field::Drift => p.drift(t, y, &mut out),
            Field::Diffusion => p.diffusion(t, y, &mut out),
        }
        out
    };
    let shifted = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut y = x.to_vec();
        y[di] += si;
        y[dj] += sj;
        eval(&y)
    };
    let step = 1e-4 * (1.0 + norm(x));
    let center = eval(x);
    let mut jac = 0.0;
    let mut hess = 0.0;
    for a in 0..d {
        let plus = shifted(a, step, a, 0.0);
        let minus = shifted(a, -step, a, 0.0);
        for k in 0..d {
            jac += ((plus[k] - minus[k]) / (2.0 * step)).powi(2);
            hess += ((plus[k] - 2.0 * center[k] + minus[k]) / (step * step)).powi(2);
        }
        for b in 0..a {
            let pp = shifted(a, step, b, step);
            let pm = shifted(a, step, b, -step);
            let mp = shifted(a, -step, b, step);
            let mm = shifted(a, -step, b, -step);
            for k in 0..d {
                let mixed = (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * step * step);
                hess += 2.0 * mixed * mixed;
            }
        }
    }
    (jac.sqrt(), hess.sqrt())
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    dist_v(x, y)
}

fn dist_v(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

fn stream(seed: u64, a: Assumption) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(a as u64);
    rng
}

/// Samples each assumption's defining ratio and compares its maximum with
/// the candidate constant.
pub fn check_assumptions(
    problem: &SdeProblem,
    spec: &SamplingSpec,
) -> Result<Vec<AssumptionReport>> {
    spec.validate()?;
    let sampler = Sampler { problem, spec };
    Ok(Assumption::ALL
        .iter()
        .map(|&a| {
            let mut rng = stream(spec.seed, a);
            let mut worst = f64::NEG_INFINITY;
            let mut witness = None;
            for i in 0..spec.samples {
                if let Some((r, w)) = sampler.ratio(a, &mut rng, i) {
                    if r > worst {
                        worst = r;
                        witness = Some(w);
                    }
                }
            }
            let candidate = spec.candidates.get(a);
            let violated = worst > candidate;
            AssumptionReport {
                assumption: a,
                samples: spec.samples,
                worst_ratio: worst,
                candidate,
                violated,
                witness,
            }
        })
        .collect())
}

/// Fits candidates on an independent calibration sample: the observed
/// maximum ratio times `margin`, floored at zero.
pub fn fit_candidates(
    problem: &SdeProblem,
    spec: &SamplingSpec,
    margin: f64,
) -> Result<Candidates> {
    let calibration = SamplingSpec {
        seed: spec.seed ^ 0x9e37_79b9_7f4a_7c15,
        candidates: Candidates::uniform(f64::INFINITY),
        ..spec.clone()
    };
    let reports = check_assumptions(problem, &calibration)?;
    let mut out = Candidates::uniform(0.0);
    for r in reports {
        out.set(r.assumption, (r.worst_ratio * margin).max(0.0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(radius: f64, samples: usize, candidates: Candidates) -> SamplingSpec {
        SamplingSpec {
            radius,
            samples,
            p: 3.0,
            q: 3.0,
            seed: 1,
            candidates,
        }
    }

    #[test]
    fn example_metadata() {
        let p = example1();
        let mut f = [0.0];
        p.drift(0.5, &[1.0], &mut f);
        assert!((f[0] - (0.25f64.powf(0.25) - 1.0)).abs() < 1e-15);
        assert!((f[0] + 0.292893).abs() < 1e-6);
        for y in [-2.0, 0.3, 5.0] {
            let mut g = [1.0];
            p.diffusion(0.0, &[y], &mut g);
            assert_eq!(g[0], 0.0);
        }
        assert_eq!(p.alpha(), 4.0);
        assert_eq!((p.gamma_f(), p.gamma_g()), (0.25, 1.0));

        let p = example2();
        assert_eq!((p.gamma_f(), p.gamma_g()), (0.2, 0.5));
        assert_eq!(p.y0(), &[1.0, 1.0]);
        let mut f = [1.0; 2];
        p.drift(0.5, &[0.0, 0.0], &mut f);
        assert_eq!(f, [0.0, 0.0]);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for p in [example1(), example2(), gbm(0.1, 0.2, 1.0, 1.0).unwrap()] {
            let m = p.gradient_mismatch(3.0, 500, 4);
            assert!(m < 1e-6, "{}: {m}", p.name());
        }
    }

    #[test]
    fn lookup() {
        for name in PROBLEM_NAMES {
            assert_eq!(by_name(name).unwrap().name(), name);
        }
        assert!(by_name("nope").is_err());
    }

    #[test]
    fn spec_validation() {
        let p = example1();
        let c = Candidates::uniform(1.0);
        assert!(check_assumptions(&p, &spec(0.0, 1000, c)).is_err());
        assert!(check_assumptions(&p, &spec(1.0, 10, c)).is_err());
        let mut s = spec(1.0, 1000, c);
        s.p = 2.0;
        assert!(check_assumptions(&p, &s).is_err());
    }

    #[test]
    fn contractive_drift_passes_unit_constants() {
        let reports = check_assumptions(
            &linear_contractive(),
            &spec(3.0, 2000, Candidates::uniform(1.0)),
        )
        .unwrap();
        for r in &reports {
            assert!(!r.violated, "{:?}", r);
        }
    }

    #[test]
    fn quintic_growth_breaks_monotonicity() {
        let reports = check_assumptions(
            &quintic_growth(),
            &spec(3.0, 20_000, Candidates::uniform(100.0)),
        )
        .unwrap();
        let r = &reports[1];
        assert_eq!(r.assumption, Assumption::Monotone);
        assert!(r.violated);
        let w = r.witness.as_ref().unwrap();
        assert!(w.x[0].abs() > 2.0 && w.x[0].is_finite());
        // Along x = y + δ the ratio is ≈ 5x⁴; at the witness it must be close to that.
        assert!(r.worst_ratio <= 5.0 * 81.0 + 1.0);
    }

    #[test]
    fn reports_are_deterministic_and_monotone_in_samples() {
        let p = example2();
        let c = Candidates::uniform(1e9);
        let a = check_assumptions(&p, &spec(3.0, 2000, c)).unwrap();
        let b = check_assumptions(&p, &spec(3.0, 2000, c)).unwrap();
        assert_eq!(a, b);
        let more = check_assumptions(&p, &spec(3.0, 4000, c)).unwrap();
        for (x, y) in a.iter().zip(&more) {
            assert!(y.worst_ratio >= x.worst_ratio);
        }
    }
}
