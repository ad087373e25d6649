//! Driving subordinator `D(t)` and its discretised inverse `E_h(t)`.
//!
//! For a step size `h` the clock is sampled as `D_h(t_i) = D_h(t_{i-1}) + Δ_i`
//! with i.i.d. `Δ_i ~ D(h)`. The iteration stops at the first `N` with
//! `T ∈ [D_h(t_N), D_h(t_{N+1}))`, and the inverse is
//!
//! ```text
//! E_h(t) = (min{n : D_h(t_n) > t} - 1) h
//! ```
//!
//! so that `E_h(τ_i) = i h` at every node `τ_i = D_h(t_i)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// Default cap on the number of grid nodes before construction is abandoned.
pub const DEFAULT_MAX_NODES: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubordinatorFamily {
    /// One-sided α-stable subordinator, `E e^{-λD(t)} = e^{-t·scale·λ^α}`.
    Stable { alpha: f64 },
    /// `D(t) = t`; collapses the method to the classical truncated scheme.
    Deterministic,
}

/// A strictly increasing Lévy process started at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubordinatorModel {
    family: SubordinatorFamily,
    scale: f64,
}

impl SubordinatorModel {
    pub fn stable(alpha: f64) -> Result<Self> {
        Self::stable_with_scale(alpha, 1.0)
    }

    pub fn stable_with_scale(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!(
                "stable index must lie in (0, 1), got {alpha}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!(
                "subordinator scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            family: SubordinatorFamily::Stable { alpha },
            scale,
        })
    }

    pub fn deterministic() -> Self {
        Self {
            family: SubordinatorFamily::Deterministic,
            scale: 1.0,
        }
    }

    pub fn family(&self) -> SubordinatorFamily {
        self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Stability index, `None` for the deterministic clock.
    pub fn alpha(&self) -> Option<f64> {
        match self.family {
            SubordinatorFamily::Stable { alpha } => Some(alpha),
            SubordinatorFamily::Deterministic => None,
        }
    }

    /// Laplace transform `E[exp(-λ D(h))]` of an increment.
    pub fn laplace_transform(&self, h: f64, lambda: f64) -> f64 {
        match self.family {
            SubordinatorFamily::Stable { alpha } => (-h * self.scale * lambda.powf(alpha)).exp(),
            SubordinatorFamily::Deterministic => (-lambda * h).exp(),
        }
    }

    /// Draws one increment distributed as `D(h)`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, h: f64, rng: &mut R) -> Result<f64> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!(
                "step size must be positive, got {h}"
            )));
        }
        Ok(self.draw(h, rng))
    }

    /// Unchecked draw; `h` must already be validated.
    pub(crate) fn draw<R: Rng + ?Sized>(&self, h: f64, rng: &mut R) -> f64 {
        match self.family {
            SubordinatorFamily::Deterministic => h,
            SubordinatorFamily::Stable { alpha } => {
                let factor = (h * self.scale).powf(1.0 / alpha);
                loop {
                    let delta = factor * standard_positive_stable(alpha, rng);
                    // Underflow to zero would break strict monotonicity of D.
                    if delta > 0.0 && delta.is_finite() {
                        return delta;
                    }
                }
            }
        }
    }

    pub fn describe(&self) -> String {
        match self.family {
            SubordinatorFamily::Stable { alpha } if self.scale == 1.0 => {
                format!("stable(alpha={alpha})")
            }
            SubordinatorFamily::Stable { alpha } => {
                format!("stable(alpha={alpha},scale={})", self.scale)
            }
            SubordinatorFamily::Deterministic => "deterministic".to_string(),
        }
    }
}

/// Kanter's representation of a one-sided stable variable with
/// `E e^{-λS} = e^{-λ^α}`: `U ~ U(0, π)`, `W ~ Exp(1)`.
fn standard_positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u * PI;
        }
    };
    let w: f64 = Exp1.sample(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// Monte Carlo comparison of the empirical Laplace transform of `D(h)`
/// against its closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceCheck {
    pub h: f64,
    pub lambda: f64,
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    pub target: f64,
}

impl LaplaceCheck {
    /// Deviation in standard errors.
    pub fn z_score(&self) -> f64 {
        if self.stderr > 0.0 {
            (self.mean - self.target).abs() / self.stderr
        } else if self.mean == self.target {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Within three standard errors.
    pub fn passed(&self) -> bool {
        self.z_score() <= 3.0
    }
}

/// Estimates `E[exp(-λ D(h))]` from `samples` draws.
pub fn laplace_check<R: Rng + ?Sized>(
    model: &SubordinatorModel,
    h: f64,
    lambda: f64,
    samples: usize,
    rng: &mut R,
) -> Result<LaplaceCheck> {
    if samples < 2 {
        return Err(Error::invalid("at least two samples are required"));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("λ must be positive, got {lambda}")));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let v = (-lambda * model.sample_increment(h, rng)?).exp();
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(LaplaceCheck {
        h,
        lambda,
        samples,
        mean,
        stderr: (var / n).sqrt(),
        target: model.laplace_transform(h, lambda),
    })
}

/// Jump times `τ_0 = 0 < τ_1 < … < τ_{N+1}` of the discretised clock,
/// with `τ_N ≤ T < τ_{N+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangeGrid {
    h: f64,
    horizon: f64,
    tau: Vec<f64>,
}

impl TimeChangeGrid {
    /// Validates a node sequence against the grid invariants.
    pub fn from_nodes(h: f64, horizon: f64, tau: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::invalid(format!(
                "step size must be positive, got {h}"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if tau.len() < 2 || tau[0] != 0.0 {
            return Err(Error::invalid(
                "grid must start at 0 and contain at least two nodes",
            ));
        }
        if let Some(i) = tau.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "grid nodes not strictly increasing at index {}",
                i + 1
            )));
        }
        let n = tau.len() - 2;
        if !(tau[n] <= horizon && horizon < tau[n + 1]) {
            return Err(Error::invalid(format!(
                "stopping rule violated: T = {horizon} not in [{}, {})",
                tau[n],
                tau[n + 1]
            )));
        }
        Ok(Self { h, horizon, tau })
    }

    /// Runs the clock recursion with a node budget of [`DEFAULT_MAX_NODES`].
    pub fn build<R: Rng + ?Sized>(
        model: &SubordinatorModel,
        h: f64,
        horizon: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build_with_limit(model, h, horizon, DEFAULT_MAX_NODES, rng)
    }

    pub fn build_with_limit<R: Rng + ?Sized>(
        model: &SubordinatorModel,
        h: f64,
        horizon: f64,
        max_nodes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::invalid(format!(
                "step size must lie in (0, 1], got {h}"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let mut tau = vec![0.0];
        let mut current = 0.0;
        while current <= horizon {
            if tau.len() >= max_nodes {
                return Err(Error::ResourceLimit(format!(
                    "clock did not pass T = {horizon} within {max_nodes} nodes"
                )));
            }
            current += model.draw(h, rng);
            tau.push(current);
        }
        Self::from_nodes(h, horizon, tau)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// All nodes `τ_0 … τ_{N+1}`.
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// Index `N` of the last node not beyond the horizon.
    pub fn n(&self) -> usize {
        self.tau.len() - 2
    }

    /// Internal clock value at node `i`, `E_h(τ_i) = i h`.
    pub fn internal_time(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    /// Evaluates `E_h(t)` for `t ∈ [0, T]`.
    pub fn evaluate_inverse(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::domain(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(self.internal_time(self.node_index(t)))
    }

    /// Index `i` with `τ_i ≤ t < τ_{i+1}`, for `t ≥ 0`.
    pub fn node_index(&self, t: f64) -> usize {
        self.tau.partition_point(|&s| s <= t).saturating_sub(1)
    }
}
