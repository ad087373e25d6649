//! Radial truncation of the state before coefficient evaluation.
//!
//! The growth bound is the monomial `μ(u) = c·u^m`, so `μ⁻¹(v) = (v/c)^{1/m}`
//! in closed form. The schedule is `κ(h) = h^{-ε}`, optionally floored at
//! `μ(1)`, and states are projected onto the ball of radius `μ⁻¹(κ(h))`.

use crate::error::{Error, Result};
use crate::scheme::SdeProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationConfig {
    mu_coeff: f64,
    mu_exponent: f64,
    epsilon: f64,
    kappa_floor: bool,
    kappa_hat: f64,
}

impl Default for TruncationConfig {
    /// `μ(u) = 2u⁵`, `ε = 0.02`, no floor.
    fn default() -> Self {
        Self::new(2.0, 5.0, 0.02, false).expect("default truncation is valid")
    }
}

impl TruncationConfig {
    pub fn new(mu_coeff: f64, mu_exponent: f64, epsilon: f64, kappa_floor: bool) -> Result<Self> {
        if !(mu_coeff > 0.0 && mu_coeff.is_finite()) {
            return Err(Error::invalid(format!(
                "growth bound coefficient must be positive, got {mu_coeff}"
            )));
        }
        if !(mu_exponent > 0.0 && mu_exponent.is_finite()) {
            return Err(Error::invalid(format!(
                "growth bound exponent must be positive, got {mu_exponent}"
            )));
        }
        if !(epsilon > 0.0 && epsilon <= 0.25) {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0, 1/4], got {epsilon}"
            )));
        }
        let kappa_hat = 1f64.max(mu_coeff);
        let cfg = Self {
            mu_coeff,
            mu_exponent,
            epsilon,
            kappa_floor,
            kappa_hat,
        };
        // h^{1/4} κ(h) ≤ κ̂ on (0, 1]: h^{1/4-ε} ≤ 1, and the floor branch gives h^{1/4} μ(1) ≤ μ(1).
        debug_assert!(cfg.kappa(1.0) <= cfg.kappa_hat);
        Ok(cfg)
    }

    pub fn with_kappa_floor(mut self, enabled: bool) -> Self {
        self.kappa_floor = enabled;
        self
    }

    pub fn mu_coeff(&self) -> f64 {
        self.mu_coeff
    }

    pub fn mu_exponent(&self) -> f64 {
        self.mu_exponent
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn kappa_floor(&self) -> bool {
        self.kappa_floor
    }

    pub fn kappa_hat(&self) -> f64 {
        self.kappa_hat
    }

    pub fn mu(&self, u: f64) -> f64 {
        self.mu_coeff * u.powf(self.mu_exponent)
    }

    pub fn mu_inverse(&self, v: f64) -> f64 {
        (v / self.mu_coeff).powf(1.0 / self.mu_exponent)
    }

    /// Truncation level `κ(h)`; `h` is assumed to lie in (0, 1].
    pub fn kappa(&self, h: f64) -> f64 {
        let k = h.powf(-self.epsilon);
        if self.kappa_floor {
            k.max(self.mu(1.0))
        } else {
            k
        }
    }

    /// Projection radius `μ⁻¹(κ(h))`.
    pub fn truncation_radius(&self, h: f64) -> Result<f64> {
        check_step(h)?;
        Ok(self.mu_inverse(self.kappa(h)))
    }
}

pub(crate) fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "step size must lie in (0, 1], got {h}"
        )))
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `(|x| ∧ r) x/|x|`, with the zero vector mapped to itself.
pub fn project(x: &[f64], radius: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    project_into(x, radius, &mut out);
    out
}

pub fn project_into(x: &[f64], radius: f64, out: &mut [f64]) {
    let len = norm(x);
    if len <= radius {
        out.copy_from_slice(x);
    } else {
        let s = radius / len;
        for (o, v) in out.iter_mut().zip(x) {
            *o = v * s;
        }
    }
}

/// Coefficients evaluated at the projected state `π_h(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedCoefficients {
    pub drift: Vec<f64>,
    pub diffusion: Vec<f64>,
    /// `G_h^l` for `l = 0..d`.
    pub gradients: Vec<Vec<f64>>,
    /// `Σ_l g_h^l G_h^l`.
    pub lg: Vec<f64>,
}

pub fn truncated_coefficients(
    problem: &SdeProblem,
    cfg: &TruncationConfig,
    h: f64,
    t: f64,
    x: &[f64],
) -> Result<TruncatedCoefficients> {
    let radius = cfg.truncation_radius(h)?;
    problem.check_state(t, x)?;
    let px = project(x, radius);
    let d = problem.dim();
    let mut drift = vec![0.0; d];
    let mut diffusion = vec![0.0; d];
    problem.drift(t, &px, &mut drift);
    problem.diffusion(t, &px, &mut diffusion);
    let mut lg = vec![0.0; d];
    let gradients = (0..d)
        .map(|l| {
            let mut col = vec![0.0; d];
            problem.diffusion_gradient(t, &px, l, &mut col);
            for (acc, c) in lg.iter_mut().zip(&col) {
                *acc += diffusion[l] * c;
            }
            col
        })
        .collect();
    Ok(TruncatedCoefficients {
        drift,
        diffusion,
        gradients,
        lg,
    })
}
