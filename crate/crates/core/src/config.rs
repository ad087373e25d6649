//! Run configuration for the `tcm` binary.
//!
//! Files hold flat `section.key = value` lines; `#` starts a comment. Values
//! are layered as defaults, then the file, then `TCM_SEED`, then command-line
//! flags. Every key can be set from a flag.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::mc_harness::{step_multiple, ErrorNorm, Reference, StudyConfig};
use crate::problems;
use crate::scheme::{Scheme, SdeProblem};
use crate::subordinator::SubordinatorModel;
use crate::truncation::TruncationConfig;

pub const SEED_ENV: &str = "TCM_SEED";

pub const KEYS: [&str; 20] = [
    "problem.name",
    "subordinator.family",
    "subordinator.alpha",
    "subordinator.scale",
    "run.ladder",
    "run.h_ref",
    "run.h",
    "run.m",
    "run.p_bar",
    "run.seed",
    "run.threads",
    "run.scheme",
    "run.skip_blowups",
    "run.reference",
    "run.norm",
    "run.output_dir",
    "trunc.mu_coeff",
    "trunc.mu_exponent",
    "trunc.epsilon",
    "trunc.kappa_floor",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Stable,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub family: Family,
    pub alpha: f64,
    pub scale: f64,
    pub ladder: Vec<f64>,
    pub h_ref: f64,
    /// Step for single-path simulation.
    pub h: f64,
    pub trajectories: usize,
    pub p_bar: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub scheme: Scheme,
    pub skip_blowups: bool,
    pub reference: Reference,
    pub norm: ErrorNorm,
    pub output_dir: PathBuf,
    /// `None` falls back to the problem's growth bound.
    pub mu_coeff: Option<f64>,
    pub mu_exponent: Option<f64>,
    pub epsilon: f64,
    pub kappa_floor: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "example1".into(),
            family: Family::Stable,
            alpha: 0.9,
            scale: 1.0,
            ladder: vec![1e-1, 1e-2, 1e-3, 1e-4],
            h_ref: 1e-5,
            h: 1e-2,
            trajectories: 100,
            p_bar: 2.0,
            seed: 42,
            threads: None,
            scheme: Scheme::TruncatedMilstein,
            skip_blowups: false,
            reference: Reference::FinePath,
            norm: ErrorNorm::ReferenceNodes,
            output_dir: PathBuf::from("."),
            mu_coeff: None,
            mu_exponent: None,
            epsilon: 0.02,
            kappa_floor: false,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::config(key, format!("`{value}` is not a number")))
}

/// Integers also accept scientific notation such as `1e6`.
fn parse_count(key: &str, value: &str) -> Result<u64> {
    let v = value.trim();
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    let x = parse_f64(key, v)?;
    if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(64) {
        Ok(x as u64)
    } else {
        Err(Error::config(
            key,
            format!("`{value}` is not a non-negative integer"),
        ))
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::config(key, format!("`{other}` is not a boolean"))),
    }
}

impl RunConfig {
    /// Applies one `section.key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "problem.name" => self.problem = v.to_string(),
            "subordinator.family" => {
                self.family = match v {
                    "stable" => Family::Stable,
                    "deterministic" => Family::Deterministic,
                    other => {
                        return Err(Error::config(
                            key,
                            format!("unknown family `{other}`; expected stable or deterministic"),
                        ))
                    }
                }
            }
            "subordinator.alpha" => self.alpha = parse_f64(key, v)?,
            "subordinator.scale" => self.scale = parse_f64(key, v)?,
            "run.ladder" => {
                self.ladder = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_f64(key, s))
                    .collect::<Result<_>>()?
            }
            "run.h_ref" => self.h_ref = parse_f64(key, v)?,
            "run.h" => self.h = parse_f64(key, v)?,
            "run.m" => self.trajectories = parse_count(key, v)? as usize,
            "run.p_bar" => self.p_bar = parse_f64(key, v)?,
            "run.seed" => self.seed = parse_count(key, v)?,
            "run.threads" => {
                let n = parse_count(key, v)? as usize;
                self.threads = if n == 0 { None } else { Some(n) };
            }
            "run.scheme" => {
                self.scheme = v.parse().map_err(|_| {
                    Error::config(
                        key,
                        format!("unknown scheme `{v}`; expected milstein or em"),
                    )
                })?
            }
            "run.skip_blowups" => self.skip_blowups = parse_bool(key, v)?,
            "run.reference" => {
                self.reference = match v {
                    "path" => Reference::FinePath,
                    "exact" => Reference::Exact,
                    other => {
                        return Err(Error::config(
                            key,
                            format!("unknown reference `{other}`; expected path or exact"),
                        ))
                    }
                }
            }
            "run.norm" => {
                self.norm = match v {
                    "reference-nodes" => ErrorNorm::ReferenceNodes,
                    "coarse-nodes" => ErrorNorm::CoarseNodes,
                    other => {
                        return Err(Error::config(
                            key,
                            format!(
                                "unknown norm `{other}`; expected reference-nodes or coarse-nodes"
                            ),
                        ))
                    }
                }
            }
            "run.output_dir" => self.output_dir = PathBuf::from(v),
            "trunc.mu_coeff" => self.mu_coeff = Some(parse_f64(key, v)?),
            "trunc.mu_exponent" => self.mu_exponent = Some(parse_f64(key, v)?),
            "trunc.epsilon" => self.epsilon = parse_f64(key, v)?,
            "trunc.kappa_floor" => self.kappa_floor = parse_bool(key, v)?,
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Applies every assignment in a config file body.
    pub fn apply_file(&mut self, body: &str) -> Result<()> {
        for (lineno, raw) in body.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected `section.key = value`, got `{line}`"),
                )
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Layers file contents, the seed override and flag assignments over the
    /// defaults, then validates.
    pub fn from_sources(
        file: Option<&str>,
        env_seed: Option<&str>,
        flags: &[(&str, String)],
    ) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(body) = file {
            cfg.apply_file(body)?;
        }
        if let Some(seed) = env_seed {
            cfg.seed = parse_count(SEED_ENV, seed)?;
        }
        for (key, value) in flags {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        problems::by_name(&self.problem)
            .map_err(|e| Error::config("problem.name", e.to_string()))?;
        if self.family == Family::Stable && !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(
                "subordinator.alpha",
                format!("{} outside (0, 1)", self.alpha),
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::config("subordinator.scale", "must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.25) {
            return Err(Error::config(
                "trunc.epsilon",
                format!("{} outside (0, 1/4]", self.epsilon),
            ));
        }
        if self.trajectories < 1 {
            return Err(Error::config(
                "run.m",
                "at least one trajectory is required",
            ));
        }
        if !(self.p_bar >= 2.0) {
            return Err(Error::config(
                "run.p_bar",
                format!("{} is below 2", self.p_bar),
            ));
        }
        if !(self.h_ref > 0.0 && self.h_ref <= 1.0) {
            return Err(Error::config(
                "run.h_ref",
                format!("{} outside (0, 1]", self.h_ref),
            ));
        }
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::config("run.h", format!("{} outside (0, 1]", self.h)));
        }
        if self.ladder.is_empty() {
            return Err(Error::config("run.ladder", "empty ladder"));
        }
        for &h in &self.ladder {
            if !(h > 0.0 && h <= 1.0) {
                return Err(Error::config("run.ladder", format!("{h} outside (0, 1]")));
            }
            if step_multiple(h, self.h_ref).is_none() {
                return Err(Error::config(
                    "run.ladder",
                    format!("{h} is not an integer multiple of h_ref = {}", self.h_ref),
                ));
            }
        }
        if let Some(c) = self.mu_coeff {
            if !(c > 0.0) {
                return Err(Error::config("trunc.mu_coeff", "must be positive"));
            }
        }
        if let Some(m) = self.mu_exponent {
            if !(m > 0.0) {
                return Err(Error::config("trunc.mu_exponent", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<SdeProblem> {
        problems::by_name(&self.problem)
    }

    pub fn subordinator(&self) -> Result<SubordinatorModel> {
        match self.family {
            Family::Stable => SubordinatorModel::stable_with_scale(self.alpha, self.scale),
            Family::Deterministic => Ok(SubordinatorModel::deterministic()),
        }
    }

    /// Truncation for `problem`, overriding its growth bound where set.
    pub fn truncation(&self, problem: &SdeProblem) -> Result<TruncationConfig> {
        let base = problem.truncation();
        TruncationConfig::new(
            self.mu_coeff.unwrap_or(base.mu_coeff()),
            self.mu_exponent.unwrap_or(base.mu_exponent()),
            self.epsilon,
            self.kappa_floor,
        )
    }

    pub fn study(&self) -> StudyConfig {
        StudyConfig {
            ladder: self.ladder.clone(),
            h_ref: self.h_ref,
            trajectories: self.trajectories,
            p_bar: self.p_bar,
            seed: self.seed,
            scheme: self.scheme,
            threads: self.threads,
            skip_blowups: self.skip_blowups,
            reference: self.reference,
            norm: self.norm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::from_sources(None, None, &[]).unwrap();
        assert_eq!(cfg.epsilon, 0.02);
        assert_eq!(cfg.trajectories, 100);
        assert_eq!(cfg.p_bar, 2.0);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.alpha, 0.9);
        assert_eq!(cfg.problem, "example1");
        assert_eq!(cfg.ladder, vec![1e-1, 1e-2, 1e-3, 1e-4]);
        assert_eq!(cfg.h_ref, 1e-5);
    }

    #[test]
    fn epsilon_out_of_range() {
        let err =
            RunConfig::from_sources(None, None, &[("trunc.epsilon", "0.3".into())]).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "trunc.epsilon"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ladder_divisibility() {
        let err = RunConfig::from_sources(
            None,
            None,
            &[
                ("run.ladder", "1e-1,1e-2".into()),
                ("run.h_ref", "3e-3".into()),
            ],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("run.ladder") && msg.contains("0.1"), "{msg}");
    }

    #[test]
    fn layering() {
        let file = "# study\nproblem.name = example2\nrun.m = 1e3   # trailing comment\nrun.seed = 5\ntrunc.kappa_floor = true\n";
        let cfg = RunConfig::from_sources(Some(file), None, &[]).unwrap();
        assert_eq!(cfg.problem, "example2");
        assert_eq!(cfg.trajectories, 1000);
        assert_eq!(cfg.seed, 5);
        assert!(cfg.kappa_floor);
        let cfg = RunConfig::from_sources(Some(file), Some("9"), &[]).unwrap();
        assert_eq!(cfg.seed, 9);
        let cfg =
            RunConfig::from_sources(Some(file), Some("9"), &[("run.seed", "11".into())]).unwrap();
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_sources(Some("run.bogus = 1\n"), None, &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "run.bogus"));
        let err = RunConfig::from_sources(Some("no equals sign\n"), None, &[]).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        assert!(RunConfig::from_sources(None, None, &[("problem.name", "nope".into())]).is_err());
        assert!(RunConfig::from_sources(None, None, &[("run.m", "0".into())]).is_err());
        assert!(RunConfig::from_sources(None, None, &[("run.m", "2.5".into())]).is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let values = [
            "example1",
            "stable",
            "0.5",
            "1",
            "0.1",
            "0.01",
            "0.1",
            "10",
            "2",
            "3",
            "2",
            "em",
            "true",
            "path",
            "coarse-nodes",
            "/tmp",
            "2",
            "5",
            "0.1",
            "false",
        ];
        let mut cfg = RunConfig::default();
        for (k, v) in KEYS.iter().zip(values) {
            cfg.set(k, v).unwrap();
        }
        cfg.validate().unwrap();
    }

    #[test]
    fn truncation_falls_back_to_problem() {
        let cfg = RunConfig::default();
        let gbm = problems::by_name("gbm").unwrap();
        let t = cfg.truncation(&gbm).unwrap();
        assert_eq!((t.mu_coeff(), t.mu_exponent()), (0.2, 1.0));
        let cfg = RunConfig {
            mu_coeff: Some(3.0),
            ..cfg
        };
        assert_eq!(cfg.truncation(&gbm).unwrap().mu_coeff(), 3.0);
    }
}
