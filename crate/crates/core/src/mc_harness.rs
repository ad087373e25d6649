//! Coupled-path Monte Carlo estimation of strong errors.
//!
//! Every trajectory draws one fine subordinator path and one fine Wiener
//! path at `h_ref`. Coarser step sizes `h = k·h_ref` reuse them by summing
//! `k` consecutive increments, so the coarse clock nodes are exactly every
//! `k`-th fine node and pathwise differences measure discretisation error only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scheme::{integrate, Scheme, SdeProblem, Stepper};
use crate::subordinator::{SubordinatorModel, TimeChangeGrid, DEFAULT_MAX_NODES};
use crate::truncation::{check_step, TruncationConfig};

/// Subordinator and Wiener increments of one trajectory at a common step.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledNoise {
    h: f64,
    /// Clock nodes `0 = τ_0 < τ_1 < …`, one more than the increments.
    tau: Vec<f64>,
    dw: Vec<f64>,
    seed: u64,
    trajectory: usize,
}

impl CoupledNoise {
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn trajectory(&self) -> usize {
        self.trajectory
    }
    /// Number of increments in each stream.
    pub fn len(&self) -> usize {
        self.dw.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dw.is_empty()
    }
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }
    pub fn wiener(&self) -> &[f64] {
        &self.dw
    }
    /// Subordinator increments `Δ_i = τ_{i+1} - τ_i`.
    pub fn subordinator_increments(&self) -> Vec<f64> {
        self.tau.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Noise at step `k·h`: coarse node `n` is fine node `kn`, coarse Wiener
    /// increment `n` is the sum of fine increments `kn .. kn+k-1`.
    pub fn aggregate(&self, k: usize) -> Result<CoupledNoise> {
        if k == 0 {
            return Err(Error::invalid("aggregation factor must be at least 1"));
        }
        if !self.len().is_multiple_of(k) {
            return Err(Error::invalid(format!(
                "aggregation factor {k} does not divide the {} available increments",
                self.len()
            )));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        Ok(CoupledNoise {
            h: self.h * k as f64,
            tau: self.tau.iter().step_by(k).copied().collect(),
            dw: self.dw.chunks_exact(k).map(|c| c.iter().sum()).collect(),
            seed: self.seed,
            trajectory: self.trajectory,
        })
    }

    /// Clock grid on `[0, T]`: the nodes up to the first one beyond `T`.
    pub fn time_change_grid(&self, horizon: f64) -> Result<TimeChangeGrid> {
        let past = self.tau.partition_point(|&s| s <= horizon);
        if past == self.tau.len() {
            return Err(Error::invalid(format!(
                "noise covers only [0, {}], short of T = {horizon}",
                self.tau.last().copied().unwrap_or(0.0)
            )));
        }
        TimeChangeGrid::from_nodes(self.h, horizon, self.tau[..=past].to_vec())
    }
}

/// Deterministic per-trajectory noise source keyed by `(seed, j)`.
#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    model: SubordinatorModel,
    h_fine: f64,
    horizon: f64,
    seed: u64,
    multiples: Vec<usize>,
    max_nodes: usize,
}

impl NoiseGenerator {
    pub fn new(model: SubordinatorModel, h_fine: f64, horizon: f64, seed: u64) -> Result<Self> {
        check_step(h_fine)
            .map_err(|_| Error::invalid(format!("fine step must lie in (0, 1], got {h_fine}")))?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self {
            model,
            h_fine,
            horizon,
            seed,
            multiples: vec![1],
            max_nodes: DEFAULT_MAX_NODES,
        })
    }

    /// Aggregation factors the streams must support; each is padded so the
    /// coarse clock also passes `T`.
    pub fn with_multiples(mut self, ks: &[usize]) -> Self {
        self.multiples = ks.iter().copied().filter(|&k| k > 0).collect();
        self.multiples.push(1);
        self
    }

    pub fn with_max_nodes(mut self, max_nodes: usize) -> Self {
        self.max_nodes = max_nodes;
        self
    }

    /// Streams of trajectory `j`. Each index draws `Δ_i` then `dW_i`, so a
    /// longer stream extends a shorter one.
    pub fn trajectory(&self, j: usize) -> Result<CoupledNoise> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(j as u64);
        let sd = self.h_fine.sqrt();
        let mut tau = vec![0.0];
        let mut dw = Vec::new();
        let mut current = 0.0;
        let mut push =
            |tau: &mut Vec<f64>, dw: &mut Vec<f64>, rng: &mut ChaCha8Rng| -> Result<()> {
                if tau.len() >= self.max_nodes {
                    return Err(Error::ResourceLimit(format!(
                        "clock did not pass T = {} within {} nodes",
                        self.horizon, self.max_nodes
                    )));
                }
                current += self.model.draw(self.h_fine, rng);
                tau.push(current);
                let z: f64 = StandardNormal.sample(rng);
                dw.push(sd * z);
                Ok(())
            };
        while *tau.last().unwrap() <= self.horizon {
            push(&mut tau, &mut dw, &mut rng)?;
        }
        // The coarse clock at factor k needs node k·ceil((N+1)/k).
        let first_past = tau.len() - 1;
        let needed = self
            .multiples
            .iter()
            .map(|&k| first_past.div_ceil(k) * k)
            .max()
            .unwrap_or(first_past);
        // Also keep the stream length divisible by every factor.
        let lcm = self.multiples.iter().fold(1usize, |acc, &k| lcm(acc, k));
        let needed = if lcm <= 1 << 24 {
            needed.div_ceil(lcm) * lcm
        } else {
            needed
        };
        while dw.len() < needed {
            push(&mut tau, &mut dw, &mut rng)?;
        }
        Ok(CoupledNoise {
            h: self.h_fine,
            tau,
            dw,
            seed: self.seed,
            trajectory: j,
        })
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Lazily yields the noise of trajectories `0..m`.
pub fn generate_coupled_noise(
    model: SubordinatorModel,
    h_fine: f64,
    horizon: f64,
    m: usize,
    seed: u64,
) -> Result<impl Iterator<Item = Result<CoupledNoise>>> {
    if m == 0 {
        return Err(Error::invalid("at least one trajectory is required"));
    }
    let gen = NoiseGenerator::new(model, h_fine, horizon, seed)?;
    Ok((0..m).map(move |j| gen.trajectory(j)))
}

/// Integer factor `k` with `h = k·h_ref`, if one exists.
pub fn step_multiple(h: f64, h_ref: f64) -> Option<usize> {
    let ratio = h / h_ref;
    let k = ratio.round();
    if k >= 1.0 && (k * h_ref - h).abs() <= 1e-9 * h {
        Some(k as usize)
    } else {
        None
    }
}

/// Comparison points for the pathwise sup error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    /// Every reference node in `[0, T]`, with both paths piecewise constant.
    ReferenceNodes,
    /// Coarse nodes only.
    CoarseNodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// The scheme itself at `h_ref`.
    FinePath,
    /// The problem's closed-form solution driven by the same noise.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub ladder: Vec<f64>,
    pub h_ref: f64,
    pub trajectories: usize,
    pub p_bar: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// `None` uses rayon's global pool.
    pub threads: Option<usize>,
    pub skip_blowups: bool,
    pub reference: Reference,
    pub norm: ErrorNorm,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            ladder: vec![1e-1, 1e-2, 1e-3, 1e-4],
            h_ref: 1e-5,
            trajectories: 100,
            p_bar: 2.0,
            seed: 42,
            scheme: Scheme::TruncatedMilstein,
            threads: None,
            skip_blowups: false,
            reference: Reference::FinePath,
            norm: ErrorNorm::ReferenceNodes,
        }
    }
}

impl StudyConfig {
    /// Dyadic ladder `2⁻⁴ … 2⁻⁹` against `h_ref = 2⁻¹³`.
    pub fn dyadic() -> Self {
        Self {
            ladder: (4..=9).map(|e| 2f64.powi(-e)).collect(),
            h_ref: 2f64.powi(-13),
            ..Self::default()
        }
    }

    /// Validates the ladder and returns it sorted by decreasing `h` with factors.
    fn rungs(&self) -> Result<Vec<(f64, usize)>> {
        if self.trajectories == 0 {
            return Err(Error::invalid("at least one trajectory is required"));
        }
        if !(self.p_bar >= 2.0 && self.p_bar.is_finite()) {
            return Err(Error::invalid(format!(
                "error norm exponent must be ≥ 2, got {}",
                self.p_bar
            )));
        }
        check_step(self.h_ref)?;
        if self.ladder.is_empty() {
            return Err(Error::invalid("step-size ladder is empty"));
        }
        let mut rungs = self
            .ladder
            .iter()
            .map(|&h| {
                check_step(h)?;
                step_multiple(h, self.h_ref).map(|k| (h, k)).ok_or_else(|| {
                    Error::invalid(format!(
                        "ladder entry {h} is not an integer multiple of h_ref = {}",
                        self.h_ref
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rungs.sort_by_key(|r| std::cmp::Reverse(r.1));
        rungs.dedup_by_key(|r| r.1);
        Ok(rungs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub h: f64,
    /// Trajectories that entered the average.
    pub trajectories: usize,
    pub p_bar: f64,
    /// `(M⁻¹ Σ_j sup_t |X_ref - X̄_h|^p̄)^{1/p̄}`.
    pub error: f64,
    /// Delta-method standard error of `error`.
    pub stderr: f64,
    /// Sample mean of `sup_n |X_n|²`.
    pub mean_sup_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub problem: String,
    pub subordinator: String,
    pub scheme: Scheme,
    pub seed: u64,
    pub h_ref: f64,
    pub blowups: usize,
    pub rows: Vec<ErrorRow>,
}

struct PathOutcome {
    sup_errors: Vec<f64>,
    sup_sq: Vec<f64>,
}

fn run_trajectory(
    problem: &SdeProblem,
    cfg: &TruncationConfig,
    gen: &NoiseGenerator,
    study: &StudyConfig,
    rungs: &[(f64, usize)],
    j: usize,
) -> Result<PathOutcome> {
    let horizon = problem.horizon();
    let d = problem.dim();
    let noise = gen.trajectory(j)?;
    let fine = noise.time_change_grid(horizon)?;
    let n_fine = fine.n();

    let reference = match study.reference {
        Reference::FinePath => {
            let mut stepper = Stepper::new(problem, cfg, study.h_ref, study.scheme)?;
            integrate(
                &mut stepper,
                problem.y0(),
                fine.tau(),
                &noise.wiener()[..n_fine],
            )
            .map_err(|e| e.in_trajectory(j))?
        }
        Reference::Exact => {
            let exact = problem.exact().ok_or_else(|| {
                Error::invalid(format!(
                    "problem `{}` has no closed-form solution",
                    problem.name()
                ))
            })?;
            let mut out = Vec::with_capacity((n_fine + 1) * d);
            let mut value = vec![0.0; d];
            let mut w = 0.0;
            for i in 0..=n_fine {
                if i > 0 {
                    w += noise.wiener()[i - 1];
                }
                exact.value(fine.tau()[i], fine.internal_time(i), w, &mut value);
                out.extend_from_slice(&value);
            }
            out
        }
    };

    let mut sup_errors = Vec::with_capacity(rungs.len());
    let mut sup_sq = Vec::with_capacity(rungs.len());
    for &(h, k) in rungs {
        let coarse = noise.aggregate(k)?;
        let grid = coarse.time_change_grid(horizon)?;
        let n = grid.n();
        debug_assert_eq!(n, n_fine / k);
        let mut stepper = Stepper::new(problem, cfg, h, study.scheme)?;
        let states = integrate(
            &mut stepper,
            problem.y0(),
            grid.tau(),
            &coarse.wiener()[..n],
        )
        .map_err(|e| e.in_trajectory(j))?;
        let gap = |i_fine: usize, n_coarse: usize| {
            let a = &reference[i_fine * d..(i_fine + 1) * d];
            let b = &states[n_coarse * d..(n_coarse + 1) * d];
            a.iter()
                .zip(b)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt()
        };
        let worst = match study.norm {
            ErrorNorm::ReferenceNodes => (0..=n_fine).map(|i| gap(i, i / k)).fold(0.0, f64::max),
            ErrorNorm::CoarseNodes => (0..=n).map(|m| gap(m * k, m)).fold(0.0, f64::max),
        };
        let peak = states
            .chunks_exact(d)
            .map(|x| x.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        sup_errors.push(worst);
        sup_sq.push(peak);
    }
    Ok(PathOutcome { sup_errors, sup_sq })
}

/// Runs the coupled study and averages the sup errors per ladder entry.
///
/// Output is independent of the thread count: trajectory `j` depends only on
/// `(seed, j)` and the reduction runs in trajectory order.
pub fn strong_error_table(
    problem: &SdeProblem,
    cfg: &TruncationConfig,
    model: &SubordinatorModel,
    study: &StudyConfig,
) -> Result<ErrorTable> {
    let rungs = study.rungs()?;
    let ks: Vec<usize> = rungs.iter().map(|r| r.1).collect();
    let gen = NoiseGenerator::new(*model, study.h_ref, problem.horizon(), study.seed)?
        .with_multiples(&ks);

    let work = || -> Vec<Result<PathOutcome>> {
        (0..study.trajectories)
            .into_par_iter()
            .map(|j| run_trajectory(problem, cfg, &gen, study, &rungs, j))
            .collect()
    };
    let outcomes = match study.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut kept = Vec::with_capacity(outcomes.len());
    let mut blowups = 0;
    for outcome in outcomes {
        match outcome {
            Ok(o) => kept.push(o),
            Err(e @ Error::NumericOverflow(_)) => {
                if study.skip_blowups {
                    blowups += 1;
                } else {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::invalid("every trajectory blew up"));
    }

    let m = kept.len() as f64;
    let rows = rungs
        .iter()
        .enumerate()
        .map(|(r, &(h, _))| {
            let powered: Vec<f64> = kept
                .iter()
                .map(|o| o.sup_errors[r].powf(study.p_bar))
                .collect();
            let mean = powered.iter().sum::<f64>() / m;
            let var = if kept.len() > 1 {
                powered.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            let error = mean.powf(1.0 / study.p_bar);
            let stderr = if mean > 0.0 {
                error / (study.p_bar * mean) * (var / m).sqrt()
            } else {
                0.0
            };
            ErrorRow {
                h,
                trajectories: kept.len(),
                p_bar: study.p_bar,
                error,
                stderr,
                mean_sup_sq: kept.iter().map(|o| o.sup_sq[r]).sum::<f64>() / m,
            }
        })
        .collect();

    Ok(ErrorTable {
        problem: problem.name().to_string(),
        subordinator: model.describe(),
        scheme: study.scheme,
        seed: study.seed,
        h_ref: study.h_ref,
        blowups,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    /// Empirical convergence order.
    pub slope: f64,
    pub intercept: f64,
    /// `log10 ê(h) - (intercept + slope·log10 h)` per row.
    pub residuals: Vec<f64>,
}

/// Least-squares fit of `log10 ê(h)` against `log10 h`.
pub fn fit_convergence_order(table: &ErrorTable) -> Result<RegressionResult> {
    if table.rows.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 rows to fit an order, got {}",
            table.rows.len()
        )));
    }
    if let Some((i, row)) = table
        .rows
        .iter()
        .enumerate()
        .find(|(_, r)| !(r.error > 0.0 && r.error.is_finite()))
    {
        return Err(Error::invalid(format!(
            "row {i} (h = {}) has non-positive error {}",
            row.h, row.error
        )));
    }
    let xs: Vec<f64> = table.rows.iter().map(|r| r.h.log10()).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| r.error.log10()).collect();
    fit_line(&xs, &ys)
}

pub(crate) fn fit_line(xs: &[f64], ys: &[f64]) -> Result<RegressionResult> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all step sizes coincide"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    Ok(RegressionResult {
        slope,
        intercept,
        residuals,
    })
}

pub const CSV_HEADER: &str = "h,M,p_bar,error,stderr,log10_h,log10_error";

fn sig15(v: f64) -> String {
    format!("{v:.14e}")
}

impl ErrorTable {
    /// CSV with one row per ladder entry, then `#` comment lines holding the
    /// run metadata and, if given, the regression summary.
    pub fn to_csv(&self, regression: Option<&RegressionResult>, timestamp: Option<&str>) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                sig15(r.h),
                r.trajectories,
                sig15(r.p_bar),
                sig15(r.error),
                sig15(r.stderr),
                sig15(r.h.log10()),
                sig15(r.error.log10()),
            ));
        }
        out.push_str(&format!(
            "# problem={} subordinator={} scheme={} seed={} h_ref={} blowups={}\n",
            self.problem,
            self.subordinator,
            self.scheme.as_str(),
            self.seed,
            sig15(self.h_ref),
            self.blowups
        ));
        if let Some(fit) = regression {
            out.push_str(&format!("# slope={}\n", sig15(fit.slope)));
            out.push_str(&format!("# intercept={}\n", sig15(fit.intercept)));
            let res: Vec<String> = fit.residuals.iter().map(|v| sig15(*v)).collect();
            out.push_str(&format!("# residuals={}\n", res.join(";")));
        }
        if let Some(ts) = timestamp {
            out.push_str(&format!("# generated={ts}\n"));
        }
        out
    }
}

/// Log-log plot of the error table with the fitted line.
pub fn plot_svg(table: &ErrorTable, fit: &RegressionResult) -> String {
    let (w, hgt, pad) = (640.0, 480.0, 60.0);
    let xs: Vec<f64> = table.rows.iter().map(|r| r.h.log10()).collect();
    let ys: Vec<f64> = table
        .rows
        .iter()
        .map(|r| r.error.max(f64::MIN_POSITIVE).log10())
        .collect();
    let bounds = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min).floor();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil();
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    };
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| hgt - pad - (y - y0) / (y1 - y0) * (hgt - 2.0 * pad);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{hgt}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s.push_str(&format!(
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 2.0 * pad,
        hgt - 2.0 * pad
    ));
    for e in (x0 as i64)..=(x1 as i64) {
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">1e{e}</text>\n",
            px(e as f64),
            hgt - pad + 18.0
        ));
    }
    for e in (y0 as i64)..=(y1 as i64) {
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{e}</text>\n",
            pad - 6.0,
            py(e as f64) + 4.0
        ));
    }
    s.push_str(&format!(
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"steelblue\" stroke-dasharray=\"6,4\"/>\n",
        px(x0),
        py(fit.intercept + fit.slope * x0),
        px(x1),
        py(fit.intercept + fit.slope * x1)
    ));
    for (x, y) in xs.iter().zip(&ys) {
        s.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"crimson\"/>\n",
            px(*x),
            py(*y)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\">{} ({}): slope {:.4}</text>\n",
        pad,
        pad - 12.0,
        table.problem,
        table.subordinator,
        fit.slope
    ));
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">step size h</text>\n",
        w / 2.0,
        hgt - 16.0
    ));
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;
    use crate::scheme::FnCoefficients;

    #[test]
    fn deterministic_noise_has_constant_increments() {
        let gen = NoiseGenerator::new(SubordinatorModel::deterministic(), 1e-3, 1.0, 1).unwrap();
        let noise = gen.trajectory(0).unwrap();
        let inc = noise.subordinator_increments();
        assert!(inc.iter().all(|d| (d - 1e-3).abs() < 1e-12));
        assert_eq!(
            noise.aggregate(10).is_err(),
            !noise.len().is_multiple_of(10)
        );
    }

    #[test]
    fn same_seed_same_streams() {
        let model = SubordinatorModel::stable(0.9).unwrap();
        let a: Vec<_> = generate_coupled_noise(model, 1e-3, 1.0, 3, 5)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        let b: Vec<_> = generate_coupled_noise(model, 1e-3, 1.0, 3, 5)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        let c: Vec<_> = generate_coupled_noise(model, 1e-3, 1.0, 1, 6)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_ne!(a[0], c[0]);
        assert!(generate_coupled_noise(model, 1e-3, 1.0, 0, 5).is_err());
    }

    #[test]
    fn padded_streams_extend_unpadded_ones() {
        let model = SubordinatorModel::stable(0.9).unwrap();
        let base = NoiseGenerator::new(model, 1e-3, 1.0, 3).unwrap();
        let short = base.trajectory(4).unwrap();
        let long = base
            .clone()
            .with_multiples(&[10, 100])
            .trajectory(4)
            .unwrap();
        assert_eq!(long.len() % 100, 0);
        assert_eq!(&long.tau()[..short.tau().len()], short.tau());
        assert_eq!(&long.wiener()[..short.len()], short.wiener());
    }

    #[test]
    fn aggregation_identity() {
        let model = SubordinatorModel::stable(0.9).unwrap();
        let gen = NoiseGenerator::new(model, 1e-3, 1.0, 8)
            .unwrap()
            .with_multiples(&[10]);
        let fine = gen.trajectory(2).unwrap();
        assert_eq!(fine.aggregate(1).unwrap(), fine);
        let coarse = fine.aggregate(10).unwrap();
        assert_eq!(coarse.len() * 10, fine.len());
        assert!((coarse.h() - 1e-2).abs() < 1e-15);
        for n in 0..coarse.len() {
            assert_eq!(coarse.tau()[n], fine.tau()[10 * n]);
            let partial: f64 = fine.wiener()[10 * n..10 * n + 10].iter().sum();
            assert_eq!(coarse.wiener()[n], partial);
        }
        assert!(fine.aggregate(0).is_err());
        assert!(fine.aggregate(7).is_err() || fine.len().is_multiple_of(7));
        // Coarse clock passes T and its nodes are fine nodes.
        let g = coarse.time_change_grid(1.0).unwrap();
        let gf = fine.time_change_grid(1.0).unwrap();
        assert_eq!(g.n(), gf.n() / 10);
    }

    #[test]
    fn aggregated_deterministic_steps() {
        let gen = NoiseGenerator::new(SubordinatorModel::deterministic(), 1e-3, 1.0, 8)
            .unwrap()
            .with_multiples(&[10]);
        let coarse = gen.trajectory(0).unwrap().aggregate(10).unwrap();
        assert!(coarse
            .subordinator_increments()
            .iter()
            .all(|d| (d - 1e-2).abs() < 1e-12));
    }

    #[test]
    fn step_multiples() {
        assert_eq!(step_multiple(1e-1, 1e-5), Some(10_000));
        assert_eq!(step_multiple(2f64.powi(-4), 2f64.powi(-13)), Some(512));
        assert_eq!(step_multiple(1e-1, 3e-3), None);
        assert_eq!(step_multiple(1e-5, 1e-4), None);
    }

    #[test]
    fn study_validation() {
        let p = problems::example1();
        let cfg = p.truncation();
        let model = SubordinatorModel::stable(0.9).unwrap();
        let bad = StudyConfig {
            ladder: vec![1e-1, 1e-2],
            h_ref: 3e-3,
            trajectories: 2,
            ..StudyConfig::default()
        };
        assert!(matches!(
            strong_error_table(&p, &cfg, &model, &bad),
            Err(Error::InvalidArgument(_))
        ));
        let bad = StudyConfig {
            p_bar: 1.0,
            ..StudyConfig::default()
        };
        assert!(strong_error_table(&p, &cfg, &model, &bad).is_err());
        let bad = StudyConfig {
            reference: Reference::Exact,
            ladder: vec![0.1],
            h_ref: 0.01,
            trajectories: 1,
            ..StudyConfig::default()
        };
        assert!(strong_error_table(&p, &cfg, &model, &bad).is_err());
    }

    #[test]
    fn self_comparison_and_still_problem() {
        let p = problems::example1();
        let cfg = p.truncation();
        let model = SubordinatorModel::stable(0.9).unwrap();
        let study = StudyConfig {
            ladder: vec![1e-1, 1e-3],
            h_ref: 1e-3,
            trajectories: 4,
            ..StudyConfig::default()
        };
        let t = strong_error_table(&p, &cfg, &model, &study).unwrap();
        assert_eq!(t.rows[1].error, 0.0);
        assert!(t.rows[0].error > 0.0);

        let still = SdeProblem::new(
            "still",
            vec![0.5],
            1.0,
            FnCoefficients::new(
                |_, _, f| f[0] = 0.0,
                |_, _, g| g[0] = 0.0,
                |_, _, _, c| c[0] = 0.0,
            ),
        )
        .unwrap();
        let t = strong_error_table(&still, &cfg, &model, &study).unwrap();
        assert!(t.rows.iter().all(|r| r.error == 0.0));
        assert!(fit_convergence_order(&t).is_err());
    }

    #[test]
    fn overflow_handling() {
        // No truncation to speak of: μ(u) = u^{1/100} puts the radius far out.
        let cfg = TruncationConfig::new(1e-3, 0.01, 0.25, false).unwrap();
        let exploding = SdeProblem::new(
            "exploding",
            vec![3.0],
            1.0,
            FnCoefficients::new(
                |_, y, f| f[0] = y[0].powi(5),
                |_, _, g| g[0] = 0.0,
                |_, _, _, c| c[0] = 0.0,
            ),
        )
        .unwrap();
        let model = SubordinatorModel::deterministic();
        let study = StudyConfig {
            ladder: vec![0.1],
            h_ref: 0.01,
            trajectories: 3,
            ..StudyConfig::default()
        };
        let err = strong_error_table(&exploding, &cfg, &model, &study).unwrap_err();
        match err {
            Error::NumericOverflow(site) => assert_eq!(site.trajectory, Some(0)),
            other => panic!("unexpected {other:?}"),
        }
        let tolerant = StudyConfig {
            skip_blowups: true,
            ..study
        };
        assert!(strong_error_table(&exploding, &cfg, &model, &tolerant).is_err());
    }

    #[test]
    fn exact_power_law_fit() {
        let rows = [1e-1, 1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&h: &f64| ErrorRow {
                h,
                trajectories: 1,
                p_bar: 2.0,
                error: 3.0 * h.sqrt(),
                stderr: 0.0,
                mean_sup_sq: 0.0,
            })
            .collect();
        let table = ErrorTable {
            problem: "synthetic".into(),
            subordinator: "none".into(),
            scheme: Scheme::TruncatedMilstein,
            seed: 0,
            h_ref: 1e-5,
            blowups: 0,
            rows,
        };
        let fit = fit_convergence_order(&table).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.log10()).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));

        let csv = table.to_csv(Some(&fit), None);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 7);
        assert_eq!(first[0], "1.00000000000000e-1");
        assert!(csv.contains("# slope=5.00000000000000e-1"));
        assert!(plot_svg(&table, &fit).starts_with("<svg"));

        let one = ErrorTable {
            rows: table.rows[..1].to_vec(),
            ..table.clone()
        };
        assert!(fit_convergence_order(&one).is_err());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let p = problems::example1();
        let cfg = p.truncation();
        let model = SubordinatorModel::stable(0.9).unwrap();
        let mk = |threads| StudyConfig {
            ladder: vec![1e-1, 1e-2],
            h_ref: 1e-3,
            trajectories: 16,
            threads: Some(threads),
            ..StudyConfig::default()
        };
        let a = strong_error_table(&p, &cfg, &model, &mk(1)).unwrap();
        let b = strong_error_table(&p, &cfg, &model, &mk(4)).unwrap();
        assert_eq!(a, b);
    }
}
