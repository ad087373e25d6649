use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tcm_core::config::{RunConfig, SEED_ENV};
use tcm_core::mc_harness::{fit_convergence_order, plot_svg, strong_error_table};
use tcm_core::problems::{check_assumptions, fit_candidates, SamplingSpec};
use tcm_core::scheme::{simulate_path, WienerIncrements};
use tcm_core::subordinator::{laplace_check, TimeChangeGrid};
use tcm_core::{Error, Result};

/// Truncated Milstein experiments for time-changed SDEs.
#[derive(Parser)]
#[command(name = "tcm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write the trajectory and clock grid as CSV.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Internal step size.
        #[arg(long)]
        h: Option<String>,
    },
    /// Estimate strong errors over a step-size ladder and fit the order.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated step sizes, e.g. 1e-1,1e-2.
        #[arg(long)]
        ladder: Option<String>,
        /// Reference step size.
        #[arg(long)]
        href: Option<String>,
        /// Number of trajectories.
        #[arg(long)]
        m: Option<String>,
        #[arg(long)]
        p_bar: Option<String>,
        /// Count and drop trajectories that overflow instead of failing.
        #[arg(long)]
        skip_blowups: bool,
        /// `path` (scheme at h_ref) or `exact` (closed form).
        #[arg(long)]
        reference: Option<String>,
        /// `reference-nodes` or `coarse-nodes`.
        #[arg(long)]
        norm: Option<String>,
        /// Also write a log-log SVG plot.
        #[arg(long)]
        plot: bool,
        /// Omit the timestamp comment line from the CSV.
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Sample the coefficient assumptions on a box.
    CheckAssumptions {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "3")]
        radius: String,
        #[arg(long, default_value = "1e5")]
        samples: String,
        #[arg(long, default_value = "3")]
        p: String,
        #[arg(long, default_value = "3")]
        q: String,
        /// Box used to fit the candidate constants (defaults to --radius).
        #[arg(long)]
        fit_radius: Option<String>,
        /// Safety factor applied to the fitted constants.
        #[arg(long, default_value = "1.5")]
        margin: String,
    },
    /// Compare the empirical Laplace transform of increments with its closed form.
    SubordinatorTest {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "1e6")]
        samples: String,
        /// Comma-separated step sizes.
        #[arg(long, default_value = "1e-2")]
        hs: String,
        /// Comma-separated λ values.
        #[arg(long, default_value = "0.5,1,2")]
        lambdas: String,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Config file with `section.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// `stable` or `deterministic`.
    #[arg(long)]
    subordinator: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    mu_coeff: Option<String>,
    #[arg(long)]
    mu_exponent: Option<String>,
    /// Floor κ(h) at μ(1).
    #[arg(long)]
    kappa_floor: bool,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// `milstein` or `em`.
    #[arg(long)]
    scheme: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<String>,
}

impl CommonArgs {
    fn flags(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |k: &'static str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((k, v.clone()));
            }
        };
        push("problem.name", &self.problem);
        push("subordinator.family", &self.subordinator);
        push("subordinator.alpha", &self.alpha);
        push("subordinator.scale", &self.scale);
        push("trunc.epsilon", &self.epsilon);
        push("trunc.mu_coeff", &self.mu_coeff);
        push("trunc.mu_exponent", &self.mu_exponent);
        push("run.seed", &self.seed);
        push("run.scheme", &self.scheme);
        push("run.threads", &self.threads);
        if self.kappa_floor {
            out.push(("trunc.kappa_floor", "true".into()));
        }
        if let Some(dir) = &self.output_dir {
            out.push(("run.output_dir", dir.display().to_string()));
        }
        out
    }

    fn resolve(&self, extra: Vec<(&'static str, String)>) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => Some(fs::read_to_string(path)?),
            None => None,
        };
        let env_seed = std::env::var(SEED_ENV).ok();
        let mut flags = self.flags();
        flags.extend(extra);
        RunConfig::from_sources(file.as_deref(), env_seed.as_deref(), &flags)
    }
}

fn opt(key: &'static str, v: &Option<String>) -> Option<(&'static str, String)> {
    v.as_ref().map(|v| (key, v.clone()))
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(key, format!("`{v}` is not a number")))
        })
        .collect()
}

fn parse_num(key: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::config(key, format!("`{s}` is not a number")))
}

fn parse_usize(key: &str, s: &str) -> Result<usize> {
    let x = parse_num(key, s)?;
    if x >= 0.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        Err(Error::config(
            key,
            format!("`{s}` is not a non-negative integer"),
        ))
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, body)?;
    Ok(path)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, h } => {
            let cfg = common.resolve(opt("run.h", &h).into_iter().collect())?;
            let problem = cfg.problem()?;
            let trunc = cfg.truncation(&problem)?;
            let model = cfg.subordinator()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let grid = TimeChangeGrid::build(&model, cfg.h, problem.horizon(), &mut rng)?;
            let wiener = WienerIncrements::sample(cfg.h, grid.n(), &mut rng);
            let traj = simulate_path(&problem, &trunc, &grid, &wiener, cfg.scheme)?;

            let mut body = String::from("n,tau_n,E_h");
            for i in 1..=problem.dim() {
                body.push_str(&format!(",X_{i}"));
            }
            body.push('\n');
            for (n, x) in traj.states().enumerate() {
                body.push_str(&format!(
                    "{n},{:.14e},{:.14e}",
                    grid.tau()[n],
                    grid.internal_time(n)
                ));
                for v in x {
                    body.push_str(&format!(",{v:.14e}"));
                }
                body.push('\n');
            }
            let path = write(
                &cfg.output_dir,
                &format!("trajectory_{}.csv", problem.name()),
                &body,
            )?;
            let mut grid_csv = String::from("i,tau_i\n");
            for (i, t) in grid.tau().iter().enumerate() {
                grid_csv.push_str(&format!("{i},{t:.14e}\n"));
            }
            let gpath = write(
                &cfg.output_dir,
                &format!("grid_{}.csv", problem.name()),
                &grid_csv,
            )?;
            println!(
                "simulated {} with {} over N = {} steps (h = {})",
                problem.name(),
                model.describe(),
                grid.n(),
                cfg.h
            );
            println!("final state: {:?}", traj.state(grid.n()));
            println!("wrote {} and {}", path.display(), gpath.display());
        }
        Command::Convergence {
            common,
            ladder,
            href,
            m,
            p_bar,
            skip_blowups,
            reference,
            norm,
            plot,
            no_timestamp,
        } => {
            let mut extra: Vec<_> = [
                opt("run.ladder", &ladder),
                opt("run.h_ref", &href),
                opt("run.m", &m),
                opt("run.p_bar", &p_bar),
                opt("run.reference", &reference),
                opt("run.norm", &norm),
            ]
            .into_iter()
            .flatten()
            .collect();
            if skip_blowups {
                extra.push(("run.skip_blowups", "true".into()));
            }
            let cfg = common.resolve(extra)?;
            let problem = cfg.problem()?;
            let trunc = cfg.truncation(&problem)?;
            let model = cfg.subordinator()?;
            let table = strong_error_table(&problem, &trunc, &model, &cfg.study())?;
            let fit = fit_convergence_order(&table)?;
            let stamp = if no_timestamp {
                None
            } else {
                let secs = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                Some(format!("unix:{secs}"))
            };
            let csv = table.to_csv(Some(&fit), stamp.as_deref());
            let path = write(
                &cfg.output_dir,
                &format!("convergence_{}.csv", problem.name()),
                &csv,
            )?;
            println!("{:>12} {:>5} {:>14} {:>14}", "h", "M", "error", "stderr");
            for r in &table.rows {
                println!(
                    "{:>12.3e} {:>5} {:>14.6e} {:>14.6e}",
                    r.h, r.trajectories, r.error, r.stderr
                );
            }
            if table.blowups > 0 {
                println!("skipped {} trajectories that overflowed", table.blowups);
            }
            println!("slope = {:.4}", fit.slope);
            println!("wrote {}", path.display());
            if plot {
                let svg = write(
                    &cfg.output_dir,
                    &format!("convergence_{}.svg", problem.name()),
                    &plot_svg(&table, &fit),
                )?;
                println!("wrote {}", svg.display());
            }
        }
        Command::CheckAssumptions {
            common,
            radius,
            samples,
            p,
            q,
            fit_radius,
            margin,
        } => {
            let cfg = common.resolve(Vec::new())?;
            let problem = cfg.problem()?;
            let radius = parse_num("radius", &radius)?;
            let fit_radius = match &fit_radius {
                Some(r) => parse_num("fit-radius", r)?,
                None => radius,
            };
            let mut spec = SamplingSpec {
                radius: fit_radius,
                samples: parse_usize("samples", &samples)?,
                p: parse_num("p", &p)?,
                q: parse_num("q", &q)?,
                seed: cfg.seed,
                candidates: tcm_core::problems::Candidates::uniform(0.0),
            };
            spec.candidates = fit_candidates(&problem, &spec, parse_num("margin", &margin)?)?;
            spec.radius = radius;
            let reports = check_assumptions(&problem, &spec)?;
            println!(
                "{} on [-{radius}, {radius}]^{} with {} samples (p = {}, q = {})",
                problem.name(),
                problem.dim(),
                spec.samples,
                spec.p,
                spec.q
            );
            println!(
                "{:<11} {:>5} {:>14} {:>14}  status",
                "assumption", "const", "worst ratio", "candidate"
            );
            let mut csv = String::from(
                "assumption,constant,samples,worst_ratio,candidate,violated,witness\n",
            );
            for r in &reports {
                let status = if r.violated {
                    "VIOLATED"
                } else {
                    "not violated on sample"
                };
                println!(
                    "{:<11} {:>5} {:>14.6e} {:>14.6e}  {status}",
                    r.assumption.id(),
                    r.assumption.constant_name(),
                    r.worst_ratio,
                    r.candidate
                );
                let witness = r
                    .witness
                    .as_ref()
                    .map(|w| {
                        let mut s = format!("t={:.6e} x={:?}", w.t, w.x);
                        if let Some(s2) = w.s {
                            s.push_str(&format!(" s={s2:.6e}"));
                        }
                        if let Some(y) = &w.y {
                            s.push_str(&format!(" y={y:?}"));
                        }
                        s.replace(',', ";")
                    })
                    .unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{},{:.14e},{:.14e},{},{}\n",
                    r.assumption.id(),
                    r.assumption.constant_name(),
                    r.samples,
                    r.worst_ratio,
                    r.candidate,
                    r.violated,
                    witness
                ));
            }
            let path = write(
                &cfg.output_dir,
                &format!("assumptions_{}.csv", problem.name()),
                &csv,
            )?;
            println!("wrote {}", path.display());
        }
        Command::SubordinatorTest {
            common,
            samples,
            hs,
            lambdas,
        } => {
            let cfg = common.resolve(Vec::new())?;
            let model = cfg.subordinator()?;
            let samples = parse_usize("samples", &samples)?;
            let hs = parse_list("hs", &hs)?;
            let lambdas = parse_list("lambdas", &lambdas)?;
            let mut csv = String::from("h,lambda,samples,mean,stderr,target,z,pass\n");
            let mut passed = 0;
            let mut total = 0;
            println!(
                "Laplace check for {} with {samples} samples per cell",
                model.describe()
            );
            for (i, &h) in hs.iter().enumerate() {
                for (j, &lambda) in lambdas.iter().enumerate() {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream((i * lambdas.len() + j) as u64);
                    let c = laplace_check(&model, h, lambda, samples, &mut rng)?;
                    total += 1;
                    if c.passed() {
                        passed += 1;
                    }
                    println!(
                        "h={h:<8e} λ={lambda:<4} mean={:.8} target={:.8} z={:.2} {}",
                        c.mean,
                        c.target,
                        c.z_score(),
                        if c.passed() { "PASS" } else { "FAIL" }
                    );
                    csv.push_str(&format!(
                        "{h:.14e},{lambda:.14e},{samples},{:.14e},{:.14e},{:.14e},{:.6},{}\n",
                        c.mean,
                        c.stderr,
                        c.target,
                        c.z_score(),
                        c.passed()
                    ));
                }
            }
            let verdict = if passed == total { "PASS" } else { "FAIL" };
            println!("{verdict}: {passed}/{total} cells within 3 standard errors");
            let path = write(&cfg.output_dir, "subordinator_test.csv", &csv)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
