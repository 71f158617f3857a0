//! Experiment runner: representability checks, witness synthesis, exact
//! risk/gradient evaluation, gradient checking, GF/GD training, multi-start
//! sweeps, rate fitting, width scans, and the better-approximation operator,
//! with reproducible configs and deterministic file outputs.
//!
//! Exit codes: 0 ok, 2 parse/validation failure, 3 negative result (not
//! representable), 4 check failed, 5 every trajectory diverged.

mod config;
mod output;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use config::{DynamicsSpec, ExperimentConfig};
use pwrelu::approx::better_approx;
use pwrelu::deep::{width_scan, DeepArch};
use pwrelu::dynamics::{fit_rate, gd_run, gf_integrate, kl_probe, multistart};
use pwrelu::pwfun::{PiecewiseLinear, PiecewisePoly};
use pwrelu::repr::{slope_relation_holds, synthesize, Synthesis};
use pwrelu::rng::SplitMix64;
use pwrelu::scalar::{Rat, Scalar};
use pwrelu::shallow::{grad_exact, risk_exact, Problem, ShallowParams};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_PARSE: u8 = 2;
const EXIT_NEGATIVE: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;
const EXIT_ALL_DIVERGED: u8 = 5;

#[derive(Parser)]
#[command(
    name = "pwrelu",
    version,
    about = "Exact ReLU network risk calculus and training dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Scalar mode for exact commands.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Float)]
    mode: Mode,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Rational,
    Float,
}

#[derive(Subcommand)]
enum Command {
    /// Decide representability of a piecewise-linear function at a width.
    Check {
        /// Piecewise-polynomial JSON file (pieces of degree <= 1).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        width: usize,
    },
    /// Compare the exact generalized gradient against finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        /// Test hook: corrupt the exact gradient to verify failure detection.
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Single training run (GD or GF per the config's dynamics block).
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Multi-start GD with per-step argmin tracking.
    Multistart {
        #[arg(long)]
        config: PathBuf,
    },
    /// GF run with convergence-rate fit and KL exponent probe.
    Rates {
        #[arg(long)]
        config: PathBuf,
    },
    /// Best risks over a family of widths.
    Widthscan {
        #[arg(long)]
        config: PathBuf,
    },
    /// Better-approximation operator on a parameter vector.
    Approx {
        #[arg(long)]
        config: PathBuf,
        /// Parameter CSV (index,value rows).
        #[arg(long)]
        theta: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(jobs) = cli.jobs {
        // outputs do not depend on the pool size; this only tunes throughput
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli.jobs;
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_PARSE)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Check { input, width } => cmd_check(cli, input, *width),
        Command::Gradcheck {
            config,
            corrupt_gradient,
        } => cmd_gradcheck(cli, config, *corrupt_gradient),
        Command::Train { config } => cmd_train(cli, config),
        Command::Multistart { config } => cmd_multistart(cli, config),
        Command::Rates { config } => cmd_rates(cli, config),
        Command::Widthscan { config } => cmd_widthscan(cli, config),
        Command::Approx { config, theta } => cmd_approx(cli, config, theta),
    }
}

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).context("parsing config JSON")?;
    Ok(cfg)
}

fn ensure_out(cli: &Cli) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(&cli.out)?;
    Ok(cli.out.clone())
}

fn effective_seed(cli: &Cli, cfg: &ExperimentConfig) -> u64 {
    cli.seed.or(cfg.seed).unwrap_or(0)
}

fn shallow_problem_f64(cfg: &ExperimentConfig) -> anyhow::Result<(Problem<f64>, usize)> {
    let (target, density) = cfg.problem.parse_f64()?;
    let problem = Problem::new(target, density).map_err(|e| anyhow::anyhow!("{e}"))?;
    let width = cfg
        .width
        .ok_or_else(|| anyhow::anyhow!("config needs a `width` field"))?;
    Ok((problem, width))
}

type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Sync + Send>;
type RiskFn = Box<dyn Fn(&[f64]) -> f64 + Sync + Send>;

/// Risk/gradient closures for the configured model: shallow exact when the
/// config carries `width`, scalar-input deep exact when it carries `layers`.
fn model_closures(cfg: &ExperimentConfig) -> anyhow::Result<(usize, GradFn, RiskFn)> {
    let (target, density) = cfg.problem.parse_f64()?;
    let problem = Problem::new(target, density).map_err(|e| anyhow::anyhow!("{e}"))?;
    match (&cfg.width, &cfg.layers) {
        (Some(width), None) => {
            let dim = 3 * width + 1;
            let p1 = problem.clone();
            let p2 = problem;
            Ok((
                dim,
                Box::new(move |t: &[f64]| {
                    let sp = ShallowParams::from_vec(t.to_vec()).expect("fixed dimension");
                    grad_exact(&sp, &p1)
                }),
                Box::new(move |t: &[f64]| {
                    let sp = ShallowParams::from_vec(t.to_vec()).expect("fixed dimension");
                    risk_exact(&sp, &p2)
                }),
            ))
        }
        (None, Some(layers)) => {
            let arch = DeepArch::new(layers.clone()).map_err(|e| anyhow::anyhow!("{e}"))?;
            anyhow::ensure!(
                arch.input_dim() == 1 && arch.output_dim() == 1,
                "deep training needs scalar input and output"
            );
            let dim = arch.param_count();
            let dp = pwrelu::deep::DeepProblem::from_scalar_problem(&problem);
            let dp2 = dp.clone();
            let a1 = arch.clone();
            let a2 = arch;
            Ok((
                dim,
                Box::new(move |t: &[f64]| {
                    pwrelu::deep::grad_deep_exact_1d(t, &a1, &dp).expect("validated arch")
                }),
                Box::new(move |t: &[f64]| {
                    pwrelu::deep::risk_deep_exact_1d(t, &a2, &dp2).expect("validated arch")
                }),
            ))
        }
        (Some(_), Some(_)) => anyhow::bail!("config must set `width` or `layers`, not both"),
        (None, None) => anyhow::bail!("config needs a `width` or `layers` field"),
    }
}

fn cmd_check(cli: &Cli, input: &Path, width: usize) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(input)?;
    let (representable, witness_theta, witness_indices) = match cli.mode {
        Mode::Rational => {
            let pp: PiecewisePoly<Rat> = serde_json::from_str(&text).context("parsing input")?;
            let f =
                PiecewiseLinear::from_piecewise_poly(&pp).map_err(|e| anyhow::anyhow!("{e}"))?;
            let cert = slope_relation_holds(&f, width).map_err(|e| anyhow::anyhow!("{e}"))?;
            let witness = match synthesize(&f, width).map_err(|e| anyhow::anyhow!("{e}"))? {
                Synthesis::Representable(theta) => Some(json!(theta
                    .theta()
                    .iter()
                    .map(|v| format!("{}/{}", v.numer(), v.denom()))
                    .collect::<Vec<_>>())),
                Synthesis::NotRepresentable => None,
            };
            (witness.is_some(), witness, cert.witness_indices)
        }
        Mode::Float => {
            let pp: PiecewisePoly<f64> = serde_json::from_str(&text).context("parsing input")?;
            let f =
                PiecewiseLinear::from_piecewise_poly(&pp).map_err(|e| anyhow::anyhow!("{e}"))?;
            let cert = slope_relation_holds(&f, width).map_err(|e| anyhow::anyhow!("{e}"))?;
            let witness = match synthesize(&f, width).map_err(|e| anyhow::anyhow!("{e}"))? {
                Synthesis::Representable(theta) => Some(json!(theta.theta())),
                Synthesis::NotRepresentable => None,
            };
            (witness.is_some(), witness, cert.witness_indices)
        }
    };
    let out_dir = ensure_out(cli)?;
    let report = json!({
        "representable": representable,
        "witness_theta": witness_theta,
        "witness_indices": witness_indices,
        "width": width,
    });
    output::write_json(&out_dir.join("report.json"), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(if representable { 0 } else { EXIT_NEGATIVE })
}

fn cmd_gradcheck(cli: &Cli, config: &Path, corrupt: bool) -> anyhow::Result<u8> {
    let cfg = load_config(config)?;
    let (problem, width) = shallow_problem_f64(&cfg)?;
    let spec = cfg.gradcheck.clone().unwrap_or(config::GradcheckSpec {
        samples: 100,
        tolerance: 1e-4,
        fd_step: 1e-6,
    });
    let seed = effective_seed(cli, &cfg);
    let out_dir = ensure_out(cli)?;

    let (a, b) = problem.domain();
    let data_bps: Vec<f64> = problem
        .target
        .breakpoints()
        .iter()
        .chain(problem.density.breakpoints())
        .cloned()
        .collect();
    let mut rng = SplitMix64::stream(seed, 0);
    let mut worst_err = 0.0f64;
    let mut worst: Option<serde_json::Value> = None;
    let mut tested = 0usize;
    let mut attempts = 0usize;
    while tested < spec.samples && attempts < spec.samples.max(1) * 200 {
        attempts += 1;
        let theta =
            ShallowParams::from_vec((0..3 * width + 1).map(|_| rng.uniform(-1.5, 1.5)).collect())
                .expect("length is 3h+1");
        if !theta.in_smooth_region() {
            continue;
        }
        // keep kinks clear of data breakpoints so central differences stay
        // inside one smooth cell
        let clear = (0..width).all(|j| {
            theta.w(j).abs() > 1e-2
                && theta.kink(j).is_none_or(|q| {
                    data_bps.iter().all(|bp| (q - bp).abs() > 1e-3)
                        && (q - a).abs() > 1e-3
                        && (q - b).abs() > 1e-3
                })
        });
        if !clear {
            continue;
        }
        tested += 1;
        let mut g = grad_exact(&theta, &problem);
        if tested == 1 {
            output::write_gradient_csv(&out_dir.join("gradient.csv"), &g)?;
        }
        if corrupt {
            g[0] += 1.0;
        }
        for i in 0..g.len() {
            let mut tp = theta.clone();
            tp.theta_mut()[i] += spec.fd_step;
            let mut tm = theta.clone();
            tm.theta_mut()[i] -= spec.fd_step;
            let fd = (risk_exact(&tp, &problem) - risk_exact(&tm, &problem)) / (2.0 * spec.fd_step);
            let rel = (fd - g[i]).abs() / 1.0f64.max(g[i].abs());
            if rel > worst_err {
                worst_err = rel;
                worst = Some(json!({
                    "theta": theta.theta(),
                    "component": i,
                    "exact": g[i],
                    "finite_difference": fd,
                    "relative_error": rel,
                }));
            }
        }
    }
    let passed = worst_err <= spec.tolerance;
    let vacuous = spec.samples == 0;
    if vacuous {
        eprintln!("warning: gradcheck with zero samples is a vacuous pass");
    }
    let report = json!({
        "samples": tested,
        "tolerance": spec.tolerance,
        "fd_step": spec.fd_step,
        "max_relative_error": worst_err,
        "passed": passed || vacuous,
        "worst": worst,
    });
    output::write_json(&out_dir.join("report.json"), &report)?;
    println!("gradcheck: {tested} samples, max relative error {worst_err:.3e}");
    Ok(if passed || vacuous {
        0
    } else {
        EXIT_CHECK_FAILED
    })
}

fn cmd_train(cli: &Cli, config: &Path) -> anyhow::Result<u8> {
    let cfg = load_config(config)?;
    let (dim, grad, risk) = model_closures(&cfg)?;
    let dynamics = cfg
        .dynamics
        .clone()
        .ok_or_else(|| anyhow::anyhow!("config needs a `dynamics` block"))?;
    let seed = effective_seed(cli, &cfg);
    let out_dir = ensure_out(cli)?;

    let traj = match &dynamics {
        DynamicsSpec::Gd { .. } => {
            let gd = dynamics.gd_config(seed)?;
            let mut rng = SplitMix64::stream(seed, 0);
            let theta0 = gd.sampler.draw(&mut rng, dim);
            gd_run(&theta0, gd.gamma, gd.steps, grad, risk, gd.stride)
        }
        DynamicsSpec::Gf { .. } => {
            let gf = dynamics.gf_config()?;
            let mut rng = SplitMix64::stream(seed, 0);
            let theta0: Vec<f64> = (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect();
            gf_integrate(&theta0, grad, risk, &gf)
        }
    };
    output::write_trajectory_csv(&out_dir.join("trajectory_0.csv"), &traj)?;
    output::write_plotdata(&out_dir.join("plotdata.dat"), &traj)?;
    let report = json!({
        "final_risk": traj.final_risk(),
        "diverged": traj.diverged,
        "energy_residual": traj.energy_residual,
        "steps_recorded": traj.times.len(),
    });
    output::write_json(&out_dir.join("report.json"), &report)?;
    println!("train: final risk {}", traj.final_risk());
    Ok(if traj.diverged { EXIT_ALL_DIVERGED } else { 0 })
}

fn cmd_multistart(cli: &Cli, config: &Path) -> anyhow::Result<u8> {
    let cfg = load_config(config)?;
    let (dim, grad, risk) = model_closures(&cfg)?;
    let dynamics = cfg
        .dynamics
        .clone()
        .ok_or_else(|| anyhow::anyhow!("config needs a `dynamics` block"))?;
    let seed = effective_seed(cli, &cfg);
    let gd = dynamics.gd_config(seed)?;
    let out_dir = ensure_out(cli)?;
    let outcome = multistart(dim, grad, risk, &gd);

    for (k, run) in outcome.runs.iter().enumerate() {
        output::write_trajectory_csv(&out_dir.join(format!("trajectory_{k}.csv")), run)?;
    }
    let best = &outcome.runs[outcome.best_kappa];
    output::write_plotdata(&out_dir.join("plotdata.dat"), best)?;
    let fit = fit_rate(best, best.final_theta(), None, 1e-5);
    let tail = best.risks.len() / 2;
    let probe = kl_probe(
        &best.risks[tail..],
        &best.grad_norms[tail..],
        best.final_risk(),
        1e-12,
    );
    let all_diverged = outcome.diverged_count == outcome.runs.len();
    let report = json!({
        "final_risk": outcome.final_best_risk,
        "best_kappa": outcome.best_kappa,
        "rate_fit": fit,
        "kl_probe": probe,
        "diverged_count": outcome.diverged_count,
        "inits": outcome.runs.len(),
    });
    output::write_json(&out_dir.join("report.json"), &report)?;
    println!(
        "multistart: best risk {} from initialization {}",
        outcome.final_best_risk, outcome.best_kappa
    );
    Ok(if all_diverged { EXIT_ALL_DIVERGED } else { 0 })
}

fn cmd_rates(cli: &Cli, config: &Path) -> anyhow::Result<u8> {
    let cfg = load_config(config)?;
    let (dim, grad, risk) = model_closures(&cfg)?;
    let dynamics = cfg
        .dynamics
        .clone()
        .ok_or_else(|| anyhow::anyhow!("config needs a `dynamics` block"))?;
    let gf = dynamics.gf_config()?;
    let seed = effective_seed(cli, &cfg);
    let out_dir = ensure_out(cli)?;
    let mut rng = SplitMix64::stream(seed, 0);
    let theta0: Vec<f64> = (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect();
    let traj = gf_integrate(&theta0, grad, risk, &gf);

    output::write_trajectory_csv(&out_dir.join("trajectory_0.csv"), &traj)?;
    output::write_plotdata(&out_dir.join("plotdata.dat"), &traj)?;
    let fit = fit_rate(&traj, traj.final_theta(), None, 1e-5);
    let tail = traj.risks.len() / 2;
    let probe = kl_probe(
        &traj.risks[tail..],
        &traj.grad_norms[tail..],
        traj.final_risk(),
        1e-12,
    );
    let report = json!({
        "final_risk": traj.final_risk(),
        "diverged": traj.diverged,
        "energy_residual": traj.energy_residual,
        "rate_fit": fit,
        "kl_probe": probe,
    });
    output::write_json(&out_dir.join("report.json"), &report)?;
    println!(
        "rates: beta {} risk-rate {} alpha {}",
        fit.beta_hat, fit.risk_rate, probe.alpha_hat
    );
    Ok(if traj.diverged { EXIT_ALL_DIVERGED } else { 0 })
}

fn cmd_widthscan(cli: &Cli, config: &Path) -> anyhow::Result<u8> {
    let cfg = load_config(config)?;
    let (target, density) = cfg.problem.parse_f64()?;
    let problem = Problem::new(target, density).map_err(|e| anyhow::anyhow!("{e}"))?;
    let widths = cfg
        .widths
        .clone()
        .ok_or_else(|| anyhow::anyhow!("config needs a `widths` list"))?;
    let dynamics = cfg
        .dynamics
        .clone()
        .ok_or_else(|| anyhow::anyhow!("config needs a `dynamics` block"))?;
    let seed = effective_seed(cli, &cfg);
    let gd = dynamics.gd_config(seed)?;
    let out_dir = ensure_out(cli)?;
    let archs: Vec<DeepArch> = widths
        .iter()
        .map(|&w| DeepArch::new(vec![1, w, 1]).map_err(|e| anyhow::anyhow!("{e}")))
        .collect::<anyhow::Result<_>>()?;
    let rows = width_scan(&archs, &problem, &gd).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut csv = String::from("min_width,best_risk,seeds_used\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            row.min_width, row.best_risk, row.seeds_used
        ));
    }
    std::fs::write(out_dir.join("widthscan.csv"), &csv)?;
    let report = json!({ "rows": rows });
    output::write_json(&out_dir.join("report.json"), &report)?;
    print!("{csv}");
    Ok(0)
}

fn cmd_approx(cli: &Cli, config: &Path, theta_path: &Path) -> anyhow::Result<u8> {
    let cfg = load_config(config)?;
    let theta_f64 = output::read_theta_csv(theta_path)?;
    let out_dir = ensure_out(cli)?;
    let (theta_out, report): (Vec<f64>, serde_json::Value) = match cli.mode {
        Mode::Rational => {
            let (target, density) = cfg.problem.parse_rational()?;
            let problem = Problem::new(target, density).map_err(|e| anyhow::anyhow!("{e}"))?;
            let entries: Vec<Rat> = theta_f64
                .iter()
                .map(|v| {
                    Rat::from_f64_exact(*v).ok_or_else(|| anyhow::anyhow!("non-finite theta entry"))
                })
                .collect::<anyhow::Result<_>>()?;
            let theta = ShallowParams::from_vec(entries).map_err(|e| anyhow::anyhow!("{e}"))?;
            let out = better_approx(&theta, &problem).map_err(|e| anyhow::anyhow!("{e}"))?;
            (
                out.theta.theta().iter().map(|v| v.to_f64()).collect(),
                json!({
                    "risk_before": out.risk_before.to_f64(),
                    "risk_after": out.risk_after.to_f64(),
                    "Q_before": out.q_before,
                    "Q_after": out.q_after,
                    "lip_after": out.lip_after.to_f64(),
                    "mode": "rational",
                }),
            )
        }
        Mode::Float => {
            let (target, density) = cfg.problem.parse_f64()?;
            let problem = Problem::new(target, density).map_err(|e| anyhow::anyhow!("{e}"))?;
            let theta =
                ShallowParams::from_vec(theta_f64.clone()).map_err(|e| anyhow::anyhow!("{e}"))?;
            let out = better_approx(&theta, &problem).map_err(|e| anyhow::anyhow!("{e}"))?;
            (
                out.theta.theta().to_vec(),
                json!({
                    "risk_before": out.risk_before,
                    "risk_after": out.risk_after,
                    "Q_before": out.q_before,
                    "Q_after": out.q_after,
                    "lip_after": out.lip_after,
                    "mode": "float",
                }),
            )
        }
    };
    output::write_theta_csv(&out_dir.join("theta_out.csv"), &theta_out)?;
    output::write_json(&out_dir.join("report.json"), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(0)
}
