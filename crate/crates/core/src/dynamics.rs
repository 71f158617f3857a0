//! Training dynamics: gradient-flow integration with an energy-identity
//! validity check, plain gradient descent, the multi-start random
//! initialization driver, one-step descent monitoring, convergence-rate
//! fitting, and the Kurdyka-Lojasiewicz exponent probe.
//!
//! Everything is generic over the problem: risk and gradient enter as
//! closures over flat `f64` parameter vectors, so the same machinery drives
//! shallow exact gradients, deep exact gradients, and synthetic surrogates.

use crate::par::par_map_idx;
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};

/// Norm threshold beyond which a trajectory is classified as divergent
/// (divergence genuinely happens for bad initializations; it is an outcome,
/// not an error).
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GFConfig {
    pub step: f64,
    pub horizon: f64,
    pub integrator: Integrator,
    /// Energy residual tolerance, relative to `1 + L(theta_0)`.
    pub energy_tol_factor: f64,
    /// Number of times the step is halved when the residual is too large.
    pub max_retries: u32,
    /// Snapshot thinning stride (risk and gradient norms are kept per step).
    pub stride: usize,
}

impl Default for GFConfig {
    fn default() -> Self {
        GFConfig {
            step: 1e-3,
            horizon: 10.0,
            integrator: Integrator::Rk4,
            energy_tol_factor: 1e-6,
            max_retries: 6,
            stride: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitSampler {
    /// Uniform on the cube `[-c, c]^d`.
    Uniform { c: f64 },
    /// Componentwise standard Cauchy scaled by `scale`; has positive mass
    /// around every parameter vector, matching the random-init hypothesis
    /// literally.
    Cauchy { scale: f64 },
}

impl InitSampler {
    pub fn draw(&self, rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
        match self {
            InitSampler::Uniform { c } => (0..dim).map(|_| rng.uniform(-c, *c)).collect(),
            InitSampler::Cauchy { scale } => (0..dim).map(|_| scale * rng.cauchy()).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GDConfig {
    pub gamma: f64,
    pub steps: usize,
    pub inits: usize,
    pub sampler: InitSampler,
    pub master_seed: u64,
    pub stride: usize,
}

impl Default for GDConfig {
    fn default() -> Self {
        GDConfig {
            gamma: 1e-2,
            steps: 1000,
            inits: 1,
            sampler: InitSampler::Uniform { c: 2.0 },
            master_seed: 0,
            stride: 1,
        }
    }
}

/// Time-stamped record of one run: risk and gradient norm at every step,
/// parameter snapshots thinned by the stride.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Time (GF) or step index (GD) for every recorded risk value.
    pub times: Vec<f64>,
    pub risks: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    /// Running trapezoid quadrature of the squared gradient norm (GF only).
    pub cumulative_grad_sq: Option<Vec<f64>>,
    pub diverged: bool,
    /// |L(T) - L(0) + int ||G||^2| for GF runs.
    pub energy_residual: Option<f64>,
    /// Step size actually used after any halvings.
    pub step_used: Option<f64>,
}

impl Trajectory {
    pub fn final_risk(&self) -> f64 {
        *self.risks.last().unwrap()
    }

    pub fn final_theta(&self) -> &[f64] {
        &self.snapshots.last().unwrap().1
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn is_bad(v: &[f64], risk: f64) -> bool {
    !risk.is_finite() || norm(v) > DIVERGENCE_NORM
}

/// Composite Simpson over uniformly spaced samples (trapezoid on a trailing
/// odd panel); fourth-order, so the energy residual inherits the RK4 rate.
fn simpson_uniform(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let panels = n - 1;
    let even_panels = panels - (panels % 2);
    let mut i = 0;
    while i + 2 <= even_panels {
        total += h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
        i += 2;
    }
    if panels % 2 == 1 {
        total += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    total
}

/// Integrates the gradient flow `dTheta/dt = -G(Theta)` with a fixed step.
/// The energy identity `L(T) = L(0) - int ||G||^2` is the validity signal:
/// when its residual exceeds `energy_tol_factor * (1 + L(0))` the step is
/// halved and the integration restarts.
pub fn gf_integrate(
    theta0: &[f64],
    grad: impl Fn(&[f64]) -> Vec<f64>,
    risk: impl Fn(&[f64]) -> f64,
    config: &GFConfig,
) -> Trajectory {
    assert!(config.step > 0.0 && config.horizon >= 0.0);
    let risk0 = risk(theta0);
    let tol = config.energy_tol_factor * (1.0 + risk0.abs());
    let mut h = config.step;
    let mut attempt = 0;
    loop {
        let traj = gf_attempt(theta0, &grad, &risk, config, h, risk0);
        let ok = traj.diverged || traj.energy_residual.map(|r| r <= tol).unwrap_or(true);
        if ok || attempt >= config.max_retries {
            return traj;
        }
        h *= 0.5;
        attempt += 1;
    }
}

fn gf_attempt(
    theta0: &[f64],
    grad: &impl Fn(&[f64]) -> Vec<f64>,
    risk: &impl Fn(&[f64]) -> f64,
    config: &GFConfig,
    h: f64,
    risk0: f64,
) -> Trajectory {
    let n_steps = (config.horizon / h).ceil() as usize;
    let stride = config.stride.max(1);
    let mut theta = theta0.to_vec();
    let mut times = vec![0.0];
    let mut risks = vec![risk0];
    let g0 = grad(&theta);
    let mut grad_norms = vec![norm(&g0)];
    let mut cumulative = vec![0.0];
    let mut snapshots = vec![(0.0, theta.clone())];
    let mut diverged = false;

    let mut t = 0.0;
    for step in 0..n_steps {
        let dt = h.min(config.horizon - t);
        if dt <= 0.0 {
            break;
        }
        theta = match config.integrator {
            Integrator::Euler => {
                let g = grad(&theta);
                theta.iter().zip(&g).map(|(x, gi)| x - dt * gi).collect()
            }
            Integrator::Rk4 => {
                let k1 = grad(&theta);
                let mid1: Vec<f64> = theta
                    .iter()
                    .zip(&k1)
                    .map(|(x, g)| x - 0.5 * dt * g)
                    .collect();
                let k2 = grad(&mid1);
                let mid2: Vec<f64> = theta
                    .iter()
                    .zip(&k2)
                    .map(|(x, g)| x - 0.5 * dt * g)
                    .collect();
                let k3 = grad(&mid2);
                let end: Vec<f64> = theta.iter().zip(&k3).map(|(x, g)| x - dt * g).collect();
                let k4 = grad(&end);
                theta
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x - dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect()
            }
        };
        t += dt;
        let r = risk(&theta);
        let gn = norm(&grad(&theta));
        times.push(t);
        risks.push(r);
        grad_norms.push(gn);
        let prev = cumulative[cumulative.len() - 1];
        let g_prev = grad_norms[grad_norms.len() - 2];
        cumulative.push(prev + 0.5 * dt * (g_prev * g_prev + gn * gn));
        if (step + 1) % stride == 0 || step + 1 == n_steps {
            snapshots.push((t, theta.clone()));
        }
        if is_bad(&theta, r) {
            diverged = true;
            break;
        }
    }
    let sq: Vec<f64> = grad_norms.iter().map(|g| g * g).collect();
    let energy_int = if n_steps == 0 {
        0.0
    } else {
        simpson_uniform(&sq, h.min(config.horizon / n_steps as f64))
    };
    let residual = (risks[risks.len() - 1] - risks[0] + energy_int).abs();
    Trajectory {
        times,
        risks,
        grad_norms,
        snapshots,
        cumulative_grad_sq: Some(cumulative),
        diverged,
        energy_residual: Some(residual),
        step_used: Some(h),
    }
}

/// Plain gradient descent `Theta_{k+1} = Theta_k - gamma G(Theta_k)`.
pub fn gd_run(
    theta0: &[f64],
    gamma: f64,
    steps: usize,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    risk: impl Fn(&[f64]) -> f64,
    stride: usize,
) -> Trajectory {
    assert!(gamma >= 0.0);
    let stride = stride.max(1);
    let mut theta = theta0.to_vec();
    let mut times = vec![0.0];
    let mut risks = vec![risk(&theta)];
    let mut grad_norms = Vec::with_capacity(steps + 1);
    let mut snapshots = vec![(0.0, theta.clone())];
    let mut diverged = is_bad(&theta, risks[0]);
    let mut k = 0usize;
    while k < steps && !diverged {
        let g = grad(&theta);
        grad_norms.push(norm(&g));
        for (x, gi) in theta.iter_mut().zip(&g) {
            *x -= gamma * gi;
        }
        k += 1;
        let r = risk(&theta);
        times.push(k as f64);
        risks.push(r);
        if k.is_multiple_of(stride) || k == steps {
            snapshots.push((k as f64, theta.clone()));
        }
        diverged = is_bad(&theta, r);
    }
    grad_norms.push(norm(&grad(&theta)));
    Trajectory {
        times,
        risks,
        grad_norms,
        snapshots,
        cumulative_grad_sq: None,
        diverged,
        energy_residual: None,
        step_used: None,
    }
}

#[derive(Clone, Debug)]
pub struct MultistartOutcome {
    pub runs: Vec<Trajectory>,
    /// Index of the risk-minimizing run after each step (ties to the
    /// smallest index).
    pub argmin_per_step: Vec<usize>,
    pub best_risk_per_step: Vec<f64>,
    pub final_best_risk: f64,
    pub best_kappa: usize,
    pub diverged_count: usize,
}

/// Runs `config.inits` independent GD trajectories from i.i.d. random
/// initializations and tracks the per-step risk argmin. Initialization `k`
/// draws from the RNG stream `hash(master_seed, k)`, so the outcome is
/// deterministic, independent of scheduling, and nested in the number of
/// initializations.
pub fn multistart(
    dim: usize,
    grad: impl Fn(&[f64]) -> Vec<f64> + Sync + Send,
    risk: impl Fn(&[f64]) -> f64 + Sync + Send,
    config: &GDConfig,
) -> MultistartOutcome {
    assert!(config.inits >= 1);
    let runs: Vec<Trajectory> = par_map_idx(config.inits, |k| {
        let mut rng = SplitMix64::stream(config.master_seed, k as u64);
        let theta0 = config.sampler.draw(&mut rng, dim);
        gd_run(
            &theta0,
            config.gamma,
            config.steps,
            &grad,
            &risk,
            config.stride,
        )
    });
    collect_multistart(runs, config.steps)
}

/// Deterministic argmin bookkeeping shared by the parallel and sequential
/// drivers. Steps at which no run has a finite value (everything diverged)
/// keep the previous selection and report an infinite best risk.
pub fn collect_multistart(runs: Vec<Trajectory>, steps: usize) -> MultistartOutcome {
    let mut argmin = Vec::with_capacity(steps + 1);
    let mut best = Vec::with_capacity(steps + 1);
    let mut last_valid = 0usize;
    for n in 0..=steps {
        let mut k_best = usize::MAX;
        let mut r_best = f64::INFINITY;
        for (k, run) in runs.iter().enumerate() {
            // runs that diverged early have no value at later steps
            let Some(&r) = run.risks.get(n) else { continue };
            if !r.is_nan() && r < r_best {
                r_best = r;
                k_best = k;
            }
        }
        if k_best == usize::MAX {
            k_best = last_valid;
        } else {
            last_valid = k_best;
        }
        argmin.push(k_best);
        best.push(r_best);
    }
    let diverged_count = runs.iter().filter(|r| r.diverged).count();
    MultistartOutcome {
        final_best_risk: *best.last().unwrap(),
        best_kappa: *argmin.last().unwrap(),
        runs,
        argmin_per_step: argmin,
        best_risk_per_step: best,
        diverged_count,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DescentReport {
    pub total_steps: usize,
    /// Steps that stayed within one smoothness cell.
    pub non_crossing_steps: usize,
    pub crossing_steps: usize,
    /// Non-crossing steps satisfying the one-step descent inequality.
    pub satisfied: usize,
    pub fraction_satisfied: f64,
    /// Local Lipschitz estimate of the gradient along the trajectory.
    pub l_hat: f64,
    pub gamma: f64,
    pub gamma_within_bound: bool,
}

/// Checks the one-step descent inequality
/// `L(k+1) <= L(k) - gamma/2 ||G(k)||^2 + tol` along a fully recorded GD run.
/// Steps whose endpoints lie in different smoothness cells (per the caller's
/// signature function) are flagged and excluded from the fraction.
pub fn descent_check(
    thetas: &[Vec<f64>],
    risks: &[f64],
    grads: &[Vec<f64>],
    gamma: f64,
    tol: f64,
    mut same_cell: impl FnMut(&[f64], &[f64]) -> bool,
) -> DescentReport {
    assert_eq!(thetas.len(), risks.len());
    assert_eq!(thetas.len(), grads.len());
    let steps = thetas.len().saturating_sub(1);
    let mut l_hat = 0.0f64;
    for k in 0..steps {
        let dg = norm(
            &grads[k + 1]
                .iter()
                .zip(&grads[k])
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        let dx = norm(
            &thetas[k + 1]
                .iter()
                .zip(&thetas[k])
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        if dx > 1e-300 {
            l_hat = l_hat.max(dg / dx);
        }
    }
    let mut satisfied = 0;
    let mut crossing = 0;
    let mut non_crossing = 0;
    for k in 0..steps {
        if !same_cell(&thetas[k], &thetas[k + 1]) {
            crossing += 1;
            continue;
        }
        non_crossing += 1;
        let gsq: f64 = grads[k].iter().map(|g| g * g).sum();
        if risks[k + 1] <= risks[k] - 0.5 * gamma * gsq + tol {
            satisfied += 1;
        }
    }
    DescentReport {
        total_steps: steps,
        non_crossing_steps: non_crossing,
        crossing_steps: crossing,
        satisfied,
        fraction_satisfied: if non_crossing == 0 {
            1.0
        } else {
            satisfied as f64 / non_crossing as f64
        },
        l_hat,
        gamma,
        gamma_within_bound: l_hat <= 0.0 || gamma <= 1.0 / l_hat,
    }
}

/// Least squares `y = slope x + intercept` with the coefficient of
/// determination.
pub fn linear_regression(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    (slope, intercept, r2)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateFit {
    /// Exponent of `||Theta_t - ref|| <= c (1+t)^{-beta}` from the tail.
    pub beta_hat: f64,
    pub beta_constant: f64,
    pub beta_r2: f64,
    /// Exponent of the risk gap decay `L(Theta_t) - L(ref) ~ (1+t)^{-rate}`.
    pub risk_rate: f64,
    pub risk_constant: f64,
    pub risk_r2: f64,
    pub window: usize,
    pub inconclusive: bool,
}

/// Fits power-law exponents on the trajectory tail (last half of the
/// snapshots) against a reference parameter vector, by default the final
/// snapshot. `risk_ref` is the risk at the reference (`None` uses the
/// smallest observed risk); `grad_threshold` decides whether the run counts
/// as converged.
pub fn fit_rate(
    traj: &Trajectory,
    reference: &[f64],
    risk_ref: Option<f64>,
    grad_threshold: f64,
) -> RateFit {
    let converged = !traj.diverged
        && traj
            .grad_norms
            .last()
            .map(|g| *g <= grad_threshold)
            .unwrap_or(false);
    let snaps = &traj.snapshots;
    let tail_start = snaps.len() / 2;
    let mut dist_x = Vec::new();
    let mut dist_y = Vec::new();
    for (t, th) in &snaps[tail_start..] {
        let d = norm(
            &th.iter()
                .zip(reference)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        if d > 1e-300 {
            dist_x.push((1.0 + t).ln());
            dist_y.push(d.ln());
        }
    }
    let (bslope, bic, br2) = if dist_x.len() >= 3 {
        linear_regression(&dist_x, &dist_y)
    } else {
        (0.0, 0.0, 0.0)
    };
    // risk gap against the reference risk
    let floor =
        risk_ref.unwrap_or_else(|| traj.risks.iter().cloned().fold(f64::INFINITY, f64::min));
    let tail_risk_start = traj.risks.len() / 2;
    let mut rx = Vec::new();
    let mut ry = Vec::new();
    for (t, r) in traj.times[tail_risk_start..]
        .iter()
        .zip(&traj.risks[tail_risk_start..])
    {
        let gap = r - floor;
        if gap > 1e-300 {
            rx.push((1.0 + t).ln());
            ry.push(gap.ln());
        }
    }
    let (rslope, ric, rr2) = if rx.len() >= 3 {
        linear_regression(&rx, &ry)
    } else {
        (0.0, 0.0, 0.0)
    };
    RateFit {
        beta_hat: -bslope,
        beta_constant: bic.exp(),
        beta_r2: br2,
        risk_rate: -rslope,
        risk_constant: ric.exp(),
        risk_r2: rr2,
        window: snaps.len() - tail_start,
        inconclusive: !converged,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KLProbe {
    /// Estimated exponent of `|L - L*|^alpha <= c ||G||`.
    pub alpha_hat: f64,
    /// Smallest constant making the inequality hold on every tail point.
    pub c_hat: f64,
    pub points: usize,
    pub r2: f64,
    pub inconclusive: bool,
}

/// Estimates the Kurdyka-Lojasiewicz exponent from trajectory tail pairs
/// `(log |L - L*|, log ||G||)`. The reported constant is the max observed
/// ratio, so the inequality holds on the probed points by construction; the
/// probe is an empirical estimate, not ground truth.
pub fn kl_probe(risks: &[f64], grad_norms: &[f64], risk_ref: f64, floor: f64) -> KLProbe {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, g) in risks.iter().zip(grad_norms) {
        let gap = (r - risk_ref).abs();
        if gap > floor && *g > 0.0 {
            xs.push(gap.ln());
            ys.push(g.ln());
        }
    }
    if xs.len() < 3 {
        return KLProbe {
            alpha_hat: f64::NAN,
            c_hat: f64::NAN,
            points: xs.len(),
            r2: 0.0,
            inconclusive: true,
        };
    }
    let (alpha, _, r2) = linear_regression(&xs, &ys);
    let mut c_hat = 0.0f64;
    for (lx, ly) in xs.iter().zip(&ys) {
        // |gap|^alpha / ||G|| = exp(alpha lx - ly)
        c_hat = c_hat.max((alpha * lx - ly).exp());
    }
    KLProbe {
        alpha_hat: alpha,
        c_hat,
        points: xs.len(),
        r2,
        inconclusive: false,
    }
}
