//! Shallow ReLU networks on an interval: flat parameter layout, exact
//! realization as a piecewise-linear function, exact risk and generalized
//! gradient against piecewise-polynomial target and density, and the smoothed
//! risk family used to define the generalized gradient in the first place.
//!
//! Parameter layout for width `h`: `w_j = theta_j`, `b_j = theta_{h+j}`,
//! `v_j = theta_{2h+j}`, `c = theta_{3h+1}` (1-based), so the parameter count
//! is `3h + 1`. The generalized gradient takes the ReLU derivative as the
//! left derivative `1_(0,inf)`, strict at zero.

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::pwfun::{PiecewiseLinear, PiecewisePoly};
use crate::quad::adaptive_gk_vec;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShallowArch {
    pub width: usize,
}

impl ShallowArch {
    pub fn new(width: usize) -> Self {
        ShallowArch { width }
    }

    pub fn param_count(&self) -> usize {
        3 * self.width + 1
    }
}

/// Flat parameter vector of length `3h + 1` with named views.
#[derive(Clone, Debug, PartialEq)]
pub struct ShallowParams<S> {
    theta: Vec<S>,
}

impl<S: Scalar> ShallowParams<S> {
    pub fn from_vec(theta: Vec<S>) -> Result<Self> {
        if theta.is_empty() || !(theta.len() - 1).is_multiple_of(3) {
            return Err(Error::InvalidInput(format!(
                "parameter vector length {} is not 3h+1",
                theta.len()
            )));
        }
        Ok(ShallowParams { theta })
    }

    pub fn zeros(width: usize) -> Self {
        ShallowParams {
            theta: vec![S::zero(); 3 * width + 1],
        }
    }

    /// Packs `(w, b, v, c)` into the flat layout.
    pub fn pack(w: &[S], b: &[S], v: &[S], c: S) -> Result<Self> {
        if w.len() != b.len() || w.len() != v.len() {
            return Err(Error::InvalidInput("w, b, v must share a length".into()));
        }
        let mut theta = Vec::with_capacity(3 * w.len() + 1);
        theta.extend_from_slice(w);
        theta.extend_from_slice(b);
        theta.extend_from_slice(v);
        theta.push(c);
        Ok(ShallowParams { theta })
    }

    /// Unpacks into `(w, b, v, c)`.
    pub fn unpack(&self) -> (&[S], &[S], &[S], &S) {
        let h = self.width();
        (
            &self.theta[0..h],
            &self.theta[h..2 * h],
            &self.theta[2 * h..3 * h],
            &self.theta[3 * h],
        )
    }

    pub fn width(&self) -> usize {
        (self.theta.len() - 1) / 3
    }

    pub fn theta(&self) -> &[S] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [S] {
        &mut self.theta
    }

    pub fn into_vec(self) -> Vec<S> {
        self.theta
    }

    pub fn w(&self, j: usize) -> &S {
        &self.theta[j]
    }

    pub fn b(&self, j: usize) -> &S {
        &self.theta[self.width() + j]
    }

    pub fn v(&self, j: usize) -> &S {
        &self.theta[2 * self.width() + j]
    }

    pub fn c(&self) -> &S {
        &self.theta[3 * self.width()]
    }

    /// Kink location `q_j = -b_j / w_j`, `None` when `w_j = 0` (at infinity).
    pub fn kink(&self, j: usize) -> Option<S> {
        if self.w(j).is_zero() {
            None
        } else {
            Some(-self.b(j).clone() / self.w(j).clone())
        }
    }

    /// True on the open set where every neuron has `|w_j| + |b_j| > 0`;
    /// there the risk is C^1 and its gradient equals the generalized one.
    pub fn in_smooth_region(&self) -> bool {
        (0..self.width()).all(|j| !self.w(j).is_zero() || !self.b(j).is_zero())
    }

    pub fn map_to_f64(&self) -> ShallowParams<f64> {
        ShallowParams {
            theta: self.theta.iter().map(|t| t.to_f64()).collect(),
        }
    }
}

/// Supervised learning problem: continuous piecewise-polynomial target and
/// nonnegative piecewise-polynomial density on a shared interval.
#[derive(Clone)]
pub struct Problem<S> {
    pub target: PiecewisePoly<S>,
    pub density: PiecewisePoly<S>,
}

impl<S: Scalar> std::fmt::Debug for Problem<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("target", &self.target)
            .field("density", &self.density)
            .finish()
    }
}

impl<S: Scalar> Problem<S> {
    pub fn new(target: PiecewisePoly<S>, density: PiecewisePoly<S>) -> Result<Self> {
        let (a1, b1) = target.domain();
        let (a2, b2) = density.domain();
        if !a1.eq_within(&a2, 1e-12) || !b1.eq_within(&b2, 1e-12) {
            return Err(Error::Domain("target/density domain mismatch".into()));
        }
        if !target.is_continuous() {
            return Err(Error::InvalidInput("target must be continuous".into()));
        }
        let (lo, _) = density.range_bounds();
        if lo < S::zero() && !lo.eq_within(&S::zero(), 1e-12) {
            return Err(Error::InvalidInput(format!(
                "density must be nonnegative (min {lo})"
            )));
        }
        Ok(Problem { target, density })
    }

    pub fn domain(&self) -> (S, S) {
        self.target.domain()
    }

    /// Lipschitz bound of the target, from its piece derivatives.
    pub fn target_lipschitz(&self) -> S {
        self.target.lipschitz_bound()
    }

    pub fn map_to_f64(&self) -> Problem<f64> {
        let map_pp = |pp: &PiecewisePoly<S>| {
            PiecewisePoly::new(
                pp.breakpoints().iter().map(|x| x.to_f64()).collect(),
                pp.pieces()
                    .iter()
                    .map(|p| Poly::new(p.coeffs().iter().map(|c| c.to_f64()).collect()))
                    .collect(),
            )
            .expect("valid piecewise polynomial maps to valid float form")
        };
        Problem {
            target: map_pp(&self.target),
            density: map_pp(&self.density),
        }
    }
}

/// Exact realization `x -> c + sum_j v_j max{b_j + w_j x, 0}` as a canonical
/// piecewise-linear function on `[a, b]`. Dead neurons (`w_j = b_j = 0`)
/// contribute nothing; the breakpoint count never exceeds the width.
pub fn realize<S: Scalar>(theta: &ShallowParams<S>, a: &S, b: &S) -> PiecewiseLinear<S> {
    let h = theta.width();
    let mut kinks: Vec<S> = Vec::new();
    for j in 0..h {
        if let Some(q) = theta.kink(j) {
            if q > *a && q < *b {
                kinks.push(q);
            }
        }
    }
    kinks.sort_by(|x, y| x.cmp_total(y));
    kinks.dedup_by(|x, y| x.eq_within(y, 0.0));
    let mut grid = Vec::with_capacity(kinks.len() + 2);
    grid.push(a.clone());
    grid.extend(kinks);
    grid.push(b.clone());

    let mut slopes = Vec::with_capacity(grid.len() - 1);
    let mut intercepts = Vec::with_capacity(grid.len() - 1);
    for win in grid.windows(2) {
        let mid = (win[0].clone() + win[1].clone()).half();
        let mut slope = S::zero();
        let mut inter = theta.c().clone();
        for j in 0..h {
            let pre = theta.b(j).clone() + theta.w(j).clone() * mid.clone();
            if pre > S::zero() {
                slope += theta.v(j).clone() * theta.w(j).clone();
                inter += theta.v(j).clone() * theta.b(j).clone();
            }
        }
        slopes.push(slope);
        intercepts.push(inter);
    }
    PiecewiseLinear::canonicalize(grid, slopes, intercepts)
        .expect("realization is continuous by construction")
}

/// Exact risk `L(theta) = int (f - N)^2 p dx` by merging the breakpoints of
/// the realization with those of target and density and integrating the
/// resulting piecewise polynomial in closed form.
pub fn risk_exact<S: Scalar>(theta: &ShallowParams<S>, problem: &Problem<S>) -> S {
    let (a, b) = problem.domain();
    let net = realize(theta, &a, &b).to_piecewise_poly();
    let err = net
        .sub(&problem.target)
        .expect("net and target share the domain");
    let sq = err.mul(&err).expect("same function, same domain");
    sq.mul(&problem.density)
        .expect("density shares the domain")
        .integrate()
}

/// Exact generalized gradient, with the ReLU derivative taken as the left
/// derivative `1_(0,inf)` at every pre-activation. Each component is an exact
/// piecewise-polynomial integral.
pub fn grad_exact<S: Scalar>(theta: &ShallowParams<S>, problem: &Problem<S>) -> Vec<S> {
    let (a, b) = problem.domain();
    let h = theta.width();
    let net = realize(theta, &a, &b).to_piecewise_poly();
    let resid = net
        .sub(&problem.target)
        .expect("net and target share the domain");
    // weighted residual 2 (N - f) p
    let weighted = resid
        .mul(&problem.density)
        .expect("density shares the domain")
        .scale(&S::from_int(2));
    let x_poly = PiecewisePoly::from_poly(a.clone(), b.clone(), Poly::affine(S::zero(), S::one()))
        .expect("domain is a valid interval");
    let weighted_x = weighted.mul(&x_poly).expect("same domain");

    let mut grad = vec![S::zero(); theta.theta.len()];
    for j in 0..h {
        let w = theta.w(j).clone();
        let bj = theta.b(j).clone();
        let v = theta.v(j).clone();
        // active region {x : w x + b > 0} clipped to [a, b]
        let (lo, hi) = if w.is_zero() {
            if bj > S::zero() {
                (a.clone(), b.clone())
            } else {
                (a.clone(), a.clone())
            }
        } else {
            let q = -bj.clone() / w.clone();
            if w > S::zero() {
                (q.max_val(a.clone()), b.clone())
            } else {
                (a.clone(), q.min_val(b.clone()))
            }
        };
        grad[j] = v.clone() * weighted_x.integrate_over(&lo, &hi);
        grad[h + j] = v.clone() * weighted.integrate_over(&lo, &hi);
        // dL/dv_j = int 2 max{w x + b, 0} (N - f) p
        let hinge = PiecewisePoly::from_poly(a.clone(), b.clone(), Poly::affine(bj, w))
            .expect("domain is a valid interval")
            .relu()
            .expect("affine pieces are continuous");
        grad[2 * h + j] = hinge.mul(&weighted).expect("same domain").integrate();
    }
    grad[3 * h] = weighted.integrate();
    grad
}

/// Smoothing thresholds from the GF theorem: the blend zone of `R_r` is
/// `[A/r, B/r]` with `A = 1/2`, `B = 1`.
pub const SMOOTH_A: f64 = 0.5;
pub const SMOOTH_B: f64 = 1.0;
/// Uniform bound on `|R_r'|` attained by the cubic Hermite blend.
pub const SMOOTH_DERIV_BOUND: f64 = 25.0 / 9.0;

/// The C^1 ReLU approximation `R_r`: zero below `A/r`, identity above `B/r`,
/// cubic Hermite in between (value/derivative 0 on the left, value `B/r`,
/// derivative 1 on the right).
pub fn smooth_relu(r: f64, x: f64) -> f64 {
    debug_assert!(r >= 1.0);
    let lo = SMOOTH_A / r;
    let hi = SMOOTH_B / r;
    if x <= lo {
        0.0
    } else if x >= hi {
        x
    } else {
        let t = (x - lo) / (hi - lo);
        // hi * h01(t) + (hi - lo) * h11(t) with Hermite bases
        hi * t * t * (3.0 - 2.0 * t) + (hi - lo) * t * t * (t - 1.0)
    }
}

/// Derivative of [`smooth_relu`] in `x`.
pub fn smooth_relu_deriv(r: f64, x: f64) -> f64 {
    let lo = SMOOTH_A / r;
    let hi = SMOOTH_B / r;
    if x <= lo {
        0.0
    } else if x >= hi {
        1.0
    } else {
        let h = hi - lo;
        let t = (x - lo) / h;
        (hi * (6.0 * t - 6.0 * t * t) + h * (3.0 * t * t - 2.0 * t)) / h
    }
}

/// Seam locations of the smoothed integrand: every x where a pre-activation
/// crosses `A/r` or `B/r`, plus the data breakpoints.
fn smoothing_seams(theta: &ShallowParams<f64>, problem: &Problem<f64>, r: f64) -> Vec<f64> {
    let (a, b) = problem.domain();
    let mut seams: Vec<f64> = problem
        .target
        .breakpoints()
        .iter()
        .chain(problem.density.breakpoints())
        .cloned()
        .collect();
    for j in 0..theta.width() {
        let w = *theta.w(j);
        if w != 0.0 {
            for level in [SMOOTH_A / r, SMOOTH_B / r, 0.0] {
                let x = (level - theta.b(j)) / w;
                if x > a && x < b {
                    seams.push(x);
                }
            }
        }
    }
    seams.push(a);
    seams.push(b);
    seams.sort_by(|x, y| x.partial_cmp(y).unwrap());
    seams.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    seams
}

fn net_smoothed(theta: &ShallowParams<f64>, r: f64, x: f64) -> f64 {
    let mut out = *theta.c();
    for j in 0..theta.width() {
        out += theta.v(j) * smooth_relu(r, theta.b(j) + theta.w(j) * x);
    }
    out
}

/// Smoothed risk `L_r(theta)`, by per-piece adaptive Gauss-Kronrod with the
/// seams of `R_r` handled exactly. Requires `r >= 1`.
pub fn risk_smoothed(theta: &ShallowParams<f64>, problem: &Problem<f64>, r: f64) -> Result<f64> {
    if r < 1.0 {
        return Err(Error::Precondition(
            "smoothing parameter must be >= 1".into(),
        ));
    }
    let seams = smoothing_seams(theta, problem, r);
    let mut total = 0.0;
    for w in seams.windows(2) {
        let mut f = |x: f64, out: &mut [f64]| {
            let d = net_smoothed(theta, r, x) - problem.target.eval(&x).unwrap();
            out[0] = d * d * problem.density.eval(&x).unwrap();
        };
        total += adaptive_gk_vec(&mut f, w[0], w[1], 1e-12, 1)[0];
    }
    Ok(total)
}

/// Gradient of the smoothed risk by smooth backprop with `R_r'`; converges to
/// the generalized gradient as `r -> infinity`.
pub fn grad_smoothed(
    theta: &ShallowParams<f64>,
    problem: &Problem<f64>,
    r: f64,
) -> Result<Vec<f64>> {
    if r < 1.0 {
        return Err(Error::Precondition(
            "smoothing parameter must be >= 1".into(),
        ));
    }
    let h = theta.width();
    let d = 3 * h + 1;
    let seams = smoothing_seams(theta, problem, r);
    let mut grad = vec![0.0; d];
    for win in seams.windows(2) {
        let mut f = |x: f64, out: &mut [f64]| {
            let dens = problem.density.eval(&x).unwrap();
            let resid = 2.0 * (net_smoothed(theta, r, x) - problem.target.eval(&x).unwrap()) * dens;
            for j in 0..h {
                let pre = theta.b(j) + theta.w(j) * x;
                let act = smooth_relu(r, pre);
                let dact = smooth_relu_deriv(r, pre);
                out[j] = resid * theta.v(j) * dact * x;
                out[h + j] = resid * theta.v(j) * dact;
                out[2 * h + j] = resid * act;
            }
            out[3 * h] = resid;
        };
        let piece = adaptive_gk_vec(&mut f, win[0], win[1], 1e-12, d);
        for (g, p) in grad.iter_mut().zip(piece) {
            *g += p;
        }
    }
    Ok(grad)
}

/// Signature of the smoothness cell containing `theta`: per neuron, the sign
/// of `w_j` and the bucket of its kink `q_j` relative to the data
/// breakpoints (or the activation sign for degenerate `w_j = 0`). The risk
/// is C^1 with a locally Lipschitz gradient while the signature is constant,
/// so a GD step that changes it has crossed a non-smooth cell boundary.
/// `data_breakpoints` must be sorted ascending.
pub fn smoothness_cell_signature(
    theta: &ShallowParams<f64>,
    data_breakpoints: &[f64],
) -> Vec<(i8, usize)> {
    let mut sig = Vec::with_capacity(theta.width());
    for j in 0..theta.width() {
        let w = *theta.w(j);
        if w == 0.0 {
            sig.push((0, (*theta.b(j) > 0.0) as usize));
            continue;
        }
        let q = -theta.b(j) / w;
        let bucket = data_breakpoints.partition_point(|bp| *bp <= q);
        sig.push((if w > 0.0 { 1 } else { -1 }, bucket));
    }
    sig
}

/// Parameter-space affine domain map: `map_to_unit` turns a network on
/// `[a, b]` into one realizing the same values on `[0, 1]` via
/// `x -> a + (b-a) x`, and `map_from_unit` inverts it.
pub fn map_to_unit<S: Scalar>(theta: &ShallowParams<S>, a: &S, b: &S) -> ShallowParams<S> {
    let h = theta.width();
    let span = b.clone() - a.clone();
    let mut out = theta.theta.clone();
    for j in 0..h {
        out[j] = theta.w(j).clone() * span.clone();
        out[h + j] = theta.b(j).clone() + a.clone() * theta.w(j).clone();
    }
    ShallowParams { theta: out }
}

pub fn map_from_unit<S: Scalar>(theta: &ShallowParams<S>, a: &S, b: &S) -> ShallowParams<S> {
    let h = theta.width();
    let span = b.clone() - a.clone();
    let mut out = theta.theta.clone();
    for j in 0..h {
        out[j] = theta.w(j).clone() / span.clone();
        out[h + j] = theta.b(j).clone() - a.clone() * theta.w(j).clone() / span.clone();
    }
    ShallowParams { theta: out }
}
