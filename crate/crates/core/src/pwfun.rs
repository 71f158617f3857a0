//! Exact calculus of univariate piecewise-polynomial and piecewise-linear
//! functions: evaluation, algebra, ReLU composition, breakpoint and slope
//! accessors, and closed-form integration.
//!
//! Pieces live in global coordinates: piece `i` of a [`PiecewisePoly`] is the
//! polynomial on `[x_{i-1}, x_i]` evaluated at `x` directly, and a
//! [`PiecewiseLinear`] stores `f(x) = A_i x + B_i` per piece. Piece `i` owns
//! the half-open interval `[x_{i-1}, x_i)` except the last piece, which owns
//! its right endpoint too; densities are Lebesgue densities, so breakpoint
//! values never affect integrals.

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Relative tolerance for float-mode continuity checks.
pub const CONTINUITY_TOL: f64 = 1e-12;
/// Relative tolerance for float-mode slope merging in `canonicalize`.
pub const SLOPE_MERGE_TOL: f64 = 1e-9;
/// Proximity at which float-mode breakpoints are deduplicated.
pub const BREAKPOINT_MERGE_TOL: f64 = 1e-12;

#[derive(Clone, PartialEq)]
pub struct PiecewisePoly<S> {
    xs: Vec<S>,
    pieces: Vec<Poly<S>>,
}

impl<S: Scalar> std::fmt::Debug for PiecewisePoly<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PiecewisePoly")
            .field("xs", &self.xs)
            .field("pieces", &self.pieces)
            .finish()
    }
}

impl<S: Scalar> PiecewisePoly<S> {
    pub fn new(xs: Vec<S>, pieces: Vec<Poly<S>>) -> Result<Self> {
        if xs.len() < 2 || pieces.len() + 1 != xs.len() {
            return Err(Error::InvalidInput(format!(
                "need N+1 breakpoints for N pieces, got {} and {}",
                xs.len(),
                pieces.len()
            )));
        }
        for w in xs.windows(2) {
            if w[0].cmp_total(&w[1]) != std::cmp::Ordering::Less {
                return Err(Error::InvalidInput(
                    "breakpoints must be strictly increasing".into(),
                ));
            }
        }
        Ok(PiecewisePoly { xs, pieces })
    }

    /// A single polynomial on `[a, b]`.
    pub fn from_poly(a: S, b: S, p: Poly<S>) -> Result<Self> {
        PiecewisePoly::new(vec![a, b], vec![p])
    }

    pub fn constant(a: S, b: S, c: S) -> Result<Self> {
        PiecewisePoly::from_poly(a, b, Poly::constant(c))
    }

    pub fn domain(&self) -> (S, S) {
        (self.xs[0].clone(), self.xs[self.xs.len() - 1].clone())
    }

    pub fn breakpoints(&self) -> &[S] {
        &self.xs
    }

    pub fn pieces(&self) -> &[Poly<S>] {
        &self.pieces
    }

    fn span(&self) -> f64 {
        (self.xs[self.xs.len() - 1].clone() - self.xs[0].clone())
            .to_f64()
            .abs()
    }

    fn piece_index(&self, x: &S) -> usize {
        // last piece owns its right endpoint
        for i in 0..self.pieces.len() - 1 {
            if *x < self.xs[i + 1] {
                return i;
            }
        }
        self.pieces.len() - 1
    }

    pub fn eval(&self, x: &S) -> Result<S> {
        let (a, b) = self.domain();
        if *x < a || *x > b {
            return Err(Error::Domain(format!("x = {x} outside [{a}, {b}]")));
        }
        Ok(self.pieces[self.piece_index(x)].eval(x))
    }

    /// Maximum jump across interior breakpoints, as f64.
    pub fn max_jump(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..self.pieces.len() {
            let left = self.pieces[i - 1].eval(&self.xs[i]);
            let right = self.pieces[i].eval(&self.xs[i]);
            worst = worst.max((left - right).to_f64().abs());
        }
        worst
    }

    pub fn is_continuous(&self) -> bool {
        let mut scale: f64 = 1.0;
        for p in &self.pieces {
            for c in p.coeffs() {
                scale = scale.max(c.to_f64().abs());
            }
        }
        for i in 1..self.pieces.len() {
            let left = self.pieces[i - 1].eval(&self.xs[i]);
            let right = self.pieces[i].eval(&self.xs[i]);
            if !left.eq_within(&right, CONTINUITY_TOL * scale) {
                return false;
            }
        }
        true
    }

    fn check_same_domain(&self, other: &Self) -> Result<()> {
        let (a1, b1) = self.domain();
        let (a2, b2) = other.domain();
        let tol = BREAKPOINT_MERGE_TOL * (1.0 + self.span());
        if !a1.eq_within(&a2, tol) || !b1.eq_within(&b2, tol) {
            return Err(Error::Domain(format!(
                "domain mismatch: [{a1}, {b1}] vs [{a2}, {b2}]"
            )));
        }
        Ok(())
    }

    /// Union of the two breakpoint grids.
    fn merged_grid(&self, other: &Self) -> Vec<S> {
        let tol = BREAKPOINT_MERGE_TOL * (1.0 + self.span());
        let mut all: Vec<S> = self.xs.iter().chain(other.xs.iter()).cloned().collect();
        all.sort_by(|a, b| a.cmp_total(b));
        all.dedup_by(|a, b| a.eq_within(b, tol));
        all
    }

    fn binary_op(&self, other: &Self, f: impl Fn(&Poly<S>, &Poly<S>) -> Poly<S>) -> Result<Self> {
        self.check_same_domain(other)?;
        let grid = self.merged_grid(other);
        let mut pieces = Vec::with_capacity(grid.len() - 1);
        for w in grid.windows(2) {
            let mid = (w[0].clone() + w[1].clone()).half();
            let pa = &self.pieces[self.piece_index(&mid)];
            let pb = &other.pieces[other.piece_index(&mid)];
            pieces.push(f(pa, pb));
        }
        PiecewisePoly::new(grid, pieces)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.binary_op(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.binary_op(other, |a, b| a.sub(b))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.binary_op(other, |a, b| a.mul(b))
    }

    pub fn neg(&self) -> Self {
        PiecewisePoly {
            xs: self.xs.clone(),
            pieces: self.pieces.iter().map(|p| p.neg()).collect(),
        }
    }

    pub fn scale(&self, s: &S) -> Self {
        PiecewisePoly {
            xs: self.xs.clone(),
            pieces: self.pieces.iter().map(|p| p.scale(s)).collect(),
        }
    }

    /// Merges adjacent pieces carrying identical polynomials.
    pub fn coalesce(&self) -> Self {
        let mut xs = vec![self.xs[0].clone()];
        let mut pieces: Vec<Poly<S>> = vec![self.pieces[0].clone()];
        for i in 1..self.pieces.len() {
            if self.pieces[i] == *pieces.last().unwrap() {
                continue;
            }
            xs.push(self.xs[i].clone());
            pieces.push(self.pieces[i].clone());
        }
        xs.push(self.xs[self.xs.len() - 1].clone());
        PiecewisePoly { xs, pieces }
    }

    /// Pointwise `max{f, 0}`. New breakpoints are inserted at sign-change
    /// roots of each piece: exact for degree <= 1 (and exact quadratics),
    /// isolated by Sturm-count bisection with a Newton polish otherwise.
    pub fn relu(&self) -> Result<Self> {
        if !self.is_continuous() {
            return Err(Error::Precondition(
                "relu composition requires a continuous input".into(),
            ));
        }
        let tol = BREAKPOINT_MERGE_TOL * (1.0 + self.span());
        let mut xs = vec![self.xs[0].clone()];
        let mut pieces = Vec::new();
        for (i, p) in self.pieces.iter().enumerate() {
            let lo = self.xs[i].clone();
            let hi = self.xs[i + 1].clone();
            let mut cuts = p.roots_in_open(&lo, &hi);
            cuts.retain(|c| !c.eq_within(&lo, tol) && !c.eq_within(&hi, tol));
            let mut grid = vec![lo];
            grid.extend(cuts);
            grid.push(hi);
            for w in grid.windows(2) {
                let keep = sign_on_subinterval(p, &w[0], &w[1]) >= 0;
                xs.push(w[1].clone());
                pieces.push(if keep { p.clone() } else { Poly::zero() });
            }
        }
        Ok(PiecewisePoly { xs, pieces }.coalesce())
    }

    /// Exact definite integral over the whole domain.
    pub fn integrate(&self) -> S {
        let mut total = S::zero();
        for (i, p) in self.pieces.iter().enumerate() {
            total += p.integrate(&self.xs[i], &self.xs[i + 1]);
        }
        total
    }

    /// Exact integral restricted to `[lo, hi]` (clamped to the domain).
    pub fn integrate_over(&self, lo: &S, hi: &S) -> S {
        let (a, b) = self.domain();
        let lo = lo.clone().max_val(a);
        let hi = hi.clone().min_val(b);
        if lo.cmp_total(&hi) != std::cmp::Ordering::Less {
            return S::zero();
        }
        let mut total = S::zero();
        for (i, p) in self.pieces.iter().enumerate() {
            let l = self.xs[i].clone().max_val(lo.clone());
            let h = self.xs[i + 1].clone().min_val(hi.clone());
            if l.cmp_total(&h) == std::cmp::Ordering::Less {
                total += p.integrate(&l, &h);
            }
        }
        total
    }

    /// Inserts extra breakpoints (values outside the domain are ignored).
    pub fn refine(&self, extra: &[S]) -> Self {
        let (a, b) = self.domain();
        let tol = BREAKPOINT_MERGE_TOL * (1.0 + self.span());
        let mut grid = self.xs.clone();
        for x in extra {
            if *x > a && *x < b {
                grid.push(x.clone());
            }
        }
        grid.sort_by(|p, q| p.cmp_total(q));
        grid.dedup_by(|p, q| p.eq_within(q, tol));
        let mut pieces = Vec::with_capacity(grid.len() - 1);
        for w in grid.windows(2) {
            let mid = (w[0].clone() + w[1].clone()).half();
            pieces.push(self.pieces[self.piece_index(&mid)].clone());
        }
        PiecewisePoly { xs: grid, pieces }
    }

    /// Substitutes `x -> beta + alpha * x`, producing a function on the
    /// preimage of the domain. `alpha` must be nonzero.
    pub fn compose_affine(&self, beta: &S, alpha: &S) -> Result<Self> {
        if alpha.is_zero() {
            return Err(Error::InvalidInput(
                "affine substitution needs alpha != 0".into(),
            ));
        }
        let inv = |x: &S| (x.clone() - beta.clone()) / alpha.clone();
        let mut xs: Vec<S> = self.xs.iter().map(inv).collect();
        let mut pieces: Vec<Poly<S>> = self
            .pieces
            .iter()
            .map(|p| p.compose_affine(beta, alpha))
            .collect();
        if *alpha < S::zero() {
            xs.reverse();
            pieces.reverse();
        }
        PiecewisePoly::new(xs, pieces)
    }

    /// Reflection about the domain midpoint: returns `x -> f(a + b - x)`.
    pub fn reflect(&self) -> Self {
        let (a, b) = self.domain();
        self.compose_affine(&(a + b), &(-S::one()))
            .expect("reflection is always a valid substitution")
    }

    /// Candidate extrema: piece endpoints plus interior critical points.
    fn extremum_candidates(&self) -> Vec<S> {
        let mut cand = self.xs.clone();
        for (i, p) in self.pieces.iter().enumerate() {
            cand.extend(p.derivative().roots_in_open(&self.xs[i], &self.xs[i + 1]));
        }
        cand
    }

    /// Range bounds from piece extrema; exact whenever critical points are.
    pub fn range_bounds(&self) -> (S, S) {
        let mut lo: Option<S> = None;
        let mut hi: Option<S> = None;
        for x in self.extremum_candidates() {
            // interior candidates may sit on either adjacent piece; check both
            let i = self.piece_index(&x);
            let mut vals = vec![self.pieces[i].eval(&x)];
            if i > 0 && x.eq_within(&self.xs[i], 0.0) {
                vals.push(self.pieces[i - 1].eval(&x));
            }
            for v in vals {
                lo = Some(match lo {
                    None => v.clone(),
                    Some(l) => l.min_val(v.clone()),
                });
                hi = Some(match hi {
                    None => v,
                    Some(h) => h.max_val(v),
                });
            }
        }
        (lo.unwrap(), hi.unwrap())
    }

    pub fn sup_abs(&self) -> S {
        let (lo, hi) = self.range_bounds();
        lo.abs().max_val(hi.abs())
    }

    /// Upper bound for the Lipschitz constant: sup |f'| over the pieces.
    pub fn lipschitz_bound(&self) -> S {
        let mut best = S::zero();
        for (i, p) in self.pieces.iter().enumerate() {
            let d = p.derivative();
            let mut cand = vec![self.xs[i].clone(), self.xs[i + 1].clone()];
            cand.extend(d.derivative().roots_in_open(&self.xs[i], &self.xs[i + 1]));
            for x in cand {
                best = best.max_val(d.eval(&x).abs());
            }
        }
        best
    }

    /// Whether any root of `self` exists strictly inside the domain,
    /// including tangential ones. Exact in rational mode via Sturm counts.
    pub fn has_interior_root(&self) -> bool {
        for (i, p) in self.pieces.iter().enumerate() {
            if p.is_zero() {
                return true;
            }
            if !p.roots_in_open(&self.xs[i], &self.xs[i + 1]).is_empty() {
                return true;
            }
        }
        // roots at interior grid points count as interior
        for i in 1..self.xs.len() - 1 {
            if self.pieces[i].eval(&self.xs[i]).is_zero() {
                return true;
            }
        }
        false
    }
}

fn sign_on_subinterval<S: Scalar>(p: &Poly<S>, lo: &S, hi: &S) -> i32 {
    let mid = (lo.clone() + hi.clone()).half();
    let s = p.eval(&mid).signum_int();
    if s != 0 {
        return s;
    }
    // midpoint is (numerically) a root; probe quarter points
    for frac in [1, 3] {
        let x = lo.clone() + (hi.clone() - lo.clone()) * S::from_ratio(frac, 4);
        let s = p.eval(&x).signum_int();
        if s != 0 {
            return s;
        }
    }
    0
}

/// Canonical slope/intercept/breakpoint representation of a continuous
/// piecewise affine function: `f(x) = A_i x + B_i` on `[q_{i-1}, q_i]`, with
/// `A_{i+1} != A_i` and `B_{i+1} = B_i - (A_{i+1} - A_i) q_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear<S> {
    qs: Vec<S>,
    slopes: Vec<S>,
    intercepts: Vec<S>,
}

impl<S: Scalar> PiecewiseLinear<S> {
    /// Canonicalizes raw piecewise data: validates continuity, merges
    /// adjacent pieces with equal slopes (within `1e-9 * (1 + max|A|)` in
    /// float mode, exactly in rational mode), and enforces the intercept
    /// relation.
    pub fn canonicalize(qs: Vec<S>, slopes: Vec<S>, intercepts: Vec<S>) -> Result<Self> {
        if qs.len() < 2 || slopes.len() + 1 != qs.len() || slopes.len() != intercepts.len() {
            return Err(Error::InvalidInput(
                "piecewise-linear data needs Q+2 breakpoints and Q+1 slopes/intercepts".into(),
            ));
        }
        for w in qs.windows(2) {
            if w[0].cmp_total(&w[1]) != std::cmp::Ordering::Less {
                return Err(Error::InvalidInput(
                    "breakpoints must be strictly increasing".into(),
                ));
            }
        }
        let mut scale: f64 = 1.0;
        for (a, b) in slopes.iter().zip(&intercepts) {
            scale = scale.max(a.to_f64().abs()).max(b.to_f64().abs());
        }
        for i in 0..slopes.len() - 1 {
            let left = slopes[i].clone() * qs[i + 1].clone() + intercepts[i].clone();
            let right = slopes[i + 1].clone() * qs[i + 1].clone() + intercepts[i + 1].clone();
            if !left.eq_within(&right, CONTINUITY_TOL * scale.max(1.0)) {
                return Err(Error::InvalidInput(format!(
                    "discontinuous at breakpoint {}: {left} vs {right}",
                    qs[i + 1]
                )));
            }
        }
        let max_slope = slopes
            .iter()
            .map(|a| a.to_f64().abs())
            .fold(0.0f64, f64::max);
        let slope_tol = SLOPE_MERGE_TOL * (1.0 + max_slope);
        let mut out_q = vec![qs[0].clone()];
        let mut out_a: Vec<S> = vec![slopes[0].clone()];
        let mut out_b: Vec<S> = vec![intercepts[0].clone()];
        for i in 1..slopes.len() {
            if slopes[i].eq_within(out_a.last().unwrap(), slope_tol) {
                continue;
            }
            out_q.push(qs[i].clone());
            out_a.push(slopes[i].clone());
            // re-derive the intercept from the kept left piece for exact continuity
            let q = out_q.last().unwrap().clone();
            let b = out_b.last().unwrap().clone()
                - (out_a[out_a.len() - 1].clone() - out_a[out_a.len() - 2].clone()) * q;
            out_b.push(b);
        }
        out_q.push(qs[qs.len() - 1].clone());
        Ok(PiecewiseLinear {
            qs: out_q,
            slopes: out_a,
            intercepts: out_b,
        })
    }

    /// Builds the function through the given knots by linear interpolation.
    pub fn from_knots(xs: &[S], ys: &[S]) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidInput(
                "need matching xs/ys with >= 2 knots".into(),
            ));
        }
        let mut slopes = Vec::with_capacity(xs.len() - 1);
        let mut intercepts = Vec::with_capacity(xs.len() - 1);
        for i in 0..xs.len() - 1 {
            let a = (ys[i + 1].clone() - ys[i].clone()) / (xs[i + 1].clone() - xs[i].clone());
            let b = ys[i].clone() - a.clone() * xs[i].clone();
            slopes.push(a);
            intercepts.push(b);
        }
        PiecewiseLinear::canonicalize(xs.to_vec(), slopes, intercepts)
    }

    pub fn constant(a: S, b: S, c: S) -> Self {
        PiecewiseLinear {
            qs: vec![a, b],
            slopes: vec![S::zero()],
            intercepts: vec![c],
        }
    }

    pub fn domain(&self) -> (S, S) {
        (self.qs[0].clone(), self.qs[self.qs.len() - 1].clone())
    }

    /// Breakpoint function: number of genuine interior kinks.
    pub fn breakpoint_count(&self) -> usize {
        self.slopes.len() - 1
    }

    pub fn breakpoints(&self) -> &[S] {
        &self.qs
    }

    /// Interior kink locations `q_1, ..., q_Q`.
    pub fn kinks(&self) -> &[S] {
        &self.qs[1..self.qs.len() - 1]
    }

    pub fn slopes(&self) -> &[S] {
        &self.slopes
    }

    pub fn intercepts(&self) -> &[S] {
        &self.intercepts
    }

    /// Slope of piece `i` (1-based, following the paper's indexing).
    pub fn slope(&self, i: usize) -> &S {
        &self.slopes[i - 1]
    }

    pub fn lipschitz(&self) -> S {
        self.slopes
            .iter()
            .map(|a| a.abs())
            .fold(S::zero(), |acc, a| acc.max_val(a))
    }

    fn piece_index(&self, x: &S) -> usize {
        for i in 0..self.slopes.len() - 1 {
            if *x < self.qs[i + 1] {
                return i;
            }
        }
        self.slopes.len() - 1
    }

    pub fn eval(&self, x: &S) -> Result<S> {
        let (a, b) = self.domain();
        if *x < a || *x > b {
            return Err(Error::Domain(format!("x = {x} outside [{a}, {b}]")));
        }
        let i = self.piece_index(x);
        Ok(self.slopes[i].clone() * x.clone() + self.intercepts[i].clone())
    }

    /// Evaluation without the domain check, for interior helper use.
    pub fn eval_unchecked(&self, x: &S) -> S {
        let i = self.piece_index(x);
        self.slopes[i].clone() * x.clone() + self.intercepts[i].clone()
    }

    /// Pointwise sum; the breakpoint count obeys `Q(f+g) <= Q(f) + Q(g)`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let (a1, b1) = self.domain();
        let (a2, b2) = other.domain();
        let tol = BREAKPOINT_MERGE_TOL * (1.0 + (b1.clone() - a1.clone()).to_f64().abs());
        if !a1.eq_within(&a2, tol) || !b1.eq_within(&b2, tol) {
            return Err(Error::Domain(
                "domain mismatch in piecewise-linear sum".into(),
            ));
        }
        let mut grid: Vec<S> = self.qs.iter().chain(other.qs.iter()).cloned().collect();
        grid.sort_by(|x, y| x.cmp_total(y));
        grid.dedup_by(|x, y| x.eq_within(y, tol));
        let mut slopes = Vec::with_capacity(grid.len() - 1);
        let mut intercepts = Vec::with_capacity(grid.len() - 1);
        for w in grid.windows(2) {
            let mid = (w[0].clone() + w[1].clone()).half();
            let i = self.piece_index(&mid);
            let j = other.piece_index(&mid);
            slopes.push(self.slopes[i].clone() + other.slopes[j].clone());
            intercepts.push(self.intercepts[i].clone() + other.intercepts[j].clone());
        }
        PiecewiseLinear::canonicalize(grid, slopes, intercepts)
    }

    pub fn neg(&self) -> Self {
        PiecewiseLinear {
            qs: self.qs.clone(),
            slopes: self.slopes.iter().map(|a| -a.clone()).collect(),
            intercepts: self.intercepts.iter().map(|b| -b.clone()).collect(),
        }
    }

    pub fn scale(&self, s: &S) -> Result<Self> {
        PiecewiseLinear::canonicalize(
            self.qs.clone(),
            self.slopes.iter().map(|a| a.clone() * s.clone()).collect(),
            self.intercepts
                .iter()
                .map(|b| b.clone() * s.clone())
                .collect(),
        )
    }

    /// Reflection about the domain midpoint combined with negation:
    /// `x -> -f(a + b - x)`, the transform used to halve case analyses.
    pub fn reflect_neg(&self) -> Self {
        let (a, b) = self.domain();
        let s = a + b;
        let n = self.slopes.len();
        let mut qs: Vec<S> = self
            .qs
            .iter()
            .rev()
            .map(|q| s.clone() - q.clone())
            .collect();
        let mut slopes = Vec::with_capacity(n);
        let mut intercepts = Vec::with_capacity(n);
        for i in (0..n).rev() {
            // -f(s - x) = A_i x - A_i s - B_i
            slopes.push(self.slopes[i].clone());
            intercepts.push(-(self.slopes[i].clone() * s.clone()) - self.intercepts[i].clone());
        }
        // reflection preserves strict monotonicity of the grid
        if qs[0].cmp_total(&qs[1]) != std::cmp::Ordering::Less {
            qs.reverse();
        }
        PiecewiseLinear {
            qs,
            slopes,
            intercepts,
        }
    }

    pub fn to_piecewise_poly(&self) -> PiecewisePoly<S> {
        PiecewisePoly {
            xs: self.qs.clone(),
            pieces: self
                .slopes
                .iter()
                .zip(&self.intercepts)
                .map(|(a, b)| Poly::affine(b.clone(), a.clone()))
                .collect(),
        }
    }

    /// Converts a continuous piecewise polynomial of degree <= 1.
    pub fn from_piecewise_poly(pp: &PiecewisePoly<S>) -> Result<Self> {
        if pp.pieces.iter().any(|p| p.degree() > 1) {
            return Err(Error::InvalidInput(
                "piecewise polynomial has degree > 1 pieces".into(),
            ));
        }
        PiecewiseLinear::canonicalize(
            pp.xs.clone(),
            pp.pieces.iter().map(|p| p.coeff(1)).collect(),
            pp.pieces.iter().map(|p| p.coeff(0)).collect(),
        )
    }

    /// Max |f - g| sampled at both kink grids (exact for equal grids).
    pub fn sup_abs(&self) -> S {
        let mut best = S::zero();
        for q in &self.qs {
            best = best.max_val(self.eval_unchecked(q).abs());
        }
        best
    }
}

#[derive(Serialize, Deserialize)]
struct PpRepr<S> {
    domain: (S, S),
    breakpoints: Vec<S>,
    pieces: Vec<Vec<S>>,
}

impl<S: Scalar + Serialize> Serialize for PiecewisePoly<S> {
    fn serialize<Ser: serde::Serializer>(
        &self,
        s: Ser,
    ) -> std::result::Result<Ser::Ok, Ser::Error> {
        PpRepr {
            domain: self.domain(),
            breakpoints: self.xs.clone(),
            pieces: self.pieces.iter().map(|p| p.coeffs().to_vec()).collect(),
        }
        .serialize(s)
    }
}

impl<'de, S: Scalar + Deserialize<'de>> Deserialize<'de> for PiecewisePoly<S> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PpRepr::<S>::deserialize(d)?;
        let pp = PiecewisePoly::new(
            repr.breakpoints,
            repr.pieces.into_iter().map(Poly::new).collect(),
        )
        .map_err(serde::de::Error::custom)?;
        let (a, b) = pp.domain();
        if !a.eq_within(&repr.domain.0, 1e-12) || !b.eq_within(&repr.domain.1, 1e-12) {
            return Err(serde::de::Error::custom(
                "domain field disagrees with breakpoints",
            ));
        }
        Ok(pp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    fn unit<Sc: Scalar>() -> (Sc, Sc) {
        (Sc::zero(), Sc::one())
    }

    #[test]
    fn eval_picks_owning_piece() {
        // f = x^2 on [0, 1]
        let f =
            PiecewisePoly::from_poly(r(0, 1), r(1, 1), Poly::new(vec![r(0, 1), r(0, 1), r(1, 1)]))
                .unwrap();
        assert_eq!(f.eval(&r(1, 2)).unwrap(), r(1, 4));
        // step-ish: 0 on [0,1/2], x - 1/2 on [1/2, 1]
        let g = PiecewisePoly::new(
            vec![r(0, 1), r(1, 2), r(1, 1)],
            vec![Poly::zero(), Poly::affine(r(-1, 2), r(1, 1))],
        )
        .unwrap();
        assert_eq!(g.eval(&r(3, 4)).unwrap(), r(1, 4));
        // constant 3 evaluated at the left endpoint
        let c = PiecewisePoly::constant(r(0, 1), r(1, 1), r(3, 1)).unwrap();
        assert_eq!(c.eval(&r(0, 1)).unwrap(), r(3, 1));
        assert!(c.eval(&r(2, 1)).is_err());
    }

    #[test]
    fn canonicalize_merges_equal_slopes() {
        // slope 1 on both halves, consistent intercepts
        let f = PiecewiseLinear::canonicalize(
            vec![r(0, 1), r(1, 2), r(1, 1)],
            vec![r(1, 1), r(1, 1)],
            vec![r(0, 1), r(0, 1)],
        )
        .unwrap();
        assert_eq!(f.breakpoint_count(), 0);
        assert_eq!(f.slopes(), &[r(1, 1)]);

        let g = PiecewiseLinear::canonicalize(
            vec![r(0, 1), r(1, 2), r(1, 1)],
            vec![r(0, 1), r(2, 1)],
            vec![r(0, 1), r(-1, 1)],
        )
        .unwrap();
        assert_eq!(g.breakpoint_count(), 1);
        assert_eq!(g.kinks(), &[r(1, 2)]);

        let z = PiecewiseLinear::constant(r(0, 1), r(1, 1), r(0, 1));
        assert_eq!(z.breakpoint_count(), 0);
        assert!(z.lipschitz().is_zero());
    }

    #[test]
    fn canonicalize_rejects_discontinuous() {
        let err = PiecewiseLinear::canonicalize(
            vec![r(0, 1), r(1, 2), r(1, 1)],
            vec![r(0, 1), r(0, 1)],
            vec![r(0, 1), r(1, 1)],
        );
        assert!(err.is_err());
    }

    #[test]
    fn pl_add_subadditive_breakpoints() {
        let (a, b) = unit::<Rat>();
        let f = PiecewiseLinear::from_knots(
            &[a.clone(), r(1, 3), b.clone()],
            &[r(0, 1), r(1, 3), r(1, 3)],
        )
        .unwrap();
        let g = PiecewiseLinear::from_knots(
            &[a.clone(), r(2, 3), b.clone()],
            &[r(0, 1), r(0, 1), r(1, 1)],
        )
        .unwrap();
        assert_eq!(f.breakpoint_count(), 1);
        assert_eq!(g.breakpoint_count(), 1);
        let sum = f.add(&g).unwrap();
        assert!(sum.breakpoint_count() <= f.breakpoint_count() + g.breakpoint_count());
        assert_eq!(sum.breakpoint_count(), 2);

        // x + (-x) = 0
        let id = PiecewiseLinear::from_knots(&[a.clone(), b.clone()], &[r(0, 1), r(1, 1)]).unwrap();
        let z = id.add(&id.neg()).unwrap();
        assert_eq!(z.breakpoint_count(), 0);
        assert!(z.lipschitz().is_zero());
    }

    #[test]
    fn cancellation_drops_breakpoints() {
        // Q = 3 tent-like function, f + (-f) has Q = 0
        let f = PiecewiseLinear::from_knots(
            &[r(0, 1), r(1, 4), r(1, 2), r(3, 4), r(1, 1)],
            &[r(0, 1), r(1, 1), r(0, 1), r(1, 1), r(0, 1)],
        )
        .unwrap();
        assert_eq!(f.breakpoint_count(), 3);
        let z = f.add(&f.neg()).unwrap();
        assert_eq!(z.breakpoint_count(), 0);
    }

    #[test]
    fn pp_product_and_identity() {
        let (a, b) = unit::<Rat>();
        let x =
            PiecewisePoly::from_poly(a.clone(), b.clone(), Poly::affine(r(0, 1), r(1, 1))).unwrap();
        let x2 = x.mul(&x).unwrap();
        assert_eq!(x2.eval(&r(1, 2)).unwrap(), r(1, 4));
        assert_eq!(x2.pieces()[0].degree(), 2);

        let step = PiecewisePoly::new(
            vec![a.clone(), r(1, 2), b.clone()],
            vec![Poly::zero(), Poly::constant(r(1, 1))],
        )
        .unwrap();
        let prod = step.mul(&x).unwrap();
        assert_eq!(prod.eval(&r(1, 4)).unwrap(), r(0, 1));
        assert_eq!(prod.eval(&r(3, 4)).unwrap(), r(3, 4));

        let zero = PiecewisePoly::constant(a, b, r(0, 1)).unwrap();
        let same = x.add(&zero).unwrap();
        for k in 0..=4 {
            let p = r(k, 4);
            assert_eq!(same.eval(&p).unwrap(), x.eval(&p).unwrap());
        }
    }

    #[test]
    fn relu_clips_at_exact_roots() {
        let (a, b) = unit::<Rat>();
        // x - 1/2
        let f = PiecewisePoly::from_poly(a.clone(), b.clone(), Poly::affine(r(-1, 2), r(1, 1)))
            .unwrap();
        let clipped = f.relu().unwrap();
        assert_eq!(clipped.breakpoints(), &[r(0, 1), r(1, 2), r(1, 1)]);
        assert_eq!(clipped.eval(&r(1, 4)).unwrap(), r(0, 1));
        assert_eq!(clipped.eval(&r(3, 4)).unwrap(), r(1, 4));

        // x^2 stays unchanged
        let sq = PiecewisePoly::from_poly(
            a.clone(),
            b.clone(),
            Poly::new(vec![r(0, 1), r(0, 1), r(1, 1)]),
        )
        .unwrap();
        let same = sq.relu().unwrap();
        assert_eq!(same.breakpoints().len(), 2);
        assert_eq!(same.eval(&r(1, 2)).unwrap(), r(1, 4));

        // x^2 - 1/4 clips to zero left of 1/2
        let q =
            PiecewisePoly::from_poly(a, b, Poly::new(vec![r(-1, 4), r(0, 1), r(1, 1)])).unwrap();
        let clipped = q.relu().unwrap();
        assert_eq!(clipped.breakpoints(), &[r(0, 1), r(1, 2), r(1, 1)]);
        assert_eq!(clipped.eval(&r(1, 4)).unwrap(), r(0, 1));
        assert_eq!(clipped.eval(&r(3, 4)).unwrap(), r(5, 16));
        // dense-grid agreement with max{f, 0}
        for k in 0..=100 {
            let x = r(k, 100);
            let want = q.eval(&x).unwrap().max_val(r(0, 1));
            assert_eq!(clipped.eval(&x).unwrap(), want);
        }
    }

    #[test]
    fn integrate_exact_values() {
        let (a, b) = unit::<Rat>();
        let x2 = PiecewisePoly::from_poly(
            a.clone(),
            b.clone(),
            Poly::new(vec![r(0, 1), r(0, 1), r(1, 1)]),
        )
        .unwrap();
        assert_eq!(x2.integrate(), r(1, 3));
        let step = PiecewisePoly::new(
            vec![a.clone(), r(1, 2), b.clone()],
            vec![Poly::zero(), Poly::constant(r(1, 1))],
        )
        .unwrap();
        assert_eq!(step.integrate(), r(1, 2));
        let x4 = PiecewisePoly::from_poly(
            a,
            b,
            Poly::new(vec![r(0, 1), r(0, 1), r(0, 1), r(0, 1), r(1, 1)]),
        )
        .unwrap();
        assert_eq!(x4.integrate(), r(1, 5));
    }

    #[test]
    fn lipschitz_is_max_abs_slope() {
        let f =
            PiecewiseLinear::from_knots(&[r(0, 1), r(1, 2), r(1, 1)], &[r(1, 2), r(0, 1), r(1, 2)])
                .unwrap();
        assert_eq!(f.breakpoint_count(), 1);
        assert_eq!(f.lipschitz(), r(1, 1));

        let g = PiecewiseLinear::canonicalize(
            vec![r(0, 1), r(1, 3), r(2, 3), r(1, 1)],
            vec![r(-3, 1), r(0, 1), r(2, 1)],
            vec![r(1, 1), r(0, 1), r(-4, 3)],
        )
        .unwrap();
        assert_eq!(g.lipschitz(), r(3, 1));
    }

    #[test]
    fn intercept_relation_holds() {
        let f = PiecewiseLinear::from_knots(
            &[r(0, 1), r(1, 4), r(2, 4), r(1, 1)],
            &[r(1, 1), r(0, 1), r(1, 2), r(3, 1)],
        )
        .unwrap();
        let (qs, aa, bb) = (f.breakpoints(), f.slopes(), f.intercepts());
        for i in 0..aa.len() - 1 {
            let lhs = bb[i + 1].clone();
            let rhs = bb[i].clone() - (aa[i + 1].clone() - aa[i].clone()) * qs[i + 1].clone();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn reflect_neg_is_involution_on_values() {
        let f = PiecewiseLinear::from_knots(
            &[r(0, 1), r(1, 3), r(1, 1)],
            &[r(1, 1), r(-1, 2), r(2, 1)],
        )
        .unwrap();
        let g = f.reflect_neg();
        for k in 0..=6 {
            let x = r(k, 6);
            let want = -(f.eval(&(r(1, 1) - x.clone())).unwrap());
            assert_eq!(g.eval(&x).unwrap(), want);
        }
        let back = g.reflect_neg();
        for k in 0..=6 {
            let x = r(k, 6);
            assert_eq!(back.eval(&x).unwrap(), f.eval(&x).unwrap());
        }
    }

    #[test]
    fn serialization_roundtrip_rational() {
        let f = PiecewisePoly::new(
            vec![r(0, 1), r(1, 2), r(1, 1)],
            vec![Poly::zero(), Poly::affine(r(-1, 2), r(1, 1))],
        )
        .unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"breakpoints\""));
        assert!(s.contains("1/2"));
        let back: PiecewisePoly<Rat> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn relu_float_fuzz_against_pointwise_max() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(4242);
        for _ in 0..200 {
            let deg = 2 + rng.below(3) as usize;
            let p = Poly::new(
                (0..=deg)
                    .map(|_| rng.uniform(-2.0, 2.0))
                    .collect::<Vec<f64>>(),
            );
            let f = PiecewisePoly::from_poly(0.0, 1.0, p.clone()).unwrap();
            let clipped = f.relu().unwrap();
            for k in 0..=400 {
                let x = k as f64 / 400.0;
                let want = p.eval(&x).max(0.0);
                let got = clipped.eval(&x).unwrap();
                // isolated roots are refined to ~1e-14, so values near a
                // sign change may differ by |p'| * root error
                assert!(
                    (got - want).abs() < 1e-9,
                    "x = {x}: {got} vs {want} for {p:?}"
                );
            }
        }
    }

    #[test]
    fn float_mode_matches_rational_on_eval() {
        let f = PiecewisePoly::new(
            vec![0.0, 0.5, 1.0],
            vec![Poly::new(vec![0.25, -1.0, 1.0]), Poly::affine(0.25, -0.5)],
        )
        .unwrap();
        assert!((f.eval(&0.25).unwrap() - 0.0625).abs() < 1e-15);
        assert!(f.is_continuous());
    }
}
