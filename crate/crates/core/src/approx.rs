//! Structure-preserving approximation operators on the unit interval:
//! adjust one slope toward a target without increasing the risk, drive the
//! Lipschitz constant down to that of the target, do so while preserving the
//! alternating slope relation, and combine everything into the
//! better-approximation map on network parameters.
//!
//! The slope-adjustment operator runs a three-way case analysis: whether the
//! target function and the current piecewise-linear approximant intersect on
//! the open piece being adjusted, and whether that piece is a boundary or an
//! interior one. Reflections `x -> 1-x` (composed with negation) and global
//! sign flips reduce the thirteen geometric sub-cases to canonical
//! orientations. All pivot points are intersections of lines and are exact
//! in rational mode.

use crate::error::{Error, Result};
use crate::pwfun::{PiecewiseLinear, PiecewisePoly};
use crate::repr::{alternating_sum, slope_relation_holds, synthesize, Synthesis};
use crate::scalar::Scalar;
use crate::shallow::{map_from_unit, map_to_unit, realize, Problem, ShallowParams};

/// Exact weighted squared error `int (h - f)^2 dens`.
pub fn pl_risk<S: Scalar>(
    h: &PiecewiseLinear<S>,
    f: &PiecewisePoly<S>,
    dens: &PiecewisePoly<S>,
) -> S {
    let err = h.to_piecewise_poly().sub(f).expect("shared domain");
    err.mul(&err)
        .expect("same function")
        .mul(dens)
        .expect("shared domain")
        .integrate()
}

#[derive(Clone, Debug)]
pub struct AdjustOutcome<S> {
    pub h: PiecewiseLinear<S>,
    pub q_dropped: bool,
    pub risk_before: S,
    pub risk_after: S,
    /// Set when the intersection point could not be represented exactly and
    /// the construction proceeded with a refined approximation of it.
    pub warning: Option<String>,
}

/// x-coordinate where two lines (given by anchor point and slope) meet.
fn line_intersect<S: Scalar>(x1: &S, y1: &S, m1: &S, x2: &S, y2: &S, m2: &S) -> S {
    // y1 + m1 (x - x1) = y2 + m2 (x - x2)
    let num = y2.clone() - m2.clone() * x2.clone() - y1.clone() + m1.clone() * x1.clone();
    num / (m1.clone() - m2.clone())
}

/// Root of the affine function `g(x) - (yz + m (x - z))` on `[xl, xr]`, where
/// `g` restricted there is the line through `(xl, yl)` and `(xr, yr)`.
fn affine_root_between<S: Scalar>(xl: &S, yl: &S, xr: &S, yr: &S, z: &S, yz: &S, m: &S) -> S {
    let dl = yl.clone() - yz.clone() - m.clone() * (xl.clone() - z.clone());
    let dr = yr.clone() - yz.clone() - m.clone() * (xr.clone() - z.clone());
    // affine in x; root between the endpoints
    xl.clone() - dl.clone() * (xr.clone() - xl.clone()) / (dr - dl)
}

/// Assembles a piecewise-linear function from knots, deduplicating equal
/// abscissae, and canonicalizes.
fn build_from_knots<S: Scalar>(mut knots: Vec<(S, S)>) -> Result<PiecewiseLinear<S>> {
    knots.sort_by(|a, b| a.0.cmp_total(&b.0));
    knots.dedup_by(|a, b| a.0.eq_within(&b.0, 1e-14));
    let xs: Vec<S> = knots.iter().map(|k| k.0.clone()).collect();
    let ys: Vec<S> = knots.iter().map(|k| k.1.clone()).collect();
    PiecewiseLinear::from_knots(&xs, &ys)
}

/// g's knots strictly below `cut` as (x, y) pairs.
fn knots_below<S: Scalar>(g: &PiecewiseLinear<S>, cut: &S) -> Vec<(S, S)> {
    g.breakpoints()
        .iter()
        .filter(|q| q.cmp_total(cut) == std::cmp::Ordering::Less)
        .map(|q| (q.clone(), g.eval_unchecked(q)))
        .collect()
}

/// g's knots strictly above `cut` as (x, y) pairs.
fn knots_above<S: Scalar>(g: &PiecewiseLinear<S>, cut: &S) -> Vec<(S, S)> {
    g.breakpoints()
        .iter()
        .filter(|q| q.cmp_total(cut) == std::cmp::Ordering::Greater)
        .map(|q| (q.clone(), g.eval_unchecked(q)))
        .collect()
}

/// Finds a point of `f = g` strictly inside `(lo, hi)`, if any. Returns the
/// point and whether it is exact (evaluates to a true equality).
fn find_intersection<S: Scalar>(
    f: &PiecewisePoly<S>,
    g: &PiecewiseLinear<S>,
    lo: &S,
    hi: &S,
) -> Option<(S, bool)> {
    let diff = f.sub(&g.to_piecewise_poly()).expect("shared domain");
    let xs = diff.breakpoints();
    let mut candidates: Vec<S> = Vec::new();
    for (i, p) in diff.pieces().iter().enumerate() {
        let l = xs[i].clone().max_val(lo.clone());
        let h = xs[i + 1].clone().min_val(hi.clone());
        if l.cmp_total(&h) != std::cmp::Ordering::Less {
            continue;
        }
        if p.is_zero() {
            // f coincides with g on a whole stretch
            return Some(((l + h).half(), true));
        }
        candidates.extend(p.roots_in_open(&l, &h));
        // interior grid points where the difference vanishes
        for x in [&l, &h] {
            if *x > *lo && *x < *hi && p.eval(x).is_zero() {
                candidates.push(x.clone());
            }
        }
    }
    candidates.retain(|x| *x > *lo && *x < *hi);
    candidates.sort_by(|a, b| a.cmp_total(b));
    let z = candidates.into_iter().next()?;
    let exact = {
        let fv = f.eval(&z).ok()?;
        let gv = g.eval_unchecked(&z);
        fv.eq_within(&gv, 1e-12)
    };
    Some((z, exact))
}

struct CaseCtx<S> {
    f: PiecewisePoly<S>,
    g: PiecewiseLinear<S>,
    dens: PiecewisePoly<S>,
    i: usize,
    target: S,
}

impl<S: Scalar> CaseCtx<S> {
    /// Global sign flip: f, g, target negate; density and index stay.
    fn negate(&self) -> Self {
        CaseCtx {
            f: self.f.neg(),
            g: self.g.neg(),
            dens: self.dens.clone(),
            i: self.i,
            target: -self.target.clone(),
        }
    }

    /// Reflection `x -> 1 - x` composed with negation, the breakpoint
    /// transformation that maps piece `i` to piece `Q + 2 - i` while
    /// preserving slopes and the target.
    fn reflect(&self) -> Self {
        CaseCtx {
            f: self.f.reflect().neg(),
            g: self.g.reflect_neg(),
            dens: self.dens.reflect(),
            i: self.g.breakpoint_count() + 2 - self.i,
            target: self.target.clone(),
        }
    }
}

/// Adjusts slope `i` (1-based) of `g` toward `target`, never increasing the
/// exact risk against `f` weighted by `dens`. Requires the domain `[0, 1]`,
/// `lip_f <= |target| <= |A_i(g)|`, and `target * A_i(g) > 0`.
pub fn adjust_slope<S: Scalar>(
    g: &PiecewiseLinear<S>,
    f: &PiecewisePoly<S>,
    lip_f: &S,
    i: usize,
    target: &S,
    dens: &PiecewisePoly<S>,
) -> Result<AdjustOutcome<S>> {
    let (a, b) = g.domain();
    if !a.eq_within(&S::zero(), 1e-12) || !b.eq_within(&S::one(), 1e-12) {
        return Err(Error::Precondition(
            "adjust_slope works on the unit domain".into(),
        ));
    }
    let q = g.breakpoint_count();
    if i == 0 || i > q + 1 {
        return Err(Error::Precondition(format!(
            "piece index {i} out of 1..={}",
            q + 1
        )));
    }
    let ai = g.slope(i).clone();
    if (target.clone() * ai.clone()).signum_int() <= 0 {
        return Err(Error::Precondition(
            "target slope must have the sign of the adjusted slope".into(),
        ));
    }
    if target.abs() > ai.abs() || target.abs() < lip_f.abs() {
        return Err(Error::Precondition(
            "target magnitude must lie between Lip(f) and |A_i(g)|".into(),
        ));
    }
    let risk_before = pl_risk(g, f, dens);
    if *target == ai {
        return Ok(AdjustOutcome {
            h: g.clone(),
            q_dropped: false,
            risk_before: risk_before.clone(),
            risk_after: risk_before,
            warning: None,
        });
    }

    let ctx = CaseCtx {
        f: f.clone(),
        g: g.clone(),
        dens: dens.clone(),
        i,
        target: target.clone(),
    };
    // normalize to 0 < target < A_i
    let flipped = *target < S::zero();
    let ctx = if flipped { ctx.negate() } else { ctx };
    let (h, warning) = dispatch_positive(&ctx)?;
    let h = if flipped { h.neg() } else { h };

    let risk_after = pl_risk(&h, f, dens);
    if S::EXACT && warning.is_none() && risk_after > risk_before {
        return Err(Error::Internal(format!(
            "slope adjustment increased the exact risk: {risk_before} -> {risk_after}"
        )));
    }
    Ok(AdjustOutcome {
        q_dropped: h.breakpoint_count() < q,
        h,
        risk_before,
        risk_after,
        warning,
    })
}

/// Case dispatch with `0 < target < A_i(g)` guaranteed.
fn dispatch_positive<S: Scalar>(ctx: &CaseCtx<S>) -> Result<(PiecewiseLinear<S>, Option<String>)> {
    let q = ctx.g.breakpoint_count();
    let qs = ctx.g.breakpoints();
    let lo = qs[ctx.i - 1].clone();
    let hi = qs[ctx.i].clone();
    match find_intersection(&ctx.f, &ctx.g, &lo, &hi) {
        None => {
            // no intersection: need f < g on the piece; otherwise reflect
            let mid = (lo + hi).half();
            let below = ctx.f.eval(&mid).expect("mid inside domain") < ctx.g.eval_unchecked(&mid);
            if below {
                Ok((case_no_intersection(ctx)?, None))
            } else {
                let r = ctx.reflect();
                let h = case_no_intersection(&r)?;
                Ok((h.reflect_neg(), None))
            }
        }
        Some((z, exact)) => {
            let warning = if exact {
                None
            } else {
                Some(format!(
                    "intersection near {} refined numerically; risk contract is approximate",
                    z.to_f64()
                ))
            };
            let h = if ctx.i == 1 {
                case_boundary(ctx, &z)?
            } else if ctx.i == q + 1 {
                let r = ctx.reflect();
                let zr = S::one() - z;
                case_boundary(&r, &zr)?.reflect_neg()
            } else {
                case_interior(ctx, &z)?
            };
            Ok((h, warning))
        }
    }
}

/// No intersection on the open piece, `f < g` there, `0 < t < A_i`.
fn case_no_intersection<S: Scalar>(ctx: &CaseCtx<S>) -> Result<PiecewiseLinear<S>> {
    let g = &ctx.g;
    let t = &ctx.target;
    let i = ctx.i;
    let q = g.breakpoint_count();
    let qs = g.breakpoints();
    let y = |j: usize| g.eval_unchecked(&qs[j]);

    if i == q + 1 {
        // (I) last piece: keep g left of q_Q, continue with slope t
        let mut knots = knots_below(g, &qs[q]);
        knots.push((qs[q].clone(), y(q)));
        knots.push((
            qs[q + 1].clone(),
            y(q) + t.clone() * (qs[q + 1].clone() - qs[q].clone()),
        ));
        return build_from_knots(knots);
    }
    let a_next = g.slope(i + 1).clone();
    let chord_ok = y(i + 1) - y(i - 1) >= t.clone() * (qs[i + 1].clone() - qs[i - 1].clone());
    let mut knots = knots_below(g, &qs[i - 1]);
    knots.push((qs[i - 1].clone(), y(i - 1)));
    if chord_ok {
        if a_next > *g.slope(i) {
            // (II) slope t from q_{i-1} up to the pivot, then slope A_{i+1}
            let u = line_intersect(&qs[i - 1], &y(i - 1), t, &qs[i + 1], &y(i + 1), &a_next);
            knots.push((u.clone(), y(i - 1) + t.clone() * (u - qs[i - 1].clone())));
        }
        // (III) otherwise the chord from q_{i-1} to q_{i+1}
        knots.push((qs[i + 1].clone(), y(i + 1)));
        knots.extend(knots_above(g, &qs[i + 1]));
    } else {
        // (IV) slope t until it meets piece i+1 at some x in (q_i, q_{i+1})
        let zstar = line_intersect(&qs[i - 1], &y(i - 1), t, &qs[i + 1], &y(i + 1), &a_next);
        knots.push((
            zstar.clone(),
            y(i - 1) + t.clone() * (zstar.clone() - qs[i - 1].clone()),
        ));
        knots.push((qs[i + 1].clone(), y(i + 1)));
        knots.extend(knots_above(g, &qs[i + 1]));
    }
    build_from_knots(knots)
}

/// Intersection at `z` inside the first piece (`i = 1`), `0 < t < A_1`.
fn case_boundary<S: Scalar>(ctx: &CaseCtx<S>, z: &S) -> Result<PiecewiseLinear<S>> {
    let g = &ctx.g;
    let t = &ctx.target;
    let q = g.breakpoint_count();
    let qs = g.breakpoints();
    let y = |j: usize| g.eval_unchecked(&qs[j]);
    let yz = g.eval_unchecked(z);

    if q == 0 {
        // (I) the whole domain becomes the line of slope t through (z, yz)
        let knots = vec![
            (
                qs[0].clone(),
                yz.clone() + t.clone() * (qs[0].clone() - z.clone()),
            ),
            (qs[1].clone(), yz + t.clone() * (qs[1].clone() - z.clone())),
        ];
        return build_from_knots(knots);
    }
    let a2 = g.slope(2).clone();
    let chord_ok = y(2) - yz.clone() >= t.clone() * (qs[2].clone() - z.clone());
    if chord_ok {
        if a2 < *g.slope(1) {
            // (II) line through (z, yz) and (q_2, y_2), then g
            let m = (y(2) - yz.clone()) / (qs[2].clone() - z.clone());
            let mut knots = vec![
                (
                    qs[0].clone(),
                    yz.clone() + m.clone() * (qs[0].clone() - z.clone()),
                ),
                (qs[2].clone(), y(2)),
            ];
            knots.extend(knots_above(g, &qs[2]));
            build_from_knots(knots)
        } else {
            // (III) slope t through (z, yz) until the pivot, then slope A_2
            let u = line_intersect(z, &yz, t, &qs[2], &y(2), &a2);
            let mut knots = vec![
                (
                    qs[0].clone(),
                    yz.clone() + t.clone() * (qs[0].clone() - z.clone()),
                ),
                (u.clone(), yz.clone() + t.clone() * (u - z.clone())),
                (qs[1].clone(), y(1)),
            ];
            knots.extend(knots_above(g, &qs[1]));
            build_from_knots(knots)
        }
    } else {
        // (IV) slope t through (z, yz) until it meets g inside piece 2
        let u = line_intersect(z, &yz, t, &qs[2], &y(2), &a2);
        let mut knots = vec![
            (
                qs[0].clone(),
                yz.clone() + t.clone() * (qs[0].clone() - z.clone()),
            ),
            (u.clone(), yz.clone() + t.clone() * (u - z.clone())),
            (qs[2].clone(), y(2)),
        ];
        knots.extend(knots_above(g, &qs[2]));
        build_from_knots(knots)
    }
}

/// Intersection at `z` inside an interior piece `1 < i <= Q`, `0 < t < A_i`.
fn case_interior<S: Scalar>(ctx: &CaseCtx<S>, z: &S) -> Result<PiecewiseLinear<S>> {
    let g = &ctx.g;
    let t = &ctx.target;
    let i = ctx.i;
    let qs = g.breakpoints();
    let y = |j: usize| g.eval_unchecked(&qs[j]);
    let yz = g.eval_unchecked(z);
    let ai = g.slope(i).clone();
    let a_prev = g.slope(i - 1).clone();
    let a_next = g.slope(i + 1).clone();
    let s_plus = (y(i + 1) - yz.clone()) / (qs[i + 1].clone() - z.clone());
    let s_minus = (y(i - 2) - yz.clone()) / (qs[i - 2].clone() - z.clone());

    if ai < a_prev.clone().min_val(a_next.clone()) {
        // (I) extend both neighboring pieces toward the slope-t segment
        let u = line_intersect(&qs[i - 1], &y(i - 1), &a_prev, z, &yz, t);
        let v = line_intersect(z, &yz, t, &qs[i], &y(i), &a_next);
        let mut knots = knots_below(g, &qs[i - 1]);
        knots.push((qs[i - 1].clone(), y(i - 1)));
        knots.push((u.clone(), yz.clone() + t.clone() * (u - z.clone())));
        knots.push((v.clone(), yz.clone() + t.clone() * (v - z.clone())));
        knots.push((qs[i].clone(), y(i)));
        knots.extend(knots_above(g, &qs[i]));
        return build_from_knots(knots);
    }
    if s_plus.clone().max_val(s_minus.clone()) < *t {
        // (II) the slope-t segment through z spans into both neighbors
        let u = affine_root_between(&qs[i - 2], &y(i - 2), &qs[i - 1], &y(i - 1), z, &yz, t);
        let v = line_intersect(z, &yz, t, &qs[i], &y(i), &a_next);
        let mut knots = knots_below(g, &u);
        knots.push((u.clone(), yz.clone() + t.clone() * (u.clone() - z.clone())));
        knots.push((v.clone(), yz.clone() + t.clone() * (v.clone() - z.clone())));
        knots.extend(knots_above(g, &v));
        return build_from_knots(knots);
    }
    if ai > a_prev.clone().max_val(a_next.clone()) {
        // (III) one chord from inside piece i-1 through z to q_{i+1}
        // (reflect when the steeper secant is on the left)
        if s_plus < s_minus {
            let r = ctx.reflect();
            let zr = S::one() - z.clone();
            return Ok(case_interior(&r, &zr)?.reflect_neg());
        }
        let m = s_plus;
        let u = affine_root_between(&qs[i - 2], &y(i - 2), &qs[i - 1], &y(i - 1), z, &yz, &m);
        let mut knots = knots_below(g, &u);
        knots.push((u.clone(), yz.clone() + m.clone() * (u - z.clone())));
        knots.push((qs[i + 1].clone(), y(i + 1)));
        knots.extend(knots_above(g, &qs[i + 1]));
        return build_from_knots(knots);
    }
    // slope between its neighbors; normalize to A_{i-1} < A_i < A_{i+1}
    if a_prev > a_next {
        let r = ctx.reflect();
        let zr = S::one() - z.clone();
        return Ok(case_interior(&r, &zr)?.reflect_neg());
    }
    if s_plus.clone().min_val(s_minus.clone()) >= *t {
        // (IV) secant from q_{i-2} through z, then the extended piece i+1
        let m2 = s_minus;
        let u = line_intersect(z, &yz, &m2, &qs[i], &y(i), &a_next);
        let mut knots = knots_below(g, &qs[i - 2]);
        knots.push((qs[i - 2].clone(), y(i - 2)));
        knots.push((u.clone(), yz.clone() + m2.clone() * (u - z.clone())));
        knots.push((qs[i].clone(), y(i)));
        knots.extend(knots_above(g, &qs[i]));
        build_from_knots(knots)
    } else {
        // (V) slope-t segment through z between piece i-1 and piece i+1
        let u = affine_root_between(&qs[i - 2], &y(i - 2), &qs[i - 1], &y(i - 1), z, &yz, t);
        let v = line_intersect(z, &yz, t, &qs[i], &y(i), &a_next);
        let mut knots = knots_below(g, &u);
        knots.push((u.clone(), yz.clone() + t.clone() * (u - z.clone())));
        knots.push((v.clone(), yz.clone() + t.clone() * (v - z.clone())));
        knots.push((qs[i].clone(), y(i)));
        knots.extend(knots_above(g, &qs[i]));
        build_from_knots(knots)
    }
}

#[derive(Clone, Debug)]
pub struct ReduceOutcome<S> {
    pub h: PiecewiseLinear<S>,
    /// Values of the termination potential after each adjustment.
    pub potentials: Vec<u64>,
    pub risk_before: S,
    pub risk_after: S,
}

fn potential<S: Scalar>(g: &PiecewiseLinear<S>, threshold: &S) -> u64 {
    let q = g.breakpoint_count() as u64;
    let over = g
        .slopes()
        .iter()
        .filter(|a| a.abs() > threshold.clone())
        .count() as u64;
    (q + 1) * (q + 1) + over
}

/// Picks the 1-based index of the largest-magnitude slope (smallest index on
/// ties), provided it exceeds `threshold`.
fn argmax_slope<S: Scalar>(g: &PiecewiseLinear<S>, threshold: &S) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (idx, a) in g.slopes().iter().enumerate() {
        let mag = a.abs();
        if mag > threshold.clone() {
            let better = match &best {
                None => true,
                Some((_, m)) => mag > m.clone(),
            };
            if better {
                best = Some((idx + 1, mag));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Drives `Lip(h)` down to `Lip(f)` without increasing risk or breakpoint
/// count. For a constant target (`Lip(f) = 0`) returns the best constant
/// approximation, the density-weighted mean of `f`.
pub fn lipschitz_reduce<S: Scalar>(
    g: &PiecewiseLinear<S>,
    f: &PiecewisePoly<S>,
    dens: &PiecewisePoly<S>,
) -> Result<ReduceOutcome<S>> {
    let lip_f = f.lipschitz_bound();
    let risk_before = pl_risk(g, f, dens);
    if lip_f.is_zero() {
        let mass = dens.integrate();
        let c = if mass.is_zero() {
            f.eval(&f.domain().0).expect("left endpoint in domain")
        } else {
            f.mul(dens).expect("shared domain").integrate() / mass
        };
        let (a, b) = g.domain();
        let h = PiecewiseLinear::constant(a, b, c);
        let risk_after = pl_risk(&h, f, dens);
        return Ok(ReduceOutcome {
            h,
            potentials: vec![],
            risk_before,
            risk_after,
        });
    }
    let mut current = g.clone();
    let mut potentials = vec![potential(&current, &lip_f)];
    while let Some(i) = argmax_slope(&current, &lip_f) {
        let sign = S::from_int(current.slope(i).signum_int() as i64);
        let target = sign * lip_f.clone();
        let out = adjust_slope(&current, f, &lip_f, i, &target, dens)?;
        current = out.h;
        let p = potential(&current, &lip_f);
        if p >= *potentials.last().unwrap() {
            return Err(Error::Internal(
                "lipschitz reduction potential failed to decrease".into(),
            ));
        }
        potentials.push(p);
    }
    let risk_after = pl_risk(&current, f, dens);
    Ok(ReduceOutcome {
        h: current,
        potentials,
        risk_before,
        risk_after,
    })
}

/// Reduces the Lipschitz constant to at most `Q(g) * Lip(f)` while keeping
/// the alternating slope relation over `indices` intact, unless the
/// breakpoint count drops first (in which case it returns immediately, which
/// satisfies the contract).
pub fn relation_preserving_reduce<S: Scalar>(
    g: &PiecewiseLinear<S>,
    f: &PiecewisePoly<S>,
    dens: &PiecewisePoly<S>,
    indices: &[usize],
) -> Result<ReduceOutcome<S>> {
    let q0 = g.breakpoint_count();
    if indices.is_empty() || indices.len().is_multiple_of(2) {
        return Err(Error::Precondition("need an odd number of indices".into()));
    }
    if indices.windows(2).any(|w| w[0] >= w[1]) || *indices.last().unwrap() > q0 + 1 {
        return Err(Error::Precondition(
            "indices must be increasing and at most Q(g)+1".into(),
        ));
    }
    let max_a = g
        .slopes()
        .iter()
        .map(|a| a.to_f64().abs())
        .fold(0.0, f64::max);
    if !alternating_sum(g.slopes(), indices).eq_within(&S::zero(), 1e-9 * (1.0 + max_a)) {
        return Err(Error::Precondition(
            "alternating slope sum must vanish on the given indices".into(),
        ));
    }
    let lip_f = f.lipschitz_bound();
    if lip_f.is_zero() {
        return Err(Error::Precondition(
            "relation-preserving reduction needs Lip(f) > 0".into(),
        ));
    }
    let risk_before = pl_risk(g, f, dens);
    let threshold = S::from_int(q0 as i64) * lip_f.clone();
    let mut current = g.clone();
    let mut potentials = vec![potential(&current, &threshold)];

    'outer: while let Some(big) = argmax_slope(&current, &threshold) {
        let s_sign = current.slope(big).signum_int();
        if let Some(pos) = indices.iter().position(|&ij| ij == big) {
            // the oversized slope participates in the relation: shed the
            // excess onto opposite-signed members so the sum stays zero
            let j_pos = pos + 1; // 1-based position
            let cap_s = if j_pos % 2 == 0 { s_sign } else { -s_sign }; // sign of (-1)^j A_{i_j}
            let mut remaining = current.slope(big).abs() - threshold.clone();
            // candidates: positions whose signed contribution opposes 𝔖
            let mut cands: Vec<(usize, S)> = indices
                .iter()
                .enumerate()
                .filter_map(|(p, &ij)| {
                    let a = current.slope(ij);
                    let sgn = a.signum_int();
                    if sgn == 0 {
                        return None;
                    }
                    let contrib = if (p + 1) % 2 == 0 { sgn } else { -sgn };
                    if contrib == -cap_s {
                        Some((ij, a.abs()))
                    } else {
                        None
                    }
                })
                .collect();
            cands.sort_by(|x, y| y.1.cmp_total(&x.1).then(x.0.cmp(&y.0)));
            let mut plan: Vec<(usize, S)> =
                vec![(big, S::from_int(s_sign as i64) * threshold.clone())];
            for (ij, mag) in cands {
                if remaining.is_zero() || remaining < S::zero() {
                    break;
                }
                let capacity = mag.clone() - lip_f.clone();
                if capacity <= S::zero() {
                    continue;
                }
                let r = remaining.clone().min_val(capacity);
                let new_mag = mag - r.clone();
                let sgn = S::from_int(current.slope(ij).signum_int() as i64);
                plan.push((ij, sgn * new_mag));
                remaining -= r;
            }
            if remaining.signum_int() > 0 && S::EXACT {
                return Err(Error::Internal(
                    "mass redistribution ran out of capacity".into(),
                ));
            }
            plan.sort_by_key(|(ij, _)| *ij);
            for (ij, tgt) in plan {
                if current.slope(ij).eq_within(&tgt, 0.0) {
                    continue;
                }
                let out = adjust_slope(&current, f, &lip_f, ij, &tgt, dens)?;
                current = out.h;
                if out.q_dropped {
                    break 'outer;
                }
            }
            debug_assert!(
                !S::EXACT || alternating_sum(current.slopes(), indices).is_zero(),
                "redistribution must preserve the alternating sum"
            );
        } else {
            // slope outside the relation: a single adjustment suffices
            let target = S::from_int(s_sign as i64) * threshold.clone();
            let out = adjust_slope(&current, f, &lip_f, big, &target, dens)?;
            current = out.h;
            if out.q_dropped {
                break 'outer;
            }
        }
        let p = potential(&current, &threshold);
        if p >= *potentials.last().unwrap() {
            return Err(Error::Internal(
                "relation-preserving potential failed to decrease".into(),
            ));
        }
        potentials.push(p);
    }
    let risk_after = pl_risk(&current, f, dens);
    Ok(ReduceOutcome {
        h: current,
        potentials,
        risk_before,
        risk_after,
    })
}

#[derive(Clone, Debug)]
pub struct BetterApprox<S> {
    pub theta: ShallowParams<S>,
    pub risk_before: S,
    pub risk_after: S,
    pub q_before: usize,
    pub q_after: usize,
    pub lip_after: S,
}

/// The better-approximation map: returns parameters whose realization has no
/// larger risk, no more breakpoints, Lipschitz constant at most
/// `width * Lip(f) * (b - a)` after renormalizing the domain to unit length,
/// and sup norm at most that bound plus `sup |f|`.
pub fn better_approx<S: Scalar>(
    theta: &ShallowParams<S>,
    problem: &Problem<S>,
) -> Result<BetterApprox<S>> {
    let (a, b) = problem.domain();
    let unit = a.eq_within(&S::zero(), 1e-12) && b.eq_within(&S::one(), 1e-12);
    if !unit {
        // pull everything back to [0, 1], solve there, push forward
        let span = b.clone() - a.clone();
        let f_u = problem.target.compose_affine(&a, &span)?;
        let p_u = problem.density.compose_affine(&a, &span)?;
        let problem_u = Problem::new(f_u, p_u)?;
        let theta_u = map_to_unit(theta, &a, &b);
        let out = better_approx(&theta_u, &problem_u)?;
        let theta_back = map_from_unit(&out.theta, &a, &b);
        let g = realize(&theta_back, &a, &b);
        return Ok(BetterApprox {
            risk_before: risk_exact_local(theta, problem),
            risk_after: risk_exact_local(&theta_back, problem),
            q_before: realize(theta, &a, &b).breakpoint_count(),
            q_after: g.breakpoint_count(),
            lip_after: g.lipschitz(),
            theta: theta_back,
        });
    }

    let h = theta.width();
    let g0 = realize(theta, &a, &b);
    let q_before = g0.breakpoint_count();
    let risk_before = pl_risk(&g0, &problem.target, &problem.density);
    let lip_f = problem.target.lipschitz_bound();

    // constant target: the exact fit is a constant network
    if lip_f.is_zero() {
        let red = lipschitz_reduce(&g0, &problem.target, &problem.density)?;
        let mut out = ShallowParams::zeros(h);
        let c = red.h.intercepts()[0].clone();
        let n = out.theta_mut().len();
        out.theta_mut()[n - 1] = c;
        let g = realize(&out, &a, &b);
        return Ok(BetterApprox {
            risk_before,
            risk_after: pl_risk(&g, &problem.target, &problem.density),
            q_before,
            q_after: g.breakpoint_count(),
            lip_after: g.lipschitz(),
            theta: out,
        });
    }

    let mut reduced: PiecewiseLinear<S> = g0.clone();
    let mut synthesized: Option<ShallowParams<S>> = None;
    if q_before == h && h > 0 {
        let cert = slope_relation_holds(&g0, h)?;
        let indices = cert.witness_indices.ok_or_else(|| {
            Error::Internal("realization of a width-h network must satisfy the relation".into())
        })?;
        let step = relation_preserving_reduce(&g0, &problem.target, &problem.density, &indices)?;
        if step.h.breakpoint_count() == h {
            // relation still alive: synthesize at exact width
            let psi = match synthesize(&step.h, h)? {
                Synthesis::Representable(p) => p,
                Synthesis::NotRepresentable => {
                    return Err(Error::Internal(
                        "relation-preserving reduction lost representability".into(),
                    ))
                }
            };
            synthesized = Some(psi);
        } else {
            reduced = step.h;
        }
    }
    let psi = match synthesized {
        Some(p) => p,
        None => {
            let red = lipschitz_reduce(&reduced, &problem.target, &problem.density)?;
            match synthesize(&red.h, h)? {
                Synthesis::Representable(p) => p,
                Synthesis::NotRepresentable => {
                    return Err(Error::Internal(
                        "reduced function with Q <= h-1 must be representable".into(),
                    ))
                }
            }
        }
    };

    // constant shift: move the realization toward f by the signed distance
    // inf |psi - f| so the sup norm is controlled without hurting the risk
    let g_psi = realize(&psi, &a, &b);
    let diff = g_psi
        .to_piecewise_poly()
        .sub(&problem.target)
        .expect("shared domain");
    let mut theta_out = psi.clone();
    if !diff.has_interior_root() {
        let va = diff.eval(&a).expect("endpoint");
        let vb = diff.eval(&b).expect("endpoint");
        if !va.is_zero() && !vb.is_zero() && va.signum_int() == vb.signum_int() {
            let k = va.signum_int();
            let (lo, hi) = diff.range_bounds();
            let mut r = if k > 0 { lo } else { hi.abs() };
            // certify k * diff - r >= 0, shrinking r when the bound from
            // approximate critical points overshoots
            for _ in 0..64 {
                if r.signum_int() <= 0 {
                    r = S::zero();
                    break;
                }
                let shifted = if k > 0 {
                    diff.add(&PiecewisePoly::constant(a.clone(), b.clone(), -r.clone())?)?
                } else {
                    diff.neg()
                        .add(&PiecewisePoly::constant(a.clone(), b.clone(), -r.clone())?)?
                };
                let ra = shifted.eval(&a).expect("endpoint");
                if ra.signum_int() >= 0 && !shifted.has_interior_root() {
                    break;
                }
                if ra.signum_int() >= 0
                    && shifted.eval(&b).expect("endpoint").signum_int() >= 0
                    && shifted.range_bounds().0.signum_int() >= 0
                {
                    break;
                }
                r = r.half();
            }
            if r.signum_int() > 0 {
                let n = theta_out.theta_mut().len();
                let kc = S::from_int(k as i64);
                theta_out.theta_mut()[n - 1] = theta_out.theta()[n - 1].clone() - kc * r;
            }
        }
    }

    let g_out = realize(&theta_out, &a, &b);
    let risk_after = pl_risk(&g_out, &problem.target, &problem.density);
    let risk_alt = pl_risk(&g_psi, &problem.target, &problem.density);
    // the shift never increases risk; guard against float drift anyway
    let (theta_final, g_final, risk_final) = if risk_after <= risk_alt {
        (theta_out, g_out, risk_after)
    } else {
        (psi, g_psi, risk_alt)
    };
    if S::EXACT && risk_final > risk_before {
        return Err(Error::Internal(format!(
            "better_approx increased the exact risk: {risk_before} -> {risk_final}"
        )));
    }
    Ok(BetterApprox {
        risk_before,
        risk_after: risk_final,
        q_before,
        q_after: g_final.breakpoint_count(),
        lip_after: g_final.lipschitz(),
        theta: theta_final,
    })
}

fn risk_exact_local<S: Scalar>(theta: &ShallowParams<S>, problem: &Problem<S>) -> S {
    let (a, b) = problem.domain();
    pl_risk(&realize(theta, &a, &b), &problem.target, &problem.density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly;
    use crate::rng::SplitMix64;
    use crate::scalar::Rat;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    fn unit_dens() -> PiecewisePoly<Rat> {
        PiecewisePoly::constant(r(0, 1), r(1, 1), r(1, 1)).unwrap()
    }

    fn line(a: i64, ad: i64, b: i64, bd: i64) -> PiecewisePoly<Rat> {
        PiecewisePoly::from_poly(
            r(0, 1),
            r(1, 1),
            Poly::affine(Rat::new(b, bd), Rat::new(a, ad)),
        )
        .unwrap()
    }

    #[test]
    fn adjust_slope_line_example() {
        // g = 2x, f = x (Lip 1), i = 1, target 1: h should become x, risk 0
        let g = PiecewiseLinear::from_knots(&[r(0, 1), r(1, 1)], &[r(0, 1), r(2, 1)]).unwrap();
        let f = line(1, 1, 0, 1);
        let out = adjust_slope(&g, &f, &r(1, 1), 1, &r(1, 1), &unit_dens()).unwrap();
        assert_eq!(out.risk_before, r(1, 3));
        assert_eq!(out.risk_after, r(0, 1));
        assert_eq!(out.h.slopes(), &[r(1, 1)]);
        assert_eq!(out.h.eval(&r(1, 2)).unwrap(), r(1, 2));
    }

    #[test]
    fn adjust_slope_degenerate_target_is_identity() {
        let g = PiecewiseLinear::from_knots(&[r(0, 1), r(1, 1)], &[r(0, 1), r(2, 1)]).unwrap();
        let f = line(1, 1, 0, 1);
        let out = adjust_slope(&g, &f, &r(1, 1), 1, &r(2, 1), &unit_dens()).unwrap();
        assert_eq!(out.h, g);
        assert_eq!(out.risk_before, out.risk_after);
        assert!(!out.q_dropped);
    }

    #[test]
    fn adjust_slope_last_piece_no_intersection() {
        // g: kink at 1/2, slopes (1, 3); f = 0 with declared Lip 1/10
        let g = PiecewiseLinear::canonicalize(
            vec![r(0, 1), r(1, 2), r(1, 1)],
            vec![r(1, 1), r(3, 1)],
            vec![r(1, 1), r(0, 1)],
        )
        .unwrap();
        // g(0)=1 > 0, increasing: no intersection with f = 0 anywhere
        let f = PiecewisePoly::constant(r(0, 1), r(1, 1), r(0, 1)).unwrap();
        let lip = r(1, 10);
        let out = adjust_slope(&g, &f, &lip, 2, &lip, &unit_dens()).unwrap();
        assert!(out.risk_after <= out.risk_before);
        assert!(!out.q_dropped);
        // h agrees with g left of the kink, slope 1/10 after
        assert_eq!(out.h.slopes(), &[r(1, 1), r(1, 10)]);
        assert_eq!(out.h.eval(&r(1, 4)).unwrap(), g.eval(&r(1, 4)).unwrap());
    }

    #[test]
    fn adjust_slope_preserves_other_slopes_or_drops_q() {
        let mut rng = SplitMix64::new(404);
        let mut checked = 0;
        while checked < 150 {
            let q = rng.below(4) as usize;
            let g = random_pl(&mut rng, q);
            let f = random_linear_target(&mut rng);
            let lip = f.lipschitz_bound();
            let i = 1 + rng.below((q + 1) as u64) as usize;
            let ai = g.slope(i).clone();
            if ai.abs() <= lip || lip.is_zero() {
                continue;
            }
            // random admissible target magnitude between Lip(f) and |A_i|
            let lam = Rat::new(1 + rng.below(7) as i64, 8);
            let mag = lip.clone() + lam * (ai.abs() - lip.clone());
            let target = Rat::from_int(ai.signum_int() as i64) * mag;
            let out = adjust_slope(&g, &f, &lip, i, &target, &unit_dens()).unwrap();
            assert!(out.risk_after <= out.risk_before, "risk must not increase");
            assert!(out.h.breakpoint_count() <= q);
            if !out.q_dropped {
                assert_eq!(out.h.breakpoint_count(), q);
                for j in 1..=q + 1 {
                    if j == i {
                        assert_eq!(*out.h.slope(j), target);
                    } else {
                        assert_eq!(out.h.slope(j), g.slope(j));
                    }
                }
            }
            checked += 1;
        }
    }

    /// One deliberate instance per geometric sub-case, with the expected
    /// slope structure derived by hand.
    #[test]
    fn adjust_slope_hits_every_case() {
        let dens = unit_dens();
        let case = |g: &PiecewiseLinear<Rat>,
                    f: &PiecewisePoly<Rat>,
                    lip: Rat,
                    i: usize,
                    t: Rat,
                    want_slopes: &[Rat],
                    label: &str| {
            let out = adjust_slope(g, f, &lip, i, &t, &dens).unwrap();
            assert!(out.risk_after <= out.risk_before, "{label}: risk rose");
            assert_eq!(out.h.slopes(), want_slopes, "{label}: slope structure");
        };
        let zero = PiecewisePoly::constant(r(0, 1), r(1, 1), r(0, 1)).unwrap();

        // no intersection, (I): last piece, keep g left of the kink
        let g =
            PiecewiseLinear::from_knots(&[r(0, 1), r(1, 2), r(1, 1)], &[r(1, 1), r(3, 2), r(3, 1)])
                .unwrap();
        case(
            &g,
            &zero,
            r(1, 10),
            2,
            r(1, 10),
            &[r(1, 1), r(1, 10)],
            "case1-I",
        );

        // no intersection, (II): chord holds, next slope steeper; pivot u
        let g =
            PiecewiseLinear::from_knots(&[r(0, 1), r(1, 2), r(1, 1)], &[r(1, 1), r(2, 1), r(4, 1)])
                .unwrap();
        assert_eq!(g.slopes(), &[r(2, 1), r(4, 1)]);
        case(
            &g,
            &zero,
            r(1, 2),
            1,
            r(1, 2),
            &[r(1, 2), r(4, 1)],
            "case1-II",
        );

        // no intersection, (III): chord holds, next slope shallower; Q drops
        let g =
            PiecewiseLinear::from_knots(&[r(0, 1), r(1, 2), r(1, 1)], &[r(1, 1), r(3, 1), r(4, 1)])
                .unwrap();
        assert_eq!(g.slopes(), &[r(4, 1), r(2, 1)]);
        case(&g, &zero, r(1, 1), 1, r(1, 1), &[r(3, 1)], "case1-III");

        // no intersection, (IV): chord fails; the kink slides right
        let g = PiecewiseLinear::canonicalize(
            vec![r(0, 1), r(1, 2), r(1, 1)],
            vec![r(4, 1), r(1, 4)],
            vec![r(1, 1), r(23, 8)],
        )
        .unwrap();
        case(
            &g,
            &zero,
            r(3, 1),
            1,
            r(3, 1),
            &[r(3, 1), r(1, 4)],
            "case1-IV",
        );
        {
            // and the kink lands exactly where the slope-3 chord meets piece 2
            let out = adjust_slope(&g, &zero, &r(3, 1), 1, &r(3, 1), &dens).unwrap();
            assert_eq!(out.h.kinks(), &[r(15, 22)], "case1-IV pivot");
        }

        // intersection, boundary (I): Q = 0, line through (z, g(z))
        let g = PiecewiseLinear::from_knots(&[r(0, 1), r(1, 1)], &[r(-1, 2), r(3, 2)]).unwrap();
        let f = line(1, 1, -1, 4); // x - 1/4, crosses 2x - 1/2 at z = 1/4
        let out = adjust_slope(&g, &f, &r(1, 1), 1, &r(1, 1), &dens).unwrap();
        assert_eq!(out.h.slopes(), &[r(1, 1)], "case2-I");
        assert_eq!(out.risk_after, r(0, 1), "case2-I lands on f exactly");

        // intersection, boundary (II): chord to q_2, Q drops
        let g =
            PiecewiseLinear::from_knots(&[r(0, 1), r(1, 2), r(1, 1)], &[r(0, 1), r(3, 2), r(7, 4)])
                .unwrap();
        assert_eq!(g.slopes(), &[r(3, 1), r(1, 2)]);
        let f = PiecewisePoly::constant(r(0, 1), r(1, 1), r(1, 2)).unwrap();
        case(&g, &f, r(1, 1), 1, r(1, 1), &[r(3, 2)], "case2-II");

        // intersection, boundary (III): slope t then the extended next piece
        let g =
            PiecewiseLinear::from_knots(&[r(0, 1), r(1, 2), r(1, 1)], &[r(0, 1), r(1, 2), r(2, 1)])
                .unwrap();
        assert_eq!(g.slopes(), &[r(1, 1), r(3, 1)]);
        let f = PiecewisePoly::constant(r(0, 1), r(1, 1), r(1, 4)).unwrap();
        case(
            &g,
            &f,
            r(1, 2),
            1,
            r(1, 2),
            &[r(1, 2), r(3, 1)],
            "case2-III",
        );
        {
            let out = adjust_slope(&g, &f, &r(1, 2), 1, &r(1, 2), &dens).unwrap();
            assert_eq!(out.h.kinks(), &[r(9, 20)], "case2-III pivot");
        }

        // intersection, boundary (IV): chord fails, kink slides into piece 2
        let g =
            PiecewiseLinear::from_knots(&[r(0, 1), r(1, 2), r(1, 1)], &[r(0, 1), r(1, 1), r(9, 8)])
                .unwrap();
        assert_eq!(g.slopes(), &[r(2, 1), r(1, 4)]);
        let f = PiecewisePoly::constant(r(0, 1), r(1, 1), r(1, 2)).unwrap();
        case(&g, &f, r(3, 2), 1, r(3, 2), &[r(3, 2), r(1, 4)], "case2-IV");
        {
            let out = adjust_slope(&g, &f, &r(3, 2), 1, &r(3, 2), &dens).unwrap();
            assert_eq!(out.h.kinks(), &[r(3, 5)], "case2-IV pivot");
        }

        // interior (I): adjusted slope below both neighbors, double pivot
        let g = PiecewiseLinear::from_knots(
            &[r(0, 1), r(1, 3), r(2, 3), r(1, 1)],
            &[r(0, 1), r(1, 1), r(4, 3), r(7, 3)],
        )
        .unwrap();
        assert_eq!(g.slopes(), &[r(3, 1), r(1, 1), r(3, 1)]);
        let f = PiecewisePoly::constant(r(0, 1), r(1, 1), r(7, 6)).unwrap();
        case(
            &g,
            &f,
            r(1, 2),
            2,
            r(1, 2),
            &[r(3, 1), r(1, 2), r(3, 1)],
            "case3-I",
        );
        {
            let out = adjust_slope(&g, &f, &r(1, 2), 2, &r(1, 2), &dens).unwrap();
            assert_eq!(out.h.kinks(), &[r(11, 30), r(19, 30)], "case3-I pivots");
        }

        // interior (II): the slope-t segment spans into both neighbors
        let g = PiecewiseLinear::from_knots(
            &[r(0, 1), r(1, 3), r(2, 3), r(1, 1)],
            &[r(0, 1), r(1, 12), r(13, 12), r(7, 6)],
        )
        .unwrap();
        assert_eq!(g.slopes(), &[r(1, 4), r(3, 1), r(1, 4)]);
        let f = PiecewisePoly::constant(r(0, 1), r(1, 1), r(7, 12)).unwrap();
        case(
            &g,
            &f,
            r(2, 1),
            2,
            r(2, 1),
            &[r(1, 4), r(2, 1), r(1, 4)],
            "case3-II",
        );
        {
            let out = adjust_slope(&g, &f, &r(2, 1), 2, &r(2, 1), &dens).unwrap();
            assert_eq!(out.h.kinks(), &[r(5, 21), r(16, 21)], "case3-II pivots");
        }

        // interior (III): secant chord through z, breakpoints collapse
        case(&g, &f, r(1, 1), 2, r(1, 1), &[r(7, 6)], "case3-III");

        // interior (IV): both secants above t, Q drops by one
        let g = PiecewiseLinear::from_knots(
            &[r(0, 1), r(1, 3), r(2, 3), r(1, 1)],
            &[r(0, 1), r(1, 12), r(5, 12), r(17, 12)],
        )
        .unwrap();
        assert_eq!(g.slopes(), &[r(1, 4), r(1, 1), r(3, 1)]);
        let f = PiecewisePoly::constant(r(0, 1), r(1, 1), r(1, 4)).unwrap();
        case(&g, &f, r(1, 2), 2, r(1, 2), &[r(1, 2), r(3, 1)], "case3-IV");

        // interior (V): left secant below t, double pivot
        case(
            &g,
            &f,
            r(3, 4),
            2,
            r(3, 4),
            &[r(1, 4), r(3, 4), r(3, 1)],
            "case3-V",
        );
        {
            // the [v, q_i] stretch picks up slope A_3, so the old kink at
            // q_2 merges away and only u and v remain
            let out = adjust_slope(&g, &f, &r(3, 4), 2, &r(3, 4), &dens).unwrap();
            assert_eq!(out.h.kinks(), &[r(1, 4), r(35, 54)], "case3-V pivots");
        }
    }

    #[test]
    fn adjust_slope_reflection_symmetry() {
        // risks agree between a call and its reflected counterpart
        let mut rng = SplitMix64::new(505);
        let mut checked = 0;
        while checked < 60 {
            let q = 1 + rng.below(3) as usize;
            let g = random_pl(&mut rng, q);
            let f = random_linear_target(&mut rng);
            let dens = unit_dens();
            let lip = f.lipschitz_bound();
            let i = 1 + rng.below((q + 1) as u64) as usize;
            let ai = g.slope(i).clone();
            if ai.abs() <= lip || lip.is_zero() {
                continue;
            }
            let target = Rat::from_int(ai.signum_int() as i64)
                * (lip.clone() + (ai.abs() - lip.clone()).half());
            let out = adjust_slope(&g, &f, &lip, i, &target, &dens).unwrap();
            // reflected instance
            let gr = g.reflect_neg();
            let fr = f.reflect().neg();
            let ir = q + 2 - i;
            let outr = adjust_slope(&gr, &fr, &lip, ir, &target, &dens).unwrap();
            assert_eq!(out.risk_after, outr.risk_after, "reflection symmetry");
            checked += 1;
        }
    }

    fn random_pl(rng: &mut SplitMix64, q: usize) -> PiecewiseLinear<Rat> {
        loop {
            let mut kinks: Vec<Rat> = (0..q)
                .map(|_| Rat::new(1 + rng.below(30) as i64, 31))
                .collect();
            kinks.sort();
            kinks.dedup();
            if kinks.len() != q {
                continue;
            }
            let mut xs = vec![r(0, 1)];
            xs.extend(kinks);
            xs.push(r(1, 1));
            let ys: Vec<Rat> = (0..xs.len())
                .map(|_| {
                    let (p, d) = rng.rational_parts(8, 4);
                    Rat::new(p, d)
                })
                .collect();
            if let Ok(f) = PiecewiseLinear::from_knots(&xs, &ys) {
                if f.breakpoint_count() == q {
                    return f;
                }
            }
        }
    }

    fn random_linear_target(rng: &mut SplitMix64) -> PiecewisePoly<Rat> {
        // piecewise-linear continuous target with one or two kinks
        let q = 1 + rng.below(2) as usize;
        random_pl(rng, q).to_piecewise_poly()
    }

    #[test]
    fn lipschitz_reduce_contract() {
        // g = 5x, f = x: output must have Lip <= 1 and risk <= exact input risk
        let g = PiecewiseLinear::from_knots(&[r(0, 1), r(1, 1)], &[r(0, 1), r(5, 1)]).unwrap();
        let f = line(1, 1, 0, 1);
        let out = lipschitz_reduce(&g, &f, &unit_dens()).unwrap();
        assert!(out.h.lipschitz() <= r(1, 1));
        assert!(out.risk_after <= out.risk_before);
        assert!(out.potentials.windows(2).all(|w| w[1] < w[0]));

        // already within the bound: unchanged
        let tame = PiecewiseLinear::from_knots(&[r(0, 1), r(1, 1)], &[r(0, 1), r(1, 2)]).unwrap();
        let out = lipschitz_reduce(&tame, &f, &unit_dens()).unwrap();
        assert_eq!(out.h, tame);
    }

    #[test]
    fn lipschitz_reduce_random_instances() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..80 {
            let q = rng.below(4) as usize;
            let g = random_pl(&mut rng, q);
            let f = random_linear_target(&mut rng);
            if f.lipschitz_bound().is_zero() {
                continue;
            }
            let out = lipschitz_reduce(&g, &f, &unit_dens()).unwrap();
            assert!(out.h.lipschitz() <= f.lipschitz_bound());
            assert!(out.h.breakpoint_count() <= g.breakpoint_count());
            assert!(out.risk_after <= out.risk_before);
            assert!(out.potentials.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn lipschitz_reduce_constant_target() {
        let g = PiecewiseLinear::from_knots(&[r(0, 1), r(1, 1)], &[r(0, 1), r(5, 1)]).unwrap();
        let f = PiecewisePoly::constant(r(0, 1), r(1, 1), r(2, 1)).unwrap();
        let out = lipschitz_reduce(&g, &f, &unit_dens()).unwrap();
        assert_eq!(out.h.slopes(), &[r(0, 1)]);
        assert_eq!(out.h.eval(&r(1, 2)).unwrap(), r(2, 1));
        assert_eq!(out.risk_after, r(0, 1));
    }

    #[test]
    fn relation_preserving_reduce_guard_and_scaled_instance() {
        // slopes (M, 2M, M) with indices (1,2,3): -M + 2M - M = 0
        let m = r(6, 1);
        let g = PiecewiseLinear::canonicalize(
            vec![r(0, 1), r(1, 3), r(2, 3), r(1, 1)],
            vec![m.clone(), r(12, 1), m.clone()],
            vec![r(0, 1), r(-2, 1), r(2, 1)],
        )
        .unwrap();
        let f = line(1, 1, 0, 1); // Lip 1, Q(g) * Lip(f) = 2
        let dens = unit_dens();
        let out = relation_preserving_reduce(&g, &f, &dens, &[1, 2, 3]).unwrap();
        assert!(out.risk_after <= out.risk_before);
        assert!(out.h.breakpoint_count() <= 2);
        if out.h.breakpoint_count() == 2 {
            assert!(alternating_sum(out.h.slopes(), &[1, 2, 3]).is_zero());
            assert!(out.h.lipschitz() <= r(2, 1));
        }

        // guard: already within Q * Lip bound
        let tame = PiecewiseLinear::canonicalize(
            vec![r(0, 1), r(1, 3), r(2, 3), r(1, 1)],
            vec![r(1, 2), r(1, 1), r(1, 2)],
            vec![r(0, 1), r(-1, 6), r(1, 6)],
        )
        .unwrap();
        let out = relation_preserving_reduce(&tame, &f, &dens, &[1, 2, 3]).unwrap();
        assert_eq!(out.h, tame);
    }

    #[test]
    fn relation_preserving_reduce_random_instances() {
        use crate::shallow::realize;
        let mut rng = SplitMix64::new(2121);
        let mut done = 0;
        while done < 60 {
            // realizations of random networks always satisfy the relation
            let h = 2 + rng.below(2) as usize;
            let theta = ShallowParams::from_vec(
                (0..3 * h + 1)
                    .map(|_| {
                        let (p, q) = rng.rational_parts(6, 3);
                        Rat::new(p, q)
                    })
                    .collect(),
            )
            .unwrap();
            let g = realize(&theta, &r(0, 1), &r(1, 1));
            let q = g.breakpoint_count();
            if q < 2 {
                continue;
            }
            let cert = slope_relation_holds(&g, q).unwrap();
            let Some(indices) = cert.witness_indices else {
                continue;
            };
            let f = random_linear_target(&mut rng);
            if f.lipschitz_bound().is_zero() {
                continue;
            }
            let out = relation_preserving_reduce(&g, &f, &unit_dens(), &indices).unwrap();
            assert!(out.risk_after <= out.risk_before);
            assert!(out.h.breakpoint_count() <= q);
            if out.h.breakpoint_count() == q {
                assert!(alternating_sum(out.h.slopes(), &indices).is_zero());
                let bound = Rat::from_int(q as i64) * f.lipschitz_bound();
                assert!(out.h.lipschitz() <= bound);
            }
            done += 1;
        }
    }

    #[test]
    fn better_approx_bounds_hold() {
        let mut rng = SplitMix64::new(314);
        // f = |x - 1/2|, width 2
        let f =
            PiecewiseLinear::from_knots(&[r(0, 1), r(1, 2), r(1, 1)], &[r(1, 2), r(0, 1), r(1, 2)])
                .unwrap()
                .to_piecewise_poly();
        let problem = Problem::new(f.clone(), unit_dens()).unwrap();
        let lip_f = f.lipschitz_bound();
        let sup_f = f.sup_abs();
        for _ in 0..40 {
            let theta = ShallowParams::from_vec(
                (0..7)
                    .map(|_| {
                        let (p, q) = rng.rational_parts(8, 3);
                        Rat::new(p, q)
                    })
                    .collect(),
            )
            .unwrap();
            let out = better_approx(&theta, &problem).unwrap();
            assert!(out.risk_after <= out.risk_before, "risk bound");
            assert!(out.q_after <= out.q_before, "breakpoint bound");
            let bound = Rat::from_int(2) * lip_f.clone();
            assert!(out.lip_after <= bound, "lipschitz bound");
            let g = realize(&out.theta, &r(0, 1), &r(1, 1));
            let sup = g.sup_abs();
            assert!(sup <= bound + sup_f.clone(), "sup-norm bound");
        }
    }

    #[test]
    fn better_approx_identity_when_already_good() {
        // theta realizes f = |x-1/2| exactly: risk 0 stays 0
        let f =
            PiecewiseLinear::from_knots(&[r(0, 1), r(1, 2), r(1, 1)], &[r(1, 2), r(0, 1), r(1, 2)])
                .unwrap()
                .to_piecewise_poly();
        let problem = Problem::new(f, unit_dens()).unwrap();
        let theta = ShallowParams::pack(
            &[r(1, 1), r(1, 1)],
            &[r(0, 1), r(-1, 2)],
            &[r(-1, 1), r(2, 1)],
            r(1, 2),
        )
        .unwrap();
        let out = better_approx(&theta, &problem).unwrap();
        assert_eq!(out.risk_before, r(0, 1));
        assert_eq!(out.risk_after, r(0, 1));
    }
}
