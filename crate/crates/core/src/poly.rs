//! Univariate polynomials with exact calculus and real-root isolation.
//!
//! Coefficients are stored in ascending powers with trailing zeros stripped;
//! the zero polynomial has an empty coefficient vector and degree 0 by
//! convention. Root isolation uses Sturm chains for counting plus bisection,
//! with exact closed forms for degrees one and two when available.

use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct Poly<S> {
    coeffs: Vec<S>,
}

impl<S: std::fmt::Display> std::fmt::Debug for Poly<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c}*x^{i}"))
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

impl<S: Scalar> Poly<S> {
    pub fn new(mut coeffs: Vec<S>) -> Self {
        while coeffs.last().map(|c| c.is_zero()).unwrap_or(false) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![] }
    }

    pub fn constant(c: S) -> Self {
        Poly::new(vec![c])
    }

    /// The affine polynomial `b + a x`.
    pub fn affine(b: S, a: S) -> Self {
        Poly::new(vec![b, a])
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> S {
        self.coeffs.get(k).cloned().unwrap_or_else(S::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; 0 for the zero polynomial by convention.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading(&self) -> Option<&S> {
        self.coeffs.last()
    }

    pub fn eval(&self, x: &S) -> S {
        let mut acc = S::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x.clone() + c.clone();
        }
        acc
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            out.push(self.coeff(k) + other.coeff(k));
        }
        Poly::new(out)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            out.push(self.coeff(k) - other.coeff(k));
        }
        Poly::new(out)
    }

    pub fn neg(&self) -> Self {
        Poly::new(self.coeffs.iter().map(|c| -c.clone()).collect())
    }

    pub fn scale(&self, s: &S) -> Self {
        Poly::new(self.coeffs.iter().map(|c| c.clone() * s.clone()).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![S::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a.clone() * b.clone();
            }
        }
        Poly::new(out)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c.clone() * S::from_int(k as i64))
                .collect(),
        )
    }

    /// Antiderivative with zero constant term; exact in rational mode.
    pub fn antiderivative(&self) -> Self {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(S::zero());
        for (k, c) in self.coeffs.iter().enumerate() {
            out.push(c.clone() * S::from_ratio(1, (k + 1) as i64));
        }
        Poly::new(out)
    }

    /// Definite integral over `[lo, hi]`.
    pub fn integrate(&self, lo: &S, hi: &S) -> S {
        let anti = self.antiderivative();
        anti.eval(hi) - anti.eval(lo)
    }

    /// Substitution `x -> beta + alpha * x`, expanded by Horner.
    pub fn compose_affine(&self, beta: &S, alpha: &S) -> Self {
        let mut acc = Poly::zero();
        let lin = Poly::affine(beta.clone(), alpha.clone());
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(&lin).add(&Poly::constant(c.clone()));
        }
        acc
    }

    /// Drops coefficients that are negligible against the largest one; a no-op
    /// in exact mode. Keeps float Sturm chains from chasing noise.
    fn trim_noise(&self, rel: f64) -> Self {
        if S::EXACT || self.is_zero() {
            return self.clone();
        }
        let scale = self
            .coeffs
            .iter()
            .map(|c| c.to_f64().abs())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs
                .iter()
                .map(|c| {
                    if c.to_f64().abs() <= rel * scale {
                        S::zero()
                    } else {
                        c.clone()
                    }
                })
                .collect(),
        )
    }

    /// Remainder of `self / div` (standard long division).
    fn rem(&self, div: &Self) -> Self {
        let mut r = self.clone();
        let d = div.degree();
        let lead = div.leading().expect("division by zero polynomial").clone();
        while !r.is_zero() && r.degree() >= d && r.coeffs.len() >= div.coeffs.len() {
            let shift = r.degree() - d;
            let factor = r.leading().unwrap().clone() / lead.clone();
            let mut sub = vec![S::zero(); shift];
            sub.extend(div.coeffs.iter().map(|c| c.clone() * factor.clone()));
            let before = r.coeffs.len();
            r = r.sub(&Poly::new(sub));
            if r.coeffs.len() >= before {
                // float cancellation failed to reduce the degree; force it
                r.coeffs.truncate(before - 1);
                r = Poly::new(r.coeffs);
            }
        }
        r
    }

    /// Sturm chain `p, p', -rem(...), ...`; counts distinct real roots.
    pub fn sturm_chain(&self) -> Vec<Poly<S>> {
        let p0 = self.trim_noise(1e-14);
        if p0.is_zero() || p0.degree() == 0 {
            return vec![p0];
        }
        let mut chain = vec![p0.clone(), p0.derivative()];
        loop {
            let n = chain.len();
            let last = &chain[n - 1];
            if last.is_zero() || last.degree() == 0 {
                break;
            }
            let r = chain[n - 2].rem(last).trim_noise(1e-13).neg();
            if r.is_zero() {
                break;
            }
            chain.push(r);
        }
        chain
    }

    fn sign_changes_at(chain: &[Poly<S>], x: &S) -> usize {
        let mut count = 0;
        let mut prev = 0i32;
        for p in chain {
            let s = p.eval(x).signum_int();
            if s != 0 {
                if prev != 0 && s != prev {
                    count += 1;
                }
                prev = s;
            }
        }
        count
    }

    /// Number of distinct real roots in the half-open interval `(lo, hi]`.
    pub fn count_roots_half_open(chain: &[Poly<S>], lo: &S, hi: &S) -> usize {
        let vl = Self::sign_changes_at(chain, lo);
        let vh = Self::sign_changes_at(chain, hi);
        vl.saturating_sub(vh)
    }

    /// All distinct real roots in the open interval `(lo, hi)`, ascending.
    ///
    /// Roots of degree-one pieces are exact; degree-two roots are exact in
    /// rational mode whenever the discriminant is a perfect square. Everything
    /// else is isolated by Sturm-count bisection down to width `1e-14` scaled
    /// by the interval, then polished with one Newton step.
    pub fn roots_in_open(&self, lo: &S, hi: &S) -> Vec<S> {
        let p = self.trim_noise(1e-14);
        if p.is_zero() || p.degree() == 0 {
            return vec![];
        }
        if p.degree() == 1 {
            let root = -p.coeff(0) / p.coeff(1);
            if root > *lo && root < *hi {
                return vec![root];
            }
            return vec![];
        }
        if p.degree() == 2 {
            if let Some(mut roots) = p.quadratic_roots() {
                roots.retain(|r| *r > *lo && *r < *hi);
                return roots;
            }
        }
        let chain = p.sturm_chain();
        let mut out = Vec::new();
        // Shrink endpoints slightly inward when they are themselves roots so
        // the half-open count targets the open interval.
        let width = hi.clone() - lo.clone();
        let mut a = lo.clone();
        let mut steps = 0;
        while p.eval(&a).is_zero() && steps < 80 {
            a = a.clone() + width.clone() * S::from_ratio(1, 1 << 20);
            steps += 1;
        }
        let mut b = hi.clone();
        steps = 0;
        while p.eval(&b).is_zero() && steps < 80 {
            b = b.clone() - width.clone() * S::from_ratio(1, 1 << 20);
            steps += 1;
        }
        if a.cmp_total(&b) != std::cmp::Ordering::Less {
            return vec![];
        }
        p.isolate_rec(&chain, &a, &b, &mut out, 0);
        out.sort_by(|x, y| x.cmp_total(y));
        out.dedup_by(|x, y| x.eq_within(y, 1e-13 * (1.0 + width.to_f64().abs())));
        // keep strictly interior roots only
        out.retain(|r| *r > *lo && *r < *hi);
        out
    }

    fn quadratic_roots(&self) -> Option<Vec<S>> {
        debug_assert_eq!(self.degree(), 2);
        let (c, b, a) = (self.coeff(0), self.coeff(1), self.coeff(2));
        let disc = b.clone() * b.clone() - S::from_int(4) * a.clone() * c;
        match disc.signum_int() {
            -1 => Some(vec![]),
            0 => Some(vec![-b / (S::from_int(2) * a)]),
            _ => {
                let sq = disc.sqrt_if_representable()?;
                let two_a = S::from_int(2) * a;
                let mut r1 = (-b.clone() - sq.clone()) / two_a.clone();
                let mut r2 = (-b + sq) / two_a;
                if r1.cmp_total(&r2) == std::cmp::Ordering::Greater {
                    std::mem::swap(&mut r1, &mut r2);
                }
                Some(vec![r1, r2])
            }
        }
    }

    fn isolate_rec(&self, chain: &[Poly<S>], lo: &S, hi: &S, out: &mut Vec<S>, depth: usize) {
        let n = Self::count_roots_half_open(chain, lo, hi);
        if n == 0 {
            return;
        }
        let width_f = (hi.clone() - lo.clone()).to_f64();
        if n == 1 || depth > 120 || width_f <= 1e-14 {
            if n >= 1 {
                out.push(self.refine_root(chain, lo, hi));
            }
            return;
        }
        let mid = (lo.clone() + hi.clone()).half();
        if self.eval(&mid).is_zero() {
            out.push(mid.clone());
            // nudge the split point off the root before recursing
            let eps = (hi.clone() - lo.clone()) * S::from_ratio(1, 1 << 24);
            self.isolate_rec(chain, lo, &(mid.clone() - eps.clone()), out, depth + 1);
            self.isolate_rec(chain, &(mid + eps), hi, out, depth + 1);
        } else {
            self.isolate_rec(chain, lo, &mid, out, depth + 1);
            self.isolate_rec(chain, &mid, hi, out, depth + 1);
        }
    }

    /// Bisect an interval known to hold exactly one root down to width 1e-14,
    /// then apply a single guarded Newton polish.
    fn refine_root(&self, chain: &[Poly<S>], lo: &S, hi: &S) -> S {
        let mut a = lo.clone();
        let mut b = hi.clone();
        let sign_based = self.eval(&a).signum_int() * self.eval(&b).signum_int() < 0;
        for _ in 0..200 {
            if (b.clone() - a.clone()).to_f64() <= 1e-14 {
                break;
            }
            let mid = (a.clone() + b.clone()).half();
            let sm = self.eval(&mid).signum_int();
            if sm == 0 {
                return mid;
            }
            if sign_based {
                if self.eval(&a).signum_int() * sm < 0 {
                    b = mid;
                } else {
                    a = mid;
                }
            } else if Self::count_roots_half_open(chain, &a, &mid) >= 1 {
                b = mid;
            } else {
                a = mid;
            }
        }
        let mid = (a.clone() + b.clone()).half();
        let deriv = self.derivative().eval(&mid);
        if !deriv.is_zero() {
            let candidate = mid.clone() - self.eval(&mid) / deriv;
            if candidate >= a && candidate <= b {
                return candidate;
            }
        }
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    #[test]
    fn canonical_form_strips_trailing_zeros() {
        let p = Poly::new(vec![r(1, 1), r(0, 1), r(0, 1)]);
        assert_eq!(p.degree(), 0);
        assert!(Poly::<Rat>::new(vec![r(0, 1)]).is_zero());
        assert_eq!(Poly::<Rat>::zero().degree(), 0);
    }

    #[test]
    fn eval_and_integrate_exact() {
        // x^2 on [0,1] integrates to 1/3
        let p = Poly::new(vec![r(0, 1), r(0, 1), r(1, 1)]);
        assert_eq!(p.eval(&r(1, 2)), r(1, 4));
        assert_eq!(p.integrate(&r(0, 1), &r(1, 1)), r(1, 3));
        // x^4 integrates to 1/5
        let q = Poly::new(vec![r(0, 1), r(0, 1), r(0, 1), r(0, 1), r(1, 1)]);
        assert_eq!(q.integrate(&r(0, 1), &r(1, 1)), r(1, 5));
    }

    #[test]
    fn product_degree_adds() {
        let p = Poly::new(vec![r(1, 1), r(1, 1)]);
        let q = Poly::new(vec![r(-1, 1), r(2, 1), r(3, 1)]);
        assert_eq!(p.mul(&q).degree(), 3);
    }

    #[test]
    fn compose_affine_matches_pointwise() {
        let p = Poly::new(vec![r(1, 1), r(-2, 1), r(1, 1)]); // (x-1)^2
        let q = p.compose_affine(&r(1, 2), &r(2, 1)); // p(1/2 + 2x)
        for k in 0..6 {
            let x = r(k, 5);
            let direct = p.eval(&(r(1, 2) + r(2, 1) * x.clone()));
            assert_eq!(q.eval(&x), direct);
        }
    }

    #[test]
    fn sturm_counts_distinct_roots() {
        // (x-1/4)(x-1/2)(x-3/4)
        let p = Poly::new(vec![r(-3, 32), r(11, 16), r(-3, 2), r(1, 1)]);
        let chain = p.sturm_chain();
        assert_eq!(Poly::count_roots_half_open(&chain, &r(0, 1), &r(1, 1)), 3);
        assert_eq!(Poly::count_roots_half_open(&chain, &r(0, 1), &r(3, 8)), 1);
    }

    #[test]
    fn sturm_counts_multiple_roots_once() {
        // (x-1/2)^2
        let p = Poly::new(vec![r(1, 4), r(-1, 1), r(1, 1)]);
        let chain = p.sturm_chain();
        assert_eq!(Poly::count_roots_half_open(&chain, &r(0, 1), &r(1, 1)), 1);
    }

    #[test]
    fn roots_in_open_exact_for_low_degree() {
        let p = Poly::new(vec![r(-1, 4), r(0, 1), r(1, 1)]); // x^2 - 1/4
        let roots = p.roots_in_open(&r(0, 1), &r(1, 1));
        assert_eq!(roots, vec![r(1, 2)]);

        let l = Poly::affine(r(-1, 3), r(1, 1)); // x - 1/3
        assert_eq!(l.roots_in_open(&r(0, 1), &r(1, 1)), vec![r(1, 3)]);
    }

    #[test]
    fn roots_float_cubic() {
        // roots at 0.2, 0.5, 0.9
        let p = Poly::new(vec![-0.09, 0.73, -1.6, 1.0]);
        let roots = p.roots_in_open(&0.0, &1.0);
        assert_eq!(roots.len(), 3);
        let expect = [0.2, 0.5, 0.9];
        for (got, want) in roots.iter().zip(expect) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn irrational_quadratic_root_isolated() {
        // x^2 - 1/2 has root 1/sqrt(2) ~ 0.7071
        let p = Poly::new(vec![r(-1, 2), r(0, 1), r(1, 1)]);
        let roots = p.roots_in_open(&r(0, 1), &r(1, 1));
        assert_eq!(roots.len(), 1);
        assert!((roots[0].to_f64() - 0.5f64.sqrt()).abs() < 1e-12);
    }
}
