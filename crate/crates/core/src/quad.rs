//! Numerical quadrature: adaptive Gauss-Kronrod for piecewise-smooth
//! integrands and tensor Gauss-Legendre rules for low input dimensions.

// the published G7-K15 constants carry their full reference precision
#![allow(clippy::excessive_precision)]

/// 7-point Gauss / 15-point Kronrod node-weight pairs on [-1, 1].
/// Nodes are symmetric; only the nonnegative half is listed.
const GK_NODES: [f64; 8] = [
    0.0,
    0.207784955007898467600689403773245,
    0.405845151377397166906606412076961,
    0.586087235467691130294144838258730,
    0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,
    0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
];
const K_WEIGHTS: [f64; 8] = [
    0.209482141084727828012999174891714,
    0.204432940075298892414161999234649,
    0.190350578064785409913256402421014,
    0.169004726639267902826583426598550,
    0.140653259715525918745189590510238,
    0.104790010322250183839876322541518,
    0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
];
const G_WEIGHTS: [f64; 4] = [
    0.417959183673469387755102040816327,
    0.381830050505118944950369775488975,
    0.279705391489276667901467771423780,
    0.129484966168869693270611432679082,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let f0 = f(c);
    let mut kronrod = K_WEIGHTS[0] * f0;
    let mut gauss = G_WEIGHTS[0] * f0;
    for i in 1..8 {
        let x = GK_NODES[i] * h;
        let s = f(c - x) + f(c + x);
        kronrod += K_WEIGHTS[i] * s;
        if i % 2 == 0 {
            gauss += G_WEIGHTS[i / 2] * s;
        }
    }
    let value = kronrod * h;
    let err = ((kronrod - gauss) * h).abs();
    (value, err)
}

/// Adaptive G7-K15 on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_gk(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let (v, e) = gk15(f, a, b);
        if e <= tol || depth >= 48 || (b - a).abs() < 1e-15 {
            return v;
        }
        let c = 0.5 * (a + b);
        rec(f, a, c, tol * 0.5, depth + 1) + rec(f, c, b, tol * 0.5, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    rec(&mut f, a, b, tol, 0)
}

/// Adaptive G7-K15 for a vector-valued integrand written into `out`.
/// Subdivision is driven by the worst component error.
pub fn adaptive_gk_vec(
    f: &mut impl FnMut(f64, &mut [f64]),
    a: f64,
    b: f64,
    tol: f64,
    dim: usize,
) -> Vec<f64> {
    fn eval_panel(
        f: &mut impl FnMut(f64, &mut [f64]),
        a: f64,
        b: f64,
        dim: usize,
        value: &mut [f64],
    ) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut buf = vec![0.0; dim];
        let mut gauss = vec![0.0; dim];
        value.iter_mut().for_each(|v| *v = 0.0);
        f(c, &mut buf);
        for d in 0..dim {
            value[d] += K_WEIGHTS[0] * buf[d];
            gauss[d] += G_WEIGHTS[0] * buf[d];
        }
        for i in 1..8 {
            let x = GK_NODES[i] * h;
            let mut sum = vec![0.0; dim];
            f(c - x, &mut buf);
            for d in 0..dim {
                sum[d] += buf[d];
            }
            f(c + x, &mut buf);
            for d in 0..dim {
                sum[d] += buf[d];
            }
            for d in 0..dim {
                value[d] += K_WEIGHTS[i] * sum[d];
                if i % 2 == 0 {
                    gauss[d] += G_WEIGHTS[i / 2] * sum[d];
                }
            }
        }
        let mut worst: f64 = 0.0;
        for d in 0..dim {
            value[d] *= h;
            worst = worst.max(((value[d] / h - gauss[d]) * h).abs());
        }
        worst
    }

    fn rec(
        f: &mut impl FnMut(f64, &mut [f64]),
        a: f64,
        b: f64,
        tol: f64,
        dim: usize,
        acc: &mut [f64],
        depth: usize,
    ) {
        let mut value = vec![0.0; dim];
        let err = eval_panel(f, a, b, dim, &mut value);
        if err <= tol || depth >= 48 || (b - a).abs() < 1e-15 {
            for d in 0..dim {
                acc[d] += value[d];
            }
            return;
        }
        let c = 0.5 * (a + b);
        rec(f, a, c, tol * 0.5, dim, acc, depth + 1);
        rec(f, c, b, tol * 0.5, dim, acc, depth + 1);
    }

    let mut acc = vec![0.0; dim];
    if a != b {
        rec(f, a, b, tol, dim, &mut acc, 0);
    }
    acc
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!((1..=128).contains(&n));
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-based initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Scales a GL rule from [-1, 1] to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        xs.iter().map(|x| mid + half * x).collect(),
        ws.iter().map(|w| w * half).collect(),
    )
}

/// Tensor-product Gauss-Legendre over a box, for input dimension <= 3.
/// Approximate by construction; the one-dimensional exact path is the oracle.
pub fn tensor_gauss_legendre(
    dims: usize,
    order: usize,
    a: f64,
    b: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    assert!((1..=3).contains(&dims), "tensor rule supports d <= 3");
    let (xs, ws) = gauss_legendre_on(order, a, b);
    let mut nodes = vec![];
    let mut weights = vec![];
    match dims {
        1 => {
            for (x, w) in xs.iter().zip(&ws) {
                nodes.push(vec![*x]);
                weights.push(*w);
            }
        }
        2 => {
            for (x, wx) in xs.iter().zip(&ws) {
                for (y, wy) in xs.iter().zip(&ws) {
                    nodes.push(vec![*x, *y]);
                    weights.push(wx * wy);
                }
            }
        }
        _ => {
            for (x, wx) in xs.iter().zip(&ws) {
                for (y, wy) in xs.iter().zip(&ws) {
                    for (z, wz) in xs.iter().zip(&ws) {
                        nodes.push(vec![*x, *y, *z]);
                        weights.push(wx * wy * wz);
                    }
                }
            }
        }
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_integrates_polynomials_exactly() {
        let v = adaptive_gk(|x| x * x, 0.0, 1.0, 1e-12);
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        let v = adaptive_gk(|x| x.powi(7) - 2.0 * x + 1.0, -1.0, 2.0, 1e-12);
        let exact = (2.0f64.powi(8) - 1.0) / 8.0 - (4.0 - 1.0) + 3.0;
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn gk_handles_kinked_integrand() {
        let v = adaptive_gk(|x| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        let exact = 0.3f64.powi(2) / 2.0 + 0.7f64.powi(2) / 2.0;
        assert!((v - exact).abs() < 1e-10);
    }

    #[test]
    fn gl_rule_is_exact_for_low_degree() {
        let (xs, ws) = gauss_legendre_on(5, 0.0, 1.0);
        let quad: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(9)).sum();
        assert!((quad - 0.1).abs() < 1e-14);
    }

    #[test]
    fn vector_gk_matches_scalar() {
        let mut f = |x: f64, out: &mut [f64]| {
            out[0] = x * x;
            out[1] = (x - 0.5).abs();
        };
        let v = adaptive_gk_vec(&mut f, 0.0, 1.0, 1e-12, 2);
        assert!((v[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - 0.25).abs() < 1e-10);
    }
}
