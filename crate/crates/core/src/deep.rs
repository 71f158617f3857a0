//! Deep fully-connected ReLU networks: flat parameter layout, forward
//! evaluation, the generalized gradient via left-derivative backpropagation
//! and via the explicit chain-sum formula, per-layer smoothed evaluation,
//! exact piecewise-linear propagation for scalar inputs with exact risk and
//! gradient over the induced cell decomposition, and a width-scan experiment.
//!
//! Parameter layout: for layer `k` (1-based) with widths `l_{k-1} -> l_k`,
//! `w^k_{i,j} = theta[(i-1) l_{k-1} + j + sum_{h<k} l_h (l_{h-1}+1)]` and
//! `b^k_i = theta[l_k l_{k-1} + i + sum_{h<k} ...]`, all 1-based. The smoothed
//! network applies `R_{r^{1/k}}` to the output of layer `k`.

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::pwfun::{PiecewiseLinear, PiecewisePoly};
use crate::quad::adaptive_gk_vec;
use crate::scalar::Scalar;
use crate::shallow::{smooth_relu, smooth_relu_deriv, Problem};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeepArch {
    /// Layer widths `l_0, ..., l_L`; the depth is `layers.len() - 1`.
    pub layers: Vec<usize>,
}

impl DeepArch {
    pub fn new(layers: Vec<usize>) -> Result<Self> {
        if layers.len() < 2 || layers.contains(&0) {
            return Err(Error::InvalidInput(
                "architecture needs depth >= 1 and positive widths".into(),
            ));
        }
        Ok(DeepArch { layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layers.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        (1..self.layers.len())
            .map(|k| self.layers[k] * (self.layers[k - 1] + 1))
            .sum()
    }

    fn layer_offset(&self, k: usize) -> usize {
        (1..k)
            .map(|h| self.layers[h] * (self.layers[h - 1] + 1))
            .sum()
    }

    /// Flat 0-based index of `w^k_{i,j}` (all arguments 1-based).
    pub fn weight_index(&self, k: usize, i: usize, j: usize) -> usize {
        self.layer_offset(k) + (i - 1) * self.layers[k - 1] + (j - 1)
    }

    /// Flat 0-based index of `b^k_i` (arguments 1-based).
    pub fn bias_index(&self, k: usize, i: usize) -> usize {
        self.layer_offset(k) + self.layers[k] * self.layers[k - 1] + (i - 1)
    }
}

/// Extracts `(W_k, b_k)` for layer `k` (1-based) as a row-major matrix.
pub fn deep_unpack<S: Scalar>(
    theta: &[S],
    arch: &DeepArch,
    k: usize,
) -> Result<(Vec<Vec<S>>, Vec<S>)> {
    if k == 0 || k > arch.depth() {
        return Err(Error::InvalidInput(format!("layer {k} out of range")));
    }
    if theta.len() != arch.param_count() {
        return Err(Error::InvalidInput(format!(
            "parameter vector length {} != {}",
            theta.len(),
            arch.param_count()
        )));
    }
    let rows = arch.layers[k];
    let cols = arch.layers[k - 1];
    let mut w = vec![vec![S::zero(); cols]; rows];
    let mut b = vec![S::zero(); rows];
    for i in 1..=rows {
        for j in 1..=cols {
            w[i - 1][j - 1] = theta[arch.weight_index(k, i, j)].clone();
        }
        b[i - 1] = theta[arch.bias_index(k, i)].clone();
    }
    Ok((w, b))
}

/// Writes `(W_k, b_k)` back into the flat layout; inverse of [`deep_unpack`].
pub fn deep_pack<S: Scalar>(
    theta: &mut [S],
    arch: &DeepArch,
    k: usize,
    w: &[Vec<S>],
    b: &[S],
) -> Result<()> {
    if k == 0 || k > arch.depth() {
        return Err(Error::InvalidInput(format!("layer {k} out of range")));
    }
    for i in 1..=arch.layers[k] {
        for j in 1..=arch.layers[k - 1] {
            theta[arch.weight_index(k, i, j)] = w[i - 1][j - 1].clone();
        }
        theta[arch.bias_index(k, i)] = b[i - 1].clone();
    }
    Ok(())
}

/// Forward pass `N^{L,theta}(x)`, plus all pre-activations when requested.
fn forward_full<S: Scalar>(theta: &[S], arch: &DeepArch, x: &[S]) -> Vec<Vec<S>> {
    let depth = arch.depth();
    let mut pres: Vec<Vec<S>> = Vec::with_capacity(depth);
    let mut act: Vec<S> = x.to_vec();
    for k in 1..=depth {
        let rows = arch.layers[k];
        let cols = arch.layers[k - 1];
        let mut pre = Vec::with_capacity(rows);
        for i in 1..=rows {
            let mut z = theta[arch.bias_index(k, i)].clone();
            for j in 1..=cols {
                z += theta[arch.weight_index(k, i, j)].clone() * act[j - 1].clone();
            }
            pre.push(z);
        }
        if k < depth {
            act = pre
                .iter()
                .map(|z| if *z > S::zero() { z.clone() } else { S::zero() })
                .collect();
        }
        pres.push(pre);
    }
    pres
}

/// Realization `N^{L,theta}(x)` for `x` of the input dimension.
pub fn forward<S: Scalar>(theta: &[S], arch: &DeepArch, x: &[S]) -> Result<Vec<S>> {
    if x.len() != arch.input_dim() {
        return Err(Error::InvalidInput(format!(
            "input dimension {} != {}",
            x.len(),
            arch.input_dim()
        )));
    }
    Ok(forward_full(theta, arch, x).pop().unwrap())
}

/// Smoothed forward pass: the output of layer `k` passes through
/// `R_{r^{1/k}}`. Requires `r >= 1`.
pub fn forward_smoothed(theta: &[f64], arch: &DeepArch, x: &[f64], r: f64) -> Result<Vec<f64>> {
    if r < 1.0 {
        return Err(Error::Precondition(
            "smoothing parameter must be >= 1".into(),
        ));
    }
    if x.len() != arch.input_dim() {
        return Err(Error::InvalidInput("input dimension mismatch".into()));
    }
    let depth = arch.depth();
    let mut act: Vec<f64> = x.to_vec();
    for k in 1..=depth {
        let rows = arch.layers[k];
        let cols = arch.layers[k - 1];
        let mut pre = Vec::with_capacity(rows);
        for i in 1..=rows {
            let mut z = theta[arch.bias_index(k, i)];
            for j in 1..=cols {
                z += theta[arch.weight_index(k, i, j)] * act[j - 1];
            }
            pre.push(z);
        }
        if k < depth {
            let rk = r.powf(1.0 / k as f64);
            act = pre.iter().map(|&z| smooth_relu(rk, z)).collect();
        } else {
            act = pre;
        }
    }
    Ok(act)
}

/// Per-sample generalized gradient of `||N(x) - y||^2` with the ReLU
/// derivative taken as the left derivative `1_(0,inf)` (strict at zero).
pub fn grad_backprop_left(
    theta: &[f64],
    arch: &DeepArch,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    if x.len() != arch.input_dim() || y.len() != arch.output_dim() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let depth = arch.depth();
    let pres = forward_full(theta, arch, x);
    // post-activations per layer 0..depth-1 (layer 0 = input)
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(depth);
    acts.push(x.to_vec());
    for k in 1..depth {
        acts.push(pres[k - 1].iter().map(|z| z.max(0.0)).collect());
    }
    let mut grad = vec![0.0; arch.param_count()];
    // delta at the output layer
    let mut delta: Vec<f64> = pres[depth - 1]
        .iter()
        .zip(y)
        .map(|(n, t)| 2.0 * (n - t))
        .collect();
    for k in (1..=depth).rev() {
        let rows = arch.layers[k];
        let cols = arch.layers[k - 1];
        for i in 1..=rows {
            grad[arch.bias_index(k, i)] += delta[i - 1];
            for j in 1..=cols {
                grad[arch.weight_index(k, i, j)] += delta[i - 1] * acts[k - 1][j - 1];
            }
        }
        if k > 1 {
            let mut next = vec![0.0; cols];
            for j in 1..=cols {
                let mut acc = 0.0;
                for i in 1..=rows {
                    acc += delta[i - 1] * theta[arch.weight_index(k, i, j)];
                }
                // left derivative: strict inequality at zero
                next[j - 1] = if pres[k - 2][j - 1] > 0.0 { acc } else { 0.0 };
            }
            delta = next;
        }
    }
    Ok(grad)
}

/// Smoothed per-sample gradient: backprop through `R_{r^{1/k}}'`.
pub fn grad_backprop_smoothed(
    theta: &[f64],
    arch: &DeepArch,
    x: &[f64],
    y: &[f64],
    r: f64,
) -> Result<Vec<f64>> {
    if r < 1.0 {
        return Err(Error::Precondition(
            "smoothing parameter must be >= 1".into(),
        ));
    }
    let depth = arch.depth();
    let mut pres: Vec<Vec<f64>> = Vec::with_capacity(depth);
    let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
    for k in 1..=depth {
        let rows = arch.layers[k];
        let cols = arch.layers[k - 1];
        let mut pre = Vec::with_capacity(rows);
        for i in 1..=rows {
            let mut z = theta[arch.bias_index(k, i)];
            for j in 1..=cols {
                z += theta[arch.weight_index(k, i, j)] * acts[k - 1][j - 1];
            }
            pre.push(z);
        }
        if k < depth {
            let rk = r.powf(1.0 / k as f64);
            acts.push(pre.iter().map(|&z| smooth_relu(rk, z)).collect());
        }
        pres.push(pre);
    }
    let mut grad = vec![0.0; arch.param_count()];
    let mut delta: Vec<f64> = pres[depth - 1]
        .iter()
        .zip(y)
        .map(|(n, t)| 2.0 * (n - t))
        .collect();
    for k in (1..=depth).rev() {
        let rows = arch.layers[k];
        let cols = arch.layers[k - 1];
        for i in 1..=rows {
            grad[arch.bias_index(k, i)] += delta[i - 1];
            for j in 1..=cols {
                grad[arch.weight_index(k, i, j)] += delta[i - 1] * acts[k - 1][j - 1];
            }
        }
        if k > 1 {
            let rk = r.powf(1.0 / (k - 1) as f64);
            let mut next = vec![0.0; cols];
            for j in 1..=cols {
                let mut acc = 0.0;
                for i in 1..=rows {
                    acc += delta[i - 1] * theta[arch.weight_index(k, i, j)];
                }
                next[j - 1] = acc * smooth_relu_deriv(rk, pres[k - 2][j - 1]);
            }
            delta = next;
        }
    }
    Ok(grad)
}

/// Explicit chain-sum form of the generalized gradient, evaluated on the
/// given quadrature nodes: for each weight `(k, i, j)` the sum runs over all
/// neuron chains `v_k = i, v_{k+1}, ..., v_L` with the product of chain
/// weights and activity indicators. Algebraically identical to averaging
/// [`grad_backprop_left`] over the same nodes.
pub fn grad_formula(
    theta: &[f64],
    arch: &DeepArch,
    nodes: &[Vec<f64>],
    weights: &[f64],
    target: impl Fn(&[f64]) -> Vec<f64>,
    density: impl Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    if nodes.len() != weights.len() {
        return Err(Error::InvalidInput(
            "quadrature nodes/weights mismatch".into(),
        ));
    }
    let depth = arch.depth();
    let mut grad = vec![0.0; arch.param_count()];
    for (x, &wq) in nodes.iter().zip(weights) {
        let pres = forward_full(theta, arch, x);
        let out = &pres[depth - 1];
        let fx = target(x);
        let dens = density(x);
        // chains[k][i] = sum over v_{k+1}..v_L of 2 (N_{v_L} - f_{v_L})
        //   prod_{n=k+1}^{L} w^n_{v_n, v_{n-1}} 1[z^{n-1}_{v_{n-1}} > 0]
        // with v_k = i; computed by explicit enumeration from the back
        let mut chains: Vec<Vec<f64>> = vec![vec![0.0; 0]; depth + 1];
        chains[depth] = out.iter().zip(&fx).map(|(n, f)| 2.0 * (n - f)).collect();
        for k in (1..depth).rev() {
            let rows = arch.layers[k];
            let mut acc = vec![0.0; rows];
            for i in 1..=rows {
                let active = pres[k - 1][i - 1] > 0.0;
                if !active {
                    continue;
                }
                let mut sum = 0.0;
                for v in 1..=arch.layers[k + 1] {
                    sum += chains[k + 1][v - 1] * theta[arch.weight_index(k + 1, v, i)];
                }
                acc[i - 1] = sum;
            }
            chains[k] = acc;
        }
        for k in 1..=depth {
            for i in 1..=arch.layers[k] {
                let d = chains[k][i - 1];
                grad[arch.bias_index(k, i)] += wq * dens * d;
                for j in 1..=arch.layers[k - 1] {
                    let factor = if k == 1 {
                        x[j - 1]
                    } else {
                        pres[k - 2][j - 1].max(0.0)
                    };
                    grad[arch.weight_index(k, i, j)] += wq * dens * d * factor;
                }
            }
        }
    }
    Ok(grad)
}

/// Quadrature average of the per-sample left-derivative backprop gradient
/// over the same nodes; the comparison partner of [`grad_formula`].
pub fn grad_backprop_average(
    theta: &[f64],
    arch: &DeepArch,
    nodes: &[Vec<f64>],
    weights: &[f64],
    target: impl Fn(&[f64]) -> Vec<f64>,
    density: impl Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; arch.param_count()];
    for (x, &wq) in nodes.iter().zip(weights) {
        let y = target(x);
        let g = grad_backprop_left(theta, arch, x, &y)?;
        let dens = density(x);
        for (acc, gi) in grad.iter_mut().zip(g) {
            *acc += wq * dens * gi;
        }
    }
    Ok(grad)
}

/// Cell decomposition of a scalar-input network: intervals on which every
/// neuron's activation sign is constant, making the network affine per cell.
#[derive(Clone, Debug)]
pub struct CellDecomposition<S> {
    /// Cell boundaries, including the domain endpoints.
    pub cuts: Vec<S>,
    /// `patterns[cell][k-1][i-1]`: pre-activation of hidden layer `k`,
    /// neuron `i` is strictly positive on the open cell.
    pub patterns: Vec<Vec<Vec<bool>>>,
    /// `hidden_affine[cell][k-1][i-1]`: (slope, intercept) of the
    /// post-activation of hidden layer `k`, neuron `i` on the cell.
    pub hidden_affine: Vec<Vec<Vec<(S, S)>>>,
    /// `output_affine[cell][i-1]`: (slope, intercept) of output `i`.
    pub output_affine: Vec<Vec<(S, S)>>,
}

impl<S: Scalar> CellDecomposition<S> {
    pub fn cell_count(&self) -> usize {
        self.cuts.len() - 1
    }

    fn cell_of(&self, x: &S) -> usize {
        for c in 0..self.cell_count() - 1 {
            if *x < self.cuts[c + 1] {
                return c;
            }
        }
        self.cell_count() - 1
    }
}

/// Exact layer-by-layer piecewise-linear propagation for `l_0 = 1`: affine
/// combinations of per-neuron piecewise-linear functions followed by exact
/// ReLU clipping, with kinks deduplicated on the shared grid. Returns one
/// [`PiecewiseLinear`] per output plus the cell decomposition.
pub fn propagate_pl<S: Scalar>(
    theta: &[S],
    arch: &DeepArch,
    a: &S,
    b: &S,
) -> Result<(Vec<PiecewiseLinear<S>>, CellDecomposition<S>)> {
    if arch.input_dim() != 1 {
        return Err(Error::Precondition(
            "piecewise-linear propagation needs scalar input".into(),
        ));
    }
    if theta.len() != arch.param_count() {
        return Err(Error::InvalidInput(
            "parameter vector length mismatch".into(),
        ));
    }
    let depth = arch.depth();
    let merge_tol = 1e-12 * (1.0 + (b.clone() - a.clone()).to_f64().abs());

    // shared grid and per-neuron affine forms (slope, intercept) per cell
    let mut cuts: Vec<S> = vec![a.clone(), b.clone()];
    // post-activations of the previous layer; layer 0 is the identity
    let mut prev: Vec<Vec<(S, S)>> = vec![vec![(S::one(), S::zero())]];
    let mut patterns: Vec<Vec<Vec<bool>>> = vec![vec![]];
    let mut hidden_affine: Vec<Vec<Vec<(S, S)>>> = vec![vec![]];

    for k in 1..=depth {
        let rows = arch.layers[k];
        let cols = arch.layers[k - 1];
        // affine combine on each existing cell
        let mut pre: Vec<Vec<(S, S)>> = Vec::with_capacity(cuts.len() - 1);
        for cell in 0..cuts.len() - 1 {
            let mut forms = Vec::with_capacity(rows);
            for i in 1..=rows {
                let mut slope = S::zero();
                let mut inter = theta[arch.bias_index(k, i)].clone();
                for j in 1..=cols {
                    let w = theta[arch.weight_index(k, i, j)].clone();
                    let (ps, pi) = prev[cell][j - 1].clone();
                    slope += w.clone() * ps;
                    inter += w * pi;
                }
                forms.push((slope, inter));
            }
            pre.push(forms);
        }
        if k == depth {
            // final affine layer: no clipping
            let output_affine = pre.clone();
            let pl_outputs = (0..rows)
                .map(|i| {
                    PiecewiseLinear::canonicalize(
                        cuts.clone(),
                        pre.iter().map(|c| c[i].0.clone()).collect(),
                        pre.iter().map(|c| c[i].1.clone()).collect(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let cells = cuts.len() - 1;
            return Ok((
                pl_outputs,
                CellDecomposition {
                    cuts,
                    patterns: patterns_resize(patterns, cells),
                    hidden_affine: patterns_resize(hidden_affine, cells),
                    output_affine,
                },
            ));
        }
        // collect new kinks: zeros of pre-activations inside each cell
        let mut new_cuts: Vec<S> = Vec::new();
        for cell in 0..cuts.len() - 1 {
            let (lo, hi) = (cuts[cell].clone(), cuts[cell + 1].clone());
            for (slope, inter) in &pre[cell] {
                if slope.is_zero() {
                    continue;
                }
                let x0 = -inter.clone() / slope.clone();
                if x0 > lo && x0 < hi {
                    new_cuts.push(x0);
                }
            }
        }
        let mut grid = cuts.clone();
        grid.extend(new_cuts);
        grid.sort_by(|x, y| x.cmp_total(y));
        grid.dedup_by(|x, y| x.eq_within(y, merge_tol));

        // re-expand pre-activation forms onto the refined grid, clip, record
        let mut next_prev: Vec<Vec<(S, S)>> = Vec::with_capacity(grid.len() - 1);
        let mut next_patterns: Vec<Vec<Vec<bool>>> = Vec::with_capacity(grid.len() - 1);
        let mut next_hidden: Vec<Vec<Vec<(S, S)>>> = Vec::with_capacity(grid.len() - 1);
        for w in grid.windows(2) {
            let mid = (w[0].clone() + w[1].clone()).half();
            let old_cell = locate_cell(&cuts, &mid);
            let mut posts = Vec::with_capacity(rows);
            let mut bits = Vec::with_capacity(rows);
            for (slope, inter) in &pre[old_cell] {
                let val = slope.clone() * mid.clone() + inter.clone();
                let active = val > S::zero();
                bits.push(active);
                posts.push(if active {
                    (slope.clone(), inter.clone())
                } else {
                    (S::zero(), S::zero())
                });
            }
            let mut pat = patterns[old_cell].clone();
            pat.push(bits);
            next_patterns.push(pat);
            let mut hid = hidden_affine[old_cell].clone();
            hid.push(posts.clone());
            next_hidden.push(hid);
            next_prev.push(posts);
        }
        cuts = grid;
        prev = next_prev;
        patterns = next_patterns;
        hidden_affine = next_hidden;
    }
    unreachable!("loop returns at the output layer");
}

fn locate_cell<S: Scalar>(cuts: &[S], x: &S) -> usize {
    for c in 0..cuts.len() - 2 {
        if *x < cuts[c + 1] {
            return c;
        }
    }
    cuts.len() - 2
}

fn patterns_resize<T: Clone>(v: Vec<T>, cells: usize) -> Vec<T> {
    debug_assert_eq!(v.len(), cells);
    v
}

/// Supervised problem for scalar-input deep networks: one piecewise
/// polynomial target per output component plus a shared density.
#[derive(Clone)]
pub struct DeepProblem<S> {
    pub targets: Vec<PiecewisePoly<S>>,
    pub density: PiecewisePoly<S>,
}

impl<S: Scalar> DeepProblem<S> {
    pub fn new(targets: Vec<PiecewisePoly<S>>, density: PiecewisePoly<S>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidInput(
                "need at least one target component".into(),
            ));
        }
        let dom = density.domain();
        for t in &targets {
            let (ta, tb) = t.domain();
            if !ta.eq_within(&dom.0, 1e-12) || !tb.eq_within(&dom.1, 1e-12) {
                return Err(Error::Domain("target/density domain mismatch".into()));
            }
        }
        Ok(DeepProblem { targets, density })
    }

    pub fn from_scalar_problem(p: &Problem<S>) -> Self {
        DeepProblem {
            targets: vec![p.target.clone()],
            density: p.density.clone(),
        }
    }

    pub fn domain(&self) -> (S, S) {
        self.density.domain()
    }
}

/// Exact risk for a scalar-input network: the squared error against each
/// target component integrated in closed form over the cell decomposition.
pub fn risk_deep_exact_1d<S: Scalar>(
    theta: &[S],
    arch: &DeepArch,
    problem: &DeepProblem<S>,
) -> Result<S> {
    if arch.output_dim() != problem.targets.len() {
        return Err(Error::InvalidInput(
            "output dimension != target components".into(),
        ));
    }
    let (a, b) = problem.domain();
    let (outputs, _) = propagate_pl(theta, arch, &a, &b)?;
    let mut total = S::zero();
    for (pl, target) in outputs.iter().zip(&problem.targets) {
        let err = pl.to_piecewise_poly().sub(target)?;
        total += err.mul(&err)?.mul(&problem.density)?.integrate();
    }
    Ok(total)
}

/// Exact generalized gradient for a scalar-input network. On every cell the
/// activation pattern is constant, so each backpropagated component is a
/// polynomial in x and integrates in closed form.
pub fn grad_deep_exact_1d<S: Scalar>(
    theta: &[S],
    arch: &DeepArch,
    problem: &DeepProblem<S>,
) -> Result<Vec<S>> {
    if arch.output_dim() != problem.targets.len() {
        return Err(Error::InvalidInput(
            "output dimension != target components".into(),
        ));
    }
    let (a, b) = problem.domain();
    let depth = arch.depth();
    let (_, cells) = propagate_pl(theta, arch, &a, &b)?;
    // refine the cell grid with the data breakpoints
    let mut grid = cells.cuts.clone();
    grid.extend(problem.density.breakpoints().iter().cloned());
    for t in &problem.targets {
        grid.extend(t.breakpoints().iter().cloned());
    }
    grid.sort_by(|x, y| x.cmp_total(y));
    grid.dedup_by(|x, y| x.eq_within(y, 1e-14));
    grid.retain(|x| *x >= a && *x <= b);

    let mut grad = vec![S::zero(); arch.param_count()];
    for w in grid.windows(2) {
        let (lo, hi) = (w[0].clone(), w[1].clone());
        let mid = (lo.clone() + hi.clone()).half();
        let cell = cells.cell_of(&mid);
        // delta polynomials at the output layer: 2 (N_i(x) - f_i(x))
        let mut delta: Vec<Poly<S>> = Vec::with_capacity(arch.output_dim());
        for (i, target) in problem.targets.iter().enumerate() {
            let (slope, inter) = cells.output_affine[cell][i].clone();
            let net = Poly::affine(inter, slope);
            let f_piece = piece_at(target, &mid);
            delta.push(net.sub(&f_piece).scale(&S::from_int(2)));
        }
        let dens_piece = piece_at(&problem.density, &mid);
        for k in (1..=depth).rev() {
            let rows = arch.layers[k];
            let cols = arch.layers[k - 1];
            for i in 1..=rows {
                // bias gradient: int delta * dens
                let di = &delta[i - 1];
                grad[arch.bias_index(k, i)] += di.mul(&dens_piece).integrate(&lo, &hi);
                for j in 1..=cols {
                    let aff = if k == 1 {
                        Poly::affine(S::zero(), S::one())
                    } else {
                        let (s, t) = cells.hidden_affine[cell][k - 2][j - 1].clone();
                        Poly::affine(t, s)
                    };
                    grad[arch.weight_index(k, i, j)] +=
                        di.mul(&aff).mul(&dens_piece).integrate(&lo, &hi);
                }
            }
            if k > 1 {
                let mut next: Vec<Poly<S>> = Vec::with_capacity(cols);
                for j in 1..=cols {
                    let mut acc = Poly::zero();
                    if cells.patterns[cell][k - 2][j - 1] {
                        for i in 1..=rows {
                            acc = acc.add(&delta[i - 1].scale(&theta[arch.weight_index(k, i, j)]));
                        }
                    }
                    next.push(acc);
                }
                delta = next;
            }
        }
    }
    Ok(grad)
}

fn piece_at<S: Scalar>(pp: &PiecewisePoly<S>, x: &S) -> Poly<S> {
    let xs = pp.breakpoints();
    for i in 0..pp.pieces().len() - 1 {
        if *x < xs[i + 1] {
            return pp.pieces()[i].clone();
        }
    }
    pp.pieces().last().unwrap().clone()
}

/// Smoothed risk for a scalar-input network by adaptive quadrature, with the
/// exact network's cell boundaries and the first-layer blend seams as
/// subdivision hints.
pub fn risk_deep_smoothed_1d(
    theta: &[f64],
    arch: &DeepArch,
    problem: &DeepProblem<f64>,
    r: f64,
) -> Result<f64> {
    let seams = deep_seams(theta, arch, problem, r)?;
    let mut total = 0.0;
    for w in seams.windows(2) {
        let mut f = |x: f64, out: &mut [f64]| {
            let n = forward_smoothed(theta, arch, &[x], r).unwrap();
            let mut e = 0.0;
            for (ni, t) in n.iter().zip(&problem.targets) {
                let d = ni - t.eval(&x).unwrap();
                e += d * d;
            }
            out[0] = e * problem.density.eval(&x).unwrap();
        };
        total += adaptive_gk_vec(&mut f, w[0], w[1], 1e-12, 1)[0];
    }
    Ok(total)
}

/// Gradient of the smoothed risk for a scalar-input network.
pub fn grad_deep_smoothed_1d(
    theta: &[f64],
    arch: &DeepArch,
    problem: &DeepProblem<f64>,
    r: f64,
) -> Result<Vec<f64>> {
    let seams = deep_seams(theta, arch, problem, r)?;
    let d = arch.param_count();
    let mut grad = vec![0.0; d];
    for w in seams.windows(2) {
        let mut f = |x: f64, out: &mut [f64]| {
            let y: Vec<f64> = problem
                .targets
                .iter()
                .map(|t| t.eval(&x).unwrap())
                .collect();
            let g = grad_backprop_smoothed(theta, arch, &[x], &y, r).unwrap();
            let dens = problem.density.eval(&x).unwrap();
            for (o, gi) in out.iter_mut().zip(g) {
                *o = gi * dens;
            }
        };
        let part = adaptive_gk_vec(&mut f, w[0], w[1], 1e-10, d);
        for (acc, p) in grad.iter_mut().zip(part) {
            *acc += p;
        }
    }
    Ok(grad)
}

fn deep_seams(
    theta: &[f64],
    arch: &DeepArch,
    problem: &DeepProblem<f64>,
    r: f64,
) -> Result<Vec<f64>> {
    if r < 1.0 {
        return Err(Error::Precondition(
            "smoothing parameter must be >= 1".into(),
        ));
    }
    let (a, b) = problem.domain();
    let (_, cells) = propagate_pl(theta, arch, &a, &b)?;
    let mut seams = cells.cuts.clone();
    for t in &problem.targets {
        seams.extend(t.breakpoints().iter().cloned());
    }
    seams.extend(problem.density.breakpoints().iter().cloned());
    // first-layer blend zone boundaries are exactly computable
    for i in 1..=arch.layers[1] {
        let wz = theta[arch.weight_index(1, i, 1)];
        let bz = theta[arch.bias_index(1, i)];
        if wz != 0.0 {
            for level in [crate::shallow::SMOOTH_A / r, crate::shallow::SMOOTH_B / r] {
                let x = (level - bz) / wz;
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
    Ok(seams)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WidthScanRow {
    pub min_width: usize,
    pub best_risk: f64,
    pub seeds_used: usize,
}

/// Best risk found per architecture over budgeted multi-start GD runs.
/// Shallow-equivalent architectures `(1, w, 1)` run on the exact shallow
/// gradient; anything else uses the exact scalar-input deep path. When the
/// target is itself piecewise linear and representable at the given width,
/// the exact synthesis witness joins the candidate pool as a warm start.
pub fn width_scan(
    archs: &[DeepArch],
    problem: &Problem<f64>,
    config: &crate::dynamics::GDConfig,
) -> Result<Vec<WidthScanRow>> {
    use crate::dynamics::multistart;
    use crate::repr::{synthesize, Synthesis};
    use crate::rng::SplitMix64;
    use crate::shallow::{grad_exact, map_from_unit, risk_exact, ShallowParams};

    if config.inits < 1 {
        return Err(Error::Precondition(
            "width scan needs a positive budget".into(),
        ));
    }
    let (a, b) = problem.domain();
    let deep_problem = DeepProblem::from_scalar_problem(problem);
    let mut rows = Vec::with_capacity(archs.len());
    for (idx, arch) in archs.iter().enumerate() {
        if arch.input_dim() != 1 || arch.output_dim() != 1 {
            return Err(Error::Precondition(
                "width scan needs scalar input and output".into(),
            ));
        }
        let min_width = arch.layers[1..arch.layers.len() - 1]
            .iter()
            .copied()
            .min()
            .unwrap_or(0);
        let per_arch_seed = SplitMix64::stream(config.master_seed, idx as u64).next_u64();
        let cfg = crate::dynamics::GDConfig {
            master_seed: per_arch_seed,
            ..config.clone()
        };
        let shallow_like = arch.layers.len() == 3;
        let outcome = if shallow_like {
            let p = problem.clone();
            multistart(
                arch.param_count(),
                move |t| {
                    let sp = ShallowParams::from_vec(t.to_vec()).expect("dim fixed");
                    grad_exact(&sp, &p)
                },
                {
                    let p = problem.clone();
                    move |t| {
                        let sp = ShallowParams::from_vec(t.to_vec()).expect("dim fixed");
                        risk_exact(&sp, &p)
                    }
                },
                &cfg,
            )
        } else {
            let dp = deep_problem.clone();
            let arch_c = arch.clone();
            multistart(
                arch.param_count(),
                move |t| grad_deep_exact_1d(t, &arch_c, &dp).expect("valid arch"),
                {
                    let dp = deep_problem.clone();
                    let arch_c = arch.clone();
                    move |t| risk_deep_exact_1d(t, &arch_c, &dp).expect("valid arch")
                },
                &cfg,
            )
        };
        let mut best = outcome.final_best_risk;
        // synthesis warm start for piecewise-linear targets
        if shallow_like {
            if let Ok(pl) = PiecewiseLinear::from_piecewise_poly(&problem.target) {
                let span = b - a;
                let unit_pl = if (a, b) == (0.0, 1.0) {
                    Some(pl)
                } else {
                    problem
                        .target
                        .compose_affine(&a, &span)
                        .ok()
                        .and_then(|pp| PiecewiseLinear::from_piecewise_poly(&pp).ok())
                };
                if let Some(unit_pl) = unit_pl {
                    if let Ok(Synthesis::Representable(theta_u)) =
                        synthesize(&unit_pl, arch.layers[1])
                    {
                        let theta = if (a, b) == (0.0, 1.0) {
                            theta_u
                        } else {
                            map_from_unit(&theta_u, &a, &b)
                        };
                        let witness_risk = risk_exact(&theta, problem);
                        best = best.min(witness_risk);
                    }
                }
            }
        }
        rows.push(WidthScanRow {
            min_width,
            best_risk: best,
            seeds_used: config.inits,
        });
    }
    Ok(rows)
}
