//! Graded x-grids on `[0, 1]` with trapezoidal weights and nonuniform
//! finite-difference stencils.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WrinkleError};

/// Grading rule used to place the nodes of an [`XGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// `x_i = i / n`.
    Uniform { n: usize },
    /// `x_i = (i / n)^gamma`; `gamma = 2` is the default grading.
    Power { n: usize, gamma: f64 },
    /// Nodes equidistributed in `s(x) = ln(1 + x / x_c) + beta * x`.
    ///
    /// The spacing is geometric (ratio close to constant) for `x >> x_c`
    /// and is capped near `x = 1` by the linear term.
    LogLinear { n: usize, x_c: f64, beta: f64 },
}

impl GridSpec {
    /// Number of intervals of the grid.
    pub fn intervals(&self) -> usize {
        match *self {
            GridSpec::Uniform { n } | GridSpec::Power { n, .. } | GridSpec::LogLinear { n, .. } => n,
        }
    }

    /// Same grading with the interval count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> GridSpec {
        match *self {
            GridSpec::Uniform { n } => GridSpec::Uniform { n: n * factor },
            GridSpec::Power { n, gamma } => GridSpec::Power { n: n * factor, gamma },
            GridSpec::LogLinear { n, x_c, beta } => GridSpec::LogLinear { n: n * factor, x_c, beta },
        }
    }

    /// Builds the grid.
    pub fn build(&self) -> Result<XGrid> {
        match *self {
            GridSpec::Uniform { n } => XGrid::uniform(n),
            GridSpec::Power { n, gamma } => XGrid::power(n, gamma),
            GridSpec::LogLinear { n, x_c, beta } => XGrid::log_linear(n, x_c, beta),
        }
    }
}

/// Strictly increasing nodes `0 = x_0 < x_1 < ... < x_n = 1` with
/// trapezoidal quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct XGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl XGrid {
    /// Validates and wraps an explicit node list.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(WrinkleError::InvalidGrid(format!(
                "need at least 3 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes[0] != 0.0 || nodes[nodes.len() - 1] != 1.0 {
            return Err(WrinkleError::InvalidGrid(
                "nodes must start at 0 and end at 1".into(),
            ));
        }
        if let Some(i) = nodes.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(WrinkleError::InvalidGrid(format!(
                "nodes not strictly increasing at index {}",
                i + 1
            )));
        }
        let weights = trapezoid_weights(&nodes);
        Ok(XGrid { nodes, weights })
    }

    /// Uniform grid with `n` intervals.
    pub fn uniform(n: usize) -> Result<Self> {
        check_intervals(n)?;
        let mut nodes: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        nodes[n] = 1.0;
        Self::from_nodes(nodes)
    }

    /// Power-graded grid `x_i = (i/n)^gamma`.
    pub fn power(n: usize, gamma: f64) -> Result<Self> {
        check_intervals(n)?;
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(WrinkleError::InvalidParameter(format!(
                "grading exponent must be >= 1, got {gamma}"
            )));
        }
        let mut nodes: Vec<f64> = (0..=n).map(|i| (i as f64 / n as f64).powf(gamma)).collect();
        nodes[n] = 1.0;
        Self::from_nodes(nodes)
    }

    /// Log-linear grid, see [`GridSpec::LogLinear`].
    pub fn log_linear(n: usize, x_c: f64, beta: f64) -> Result<Self> {
        check_intervals(n)?;
        if !(x_c > 0.0 && x_c < 1.0) || !(beta >= 0.0) || !beta.is_finite() {
            return Err(WrinkleError::InvalidParameter(format!(
                "log-linear grid needs 0 < x_c < 1 and beta >= 0, got x_c = {x_c}, beta = {beta}"
            )));
        }
        let s = |x: f64| (x / x_c).ln_1p() + beta * x;
        let ds = |x: f64| 1.0 / (x_c + x) + beta;
        let total = s(1.0);
        let mut nodes = Vec::with_capacity(n + 1);
        nodes.push(0.0);
        for i in 1..n {
            let target = total * i as f64 / n as f64;
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if s(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mut x = 0.5 * (lo + hi);
            for _ in 0..3 {
                x -= (s(x) - target) / ds(x);
            }
            nodes.push(x);
        }
        nodes.push(1.0);
        Self::from_nodes(nodes)
    }

    /// Node coordinates.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Trapezoidal weights; `sum(w_i f_i)` approximates `int_0^1 f`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of nodes (intervals + 1).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Always false; a grid has at least three nodes.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Interval lengths `h_i = x_{i+1} - x_i`.
    pub fn spacings(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// First positive node.
    pub fn first_positive(&self) -> f64 {
        self.nodes[1]
    }

    /// Trapezoidal integral of nodal values over `[0, 1]`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Trapezoidal integral over `[lo, hi]` of the piecewise-linear interpolant.
    pub fn integrate_range(&self, f: &[f64], lo: f64, hi: f64) -> f64 {
        integrate_pl_range(&self.nodes, f, lo, hi)
    }

    /// First derivative by the three-point nonuniform stencil.
    pub fn d1(&self, f: &[f64]) -> Vec<f64> {
        d1_nonuniform(&self.nodes, f)
    }

    /// Second derivative by the three-point nonuniform stencil.
    pub fn d2(&self, f: &[f64]) -> Vec<f64> {
        d2_nonuniform(&self.nodes, f)
    }

    /// Linear interpolation of nodal values at `x` (clamped to `[0, 1]`).
    pub fn interp(&self, f: &[f64], x: f64) -> f64 {
        interp_linear(&self.nodes, f, x)
    }
}

fn check_intervals(n: usize) -> Result<()> {
    if n < 2 {
        return Err(WrinkleError::InvalidGrid(format!(
            "need at least 2 intervals, got {n}"
        )));
    }
    Ok(())
}

/// Trapezoidal weights for arbitrary increasing nodes.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = x[i + 1] - x[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Three-point first derivative on increasing nodes; second-order one-sided
/// stencils at both ends.
pub fn d1_nonuniform(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 3 && f.len() == n);
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = d1_at(x, f, i);
    }
    d[0] = d1_left(x, f);
    d[n - 1] = d1_right(x, f);
    d
}

/// Centered three-point first derivative at interior node `i`.
#[inline]
pub fn d1_at(x: &[f64], f: &[f64], i: usize) -> f64 {
    let h1 = x[i] - x[i - 1];
    let h2 = x[i + 1] - x[i];
    -h2 / (h1 * (h1 + h2)) * f[i - 1] + (h2 - h1) / (h1 * h2) * f[i] + h1 / (h2 * (h1 + h2)) * f[i + 1]
}

/// One-sided second-order first derivative at the left end.
#[inline]
pub fn d1_left(x: &[f64], f: &[f64]) -> f64 {
    let h1 = x[1] - x[0];
    let h2 = x[2] - x[1];
    -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2]
}

/// One-sided second-order first derivative at the right end.
#[inline]
pub fn d1_right(x: &[f64], f: &[f64]) -> f64 {
    let n = x.len();
    let h1 = x[n - 1] - x[n - 2];
    let h2 = x[n - 2] - x[n - 3];
    (2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[n - 1] - (h1 + h2) / (h1 * h2) * f[n - 2]
        + h1 / (h2 * (h1 + h2)) * f[n - 3]
}

/// Three-point second derivative at interior node `i`.
#[inline]
pub fn d2_at(x: &[f64], f: &[f64], i: usize) -> f64 {
    let h1 = x[i] - x[i - 1];
    let h2 = x[i + 1] - x[i];
    2.0 * (f[i - 1] / (h1 * (h1 + h2)) - f[i] / (h1 * h2) + f[i + 1] / (h2 * (h1 + h2)))
}

/// Three-point second derivative; end values reuse the adjacent interior stencil.
pub fn d2_nonuniform(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 3 && f.len() == n);
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = d2_at(x, f, i);
    }
    d[0] = d[1];
    d[n - 1] = d[n - 2];
    d
}

/// Linear interpolation on increasing nodes, clamped at the ends.
pub fn interp_linear(x: &[f64], f: &[f64], t: f64) -> f64 {
    let n = x.len();
    if t <= x[0] {
        return f[0];
    }
    if t >= x[n - 1] {
        return f[n - 1];
    }
    let j = x.partition_point(|&v| v <= t) - 1;
    let s = (t - x[j]) / (x[j + 1] - x[j]);
    f[j] * (1.0 - s) + f[j + 1] * s
}

/// Exact integral of the piecewise-linear interpolant over `[lo, hi]`.
pub fn integrate_pl_range(x: &[f64], f: &[f64], lo: f64, hi: f64) -> f64 {
    let lo = lo.max(x[0]);
    let hi = hi.min(x[x.len() - 1]);
    if hi <= lo {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 0..x.len() - 1 {
        let a = x[j].max(lo);
        let b = x[j + 1].min(hi);
        if b <= a {
            continue;
        }
        let fa = interp_segment(x, f, j, a);
        let fb = interp_segment(x, f, j, b);
        total += 0.5 * (fa + fb) * (b - a);
    }
    total
}

#[inline]
fn interp_segment(x: &[f64], f: &[f64], j: usize, t: f64) -> f64 {
    let s = (t - x[j]) / (x[j + 1] - x[j]);
    f[j] * (1.0 - s) + f[j + 1] * s
}
