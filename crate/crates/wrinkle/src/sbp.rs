//! Diagonal-norm summation-by-parts first derivative (fourth order in the
//! interior, second order at the boundary) on smoothly mapped grids, glued
//! into multi-block axes.
//!
//! The norm `H` doubles as a quadrature rule that is exact for cubics on
//! uniform grids, and `1^T H D f = f_N - f_0` holds exactly, so integrals of
//! derivatives telescope to boundary values.

use crate::error::{Result, WrinkleError};

const INTERIOR: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];

const BOUNDARY: [[f64; 6]; 4] = [
    [-24.0 / 17.0, 59.0 / 34.0, -4.0 / 17.0, -3.0 / 34.0, 0.0, 0.0],
    [-0.5, 0.0, 0.5, 0.0, 0.0, 0.0],
    [4.0 / 43.0, -59.0 / 86.0, 0.0, 59.0 / 86.0, -4.0 / 43.0, 0.0],
    [3.0 / 98.0, 0.0, -59.0 / 98.0, 0.0, 32.0 / 49.0, -4.0 / 49.0],
];

const NORM: [f64; 4] = [17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0];

/// Smallest node count the boundary closures support.
pub const MIN_NODES: usize = 8;

/// Derivative with respect to the index variable (unit spacing).
pub fn d1_index(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    assert!(n >= MIN_NODES, "SBP operator needs at least {MIN_NODES} nodes");
    let mut d = vec![0.0; n];
    for i in 0..4 {
        let mut s = 0.0;
        let mut t = 0.0;
        for (c, coef) in BOUNDARY[i].iter().enumerate() {
            s += coef * f[c];
            t += coef * f[n - 1 - c];
        }
        d[i] = s;
        d[n - 1 - i] = -t;
    }
    for i in 4..n - 4 {
        d[i] = INTERIOR.iter().enumerate().map(|(c, coef)| coef * f[i + c - 2]).sum();
    }
    d
}

/// Norm weights for unit spacing.
pub fn norm_index(n: usize) -> Vec<f64> {
    assert!(n >= MIN_NODES, "SBP operator needs at least {MIN_NODES} nodes");
    let mut h = vec![1.0; n];
    for i in 0..4 {
        h[i] = NORM[i];
        h[n - 1 - i] = NORM[i];
    }
    h
}

/// SBP operator on one block `x(xi)` with `xi` the node index.
#[derive(Clone, Debug, PartialEq)]
pub struct MappedSbp {
    jac: Vec<f64>,
    quad: Vec<f64>,
}

impl MappedSbp {
    /// Builds the operator on increasing nodes; the metric `dx/dxi` is
    /// computed with the same derivative and must stay positive.
    pub fn new(x: &[f64]) -> Result<MappedSbp> {
        if x.len() < MIN_NODES {
            return Err(WrinkleError::InvalidGrid(format!(
                "SBP block needs at least {MIN_NODES} nodes, got {}",
                x.len()
            )));
        }
        let jac = d1_index(x);
        if let Some(i) = jac.iter().position(|&j| !(j > 0.0)) {
            return Err(WrinkleError::InvalidGrid(format!("non-positive grid metric at node {i}")));
        }
        let quad = norm_index(x.len()).iter().zip(&jac).map(|(h, j)| h * j).collect();
        Ok(MappedSbp { jac, quad })
    }

    /// Node count.
    pub fn len(&self) -> usize {
        self.jac.len()
    }

    /// Always false for a constructed operator.
    pub fn is_empty(&self) -> bool {
        self.jac.is_empty()
    }

    /// `df/dx`.
    pub fn d1(&self, f: &[f64]) -> Vec<f64> {
        let mut d = d1_index(f);
        for (v, j) in d.iter_mut().zip(&self.jac) {
            *v /= j;
        }
        d
    }

    /// Quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.quad
    }

    /// `int f dx`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.quad).map(|(a, b)| a * b).sum()
    }
}

/// Axis made of consecutive SBP blocks sharing their interface nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockAxis {
    nodes: Vec<f64>,
    /// `(first, last)` node index of every block, inclusive.
    ranges: Vec<(usize, usize)>,
    ops: Vec<MappedSbp>,
}

impl BlockAxis {
    /// Splits `nodes` into blocks at the given interior indices.
    pub fn new(nodes: Vec<f64>, splits: &[usize]) -> Result<BlockAxis> {
        let mut bounds = vec![0];
        bounds.extend_from_slice(splits);
        bounds.push(nodes.len() - 1);
        if bounds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(WrinkleError::InvalidGrid("block splits must be increasing interior indices".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(WrinkleError::InvalidGrid("axis nodes must increase strictly".into()));
        }
        let ranges: Vec<(usize, usize)> = bounds.windows(2).map(|w| (w[0], w[1])).collect();
        let ops = ranges.iter().map(|&(a, b)| MappedSbp::new(&nodes[a..=b])).collect::<Result<_>>()?;
        Ok(BlockAxis { nodes, ranges, ops })
    }

    /// Nodes.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Node ranges of the blocks.
    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    /// Derivative; interface nodes take the mean of the two one-sided values.
    pub fn d1(&self, f: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; f.len()];
        for (b, (&(lo, hi), op)) in self.ranges.iter().zip(&self.ops).enumerate() {
            let part = op.d1(&f[lo..=hi]);
            for (i, v) in part.into_iter().enumerate() {
                if b > 0 && i == 0 {
                    d[lo] = 0.5 * (d[lo] + v);
                } else {
                    d[lo + i] = v;
                }
            }
        }
        d
    }

    /// Integral over block `b`.
    pub fn integrate_block(&self, b: usize, f: &[f64]) -> f64 {
        let (lo, hi) = self.ranges[b];
        self.ops[b].integrate(&f[lo..=hi])
    }

    /// Integral over the whole axis.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        (0..self.ops.len()).map(|b| self.integrate_block(b, f)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn summation_by_parts_identity_holds() {
        let n = 12;
        let h = norm_index(n);
        let mut q = vec![vec![0.0; n]; n];
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let d = d1_index(&e);
            for r in 0..n {
                q[r][c] = h[r] * d[r];
            }
        }
        for r in 0..n {
            for c in 0..n {
                let b = if r == c && r == 0 {
                    -1.0
                } else if r == c && r == n - 1 {
                    1.0
                } else {
                    0.0
                };
                assert!((q[r][c] + q[c][r] - b).abs() < 1e-14, "({r},{c})");
            }
        }
    }

    #[test]
    fn exact_on_low_degree_polynomials() {
        let x: Vec<f64> = (0..20).map(|i| -1.0 + 2.0 * i as f64 / 19.0).collect();
        let op = MappedSbp::new(&x).unwrap();
        let f: Vec<f64> = x.iter().map(|t| 3.0 * t * t - t + 2.0).collect();
        for (d, t) in op.d1(&f).iter().zip(&x) {
            assert_relative_eq!(*d, 6.0 * t - 1.0, epsilon = 1e-12);
        }
        let cubic: Vec<f64> = x.iter().map(|t| t * t * t + t * t).collect();
        assert_relative_eq!(op.integrate(&cubic), 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn mapped_grid_converges_at_fourth_order_in_the_interior() {
        let err = |n: usize| {
            let x: Vec<f64> = (0..n).map(|i| (i as f64 / (n - 1) as f64 + 0.5).powi(2)).collect();
            let op = MappedSbp::new(&x).unwrap();
            let f: Vec<f64> = x.iter().map(|t| t.sin()).collect();
            let d = op.d1(&f);
            (10..n - 10).map(|i| (d[i] - x[i].cos()).abs()).fold(0.0, f64::max)
        };
        let (a, b) = (err(100), err(200));
        assert!(a / b > 12.0, "{a} {b}");
    }

    #[test]
    fn blocks_telescope() {
        let nodes: Vec<f64> = (0..41).map(|i| -1.0 + i as f64 / 20.0).collect();
        let axis = BlockAxis::new(nodes.clone(), &[20]).unwrap();
        let f: Vec<f64> = nodes.iter().map(|t| (2.0 * t).exp()).collect();
        let d = axis.d1(&f);
        assert_relative_eq!(axis.integrate(&d), f[40] - f[0], max_relative = 1e-13);
    }
}
