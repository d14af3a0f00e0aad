//! Minimization of the coefficient energy under the pointwise constraint
//! `sum_m a_m^2 k_m^2 = 2x`.
//!
//! In the variables `p_m = a_m^2 k_m^2` the discrete energy
//! `sum_m [ sum_i (a_{i+1} - a_i)^2 / h_i + k^4 sum_i w_i a_i^2 ]` becomes
//! `sum_m [ k^-2 sum_i (sqrt p_{i+1} - sqrt p_i)^2 / h_i + k^2 sum_i w_i p_i ]`,
//! which is jointly convex, and the constraint becomes linear. The default
//! method is a primal log-barrier Newton iteration in `p` with exact
//! feasibility; a projected-gradient method in `a` with a scaling retraction
//! is kept as an alternative.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cascade::build_cascade;
use crate::error::{Result, WrinkleError};
use crate::grid::XGrid;
use crate::spectral::{CoefficientField, FrequencyGrid};

/// Optimization method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Log-barrier Newton iteration in quadratic variables.
    BarrierNewton,
    /// Projected gradient in amplitudes with Armijo backtracking and the
    /// column-scaling retraction.
    ProjectedGradient,
}

/// Initial guess.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Cascade with threshold 1 blended with a spread distribution.
    Cascade,
    /// Smooth distribution favouring `k^2 x` of order one.
    Spread,
}

/// Solver controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Optimization method.
    pub method: SolverMethod,
    /// Tolerance on the relative tangential gradient.
    pub grad_tol: f64,
    /// Iteration budget (Newton steps or gradient steps).
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Backtracking factor.
    pub backtrack: f64,
    /// Initial guess.
    pub init: InitKind,
    /// Seed for restart perturbations.
    pub seed: u64,
    /// Number of independent starts; the best result is kept.
    pub restarts: usize,
    /// Log-normal spread of restart perturbations.
    pub perturbation: f64,
    /// Initial barrier weight.
    pub tau_start: f64,
    /// Final barrier weight.
    pub tau_final: f64,
    /// Barrier reduction factor per stage.
    pub tau_factor: f64,
    /// Modes whose supremum falls below this fraction of the largest
    /// amplitude are set to zero after the barrier phase.
    pub prune_below: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: SolverMethod::BarrierNewton,
            grad_tol: 1e-8,
            max_iters: 2000,
            armijo_c: 1e-4,
            backtrack: 0.5,
            init: InitKind::Cascade,
            seed: 0,
            restarts: 3,
            perturbation: 0.5,
            tau_start: 1e-3,
            tau_final: 1e-26,
            tau_factor: 0.1,
            prune_below: 1e-7,
        }
    }
}

/// Minimizer with convergence statistics.
#[derive(Clone, Debug)]
pub struct Solution {
    /// Admissible field.
    pub field: CoefficientField,
    /// Energy of `field`, the estimate of the minimum.
    pub sigma: f64,
    /// Iterations used by the kept start.
    pub iterations: usize,
    /// True when the tangential-gradient tolerance was met.
    pub converged: bool,
    /// `|P_T grad E| / |grad E|` at the returned field.
    pub tangent_gradient: f64,
    /// Discrete multiplier density per node (`NaN` at `x = 0`); at the last
    /// node it also carries the boundary atom.
    pub lambda_discrete: Vec<f64>,
    /// Energies reached by every start.
    pub start_energies: Vec<f64>,
    /// `(max - min) / min` over starts.
    pub start_spread: f64,
}

/// Rescales each column so that `sum a^2 k^2 = 2x` exactly; the column at
/// `x = 0` is set to zero. A zero column with positive target is an error.
pub fn project_constraint(field: &CoefficientField) -> Result<CoefficientField> {
    let mut out = field.clone();
    if let Some(i) = out.normalize_columns() {
        return Err(WrinkleError::ZeroColumn { node: i, x: field.xgrid().nodes()[i] });
    }
    Ok(out)
}

/// Minimizes on the dense frequency grid `1..=m_cap` of half-period `l`.
pub fn minimize(l: f64, x: &XGrid, m_cap: u32, opts: &SolveOptions) -> Result<Solution> {
    let freq = FrequencyGrid::dense(l, m_cap)?;
    minimize_on(&freq, x, opts, None)
}

/// Minimizes on an explicit frequency grid, optionally warm-started from a
/// field whose modes are a subset of `freq`.
pub fn minimize_on(
    freq: &FrequencyGrid,
    x: &XGrid,
    opts: &SolveOptions,
    warm: Option<&CoefficientField>,
) -> Result<Solution> {
    validate_options(opts)?;
    if freq.is_empty() {
        return Err(WrinkleError::InvalidGrid("no modes to optimize".into()));
    }
    if let Some(sol) = warm.and_then(|w| warm_fixed_point(freq, x, w, opts)) {
        return Ok(sol);
    }
    let starts = opts.restarts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<Solution> = None;
    let mut energies = Vec::with_capacity(starts);
    for s in 0..starts {
        let noise: Vec<f64> = if s == 0 {
            vec![0.0; freq.len()]
        } else {
            (0..freq.len()).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); opts.perturbation * z }).collect()
        };
        let init = initial_guess(freq, x, opts.init, &noise, if s == 0 { warm } else { None })?;
        let sol = match opts.method {
            SolverMethod::BarrierNewton => barrier_newton(&init, opts)?,
            SolverMethod::ProjectedGradient => projected_gradient(&init, opts)?,
        };
        energies.push(sol.sigma);
        if best.as_ref().is_none_or(|b| sol.sigma < b.sigma) {
            best = Some(sol);
        }
    }
    let mut best = best.expect("at least one start");
    let lo = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    best.start_spread = (hi - lo) / lo;
    best.start_energies = energies;
    Ok(best)
}

fn validate_options(o: &SolveOptions) -> Result<()> {
    let bad = |what: &str| Err(WrinkleError::InvalidParameter(format!("solver option {what}")));
    if !(o.grad_tol > 0.0) {
        return bad("grad_tol must be positive");
    }
    if !(o.armijo_c > 0.0 && o.armijo_c < 0.5) {
        return bad("armijo_c must lie in (0, 1/2)");
    }
    if !(o.backtrack > 0.0 && o.backtrack < 1.0) {
        return bad("backtrack must lie in (0, 1)");
    }
    if !(o.tau_start > 0.0 && o.tau_final > 0.0 && o.tau_final <= o.tau_start) {
        return bad("barrier weights must satisfy 0 < tau_final <= tau_start");
    }
    if !(o.tau_factor > 0.0 && o.tau_factor < 1.0) {
        return bad("tau_factor must lie in (0, 1)");
    }
    if o.max_iters == 0 {
        return bad("max_iters must be positive");
    }
    Ok(())
}

/// Strictly positive feasible field used to start the iteration.
fn initial_guess(
    freq: &FrequencyGrid,
    x: &XGrid,
    kind: InitKind,
    noise: &[f64],
    warm: Option<&CoefficientField>,
) -> Result<CoefficientField> {
    let k: Vec<f64> = freq.wavenumbers();
    let nodes = x.nodes();
    let n = nodes.len();
    let mut spread = vec![0.0; freq.len() * n];
    for i in 1..n {
        let mut total = 0.0;
        for j in 0..freq.len() {
            let z = (k[j] * k[j] * nodes[i]).ln() - std::f64::consts::LN_2;
            let v = (-0.5 * z * z + noise[j]).exp() + 1e-8;
            spread[j * n + i] = v;
            total += v;
        }
        for j in 0..freq.len() {
            spread[j * n + i] *= 2.0 * nodes[i] / total;
        }
    }
    let guide: Option<Vec<f64>> = match (warm, kind) {
        (Some(w), _) => Some(quadratic_vars(&w.embed(freq)?)),
        (None, InitKind::Cascade) => {
            let fl = freq.l().floor() as u32;
            let dense = freq.modes().iter().enumerate().all(|(j, &m)| m == j as u32 + 1);
            let cap = if dense { Some(freq.max_mode()) } else { None };
            match build_cascade(freq.l(), 1.0, x, cap) {
                Ok(c) if fl >= 1 => {
                    let mut c_field = c.field.clone();
                    c_field.normalize_columns();
                    c_field.embed(freq).ok().map(|f| quadratic_vars(&f))
                }
                _ => None,
            }
        }
        (None, InitKind::Spread) => None,
    };
    let mut p = spread.clone();
    if let Some(g) = guide {
        for i in 1..n {
            let col: f64 = (0..freq.len()).map(|j| g[j * n + i]).sum();
            if col > 0.0 {
                let scale = 2.0 * nodes[i] / col;
                for j in 0..freq.len() {
                    let idx = j * n + i;
                    p[idx] = 0.9 * g[idx] * scale + 0.1 * spread[idx];
                }
            }
        }
    }
    let amp: Vec<f64> = (0..p.len()).map(|idx| (p[idx] / (k[idx / n] * k[idx / n])).sqrt()).collect();
    CoefficientField::new(freq.clone(), x.clone(), amp)
}

fn quadratic_vars(f: &CoefficientField) -> Vec<f64> {
    let n = f.xgrid().len();
    let mut p = Vec::with_capacity(f.amplitudes().len());
    for j in 0..f.freq().len() {
        let k2 = f.freq().k(j).powi(2);
        p.extend(f.row(j).iter().map(|a| a * a * k2));
        debug_assert_eq!(p.len(), (j + 1) * n);
    }
    p
}

/// Gradient of the discrete energy with respect to the amplitudes.
pub fn energy_gradient(f: &CoefficientField) -> Vec<f64> {
    let n = f.xgrid().len();
    let h = f.xgrid().spacings();
    let w = f.xgrid().weights();
    let mut g = vec![0.0; f.amplitudes().len()];
    for j in 0..f.freq().len() {
        let k4 = f.freq().k(j).powi(4);
        let a = f.row(j);
        let gj = &mut g[j * n..(j + 1) * n];
        for i in 0..n - 1 {
            let s = 2.0 * (a[i + 1] - a[i]) / h[i];
            gj[i] -= s;
            gj[i + 1] += s;
        }
        for i in 0..n {
            gj[i] += 2.0 * k4 * w[i] * a[i];
        }
        gj[0] = 0.0;
    }
    g
}

/// Relative norm of the gradient component tangent to the constraint set.
pub fn tangent_gradient_norm(f: &CoefficientField) -> f64 {
    let g = energy_gradient(f);
    let t = tangent_projection(f, &g);
    let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tn: f64 = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gn == 0.0 {
        0.0
    } else {
        tn / gn
    }
}

/// Removes, column by column, the component along the constraint normal
/// `(k_m^2 a_m)_m`. Entries with zero amplitude sit on the bound `a >= 0`
/// and keep only a negative gradient, which points into the feasible side.
fn tangent_projection(f: &CoefficientField, g: &[f64]) -> Vec<f64> {
    let n = f.xgrid().len();
    let m = f.freq().len();
    let k2: Vec<f64> = f.freq().wavenumbers().iter().map(|k| k * k).collect();
    let a = f.amplitudes();
    let mut t = g.to_vec();
    for i in 0..n {
        let mut gn = 0.0;
        let mut nn = 0.0;
        for j in 0..m {
            let idx = j * n + i;
            let nv = k2[j] * a[idx];
            gn += g[idx] * nv;
            nn += nv * nv;
        }
        for j in 0..m {
            let idx = j * n + i;
            if a[idx] == 0.0 {
                t[idx] = g[idx].min(0.0);
            } else if nn > 0.0 {
                t[idx] -= gn / nn * k2[j] * a[idx];
            }
        }
    }
    t
}

fn projected_gradient(init: &CoefficientField, opts: &SolveOptions) -> Result<Solution> {
    let mut a = project_constraint(init)?;
    let mut e = a.energy().total;
    let mut step = 1e-3;
    let mut iterations = 0;
    let mut rel = f64::INFINITY;
    while iterations < opts.max_iters {
        let g = energy_gradient(&a);
        let t = tangent_projection(&a, &g);
        let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tn2: f64 = t.iter().map(|v| v * v).sum();
        rel = if gn > 0.0 { tn2.sqrt() / gn } else { 0.0 };
        if rel <= opts.grad_tol {
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = a.clone();
            for (v, d) in trial.amp_mut().iter_mut().zip(&t) {
                *v = (*v - step * d).max(0.0);
            }
            if trial.normalize_columns().is_some() {
                step *= opts.backtrack;
                continue;
            }
            let et = trial.energy().total;
            if et <= e - opts.armijo_c * step * tn2 {
                a = trial;
                e = et;
                accepted = true;
                break;
            }
            step *= opts.backtrack;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    let n = a.xgrid().len();
    Ok(Solution {
        sigma: e,
        iterations,
        converged: rel <= opts.grad_tol,
        tangent_gradient: rel,
        lambda_discrete: vec![f64::NAN; n],
        field: a,
        start_energies: Vec::new(),
        start_spread: 0.0,
    })
}

/// Discrete problem data in quadratic variables over the positive nodes,
/// restricted to a set of active modes.
struct Problem {
    k: Vec<f64>,
    /// Positive nodes `x_1..x_N`.
    x: Vec<f64>,
    /// Trapezoidal weights at positive nodes.
    w: Vec<f64>,
    /// First interval `x_1 - x_0`.
    h0: f64,
    /// Intervals between consecutive positive nodes.
    hh: Vec<f64>,
}

impl Problem {
    fn new(k: Vec<f64>, grid: &XGrid) -> Problem {
        let nodes = grid.nodes();
        let w = grid.weights()[1..].to_vec();
        let x = nodes[1..].to_vec();
        let hh = x.windows(2).map(|v| v[1] - v[0]).collect();
        Problem { k, x, w, h0: nodes[1], hh }
    }

    fn n(&self) -> usize {
        self.x.len()
    }

    fn energy(&self, p: &[f64]) -> f64 {
        let n = self.n();
        let mut total = 0.0;
        for (j, &k) in self.k.iter().enumerate() {
            let pj = &p[j * n..(j + 1) * n];
            let mut mem = pj[0] / self.h0;
            for i in 0..n - 1 {
                let d = pj[i + 1].sqrt() - pj[i].sqrt();
                mem += d * d / self.hh[i];
            }
            let ben: f64 = pj.iter().zip(&self.w).map(|(v, w)| v * w).sum();
            total += mem / (k * k) + k * k * ben;
        }
        total
    }

    fn barrier(&self, p: &[f64]) -> f64 {
        let n = self.n();
        p.iter().enumerate().map(|(idx, v)| -self.w[idx % n] * v.ln()).sum()
    }

    /// Gradient and tridiagonal Hessian (diagonal `d`, off-diagonal `e`) of
    /// `energy + tau * barrier`. The barrier part of the Hessian uses
    /// `tau_h`; passing the previous weight right after a reduction turns the
    /// Newton step into a tangent predictor along the central path.
    fn derivatives(&self, p: &[f64], tau: f64, tau_h: f64, g: &mut [f64], d: &mut [f64], e: &mut [f64]) {
        let n = self.n();
        for (j, &k) in self.k.iter().enumerate() {
            let c = 1.0 / (k * k);
            let pj = &p[j * n..(j + 1) * n];
            let gj = &mut g[j * n..(j + 1) * n];
            let dj = &mut d[j * n..(j + 1) * n];
            let ej = &mut e[j * (n - 1)..(j + 1) * (n - 1)];
            for i in 0..n {
                gj[i] = k * k * self.w[i] - tau * self.w[i] / pj[i];
                dj[i] = tau_h * self.w[i] / (pj[i] * pj[i]);
            }
            gj[0] += c / self.h0;
            for i in 0..n - 1 {
                let s0 = pj[i].sqrt();
                let s1 = pj[i + 1].sqrt();
                let ch = c / self.hh[i];
                gj[i] += ch * (1.0 - s1 / s0);
                gj[i + 1] += ch * (1.0 - s0 / s1);
                dj[i] += ch * s1 / (2.0 * s0 * pj[i]);
                dj[i + 1] += ch * s0 / (2.0 * s1 * pj[i + 1]);
                ej[i] = -ch / (2.0 * s0 * s1);
            }
        }
    }

    /// Smallest generalized eigenvalue of the Lagrangian form of a mode that
    /// is not in the active set, `a^T (K_k + k^2 diag(nu)) a` against the
    /// quadrature weights, clipped from below at `floor`. Nonnegative values
    /// mean that switching the mode on cannot lower the energy.
    fn reduced_cost(&self, k: f64, nu: &[f64], floor: f64) -> f64 {
        let n = self.n();
        let k2 = k * k;
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n - 1];
        for i in 0..n {
            let left = if i == 0 { self.h0 } else { self.hh[i - 1] };
            let mut v = 1.0 / left + k2 * k2 * self.w[i] + k2 * nu[i];
            if i + 1 < n {
                v += 1.0 / self.hh[i];
            }
            diag[i] = v / self.w[i];
        }
        for i in 0..n - 1 {
            off[i] = -1.0 / (self.hh[i] * (self.w[i] * self.w[i + 1]).sqrt());
        }
        // Sturm count: number of eigenvalues below mu.
        let below = |mu: f64| -> usize {
            let mut count = 0;
            let mut q = diag[0] - mu;
            if q < 0.0 {
                count += 1;
            }
            for i in 1..n {
                let qq = if q == 0.0 { f64::EPSILON * off[i - 1].abs().max(1e-300) } else { q };
                q = diag[i] - mu - off[i - 1] * off[i - 1] / qq;
                if q < 0.0 {
                    count += 1;
                }
            }
            count
        };
        if below(0.0) == 0 {
            return 0.0;
        }
        let mut lo = floor;
        if below(lo) > 0 {
            return floor;
        }
        let mut hi = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if below(mid) > 0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Node-ordered factorization of the Newton KKT system
/// `H dp + A^T nu = -g`, `A dp = 0`, where `H` is block diagonal over modes
/// with tridiagonal blocks and `A` sums the modes at each node.
///
/// Each mode energy is homogeneous of degree one in `p`, so every mode block
/// of `H` is nearly singular along `p` itself and the usual Schur complement
/// in the multipliers is hopelessly ill-conditioned. Ordering the unknowns by
/// node instead gives a block tridiagonal matrix whose diagonal blocks are
/// small saddle-point systems, eliminated here with pivoted LU.
struct KktFactor {
    m: usize,
    n: usize,
    /// Jacobi scaling of the step unknowns.
    sigma: Vec<f64>,
    /// Scaling of the multiplier at each node.
    c: Vec<f64>,
    /// Scaled couplings between node `i` and `i + 1`, node-major.
    ehat: Vec<f64>,
    lus: Vec<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    /// `D_i^{-1} E_i` for the forward elimination.
    gs: Vec<DMatrix<f64>>,
}

impl KktFactor {
    fn new(m: usize, n: usize, d: &[f64], e: &[f64]) -> Result<KktFactor> {
        let mut sigma = vec![0.0; m * n];
        let mut c = vec![0.0; n];
        for i in 0..n {
            let mut smax: f64 = 0.0;
            for j in 0..m {
                let s = 1.0 / d[j * n + i].sqrt();
                sigma[j * n + i] = s;
                smax = smax.max(s);
            }
            c[i] = 1.0 / smax;
        }
        let mut ehat = vec![0.0; m * n.saturating_sub(1)];
        for i in 0..n - 1 {
            for j in 0..m {
                ehat[i * m + j] = e[j * (n - 1) + i] * sigma[j * n + i] * sigma[j * n + i + 1];
            }
        }
        let mut lus = Vec::with_capacity(n);
        let mut gs = Vec::with_capacity(n.saturating_sub(1));
        let mut block = DMatrix::<f64>::zeros(m + 1, m + 1);
        for i in 0..n {
            block.fill(0.0);
            for j in 0..m {
                block[(j, j)] = 1.0;
                let b = sigma[j * n + i] * c[i];
                block[(j, m)] = b;
                block[(m, j)] = b;
            }
            if i > 0 {
                let g: &DMatrix<f64> = &gs[i - 1];
                let eh = &ehat[(i - 1) * m..i * m];
                for a in 0..m {
                    for b in 0..m {
                        block[(a, b)] -= eh[a] * g[(a, b)];
                    }
                }
            }
            let lu = block.clone().lu();
            if !lu.is_invertible() {
                return Err(WrinkleError::NonConvergence(format!("singular Newton block at node {i}")));
            }
            if i + 1 < n {
                let mut rhs = DMatrix::<f64>::zeros(m + 1, m);
                for j in 0..m {
                    rhs[(j, j)] = ehat[i * m + j];
                }
                let g = lu
                    .solve(&rhs)
                    .ok_or_else(|| WrinkleError::NonConvergence("singular Newton block".into()))?;
                gs.push(g);
            }
            lus.push(lu);
        }
        Ok(KktFactor { m, n, sigma, c, ehat, lus, gs })
    }

    /// Solves for `(dp, nu)` given right-hand sides `rp` (mode equations,
    /// mode-major) and `rc` (node constraints), in unscaled units.
    fn solve(&self, rp: &[f64], rc: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut us: Vec<DVector<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut r = DVector::<f64>::zeros(m + 1);
            for j in 0..m {
                r[j] = rp[j * n + i] * self.sigma[j * n + i];
            }
            r[m] = rc[i] * self.c[i];
            if i > 0 {
                let prev = &us[i - 1];
                for j in 0..m {
                    r[j] -= self.ehat[(i - 1) * m + j] * prev[j];
                }
            }
            let u = self.lus[i].solve(&r).unwrap_or_else(|| DVector::zeros(m + 1));
            us.push(u);
        }
        for i in (0..n - 1).rev() {
            let next = us[i + 1].rows(0, m).into_owned();
            let corr = &self.gs[i] * next;
            us[i] -= corr;
        }
        let mut dp = vec![0.0; m * n];
        let mut nu = vec![0.0; n];
        for i in 0..n {
            for j in 0..m {
                dp[j * n + i] = us[i][j] * self.sigma[j * n + i];
            }
            nu[i] = us[i][m] * self.c[i];
        }
        (dp, nu)
    }
}

/// Newton direction for `min energy + tau * barrier` subject to
/// `sum_j dp_j = 0`; returns the step and the constraint multipliers.
fn newton_step(m: usize, n: usize, g: &[f64], d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let kkt = KktFactor::new(m, n, d, e)?;
    let rp: Vec<f64> = g.iter().map(|v| -v).collect();
    let rc = vec![0.0; n];
    let (mut dp, mut nu) = kkt.solve(&rp, &rc);
    for _ in 0..2 {
        // Iterative refinement against the unscaled system.
        let mut res_p = vec![0.0; m * n];
        let mut res_c = vec![0.0; n];
        for j in 0..m {
            for i in 0..n {
                let idx = j * n + i;
                let mut hv = d[idx] * dp[idx];
                if i > 0 {
                    hv += e[j * (n - 1) + i - 1] * dp[idx - 1];
                }
                if i + 1 < n {
                    hv += e[j * (n - 1) + i] * dp[idx + 1];
                }
                res_p[idx] = rp[idx] - hv - nu[i];
                res_c[i] -= dp[idx];
            }
        }
        let (cp, cn) = kkt.solve(&res_p, &res_c);
        for (a, b) in dp.iter_mut().zip(&cp) {
            *a += b;
        }
        for (a, b) in nu.iter_mut().zip(&cn) {
            *a += b;
        }
    }
    Ok((dp, nu))
}

/// Share of a column above which a mode of the initial guess starts active.
const ACTIVE_SHARE: f64 = 0.05;
/// Share given to a mode when pricing switches it on.
const ENTRY_SHARE: f64 = 1e-3;
/// Largest number of modes switched on per pricing round.
const ENTRY_BATCH: usize = 12;
/// Barrier weight at which later pricing rounds resume.
const TAU_RESTART: f64 = 1e-7;
/// Barrier weight at which inactive modes are priced before the path is
/// followed to its end.
const TAU_PRICE: f64 = 1e-10;

struct Centered {
    p: Vec<f64>,
    nu: Vec<f64>,
    iterations: usize,
    exhausted: bool,
}

/// Follows the central path of the problem restricted to `prob.k` from
/// `tau0` down to `tau_end`.
fn follow_path(
    prob: &Problem,
    mut p: Vec<f64>,
    tau0: f64,
    tau_end: f64,
    budget: usize,
    opts: &SolveOptions,
) -> Result<Centered> {
    let n = prob.n();
    let m = prob.k.len();
    let targets: Vec<f64> = prob.x.iter().map(|x| 2.0 * x).collect();
    renormalize(&mut p, &targets, m);
    let mut g = vec![0.0; m * n];
    let mut d = vec![0.0; m * n];
    let mut e = vec![0.0; m * (n - 1)];
    let mut nu = vec![0.0; n];
    let mut tau = tau0;
    let mut tau_prev = tau0;
    let mut iterations = 0usize;
    let mut exhausted = false;
    loop {
        let mut first = true;
        loop {
            if iterations >= budget {
                exhausted = true;
                break;
            }
            let tau_h = if first { tau_prev } else { tau };
            first = false;
            prob.derivatives(&p, tau, tau_h, &mut g, &mut d, &mut e);
            let (step, multipliers) = newton_step(m, n, &g, &d, &e)?;
            nu = multipliers;
            let dec: f64 = -g.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>();
            iterations += 1;
            let scale = 1.0 + prob.energy(&p).abs();
            let mut alpha_max: f64 = 1.0;
            for (pv, sv) in p.iter().zip(&step) {
                if *sv < 0.0 {
                    alpha_max = alpha_max.min(-0.995 * pv / sv);
                }
            }
            let last = tau <= tau_end * (1.0 + 1e-9);
            let centered = if last { 1e-13 * scale } else { (0.1 * tau).max(1e-13 * scale) };
            if dec <= centered {
                apply_step(&mut p, &step, alpha_max);
                break;
            }
            let phi0 = prob.energy(&p) + tau * prob.barrier(&p);
            let mut alpha = alpha_max;
            let mut accepted = false;
            for _ in 0..60 {
                let mut trial = p.clone();
                apply_step(&mut trial, &step, alpha);
                let phi = prob.energy(&trial) + tau * prob.barrier(&trial);
                if phi <= phi0 - opts.armijo_c * alpha * dec || (dec < 1e-9 * scale && phi <= phi0 + 1e-14 * scale)
                {
                    p = trial;
                    accepted = true;
                    break;
                }
                alpha *= opts.backtrack;
            }
            if !accepted {
                break;
            }
        }
        renormalize(&mut p, &targets, m);
        if exhausted || tau <= tau_end * (1.0 + 1e-9) {
            break;
        }
        tau_prev = tau;
        tau *= opts.tau_factor;
        if tau < tau_end * (1.0 + 1e-9) {
            tau = tau_end;
        }
    }
    Ok(Centered { p, nu, iterations, exhausted })
}

fn barrier_newton(init: &CoefficientField, opts: &SolveOptions) -> Result<Solution> {
    let freq = init.freq();
    let grid = init.xgrid();
    let nn = grid.len();
    let n = nn - 1;
    let mf = freq.len();
    let kf = freq.wavenumbers();
    let full = quadratic_vars(init);
    let share = |j: usize, i: usize| full[j * nn + i + 1] / (2.0 * grid.nodes()[i + 1]);

    // Initial active set: modes carrying a visible share somewhere, plus the
    // dominant mode of every column.
    let mut active = vec![false; mf];
    for i in 0..n {
        let mut best = 0;
        for j in 0..mf {
            let s = share(j, i);
            if s >= ACTIVE_SHARE {
                active[j] = true;
            }
            if s > share(best, i) {
                best = j;
            }
        }
        active[best] = true;
    }
    let mut p_full: Vec<f64> = (0..mf)
        .flat_map(|j| (0..n).map(move |i| (j, i)))
        .map(|(j, i)| full[j * nn + i + 1].max(1e-12 * 2.0 * grid.nodes()[i + 1]))
        .collect();

    let mut iterations = 0usize;
    let mut exhausted = false;
    let tau_price = TAU_PRICE.clamp(opts.tau_final, opts.tau_start);
    let mut tau0 = opts.tau_start;
    let mut finishing = false;
    let mut nu = vec![0.0; n];
    let mut priced_clean = false;
    let probe = Problem::new(Vec::new(), grid);
    for _round in 0..64 {
        let idx: Vec<usize> = (0..mf).filter(|&j| active[j]).collect();
        let prob = Problem::new(idx.iter().map(|&j| kf[j]).collect(), grid);
        let p0: Vec<f64> = idx.iter().flat_map(|&j| p_full[j * n..(j + 1) * n].to_vec()).collect();
        let budget = opts.max_iters.saturating_sub(iterations).max(1);
        let tau_end = if finishing { opts.tau_final } else { tau_price };
        let run = follow_path(&prob, p0, tau0, tau_end, budget, opts)?;
        iterations += run.iterations;
        for (a, &j) in idx.iter().enumerate() {
            p_full[j * n..(j + 1) * n].copy_from_slice(&run.p[a * n..(a + 1) * n]);
        }
        nu = run.nu;
        if run.exhausted {
            exhausted = true;
            break;
        }
        let mut violators = price(&probe, &kf, &active, &nu);
        if violators.is_empty() {
            if finishing || tau_end <= opts.tau_final {
                priced_clean = true;
                break;
            }
            finishing = true;
            tau0 = (tau_end * opts.tau_factor).max(opts.tau_final);
            continue;
        }
        finishing = false;
        violators.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in violators.iter().take(ENTRY_BATCH) {
            active[j] = true;
            for i in 0..n {
                p_full[j * n + i] = ENTRY_SHARE * 2.0 * grid.nodes()[i + 1];
            }
        }
        tau0 = opts.tau_start.min(TAU_RESTART).max(tau_price);
    }

    let mut amp = vec![0.0; mf * nn];
    for j in 0..mf {
        if !active[j] {
            continue;
        }
        for i in 0..n {
            amp[j * nn + i + 1] = p_full[j * n + i].sqrt() / kf[j];
        }
    }
    let mut field = CoefficientField::new(freq.clone(), grid.clone(), amp)?;
    prune_modes(&mut field, opts.prune_below);
    if let Some(i) = field.normalize_columns() {
        return Err(WrinkleError::ZeroColumn { node: i, x: field.xgrid().nodes()[i] });
    }
    let tangent = tangent_gradient_norm(&field);
    let mut lambda_discrete = vec![f64::NAN; nn];
    for i in 0..n {
        lambda_discrete[i + 1] = -nu[i] / probe.w[i];
    }
    let sigma = field.energy().total;
    Ok(Solution {
        field,
        sigma,
        iterations,
        converged: tangent <= opts.grad_tol && !exhausted && priced_clean,
        tangent_gradient: tangent,
        lambda_discrete,
        start_energies: Vec::new(),
        start_spread: 0.0,
    })
}

/// Inactive modes whose Lagrangian form is indefinite under the multipliers
/// `nu`, as `(scaled reduced cost, mode index)`.
fn price(probe: &Problem, kf: &[f64], active: &[bool], nu: &[f64]) -> Vec<(f64, usize)> {
    let ls = nu.iter().zip(&probe.w).map(|(v, w)| (v / w).abs()).fold(0.0, f64::max);
    let mut violators = Vec::new();
    for (j, &k) in kf.iter().enumerate() {
        if active[j] {
            continue;
        }
        let k2 = k * k;
        let scale = k2 * k2 + k2 * ls;
        let rc = probe.reduced_cost(k, nu, -1e3 * scale);
        if rc < -1e-9 * scale {
            violators.push((rc / scale, j));
        }
    }
    violators
}

/// Accepts a warm start unchanged when it already satisfies the first-order
/// conditions: small tangent gradient on its support and no profitable mode
/// outside it.
fn warm_fixed_point(freq: &FrequencyGrid, x: &XGrid, warm: &CoefficientField, opts: &SolveOptions) -> Option<Solution> {
    if warm.xgrid() != x {
        return None;
    }
    let field = project_constraint(&warm.embed(freq).ok()?).ok()?;
    let tangent = tangent_gradient_norm(&field);
    if tangent > opts.grad_tol {
        return None;
    }
    let nn = x.len();
    let kf = freq.wavenumbers();
    let g = energy_gradient(&field);
    let a = field.amplitudes();
    let mut nu = vec![0.0; nn - 1];
    for i in 1..nn {
        let (mut num, mut den) = (0.0, 0.0);
        for (j, k) in kf.iter().enumerate() {
            let idx = j * nn + i;
            num += g[idx] * k * k * a[idx];
            den += k.powi(4) * a[idx] * a[idx];
        }
        nu[i - 1] = -num / (2.0 * den);
    }
    let active: Vec<bool> = (0..kf.len()).map(|j| field.sup_of_mode(j) > 0.0).collect();
    let probe = Problem::new(Vec::new(), x);
    if !price(&probe, &kf, &active, &nu).is_empty() {
        return None;
    }
    let mut lambda_discrete = vec![f64::NAN; nn];
    for i in 1..nn {
        lambda_discrete[i] = -nu[i - 1] / probe.w[i - 1];
    }
    let sigma = field.energy().total;
    Some(Solution {
        field,
        sigma,
        iterations: 0,
        converged: true,
        tangent_gradient: tangent,
        lambda_discrete,
        start_energies: vec![sigma],
        start_spread: 0.0,
    })
}

fn apply_step(p: &mut [f64], step: &[f64], alpha: f64) {
    for (pv, sv) in p.iter_mut().zip(step) {
        let v = *pv + alpha * sv;
        *pv = if v > 0.0 { v } else { *pv * 1e-3 };
    }
}

/// Restores `sum_j p_j = 2x` column by column after roundoff drift.
fn renormalize(p: &mut [f64], targets: &[f64], m: usize) {
    let n = targets.len();
    for i in 0..n {
        let s: f64 = (0..m).map(|j| p[j * n + i]).sum();
        let t = targets[i] / s;
        for j in 0..m {
            p[j * n + i] *= t;
        }
    }
}

fn prune_modes(field: &mut CoefficientField, rel: f64) {
    let floor = rel * field.max_amplitude();
    let n = field.xgrid().len();
    let zero = vec![0.0; n];
    for j in 0..field.freq().len() {
        if field.sup_of_mode(j) <= floor {
            field.set_row(j, &zero);
        }
    }
}
