//! Post-processing of computed minimizers: the multiplier density and its
//! boundary atom, the logarithmic-derivative ratios `mu_k`, Euler-Lagrange
//! residuals, the structural checks and the regularity envelopes.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{d1_at, d1_left, d1_right, d2_at};
use crate::grid::XGrid;
use crate::solver::{minimize_on, SolveOptions, Solution};
use crate::spectral::{CoefficientField, FrequencyGrid};

/// Relative amplitude below which a mode counts as inactive at a node.
pub const ACTIVITY_FLOOR: f64 = 1e-9;
/// Lower end of the x-window used by envelope checks.
pub const X_LO: f64 = 1e-3;
/// Slack on the `mu_k` bounds and the cross-ordering.
pub const MU_EPS: f64 = 1e-6;
/// Floor on `B(x) = sum a^2 k^4` below which a node is skipped.
pub const BENDING_FLOOR: f64 = 1e-300;

/// Nodal derivatives of every mode, computed through `ln a` where the
/// amplitude is positive so that exponentially small tails keep their
/// relative accuracy.
#[derive(Clone, Debug)]
pub struct ModeDerivatives {
    /// `(ln a)'`, `NaN` where `a = 0`.
    pub dlog: Vec<f64>,
    /// `a'`.
    pub d1: Vec<f64>,
    /// `a''`.
    pub d2: Vec<f64>,
}

/// Derivatives of all rows of `field`, row-major by mode.
pub fn mode_derivatives(field: &CoefficientField) -> ModeDerivatives {
    let x = field.xgrid().nodes();
    let n = x.len();
    let m = field.freq().len();
    let mut out = ModeDerivatives { dlog: vec![f64::NAN; m * n], d1: vec![0.0; m * n], d2: vec![0.0; m * n] };
    for j in 0..m {
        let a = field.row(j);
        if a.iter().all(|&v| v == 0.0) {
            continue;
        }
        let la: Vec<f64> = a.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NAN }).collect();
        let pos = |i: usize| a[i] > 0.0;
        let mut dl = vec![f64::NAN; n];
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        for i in 1..n {
            if i == n - 1 {
                if n >= 3 && pos(n - 1) && pos(n - 2) && pos(n - 3) {
                    dl[i] = d1_right(x, &la);
                    d1[i] = a[i] * dl[i];
                } else {
                    d1[i] = d1_right(x, a);
                    if pos(i) {
                        dl[i] = d1[i] / a[i];
                    }
                }
            } else if i >= 2 && pos(i - 1) && pos(i) && pos(i + 1) {
                dl[i] = d1_at(x, &la, i);
                d1[i] = a[i] * dl[i];
                d2[i] = a[i] * (d2_at(x, &la, i) + dl[i] * dl[i]);
            } else {
                d1[i] = d1_at(x, a, i);
                d2[i] = d2_at(x, a, i);
                if pos(i) {
                    dl[i] = d1[i] / a[i];
                }
            }
        }
        d1[0] = d1_left(x, a);
        if n >= 3 {
            d2[0] = d2[1];
            // Second derivative at the right end from the adjacent log stencil.
            let i = n - 1;
            d2[i] = if pos(i) && pos(i - 1) && i >= 2 && pos(i - 2) {
                let ll = d2_at(x, &la, i - 1);
                a[i] * (ll + dl[i] * dl[i])
            } else {
                d2[i - 1]
            };
        }
        out.dlog[j * n..(j + 1) * n].copy_from_slice(&dl);
        out.d1[j * n..(j + 1) * n].copy_from_slice(&d1);
        out.d2[j * n..(j + 1) * n].copy_from_slice(&d2);
    }
    out
}

/// Multiplier density on the nodes plus the boundary atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierEstimate {
    /// `lambda(x_i)`; `NaN` at `x = 0` and at skipped nodes.
    pub lambda: Vec<f64>,
    /// Least-squares atom `mu = lambda({1})` from the boundary condition.
    pub atom: f64,
    /// Per-mode atom estimates `a_k'(1) / (k^2 a_k(1))` for active modes.
    pub atom_per_mode: Vec<(u32, f64)>,
    /// Relative spread of the per-mode atoms, weighted to modes carrying at
    /// least `1e-6` of the constraint at `x = 1`.
    pub atom_spread: f64,
    /// Interior nodes skipped because `B(x_i)` fell below the floor.
    pub skipped_nodes: Vec<usize>,
}

/// Recovers `lambda(x) = sum (a'^2 k^2 + a^2 k^6) / sum a^2 k^4` pointwise and
/// the atom at `x = 1` from `a_k'(1) = mu k^2 a_k(1)`.
pub fn recover_multiplier(field: &CoefficientField) -> MultiplierEstimate {
    let der = mode_derivatives(field);
    recover_with(field, &der)
}

fn recover_with(field: &CoefficientField, der: &ModeDerivatives) -> MultiplierEstimate {
    let n = field.xgrid().len();
    let k = field.freq().wavenumbers();
    let mut lambda = vec![f64::NAN; n];
    let mut skipped = Vec::new();
    for i in 1..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, &kj) in k.iter().enumerate() {
            let a = field.row(j)[i];
            if a == 0.0 {
                continue;
            }
            let k2 = kj * kj;
            let a2 = a * a;
            let dl = der.dlog[j * n + i];
            let slope2 = if dl.is_finite() { dl * dl } else { (der.d1[j * n + i] / a).powi(2) };
            num += a2 * k2 * (slope2 + k2 * k2);
            den += a2 * k2 * k2;
        }
        if den <= BENDING_FLOOR {
            skipped.push(i);
        } else {
            lambda[i] = num / den;
        }
    }
    let last = n - 1;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut per_mode = Vec::new();
    let floor = ACTIVITY_FLOOR * field.max_amplitude();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let target = 2.0 * field.xgrid().nodes()[last];
    for (j, &kj) in k.iter().enumerate() {
        let a = field.row(j)[last];
        if a <= floor || a == 0.0 {
            continue;
        }
        let k2 = kj * kj;
        let d1 = der.d1[j * n + last];
        num += d1 * k2 * a;
        den += k2 * k2 * a * a;
        let mu_j = d1 / (k2 * a);
        per_mode.push((field.freq().modes()[j], mu_j));
        if a * a * k2 >= 1e-6 * target {
            lo = lo.min(mu_j);
            hi = hi.max(mu_j);
        }
    }
    let atom = if den > 0.0 { num / den } else { 0.0 };
    let atom_spread = if hi >= lo { (hi - lo) / atom.abs().max(1e-12) } else { 0.0 };
    MultiplierEstimate { lambda, atom, atom_per_mode: per_mode, atom_spread, skipped_nodes: skipped }
}

/// `mu_k(x_i) = a_k'/(k^2 a_k)` with an activity mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuTable {
    /// Mode numbers, one row each.
    pub modes: Vec<u32>,
    /// Wavenumbers `k = pi m / L`.
    pub k: Vec<f64>,
    /// Node coordinates.
    pub x: Vec<f64>,
    /// Row-major values; `NaN` where masked.
    pub values: Vec<f64>,
    /// Row-major activity mask.
    pub active: Vec<bool>,
}

impl MuTable {
    /// Value at mode row `j`, node `i`, if active.
    pub fn get(&self, j: usize, i: usize) -> Option<f64> {
        let idx = j * self.x.len() + i;
        self.active[idx].then_some(self.values[idx])
    }

    /// True when row `j` is active at some node.
    pub fn mode_active(&self, j: usize) -> bool {
        let n = self.x.len();
        self.active[j * n..(j + 1) * n].iter().any(|&b| b)
    }
}

/// Logarithmic-derivative ratios of every mode, masked below
/// `ACTIVITY_FLOOR * max amplitude`.
pub fn compute_mu(field: &CoefficientField) -> MuTable {
    mu_with(field, &mode_derivatives(field))
}

fn mu_with(field: &CoefficientField, der: &ModeDerivatives) -> MuTable {
    let n = field.xgrid().len();
    let k = field.freq().wavenumbers();
    let floor = ACTIVITY_FLOOR * field.max_amplitude();
    let mut values = vec![f64::NAN; k.len() * n];
    let mut active = vec![false; k.len() * n];
    for (j, &kj) in k.iter().enumerate() {
        let a = field.row(j);
        for i in 1..n {
            if a[i] > floor && a[i] > 0.0 {
                let dl = der.dlog[j * n + i];
                if dl.is_finite() {
                    values[j * n + i] = dl / (kj * kj);
                    active[j * n + i] = true;
                }
            }
        }
    }
    MuTable {
        modes: field.freq().modes().to_vec(),
        k,
        x: field.xgrid().nodes().to_vec(),
        values,
        active,
    }
}

/// Relative residuals of `a'' = a k^4 - lambda a k^2` and of the boundary
/// condition `a'(1) = mu k^2 a(1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElResidual {
    /// Relative L2-in-x residual per mode over `[x_lo, 1)`; zero for zero modes.
    pub per_mode: Vec<f64>,
    /// Residual aggregated over all modes.
    pub aggregate: f64,
    /// Boundary residual per mode.
    pub boundary_per_mode: Vec<f64>,
    /// Boundary residual aggregated over all modes.
    pub boundary: f64,
    /// Lower end of the window.
    pub x_lo: f64,
}

/// Euler-Lagrange residual of `field` against a multiplier density and atom.
pub fn el_residual(field: &CoefficientField, lambda: &[f64], atom: f64, x_lo: f64) -> ElResidual {
    el_with(field, &mode_derivatives(field), lambda, atom, x_lo)
}

fn el_with(field: &CoefficientField, der: &ModeDerivatives, lambda: &[f64], atom: f64, x_lo: f64) -> ElResidual {
    let x = field.xgrid().nodes();
    let w = field.xgrid().weights();
    let n = x.len();
    let k = field.freq().wavenumbers();
    let mut per_mode = vec![0.0; k.len()];
    let mut bc = vec![0.0; k.len()];
    let (mut rt, mut st, mut bt, mut bs) = (0.0, 0.0, 0.0, 0.0);
    for (j, &kj) in k.iter().enumerate() {
        let a = field.row(j);
        if a.iter().all(|&v| v == 0.0) {
            continue;
        }
        let k2 = kj * kj;
        let (mut r2, mut s2) = (0.0, 0.0);
        for i in 1..n - 1 {
            if x[i] < x_lo || !lambda[i].is_finite() {
                continue;
            }
            let d2 = der.d2[j * n + i];
            let r = d2 - a[i] * k2 * k2 + lambda[i] * a[i] * k2;
            let s = d2.abs() + a[i] * k2 * k2 + lambda[i].abs() * a[i] * k2;
            r2 += w[i] * r * r;
            s2 += w[i] * s * s;
        }
        per_mode[j] = if s2 > 0.0 { (r2 / s2).sqrt() } else { 0.0 };
        rt += r2;
        st += s2;
        let d1 = der.d1[j * n + n - 1];
        let r = d1 - atom * k2 * a[n - 1];
        let s = d1.abs() + atom.abs() * k2 * a[n - 1];
        bc[j] = if s > 0.0 { r.abs() / s } else { 0.0 };
        bt += r * r;
        bs += s * s;
    }
    ElResidual {
        per_mode,
        aggregate: if st > 0.0 { (rt / st).sqrt() } else { 0.0 },
        boundary_per_mode: bc,
        boundary: if bs > 0.0 { (bt / bs).sqrt() } else { 0.0 },
        x_lo,
    }
}

/// `int_0^1 2x lambda dx + 2 mu` by the trapezoid rule; the integrand at
/// `x = 0` takes its value at the first positive node.
pub fn multiplier_identity(x: &XGrid, lambda: &[f64], atom: f64) -> f64 {
    integrand_integral(x, &weighted(x, lambda), 0.0, f64::INFINITY) + 2.0 * atom
}

fn weighted(x: &XGrid, lambda: &[f64]) -> Vec<f64> {
    let nodes = x.nodes();
    let mut f: Vec<f64> = nodes.iter().zip(lambda).map(|(&t, &l)| if l.is_finite() { 2.0 * t * l } else { 0.0 }).collect();
    if f.len() > 1 {
        f[0] = f[1];
    }
    f
}

/// Trapezoid integral of nodal `f` over `[lo, hi]`, interpolating linearly
/// at the ends.
fn integrand_integral(x: &XGrid, f: &[f64], lo: f64, hi: f64) -> f64 {
    crate::grid::integrate_pl_range(x.nodes(), f, lo, hi)
}

/// Integral of the multiplier density over `[lo, hi]`, atom excluded.
pub fn lambda_mass(x: &XGrid, lambda: &[f64], lo: f64, hi: f64) -> f64 {
    let f: Vec<f64> = lambda.iter().map(|&l| if l.is_finite() { l } else { 0.0 }).collect();
    integrand_integral(x, &f, lo, hi)
}

/// Converged field together with every diagnostic derived from it.
#[derive(Clone, Debug)]
pub struct SolveResult {
    /// Minimizing field.
    pub field: CoefficientField,
    /// `energy(field).total`.
    pub sigma_estimate: f64,
    /// Pointwise multiplier and atom.
    pub multiplier: MultiplierEstimate,
    /// Discrete multiplier from the optimizer (`NaN` at `x = 0`).
    pub lambda_discrete: Vec<f64>,
    /// `mu_k` table.
    pub mu: MuTable,
    /// Euler-Lagrange residuals.
    pub el: ElResidual,
    /// Largest absolute constraint residual over nodes.
    pub constraint_residual: f64,
    /// Relative tangent-gradient norm.
    pub projected_gradient: f64,
    /// Iterations of the kept start.
    pub iterations: usize,
    /// True when the optimizer met its tolerance.
    pub converged: bool,
    /// Energies of every start.
    pub start_energies: Vec<f64>,
}

#[derive(Serialize)]
struct SolveResultRecord<'a> {
    schema_version: u32,
    field: serde_json::Value,
    sigma_estimate: f64,
    iterations: usize,
    converged: bool,
    projected_gradient: f64,
    constraint_residual: f64,
    lambda: Vec<Option<f64>>,
    lambda_discrete: Vec<Option<f64>>,
    atom: f64,
    atom_per_mode: &'a [(u32, f64)],
    skipped_nodes: &'a [usize],
    mu_modes: &'a [u32],
    mu: Vec<Vec<Option<f64>>>,
    el_residual_per_mode: &'a [f64],
    el_residual: f64,
    boundary_residual: f64,
    start_energies: &'a [f64],
}

fn opt(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl SolveResult {
    /// Builds all diagnostics for a solver output.
    pub fn from_solution(sol: Solution) -> SolveResult {
        let field = sol.field;
        let der = mode_derivatives(&field);
        let multiplier = recover_with(&field, &der);
        let mu = mu_with(&field, &der);
        let el = el_with(&field, &der, &multiplier.lambda, multiplier.atom, X_LO);
        let constraint_residual = field.constraint_residual().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        SolveResult {
            sigma_estimate: field.energy().total,
            field,
            multiplier,
            lambda_discrete: sol.lambda_discrete,
            mu,
            el,
            constraint_residual,
            projected_gradient: sol.tangent_gradient,
            iterations: sol.iterations,
            converged: sol.converged,
            start_energies: sol.start_energies,
        }
    }

    /// JSON with the field embedded in its own schema and masked entries as `null`.
    pub fn to_json(&self) -> Result<String> {
        let n = self.mu.x.len();
        let rec = SolveResultRecord {
            schema_version: 1,
            field: serde_json::from_str(&self.field.to_json()?)?,
            sigma_estimate: self.sigma_estimate,
            iterations: self.iterations,
            converged: self.converged,
            projected_gradient: self.projected_gradient,
            constraint_residual: self.constraint_residual,
            lambda: self.multiplier.lambda.iter().map(|&v| opt(v)).collect(),
            lambda_discrete: self.lambda_discrete.iter().map(|&v| opt(v)).collect(),
            atom: self.multiplier.atom,
            atom_per_mode: &self.multiplier.atom_per_mode,
            skipped_nodes: &self.multiplier.skipped_nodes,
            mu_modes: &self.mu.modes,
            mu: (0..self.mu.modes.len()).map(|j| (0..n).map(|i| self.mu.get(j, i)).collect()).collect(),
            el_residual_per_mode: &self.el.per_mode,
            el_residual: self.el.aggregate,
            boundary_residual: self.el.boundary,
            start_energies: &self.start_energies,
        };
        Ok(serde_json::to_string(&rec)?)
    }
}

/// Minimizes on `freq` and returns the solution with diagnostics.
pub fn solve(freq: &FrequencyGrid, x: &XGrid, opts: &SolveOptions, warm: Option<&CoefficientField>) -> Result<SolveResult> {
    Ok(SolveResult::from_solution(minimize_on(freq, x, opts, warm)?))
}

/// One structural check with its measured value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    /// Short identifier.
    pub name: String,
    /// Pass or fail. Purely reported quantities pass when finite.
    pub passed: bool,
    /// Measured quantity.
    pub measured: f64,
    /// Bound the measurement is compared against, `None` for reports.
    pub bound: Option<f64>,
    /// Human-readable explanation of the measurement.
    pub detail: String,
}

/// Results of [`structural_checks`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    /// Half-period of the checked field.
    #[serde(rename = "L")]
    pub l: f64,
    /// Energy of the checked field.
    pub sigma: f64,
    /// Individual checks in a fixed order.
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    /// True when every item passed.
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|c| c.passed)
    }

    /// Item by name.
    pub fn get(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|c| c.name == name)
    }

    /// JSON text.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per check.
    pub fn to_text(&self) -> String {
        let mut s = format!("structural checks  L = {}  sigma = {:.8}\n", self.l, self.sigma);
        for c in &self.items {
            let status = match (c.bound, c.passed) {
                (None, _) => "REPORT",
                (Some(_), true) => "PASS",
                (Some(_), false) => "FAIL",
            };
            let bound = c.bound.map(|b| format!("{b:.6e}")).unwrap_or_else(|| "-".into());
            s.push_str(&format!(
                "{status:<6} {:<26} measured {:>14.6e}  bound {:>13}  {}\n",
                c.name, c.measured, bound, c.detail
            ));
        }
        s
    }
}

fn item(name: &str, measured: f64, bound: Option<f64>, passed: bool, detail: String) -> CheckItem {
    CheckItem { name: name.into(), passed, measured, bound, detail }
}

fn report(name: &str, measured: f64, detail: String) -> CheckItem {
    item(name, measured, None, measured.is_finite(), detail)
}

/// Dyadic points `2^{-j}` in `[lo, hi]`.
fn dyadic(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = 1.0;
    while t >= lo {
        if t <= hi {
            out.push(t);
        }
        t *= 0.5;
    }
    out
}

/// Runs the structural checks on a solved field.
pub fn structural_checks(res: &SolveResult) -> CheckReport {
    let f = &res.field;
    let xg = f.xgrid();
    let x = xg.nodes();
    let n = x.len();
    let lam = &res.multiplier.lambda;
    let k = f.freq().wavenumbers();
    let mu = &res.mu;
    let mut items = Vec::new();

    let lam_min = lam[1..].iter().filter(|v| v.is_finite()).fold(f64::INFINITY, |m, &v| m.min(v));
    items.push(item("lambda_nonnegative", lam_min, Some(0.0), lam_min >= 0.0, "min lambda(x_i)".into()));
    let atom = res.multiplier.atom;
    items.push(item("atom_nonnegative", atom, Some(0.0), atom >= -1e-8, "mu = lambda({1})".into()));

    let ident = multiplier_identity(xg, lam, atom);
    let rel = (ident - res.sigma_estimate).abs() / res.sigma_estimate;
    items.push(item(
        "multiplier_identity",
        rel,
        Some(0.02),
        rel <= 0.02,
        format!("int 2x lambda + 2 mu = {ident:.6}"),
    ));

    let mut worst = f64::INFINITY;
    let mut parts = Vec::new();
    for x0 in [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0] {
        let m = lambda_mass(xg, lam, x0, 2.0 * x0);
        parts.push(format!("{x0}:{m:.4}"));
        worst = worst.min(m);
    }
    let ln2 = std::f64::consts::LN_2;
    items.push(item("dyadic_lower_bound", worst, Some(ln2 - 0.05), worst >= ln2 - 0.05, parts.join(" ")));

    let mut mu_excess = f64::NEG_INFINITY;
    for j in 0..k.len() {
        let lo = 1.0 / (k[j] * k[j]);
        for i in 1..n {
            if x[i] < lo {
                continue;
            }
            if let Some(v) = mu.get(j, i) {
                mu_excess = mu_excess.max(v.abs() - 1.0);
            }
        }
    }
    let mu_excess = if mu_excess.is_finite() { mu_excess } else { -1.0 };
    items.push(item("mu_bounds", mu_excess, Some(MU_EPS), mu_excess < MU_EPS, "max |mu_k| - 1 on [1/k^2, 1]".into()));

    let mut cross = f64::NEG_INFINITY;
    for jk in 0..k.len() {
        for jm in 0..jk {
            if !(mu.mode_active(jk) && mu.mode_active(jm)) {
                continue;
            }
            let lo = (1.0 / (k[jk] * k[jk])).max(X_LO);
            for i in 1..n - 1 {
                if x[i] < lo {
                    continue;
                }
                if let (Some(a), Some(b)) = (mu.get(jk, i), mu.get(jm, i)) {
                    cross = cross.max(a - b);
                }
            }
        }
    }
    let cross = if cross.is_finite() { cross } else { -1.0 };
    items.push(item("mu_cross_ordering", cross, Some(MU_EPS), cross <= MU_EPS, "max mu_k - mu_m over k > m".into()));

    let amax = f.max_amplitude();
    let kt = 0.5f64.powf(0.25);
    let low = (0..k.len()).filter(|&j| k[j] <= kt).map(|j| f.sup_of_mode(j)).fold(0.0, f64::max) / amax;
    items.push(item("low_modes_vanish", low, Some(1e-8), low <= 1e-8, format!("sup a_k / max a for k <= {kt:.4}")));

    let floor = ACTIVITY_FLOOR * amax;
    let active: Vec<f64> = (0..k.len()).filter(|&j| f.sup_of_mode(j) > floor).map(|j| k[j]).collect();
    let kmin = active.first().copied().unwrap_or(f64::NAN);
    let slack = std::f64::consts::PI / f.l();
    let kb = res.sigma_estimate.sqrt() + slack;
    items.push(item(
        "smallest_active_mode",
        kmin,
        Some(kb),
        kmin <= kb,
        format!("sqrt(sigma) = {:.4} plus grid slack pi/L", res.sigma_estimate.sqrt()),
    ));

    let gap = active.windows(2).map(|w| w[1] / w[0]).fold(1.0, f64::max);
    items.push(report("gap_ratio", gap, format!("{} active modes", active.len())));

    let bdens: Vec<f64> = (0..n)
        .map(|i| (0..k.len()).map(|j| f.row(j)[i].powi(2) * k[j].powi(4)).sum())
        .collect();
    let c2 = dyadic(X_LO, 1.0)
        .into_iter()
        .map(|x0| crate::grid::integrate_pl_range(x, &bdens, 0.0, x0) / x0)
        .fold(0.0, f64::max);
    items.push(report("bending_constant", c2, "max over dyadic x0 of int_0^x0 B / x0".into()));

    let c3 = dyadic(X_LO, 0.5).into_iter().map(|x0| lambda_mass(xg, lam, x0, 2.0 * x0)).fold(0.0, f64::max);
    items.push(report("dyadic_upper_constant", c3, "max over dyadic x0 of lambda([x0, 2x0))".into()));

    let lam_env = (1..n - 1)
        .filter(|&i| x[i] >= X_LO && lam[i].is_finite())
        .map(|i| lam[i] * x[i] / (x[i].ln().abs().powi(3) + 1.0))
        .fold(0.0, f64::max);
    items.push(report("lambda_envelope_constant", lam_env, "max lambda x / (|ln x|^3 + 1)".into()));

    let w = xg.weights();
    let delta = 0.5;
    let mut c4 = 0.0f64;
    for (j, &kj) in k.iter().enumerate() {
        if !mu.mode_active(j) {
            continue;
        }
        let meas: f64 = (1..n).filter(|&i| mu.get(j, i).is_some_and(|v| v >= -1.0 + delta)).map(|i| w[i]).sum();
        let env = (kj.ln().max(0.0) + 1.0) / (delta * kj * kj);
        c4 = c4.max(meas / env);
    }
    items.push(report("decay_constant", c4, format!("Delta = {delta}, |{{mu_k >= -1 + Delta}}| / envelope")));

    CheckReport { l: f.l(), sigma: res.sigma_estimate, items }
}

/// Fitted constant of one regularity moment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityRow {
    /// Moment label.
    pub moment: String,
    /// Envelope in `x`.
    pub envelope: String,
    /// `max moment / envelope` over `[x_lo, 1]`.
    pub constant: f64,
    /// Node where the maximum is attained.
    pub argmax_x: f64,
}

/// Fitted constants of the six regularity moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// Half-period.
    #[serde(rename = "L")]
    pub l: f64,
    /// Lower end of the window.
    pub x_lo: f64,
    /// One row per moment.
    pub rows: Vec<RegularityRow>,
}

impl RegularityReport {
    /// Constants in row order.
    pub fn constants(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.constant).collect()
    }

    /// Plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = format!("regularity constants  L = {}  x in [{}, 1]\n", self.l, self.x_lo);
        for r in &self.rows {
            s.push_str(&format!("{:<8} {:<24} C = {:>12.5e}  at x = {:.4e}\n", r.moment, r.envelope, r.constant, r.argmax_x));
        }
        s
    }
}

/// `y`-averaged moments of the field and its derivatives divided by their
/// envelopes, maximized over `[x_lo, 1]`.
pub fn regularity_report(field: &CoefficientField, x_lo: f64) -> RegularityReport {
    let der = mode_derivatives(field);
    let x = field.xgrid().nodes();
    let n = x.len();
    let k = field.freq().wavenumbers();
    type Env = fn(f64) -> f64;
    let spec: [(&str, &str, Env); 6] = [
        ("u", "x^2 (|ln x| + 1)", |t| t * t * (t.ln().abs() + 1.0)),
        ("u_x", "|ln x| + 1", |t| t.ln().abs() + 1.0),
        ("u_xx", "x^-2 (|ln x|^7 + 1)", |t| (t.ln().abs().powi(7) + 1.0) / (t * t)),
        ("u_xy", "x^-1 (|ln x|^2 + 1)", |t| (t.ln().abs().powi(2) + 1.0) / t),
        ("u_yy", "|ln x| + 1", |t| t.ln().abs() + 1.0),
        ("u_xyy", "x^-2 (|ln x|^3 + 1)", |t| (t.ln().abs().powi(3) + 1.0) / (t * t)),
    ];
    let mut best = [(0.0f64, f64::NAN); 6];
    for i in 0..n {
        if x[i] < x_lo || x[i] == 0.0 {
            continue;
        }
        let mut mom = [0.0; 6];
        for (j, &kj) in k.iter().enumerate() {
            let a = field.row(j)[i];
            let d1 = der.d1[j * n + i];
            let d2 = der.d2[j * n + i];
            let k2 = kj * kj;
            mom[0] += a * a;
            mom[1] += d1 * d1;
            mom[2] += d2 * d2;
            mom[3] += d1 * d1 * k2;
            mom[4] += a * a * k2 * k2;
            mom[5] += d1 * d1 * k2 * k2;
        }
        for (q, (_, _, env)) in spec.iter().enumerate() {
            let r = mom[q] / env(x[i]);
            if best[q].1.is_nan() || r > best[q].0 {
                best[q] = (r, x[i]);
            }
        }
    }
    RegularityReport {
        l: field.l(),
        x_lo,
        rows: spec
            .iter()
            .zip(best)
            .map(|((m, e, _), (c, at))| RegularityRow { moment: (*m).into(), envelope: (*e).into(), constant: c, argmax_x: at })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(k_mode: u32, n: usize) -> CoefficientField {
        let freq = FrequencyGrid::from_modes(1.0, vec![k_mode]).unwrap();
        let x = XGrid::power(n, 2.0).unwrap();
        let k = freq.k(0);
        CoefficientField::from_fn(freq, x, |_, t| (2.0 * t).sqrt() / k).unwrap()
    }

    #[test]
    fn single_mode_multiplier_matches_closed_form() {
        let f = single(2, 2001);
        let k = f.freq().k(0);
        let est = recover_multiplier(&f);
        let x = f.xgrid().nodes();
        for i in (100..x.len()).step_by(97) {
            let exact = k * k + 1.0 / (4.0 * x[i] * x[i] * k * k);
            assert_relative_eq!(est.lambda[i], exact, max_relative = 1e-3);
        }
        let mu = compute_mu(&f);
        for i in (100..x.len()).step_by(97) {
            assert_relative_eq!(mu.get(0, i).unwrap(), 1.0 / (2.0 * x[i] * k * k), max_relative = 1e-3);
        }
        assert_relative_eq!(est.atom, 1.0 / (2.0 * k * k), max_relative = 1e-5);
    }

    #[test]
    fn constant_amplitude_has_zero_mu() {
        let freq = FrequencyGrid::from_modes(1.0, vec![1]).unwrap();
        let x = XGrid::uniform(50).unwrap();
        let f = CoefficientField::from_fn(freq, x, |_, t| if t > 0.0 { 0.3 } else { 0.0 }).unwrap();
        let mu = compute_mu(&f);
        for i in 2..50 {
            assert!(mu.get(0, i).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn zero_modes_have_zero_residual() {
        let freq = FrequencyGrid::from_modes(1.0, vec![1, 2]).unwrap();
        let x = XGrid::power(200, 2.0).unwrap();
        let k = freq.k(1);
        let f = CoefficientField::from_fn(freq, x, |j, t| if j == 1 { (2.0 * t).sqrt() / k } else { 0.0 }).unwrap();
        let est = recover_multiplier(&f);
        let el = el_residual(&f, &est.lambda, est.atom, X_LO);
        assert_eq!(el.per_mode[0], 0.0);
        assert_eq!(el.boundary_per_mode[0], 0.0);
    }

    #[test]
    fn manufactured_residual_shrinks_under_refinement() {
        let r = |n: usize| {
            let f = single(1, n);
            let k = f.freq().k(0);
            let x = f.xgrid().nodes();
            let lam: Vec<f64> = x.iter().map(|&t| k * k + 1.0 / (4.0 * t * t * k * k)).collect();
            el_residual(&f, &lam, 1.0 / (2.0 * k * k), X_LO).aggregate
        };
        let (a, b) = (r(400), r(800));
        assert!(b < 0.3 * a, "{a} {b}");
    }

    #[test]
    fn regularity_vanishes_on_zero_region() {
        let freq = FrequencyGrid::from_modes(1.0, vec![1]).unwrap();
        let x = XGrid::uniform(100).unwrap();
        let f = CoefficientField::from_fn(freq, x, |_, t| if t < 0.5 { t * (0.5 - t) } else { 0.0 }).unwrap();
        let rep = regularity_report(&f, 0.6);
        assert!(rep.constants().iter().all(|&c| c == 0.0));
    }
}
