//! Repair of an arbitrary periodic field on `[-1, 1]` into a feasible
//! coefficient field on `[0, 1]` with measured energy overhead, and the
//! lower-bound certificate built on it.
//!
//! Steps: shifted mollification of the mode powers, zeroing of modes with
//! `k <= 1/2`, linear ramps on `[0, eta]`, a cascade with threshold
//! `eta^(2/3)` plus one compensating mode `k0` that cover the remaining
//! deficit, and pointwise root-sum-square combination of the parts.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cascade::{build_cascade, smoothstep, Jet};
use crate::error::{Result, WrinkleError};
use crate::fft::PeriodicFft;
use crate::fvk::{evaluate_el, DeformationField, EnergyBreakdown};
use crate::grid::{trapezoid_weights, XGrid};
use crate::spectral::{CoefficientField, FrequencyGrid};

/// Upper end of the admissible mollification scales.
pub fn eta_max() -> f64 {
    PI.powi(-6)
}

/// Default scale `min(L^-1/2, pi^-6 / 2)`.
pub fn default_eta(l: f64) -> f64 {
    l.powf(-0.5).min(0.5 * eta_max())
}

/// Coefficients of `v(x, y) = sqrt(2) sum_m (s_m(x) sin(k_m y) + c_m(x) cos(k_m y))`
/// on nodes spanning `[-1, 1]`, so that `avg v_y^2 = sum (s_m^2 + c_m^2) k_m^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSidedField {
    freq: FrequencyGrid,
    x: Vec<f64>,
    sin: Vec<f64>,
    cos: Vec<f64>,
}

impl TwoSidedField {
    /// Validating constructor; arrays are row-major by mode.
    pub fn new(freq: FrequencyGrid, x: Vec<f64>, sin: Vec<f64>, cos: Vec<f64>) -> Result<TwoSidedField> {
        if x.len() < 3 || x[0] != -1.0 || x[x.len() - 1] != 1.0 || !x.contains(&0.0) {
            return Err(WrinkleError::InvalidGrid("two-sided nodes must run from -1 to 1 through 0".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(WrinkleError::InvalidGrid("two-sided nodes must increase strictly".into()));
        }
        let size = freq.len() * x.len();
        if sin.len() != size || cos.len() != size {
            return Err(WrinkleError::GridMismatch(format!("expected {size} coefficients per family")));
        }
        if sin.iter().chain(&cos).any(|v| !v.is_finite()) {
            return Err(WrinkleError::InvalidParameter("non-finite coefficient".into()));
        }
        Ok(TwoSidedField { freq, x, sin, cos })
    }

    /// One-sided field extended by zero to `[-1, 0]` on `neg_intervals`
    /// uniform cells.
    pub fn from_one_sided(u: &CoefficientField, neg_intervals: usize) -> Result<TwoSidedField> {
        if neg_intervals == 0 {
            return Err(WrinkleError::InvalidGrid("need at least one cell on [-1, 0]".into()));
        }
        let mut x: Vec<f64> = (0..neg_intervals).map(|i| -1.0 + i as f64 / neg_intervals as f64).collect();
        x.extend_from_slice(u.xgrid().nodes());
        let nx = x.len();
        let mut sin = vec![0.0; u.freq().len() * nx];
        for j in 0..u.freq().len() {
            sin[j * nx + neg_intervals..(j + 1) * nx].copy_from_slice(u.row(j));
        }
        let cos = vec![0.0; sin.len()];
        TwoSidedField::new(u.freq().clone(), x, sin, cos)
    }

    /// Fourier projection of the out-of-plane displacement `u3` of a
    /// deformation; coefficients below `1e-13` of the largest are dropped.
    pub fn from_deformation(d: &DeformationField) -> Result<TwoSidedField> {
        let nx = d.x.len();
        let period = d.period();
        let fft = PeriodicFft::new(d.ny, period);
        let half = d.ny.div_ceil(2);
        let mut cs = vec![0.0; nx * half];
        let mut ss = vec![0.0; nx * half];
        for i in 0..nx {
            let (c, s) = fft.trig_coefficients(&d.u3[i * d.ny..(i + 1) * d.ny], -0.5 * period);
            cs[i * half..(i + 1) * half].copy_from_slice(&c);
            ss[i * half..(i + 1) * half].copy_from_slice(&s);
        }
        let top = cs.iter().chain(&ss).fold(0.0f64, |m, v| m.max(v.abs()));
        let keep: Vec<usize> = (1..half)
            .filter(|&h| (0..nx).any(|i| cs[i * half + h].abs().max(ss[i * half + h].abs()) > 1e-13 * top))
            .collect();
        let modes = keep.iter().map(|&h| h as u32 * d.copies).collect();
        let freq = FrequencyGrid::from_modes(d.l, modes)?;
        let mut sin = Vec::with_capacity(keep.len() * nx);
        let mut cos = Vec::with_capacity(keep.len() * nx);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for &h in &keep {
            sin.extend((0..nx).map(|i| ss[i * half + h] * r));
            cos.extend((0..nx).map(|i| cs[i * half + h] * r));
        }
        TwoSidedField::new(freq, d.x.clone(), sin, cos)
    }

    /// Frequency grid.
    pub fn freq(&self) -> &FrequencyGrid {
        &self.freq
    }

    /// Nodes on `[-1, 1]`.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Sine coefficients of mode `j`.
    pub fn sin_row(&self, j: usize) -> &[f64] {
        &self.sin[j * self.x.len()..(j + 1) * self.x.len()]
    }

    /// Cosine coefficients of mode `j`.
    pub fn cos_row(&self, j: usize) -> &[f64] {
        &self.cos[j * self.x.len()..(j + 1) * self.x.len()]
    }

    /// `avg v_y^2 = sum (s^2 + c^2) k^2` at every node.
    pub fn slope_density(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.x.len()];
        for j in 0..self.freq.len() {
            let k2 = self.freq.k(j).powi(2);
            for (i, o) in out.iter_mut().enumerate() {
                let (s, c) = (self.sin_row(j)[i], self.cos_row(j)[i]);
                *o += (s * s + c * c) * k2;
            }
        }
        out
    }

    /// `int_{-1}^{1} sum (a'^2 + a^2 k^4)` over both families, with the same
    /// discretization as [`CoefficientField::energy`].
    pub fn energy(&self) -> f64 {
        let w = trapezoid_weights(&self.x);
        let mut total = 0.0;
        for j in 0..self.freq.len() {
            let k4 = self.freq.k(j).powi(4);
            for row in [self.sin_row(j), self.cos_row(j)] {
                for i in 0..self.x.len() - 1 {
                    total += (row[i + 1] - row[i]).powi(2) / (self.x[i + 1] - self.x[i]);
                }
                total += row.iter().zip(&w).map(|(a, wi)| a * a * wi).sum::<f64>() * k4;
            }
        }
        total
    }
}

/// `L^2 int_{-1}^{1} (avg v_y^2 / 2 - Upsilon)^2` with `Upsilon(x) = x 1_{[0,1]}(x)`.
///
/// Coefficients are piecewise linear, so the integrand is a quartic on every
/// cell and three-point Gauss-Legendre quadrature is exact.
pub fn penalty(v: &TwoSidedField) -> f64 {
    let gl = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
    let k2: Vec<f64> = (0..v.freq.len()).map(|j| v.freq.k(j).powi(2)).collect();
    let mut total = 0.0;
    for i in 0..v.x.len() - 1 {
        let (xa, xb) = (v.x[i], v.x[i + 1]);
        let half = 0.5 * (xb - xa);
        let mid = 0.5 * (xa + xb);
        for &(t, w) in &gl {
            let xq = mid + half * t;
            let lam = (xq - xa) / (xb - xa);
            let mut dens = 0.0;
            for (j, kk) in k2.iter().enumerate() {
                let s = v.sin_row(j);
                let c = v.cos_row(j);
                let sq = s[i] + lam * (s[i + 1] - s[i]);
                let cq = c[i] + lam * (c[i + 1] - c[i]);
                dens += (sq * sq + cq * cq) * kk;
            }
            let target = if xa >= 0.0 { xq } else { 0.0 };
            total += w * half * (0.5 * dens - target).powi(2);
        }
    }
    v.freq.l().powi(2) * total
}

/// Mollifier profile `smoothstep(1 - |t|)`: even, C^2, supported in
/// `(-1, 1)`, with values in `[0, 1]` and unit mass.
pub fn mollifier_profile(t: f64) -> f64 {
    smoothstep(Jet::constant(1.0 - t.abs())).v
}

/// Settings of [`repair`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairOptions {
    /// Mollification scale; `None` selects [`default_eta`].
    pub eta: Option<f64>,
    /// Intervals of the base output grid on `[0, 1]`.
    pub out_intervals: usize,
    /// Simpson panels of the convolution quadrature (even).
    pub quad_panels: usize,
    /// Largest admissible mode index of the compensating mode.
    pub mode_cap: Option<u32>,
}

impl Default for RepairOptions {
    fn default() -> Self {
        RepairOptions { eta: None, out_intervals: 600, quad_panels: 128, mode_cap: None }
    }
}

/// Measured energy accounting of one repair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairBudget {
    /// Half-period.
    #[serde(rename = "L")]
    pub l: f64,
    /// Mollification scale.
    pub eta: f64,
    /// `L^2 int (avg v_y^2 / 2 - Upsilon)^2`.
    pub penalty: f64,
    /// Energy of the input on `[-1, 1]`.
    pub energy_input: f64,
    /// Energy of the mollified field `b` on `[0, 1]`.
    pub energy_mollified: f64,
    /// Energy of the repaired field `g`.
    pub energy_output: f64,
    /// Energy of the ramped parts `c` on `[0, eta]`.
    pub ramp_cost: f64,
    /// Energy of the cascade `e`.
    pub cascade_cost: f64,
    /// Energy of the compensating mode `f`.
    pub compensation_cost: f64,
    /// Largest `sum_{k <= 1/2} b_k^2 k^2` over the output nodes.
    pub low_mode_mass: f64,
    /// Largest deficit `r` on `[eta^(2/3), 1]`; the level of `f_{k0}^2 k0^2`.
    pub deficit_max: f64,
    /// `(deficit_max - 4 eta) L eta^(1/2)`.
    pub c_bar_fit: f64,
    /// Mode index of the compensating wavenumber.
    pub k0_mode: u32,
    /// Compensating wavenumber.
    pub k0: f64,
    /// `energy(c) + energy(d) - energy(g)`; nonnegative by sublinearity.
    pub sublinear_gap: f64,
    /// `energy_output - energy_input - penalty` (signed).
    pub delta_hat: f64,
}

/// Repaired field with its budget.
#[derive(Clone, Debug)]
pub struct RepairOutcome {
    /// Feasible field `g`.
    pub field: CoefficientField,
    /// Accounting.
    pub budget: RepairBudget,
    /// `min_i (sum g^2 k^2 - 2 x_i)`.
    pub feasibility_margin: f64,
}

/// Merges breakpoints into base nodes, dropping base nodes that come too
/// close to a breakpoint.
fn merge_nodes(base: &[f64], extra: &[f64]) -> Vec<f64> {
    let mut all: Vec<(f64, bool)> = base.iter().map(|&x| (x, false)).chain(extra.iter().map(|&x| (x, true))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, bool)> = Vec::with_capacity(all.len());
    for (x, is_extra) in all {
        match out.last_mut() {
            Some(last) if x - last.0 <= 1e-12 * x.max(1e-300) + 1e-15 => {
                let pinned = last.0 == 0.0 || last.0 == 1.0;
                if is_extra && !last.1 && !pinned {
                    *last = (x, true);
                }
            }
            _ => out.push((x, is_extra)),
        }
    }
    out.into_iter().map(|p| p.0).collect()
}

/// Sample positions `x - s_q` and normalized weights of the shifted
/// mollifier `eta^-1 phi((s - 2 eta) / eta)`.
fn mollifier_rule(eta: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = 2.0 / panels as f64;
    let mut rule = Vec::with_capacity(panels + 1);
    for q in 0..=panels {
        let t = -1.0 + q as f64 * h;
        let simpson = if q == 0 || q == panels {
            1.0
        } else if q % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let w = simpson * mollifier_profile(t);
        if w > 0.0 {
            rule.push((2.0 * eta + eta * t, w));
        }
    }
    let mass: f64 = rule.iter().map(|r| r.1).sum();
    rule.iter().map(|&(s, w)| (s, w / mass)).collect()
}

/// Linear interpolation cell and weight of `t` in increasing nodes.
fn locate(x: &[f64], t: f64) -> (usize, f64) {
    let i = x.partition_point(|&v| v <= t).clamp(1, x.len() - 1) - 1;
    (i, (t - x[i]) / (x[i + 1] - x[i]))
}

/// Energy of a coefficient field restricted to the nodes `0..=hi`.
fn prefix_energy(f: &CoefficientField, hi: usize) -> f64 {
    let x = &f.xgrid().nodes()[..=hi];
    let w = trapezoid_weights(x);
    let mut total = 0.0;
    for j in 0..f.freq().len() {
        let a = &f.row(j)[..=hi];
        let k4 = f.freq().k(j).powi(4);
        for i in 0..hi {
            total += (a[i + 1] - a[i]).powi(2) / (x[i + 1] - x[i]);
        }
        total += a.iter().zip(&w).map(|(v, wi)| v * v * wi).sum::<f64>() * k4;
    }
    total
}

/// Transforms `v` into a field `g` on `[0, 1]` with `sum g^2 k^2 >= 2x` at
/// every node and `g(0) = 0`, reporting the energy accounting.
pub fn repair(v: &TwoSidedField, opts: &RepairOptions) -> Result<RepairOutcome> {
    let l = v.freq.l();
    let eta = opts.eta.unwrap_or_else(|| default_eta(l));
    if !(eta > 0.0 && eta < eta_max()) {
        return Err(WrinkleError::InvalidParameter(format!("eta must lie in (0, pi^-6), got {eta}")));
    }
    if opts.quad_panels < 2 || opts.quad_panels % 2 != 0 {
        return Err(WrinkleError::InvalidParameter("quadrature panels must be even and positive".into()));
    }
    let b23 = eta.powf(2.0 / 3.0);
    let k_split = eta.powf(-0.5);
    let m0 = (eta.powf(-1.0 / 6.0) * l / PI - 1e-12).ceil().max(1.0) as u32;
    let k0 = PI * m0 as f64 / l;
    if k0 > 2.0 * eta.powf(-1.0 / 6.0) || opts.mode_cap.is_some_and(|cap| m0 > cap) {
        return Err(WrinkleError::ModeCapTooSmall { required: m0, cap: opts.mode_cap.unwrap_or(0) });
    }

    let kept: Vec<usize> = (0..v.freq.len()).filter(|&j| v.freq.k(j) > 0.5).collect();
    let low: Vec<usize> = (0..v.freq.len()).filter(|&j| v.freq.k(j) <= 0.5).collect();
    let mut extra = vec![eta, 3.0 * eta, b23];
    for &j in &kept {
        let k = v.freq.k(j);
        if k >= k_split {
            extra.push(eta - k.powi(-2));
        }
    }
    extra.retain(|&t| t > 0.0 && t < 1.0);
    let base = XGrid::log_linear(opts.out_intervals, eta / 20.0, 2.0)?;
    let xg = XGrid::from_nodes(merge_nodes(base.nodes(), &extra))?;
    let xs = xg.nodes();
    let n = xs.len();
    let i_eta = xs.iter().position(|&t| t == eta).expect("eta is a node");

    let rule = mollifier_rule(eta, opts.quad_panels);
    let taps: Vec<(usize, f64, f64)> = xs
        .iter()
        .flat_map(|&t| rule.iter().map(move |&(s, w)| (t - s, w)))
        .map(|(p, w)| {
            let (c, lam) = locate(&v.x, p);
            (c, lam, w)
        })
        .collect();
    let mollified = |j: usize| -> Vec<f64> {
        let (s, c) = (v.sin_row(j), v.cos_row(j));
        taps.chunks(rule.len())
            .map(|tap| {
                tap.iter()
                    .map(|&(i, lam, w)| {
                        let a = s[i] + lam * (s[i + 1] - s[i]);
                        let b = c[i] + lam * (c[i + 1] - c[i]);
                        w * (a * a + b * b)
                    })
                    .sum::<f64>()
                    .max(0.0)
                    .sqrt()
            })
            .collect()
    };

    let mut low_mass = vec![0.0; n];
    for &j in &low {
        let k2 = v.freq.k(j).powi(2);
        for (m, b) in low_mass.iter_mut().zip(mollified(j)) {
            *m += b * b * k2;
        }
    }
    let modes: Vec<u32> = kept.iter().map(|&j| v.freq.modes()[j]).collect();
    let cfreq = FrequencyGrid::from_modes(l, modes)?;
    let mut b_amp = Vec::with_capacity(kept.len() * n);
    let mut c_amp = Vec::with_capacity(kept.len() * n);
    let mut b_energy_rows = Vec::with_capacity(kept.len());
    for &j in &kept {
        let k = v.freq.k(j);
        let b = mollified(j);
        let be = b[i_eta];
        let c: Vec<f64> = xs
            .iter()
            .zip(&b)
            .map(|(&t, &bv)| {
                if t >= eta {
                    bv
                } else if k < k_split {
                    t / eta * be
                } else {
                    (k * k * (t - eta) + 1.0).max(0.0) * be
                }
            })
            .collect();
        let mut b0 = b;
        b0[0] = 0.0;
        b_energy_rows.push(b0.clone());
        b_amp.extend(b0);
        c_amp.extend(c);
    }
    let b_field = CoefficientField::new(cfreq.clone(), xg.clone(), b_amp)?;
    let c_field = CoefficientField::new(cfreq, xg.clone(), c_amp)?;

    let csum = c_field.constraint_sum();
    let deficit: Vec<f64> = xs.iter().zip(&csum).map(|(&t, s)| 2.0 * t - s).collect();
    let level = xs
        .iter()
        .zip(&deficit)
        .filter(|(t, _)| **t >= b23)
        .map(|(_, r)| *r)
        .fold(0.0f64, f64::max);

    let e_field = build_cascade(l, b23, &xg, None)?.field;
    let amp0 = level.sqrt() / k0;
    let f_field = CoefficientField::from_fn(FrequencyGrid::from_modes(l, vec![m0])?, xg.clone(), |_, t| {
        (t / b23).min(1.0) * amp0
    })?;
    let d_field = e_field.combine(&f_field)?;
    let g = c_field.combine(&d_field)?;

    let energy_input = v.energy();
    let pen = penalty(v);
    let energy_output = g.energy().total;
    let sublinear_gap = c_field.energy().total + d_field.energy().total - energy_output;
    let margin = g
        .constraint_sum()
        .iter()
        .zip(xs)
        .map(|(s, t)| s - 2.0 * t)
        .fold(f64::INFINITY, f64::min);
    let budget = RepairBudget {
        l,
        eta,
        penalty: pen,
        energy_input,
        energy_mollified: b_field.energy().total,
        energy_output,
        ramp_cost: prefix_energy(&c_field, i_eta),
        cascade_cost: e_field.energy().total,
        compensation_cost: f_field.energy().total,
        low_mode_mass: low_mass.iter().copied().fold(0.0, f64::max),
        deficit_max: level,
        c_bar_fit: (level - 4.0 * eta) * l * eta.sqrt(),
        k0_mode: m0,
        k0,
        sublinear_gap,
        delta_hat: energy_output - energy_input - pen,
    };
    Ok(RepairOutcome { field: g, budget, feasibility_margin: margin })
}

/// Result of [`lower_bound_certificate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Half-period.
    #[serde(rename = "L")]
    pub l: f64,
    /// Terms of `E_L` of the input.
    pub energy: EnergyBreakdown,
    /// `L^2 (E_L - E_0)`.
    pub excess_scaled: f64,
    /// Estimate of `sigma_L` supplied by the caller.
    pub sigma_hat: f64,
    /// Measured overhead of repairing `u3`.
    pub delta_hat: f64,
    /// `excess_scaled + delta_hat - sigma_hat`.
    pub value: f64,
    /// Repair accounting.
    pub budget: RepairBudget,
}

/// `L^2 (E_L(w, u3) - E_0) + delta_hat - sigma_hat`, where `delta_hat` is the
/// measured overhead of repairing `u3`.
pub fn lower_bound_certificate(d: &DeformationField, sigma_hat: f64, opts: &RepairOptions) -> Result<Certificate> {
    let energy = evaluate_el(d)?;
    let v = TwoSidedField::from_deformation(d)?;
    let out = repair(&v, opts)?;
    let excess_scaled = energy.excess_scaled(d.l);
    let delta_hat = out.budget.delta_hat;
    Ok(Certificate {
        l: d.l,
        energy,
        excess_scaled,
        sigma_hat,
        delta_hat,
        value: excess_scaled + delta_hat - sigma_hat,
        budget: out.budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fvk::{assemble_upper_bound, uniform_nodes, AssemblyOptions};
    use approx::assert_relative_eq;

    fn zero_field(l: f64) -> TwoSidedField {
        let freq = FrequencyGrid::from_modes(l, vec![]).unwrap();
        TwoSidedField::new(freq, uniform_nodes(50), vec![], vec![]).unwrap()
    }

    #[test]
    fn penalty_of_zero_field_is_l_squared_over_three() {
        for l in [1.0, 4.0] {
            assert_relative_eq!(penalty(&zero_field(l)), l * l / 3.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn penalty_vanishes_on_feasible_one_sided_fields() {
        let x = XGrid::uniform(64).unwrap();
        let c = build_cascade(2.0, 1.0, &x, None).unwrap();
        let v = TwoSidedField::from_one_sided(&c.field, 16).unwrap();
        // The cascade's power is exact at nodes but not between them.
        assert!(penalty(&v) < 1e-3, "{}", penalty(&v));
        let dens = v.slope_density();
        for (t, s) in v.x().iter().zip(dens) {
            assert!((s - 2.0 * t.max(0.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn mollifier_profile_has_unit_mass_and_bounded_values() {
        let n = 20000;
        let mass: f64 = (0..n).map(|i| mollifier_profile(-1.0 + (i as f64 + 0.5) * 2.0 / n as f64)).sum::<f64>() * 2.0 / n as f64;
        assert_relative_eq!(mass, 1.0, epsilon = 1e-8);
        assert_eq!(mollifier_profile(0.0), 1.0);
        assert_eq!(mollifier_profile(1.0), 0.0);
        assert_eq!(mollifier_profile(-0.3), mollifier_profile(0.3));
    }

    #[test]
    fn rejects_inadmissible_eta() {
        let v = zero_field(4.0);
        let opts = RepairOptions { eta: Some(eta_max()), ..Default::default() };
        assert!(matches!(repair(&v, &opts), Err(WrinkleError::InvalidParameter(_))));
        let opts = RepairOptions { mode_cap: Some(2), ..Default::default() };
        assert!(matches!(repair(&v, &opts), Err(WrinkleError::ModeCapTooSmall { .. })));
    }

    #[test]
    fn scaled_cascade_is_repaired_into_a_feasible_field() {
        let x = XGrid::log_linear(300, 1e-4, 2.0).unwrap();
        let c = build_cascade(4.0, 1.0, &x, None).unwrap();
        let mut u = c.field.clone();
        for j in 0..u.freq().len() {
            let r: Vec<f64> = u.row(j).iter().map(|a| 0.9 * a).collect();
            u.set_row(j, &r);
        }
        let v = TwoSidedField::from_one_sided(&u, 32).unwrap();
        let out = repair(&v, &RepairOptions::default()).unwrap();
        assert!(out.feasibility_margin >= -1e-10, "{}", out.feasibility_margin);
        for j in 0..out.field.freq().len() {
            assert_eq!(out.field.row(j)[0], 0.0);
        }
        let b = &out.budget;
        assert!(b.sublinear_gap >= -1e-10);
        assert!(b.ramp_cost >= 0.0 && b.cascade_cost >= 0.0 && b.compensation_cost >= 0.0);
        assert!(b.energy_output <= b.energy_input + b.penalty + b.delta_hat + 1e-9);
    }

    #[test]
    fn planar_deformation_certificate_is_large_and_positive() {
        let d = DeformationField::planar(8.0, uniform_nodes(32), 16).unwrap();
        let cert = lower_bound_certificate(&d, 4.0, &RepairOptions::default()).unwrap();
        assert_relative_eq!(cert.excess_scaled, 64.0 / 3.0, max_relative = 1e-12);
        assert!(cert.value > 1.0, "{}", cert.value);
    }

    #[test]
    fn deformation_projection_recovers_the_assembled_modes() {
        let freq = FrequencyGrid::from_modes(2.0, vec![2, 3]).unwrap();
        let xg = XGrid::log_linear(100, 1e-3, 2.0).unwrap();
        let u = CoefficientField::from_fn(freq, xg, |j, t| t.sqrt() / (2.0 + j as f64)).unwrap();
        let d = assemble_upper_bound(&u, 2, 0.25, &AssemblyOptions::default()).unwrap();
        let v = TwoSidedField::from_deformation(&d).unwrap();
        assert_eq!(v.freq().modes(), &[4, 6]);
        let i = d.x.len() - 1;
        assert_relative_eq!(v.sin_row(0)[i], u.row(0)[u.xgrid().len() - 1], max_relative = 1e-12);
        assert!(v.cos_row(1)[i].abs() < 1e-12);
    }
}
