//! Rescaled Foppl-von Karman energy `E_L` evaluated term by term on tensor
//! grids, the upper-bound deformation assembled from a coefficient field,
//! and the map back to physical variables with a direct evaluator of `E_h`.
//!
//! The x-axis is two SBP blocks, `[-1, 0]` and `[0, 1]`; derivatives in y are
//! spectral. A field may be stored on one period `2L / copies` of a
//! `2L`-periodic function, since every y-average is unchanged by that.

use serde::{Deserialize, Serialize};

use crate::cascade::{smoothstep, Jet};
use crate::error::{Result, WrinkleError};
use crate::fft::PeriodicFft;
use crate::sbp::BlockAxis;
use crate::spectral::CoefficientField;

/// Leading-order energy of the relaxed membrane problem.
pub const E0: f64 = -5.0 / 3.0;

/// Largest tolerated mismatch of a field across one y-period.
pub const PERIODICITY_TOL: f64 = 1e-10;

/// Samples of `(w1, w2, u3)` on `[-1, 1] x [-L/copies, L/copies)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationField {
    /// Half-period `L` of the rescaled domain.
    #[serde(rename = "L")]
    pub l: f64,
    /// Number of stored periods that tile `[-L, L)`.
    pub copies: u32,
    /// x-nodes from -1 to 1.
    pub x: Vec<f64>,
    /// Index of the node `x = 0`.
    pub split: usize,
    /// y-samples per stored period.
    pub ny: usize,
    /// In-plane displacement along x, row-major by x-node.
    pub w1: Vec<f64>,
    /// In-plane displacement along y.
    pub w2: Vec<f64>,
    /// Out-of-plane displacement.
    pub u3: Vec<f64>,
    /// Mismatch of `w1, w2` across one period recorded at construction.
    pub closure_mismatch: f64,
}

/// Terms of `E_L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `int_{-1}^{1} avg (w1_x + L^-2 u3_x^2 / 2 - 1)^2`.
    pub t1a: f64,
    /// The constant `-2`.
    pub t1b: f64,
    /// `int_{-1}^{0} avg (w2_y + u3_y^2 / 2 - x)^2`.
    pub t1c: f64,
    /// Same integrand over `[0, 1]`.
    pub t2: f64,
    /// `L^-2 int avg (L^2 w1_y + w2_x + u3_x u3_y)^2 / 2`.
    pub t3: f64,
    /// `L^-2 int avg (u3_x^2 + u3_yy^2)`.
    pub t4: f64,
    /// `L^-4 int avg (2 u3_xy^2 + L^-2 u3_xx^2)`.
    pub t5: f64,
    /// Sum of the terms.
    pub total: f64,
}

impl EnergyBreakdown {
    /// `L^2 (E_L - E_0)`.
    pub fn excess_scaled(&self, l: f64) -> f64 {
        l * l * (self.total - E0)
    }
}

/// Nodes `-1..1` with `n_half` uniform intervals on each side of `x = 0`.
pub fn uniform_nodes(n_half: usize) -> Vec<f64> {
    (0..=2 * n_half).map(|i| -1.0 + i as f64 / n_half as f64).collect()
}

/// Smooth cutoff `phi(x / delta)`, zero up to `delta / 2` and one from `delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    delta: f64,
}

impl Cutoff {
    /// Cutoff at scale `delta` in `(0, 1)`.
    pub fn new(delta: f64) -> Result<Cutoff> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(WrinkleError::InvalidParameter(format!("cutoff scale must lie in (0, 1), got {delta}")));
        }
        Ok(Cutoff { delta })
    }

    /// Scale.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `(phi, phi', phi'')` at `x`.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        let t = Jet::var(x).scale(1.0 / self.delta);
        let j = smoothstep((t - Jet::constant(0.5)).scale(2.0));
        [j.v, j.d, j.dd]
    }

    /// Value at `x`.
    pub fn value(&self, x: f64) -> f64 {
        self.eval(x)[0]
    }
}

impl DeformationField {
    /// Validating constructor.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        l: f64,
        copies: u32,
        x: Vec<f64>,
        ny: usize,
        w1: Vec<f64>,
        w2: Vec<f64>,
        u3: Vec<f64>,
        closure_mismatch: f64,
    ) -> Result<DeformationField> {
        if !(l > 0.0) || !l.is_finite() || copies == 0 {
            return Err(WrinkleError::InvalidParameter(format!("need L > 0 and copies >= 1, got {l}, {copies}")));
        }
        if ny < 8 || ny % 2 != 0 {
            return Err(WrinkleError::InvalidGrid(format!("ny must be even and at least 8, got {ny}")));
        }
        let split = x
            .iter()
            .position(|&v| v == 0.0)
            .ok_or_else(|| WrinkleError::InvalidGrid("x-nodes must contain 0".into()))?;
        if x.first() != Some(&-1.0) || x.last() != Some(&1.0) {
            return Err(WrinkleError::InvalidGrid("x-nodes must run from -1 to 1".into()));
        }
        let size = x.len() * ny;
        if w1.len() != size || w2.len() != size || u3.len() != size {
            return Err(WrinkleError::GridMismatch(format!("expected {size} samples per component")));
        }
        let d = DeformationField { l, copies, x, split, ny, w1, w2, u3, closure_mismatch };
        d.axis()?;
        Ok(d)
    }

    /// Planar deformation `w = (x, 0)`, `u3 = 0`.
    pub fn planar(l: f64, x: Vec<f64>, ny: usize) -> Result<DeformationField> {
        let w1 = x.iter().flat_map(|&v| std::iter::repeat_n(v, ny)).collect();
        let size = x.len() * ny;
        DeformationField::new(l, 1, x, ny, w1, vec![0.0; size], vec![0.0; size], 0.0)
    }

    /// Zero deformation.
    pub fn zero(l: f64, x: Vec<f64>, ny: usize) -> Result<DeformationField> {
        let size = x.len() * ny;
        DeformationField::new(l, 1, x, ny, vec![0.0; size], vec![0.0; size], vec![0.0; size], 0.0)
    }

    /// Length of the stored y-window.
    pub fn period(&self) -> f64 {
        2.0 * self.l / self.copies as f64
    }

    /// y-samples of the stored window, starting at `-period / 2`.
    pub fn y(&self) -> Vec<f64> {
        let p = self.period();
        (0..self.ny).map(|j| -0.5 * p + p * j as f64 / self.ny as f64).collect()
    }

    /// Two-block x-axis.
    pub fn axis(&self) -> Result<BlockAxis> {
        BlockAxis::new(self.x.clone(), &[self.split])
    }

    /// JSON text.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and revalidates.
    pub fn from_json(text: &str) -> Result<DeformationField> {
        let d: DeformationField = serde_json::from_str(text)?;
        DeformationField::new(d.l, d.copies, d.x, d.ny, d.w1, d.w2, d.u3, d.closure_mismatch)
    }
}

/// Applies `f` to every x-row of a row-major array.
fn map_rows(a: &[f64], ny: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    a.chunks(ny).flat_map(|r| f(r)).collect()
}

/// x-derivative of every column.
fn dx(axis: &BlockAxis, a: &[f64], ny: usize) -> Vec<f64> {
    let nx = a.len() / ny;
    let mut out = vec![0.0; a.len()];
    let mut col = vec![0.0; nx];
    for j in 0..ny {
        for i in 0..nx {
            col[i] = a[i * ny + j];
        }
        for (i, v) in axis.d1(&col).into_iter().enumerate() {
            out[i * ny + j] = v;
        }
    }
    out
}

/// Highest FFT bin carrying more than `1e-12` of the largest coefficient.
fn spectral_extent(a: &[f64], ny: usize) -> usize {
    use rustfft::num_complex::Complex64;
    use rustfft::FftPlanner;
    let fft = FftPlanner::new().plan_fft_forward(ny);
    let mut mags = vec![0.0f64; ny / 2 + 1];
    for r in a.chunks(ny) {
        let mut buf: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.process(&mut buf);
        for (b, m) in mags.iter_mut().enumerate() {
            *m = m.max(buf[b].norm());
        }
    }
    let top = mags.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    mags.iter().rposition(|&m| m > 1e-12 * top).unwrap_or(0)
}

/// Checks that `u3` keeps a Nyquist margin of two and that `w1, w2` stay
/// strictly below the Nyquist bin.
fn check_resolution(d: &DeformationField) -> Result<()> {
    let half = d.ny / 2;
    let bu = spectral_extent(&d.u3, d.ny);
    if 2 * bu > half {
        return Err(WrinkleError::Aliasing { mode: bu as u32, needed: 4 * bu, got: d.ny });
    }
    for a in [&d.w1, &d.w2] {
        let b = spectral_extent(a, d.ny);
        if b >= half {
            return Err(WrinkleError::Aliasing { mode: b as u32, needed: 2 * b + 2, got: d.ny });
        }
    }
    Ok(())
}

fn mean(r: &[f64]) -> f64 {
    r.iter().sum::<f64>() / r.len() as f64
}

/// Evaluates every term of `E_L`.
pub fn evaluate_el(d: &DeformationField) -> Result<EnergyBreakdown> {
    if d.closure_mismatch > PERIODICITY_TOL {
        return Err(WrinkleError::InvalidGrid(format!(
            "field is not periodic in y: mismatch {:.3e}",
            d.closure_mismatch
        )));
    }
    check_resolution(d)?;
    let axis = d.axis()?;
    let ny = d.ny;
    let nx = d.x.len();
    let fft = PeriodicFft::new(ny, d.period());
    let u3y = map_rows(&d.u3, ny, |r| fft.derivative(r, 1));
    let u3yy = map_rows(&d.u3, ny, |r| fft.derivative(r, 2));
    let w1y = map_rows(&d.w1, ny, |r| fft.derivative(r, 1));
    let w2y = map_rows(&d.w2, ny, |r| fft.derivative(r, 1));
    let u3x = dx(&axis, &d.u3, ny);
    let u3xx = dx(&axis, &u3x, ny);
    let u3xy = dx(&axis, &u3y, ny);
    let w1x = dx(&axis, &d.w1, ny);
    let w2x = dx(&axis, &d.w2, ny);
    let l2 = d.l * d.l;
    let mut f1a = vec![0.0; nx];
    let mut fc = vec![0.0; nx];
    let mut f3 = vec![0.0; nx];
    let mut f4 = vec![0.0; nx];
    let mut f5 = vec![0.0; nx];
    for i in 0..nx {
        let x = d.x[i];
        let (mut s1, mut sc, mut s3, mut s4, mut s5) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..ny {
            let idx = i * ny + j;
            let a = w1x[idx] + u3x[idx] * u3x[idx] / (2.0 * l2) - 1.0;
            s1 += a * a;
            let c = w2y[idx] + u3y[idx] * u3y[idx] / 2.0 - x;
            sc += c * c;
            let t = l2 * w1y[idx] + w2x[idx] + u3x[idx] * u3y[idx];
            s3 += t * t;
            s4 += u3x[idx] * u3x[idx] + u3yy[idx] * u3yy[idx];
            s5 += 2.0 * u3xy[idx] * u3xy[idx] + u3xx[idx] * u3xx[idx] / l2;
        }
        let inv = 1.0 / ny as f64;
        f1a[i] = s1 * inv;
        fc[i] = sc * inv;
        f3[i] = s3 * inv;
        f4[i] = s4 * inv;
        f5[i] = s5 * inv;
    }
    let t1a = axis.integrate(&f1a);
    let t1b = -2.0;
    let t1c = axis.integrate_block(0, &fc);
    let t2 = axis.integrate_block(1, &fc);
    let t3 = axis.integrate(&f3) / (2.0 * l2);
    let t4 = axis.integrate(&f4) / l2;
    let t5 = axis.integrate(&f5) / (l2 * l2);
    let total = t1a + t1b + t1c + t2 + t3 + t4 + t5;
    Ok(EnergyBreakdown { t1a, t1b, t1c, t2, t3, t4, t5, total })
}

/// Settings of [`assemble_upper_bound`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    /// y-samples per stored period; defaults to `4 m_max + 4`.
    pub ny: Option<usize>,
    /// Uniform intervals on `[-1, 0]`.
    pub neg_intervals: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { ny: None, neg_intervals: 64 }
    }
}

/// Builds the upper-bound deformation on `L = n L0` from a coefficient field
/// on `L0`: `u3 = phi_delta u`, `w2 = phi_delta^2 (x y - int_0^y u_y^2 / 2)`,
/// `w1 = x - L^-2 int_0^y (w2_x + u3_x u3_y)`, with `u = sqrt(2) sum a_m
/// sin(k_m y)` extended periodically in y and by zero to `x < 0`.
///
/// The y-antiderivatives are spectral and anchored at `y = 0`; the removed
/// means measure the periodicity defect and are recorded. The x-derivatives
/// inside `w1` use the same operators as [`evaluate_el`].
pub fn assemble_upper_bound(
    u: &CoefficientField,
    n: u32,
    delta: f64,
    opts: &AssemblyOptions,
) -> Result<DeformationField> {
    if n == 0 {
        return Err(WrinkleError::InvalidParameter("extension factor must be at least 1".into()));
    }
    let cut = Cutoff::new(delta)?;
    let u = u.prune_zero_modes();
    let l0 = u.l();
    let l = l0 * n as f64;
    let m_max = u.freq().max_mode() as usize;
    let ny = opts.ny.unwrap_or(4 * m_max + 4);
    if ny < 4 * m_max + 2 || ny % 2 != 0 {
        return Err(WrinkleError::Aliasing { mode: m_max as u32, needed: 4 * m_max + 2, got: ny });
    }
    if opts.neg_intervals < 7 {
        return Err(WrinkleError::InvalidGrid("need at least 7 intervals on [-1, 0]".into()));
    }
    let pos = u.xgrid().nodes();
    let mut x: Vec<f64> = (0..opts.neg_intervals).map(|i| -1.0 + i as f64 / opts.neg_intervals as f64).collect();
    let split = x.len();
    x.extend_from_slice(pos);
    let nx = x.len();
    let period = 2.0 * l0;
    let fft = PeriodicFft::new(ny, period);
    let zero_at = ny / 2;
    let harmonics = u.freq().modes().to_vec();
    let mut u3 = vec![0.0; nx * ny];
    let mut w2 = vec![0.0; nx * ny];
    let mut mismatch: f64 = 0.0;
    let mut coeffs = vec![0.0; harmonics.len()];
    for (ip, &xi) in pos.iter().enumerate() {
        let i = split + ip;
        let phi = cut.value(xi);
        if phi == 0.0 {
            continue;
        }
        for (j, c) in coeffs.iter_mut().enumerate() {
            *c = std::f64::consts::SQRT_2 * u.row(j)[ip];
        }
        let row = fft.sine_series(&harmonics, &coeffs, -l0);
        let uy = fft.derivative(&row, 1);
        let g: Vec<f64> = uy.iter().map(|v| xi - v * v / 2.0).collect();
        let (anti, m) = fft.antiderivative(&g, zero_at);
        mismatch = mismatch.max((m * period * phi * phi).abs());
        for j in 0..ny {
            u3[i * ny + j] = phi * row[j];
            w2[i * ny + j] = phi * phi * anti[j];
        }
    }
    let axis = BlockAxis::new(x.clone(), &[split])?;
    let w2x = dx(&axis, &w2, ny);
    let u3x = dx(&axis, &u3, ny);
    let u3y = map_rows(&u3, ny, |r| fft.derivative(r, 1));
    let mut w1 = vec![0.0; nx * ny];
    let l2 = l * l;
    for i in 0..nx {
        let f: Vec<f64> = (0..ny).map(|j| w2x[i * ny + j] + u3x[i * ny + j] * u3y[i * ny + j]).collect();
        let (anti, m) = fft.antiderivative(&f, zero_at);
        mismatch = mismatch.max((m * period / l2).abs());
        for j in 0..ny {
            w1[i * ny + j] = x[i] - anti[j] / l2;
        }
    }
    DeformationField::new(l, n, x, ny, w1, w2, u3, mismatch)
}

/// Deformation in physical variables with `h = L^-2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalDeformation {
    /// Thickness.
    pub h: f64,
    /// Stored periods tiling `[-1, 1)`.
    pub copies: u32,
    /// x-nodes.
    pub x: Vec<f64>,
    /// Index of `x = 0`.
    pub split: usize,
    /// Y-samples per stored period.
    pub ny: usize,
    /// `W1(x, Y) = w1(x, L Y)`.
    pub w1: Vec<f64>,
    /// `W2 = w2 / L`.
    pub w2: Vec<f64>,
    /// `U3 = u3 / L`.
    pub u3: Vec<f64>,
}

/// Undoes the anisotropic rescaling.
pub fn unrescale(d: &DeformationField) -> PhysicalDeformation {
    let inv = 1.0 / d.l;
    PhysicalDeformation {
        h: inv * inv,
        copies: d.copies,
        x: d.x.clone(),
        split: d.split,
        ny: d.ny,
        w1: d.w1.clone(),
        w2: d.w2.iter().map(|v| v * inv).collect(),
        u3: d.u3.iter().map(|v| v * inv).collect(),
    }
}

/// Applies the anisotropic rescaling with `L = h^-1/2`.
pub fn rescale(p: &PhysicalDeformation) -> Result<DeformationField> {
    let l = p.h.powf(-0.5);
    DeformationField::new(
        l,
        p.copies,
        p.x.clone(),
        p.ny,
        p.w1.clone(),
        p.w2.iter().map(|v| v * l).collect(),
        p.u3.iter().map(|v| v * l).collect(),
        0.0,
    )
}

/// Direct evaluation of the physical energy `E_h(W, U3)`, including the
/// dead-load term `-2 avg (W1(1, Y) - W1(-1, Y))`.
pub fn energy_h(p: &PhysicalDeformation) -> Result<f64> {
    let axis = BlockAxis::new(p.x.clone(), &[p.split])?;
    let ny = p.ny;
    let nx = p.x.len();
    let fft = PeriodicFft::new(ny, 2.0 / p.copies as f64);
    let u3y = map_rows(&p.u3, ny, |r| fft.derivative(r, 1));
    let u3yy = map_rows(&p.u3, ny, |r| fft.derivative(r, 2));
    let w1y = map_rows(&p.w1, ny, |r| fft.derivative(r, 1));
    let w2y = map_rows(&p.w2, ny, |r| fft.derivative(r, 1));
    let u3x = dx(&axis, &p.u3, ny);
    let u3xx = dx(&axis, &u3x, ny);
    let u3xy = dx(&axis, &u3y, ny);
    let w1x = dx(&axis, &p.w1, ny);
    let w2x = dx(&axis, &p.w2, ny);
    let h2 = p.h * p.h;
    let mut dens = vec![0.0; nx];
    for i in 0..nx {
        let x = p.x[i];
        let mut s = 0.0;
        for j in 0..ny {
            let idx = i * ny + j;
            let e11 = w1x[idx] + u3x[idx] * u3x[idx] / 2.0;
            let e12 = w1y[idx] + w2x[idx] + u3x[idx] * u3y[idx];
            let e22 = w2y[idx] + u3y[idx] * u3y[idx] / 2.0 - x;
            let bend = u3xx[idx] * u3xx[idx] + 2.0 * u3xy[idx] * u3xy[idx] + u3yy[idx] * u3yy[idx];
            s += e11 * e11 + 0.5 * e12 * e12 + e22 * e22 + h2 * bend;
        }
        dens[i] = s / ny as f64;
    }
    let row = |a: &[f64], i: usize| a[i * ny..(i + 1) * ny].to_vec();
    let load = mean(&row(&p.w1, nx - 1)) - mean(&row(&p.w1, 0));
    Ok(axis.integrate(&dens) - 2.0 * load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::XGrid;
    use crate::spectral::FrequencyGrid;
    use approx::assert_relative_eq;

    #[test]
    fn planar_and_zero_fields_match_closed_forms() {
        let x = uniform_nodes(256);
        let p = evaluate_el(&DeformationField::planar(4.0, x.clone(), 512).unwrap()).unwrap();
        assert_relative_eq!(p.total, -4.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(p.t1c, 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(p.t2, 1.0 / 3.0, epsilon = 1e-12);
        assert!(p.t1a.abs() < 1e-20 && p.t3 == 0.0 && p.t4 == 0.0 && p.t5 == 0.0);
        let z = evaluate_el(&DeformationField::zero(4.0, x, 512).unwrap()).unwrap();
        assert_relative_eq!(z.t1a, 2.0, epsilon = 1e-12);
        assert_relative_eq!(z.total, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn cutoff_profile() {
        for delta in [0.1, 0.01] {
            let c = Cutoff::new(delta).unwrap();
            assert_eq!(c.value(delta / 4.0), 0.0);
            assert_eq!(c.value(2.0 * delta), 1.0);
            let slope = (0..1000).map(|i| c.eval(delta * (0.5 + 0.5 * i as f64 / 999.0))[1]).fold(0.0, f64::max);
            assert_relative_eq!(slope * delta, 3.75, max_relative = 1e-5);
        }
    }

    fn single_mode_field(l0: f64) -> CoefficientField {
        let freq = FrequencyGrid::from_modes(l0, vec![2]).unwrap();
        let x = XGrid::log_linear(200, 1e-4, 2.0).unwrap();
        let k = freq.k(0);
        CoefficientField::from_fn(freq, x, |_, t| (2.0 * t).sqrt() / k).unwrap()
    }

    #[test]
    fn assembled_field_has_vanishing_shear_term_and_consistent_rescaling() {
        let u = single_mode_field(2.0);
        let d = assemble_upper_bound(&u, 4, 1.0 / 8.0, &AssemblyOptions::default()).unwrap();
        assert!(d.closure_mismatch < 1e-12);
        let e = evaluate_el(&d).unwrap();
        assert!(e.t3 < 1e-12, "{}", e.t3);
        assert!(e.t2 <= (1.0f64 / 8.0).powi(3) / 3.0 + 1e-10);
        for (i, &x) in d.x.iter().enumerate() {
            if x <= 1.0 / 32.0 {
                for j in 0..d.ny {
                    assert_eq!(d.u3[i * d.ny + j], 0.0);
                    assert_eq!(d.w2[i * d.ny + j], 0.0);
                    assert!((d.w1[i * d.ny + j] - x).abs() < 1e-15);
                }
            }
        }
        let p = unrescale(&d);
        assert_relative_eq!(energy_h(&p).unwrap(), e.total, max_relative = 1e-10);
        let back = rescale(&p).unwrap();
        for (a, b) in back.u3.iter().zip(&d.u3) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn planar_physical_energy_is_independent_of_h() {
        for l in [2.0, 8.0] {
            let d = DeformationField::planar(l, uniform_nodes(32), 16).unwrap();
            assert_relative_eq!(energy_h(&unrescale(&d)).unwrap(), -4.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn underresolved_fields_are_rejected() {
        let x = uniform_nodes(16);
        let ny = 16;
        let mut d = DeformationField::zero(1.0, x, ny).unwrap();
        let per = d.period();
        for (idx, v) in d.u3.iter_mut().enumerate() {
            let y = -0.5 * per + per * (idx % ny) as f64 / ny as f64;
            *v = (2.0 * std::f64::consts::PI * 6.0 * y / per).sin();
        }
        assert!(matches!(evaluate_el(&d), Err(WrinkleError::Aliasing { .. })));
    }
}
