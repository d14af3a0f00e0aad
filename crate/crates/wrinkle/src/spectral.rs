//! Coefficient fields `a_m(x)` for `u(x, y) = sum_m a_m(x) sin(k_m y)` with
//! `k_m = pi m / L`, the reduced energy, the pointwise constraint and the
//! operations that map admissible fields to admissible fields.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WrinkleError};
use crate::fft::PeriodicFft;
use crate::grid::XGrid;

/// Layout version written to serialized coefficient fields.
pub const SCHEMA_VERSION: u32 = 1;

/// Negative amplitudes above this magnitude are rejected; smaller ones are
/// clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-14;

/// Admissible wavenumbers `k_m = pi m / L` for a sorted set of mode indices.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    l: f64,
    modes: Vec<u32>,
}

impl FrequencyGrid {
    /// Modes `1..=m_cap` on half-period `l`; requires `l >= 1` and
    /// `m_cap >= 2 floor(l)`.
    pub fn dense(l: f64, m_cap: u32) -> Result<Self> {
        check_l(l)?;
        let min = 2 * l.floor() as u32;
        if m_cap < min {
            return Err(WrinkleError::ModeCapTooSmall { required: min, cap: m_cap });
        }
        Ok(FrequencyGrid { l, modes: (1..=m_cap).collect() })
    }

    /// Default cap `2 floor(L) * 2^8`.
    pub fn default_cap(l: f64) -> u32 {
        2 * (l.floor() as u32) * 256
    }

    /// Arbitrary strictly increasing set of positive mode indices.
    pub fn from_modes(l: f64, modes: Vec<u32>) -> Result<Self> {
        check_l(l)?;
        if modes.first() == Some(&0) {
            return Err(WrinkleError::InvalidGrid("mode index 0 is not admissible".into()));
        }
        if modes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(WrinkleError::InvalidGrid("mode indices must be strictly increasing".into()));
        }
        Ok(FrequencyGrid { l, modes })
    }

    /// Half-period `L` of the y-domain.
    pub fn l(&self) -> f64 {
        self.l
    }

    /// Mode indices.
    pub fn modes(&self) -> &[u32] {
        &self.modes
    }

    /// Number of modes.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    /// True when no modes are present.
    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Wavenumber of mode index `m` on this grid.
    pub fn k_of(&self, m: u32) -> f64 {
        PI * m as f64 / self.l
    }

    /// Wavenumber of the `j`-th stored mode.
    pub fn k(&self, j: usize) -> f64 {
        self.k_of(self.modes[j])
    }

    /// All wavenumbers.
    pub fn wavenumbers(&self) -> Vec<f64> {
        self.modes.iter().map(|&m| self.k_of(m)).collect()
    }

    /// Position of mode index `m`, if stored.
    pub fn position(&self, m: u32) -> Option<usize> {
        self.modes.binary_search(&m).ok()
    }

    /// Largest stored mode index (0 when empty).
    pub fn max_mode(&self) -> u32 {
        self.modes.last().copied().unwrap_or(0)
    }

    /// Union with another mode set on the same `L`.
    pub fn union(&self, other: &FrequencyGrid) -> Result<FrequencyGrid> {
        if self.l != other.l {
            return Err(WrinkleError::GridMismatch(format!(
                "frequency grids differ in L: {} vs {}",
                self.l, other.l
            )));
        }
        let mut modes: Vec<u32> = self.modes.iter().chain(&other.modes).copied().collect();
        modes.sort_unstable();
        modes.dedup();
        Ok(FrequencyGrid { l: self.l, modes })
    }
}

fn check_l(l: f64) -> Result<()> {
    if !(l >= 1.0) || !l.is_finite() {
        return Err(WrinkleError::InvalidParameter(format!("L must be finite and >= 1, got {l}")));
    }
    Ok(())
}

/// Energy of a coefficient field with its split and per-node density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    /// `membrane + bending`.
    pub total: f64,
    /// `sum_m int a_m'^2`.
    pub membrane: f64,
    /// `sum_m int a_m^2 k_m^4`.
    pub bending: f64,
    /// Nodal density whose trapezoidal integral equals `total`.
    pub density: Vec<f64>,
}

/// Amplitudes `a[j][i] = a_{m_j}(x_i) >= 0`, stored row-major by mode.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    freq: FrequencyGrid,
    x: XGrid,
    amp: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldRecord {
    schema_version: u32,
    #[serde(rename = "L")]
    l: f64,
    x_nodes: Vec<f64>,
    modes: Vec<u32>,
    amplitudes: Vec<f64>,
}

impl CoefficientField {
    /// Validates amplitudes: finite, `a(0) = 0`, nonnegative after clamping
    /// values above `-1e-14` to zero.
    pub fn new(freq: FrequencyGrid, x: XGrid, mut amp: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if amp.len() != freq.len() * n {
            return Err(WrinkleError::InvalidGrid(format!(
                "amplitude array has {} entries, expected {} x {}",
                amp.len(),
                freq.len(),
                n
            )));
        }
        for (idx, v) in amp.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(WrinkleError::InvalidParameter(format!("non-finite amplitude at flat index {idx}")));
            }
            if *v < 0.0 {
                if *v < -NEGATIVE_CLAMP {
                    return Err(WrinkleError::InvalidParameter(format!(
                        "negative amplitude {v} at mode {} node {}",
                        freq.modes[idx / n],
                        idx % n
                    )));
                }
                *v = 0.0;
            }
            if idx % n == 0 && *v != 0.0 {
                if *v > NEGATIVE_CLAMP {
                    return Err(WrinkleError::InvalidParameter(format!(
                        "amplitude of mode {} does not vanish at x = 0",
                        freq.modes[idx / n]
                    )));
                }
                *v = 0.0;
            }
        }
        Ok(CoefficientField { freq, x, amp })
    }

    /// All-zero field.
    pub fn zeros(freq: FrequencyGrid, x: XGrid) -> Self {
        let amp = vec![0.0; freq.len() * x.len()];
        CoefficientField { freq, x, amp }
    }

    /// Builds a field from a closure `f(j, x) -> a`, evaluated at every node.
    pub fn from_fn(freq: FrequencyGrid, x: XGrid, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let mut amp = Vec::with_capacity(freq.len() * x.len());
        for j in 0..freq.len() {
            for &xi in x.nodes() {
                amp.push(f(j, xi));
            }
        }
        Self::new(freq, x, amp)
    }

    /// Frequency grid.
    pub fn freq(&self) -> &FrequencyGrid {
        &self.freq
    }

    /// x-grid.
    pub fn xgrid(&self) -> &XGrid {
        &self.x
    }

    /// Half-period `L`.
    pub fn l(&self) -> f64 {
        self.freq.l
    }

    /// Flat row-major amplitudes.
    pub fn amplitudes(&self) -> &[f64] {
        &self.amp
    }

    /// Amplitudes of the `j`-th stored mode.
    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.x.len();
        &self.amp[j * n..(j + 1) * n]
    }

    /// Sets every amplitude of mode `j` through a closure on nodes; entries
    /// are clamped to zero from below and the value at `x = 0` is forced to 0.
    pub fn set_row(&mut self, j: usize, values: &[f64]) {
        let n = self.x.len();
        let row = &mut self.amp[j * n..(j + 1) * n];
        for (dst, &v) in row.iter_mut().zip(values) {
            *dst = v.max(0.0);
        }
        row[0] = 0.0;
    }

    /// Largest amplitude over all modes and nodes.
    pub fn max_amplitude(&self) -> f64 {
        self.amp.iter().fold(0.0_f64, |m, &v| m.max(v))
    }

    /// Supremum of mode `j` over the grid.
    pub fn sup_of_mode(&self, j: usize) -> f64 {
        self.row(j).iter().fold(0.0_f64, |m, &v| m.max(v))
    }

    /// Discrete energy: membrane term from piecewise-linear interpolation
    /// (`sum (a_{i+1} - a_i)^2 / h_i`) and bending term with trapezoidal weights.
    pub fn energy(&self) -> EnergySample {
        let n = self.x.len();
        let h = self.x.spacings();
        let w = self.x.weights();
        let mut membrane_cells = vec![0.0; n - 1];
        let mut bending_nodes = vec![0.0; n];
        for j in 0..self.freq.len() {
            let k4 = self.freq.k(j).powi(4);
            let a = self.row(j);
            for i in 0..n - 1 {
                let s = (a[i + 1] - a[i]) / h[i];
                membrane_cells[i] += s * s;
            }
            for i in 0..n {
                bending_nodes[i] += a[i] * a[i] * k4;
            }
        }
        let membrane: f64 = membrane_cells.iter().zip(&h).map(|(s, hi)| s * hi).sum();
        let bending: f64 = bending_nodes.iter().zip(w).map(|(b, wi)| b * wi).sum();
        let mut density = bending_nodes;
        for i in 0..n {
            let left = if i > 0 { membrane_cells[i - 1] * h[i - 1] } else { 0.0 };
            let right = if i < n - 1 { membrane_cells[i] * h[i] } else { 0.0 };
            density[i] += (left + right) / (2.0 * w[i]);
        }
        EnergySample { total: membrane + bending, membrane, bending, density }
    }

    /// Energy of each stored mode.
    pub fn mode_energies(&self) -> Vec<f64> {
        let h = self.x.spacings();
        let w = self.x.weights();
        (0..self.freq.len())
            .map(|j| {
                let k4 = self.freq.k(j).powi(4);
                let a = self.row(j);
                let mem: f64 = a.windows(2).zip(&h).map(|(p, hi)| (p[1] - p[0]).powi(2) / hi).sum();
                let ben: f64 = a.iter().zip(w).map(|(v, wi)| v * v * wi).sum::<f64>() * k4;
                mem + ben
            })
            .collect()
    }

    /// `sum_m a_m^2 k_m^2` at every node.
    pub fn constraint_sum(&self) -> Vec<f64> {
        let n = self.x.len();
        let mut s = vec![0.0; n];
        for j in 0..self.freq.len() {
            let k2 = self.freq.k(j).powi(2);
            for (acc, a) in s.iter_mut().zip(self.row(j)) {
                *acc += a * a * k2;
            }
        }
        s
    }

    /// `r_i = sum_m a_m(x_i)^2 k_m^2 - 2 x_i`.
    pub fn constraint_residual(&self) -> Vec<f64> {
        self.constraint_sum()
            .iter()
            .zip(self.x.nodes())
            .map(|(s, x)| s - 2.0 * x)
            .collect()
    }

    /// Copy of this field on a (possibly larger) mode set containing all of
    /// its modes; new modes are zero.
    pub fn embed(&self, freq: &FrequencyGrid) -> Result<CoefficientField> {
        if freq.l != self.freq.l {
            return Err(WrinkleError::GridMismatch("cannot embed across different L".into()));
        }
        let n = self.x.len();
        let mut amp = vec![0.0; freq.len() * n];
        for (j, &m) in self.freq.modes.iter().enumerate() {
            let t = freq.position(m).ok_or_else(|| {
                WrinkleError::GridMismatch(format!("mode {m} missing from target frequency grid"))
            })?;
            amp[t * n..(t + 1) * n].copy_from_slice(self.row(j));
        }
        Ok(CoefficientField { freq: freq.clone(), x: self.x.clone(), amp })
    }

    /// Drops modes whose amplitude vanishes identically.
    pub fn prune_zero_modes(&self) -> CoefficientField {
        let keep: Vec<usize> = (0..self.freq.len()).filter(|&j| self.sup_of_mode(j) > 0.0).collect();
        let modes = keep.iter().map(|&j| self.freq.modes[j]).collect();
        let mut amp = Vec::with_capacity(keep.len() * self.x.len());
        for &j in &keep {
            amp.extend_from_slice(self.row(j));
        }
        CoefficientField { freq: FrequencyGrid { l: self.freq.l, modes }, x: self.x.clone(), amp }
    }

    /// Pointwise `c_k = sqrt(a_k^2 + b_k^2)` on the union of the mode sets.
    pub fn combine(&self, other: &CoefficientField) -> Result<CoefficientField> {
        if self.x != other.x {
            return Err(WrinkleError::GridMismatch("combine requires identical x-grids".into()));
        }
        let freq = self.freq.union(&other.freq)?;
        let a = self.embed(&freq)?;
        let b = other.embed(&freq)?;
        let amp = a.amp.iter().zip(&b.amp).map(|(u, v)| u.hypot(*v)).collect();
        Ok(CoefficientField { freq, x: self.x.clone(), amp })
    }

    /// Odd symmetrization of a two-sided spectrum: `c_k = sqrt(a_k^2 + a_{-k}^2)`,
    /// where `self` holds the `k > 0` amplitudes and `negative` the `k < 0` ones.
    pub fn symmetrize_odd(&self, negative: &CoefficientField) -> Result<CoefficientField> {
        self.combine(negative)
    }

    /// Samples `u(x, y) = sum_m a_m(x) sin(k_m y)` on `y_j = -L + 2 L j / ny`.
    pub fn synthesize(&self, ny: usize) -> Result<SampledField> {
        let m_max = self.freq.max_mode();
        let needed = 2 * m_max as usize + 1;
        if ny < needed {
            return Err(WrinkleError::Aliasing { mode: m_max, needed, got: ny });
        }
        let l = self.freq.l;
        let fft = PeriodicFft::new(ny, 2.0 * l);
        let nx = self.x.len();
        let mut values = vec![0.0; nx * ny];
        let mut coeffs = vec![0.0; self.freq.len()];
        for i in 0..nx {
            for (j, c) in coeffs.iter_mut().enumerate() {
                *c = self.amp[j * nx + i];
            }
            let row = fft.sine_series(&self.freq.modes, &coeffs, -l);
            values[i * ny..(i + 1) * ny].copy_from_slice(&row);
        }
        let y = (0..ny).map(|j| -l + 2.0 * l * j as f64 / ny as f64).collect();
        Ok(SampledField { l, x: self.x.nodes().to_vec(), y, values })
    }

    /// Anisotropic rescaling `v(x, y) = alpha u(x, y / alpha)`: the field on
    /// `alpha L` with the same mode indices and amplitudes multiplied by alpha.
    /// Membrane energy scales by `alpha^2`, bending by `alpha^-2`.
    pub fn rescale_alpha(&self, alpha: f64) -> Result<CoefficientField> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(WrinkleError::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        let freq = FrequencyGrid::from_modes(alpha * self.freq.l, self.freq.modes.clone())?;
        let amp = self.amp.iter().map(|a| a * alpha).collect();
        Ok(CoefficientField { freq, x: self.x.clone(), amp })
    }

    /// `N`-fold periodic extension: mode `m` on `L` becomes mode `N m` on `N L`.
    pub fn periodic_extend(&self, n: u32) -> Result<CoefficientField> {
        if n == 0 {
            return Err(WrinkleError::InvalidParameter("extension factor must be positive".into()));
        }
        let modes = self
            .freq
            .modes
            .iter()
            .map(|&m| {
                m.checked_mul(n).ok_or(WrinkleError::ModeCapTooSmall { required: u32::MAX, cap: u32::MAX })
            })
            .collect::<Result<Vec<u32>>>()?;
        let freq = FrequencyGrid::from_modes(self.freq.l * n as f64, modes)?;
        Ok(CoefficientField { freq, x: self.x.clone(), amp: self.amp.clone() })
    }

    /// Rescales every column so that `sum a^2 k^2 = 2x` holds exactly where
    /// the column is nonzero; returns the node of the first zero column with
    /// positive target, if any.
    pub fn normalize_columns(&mut self) -> Option<usize> {
        let n = self.x.len();
        let sums = self.constraint_sum();
        let mut first_zero = None;
        for i in 0..n {
            let target = 2.0 * self.x.nodes()[i];
            if i == 0 || target == 0.0 {
                for j in 0..self.freq.len() {
                    self.amp[j * n + i] = 0.0;
                }
                continue;
            }
            if sums[i] <= 0.0 {
                first_zero.get_or_insert(i);
                continue;
            }
            let t = (target / sums[i]).sqrt();
            for j in 0..self.freq.len() {
                self.amp[j * n + i] *= t;
            }
        }
        first_zero
    }

    pub(crate) fn amp_mut(&mut self) -> &mut [f64] {
        &mut self.amp
    }

    /// JSON text in the versioned schema.
    pub fn to_json(&self) -> Result<String> {
        let rec = FieldRecord {
            schema_version: SCHEMA_VERSION,
            l: self.freq.l,
            x_nodes: self.x.nodes().to_vec(),
            modes: self.freq.modes.clone(),
            amplitudes: self.amp.clone(),
        };
        Ok(serde_json::to_string(&rec)?)
    }

    /// Parses the versioned schema and revalidates every invariant.
    pub fn from_json(text: &str) -> Result<CoefficientField> {
        let rec: FieldRecord = serde_json::from_str(text)?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(WrinkleError::Schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                rec.schema_version
            )));
        }
        let freq = FrequencyGrid::from_modes(rec.l, rec.modes)?;
        let x = XGrid::from_nodes(rec.x_nodes)?;
        CoefficientField::new(freq, x, rec.amplitudes)
    }

    /// Writes [`CoefficientField::to_json`] to a file.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Reads a field written by [`CoefficientField::write_json`].
    pub fn read_json(path: &Path) -> Result<CoefficientField> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Samples of a scalar field on an x-node by y-sample tensor grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    /// Half-period of the y-domain.
    pub l: f64,
    /// x-nodes.
    pub x: Vec<f64>,
    /// y-samples covering `[-L, L)`.
    pub y: Vec<f64>,
    /// Values, row-major by x.
    pub values: Vec<f64>,
}

impl SampledField {
    /// Values along the `i`-th x-node.
    pub fn row(&self, i: usize) -> &[f64] {
        let ny = self.y.len();
        &self.values[i * ny..(i + 1) * ny]
    }

    /// `(1/L) int_{-L}^{L} u^2 dy` per x-node by the periodic trapezoid rule.
    pub fn parseval_sums(&self) -> Vec<f64> {
        let ny = self.y.len() as f64;
        (0..self.x.len())
            .map(|i| 2.0 * self.row(i).iter().map(|v| v * v).sum::<f64>() / ny)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_mode(l: f64, m: u32, n: usize) -> CoefficientField {
        let freq = FrequencyGrid::from_modes(l, vec![m]).unwrap();
        let x = XGrid::power(n, 2.0).unwrap();
        let k = freq.k(0);
        CoefficientField::from_fn(freq, x, |_, x| (2.0 * x).sqrt() / k).unwrap()
    }

    #[test]
    fn dense_grid_enforces_minimum_modes() {
        assert!(FrequencyGrid::dense(3.5, 5).is_err());
        assert!(FrequencyGrid::dense(3.5, 6).is_ok());
        assert!(FrequencyGrid::dense(0.5, 6).is_err());
        assert_eq!(FrequencyGrid::default_cap(1.0), 512);
    }

    #[test]
    fn single_mode_is_feasible_and_energy_matches_closed_form() {
        let f = single_mode(1.0, 1, 4000);
        let r = f.constraint_residual();
        assert!(r.iter().all(|v| v.abs() < 1e-14));
        // int_0^1 2x k^2 dx = k^2 for the bending part.
        let e = f.energy();
        assert_relative_eq!(e.bending, PI * PI, max_relative = 1e-5);
        assert_relative_eq!(f.xgrid().integrate(&e.density), e.total, max_relative = 1e-12);
    }

    #[test]
    fn rejects_negative_and_nonzero_origin() {
        let freq = FrequencyGrid::dense(1.0, 2).unwrap();
        let x = XGrid::uniform(2).unwrap();
        assert!(CoefficientField::new(freq.clone(), x.clone(), vec![0.0, -1.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(CoefficientField::new(freq.clone(), x.clone(), vec![0.1, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        let f = CoefficientField::new(freq, x, vec![0.0, -1e-16, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.row(0)[1], 0.0);
    }

    #[test]
    fn combine_orthogonal_modes_adds_constraint_sums() {
        let a = single_mode(1.0, 1, 50);
        let b = single_mode(1.0, 3, 50);
        let c = a.combine(&b).unwrap();
        assert_eq!(c.freq().modes(), &[1, 3]);
        for (s, x) in c.constraint_sum().iter().zip(c.xgrid().nodes()) {
            assert_relative_eq!(*s, 4.0 * x, epsilon = 1e-14);
        }
    }

    #[test]
    fn synthesize_checks_aliasing_and_parseval() {
        let f = single_mode(2.0, 3, 30);
        assert!(matches!(f.synthesize(6), Err(WrinkleError::Aliasing { .. })));
        let s = f.synthesize(7).unwrap();
        let sums = s.parseval_sums();
        for (i, v) in sums.iter().enumerate() {
            assert_relative_eq!(*v, f.row(0)[i].powi(2), epsilon = 1e-13);
        }
    }

    #[test]
    fn rescale_by_two_maps_pi_to_half_pi() {
        let f = single_mode(1.0, 1, 200);
        let g = f.rescale_alpha(2.0).unwrap();
        assert_relative_eq!(g.freq().k(0), PI / 2.0);
        assert_relative_eq!(g.row(0)[100], 2.0 * f.row(0)[100]);
        let (ef, eg) = (f.energy(), g.energy());
        assert_relative_eq!(eg.membrane, 4.0 * ef.membrane, max_relative = 1e-12);
        assert_relative_eq!(eg.bending, ef.bending / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn periodic_extension_preserves_energy() {
        let f = single_mode(1.5, 2, 100);
        let g = f.periodic_extend(3).unwrap();
        assert_eq!(g.freq().modes(), &[6]);
        assert_relative_eq!(g.l(), 4.5);
        assert_relative_eq!(g.energy().total, f.energy().total, max_relative = 1e-14);
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let f = single_mode(1.0, 2, 37).combine(&single_mode(1.0, 5, 37)).unwrap();
        let g = CoefficientField::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, g);
        let bad = f.to_json().unwrap().replace("\"schema_version\":1", "\"schema_version\":9");
        assert!(matches!(CoefficientField::from_json(&bad), Err(WrinkleError::Schema(_))));
    }
}
