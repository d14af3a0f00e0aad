//! Spectral operations on uniformly sampled periodic functions of `y`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse FFT plans for one periodic sample count and period.
pub struct PeriodicFft {
    n: usize,
    period: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl PeriodicFft {
    /// Plans transforms of length `n` for functions of the given period.
    pub fn new(n: usize, period: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        PeriodicFft { n, period, fwd, inv }
    }

    /// Sample count.
    pub fn len(&self) -> usize {
        self.n
    }

    /// Always false for a planned transform.
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Angular wavenumber of FFT bin `j`; the Nyquist bin maps to zero.
    fn wavenumber(&self, j: usize) -> f64 {
        let n = self.n;
        let signed = if j <= (n - 1) / 2 {
            j as f64
        } else if 2 * j == n {
            0.0
        } else {
            j as f64 - n as f64
        };
        2.0 * PI * signed / self.period
    }

    fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    /// Spectral derivative of order `order` (1 or 2, or higher).
    pub fn derivative(&self, f: &[f64], order: u32) -> Vec<f64> {
        let mut spec = self.forward(f);
        for (j, c) in spec.iter_mut().enumerate() {
            let k = self.wavenumber(j);
            let ik = Complex64::new(0.0, k);
            *c *= ik.powu(order);
        }
        self.inverse_real(spec)
    }

    /// Antiderivative of the zero-mean part of `f`, normalized to vanish at
    /// the sample `zero_index`. Returns the antiderivative and the removed mean.
    pub fn antiderivative(&self, f: &[f64], zero_index: usize) -> (Vec<f64>, f64) {
        let mut spec = self.forward(f);
        let mean = spec[0].re / self.n as f64;
        spec[0] = Complex64::new(0.0, 0.0);
        for (j, c) in spec.iter_mut().enumerate().skip(1) {
            let k = self.wavenumber(j);
            if k == 0.0 {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c /= Complex64::new(0.0, k);
            }
        }
        let mut g = self.inverse_real(spec);
        let shift = g[zero_index];
        for v in g.iter_mut() {
            *v -= shift;
        }
        (g, mean)
    }

    /// Sum `sum_m c_m sin(omega_m (y_j - y0))` on the sample points via one
    /// inverse transform. `harmonics[m]` is the integer harmonic of the period.
    pub fn sine_series(&self, harmonics: &[u32], coeffs: &[f64], y0_shift: f64) -> Vec<f64> {
        self.trig_series(harmonics, coeffs, y0_shift, false)
    }

    /// Cosine counterpart of [`PeriodicFft::sine_series`].
    pub fn cosine_series(&self, harmonics: &[u32], coeffs: &[f64], y0_shift: f64) -> Vec<f64> {
        self.trig_series(harmonics, coeffs, y0_shift, true)
    }

    /// Trigonometric coefficients of `f` sampled at `y_j = y0 + j * period / n`:
    /// `f(y) = c_0 + sum_h (c_h cos(omega_h y) + s_h sin(omega_h y))` for
    /// harmonics `0 <= h < n / 2`. Returns `(c, s)`; `s_0 = 0`.
    pub fn trig_coefficients(&self, f: &[f64], y0: f64) -> (Vec<f64>, Vec<f64>) {
        let spec = self.forward(f);
        let half = self.n.div_ceil(2);
        let inv = 1.0 / self.n as f64;
        let mut c = vec![0.0; half];
        let mut s = vec![0.0; half];
        c[0] = spec[0].re * inv;
        for h in 1..half {
            let (cr, sr) = (2.0 * spec[h].re * inv, -2.0 * spec[h].im * inv);
            let theta = 2.0 * PI * h as f64 * y0 / self.period;
            let (sn, cs) = theta.sin_cos();
            c[h] = cr * cs - sr * sn;
            s[h] = cr * sn + sr * cs;
        }
        (c, s)
    }

    fn trig_series(&self, harmonics: &[u32], coeffs: &[f64], y0: f64, cosine: bool) -> Vec<f64> {
        // y_j = y0 + j * period / n; the phase shift folds y0 into the coefficient.
        let mut spec = vec![Complex64::new(0.0, 0.0); self.n];
        for (&m, &c) in harmonics.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            let m = m as usize;
            debug_assert!(2 * m < self.n);
            let phase = 2.0 * PI * m as f64 * y0 / self.period;
            spec[m] += Complex64::from_polar(c, phase);
        }
        self.inv.process(&mut spec);
        if cosine {
            spec.iter().map(|z| z.re).collect()
        } else {
            spec.iter().map(|z| z.im).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, period: f64) -> Vec<f64> {
        (0..n).map(|j| -period / 2.0 + period * j as f64 / n as f64).collect()
    }

    #[test]
    fn derivative_and_antiderivative_of_trig_polynomial() {
        let (n, p) = (64, 3.0);
        let fft = PeriodicFft::new(n, p);
        let y = grid(n, p);
        let w = 2.0 * PI / p;
        let f: Vec<f64> = y.iter().map(|t| 0.5 + (3.0 * w * t).cos() - 2.0 * (w * t).sin()).collect();
        let d = fft.derivative(&f, 1);
        for (j, t) in y.iter().enumerate() {
            let exact = -3.0 * w * (3.0 * w * t).sin() - 2.0 * w * (w * t).cos();
            assert_relative_eq!(d[j], exact, epsilon = 1e-11);
        }
        let (g, mean) = fft.antiderivative(&f, n / 2);
        assert_relative_eq!(mean, 0.5, epsilon = 1e-14);
        for (j, t) in y.iter().enumerate() {
            let exact = (3.0 * w * t).sin() / (3.0 * w) + 2.0 * ((w * t).cos() - 1.0) / w;
            assert_relative_eq!(g[j], exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn series_matches_direct_sum() {
        let (n, p) = (32, 2.0);
        let fft = PeriodicFft::new(n, p);
        let y = grid(n, p);
        let s = fft.sine_series(&[1, 5], &[0.3, -1.2], -p / 2.0);
        let c = fft.cosine_series(&[2], &[0.7], -p / 2.0);
        let w = 2.0 * PI / p;
        for (j, t) in y.iter().enumerate() {
            assert_relative_eq!(s[j], 0.3 * (w * t).sin() - 1.2 * (5.0 * w * t).sin(), epsilon = 1e-12);
            assert_relative_eq!(c[j], 0.7 * (2.0 * w * t).cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn trig_coefficients_invert_synthesis() {
        let (n, p) = (32, 5.0);
        let fft = PeriodicFft::new(n, p);
        let y = grid(n, p);
        let w = 2.0 * PI / p;
        let f: Vec<f64> = y.iter().map(|t| 0.25 + 1.5 * (2.0 * w * t).cos() - 0.5 * (3.0 * w * t).sin()).collect();
        let (c, s) = fft.trig_coefficients(&f, -p / 2.0);
        assert_relative_eq!(c[0], 0.25, epsilon = 1e-14);
        assert_relative_eq!(c[2], 1.5, epsilon = 1e-13);
        assert_relative_eq!(s[3], -0.5, epsilon = 1e-13);
        assert!(c[3].abs() < 1e-13 && s[2].abs() < 1e-13 && s[1].abs() < 1e-13);
    }
}
