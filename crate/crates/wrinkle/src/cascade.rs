//! Self-similar dyadic cascade: an explicit admissible field whose octave
//! `n` oscillates at `k_n = 2^n P` with amplitude `P^-1 4^-n f(4^n x)`.

use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Result, WrinkleError};
use crate::grid::XGrid;
use crate::spectral::{CoefficientField, FrequencyGrid};

/// Value with first and second derivative, propagated by the chain rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    /// Value.
    pub v: f64,
    /// First derivative.
    pub d: f64,
    /// Second derivative.
    pub dd: f64,
}

impl Jet {
    /// Constant.
    pub fn constant(v: f64) -> Jet {
        Jet { v, d: 0.0, dd: 0.0 }
    }

    /// Independent variable.
    pub fn var(v: f64) -> Jet {
        Jet { v, d: 1.0, dd: 0.0 }
    }

    /// Applies a scalar function given its value and two derivatives.
    pub fn compose(self, f: f64, df: f64, ddf: f64) -> Jet {
        Jet { v: f, d: df * self.d, dd: ddf * self.d * self.d + df * self.dd }
    }

    /// Square root (requires a positive value).
    pub fn sqrt(self) -> Jet {
        let s = self.v.sqrt();
        self.compose(s, 0.5 / s, -0.25 / (s * self.v))
    }

    /// Multiplication by a scalar.
    pub fn scale(self, c: f64) -> Jet {
        Jet { v: c * self.v, d: c * self.d, dd: c * self.dd }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, d: self.d + o.d, dd: self.dd + o.dd }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, d: self.d - o.d, dd: self.dd - o.dd }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self.v * o.v, d: self.d * o.v + self.v * o.d, dd: self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let inv = o.compose(1.0 / o.v, -1.0 / (o.v * o.v), 2.0 / (o.v * o.v * o.v));
        self * inv
    }
}

/// Quintic smoothstep `10u^3 - 15u^4 + 6u^5` on `[0, 1]`, clamped outside.
/// Its first and second derivatives vanish at both ends.
pub fn smoothstep(u: Jet) -> Jet {
    if u.v <= 0.0 {
        return Jet::constant(0.0);
    }
    if u.v >= 1.0 {
        return Jet::constant(1.0);
    }
    let x = u.v;
    let f = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
    let df = 30.0 * x * x * (1.0 - x) * (1.0 - x);
    let ddf = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
    u.compose(f, df, ddf)
}

/// C^2 plateau: 1 on `[1/2, 2]`, 0 outside `(1/4, 4)`.
pub fn plateau(t: Jet) -> Jet {
    let x = t.v;
    if x <= 0.25 || x >= 4.0 {
        Jet::constant(0.0)
    } else if x < 0.5 {
        smoothstep((t - Jet::constant(0.25)).scale(4.0))
    } else if x <= 2.0 {
        Jet::constant(1.0)
    } else {
        smoothstep((Jet::constant(4.0) - t).scale(0.5))
    }
}

/// Partition function with `phi(t)^2 + phi(4t)^2 = 2` on `[1/4, 1]`,
/// supported in `[1/4, 4]`.
pub fn partition(t: Jet) -> Jet {
    let x = t.v;
    if x <= 0.25 || x >= 4.0 {
        return Jet::constant(0.0);
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let own = plateau(t);
    let partner = if x <= 1.0 { plateau(t.scale(4.0)) } else { plateau(t.scale(0.25)) };
    let denom = (own * own + partner * partner).sqrt();
    (own / denom).scale(sqrt2)
}

/// Octave profile `f(t) = sqrt(t) phi(t)`: C^2, supported in `[1/4, 4]`,
/// with `f(t)^2 + f(4t)^2 / 4 = 2t` on `[1/4, 1]`.
pub fn profile(t: Jet) -> Jet {
    if t.v <= 0.25 || t.v >= 4.0 {
        return Jet::constant(0.0);
    }
    t.sqrt() * partition(t)
}

/// `(f, f', f'')` at a point.
pub fn profile_at(t: f64) -> [f64; 3] {
    let j = profile(Jet::var(t));
    [j.v, j.d, j.dd]
}

/// Largest deviation of `f(t)^2 + f(4t)^2 / 4 - 2t` over `samples` equispaced
/// points of `[1/4, 1]`.
pub fn profile_identity_residual(samples: usize) -> f64 {
    (0..samples)
        .map(|i| {
            let t = 0.25 + 0.75 * i as f64 / (samples - 1) as f64;
            let a = profile_at(t)[0];
            let b = profile_at(4.0 * t)[0];
            (a * a + 0.25 * b * b - 2.0 * t).abs()
        })
        .fold(0.0, f64::max)
}

/// Cascade field together with the data needed to evaluate it analytically.
#[derive(Clone, Debug)]
pub struct Cascade {
    /// Sampled field on the requested grid; one stored mode per octave.
    pub field: CoefficientField,
    /// Base wavenumber `P = pi floor(L) / L`.
    pub p: f64,
    /// Requested exactness threshold `b`.
    pub b: f64,
    /// First octave.
    pub n0: u32,
    /// Last octave actually present.
    pub n_top: u32,
    /// Last octave needed to resolve the first positive node.
    pub n_needed: u32,
    /// The constraint holds exactly for `x` in `[exact_from, b]`.
    pub exact_from: f64,
}

/// Bound on one weighted moment of the cascade.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentBound {
    /// Number of x-derivatives.
    pub alpha: u32,
    /// Number of y-derivatives.
    pub beta: u32,
    /// `max_x sum_n (d^alpha a_n)^2 k_n^(2 beta) / x^(2 - 2 alpha - beta)`.
    pub max_ratio: f64,
}

/// Builds the cascade on `L` that satisfies the constraint exactly on
/// `[0, b]` down to the grid resolution. `mode_cap` bounds the admissible
/// mode index; octaves beyond it are dropped and reported through
/// [`Cascade::n_top`] and [`Cascade::exact_from`].
pub fn build_cascade(l: f64, b: f64, x: &XGrid, mode_cap: Option<u32>) -> Result<Cascade> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(WrinkleError::InvalidParameter(format!("cascade threshold b must lie in (0, 1], got {b}")));
    }
    if !(l >= 1.0) || !l.is_finite() {
        return Err(WrinkleError::InvalidParameter(format!("L must be finite and >= 1, got {l}")));
    }
    let fl = l.floor();
    let p = std::f64::consts::PI * fl / l;
    let mut n0 = 0u32;
    while 4f64.powi(n0 as i32 + 1) * b <= 1.0 {
        n0 += 1;
    }
    let x1 = x.first_positive();
    let mut n_needed = n0;
    while 4f64.powi(-(n_needed as i32)) >= x1 {
        n_needed += 1;
    }
    let mode_of = |n: u32| -> Option<u32> { 2u32.checked_pow(n).and_then(|v| v.checked_mul(fl as u32)) };
    let cap = mode_cap.unwrap_or(u32::MAX);
    let required = mode_of(n_needed).unwrap_or(u32::MAX);
    match mode_of(n0) {
        Some(m) if m <= cap => {}
        _ => return Err(WrinkleError::ModeCapTooSmall { required, cap }),
    }
    let mut n_top = n0;
    while n_top < n_needed && matches!(mode_of(n_top + 1), Some(m) if m <= cap) {
        n_top += 1;
    }
    let modes: Vec<u32> = (n0..=n_top).map(|n| mode_of(n).expect("checked above")).collect();
    let freq = FrequencyGrid::from_modes(l, modes)?;
    let field = CoefficientField::from_fn(freq, x.clone(), |j, xi| {
        let n = n0 + j as u32;
        let s = 4f64.powi(n as i32);
        profile_at(s * xi)[0] / (p * s)
    })?;
    let exact_from = if n_top == n_needed { 0.0 } else { 4f64.powi(-(n_top as i32)) };
    Ok(Cascade { field, p, b, n0, n_top, n_needed, exact_from })
}

impl Cascade {
    /// Wavenumber of octave `n`.
    pub fn wavenumber(&self, n: u32) -> f64 {
        2f64.powi(n as i32) * self.p
    }

    /// `(a, a', a'')` of octave `n` at `x`, evaluated analytically.
    pub fn octave_amplitude(&self, n: u32, x: f64) -> [f64; 3] {
        let s = 4f64.powi(n as i32);
        let [f, df, ddf] = profile_at(s * x);
        [f / (self.p * s), df / self.p, ddf * s / self.p]
    }

    /// True when octaves were dropped because of the mode cap.
    pub fn truncated(&self) -> bool {
        self.n_top < self.n_needed
    }

    /// Largest `|sum a^2 k^2 - 2x|` over nodes in `[exact_from, b]`.
    pub fn resolved_residual(&self) -> f64 {
        let r = self.field.constraint_residual();
        self.field
            .xgrid()
            .nodes()
            .iter()
            .zip(&r)
            .filter(|(x, _)| **x >= self.exact_from && **x <= self.b)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }
}

/// Weighted moments `sum_n (d^alpha a_n)^2 k_n^(2 beta)` divided by the
/// predicted power `x^(2 - 2 alpha - beta)`, maximized over positive nodes.
pub fn verify_cascade_bounds(c: &Cascade) -> Vec<MomentBound> {
    const PAIRS: [(u32, u32); 6] = [(0, 0), (1, 0), (0, 2), (1, 1), (2, 0), (1, 2)];
    PAIRS
        .iter()
        .map(|&(alpha, beta)| {
            let max_ratio = c
                .field
                .xgrid()
                .nodes()
                .iter()
                .filter(|&&x| x > 0.0)
                .map(|&x| {
                    let moment: f64 = (c.n0..=c.n_top)
                        .map(|n| {
                            let d = c.octave_amplitude(n, x)[alpha as usize];
                            d * d * c.wavenumber(n).powi(2 * beta as i32)
                        })
                        .sum();
                    moment / x.powi(2 - 2 * alpha as i32 - beta as i32)
                })
                .fold(0.0, f64::max);
            MomentBound { alpha, beta, max_ratio }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn profile_reference_values() {
        assert_relative_eq!(profile_at(0.5)[0], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(profile_at(0.125)[0], 0.0);
        assert_eq!(profile_at(4.0)[0], 0.0);
        assert!(profile_identity_residual(10_000) < 1e-12);
    }

    #[test]
    fn jet_derivatives_match_finite_differences() {
        for &t in &[0.3, 0.45, 0.9, 1.7, 2.6, 3.4] {
            let h = 1e-5;
            let [_, d, dd] = profile_at(t);
            let fp = profile_at(t + h)[0];
            let fm = profile_at(t - h)[0];
            let f0 = profile_at(t)[0];
            assert_relative_eq!(d, (fp - fm) / (2.0 * h), epsilon = 1e-7, max_relative = 1e-6);
            assert_relative_eq!(dd, (fp - 2.0 * f0 + fm) / (h * h), epsilon = 1e-3, max_relative = 1e-3);
        }
    }

    #[test]
    fn unit_threshold_starts_at_octave_zero() {
        let x = XGrid::power(400, 2.0).unwrap();
        let c = build_cascade(1.0, 1.0, &x, None).unwrap();
        assert_eq!(c.n0, 0);
        assert!(!c.truncated());
        assert!(c.resolved_residual() < 1e-10);
    }

    #[test]
    fn quarter_threshold_vanishes_at_one() {
        let x = XGrid::power(100, 2.0).unwrap();
        let c = build_cascade(1.0, 0.25, &x, None).unwrap();
        let n = c.field.xgrid().len();
        for j in 0..c.field.freq().len() {
            assert_eq!(c.field.row(j)[n - 1], 0.0);
        }
    }

    #[test]
    fn small_cap_is_an_error_carrying_the_requirement() {
        let x = XGrid::power(100, 2.0).unwrap();
        match build_cascade(2.0, 1.0 / 64.0, &x, Some(4)) {
            Err(WrinkleError::ModeCapTooSmall { required, cap }) => {
                assert_eq!(cap, 4);
                assert!(required > 4);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn self_similarity_between_octaves() {
        let x = XGrid::power(50, 2.0).unwrap();
        let c = build_cascade(3.0, 1.0, &x, None).unwrap();
        for &t in &[0.1, 0.3, 0.55, 0.8] {
            let next = c.octave_amplitude(3, t / 4.0)[0];
            let here = c.octave_amplitude(2, t)[0];
            assert_relative_eq!(next, 0.25 * here, epsilon = 1e-15);
        }
    }

    #[test]
    fn cascade_energies_comparable_across_l() {
        let x = XGrid::power(600, 2.0).unwrap();
        let e: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&l| build_cascade(l, 1.0, &x, None).unwrap().field.energy().total)
            .collect();
        let (lo, hi) = e.iter().fold((f64::MAX, 0.0_f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo <= 2.0, "{e:?}");
    }

    #[test]
    fn moment_bounds_are_finite() {
        let x = XGrid::power(300, 2.0).unwrap();
        let c = build_cascade(1.0, 1.0, &x, None).unwrap();
        let b = verify_cascade_bounds(&c);
        assert_eq!(b.len(), 6);
        assert!(b.iter().all(|m| m.max_ratio.is_finite() && m.max_ratio > 0.0));
    }
}
