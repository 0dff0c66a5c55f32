//! Integer-order Bessel functions of real positive argument.
//!
//! `J_n` comes from Miller's backward recurrence normalised with
//! `J₀ + 2 Σ J₂ₖ = 1`. `Y₀` and `Y₁` are Neumann series over the same `J`
//! values, and higher `Y_n` follow by forward recurrence, which is stable
//! for the second kind.

use std::f64::consts::{FRAC_2_PI, PI};

use num_complex::Complex64;
use thiserror::Error;

/// Largest order accepted by [`cylinder_functions`].
pub const MAX_ORDER: i32 = 64;
/// Largest argument accepted by [`cylinder_functions`].
pub const MAX_ARGUMENT: f64 = 200.0;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const RESCALE_ABOVE: f64 = 1e250;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BesselError {
    #[error("argument must lie in (0, {MAX_ARGUMENT}], got {0}")]
    Argument(f64),
    #[error("order {0} outside the supported range |m| <= {MAX_ORDER}")]
    Order(i32),
}

/// `(J_m(x), Y_m(x))` for `|m| <= 64`, `0 < x <= 200`.
pub fn cylinder_functions(order: i32, x: f64) -> Result<(f64, f64), BesselError> {
    if !(x > 0.0 && x <= MAX_ARGUMENT) {
        return Err(BesselError::Argument(x));
    }
    if order.abs() > MAX_ORDER {
        return Err(BesselError::Order(order));
    }
    let table = BesselTable::new(order.unsigned_abs() as usize, x);
    Ok((table.j(order), table.y(order)))
}

/// `J_n(x)` for `n = 0..=N`, by normalised backward recurrence.
pub fn bessel_j_upto(max_order: usize, x: f64) -> Vec<f64> {
    assert!(x > 0.0, "bessel_j_upto needs x > 0");
    let top = (max_order as f64).max(x);
    let mut start = top.ceil() as usize + 30 + (40.0 * top).sqrt().ceil() as usize;
    start += start % 2;

    let mut out = vec![0.0; max_order + 1];
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-300; // J_k, arbitrary seed
    let mut norm = 0.0;
    let two_over_x = 2.0 / x;
    for k in (1..=start).rev() {
        let prev = k as f64 * two_over_x * cur - next; // J_{k-1}
        next = cur;
        cur = prev;
        let order = k - 1;
        if order <= max_order {
            out[order] = cur;
        }
        if order % 2 == 0 && order > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > RESCALE_ABOVE {
            cur /= RESCALE_ABOVE;
            next /= RESCALE_ABOVE;
            norm /= RESCALE_ABOVE;
            for v in out.iter_mut() {
                *v /= RESCALE_ABOVE;
            }
        }
    }
    norm += cur; // J_0
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Tabulated `J_n(x)` and `Y_n(x)` for `n = 0..=N` at one argument.
#[derive(Debug, Clone)]
pub struct BesselTable {
    pub x: f64,
    j: Vec<f64>,
    y: Vec<f64>,
}

impl BesselTable {
    pub fn new(max_order: usize, x: f64) -> Self {
        // The Neumann series need J up to where the terms vanish.
        let series_len = max_order.max(x.ceil() as usize + 40 + (40.0 * x).sqrt() as usize);
        let j = bessel_j_upto(series_len + 2, x);

        let log_term = (0.5 * x).ln() + EULER_GAMMA;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut k = 1;
        while 2 * k + 1 < j.len() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let kf = k as f64;
            s0 += sign * j[2 * k] / kf;
            s1 += sign * (2.0 * kf + 1.0) * j[2 * k + 1] / (kf * (kf + 1.0));
            k += 1;
        }
        let y0 = FRAC_2_PI * log_term * j[0] - 2.0 * FRAC_2_PI * s0;
        // ψ(2) = 1 − γ
        let y1 = -FRAC_2_PI / x * j[0] + FRAC_2_PI * (log_term - 1.0) * j[1] - FRAC_2_PI * s1;

        let mut y = Vec::with_capacity(max_order + 2);
        y.push(y0);
        y.push(y1);
        for n in 1..max_order {
            let next = 2.0 * n as f64 / x * y[n] - y[n - 1];
            y.push(next);
        }
        y.truncate(max_order + 1);
        let mut j = j;
        j.truncate(max_order + 1);
        Self { x, j, y }
    }

    pub fn max_order(&self) -> usize {
        self.j.len() - 1
    }

    fn reflect(order: i32, v: f64) -> f64 {
        if order < 0 && order % 2 != 0 {
            -v
        } else {
            v
        }
    }

    pub fn j(&self, order: i32) -> f64 {
        Self::reflect(order, self.j[order.unsigned_abs() as usize])
    }

    pub fn y(&self, order: i32) -> f64 {
        Self::reflect(order, self.y[order.unsigned_abs() as usize])
    }

    /// Hankel function of the first kind, `J + iY`.
    pub fn h(&self, order: i32) -> Complex64 {
        Complex64::new(self.j(order), self.y(order))
    }

    /// `J'_m`, needs `|m| + 1 <= max_order`.
    pub fn dj(&self, order: i32) -> f64 {
        0.5 * (self.j(order - 1) - self.j(order + 1))
    }

    pub fn dy(&self, order: i32) -> f64 {
        0.5 * (self.y(order - 1) - self.y(order + 1))
    }

    pub fn dh(&self, order: i32) -> Complex64 {
        Complex64::new(self.dj(order), self.dy(order))
    }
}

/// `J₁(x)`, including `x <= 0` via odd symmetry.
pub fn bessel_j1(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x < 0.0 {
        -bessel_j_upto(1, -x)[1]
    } else {
        bessel_j_upto(1, x)[1]
    }
}

/// Wronskian value `2/(πx)` for `J_m Y'_m − J'_m Y_m`.
pub fn wronskian(x: f64) -> f64 {
    2.0 / (PI * x)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // (m, x, J_m(x), Y_m(x)) from 30-digit arbitrary-precision evaluation.
    const REFERENCE: &[(i32, f64, f64, f64)] = &[
        (0, 1.0, 0.76519768655796655145, 0.088256964215676957983),
        (0, 1e-3, 0.999999750000015625, -4.4714166113759232557),
        (1, 0.5, 0.24226845767487388638, -1.4714723926702430692),
        (1, 2.5, 0.49709410246427403801, 0.14591813796678579888),
        (2, 10.0, 0.25463031368512062253, -0.0058680824422086146398),
        (5, 0.3, 6.3044326337710711158e-7, -101169.65735231196634),
        (7, 33.0, -0.14042312640612245953, 0.004361803656535497976),
        (10, 1.26, 2.6178736446597232533e-9, -12257821.436549058706),
        (20, 50.0, -0.11670435275957973734, 0.01644263394811577765),
        (40, 120.0, 0.07208864699736571712, 0.020738937536620077196),
        (64, 200.0, -0.034059764963014577214, 0.046900697548580260805),
        (3, 199.5, 0.041157455967513961865, -0.038697431333456956284),
        (0, 75.25, 0.054597053878819484373, -0.074020527080117712495),
        (1, 150.0, -0.065145163657727360305, 0.0005569563495608399837),
        (64, 10.0, 2.9049360287291092641e-45, -1.7334136710387011132e+42),
        (12, 0.05, 1.2442918610591769438e-28, -2.1318194348924300044e+26),
    ];

    #[test]
    fn matches_reference_table() {
        for &(m, x, j_ref, y_ref) in REFERENCE {
            let (j, y) = cylinder_functions(m, x).unwrap();
            assert!((j - j_ref).abs() < 1e-10 * j_ref.abs().max(1.0), "J_{m}({x}) = {j}");
            assert!((y - y_ref).abs() < 1e-10 * y_ref.abs().max(1.0), "Y_{m}({x}) = {y}");
            // Tiny J values keep relative accuracy too.
            assert!((j - j_ref).abs() <= 1e-9 * j_ref.abs() + 1e-15, "J_{m}({x}) rel");
        }
    }

    #[test]
    fn j0_at_one() {
        let (j, _) = cylinder_functions(0, 1.0).unwrap();
        assert!((j - 0.7651976866).abs() < 1e-10);
    }

    #[test]
    fn j0_small_argument_limit() {
        let (j, _) = cylinder_functions(0, 1e-8).unwrap();
        assert!((j - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_orders_reflect() {
        let t = BesselTable::new(5, 2.3);
        for m in 1..=5 {
            let s = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(t.j(-m), s * t.j(m));
            assert_eq!(t.y(-m), s * t.y(m));
        }
    }

    #[test]
    fn domain_errors() {
        assert_eq!(cylinder_functions(0, 0.0), Err(BesselError::Argument(0.0)));
        assert_eq!(cylinder_functions(0, -1.0), Err(BesselError::Argument(-1.0)));
        assert_eq!(cylinder_functions(0, 201.0), Err(BesselError::Argument(201.0)));
        assert_eq!(cylinder_functions(65, 1.0), Err(BesselError::Order(65)));
        assert_eq!(cylinder_functions(-65, 1.0), Err(BesselError::Order(-65)));
    }

    #[test]
    fn odd_j1() {
        assert_eq!(bessel_j1(0.0), 0.0);
        assert_eq!(bessel_j1(-1.7), -bessel_j1(1.7));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn wronskian_identity(m in -63i32..=63, x in 0.05f64..200.0) {
            let t = BesselTable::new(m.unsigned_abs() as usize + 1, x);
            let w = t.j(m) * t.dy(m) - t.dj(m) * t.y(m);
            let rel = (w - wronskian(x)).abs() / wronskian(x);
            prop_assert!(rel < 1e-10, "m={} x={} rel={}", m, x, rel);
        }
    }
}
