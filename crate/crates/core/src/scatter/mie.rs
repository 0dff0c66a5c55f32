//! Single-cylinder response and plane-wave cylindrical expansions.

use num_complex::Complex64;

use super::bessel::BesselTable;
use super::{Cylinder, ScatterError, TAIL_TOLERANCE};
use crate::illumination::{HarmonicComponent, IlluminationPattern, MediumParams};

/// Smallest truncation order the solver accepts for a cylinder.
pub fn minimum_order(cyl: &Cylinder, medium: &MediumParams) -> usize {
    let k1a = medium.wavenumber * cyl.permittivity.sqrt() * cyl.radius;
    k1a.ceil() as usize + 8
}

/// Per-order scattering coefficients `T_m`, `m = −M..=M` (index `m + M`).
///
/// Out-of-plane electric field, non-magnetic homogeneous dielectric:
/// scattered `Σ T_m a_m H_m(k₀ρ) e^{imψ}` for incident `Σ a_m J_m(k₀ρ) e^{imψ}`.
pub fn mie_coefficients(
    cyl: &Cylinder,
    medium: &MediumParams,
    max_order: usize,
) -> Result<Vec<Complex64>, ScatterError> {
    let t = mie_unchecked(cyl, medium, max_order);
    check_tail(&t, max_order)?;
    Ok(t)
}

pub(crate) fn mie_unchecked(cyl: &Cylinder, medium: &MediumParams, max_order: usize) -> Vec<Complex64> {
    let n = cyl.permittivity.sqrt();
    let x0 = medium.wavenumber * cyl.radius;
    let x1 = x0 * n;
    let outer = BesselTable::new(max_order + 1, x0);
    let inner = BesselTable::new(max_order + 1, x1);
    let m_max = max_order as i32;
    (-m_max..=m_max)
        .map(|m| {
            if cyl.permittivity == 1.0 {
                return Complex64::new(0.0, 0.0);
            }
            let num = outer.j(m) * n * inner.dj(m) - outer.dj(m) * inner.j(m);
            let den = outer.h(m) * n * inner.dj(m) - outer.dh(m) * inner.j(m);
            -num / den
        })
        .collect()
}

/// Interior coefficients `c_m` (field `Σ c_m J_m(k₁ρ) e^{imψ}`) from the
/// exciting and scattered coefficients of one cylinder.
pub fn interior_coefficients(
    cyl: &Cylinder,
    medium: &MediumParams,
    exciting: &[Complex64],
    scattered: &[Complex64],
) -> Vec<Complex64> {
    let max_order = exciting.len() / 2;
    let x0 = medium.wavenumber * cyl.radius;
    let x1 = x0 * cyl.permittivity.sqrt();
    let outer = BesselTable::new(max_order, x0);
    let inner = BesselTable::new(max_order, x1);
    let m_max = max_order as i32;
    (-m_max..=m_max)
        .zip(exciting.iter().zip(scattered))
        .map(|(m, (a, b))| (a * outer.j(m) + b * outer.h(m)) / inner.j(m))
        .collect()
}

pub(crate) fn check_tail(coeffs: &[Complex64], max_order: usize) -> Result<(), ScatterError> {
    let peak = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(());
    }
    let tail = coeffs[0].norm().max(coeffs[2 * max_order].norm());
    let ratio = tail / peak;
    if ratio < TAIL_TOLERANCE {
        Ok(())
    } else {
        Err(ScatterError::Unconverged { max_order, ratio })
    }
}

/// Expansion coefficients of one harmonic about `center`.
pub fn component_coefficients(
    component: &HarmonicComponent,
    k0: f64,
    center: [f64; 2],
    max_order: usize,
) -> Vec<Complex64> {
    let phase = component.value_at(center[0], center[1]);
    let (e_plus, e_minus) = component.direction_phasors(k0);
    let m_max = max_order as i32;
    (-m_max..=m_max)
        .map(|m| {
            let angular = if m >= 0 { e_minus.powi(m) } else { e_plus.powi(-m) };
            phase * Complex64::i().powi(m) * angular
        })
        .collect()
}

/// Regular-wave expansion `Σ a_m J_m(k₀ρ) e^{imψ}` of the incident field about
/// `center`, with ψ measured from +y toward +x.
pub fn local_incident_coefficients(
    pattern: &IlluminationPattern,
    center: [f64; 2],
    max_order: usize,
) -> Vec<Complex64> {
    let k0 = pattern.wavenumber();
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * max_order + 1];
    for c in &pattern.components {
        for (o, v) in out.iter_mut().zip(component_coefficients(c, k0, center, max_order)) {
            *o += v;
        }
    }
    out
}

/// Sum a regular-wave expansion at a point `(rho, psi)` relative to its centre.
pub fn resum_regular(coeffs: &[Complex64], k: f64, rho: f64, psi: f64) -> Complex64 {
    let max_order = coeffs.len() / 2;
    let m_max = max_order as i32;
    if rho == 0.0 {
        return coeffs[max_order];
    }
    let table = BesselTable::new(max_order, k * rho);
    (-m_max..=m_max)
        .zip(coeffs)
        .map(|(m, a)| a * table.j(m) * Complex64::new(0.0, m as f64 * psi).exp())
        .sum()
}

/// Worst relative re-summation error of the local expansion on a ring of
/// `probes` points at radius `rho`; errors when above `tolerance`.
pub fn check_resummation(
    pattern: &IlluminationPattern,
    center: [f64; 2],
    coeffs: &[Complex64],
    rho: f64,
    probes: usize,
    tolerance: f64,
) -> Result<f64, ScatterError> {
    let k0 = pattern.wavenumber();
    let mut worst: f64 = 0.0;
    for p in 0..probes {
        let psi = 2.0 * std::f64::consts::PI * p as f64 / probes as f64;
        let x = center[0] + rho * psi.sin();
        let y = center[1] + rho * psi.cos();
        let direct = pattern.incident_field(x, y);
        let series = resum_regular(coeffs, k0, rho, psi);
        worst = worst.max((series - direct).norm() / direct.norm().max(f64::MIN_POSITIVE));
    }
    if worst <= tolerance {
        Ok(worst)
    } else {
        Err(ScatterError::Resummation {
            max_order: coeffs.len() / 2,
            residual: worst,
        })
    }
}
