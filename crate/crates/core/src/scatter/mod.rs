//! Multiple scattering by dielectric cylinders above the illuminated surface.
//!
//! Each cylinder responds to its local exciting field through its per-order
//! coefficients `T_m`; outgoing waves of the other cylinders are re-expanded
//! about its centre with Graf's addition theorem. The resulting dense
//! Foldy–Lax system is solved directly.

pub mod bessel;
pub mod mie;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::illumination::{IlluminationPattern, MediumParams};
use bessel::BesselTable;
pub use mie::{
    check_resummation, component_coefficients, interior_coefficients, local_incident_coefficients, mie_coefficients,
    minimum_order,
};

/// Tail-to-peak coefficient ratio that counts as a converged truncation.
pub const TAIL_TOLERANCE: f64 = 1e-10;
/// Relative residual the assembled linear system must meet.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Escalation ceiling for the automatic truncation search.
pub const ESCALATION_LIMIT: usize = 48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatterError {
    #[error(transparent)]
    Bessel(#[from] bessel::BesselError),
    #[error("invalid cylinder {index}: {reason}")]
    InvalidCylinder { index: usize, reason: &'static str },
    #[error("scene needs 1 to 3 cylinders, got {0}")]
    CylinderCount(usize),
    #[error("cylinders {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("truncation M = {max_order} unconverged: tail/peak = {ratio:e}")]
    Unconverged { max_order: usize, ratio: f64 },
    #[error("local expansion with M = {max_order} re-sums with relative error {residual:e}")]
    Resummation { max_order: usize, residual: f64 },
    #[error("linear system singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("linear solve residual {residual:e} above tolerance (condition estimate {condition:e})")]
    Residual { residual: f64, condition: f64 },
    #[error("point ({x}, {y}) lies inside cylinder {index}")]
    InsideCylinder { index: usize, x: f64, y: f64 },
    #[error("point ({x}, {y}) lies below the surface plane")]
    BelowSurface { x: f64, y: f64 },
    #[error("detection line at y = {y} intersects cylinder {index}")]
    LineIntersects { index: usize, y: f64 },
    #[error("intensity is zero along the whole detection line")]
    ZeroField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    /// Centre `(x, y)`, m.
    pub center: [f64; 2],
    pub radius: f64,
    /// Relative permittivity, real and `>= 1`.
    pub permittivity: f64,
}

impl Cylinder {
    fn validate(&self, index: usize) -> Result<(), ScatterError> {
        let bad = |reason| Err(ScatterError::InvalidCylinder { index, reason });
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad("radius must be positive");
        }
        if !(self.permittivity >= 1.0 && self.permittivity.is_finite()) {
            return bad("permittivity must be >= 1");
        }
        if self.center[1].partial_cmp(&self.radius).is_none_or(|o| o.is_lt()) || !self.center[0].is_finite() {
            return bad("cylinder must sit above the surface plane");
        }
        Ok(())
    }

    /// Distance and angle ψ (from +y toward +x) of `point` about the centre.
    fn polar(&self, point: [f64; 2]) -> (f64, f64) {
        polar(point[0] - self.center[0], point[1] - self.center[1])
    }
}

fn polar(dx: f64, dy: f64) -> (f64, f64) {
    (dx.hypot(dy), dx.atan2(dy))
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub cylinders: Vec<Cylinder>,
    pub illumination: IlluminationPattern,
}

impl Scene {
    pub fn new(cylinders: Vec<Cylinder>, illumination: IlluminationPattern) -> Result<Self, ScatterError> {
        if cylinders.is_empty() || cylinders.len() > 3 {
            return Err(ScatterError::CylinderCount(cylinders.len()));
        }
        for (i, c) in cylinders.iter().enumerate() {
            c.validate(i)?;
            for (j, d) in cylinders.iter().enumerate().skip(i + 1) {
                let dist = (c.center[0] - d.center[0]).hypot(c.center[1] - d.center[1]);
                if dist <= c.radius + d.radius {
                    return Err(ScatterError::Overlap(i, j));
                }
            }
        }
        Ok(Self {
            cylinders,
            illumination,
        })
    }

    pub fn medium(&self) -> &MediumParams {
        &self.illumination.medium
    }

    /// Default starting truncation: the largest per-cylinder minimum.
    pub fn default_order(&self) -> usize {
        self.cylinders
            .iter()
            .map(|c| minimum_order(c, self.medium()))
            .max()
            .unwrap_or(8)
    }
}

/// Multipole coefficients of every cylinder for one solved scene.
#[derive(Debug, Clone)]
pub struct ScatteringSolution {
    pub max_order: usize,
    /// Outgoing coefficients `b^(j)_m`, index `m + M`.
    pub scattered: Vec<Vec<Complex64>>,
    /// Total exciting coefficients (incident plus coupling) per cylinder.
    pub exciting: Vec<Vec<Complex64>>,
    pub residual: f64,
    pub condition: f64,
}

impl ScatteringSolution {
    pub fn coefficient(&self, cylinder: usize, order: i32) -> Complex64 {
        self.scattered[cylinder][(order + self.max_order as i32) as usize]
    }
}

/// Re-expansion matrix entry `H_{m−n}(k d) e^{i(m−n)ψ}` taking outgoing order
/// `m` about cylinder `l` to regular order `n` about cylinder `j`.
struct Translation {
    table: BesselTable,
    psi: f64,
}

impl Translation {
    fn new(from: &Cylinder, to: &Cylinder, k0: f64, max_order: usize) -> Self {
        let (d, psi) = polar(to.center[0] - from.center[0], to.center[1] - from.center[1]);
        Self {
            table: BesselTable::new(2 * max_order, k0 * d),
            psi,
        }
    }

    fn entry(&self, m: i32, n: i32) -> Complex64 {
        let q = m - n;
        self.table.h(q) * Complex64::new(0.0, q as f64 * self.psi).exp()
    }
}

/// Solve the coupled system at a fixed truncation order.
pub fn solve_multiple_scattering(scene: &Scene, max_order: usize) -> Result<ScatteringSolution, ScatterError> {
    let medium = *scene.medium();
    let k0 = medium.wavenumber;
    let cyls = &scene.cylinders;
    let width = 2 * max_order + 1;
    let size = cyls.len() * width;
    let m_max = max_order as i32;

    let t: Vec<Vec<Complex64>> = cyls.iter().map(|c| mie::mie_unchecked(c, &medium, max_order)).collect();
    let incident: Vec<Vec<Complex64>> = cyls
        .iter()
        .map(|c| local_incident_coefficients(&scene.illumination, c.center, max_order))
        .collect();

    // Rows: b^(j)_n − T^(j)_n Σ_{l≠j} Σ_m G^{jl}_{nm} b^(l)_m = T^(j)_n a^(j)_n,
    // assembled for the surface-normalised unknowns y^(l)_m = |H_m(k₀a_l)| b^(l)_m.
    // Unscaled, close pairs put entries of order 1e16 next to the unit diagonal.
    let scale: Vec<Vec<f64>> = cyls
        .iter()
        .map(|c| {
            let table = BesselTable::new(max_order, k0 * c.radius);
            (-m_max..=m_max).map(|m| table.h(m).norm()).collect()
        })
        .collect();
    let mut matrix = DMatrix::<Complex64>::identity(size, size);
    let mut rhs = DVector::<Complex64>::zeros(size);
    let mut translations = Vec::new();
    for (j, cj) in cyls.iter().enumerate() {
        for n in -m_max..=m_max {
            let ni = (n + m_max) as usize;
            rhs[j * width + ni] = scale[j][ni] * t[j][ni] * incident[j][ni];
        }
        for (l, cl) in cyls.iter().enumerate() {
            if l == j {
                continue;
            }
            let g = Translation::new(cl, cj, k0, max_order);
            for n in -m_max..=m_max {
                let ni = (n + m_max) as usize;
                let row = j * width + ni;
                let tn = scale[j][ni] * t[j][ni];
                for m in -m_max..=m_max {
                    let mi = (m + m_max) as usize;
                    matrix[(row, l * width + mi)] = -tn * g.entry(m, n) / scale[l][mi];
                }
            }
            translations.push((j, l, g));
        }
    }

    let condition = condition_estimate(&matrix);
    let lu = matrix.clone().lu();
    let solution = lu.solve(&rhs).ok_or(ScatterError::Singular { condition })?;
    if !solution.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(ScatterError::Singular { condition });
    }
    let residual = {
        let r = &matrix * &solution - &rhs;
        let scale = rhs.norm().max(solution.norm()).max(f64::MIN_POSITIVE);
        r.norm() / scale
    };
    if residual > RESIDUAL_TOLERANCE {
        return Err(ScatterError::Residual { residual, condition });
    }

    let scattered: Vec<Vec<Complex64>> = (0..cyls.len())
        .map(|j| {
            solution
                .rows(j * width, width)
                .iter()
                .zip(&scale[j])
                .map(|(y, s)| y / s)
                .collect()
        })
        .collect();
    for b in &scattered {
        mie::check_tail(b, max_order)?;
    }

    let mut exciting = incident;
    for (j, l, g) in &translations {
        for n in -m_max..=m_max {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in -m_max..=m_max {
                acc += g.entry(m, n) * scattered[*l][(m + m_max) as usize];
            }
            exciting[*j][(n + m_max) as usize] += acc;
        }
    }

    Ok(ScatteringSolution {
        max_order,
        scattered,
        exciting,
        residual,
        condition,
    })
}

/// Solve with the default truncation, escalating by 4 until the tail test passes.
pub fn solve_scene(scene: &Scene) -> Result<ScatteringSolution, ScatterError> {
    let mut order = scene.default_order();
    loop {
        match solve_multiple_scattering(scene, order) {
            Err(ScatterError::Unconverged { .. }) if order + 4 <= ESCALATION_LIMIT => order += 4,
            other => return other,
        }
    }
}

/// Solve many scenes across the current rayon pool; results keep input order.
pub fn solve_batch(scenes: &[Scene]) -> Vec<Result<ScatteringSolution, ScatterError>> {
    scenes.par_iter().map(solve_scene).collect()
}

/// 1-norm condition estimate from an explicit inverse (systems here are tiny).
fn condition_estimate(matrix: &DMatrix<Complex64>) -> f64 {
    let norm1 = |m: &DMatrix<Complex64>| {
        m.column_iter()
            .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match matrix.clone().try_inverse() {
        Some(inv) => norm1(matrix) * norm1(&inv),
        None => f64::INFINITY,
    }
}

/// Incident plus every outgoing multipole series at `point`.
pub fn total_field(scene: &Scene, solution: &ScatteringSolution, point: [f64; 2]) -> Result<Complex64, ScatterError> {
    if point[1] < 0.0 {
        return Err(ScatterError::BelowSurface {
            x: point[0],
            y: point[1],
        });
    }
    for (index, c) in scene.cylinders.iter().enumerate() {
        if c.polar(point).0 < c.radius {
            return Err(ScatterError::InsideCylinder {
                index,
                x: point[0],
                y: point[1],
            });
        }
    }
    Ok(scene.illumination.incident_field(point[0], point[1]) + scattered_field(scene, solution, point))
}

/// Sum of the outgoing series only; no domain checks.
pub fn scattered_field(scene: &Scene, solution: &ScatteringSolution, point: [f64; 2]) -> Complex64 {
    let k0 = scene.medium().wavenumber;
    let m_max = solution.max_order as i32;
    let mut total = Complex64::new(0.0, 0.0);
    for (c, b) in scene.cylinders.iter().zip(&solution.scattered) {
        let (rho, psi) = c.polar(point);
        let table = BesselTable::new(solution.max_order, k0 * rho);
        let step = Complex64::new(0.0, psi).exp();
        let mut phase = Complex64::new(0.0, -(m_max as f64) * psi).exp();
        for (m, bm) in (-m_max..=m_max).zip(b) {
            total += bm * table.h(m) * phase;
            phase *= step;
        }
    }
    total
}

/// Field inside cylinder `index` from its interior expansion.
pub fn interior_field(scene: &Scene, solution: &ScatteringSolution, index: usize, point: [f64; 2]) -> Complex64 {
    let c = &scene.cylinders[index];
    let medium = scene.medium();
    let coeffs = interior_coefficients(c, medium, &solution.exciting[index], &solution.scattered[index]);
    let (rho, psi) = c.polar(point);
    mie::resum_regular(&coeffs, medium.wavenumber * c.permittivity.sqrt(), rho, psi)
}

/// Worst relative mismatch between the interior expansion just inside and the
/// total field just outside each boundary, over `points` angles.
pub fn boundary_continuity_residual(
    scene: &Scene,
    solution: &ScatteringSolution,
    points: usize,
) -> Result<f64, ScatterError> {
    let mut worst: f64 = 0.0;
    for (index, c) in scene.cylinders.iter().enumerate() {
        for p in 0..points {
            let psi = 2.0 * PI * p as f64 / points as f64;
            let at = |r: f64| [c.center[0] + r * psi.sin(), c.center[1] + r * psi.cos()];
            let inside = interior_field(scene, solution, index, at(c.radius * (1.0 - 1e-9)));
            let outside = total_field(scene, solution, at(c.radius * (1.0 + 1e-9)))?;
            worst = worst.max((inside - outside).norm() / outside.norm().max(f64::MIN_POSITIVE));
        }
    }
    Ok(worst)
}

/// Horizontal sampling line above the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionLine {
    /// Height above the surface plane, m.
    pub y: f64,
    pub half_extent: f64,
    pub spacing: f64,
}

impl DetectionLine {
    /// 1.3λ above the surface, ±5λ, 0.5λ spacing (21 samples).
    pub fn standard(medium: &MediumParams) -> Self {
        let lam = medium.wavelength;
        Self {
            y: 1.3 * lam,
            half_extent: 5.0 * lam,
            spacing: 0.5 * lam,
        }
    }

    pub fn count(&self) -> usize {
        (2.0 * self.half_extent / self.spacing).round() as usize + 1
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.count())
            .map(|i| -self.half_extent + i as f64 * self.spacing)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityCurve {
    pub positions: Vec<f64>,
    /// `|E|²` divided by its maximum.
    pub values: Vec<f64>,
    /// Maximum of `|E|²` before normalisation.
    pub raw_max: f64,
}

pub fn sample_intensity_curve(
    scene: &Scene,
    solution: &ScatteringSolution,
    line: &DetectionLine,
) -> Result<IntensityCurve, ScatterError> {
    for (index, c) in scene.cylinders.iter().enumerate() {
        if (line.y - c.center[1]).abs() <= c.radius {
            return Err(ScatterError::LineIntersects { index, y: line.y });
        }
    }
    let positions = line.positions();
    let raw: Vec<f64> = positions
        .iter()
        .map(|&x| total_field(scene, solution, [x, line.y]).map(|e| e.norm_sqr()))
        .collect::<Result<_, _>>()?;
    let raw_max = raw.iter().cloned().fold(0.0, f64::max);
    if !(raw_max > 0.0 && raw_max.is_finite()) {
        return Err(ScatterError::ZeroField);
    }
    Ok(IntensityCurve {
        values: raw.iter().map(|v| v / raw_max).collect(),
        positions,
        raw_max,
    })
}
