//! Multi-harmonic incident field.
//!
//! A periodic surface in the plane `y = 0` under normal plane-wave excitation
//! supports a ladder of Floquet harmonics with tangential wavenumbers
//! `β_n = 2πn/P`. Orders with `|β_n| > k₀` are evanescent and decay away from
//! the surface; order 0 propagates. The field above the surface is the
//! closed-form superposition
//!
//! ```text
//! E(x, y) = Σ_n A_n · exp(i β_n x) · exp(i γ_n y),   γ_n = sqrt(k₀² − β_n²)
//! ```
//!
//! with the branch of `γ_n` chosen so that `Im γ_n ≥ 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default operating frequency, Hz.
pub const DEFAULT_FREQUENCY_HZ: f64 = 8.6e9;

/// Default grating period, m.
pub const DEFAULT_PERIOD_M: f64 = 16.7e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IlluminationError {
    #[error("frequency must be positive and finite, got {0}")]
    InvalidFrequency(f64),
    #[error("period must be positive and finite, got {0}")]
    NonPositivePeriod(f64),
    #[error("{orders} orders but {amplitudes} amplitudes")]
    LengthMismatch { orders: usize, amplitudes: usize },
    #[error("harmonic order {0} listed more than once")]
    DuplicateOrder(i32),
    #[error("spectrum needs a power-of-two sample count >= 256, got {0}")]
    BadSampleCount(usize),
    #[error("extent {extent} m gives bin spacing {spacing} rad/m, coarser than π/P = {limit} rad/m")]
    ExtentTooShort { extent: f64, spacing: f64, limit: f64 },
}

/// Background medium (free space) at a single frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    pub frequency_hz: f64,
    pub wavelength: f64,
    pub wavenumber: f64,
}

impl MediumParams {
    pub fn from_frequency(frequency_hz: f64) -> Result<Self, IlluminationError> {
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(IlluminationError::InvalidFrequency(frequency_hz));
        }
        let wavelength = SPEED_OF_LIGHT / frequency_hz;
        Ok(Self {
            frequency_hz,
            wavelength,
            wavenumber: 2.0 * PI / wavelength,
        })
    }
}

impl Default for MediumParams {
    fn default() -> Self {
        Self::from_frequency(DEFAULT_FREQUENCY_HZ).expect("default frequency is valid")
    }
}

/// One Floquet order of the incident field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicComponent {
    pub order: i32,
    pub amplitude: Complex64,
    /// Tangential wavenumber β_n, rad/m.
    pub beta: f64,
    /// Normal wavenumber γ_n, rad/m, with `Im γ_n >= 0`.
    pub gamma: Complex64,
}

impl HarmonicComponent {
    pub fn is_evanescent(&self) -> bool {
        self.gamma.im > 0.0
    }

    /// `exp(iθ)` and `exp(−iθ)` of the (possibly complex) incidence angle,
    /// with θ measured from the surface normal toward +x.
    pub fn direction_phasors(&self, k0: f64) -> (Complex64, Complex64) {
        let i_beta = Complex64::new(0.0, self.beta);
        ((self.gamma + i_beta) / k0, (self.gamma - i_beta) / k0)
    }

    pub fn value_at(&self, x: f64, y: f64) -> Complex64 {
        let phase = Complex64::new(0.0, self.beta * x) + Complex64::i() * self.gamma * y;
        self.amplitude * phase.exp()
    }
}

/// The full incident field above the surface plane `y = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationPattern {
    pub components: Vec<HarmonicComponent>,
    pub period: f64,
    pub medium: MediumParams,
}

/// Normal wavenumber on the decaying branch.
pub fn normal_wavenumber(k0: f64, beta: f64) -> Complex64 {
    let k2 = k0 * k0;
    let b2 = beta * beta;
    if b2 <= k2 {
        Complex64::new((k2 - b2).sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (b2 - k2).sqrt())
    }
}

pub fn make_floquet_illumination(
    period: f64,
    medium: MediumParams,
    orders: &[i32],
    amplitudes: &[Complex64],
) -> Result<IlluminationPattern, IlluminationError> {
    if !(period.is_finite() && period > 0.0) {
        return Err(IlluminationError::NonPositivePeriod(period));
    }
    if orders.len() != amplitudes.len() {
        return Err(IlluminationError::LengthMismatch {
            orders: orders.len(),
            amplitudes: amplitudes.len(),
        });
    }
    for (i, n) in orders.iter().enumerate() {
        if orders[..i].contains(n) {
            return Err(IlluminationError::DuplicateOrder(*n));
        }
    }
    let k0 = medium.wavenumber;
    let components = orders
        .iter()
        .zip(amplitudes)
        .map(|(&order, &amplitude)| {
            let beta = 2.0 * PI * order as f64 / period;
            HarmonicComponent {
                order,
                amplitude,
                beta,
                gamma: normal_wavenumber(k0, beta),
            }
        })
        .collect();
    Ok(IlluminationPattern {
        components,
        period,
        medium,
    })
}

/// Default three-order pattern: A₀ = 1, A±1 = 0.8, zero phase.
pub fn default_amplitudes() -> (Vec<i32>, Vec<Complex64>) {
    (
        vec![-1, 0, 1],
        vec![
            Complex64::new(0.8, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.8, 0.0),
        ],
    )
}

impl Default for IlluminationPattern {
    fn default() -> Self {
        let (orders, amps) = default_amplitudes();
        make_floquet_illumination(DEFAULT_PERIOD_M, MediumParams::default(), &orders, &amps)
            .expect("default illumination is valid")
    }
}

impl IlluminationPattern {
    pub fn wavenumber(&self) -> f64 {
        self.medium.wavenumber
    }

    /// Exact superposition of all components at `(x, y)`, `y >= 0`.
    pub fn incident_field(&self, x: f64, y: f64) -> Complex64 {
        self.components.iter().map(|c| c.value_at(x, y)).sum()
    }

    /// Same pattern translated by `dx` along the surface:
    /// `E'(x, y) = E(x − dx, y)`.
    pub fn shifted(&self, dx: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.components {
            c.amplitude *= Complex64::new(0.0, -c.beta * dx).exp();
        }
        out
    }

    /// Magnitude of the DFT of the field sampled along the line at height `y`,
    /// centred on `x = 0`.
    pub fn spatial_spectrum(&self, y: f64, extent: f64, samples: usize) -> Result<SpatialSpectrum, IlluminationError> {
        if samples < 256 || !samples.is_power_of_two() {
            return Err(IlluminationError::BadSampleCount(samples));
        }
        let spacing = 2.0 * PI / extent;
        let limit = PI / self.period;
        if !(extent.is_finite() && extent > 0.0) || spacing > limit {
            return Err(IlluminationError::ExtentTooShort { extent, spacing, limit });
        }
        let dx = extent / samples as f64;
        let mut buf: Vec<Complex64> = (0..samples)
            .map(|j| self.incident_field(-0.5 * extent + j as f64 * dx, y))
            .collect();
        FftPlanner::new().plan_fft_forward(samples).process(&mut buf);

        // fftshift so frequencies ascend from −Nyquist.
        let half = samples / 2;
        let mut frequencies = Vec::with_capacity(samples);
        let mut magnitudes = Vec::with_capacity(samples);
        for s in 0..samples {
            let bin = (s + half) % samples;
            let signed = bin as i64 - if bin >= half { samples as i64 } else { 0 };
            frequencies.push(signed as f64 * spacing);
            magnitudes.push(buf[bin].norm() / samples as f64);
        }
        Ok(SpatialSpectrum {
            frequencies,
            magnitudes,
            bin_spacing: spacing,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SpatialSpectrum {
    /// Spatial frequency of each bin, rad/m, ascending.
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub bin_spacing: f64,
}

impl SpatialSpectrum {
    /// Index of the bin nearest to `frequency`.
    pub fn nearest_bin(&self, frequency: f64) -> usize {
        let zero = self.frequencies.len() / 2;
        let offset = (frequency / self.bin_spacing).round() as i64;
        (zero as i64 + offset).clamp(0, self.frequencies.len() as i64 - 1) as usize
    }

    /// Strict local maxima above `rel_floor · max`, strongest first.
    pub fn peaks(&self, rel_floor: f64) -> Vec<usize> {
        let m = &self.magnitudes;
        let top = m.iter().cloned().fold(0.0, f64::max);
        let n = m.len();
        let mut idx: Vec<usize> = (0..n)
            .filter(|&i| {
                let left = if i == 0 { f64::NEG_INFINITY } else { m[i - 1] };
                let right = if i + 1 == n { f64::NEG_INFINITY } else { m[i + 1] };
                m[i] > left && m[i] >= right && m[i] > rel_floor * top
            })
            .collect();
        idx.sort_by(|&a, &b| m[b].total_cmp(&m[a]));
        idx
    }
}
