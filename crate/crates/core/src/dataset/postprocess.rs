//! Resampling the sparse detection samples onto the network input grid.

use serde::{Deserialize, Serialize};

use super::DatasetError;

pub const INPUT_LEN: usize = 701;
pub const RAW_SPACING: f64 = 0.5;
pub const WINDOWS: [u32; 4] = [10, 7, 5, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpMode {
    /// Natural cubic spline.
    FitSmooth,
    /// Piecewise-linear.
    LinearInterp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostProcessPolicy {
    pub mode: InterpMode,
    /// Detection window in wavelengths: 10, 7, 5 or 3.
    pub window: u32,
}

impl Default for PostProcessPolicy {
    fn default() -> Self {
        Self {
            mode: InterpMode::FitSmooth,
            window: 10,
        }
    }
}

impl PostProcessPolicy {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if WINDOWS.contains(&self.window) {
            Ok(())
        } else {
            Err(DatasetError::Window(self.window))
        }
    }

    pub fn raw_count(&self) -> usize {
        (self.window as f64 / RAW_SPACING).round() as usize + 1
    }

    /// Short identifier, e.g. `fit-10`.
    pub fn id(&self) -> String {
        let mode = match self.mode {
            InterpMode::FitSmooth => "fit",
            InterpMode::LinearInterp => "linear",
        };
        format!("{mode}-{}", self.window)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedCurve {
    pub values: Vec<f64>,
    /// Spline was requested but too few points; linear was used instead.
    pub fell_back: bool,
}

/// Central `policy.raw_count()` samples of a full 21-point curve.
pub fn window_slice<'a>(full: &'a [f64], policy: &PostProcessPolicy) -> Result<&'a [f64], DatasetError> {
    let need = policy.raw_count();
    if full.len() < need || !(full.len() - need).is_multiple_of(2) {
        return Err(DatasetError::RawLength {
            expected: need,
            got: full.len(),
        });
    }
    let start = (full.len() - need) / 2;
    Ok(&full[start..start + need])
}

pub fn postprocess_curve(raw: &[f64], policy: &PostProcessPolicy) -> Result<ProcessedCurve, DatasetError> {
    policy.validate()?;
    if raw.len() != policy.raw_count() {
        return Err(DatasetError::RawLength {
            expected: policy.raw_count(),
            got: raw.len(),
        });
    }
    resample(raw, policy.mode)
}

/// Resample `raw` (uniform knots) onto the 701-point grid spanning the same
/// interval, then rescale to maximum 1.
pub fn resample(raw: &[f64], mode: InterpMode) -> Result<ProcessedCurve, DatasetError> {
    let n = raw.len();
    if n < 2 {
        return Err(DatasetError::RawLength { expected: 2, got: n });
    }
    let step = (n - 1) as f64 / (INPUT_LEN - 1) as f64;
    let grid = (0..INPUT_LEN).map(|i| i as f64 * step);
    let (mut values, fell_back) = match mode {
        InterpMode::FitSmooth if n >= 4 => {
            let spline = NaturalSpline::new(raw);
            (grid.map(|t| spline.eval(t)).collect::<Vec<_>>(), false)
        }
        mode => (
            grid.map(|t| linear_eval(raw, t)).collect(),
            mode == InterpMode::FitSmooth,
        ),
    };
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(DatasetError::DegenerateCurve);
    }
    for v in &mut values {
        *v = (*v / peak).max(0.0);
    }
    Ok(ProcessedCurve { values, fell_back })
}

fn linear_eval(y: &[f64], t: f64) -> f64 {
    let i = (t.floor() as usize).min(y.len() - 2);
    let f = t - i as f64;
    if f == 0.0 {
        return y[i];
    }
    y[i] + f * (y[i + 1] - y[i])
}

/// Natural cubic spline through `(i, y_i)` with unit knot spacing.
struct NaturalSpline<'a> {
    y: &'a [f64],
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl<'a> NaturalSpline<'a> {
    fn new(y: &'a [f64]) -> Self {
        let n = y.len();
        let mut m = vec![0.0; n];
        // Interior rows: m_{i-1} + 4 m_i + m_{i+1} = 6 (y_{i+1} − 2 y_i + y_{i-1}).
        let inner = n - 2;
        let mut diag = vec![4.0; inner];
        let mut rhs: Vec<f64> = (1..n - 1).map(|i| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1])).collect();
        for i in 1..inner {
            let w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (0..inner).rev() {
            let upper = if i + 1 < inner { m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - upper) / diag[i];
        }
        Self { y, m }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.y.len();
        let i = (t.floor() as usize).min(n - 2);
        let b = t - i as f64;
        if b == 0.0 {
            return self.y[i];
        }
        let a = 1.0 - b;
        a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) / 6.0
    }
}
