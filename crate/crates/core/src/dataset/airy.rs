//! Ground-truth super-resolution images: sums of Airy profiles.

use super::scene::SceneSpec;
use crate::scatter::bessel::bessel_j1;

/// First zero of `J₁`.
pub const J1_FIRST_ZERO: f64 = 3.831_705_970_207_512_3;
/// Label resolution in wavelengths; the first dark ring sits here.
pub const AIRY_ZERO_RADIUS: f64 = 0.2;

/// Airy intensity `[2 J₁(z)/z]²` with `z = j₁,₁ · u / d_min`; `u` in wavelengths.
pub fn airy_profile(u: f64) -> f64 {
    let z = J1_FIRST_ZERO * u / AIRY_ZERO_RADIUS;
    if z.abs() < 1e-8 {
        return 1.0;
    }
    let a = 2.0 * bessel_j1(z) / z;
    a * a
}

/// Uniform grid of `len` points spanning `[-window/2, window/2]` wavelengths.
pub fn uniform_grid(window: f64, len: usize) -> Vec<f64> {
    let step = window / (len - 1) as f64;
    (0..len).map(|i| -0.5 * window + i as f64 * step).collect()
}

/// Superposed Airy disks at the target positions, rescaled to maximum 1.
pub fn render_airy_image(spec: &SceneSpec, grid: &[f64]) -> Vec<f64> {
    let mut img: Vec<f64> = grid
        .iter()
        .map(|&x| spec.positions.iter().map(|&p| airy_profile(x - p)).sum())
        .collect();
    let peak = img.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        for v in &mut img {
            *v /= peak;
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(positions: Vec<f64>) -> SceneSpec {
        SceneSpec {
            count: positions.len(),
            positions,
            permittivity: 15,
        }
    }

    fn local_maxima(v: &[f64]) -> Vec<usize> {
        (1..v.len() - 1)
            .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] > 0.5)
            .collect()
    }

    #[test]
    fn profile_limits() {
        assert_eq!(airy_profile(0.0), 1.0);
        assert!(airy_profile(AIRY_ZERO_RADIUS).abs() < 1e-20);
        assert!((airy_profile(0.05) - airy_profile(-0.05)).abs() < 1e-15);
    }

    #[test]
    fn centred_single_target() {
        let grid = uniform_grid(10.0, 701);
        let img = render_airy_image(&spec(vec![0.0]), &grid);
        assert_eq!(img[350], 1.0);
        for i in 0..350 {
            assert!((img[i] - img[700 - i]).abs() < 1e-14);
        }
    }

    #[test]
    fn rayleigh_pair_is_resolved() {
        let grid = uniform_grid(10.0, 701);
        let img = render_airy_image(&spec(vec![-0.1, 0.1]), &grid);
        let peaks = local_maxima(&img);
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        assert!(img[350] < img[peaks[0]]);
    }

    #[test]
    fn distant_pair_unit_peaks_and_deep_valley() {
        let grid = uniform_grid(10.0, 701);
        let img = render_airy_image(&spec(vec![-1.0, 1.0]), &grid);
        assert!((img[280] - 1.0).abs() < 1e-3 && (img[420] - 1.0).abs() < 1e-3);
        assert!(img[350] < 0.01);
        assert_eq!(img.iter().cloned().fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn peaks_track_positions() {
        let grid = uniform_grid(10.0, 701);
        let cell = 10.0 / 700.0;
        let positions = vec![-0.83, -0.41, 0.37];
        let img = render_airy_image(&spec(positions.clone()), &grid);
        let peaks = local_maxima(&img);
        assert_eq!(peaks.len(), 3);
        for (p, i) in positions.iter().zip(peaks) {
            assert!((grid[i] - p).abs() <= cell);
        }
    }
}
