//! Random target layouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;

pub const SINGLE_RANGE: f64 = 0.49;
pub const MULTI_RANGE: f64 = 1.0;
pub const MIN_SEPARATION: f64 = 0.2;
pub const MAX_PAIR_SEPARATION: f64 = 2.0;
pub const PERMITTIVITY_RANGE: (u32, u32) = (10, 20);
const MAX_TRIES: usize = 10_000;

/// Target quantity, permittivity and positions (in wavelengths, ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub count: usize,
    pub positions: Vec<f64>,
    pub permittivity: u32,
}

/// How the target count is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuotaPolicy {
    #[default]
    Uniform,
    Forced(usize),
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |why: &str| Err(DatasetError::InvalidSpec(why.to_string()));
        if !(1..=3).contains(&self.count) || self.positions.len() != self.count {
            return bad("count must be 1..=3 and match the positions");
        }
        let (lo, hi) = PERMITTIVITY_RANGE;
        if !(lo..=hi).contains(&self.permittivity) {
            return bad("permittivity outside 10..=20");
        }
        match self.count {
            1 => {
                if self.positions[0].abs() > SINGLE_RANGE {
                    return bad("single target outside ±0.49λ");
                }
            }
            _ => {
                if self.positions.iter().any(|p| p.abs() > MULTI_RANGE) {
                    return bad("target outside ±1λ");
                }
                if self.min_separation() < MIN_SEPARATION {
                    return bad("targets closer than 0.2λ");
                }
                if self.count == 2 && self.max_separation() > MAX_PAIR_SEPARATION {
                    return bad("pair farther apart than 2λ");
                }
            }
        }
        Ok(())
    }

    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.positions.iter().enumerate() {
            for b in &self.positions[i + 1..] {
                best = best.min((a - b).abs());
            }
        }
        best
    }

    fn max_separation(&self) -> f64 {
        let lo = self.positions.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.positions.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    pub fn one_hot(&self) -> [f64; 3] {
        let mut q = [0.0; 3];
        q[self.count - 1] = 1.0;
        q
    }
}

pub fn sample_scene(seed: u64, quota: QuotaPolicy) -> Result<SceneSpec, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = match quota {
        QuotaPolicy::Uniform => rng.gen_range(1..=3),
        QuotaPolicy::Forced(n) if (1..=3).contains(&n) => n,
        QuotaPolicy::Forced(n) => return Err(DatasetError::InvalidSpec(format!("forced count {n} not in 1..=3"))),
    };
    let (lo, hi) = PERMITTIVITY_RANGE;
    let permittivity = rng.gen_range(lo..=hi);
    let positions = if count == 1 {
        vec![rng.gen_range(-SINGLE_RANGE..=SINGLE_RANGE)]
    } else {
        let mut found = None;
        for _ in 0..MAX_TRIES {
            let mut p: Vec<f64> = (0..count).map(|_| rng.gen_range(-MULTI_RANGE..=MULTI_RANGE)).collect();
            p.sort_by(f64::total_cmp);
            let spec = SceneSpec {
                count,
                positions: p,
                permittivity,
            };
            if spec.validate().is_ok() {
                found = Some(spec.positions);
                break;
            }
        }
        found.ok_or(DatasetError::RejectionExhausted {
            count,
            tries: MAX_TRIES,
        })?
    };
    Ok(SceneSpec {
        count,
        positions,
        permittivity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn forced_single_within_range() {
        for seed in 0..200 {
            let s = sample_scene(seed, QuotaPolicy::Forced(1)).unwrap();
            assert_eq!(s.count, 1);
            assert!(s.positions[0].abs() <= 0.49);
        }
    }

    #[test]
    fn forced_pair_separation() {
        for seed in 0..200 {
            let s = sample_scene(seed, QuotaPolicy::Forced(2)).unwrap();
            let d = s.positions[1] - s.positions[0];
            assert!((0.2..=2.0).contains(&d), "{d}");
        }
    }

    #[test]
    fn same_seed_same_scene() {
        assert_eq!(
            sample_scene(42, QuotaPolicy::Uniform).unwrap(),
            sample_scene(42, QuotaPolicy::Uniform).unwrap()
        );
    }

    #[test]
    fn rejects_bad_forced_count() {
        assert!(sample_scene(1, QuotaPolicy::Forced(4)).is_err());
    }

    proptest! {
        #[test]
        fn sampled_scenes_are_valid(seed in any::<u64>()) {
            let s = sample_scene(seed, QuotaPolicy::Uniform).unwrap();
            prop_assert!(s.validate().is_ok());
            prop_assert!((10..=20).contains(&s.permittivity));
            let sum: f64 = s.one_hot().iter().sum();
            prop_assert_eq!(sum, 1.0);
        }
    }
}
