use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
}

pub fn stats(samples: &[f64]) -> Result<Stats, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::EmptySamples);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(Stats {
        mean,
        max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: samples.iter().copied().fold(f64::INFINITY, f64::min),
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_samples() {
        let s = stats(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(
            s,
            Stats {
                mean: 5.0,
                max: 5.0,
                min: 5.0,
                std: 0.0
            }
        );
    }

    #[test]
    fn population_std() {
        // Deviations ±1.5, ±0.5: variance (2.25 + 0.25) * 2 / 4 = 1.25.
        let s = stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.mean, s.max, s.min), (2.5, 4.0, 1.0));
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-12);
        assert!((s.std - 1.1180).abs() < 1e-4);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(stats(&[]), Err(BenchError::EmptySamples)));
    }

    proptest! {
        #[test]
        fn bounds_hold(xs in proptest::collection::vec(-1e6f64..1e6, 1..50)) {
            let s = stats(&xs).unwrap();
            prop_assert!(s.min <= s.mean + 1e-6 && s.mean <= s.max + 1e-6);
            prop_assert!(s.std >= 0.0);
            prop_assert!(s.std <= (s.max - s.min) / 2.0 + 1e-6);
        }
    }
}
