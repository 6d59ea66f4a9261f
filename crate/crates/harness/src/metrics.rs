//! Selection statistics.

use crate::error::{invalid, HarnessError, Result};

/// Fraction of frames that selected `truth`.
pub fn compute_pc(decisions: &[usize], truth: usize) -> Result<f64> {
    if decisions.is_empty() {
        return Err(HarnessError::EmptyDecisions);
    }
    Ok(decisions.iter().filter(|&&c| c == truth).count() as f64 / decisions.len() as f64)
}

/// Normalised histogram of the selected channels over `0..num_channels`.
pub fn compute_psr(decisions: &[usize], num_channels: usize) -> Result<Vec<f64>> {
    if decisions.is_empty() {
        return Err(HarnessError::EmptyDecisions);
    }
    let mut counts = vec![0usize; num_channels];
    for &c in decisions {
        *counts
            .get_mut(c)
            .ok_or_else(|| invalid(format!("decision {c} is not below {num_channels}")))? += 1;
    }
    Ok(counts.iter().map(|&n| n as f64 / decisions.len() as f64).collect())
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pc_cases() {
        assert_eq!(compute_pc(&[1, 1, 1], 1).unwrap(), 1.0);
        assert_eq!(compute_pc(&[0, 1, 0, 1], 1).unwrap(), 0.5);
        assert!(matches!(compute_pc(&[], 0), Err(HarnessError::EmptyDecisions)));
    }

    #[test]
    fn uniform_random_pc_is_one_over_r() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d: Vec<usize> = (0..100_000).map(|_| rng.random_range(0..5)).collect();
        assert!((compute_pc(&d, 2).unwrap() - 0.2).abs() < 0.01);
        let ps = compute_psr(&d, 5).unwrap();
        assert!(ps.iter().all(|p| (p - 0.2).abs() < 0.01));
    }

    #[test]
    fn psr_cases() {
        assert_eq!(compute_psr(&[2, 2, 2], 4).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        assert!(compute_psr(&[], 3).is_err());
        assert!(compute_psr(&[3], 3).is_err());
        let d = [0, 2, 1, 2, 2];
        assert_eq!(compute_psr(&d, 3).unwrap()[2], compute_pc(&d, 2).unwrap());
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    proptest::proptest! {
        #[test]
        fn psr_sums_to_one(d in proptest::collection::vec(0usize..6, 1..200)) {
            let ps = compute_psr(&d, 6).unwrap();
            proptest::prop_assert!((ps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for r in 0..6 {
                proptest::prop_assert_eq!(ps[r], compute_pc(&d, r).unwrap());
            }
        }
    }
}
