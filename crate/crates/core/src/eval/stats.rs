//! Statistical tests for seed-sweep comparisons.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Two-sided Welch unequal-variance t-test with Welch-Satterthwaite degrees
/// of freedom. Returns (t, p). Two zero-variance samples with equal means
/// give t = 0, p = 1.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(a.len() >= 2 && b.len() >= 2, "need at least 2 observations per sample");
    let (ma, va, na) = mean_var(a);
    let (mb, vb, nb) = mean_var(b);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return if ma == mb { (0.0, 1.0) } else { (f64::INFINITY * (ma - mb).signum(), 0.0) };
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).expect("valid dof");
    let p = 2.0 * dist.cdf(-t.abs());
    (t, p)
}

/// One-sided paired t-test for the hypothesis mean(a) > mean(b) over shared
/// trials. Returns (t, p).
pub fn paired_t_test_greater(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len(), "paired test needs equal-length samples");
    assert!(a.len() >= 2);
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (md, vd, n) = mean_var(&diffs);
    if vd == 0.0 {
        return if md > 0.0 { (f64::INFINITY, 0.0) } else { (0.0, 1.0) };
    }
    let t = md / (vd / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid dof");
    let p = 1.0 - dist.cdf(t);
    (t, p)
}

/// (mean, unbiased variance, n as f64).
pub fn mean_var(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed independently with scipy.stats.ttest_ind
    // (equal_var=False) before this module was written.
    const FIXTURES: &[(&[f64], &[f64], f64, f64)] = &[
        (
            &[27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4],
            &[27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.8, 23.2, 19.8, 20.9],
            -2.180952485467,
            0.038580677569,
        ),
        (&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0], 0.0, 1.0),
        (
            &[69.1, 70.2, 68.7, 69.9, 70.4, 69.3],
            &[67.2, 67.9, 66.8, 68.1, 67.5, 67.0],
            6.348461162813,
            0.000112379454,
        ),
        (
            &[10.1, 10.2, 10.35],
            &[12.0, 14.5, 9.0, 11.2, 13.3],
            -1.896435916105,
            0.129931285007,
        ),
        (
            &[57.1, 53.0, 60.2, 49.8, 55.5, 58.3, 52.2, 54.9],
            &[54.0, 51.2, 57.7, 48.9, 53.3, 56.1, 50.4, 52.8],
            1.307799186625,
            0.212500658743,
        ),
        (
            &[5.0, 5.1, 4.9, 5.05, 4.95, 5.02, 4.98, 5.03, 4.97, 5.01],
            &[5.1, 5.2, 5.0, 5.15, 5.05, 5.12, 5.08, 5.13, 5.07, 5.11],
            -4.031296848351,
            0.000783290566,
        ),
    ];

    #[test]
    fn welch_matches_independent_reference() {
        for (a, b, t_ref, p_ref) in FIXTURES {
            let (t, p) = welch_t_test(a, b);
            assert!((t - t_ref).abs() < 1e-6, "t {} vs reference {}", t, t_ref);
            assert!((p - p_ref).abs() < 1e-4, "p {} vs reference {}", p, p_ref);
        }
    }

    #[test]
    fn welch_is_antisymmetric() {
        let a = [69.1, 70.2, 68.7, 69.9, 70.4, 69.3];
        let b = [67.2, 67.9, 66.8, 68.1, 67.5, 67.0];
        let (t_ab, p_ab) = welch_t_test(&a, &b);
        let (t_ba, p_ba) = welch_t_test(&b, &a);
        assert!((t_ab + t_ba).abs() < 1e-12);
        assert!((p_ab - p_ba).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_give_p_one() {
        let a = [3.3, 3.3, 3.3];
        let (t, p) = welch_t_test(&a, &a);
        assert_eq!(t, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn separated_seed_accuracies_are_significant() {
        // Accuracy-style samples around 69.45 vs 67.57 with small spread.
        let a: Vec<f64> = (0..18).map(|i| 69.45 + 0.3 * ((i as f64 * 0.7).sin())).collect();
        let b: Vec<f64> = (0..18).map(|i| 67.57 + 0.3 * ((i as f64 * 1.3).cos())).collect();
        let (_, p) = welch_t_test(&a, &b);
        assert!(p < 0.01, "p = {}", p);
    }

    #[test]
    fn paired_test_detects_consistent_increase() {
        let b: Vec<f64> = (0..50).map(|i| 10.0 + (i % 7) as f64).collect();
        let a: Vec<f64> = b.iter().map(|x| x * 1.6).collect();
        let (_, p) = paired_t_test_greater(&a, &b);
        assert!(p < 0.01);
        let (_, p_rev) = paired_t_test_greater(&b, &a);
        assert!(p_rev > 0.99);
    }
}
