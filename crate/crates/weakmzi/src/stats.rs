//! Statistical test helpers for the Monte Carlo harness: a chi-square
//! goodness-of-fit test on categorical counts and a one-sample
//! Kolmogorov-Smirnov test against a reference CDF.

use crate::error::{Error, Result};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of observed counts against expected cell
/// probabilities. Zero-probability cells are dropped from the degrees of
/// freedom; observing a count in one of them pins the p-value to zero.
pub(crate) fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<ChiSquare> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "chi-square needs matching cell lists of length >= 2, got {} and {}",
            observed.len(),
            expected.len()
        )));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::Underpowered("chi-square with zero total count".into()));
    }
    let mut statistic = 0.0f64;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected) {
        let e = p * n as f64;
        if e <= 0.0 {
            if o > 0 {
                statistic = f64::INFINITY;
            }
            continue;
        }
        cells += 1;
        let d = o as f64 - e;
        statistic += d * d / e;
    }
    if cells < 2 {
        return Err(Error::Underpowered(
            "chi-square with fewer than two populated cells".into(),
        ));
    }
    let dof = cells - 1;
    let p_value = if statistic.is_finite() {
        let dist = ChiSquared::new(dof as f64)
            .map_err(|e| Error::InvalidParameter(format!("chi-square dof: {e}")))?;
        (1.0 - dist.cdf(statistic)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(ChiSquare { statistic, dof, p_value })
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample two-sided KS test of `samples` against the continuous CDF `f`.
/// The p-value uses the asymptotic Kolmogorov distribution with the Stephens
/// finite-n correction for the effective sqrt(n).
pub(crate) fn ks_test(samples: &mut [f64], f: impl Fn(f64) -> f64) -> Result<KsTest> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::Underpowered("KS test with no samples".into()));
    }
    samples.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN samples"));
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let c = f(x);
        d = d.max((i as f64 + 1.0) / nf - c).max(c - i as f64 / nf);
    }
    let lambda = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    Ok(KsTest {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
        n,
    })
}

/// Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2).
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0f64;
    let mut sign = 1.0f64;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use rand::Rng;

    #[test]
    fn chi_square_detects_bias_and_accepts_fair() {
        // Counts drawn to match the expected split exactly.
        let fair = chi_square_gof(&[2500, 2500, 5000], &[0.25, 0.25, 0.5]).unwrap();
        assert_eq!(fair.dof, 2);
        assert!(fair.statistic < 1e-12);
        assert!(fair.p_value > 0.99);

        let biased = chi_square_gof(&[4000, 1000, 5000], &[0.25, 0.25, 0.5]).unwrap();
        assert!(biased.p_value < 1e-10);

        // A count in an impossible cell is an immediate rejection.
        let impossible = chi_square_gof(&[5000, 5000, 3], &[0.5, 0.5, 0.0]).unwrap();
        assert_eq!(impossible.p_value, 0.0);
    }

    #[test]
    fn ks_accepts_true_null_and_rejects_shifted() {
        let mut rng = RngStream::new(11, 0).rng();
        let mut uniform: Vec<f64> = (0..20_000).map(|_| rng.gen::<f64>()).collect();
        let ks = ks_test(&mut uniform, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(ks.p_value > 0.01, "true-null KS rejected: {ks:?}");

        let mut shifted: Vec<f64> = uniform.iter().map(|u| (u * 0.95).powf(1.2)).collect();
        let ks = ks_test(&mut shifted, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(ks.p_value < 1e-6, "shifted sample accepted: {ks:?}");
    }

    #[test]
    fn ks_p_value_roughly_uniform_under_null() {
        // 200 repetitions at n = 2000: the rejection rate at 5% should be
        // near 5%, and the median p near 0.5.
        let mut rejections = 0;
        let mut ps = Vec::new();
        for rep in 0..200u64 {
            let mut rng = RngStream::new(99, rep).rng();
            let mut s: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
            let ks = ks_test(&mut s, |x| x.clamp(0.0, 1.0)).unwrap();
            if ks.p_value < 0.05 {
                rejections += 1;
            }
            ps.push(ks.p_value);
        }
        assert!((1..=25).contains(&rejections), "{rejections} rejections at 5%");
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = ps[100];
        assert!((0.3..0.7).contains(&median), "median null p {median}");
    }
}
