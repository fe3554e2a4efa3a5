//! Special functions and small numerical kernels shared by the rest of the crate.

mod beta;
mod quadrature;
mod spd;

pub use beta::{beta_quantile, regularized_incomplete_beta, BetaFunctions};
pub use quadrature::{clustered_gauss_legendre, gauss_legendre, QuadratureRule};
pub use spd::{spd_sqrt_2x2, Spd2x2};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// CDF of the noncentral chi-square with one degree of freedom.
///
/// With one degree of freedom `χ²₁(λ) = (√λ + Z)²`, so the CDF reduces to
/// `Φ(√x − √λ) − Φ(−√x − √λ)`.
pub fn ncx2_cdf_df1(x: f64, lambda: f64) -> Result<f64> {
    check_ncx2_args(x, lambda)?;
    let (sx, sl) = (x.sqrt(), lambda.sqrt());
    Ok((normal_cdf(sx - sl) - normal_cdf(-sx - sl)).max(0.0))
}

/// Survival function `1 − F` of the df=1 noncentral chi-square, evaluated
/// without the cancellation of `1 − cdf` in the upper tail.
pub fn ncx2_sf_df1(x: f64, lambda: f64) -> Result<f64> {
    check_ncx2_args(x, lambda)?;
    Ok(ncx2_sf_df1_unchecked(x, lambda))
}

/// Survival function for hot loops; negative `x` is treated as zero.
#[inline]
pub(crate) fn ncx2_sf_df1_unchecked(x: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let (sx, sl) = (x.sqrt(), lambda.sqrt());
    (normal_cdf(sl - sx) + normal_cdf(-sx - sl)).min(1.0)
}

fn check_ncx2_args(x: f64, lambda: f64) -> Result<()> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("ncx2: x must be >= 0, got {x}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::domain(format!(
            "ncx2: lambda must be >= 0, got {lambda}"
        )));
    }
    Ok(())
}

/// `(√λ + z)²` for a given standard normal deviate `z`.
#[inline]
pub fn ncx2_from_normal(lambda: f64, z: f64) -> f64 {
    let s = lambda.sqrt() + z;
    s * s
}

/// One draw of `χ²₁(λ)`.
pub fn ncx2_sample_df1<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    ncx2_from_normal(lambda, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Reference values from a 30-digit erf evaluation.
    const PHI_TABLE: &[(f64, f64)] = &[
        (1.959964, 0.975000000903557598),
        (0.5, 0.691462461274013104),
        (-2.5, 0.00620966532577613517),
        (3.2, 0.999312862062084152),
    ];

    #[test]
    fn normal_cdf_matches_table() {
        assert_eq!(normal_cdf(0.0), 0.5);
        for &(x, p) in PHI_TABLE {
            assert_abs_diff_eq!(normal_cdf(x), p, epsilon = 1e-15);
        }
        assert!(normal_cdf(-40.0) < 1e-300);
        assert_eq!(normal_cdf(40.0), 1.0);
    }

    #[test]
    fn ncx2_cdf_examples() {
        assert_eq!(ncx2_cdf_df1(0.0, 3.0).unwrap(), 0.0);
        assert_abs_diff_eq!(ncx2_cdf_df1(3.841459, 0.0).unwrap(), 0.95, epsilon = 1e-8);
        // Φ(−1) − Φ(−3)
        assert_abs_diff_eq!(
            ncx2_cdf_df1(1.0, 4.0).unwrap(),
            0.1573053558998269568,
            epsilon = 1e-15
        );
        assert!(ncx2_cdf_df1(-1.0, 1.0).is_err());
        assert!(ncx2_sf_df1(1.0, -1.0).is_err());
    }

    #[test]
    fn ncx2_cdf_monotone_on_grid() {
        let xs: Vec<f64> = (0..60).map(|i| i as f64 * 0.25).collect();
        let ls: Vec<f64> = (0..30).map(|i| i as f64 * 0.5).collect();
        for &l in &ls {
            let mut prev = -1.0;
            for &x in &xs {
                let f = ncx2_cdf_df1(x, l).unwrap();
                assert!(f >= prev - 1e-15, "x={x} l={l}");
                prev = f;
            }
        }
        for &x in &xs {
            let mut prev = 2.0;
            for &l in &ls {
                let f = ncx2_cdf_df1(x, l).unwrap();
                assert!(f <= prev + 1e-15, "x={x} l={l}");
                prev = f;
            }
        }
    }

    #[test]
    fn sf_complements_cdf() {
        for &(x, l) in &[(0.3, 0.0), (2.0, 5.0), (10.0, 1.0), (0.01, 20.0)] {
            let s = ncx2_sf_df1(x, l).unwrap();
            let c = ncx2_cdf_df1(x, l).unwrap();
            assert_abs_diff_eq!(s + c, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn ncx2_forced_deviates() {
        assert_eq!(ncx2_from_normal(0.0, 0.0), 0.0);
        assert_eq!(ncx2_from_normal(4.0, 1.0), 9.0);
    }

    #[test]
    fn ncx2_sample_mean_and_ks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n).map(|_| ncx2_sample_df1(3.0, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 4.0).abs() < 0.05, "mean {mean}");

        draws.sort_by(f64::total_cmp);
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = ncx2_cdf_df1(x, 3.0).unwrap();
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (f - lo).abs().max((hi - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks {ks}");
    }
}
