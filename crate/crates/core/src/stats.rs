//! Scalar statistics behind preference-informed edge reweighting: Box-Cox with
//! maximum-likelihood λ, z-scores, the one-sample Kolmogorov–Smirnov test
//! against N(0, 1), F(1, 1) quantiles, and the information-content magnitude.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::scalar::Scalar;

/// `|λ|` below this takes the logarithmic branch.
pub const LAMBDA_ZERO_EPS: f64 = 1e-12;
/// Search bracket for the Box-Cox λ.
pub const LAMBDA_BRACKET: (f64, f64) = (-5.0, 5.0);
/// Floor for the squared rating in the Fisher statistic.
pub const FISHER_EPS: f64 = 1e-12;

const LAMBDA_TOL: f64 = 1e-7;
const LAMBDA_GRID: usize = 200;

/// `(y^λ - 1) / λ`, or `ln y` when `λ ≈ 0`.
pub fn box_cox_transform<T: Scalar>(y: T, lambda: T) -> Result<T> {
    ensure!(y > T::zero(), InvalidArgument, "Box-Cox input must be positive, got {y}");
    Ok(box_cox_unchecked(y, lambda))
}

#[inline]
fn box_cox_unchecked<T: Scalar>(y: T, lambda: T) -> T {
    if lambda.abs() <= T::lit(LAMBDA_ZERO_EPS) {
        y.ln()
    } else {
        (lambda * y.ln()).exp_m1() / lambda
    }
}

/// Profile log-likelihood of the Box-Cox model at `lambda` (additive constants dropped).
pub fn box_cox_log_likelihood<T: Scalar>(sample: &[T], lambda: T) -> T {
    let n = T::from_usize_lossy(sample.len());
    let transformed: Vec<T> = sample.iter().map(|&y| box_cox_unchecked(y, lambda)).collect();
    let mean = transformed.iter().copied().sum::<T>() / n;
    let var = transformed.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    let log_sum: T = sample.iter().map(|y| y.ln()).sum();
    -T::lit(0.5) * n * var.ln() + (lambda - T::one()) * log_sum
}

/// Maximum-likelihood Box-Cox λ over [-5, 5].
///
/// A coarse grid locates the best cell, then golden-section search refines it.
pub fn box_cox_lambda<T: Scalar>(sample: &[T]) -> Result<T> {
    ensure!(sample.len() >= 3, InvalidArgument, "Box-Cox needs at least 3 values, got {}", sample.len());
    ensure!(
        sample.iter().all(|&y| y > T::zero() && y.is_finite()),
        InvalidArgument,
        "Box-Cox input must be positive and finite"
    );
    let first = sample[0];
    ensure!(
        sample.iter().any(|&y| y != first),
        Degenerate,
        "Box-Cox input has zero variance"
    );

    let (lo, hi) = LAMBDA_BRACKET;
    let step = (hi - lo) / LAMBDA_GRID as f64;
    let llf = |l: f64| {
        let v = box_cox_log_likelihood(sample, T::lit(l)).as_f64();
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let (best, _) = (0..=LAMBDA_GRID)
        .map(|k| (k, llf(lo + step * k as f64)))
        .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    let a = (lo + step * best as f64 - step).max(lo);
    let b = (lo + step * best as f64 + step).min(hi);
    Ok(T::lit(golden_max(llf, a, b, LAMBDA_TOL)))
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// A sample mapped towards N(0, 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSample<T> {
    pub values: Vec<T>,
    /// `None` when no Box-Cox stage was applied.
    pub lambda_bc: Option<T>,
    pub mean: T,
    /// Population standard deviation of the pre-normalization values.
    pub std: T,
}

/// Z-scores with the population variance.
pub fn z_normalize<T: Scalar>(sample: &[T]) -> Result<NormalizedSample<T>> {
    ensure!(sample.len() >= 2, InvalidArgument, "z-normalization needs at least 2 values");
    let n = T::from_usize_lossy(sample.len());
    let mean = sample.iter().copied().sum::<T>() / n;
    let var = sample.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    ensure!(var > T::zero(), Degenerate, "zero variance sample");
    let std = var.sqrt();
    Ok(NormalizedSample {
        values: sample.iter().map(|&x| (x - mean) / std).collect(),
        lambda_bc: None,
        mean,
        std,
    })
}

/// Shift by `shift`, Box-Cox with the ML λ, then z-normalize.
pub fn to_standard_normal<T: Scalar>(sample: &[T], shift: T) -> Result<NormalizedSample<T>> {
    let shifted: Vec<T> = sample.iter().map(|&x| x + shift).collect();
    let lambda = box_cox_lambda(&shifted)?;
    let transformed: Vec<T> = shifted.iter().map(|&y| box_cox_unchecked(y, lambda)).collect();
    let mut out = z_normalize(&transformed)?;
    out.lambda_bc = Some(lambda);
    Ok(out)
}

/// Standard normal CDF.
pub fn normal_cdf<T: Scalar>(x: T) -> T {
    T::lit(0.5 * statrs::function::erf::erfc(-x.as_f64() / std::f64::consts::SQRT_2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult<T> {
    pub statistic: T,
    pub p_value: T,
    pub n: usize,
}

/// One-sample KS test against N(0, 1) with the asymptotic Kolmogorov p-value.
pub fn ks_test_standard_normal<T: Scalar>(sample: &[T]) -> Result<KsResult<T>> {
    ensure!(!sample.is_empty(), InvalidArgument, "KS test needs a non-empty sample");
    ensure!(sample.iter().all(|x| !x.is_nan()), InvalidArgument, "KS sample contains NaN");
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = T::from_usize_lossy(sorted.len());
    let mut d = T::zero();
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal_cdf(x);
        let above = (T::from_usize_lossy(i + 1) / n - cdf).abs();
        let below = (T::from_usize_lossy(i) / n - cdf).abs();
        d = d.max(above).max(below);
    }
    let p = 1.0 - kolmogorov_cdf(n.as_f64().sqrt() * d.as_f64());
    Ok(KsResult {
        statistic: d,
        p_value: T::lit(p.clamp(0.0, 1.0)),
        n: sorted.len(),
    })
}

/// Limiting CDF of `sqrt(n) D_n`.
///
/// Uses the theta-function series `sqrt(2π)/x Σ exp(-(2k-1)²π²/(8x²))` for small
/// `x` and the alternating series `1 - 2 Σ (-1)^(k-1) exp(-2k²x²)` otherwise;
/// both are truncated once a term drops below 1e-12.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let value = if x < 1.18 {
        let mut sum = 0.0;
        for k in 1.. {
            let m = (2 * k - 1) as f64;
            let term = (-(m * m) * PI * PI / (8.0 * x * x)).exp();
            sum += term;
            if term < 1e-12 {
                break;
            }
        }
        (2.0 * PI).sqrt() / x * sum
    } else {
        let mut sum = 0.0;
        for k in 1.. {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-12 {
                break;
            }
        }
        1.0 - 2.0 * sum
    };
    value.clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileMode {
    /// `(1 - α) / α`
    #[default]
    Algorithm,
    /// True upper quantile of F(1, 1).
    Exact,
}

impl std::str::FromStr for QuantileMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algorithm" => Ok(Self::Algorithm),
            "exact" => Ok(Self::Exact),
            other => Err(Error::InvalidArgument(format!("unknown quantile mode `{other}`"))),
        }
    }
}

/// CDF of the F(1, 1) distribution, `I_{x/(x+1)}(1/2, 1/2) = (2/π) atan(sqrt(x))`.
pub fn fisher_1_1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        2.0 / PI * x.sqrt().atan()
    }
}

/// Upper-α quantile of F(1, 1), for `0 < α <= 0.5`.
pub fn fisher_upper_quantile<T: Scalar>(alpha: T, mode: QuantileMode) -> Result<T> {
    let a = alpha.as_f64();
    ensure!(a > 0.0 && a <= 0.5, InvalidArgument, "significance level {a} outside (0, 0.5]");
    let q = match mode {
        // same as (1 - α)/α but lands on exact integers for α = 1/n
        QuantileMode::Algorithm => 1.0 / a - 1.0,
        QuantileMode::Exact => {
            let target = 1.0 - a;
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            while fisher_1_1_cdf(hi) < target {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..400 {
                let mid = 0.5 * (lo + hi);
                if fisher_1_1_cdf(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-13 * hi {
                    break;
                }
            }
            0.5 * (lo + hi)
        }
    };
    Ok(T::lit(q))
}

/// Exponent convention of the density inside the information content.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityConvention {
    /// `-ln((1/2π) exp(-(t² + r²)))`
    #[default]
    FullExponent,
    /// `-ln((1/2π) exp(-(t² + r²)/2))`, the textbook bivariate normal.
    HalfExponent,
}

/// `ln(2π) + t² + r²`
pub fn information_content<T: Scalar>(t: T, r: T) -> T {
    information_content_with(t, r, DensityConvention::FullExponent)
}

pub fn information_content_with<T: Scalar>(t: T, r: T, convention: DensityConvention) -> T {
    let quad = t * t + r * r;
    let ln_2pi = T::lit((2.0 * PI).ln());
    match convention {
        DensityConvention::FullExponent => ln_2pi + quad,
        DensityConvention::HalfExponent => ln_2pi + quad * T::lit(0.5),
    }
}

/// `t² / max(r², ε)`
pub fn fisher_statistic<T: Scalar>(t: T, r: T) -> T {
    t * t / (r * r).max(T::lit(FISHER_EPS))
}

/// `+1` for significant interest, `-1` for significant disinterest, `0` otherwise.
pub fn per_sign<T: Scalar>(t: T, r: T, q: T) -> i8 {
    if fisher_statistic(t, r) > q {
        if t > T::zero() {
            1
        } else {
            -1
        }
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    use super::*;

    fn normal_quantiles(n: usize) -> Vec<f64> {
        let nd = Normal::new(0.0, 1.0).unwrap();
        (1..=n).map(|i| nd.inverse_cdf((i as f64 - 0.5) / n as f64)).collect()
    }

    /// Independent oracle: exhaustive scan of the log-likelihood at step 1e-3.
    fn grid_scan_lambda(sample: &[f64]) -> f64 {
        (0..=10_000)
            .map(|k| -5.0 + k as f64 * 1e-3)
            .map(|l| {
                let t: Vec<f64> = sample
                    .iter()
                    .map(|&y| if l == 0.0 { y.ln() } else { (y.powf(l) - 1.0) / l })
                    .collect();
                let n = t.len() as f64;
                let m = t.iter().sum::<f64>() / n;
                let v = t.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
                (l, -0.5 * n * v.ln() + (l - 1.0) * sample.iter().map(|y| y.ln()).sum::<f64>())
            })
            .fold((0.0, f64::NEG_INFINITY), |a, c| if c.1 > a.1 { c } else { a })
            .0
    }

    #[test]
    fn transform_examples() {
        assert!((box_cox_transform(std::f64::consts::E, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((box_cox_transform(5.0_f64, 1.0).unwrap() - 4.0).abs() < 1e-14);
        assert!((box_cox_transform(4.0_f64, 0.5).unwrap() - 2.0).abs() < 1e-14);
        assert!((box_cox_transform(3.0, 1e-13).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!(box_cox_transform(0.0, 1.0).is_err());
        assert!(box_cox_transform(-2.0_f32, 1.0).is_err());
    }

    #[test]
    fn lambda_for_normal_looking_sample_is_near_one() {
        let sample: Vec<f64> = normal_quantiles(200).into_iter().map(|z| 50.0 + 5.0 * z).collect();
        let lam = box_cox_lambda(&sample).unwrap();
        let oracle = grid_scan_lambda(&sample);
        assert!((lam - oracle).abs() < 2e-3, "{lam} vs {oracle}");
        assert!((lam - 1.0).abs() < 0.5, "{lam}");
    }

    #[test]
    fn lambda_for_lognormal_is_near_zero() {
        let sample: Vec<f64> = normal_quantiles(300).into_iter().map(f64::exp).collect();
        let lam = box_cox_lambda(&sample).unwrap();
        let oracle = grid_scan_lambda(&sample);
        assert!((lam - oracle).abs() < 2e-3, "{lam} vs {oracle}");
        assert!(lam.abs() < 0.01, "{lam}");
    }

    #[test]
    fn lambda_rejects_bad_samples() {
        assert!(matches!(box_cox_lambda(&[2.0, 2.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(box_cox_lambda(&[1.0, 2.0]).is_err());
        assert!(box_cox_lambda(&[1.0, 0.0, 3.0]).is_err());
    }

    #[test]
    fn z_normalize_examples() {
        let z = z_normalize(&[1.0, 2.0, 3.0]).unwrap();
        assert!((z.values[2] - 1.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((z.values[2] - 1.2247).abs() < 1e-4);
        let z = z_normalize(&[3.5, 9.0]).unwrap();
        assert_eq!(z.values, vec![-1.0, 1.0]);
        assert!(z_normalize(&[4.0, 4.0, 4.0]).is_err());
    }

    #[test]
    fn ks_examples() {
        let r = ks_test_standard_normal(&[0.0]).unwrap();
        assert_eq!(r.statistic, 0.5);
        let r = ks_test_standard_normal(&normal_quantiles(200)).unwrap();
        // quantiles come from an approximate inverse CDF, accurate to ~1e-9
        assert!((r.statistic - 1.0 / 400.0).abs() < 1e-9, "{}", r.statistic);
        assert!(r.p_value > 0.99);
        assert!(ks_test_standard_normal::<f64>(&[]).is_err());
    }

    #[test]
    fn kolmogorov_series_branches_agree() {
        // evaluate both series at the switch point region
        for &x in &[0.9, 1.0, 1.1, 1.18, 1.3] {
            let theta = {
                let s: f64 = (1..200)
                    .map(|k| {
                        let m = (2 * k - 1) as f64;
                        (-(m * m) * PI * PI / (8.0 * x * x)).exp()
                    })
                    .sum();
                (2.0 * PI).sqrt() / x * s
            };
            let alt = 1.0
                - 2.0
                    * (1..200)
                        .map(|k| {
                            let kf = k as f64;
                            let t = (-2.0 * kf * kf * x * x).exp();
                            if k % 2 == 1 {
                                t
                            } else {
                                -t
                            }
                        })
                        .sum::<f64>();
            assert!((theta - alt).abs() < 1e-11);
            assert!((kolmogorov_cdf(x) - alt).abs() < 1e-11);
        }
        // well-known critical value: P(K <= 1.3581) = 0.95
        assert!((kolmogorov_cdf(1.3581) - 0.95).abs() < 1e-4);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(fisher_upper_quantile::<f64>(0.05, QuantileMode::Algorithm).unwrap(), 19.0);
        assert_eq!(fisher_upper_quantile(0.5, QuantileMode::Algorithm).unwrap(), 1.0);
        let oracle = (0.475 * PI).tan().powi(2);
        let exact = fisher_upper_quantile(0.05, QuantileMode::Exact).unwrap();
        assert!((exact - oracle).abs() / oracle < 1e-9);
        assert!((exact - 161.45).abs() < 0.01);
        assert!((fisher_upper_quantile(0.5, QuantileMode::Exact).unwrap() - 1.0_f64).abs() < 1e-9);
        assert!(fisher_upper_quantile(0.0, QuantileMode::Exact).is_err());
        assert!(fisher_upper_quantile(0.6, QuantileMode::Algorithm).is_err());
    }

    #[test]
    fn information_content_examples() {
        assert!((information_content(0.0, 0.0) - (2.0 * PI).ln()).abs() < 1e-15);
        assert!((information_content(0.0_f64, 0.0) - 1.8379).abs() < 1e-4);
        let v = information_content(3.7610, 0.0102);
        assert!((v - ((2.0 * PI).ln() + 3.7610f64.powi(2) + 0.0102f64.powi(2))).abs() < 1e-12);
        assert!((v - 15.983).abs() < 1e-3);
        assert_eq!(information_content(-1.3, 0.4), information_content(1.3, 0.4));
        let half = information_content_with(2.0, 0.0, DensityConvention::HalfExponent);
        assert!((half - ((2.0 * PI).ln() + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn sign_examples() {
        assert_eq!(per_sign(3.7610, 0.0102, 19.0), 1);
        assert_eq!(per_sign(-0.8195, 1.0232, 19.0), 0);
        assert_eq!(per_sign(-2.0, 0.1, 19.0), -1);
        assert_eq!(per_sign(0.5, 0.0, 19.0), 1);
        assert_eq!(per_sign(0.0, 0.0, 19.0), 0);
    }

    proptest! {
        #[test]
        fn standard_normal_map_preserves_order(raw in prop::collection::vec(0.0f64..500.0, 5..40)) {
            prop_assume!(raw.iter().any(|&x| x != raw[0]));
            let z = to_standard_normal(&raw, 1.0).unwrap();
            for i in 0..raw.len() {
                for j in 0..raw.len() {
                    if raw[i] < raw[j] {
                        prop_assert!(z.values[i] < z.values[j]);
                    }
                }
            }
            let n = z.values.len() as f64;
            let mean = z.values.iter().sum::<f64>() / n;
            let var = z.values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }

        #[test]
        fn exact_quantile_decreases_in_alpha(a in 0.001f64..0.49, da in 0.001f64..0.01) {
            let q1 = fisher_upper_quantile(a, QuantileMode::Exact).unwrap();
            let q2 = fisher_upper_quantile((a + da).min(0.5), QuantileMode::Exact).unwrap();
            prop_assert!(q2 < q1);
        }

        #[test]
        fn sign_symmetries(t in -10.0f64..10.0, r in -3.0f64..3.0, q in 0.5f64..50.0) {
            prop_assert_eq!(per_sign(t, r, q), per_sign(t, -r, q));
            if fisher_statistic(t, r) > q && t != 0.0 {
                prop_assert_eq!(per_sign(t, r, q), -per_sign(-t, r, q));
            }
        }

        #[test]
        fn information_content_lower_bound(t in -10.0f64..10.0, r in -10.0f64..10.0) {
            let v = information_content(t, r);
            prop_assert!(v >= (2.0 * PI).ln());
            if t != 0.0 || r != 0.0 {
                prop_assert!(v > (2.0 * PI).ln());
            }
        }
    }
}
