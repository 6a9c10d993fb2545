//! Distribution functions and small summary statistics.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal quantile `Φ⁻¹(prob)` for `prob` in `(0, 1)`.
pub fn normal_quantile(prob: f64) -> f64 {
    std_normal().inverse_cdf(prob)
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Two-sided p-value of `t` under Student-t with `dof` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    let dist = StudentsT::new(0.0, 1.0, dof).expect("dof must be positive");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample standard deviation with divisor `len - 1`.
pub fn sample_sd(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            got: values.len(),
        });
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (values.len() - 1) as f64).sqrt())
}

/// Population standard deviation (divisor `len`).
pub fn population_sd(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values
        .clone()
        .into_iter()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let m = sum / n as f64;
    let ss: f64 = values.into_iter().map(|v| (v - m) * (v - m)).sum();
    (ss / n as f64).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], prob: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = prob.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Composite Simpson integration of the Student-t density.
    fn t_density(x: f64, nu: f64) -> f64 {
        use statrs::function::gamma::ln_gamma;
        let lc = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
        (lc - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()).exp()
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn t_p_value_matches_quadrature() {
        let nu = 30.0;
        let t = 2.042;
        let central = simpson(|x| t_density(x, nu), -t, t, 20_000);
        let oracle = 1.0 - central;
        let p = student_t_two_sided_p(t, nu);
        assert!((p - oracle).abs() < 1e-9, "p={p} oracle={oracle}");
        assert!((p - 0.05).abs() < 1e-3);
    }

    #[test]
    fn zero_t_has_unit_p() {
        assert!((student_t_two_sided_p(0.0, 10.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normal_quantile_inverts_bisected_cdf() {
        // Oracle: bisection on Simpson-integrated density.
        let cdf = |x: f64| 0.5 + simpson(|u| normal_pdf(u, 0.0, 1.0), 0.0, x, 4_000);
        for &prob in &[0.6, 0.9, 0.975, 0.999, 1.0 - 3.0e-4] {
            let (mut lo, mut hi) = (0.0, 8.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < prob {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((normal_quantile(prob) - lo).abs() < 1e-9, "prob {prob}");
        }
    }

    #[test]
    fn sd_small_vectors() {
        assert_eq!(sample_sd(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((sample_sd(&[0.0, 2.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(sample_sd(&[1.0]), Err(Error::TooFew { .. })));
    }

    #[test]
    fn quantile_interpolates() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 4.0);
        assert!((quantile(&v, 0.5).unwrap() - 2.5).abs() < 1e-15);
    }
}
