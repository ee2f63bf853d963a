//! Small numerical helpers shared across modules: compensated summation,
//! log-sum-exp accumulation, polynomial least squares and the normal CDF.

use nalgebra::{DMatrix, DVector};

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a sequence of floats.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<KahanSum>().value()
}

/// `log(sum(exp(x_i)))`, shifting by the maximum and summing the shifted
/// exponentials with compensation. Returns `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    let s = compensated_sum(values.iter().map(|&v| (v - max).exp()));
    max + s.ln()
}

/// `log(sum(w_i * exp(x_i)))` for nonnegative multiplicities `w_i`.
pub fn log_sum_exp_weighted(values: &[(f64, f64)]) -> f64 {
    let max = values
        .iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    let s = compensated_sum(values.iter().map(|&(w, v)| w * (v - max).exp()));
    max + s.ln()
}

/// Ordinary least-squares fit of `y ≈ Σ_j c_j x^{p_j}` for the given powers.
/// Returns the coefficients and the root-mean-square residual.
pub fn fit_powers(xs: &[f64], ys: &[f64], powers: &[i32]) -> Option<(Vec<f64>, f64)> {
    let rows = xs.len();
    let cols = powers.len();
    if rows < cols || rows != ys.len() || cols == 0 {
        return None;
    }
    let a = DMatrix::from_fn(rows, cols, |i, j| xs[i].powi(powers[j]));
    let b = DVector::from_column_slice(ys);
    let coeffs = a.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let resid = &a * &coeffs - &b;
    let rms = (resid.norm_squared() / rows as f64).sqrt();
    Some((coeffs.iter().copied().collect(), rms))
}

/// Least-squares slope and intercept of `y` against `x`, with RMS residual.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let (c, rms) = fit_powers(xs, ys, &[0, 1])?;
    Some((c[1], c[0], rms))
}

/// Standard normal cumulative distribution function.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Greatest common divisor.
pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Möbius function by trial division.
pub fn mobius(mut n: usize) -> i64 {
    if n == 1 {
        return 1;
    }
    let mut result = 1;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            result = -result;
        }
        p += 1;
    }
    if n > 1 {
        result = -result;
    }
    result
}

/// Divisors of `n` in increasing order.
pub fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n % d == 0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let v = log_sum_exp(&[-1.0, -2.0, -3.0]);
        let direct = ((-1f64).exp() + (-2f64).exp() + (-3f64).exp()).ln();
        assert!((v - direct).abs() < 1e-15);
    }

    #[test]
    fn weighted_log_sum_exp_ignores_zero_weights() {
        let v = log_sum_exp_weighted(&[(0.0, 50.0), (2.0, 0.0)]);
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let s = compensated_sum([1e16, 1.0, -1e16]);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((standard_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((standard_normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-9);
        assert!((standard_normal_cdf(-1.96) - 0.024_997_895_148_220_43).abs() < 1e-9);
    }

    #[test]
    fn mobius_small_values() {
        let expected = [1, -1, -1, 0, -1, 1, -1, 0, 0, 1, -1, 0];
        for (i, &m) in expected.iter().enumerate() {
            assert_eq!(mobius(i + 1), m, "mu({})", i + 1);
        }
    }

    #[test]
    fn linear_fit_exact_line() {
        let xs: Vec<f64> = (0..6).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let (slope, intercept, rms) = linear_fit(&xs, &ys).unwrap();
        assert!((slope - 3.0).abs() < 1e-12);
        assert!((intercept + 1.0).abs() < 1e-12);
        assert!(rms < 1e-12);
    }
}
