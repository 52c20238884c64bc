//! Normal distribution helpers and empirical quantiles.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function, accurate in the upper tail.
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Inverse of [`norm_sf`], accurate for small `q`.
pub fn norm_isf(q: f64) -> f64 {
    -norm_quantile(q)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Probability that a standard normal falls in `[lo, hi)`, computed on the
/// side of zero that keeps precision.
pub fn norm_interval(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return 0.0;
    }
    if lo >= 0.0 {
        (norm_sf(lo) - norm_sf(hi)).max(0.0)
    } else if hi <= 0.0 {
        (norm_cdf(hi) - norm_cdf(lo)).max(0.0)
    } else {
        (1.0 - norm_cdf(lo) - norm_sf(hi)).max(0.0)
    }
}

/// Natural log of the upper-tail probability, usable far beyond the range
/// where the probability itself underflows.
pub fn log_norm_sf(x: f64) -> f64 {
    if x < 30.0 {
        return norm_sf(x).ln();
    }
    let z2 = x * x;
    // asymptotic series of the Mills ratio
    -0.5 * z2 - x.ln() - LN_SQRT_2PI + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)).ln()
}

/// Natural log of [`norm_interval`], accurate in either tail.
pub fn log_norm_interval(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return f64::NEG_INFINITY;
    }
    let p = norm_interval(lo, hi);
    if p > 1e-280 {
        return p.ln();
    }
    let (a, b) = if lo >= 0.0 { (lo, hi) } else { (-hi, -lo) };
    let la = log_norm_sf(a);
    if b == f64::INFINITY {
        return la;
    }
    la + (-(log_norm_sf(b) - la).exp()).ln_1p()
}

/// Empirical quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile of an unsorted sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// One-sample Kolmogorov-Smirnov statistic of `values` against `cdf`.
pub fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Distribution function obtained by integrating an unnormalised density on
/// a bounded interval with Simpson's rule, then interpolating linearly
/// between grid points.
#[derive(Clone, Debug)]
pub struct TabulatedCdf {
    lo: f64,
    step: f64,
    cum: Vec<f64>,
}

impl TabulatedCdf {
    /// Tabulates `density` over `[lo, hi]` with `cells` Simpson panels.
    pub fn from_density(density: impl Fn(f64) -> f64, lo: f64, hi: f64, cells: usize) -> Self {
        assert!(hi > lo && cells > 0, "empty integration range");
        let step = (hi - lo) / cells as f64;
        let mut cum = Vec::with_capacity(cells + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for k in 0..cells {
            let a = lo + k as f64 * step;
            acc += step / 6.0 * (density(a) + 4.0 * density(a + 0.5 * step) + density(a + step));
            cum.push(acc);
        }
        for c in &mut cum {
            *c /= acc;
        }
        TabulatedCdf { lo, step, cum }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        if pos <= 0.0 {
            return 0.0;
        }
        let k = pos.floor() as usize;
        if k + 1 >= self.cum.len() {
            return 1.0;
        }
        let frac = pos - k as f64;
        self.cum[k] + frac * (self.cum[k + 1] - self.cum[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_reference_values() {
        assert!((norm_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!((norm_sf(8.0) - 6.220_960_574_271_785e-16).abs() < 1e-27);
        assert!((norm_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-10);
        assert!((norm_isf(1e-20) - 9.262_340_089_798_408).abs() < 1e-8);
        assert!((norm_interval(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-12);
        assert!((norm_interval(10.0, f64::INFINITY) - 7.619_853_024_160_527e-24).abs() < 1e-35);
        // log survival at 40 and 50 (high-precision reference values)
        assert!((log_norm_sf(40.0) - (-804.608_442_013_754_3)).abs() < 1e-9);
        assert!((log_norm_sf(29.999) - log_norm_sf(30.0)).abs() < 0.04);
        assert!((log_norm_interval(-1.0, 1.0) - 0.682_689_492_137_085_9f64.ln()).abs() < 1e-12);
        let far = log_norm_interval(-60.0, -50.0);
        assert!((far - log_norm_sf(50.0)).abs() < 1e-9);
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.025) - 1.075).abs() < 1e-12);
        assert_eq!(quantile(&[3.0], 0.9), 3.0);
    }

    #[test]
    fn ks_statistic_of_a_perfect_grid() {
        let v: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        assert!((ks_statistic(&v, |x| x) - 0.05).abs() < 1e-15);
        assert!((ks_statistic(&[0.0], |x| x) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tabulated_normal_matches_closed_form() {
        let t = TabulatedCdf::from_density(norm_pdf, -9.0, 9.0, 4000);
        for x in [-3.0, -1.0, 0.0, 0.3, 2.5] {
            assert!((t.cdf(x) - norm_cdf(x)).abs() < 1e-6, "{x}");
        }
        assert_eq!(t.cdf(-20.0), 0.0);
        assert_eq!(t.cdf(20.0), 1.0);
    }
}
