//! Samplers for truncated full conditionals: the normal restricted to a
//! censoring interval, and a standard deviation under a bounded uniform prior.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use super::InferenceError;
use crate::numeric::{norm_cdf, norm_isf, norm_quantile, norm_sf};

/// Beyond this many SDs into a tail the inverse CDF loses precision and a
/// rejection sampler takes over.
const TAIL_START: f64 = 5.0;

/// Attempt budget for every rejection loop.
pub const MAX_REJECTIONS: u64 = 1_000_000;

/// Draws from N(0, 1) restricted to `[lo, hi)`.
pub fn truncated_std_normal<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi, "empty interval [{lo}, {hi})");
    if hi <= 0.0 {
        // mirror so the work happens in the upper half line
        let z = truncated_std_normal(rng, -hi, -lo);
        return clamp_half_open(-z, lo, hi);
    }
    let z = if lo >= TAIL_START {
        upper_tail(rng, lo, hi)
    } else if lo >= 0.0 {
        let (slo, shi) = (norm_sf(lo), norm_sf(hi));
        let u: f64 = rng.random();
        norm_isf(shi + u * (slo - shi))
    } else {
        let (clo, chi) = (norm_cdf(lo), norm_cdf(hi));
        let u: f64 = rng.random();
        norm_quantile(clo + u * (chi - clo))
    };
    clamp_half_open(z, lo, hi)
}

fn clamp_half_open(z: f64, lo: f64, hi: f64) -> f64 {
    if z >= hi {
        hi.next_down().max(lo)
    } else if z < lo || z.is_nan() {
        lo
    } else {
        z
    }
}

/// Tail draw on `[lo, hi)` with `lo ≥ 5`: uniform proposals for narrow
/// intervals, otherwise translated-exponential proposals with the optimal
/// rate.
fn upper_tail<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if (hi - lo) * lo < 1.0 {
        loop {
            let z = lo + (hi - lo) * rng.random::<f64>();
            let u: f64 = rng.random();
            if u.ln() <= 0.5 * (lo * lo - z * z) {
                return z;
            }
        }
    }
    let lambda = 0.5 * (lo + (lo * lo + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = lo + e / lambda;
        if z >= hi {
            continue;
        }
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (z - lambda).powi(2) {
            return z;
        }
    }
}

/// Draws from N(`mean`, `sd`²) restricted to `[lo, hi)`.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let z = truncated_std_normal(rng, (lo - mean) / sd, (hi - mean) / sd);
    clamp_half_open(mean + sd * z, lo, hi)
}

/// Draws a standard deviation from its full conditional under a
/// Uniform(0, `upper`) prior, given `nu` Gaussian residuals with sum of
/// squares `ss`. The precision τ = σ⁻² is Gamma((ν−1)/2, rate ss/2)
/// truncated to τ > upper⁻².
pub fn sample_sd<R: Rng + ?Sized>(rng: &mut R, nu: usize, ss: f64, upper: f64) -> Result<f64, InferenceError> {
    if nu == 0 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return Ok(upper * u);
            }
        }
    }
    // exact zero residuals would make the conditional improper at σ = 0
    let ss = ss.max(1e-12);
    let shape = 0.5 * (nu as f64 - 1.0);
    let rate = 0.5 * ss;
    let x0 = rate / (upper * upper);
    // x = rate · τ follows Gamma(shape, 1) truncated to x > x0
    let x = if nu == 1 {
        reciprocal_exponential_tail(rng, x0)?
    } else if x0 <= shape + 2.0 * shape.sqrt() {
        let g = Gamma::new(shape, 1.0).expect("positive shape");
        let mut tries = 0;
        loop {
            let x: f64 = g.sample(rng);
            if x > x0 {
                break x;
            }
            tries += 1;
            if tries >= MAX_REJECTIONS {
                return Err(InferenceError::RejectionOverflow {
                    sampler: "standard deviation (gamma body)",
                    attempts: tries,
                });
            }
        }
    } else {
        gamma_tail(rng, shape, x0)?
    };
    let sigma = (rate / x).sqrt();
    Ok(sigma.min(upper.next_down()))
}

/// Gamma(`shape`, 1) restricted to `x > x0`, for `x0` well past the mode.
fn gamma_tail<R: Rng + ?Sized>(rng: &mut R, shape: f64, x0: f64) -> Result<f64, InferenceError> {
    let am1 = shape - 1.0;
    let lambda = if am1 > 0.0 { 1.0 - am1 / x0 } else { 1.0 };
    for _ in 0..MAX_REJECTIONS {
        let e: f64 = rng.sample(Exp1);
        let x = x0 + e / lambda;
        let log_accept = if am1 > 0.0 {
            am1 * (x / x0).ln() - am1 * (x - x0) / x0
        } else {
            am1 * (x / x0).ln()
        };
        if rng.random::<f64>().ln() <= log_accept {
            return Ok(x);
        }
    }
    Err(InferenceError::RejectionOverflow {
        sampler: "standard deviation (gamma tail)",
        attempts: MAX_REJECTIONS,
    })
}

/// Density ∝ x⁻¹ e⁻ˣ on x > x0 > 0.
fn reciprocal_exponential_tail<R: Rng + ?Sized>(rng: &mut R, x0: f64) -> Result<f64, InferenceError> {
    if x0 >= 1.0 {
        for _ in 0..MAX_REJECTIONS {
            let x = x0 + rng.sample::<f64, _>(Exp1);
            if rng.random::<f64>() * x <= x0 {
                return Ok(x);
            }
        }
    } else {
        // envelope: x⁻¹ on (x0, 1), e⁻ˣ on [1, ∞)
        let w_low = -x0.ln();
        let w_high = (-1f64).exp();
        for _ in 0..MAX_REJECTIONS {
            if rng.random::<f64>() * (w_low + w_high) < w_low {
                let x = x0 * (-x0.ln() * rng.random::<f64>()).exp();
                if rng.random::<f64>() <= (-x).exp() {
                    return Ok(x);
                }
            } else {
                let x = 1.0 + rng.sample::<f64, _>(Exp1);
                if rng.random::<f64>() * x <= 1.0 {
                    return Ok(x);
                }
            }
        }
    }
    Err(InferenceError::RejectionOverflow {
        sampler: "standard deviation (single residual)",
        attempts: MAX_REJECTIONS,
    })
}

/// Standard normal draw; kept here so every sampler imports from one place.
pub(crate) fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
