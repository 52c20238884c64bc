//! Observed-to-recorded depth rule and the interval events it induces on the
//! log scale.

use crate::data::MAX_DEPTH;
use crate::numeric::norm_interval;

/// Recorded depth for an observed depth `t > 0`: whole millimetres rounded
/// down, capped at 15.
pub fn censor(t: f64) -> u8 {
    if t >= MAX_DEPTH as f64 {
        MAX_DEPTH
    } else if t < 1.0 {
        0
    } else {
        t.floor() as u8
    }
}

/// Recorded depth for a log observed depth.
pub fn censor_log(log_t: f64) -> u8 {
    censor(log_t.exp())
}

/// Half-open interval `[lo, hi)` of log observed depth consistent with a
/// recorded depth.
pub fn log_interval(depth: u8) -> (f64, f64) {
    let u = depth.min(MAX_DEPTH);
    let lo = if u == 0 { f64::NEG_INFINITY } else { (u as f64).ln() };
    let hi = if u == MAX_DEPTH {
        f64::INFINITY
    } else {
        ((u + 1) as f64).ln()
    };
    (lo, hi)
}

/// Whether a latent log observed depth lies in its censoring interval.
pub fn in_interval(depth: u8, log_t: f64) -> bool {
    let (lo, hi) = log_interval(depth);
    log_t >= lo && log_t < hi
}

/// Probability of recording `depth` when log observed depth is
/// N(`mean`, `sd`²).
pub fn cell_probability(depth: u8, mean: f64, sd: f64) -> f64 {
    let (lo, hi) = log_interval(depth);
    norm_interval((lo - mean) / sd, (hi - mean) / sd)
}

/// Interval midpoint on the log scale used to initialise latent depths:
/// log(U + 0.5), with log 0.5 for U = 0 and log 15.5 for U = 15.
pub fn initial_log_depth(depth: u8) -> f64 {
    (depth.min(MAX_DEPTH) as f64 + 0.5).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn censoring_rule() {
        assert_eq!(censor(0.3), 0);
        assert_eq!(censor(1.0), 1);
        assert_eq!(censor(3.999), 3);
        assert_eq!(censor(14.99), 14);
        assert_eq!(censor(15.0), 15);
        assert_eq!(censor(40.0), 15);
    }

    #[test]
    fn intervals_partition_the_line() {
        let mut prev_hi = f64::NEG_INFINITY;
        for u in 0..=MAX_DEPTH {
            let (lo, hi) = log_interval(u);
            assert_eq!(lo, prev_hi);
            prev_hi = hi;
            assert!(in_interval(u, initial_log_depth(u)));
        }
        assert_eq!(prev_hi, f64::INFINITY);
    }

    #[test]
    fn cell_probabilities_sum_to_one() {
        for &(m, s) in &[(1.0, 0.3), (0.0, 0.07), (2.9, 1.5), (-3.0, 0.2)] {
            let total: f64 = (0..=MAX_DEPTH).map(|u| cell_probability(u, m, s)).sum();
            assert!((total - 1.0).abs() < 1e-12, "{m} {s} {total}");
        }
    }
}
