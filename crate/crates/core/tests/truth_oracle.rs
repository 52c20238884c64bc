//! The simulation oracle against direct numerical integration in the
//! bias-free case, where an examiner pair's latent depths are bivariate
//! normal given a shared normal log θ.

use probecal_core::agreement::PairKey;
use probecal_core::censoring::{censor_log, cell_probability};
use probecal_core::data::{Examiner, ExaminerPair};
use probecal_core::numeric::norm_pdf;
use probecal_core::simulate::{truth_agreement, TruthMode, TruthParams};

const CATEGORIES: usize = 16;

/// Quadratic weighted kappa and the two percentage indices of a table of
/// cell probabilities.
fn indices(p: &[[f64; CATEGORIES]; CATEGORIES]) -> (f64, f64, f64) {
    let rows: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..CATEGORIES).map(|j| p.iter().map(|r| r[j]).sum()).collect();
    let (mut obs, mut chance, mut exact, mut within) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..CATEGORIES {
        for j in 0..CATEGORIES {
            let d = (i as f64 - j as f64).powi(2);
            obs += d * p[i][j];
            chance += d * rows[i] * cols[j];
            if i == j {
                exact += p[i][j];
            }
            if i.abs_diff(j) <= 1 {
                within += p[i][j];
            }
        }
    }
    (1.0 - obs / chance, 100.0 * exact, 100.0 * within)
}

/// Cell probabilities by integrating over log θ on a fine grid. `second`
/// of `None` compares against the censored true depth.
fn integrated_table(mu: f64, var: f64, sd_first: f64, sd_second: Option<f64>) -> [[f64; CATEGORIES]; CATEGORIES] {
    let sd = var.sqrt();
    let n = 50_000;
    let (lo, hi) = (mu - 10.0 * sd, mu + 10.0 * sd);
    let h = (hi - lo) / n as f64;
    let mut p = [[0.0; CATEGORIES]; CATEGORIES];
    for k in 0..n {
        let x = lo + (k as f64 + 0.5) * h;
        let w = norm_pdf((x - mu) / sd) / sd * h;
        let first: Vec<f64> = (0..CATEGORIES as u8).map(|u| cell_probability(u, x, sd_first)).collect();
        match sd_second {
            Some(s2) => {
                for (i, pi) in first.iter().enumerate() {
                    for j in 0..CATEGORIES {
                        p[i][j] += w * pi * cell_probability(j as u8, x, s2);
                    }
                }
            }
            None => {
                let j = censor_log(x) as usize;
                for (i, pi) in first.iter().enumerate() {
                    p[i][j] += w * pi;
                }
            }
        }
    }
    p
}

fn bias_free() -> TruthParams {
    TruthParams {
        bias_rules: Vec::new(),
        ..TruthParams::reference_scenario()
    }
}

fn assert_close(label: &str, oracle: f64, se: f64, exact: f64) {
    let tol = 4.5 * se + 1e-9;
    assert!((oracle - exact).abs() <= tol, "{label}: oracle {oracle} vs integral {exact} (tolerance {tol})");
}

#[test]
fn oracle_matches_bivariate_normal_integration() {
    let params = bias_free();
    let var = params.sigma_b.powi(2) + params.sigma_eps.powi(2);
    let sd = params.sigma;
    let cases = [
        (PairKey::Pair(ExaminerPair::new(Examiner::A, Examiner::S)), sd.a, Some(sd.s)),
        (PairKey::Pair(ExaminerPair::new(Examiner::B, Examiner::C)), sd.b, Some(sd.c)),
        (PairKey::Pair(ExaminerPair::new(Examiner::B, Examiner::B)), sd.b, Some(sd.b)),
        (PairKey::Truth(Examiner::C), sd.c, None),
    ];
    for (k, (key, s1, s2)) in cases.into_iter().enumerate() {
        let (kappa, exact, within) = indices(&integrated_table(params.mu, var, s1, s2));
        for mode in [TruthMode::Exact, TruthMode::MarginalMixture] {
            let t = truth_agreement(&params, key, 1_000_000, 40 + k as u64, mode).unwrap();
            let label = format!("{} {mode:?}", key.label());
            assert_close(&format!("{label} kappa"), t.indices.kappa.unwrap(), t.kappa_se, kappa);
            assert_close(&format!("{label} exact"), t.indices.p_exact, t.p_exact_se, exact);
            assert_close(&format!("{label} within"), t.indices.p_within1, t.p_within1_se, within);
        }
    }
}

#[test]
fn integration_reference_is_self_consistent() {
    let p = integrated_table(1.0, 0.13, 0.1, Some(0.1));
    let total: f64 = p.iter().flatten().sum();
    assert!((total - 1.0).abs() < 1e-9);
    let (kappa, exact, within) = indices(&p);
    assert!(kappa > 0.0 && kappa < 1.0);
    assert!(exact <= within && within <= 100.0);
}
