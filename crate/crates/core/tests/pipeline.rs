//! End-to-end checks of posterior summaries on small simulated datasets.

use probecal_core::agreement::{posterior_predictive_agreement, AgreementError, PairKey, PredictiveOptions};
use probecal_core::censoring::cell_probability;
use probecal_core::data::{CalibrationDataset, Examiner, ExaminerPair};
use probecal_core::diagnostics::{dic3, DiagnosticsError};
use probecal_core::inference::{run_chains, FitData, ModelSpec, ModelVariant, PosteriorSamples, RunConfig};
use probecal_core::simulate::{simulate_dataset, Design, TruthParams};

fn small_data(n_subjects: usize, seed: u64) -> CalibrationDataset {
    let pairs = ["AS", "BC", "CS", "AB"].map(|p| p.parse::<ExaminerPair>().unwrap());
    let params = TruthParams {
        n_subjects,
        design: Design::uniform(n_subjects, pairs),
        ..TruthParams::reference_scenario()
    };
    simulate_dataset(&params, seed).unwrap().0
}

fn short_run(data: &CalibrationDataset, variant: ModelVariant, n_chains: usize, n_keep: usize) -> PosteriorSamples {
    let config = RunConfig {
        n_chains,
        burn_in: 200,
        n_keep,
        thin: 1,
        seed: 17,
        retain_latent: false,
    };
    run_chains(data, &ModelSpec::new(variant), &config).unwrap()
}

/// −2 Σ log P(recorded cell) for one draw, computed record by record.
fn deviance_of_draw(samples: &PosteriorSamples, data: &CalibrationDataset, chain: usize, draw: usize) -> Vec<f64> {
    let fit = FitData::new(data);
    let d = samples.draw(chain, draw);
    (0..fit.n_records())
        .map(|r| {
            let beta = fit.record_unit[r].map_or(0.0, |(ri, u)| d.beta(ri, u));
            let mean = d.log_theta()[fit.record_site[r]] as f64 + beta;
            cell_probability(fit.record_depth[r], mean, d.sigma()[fit.record_examiner[r]])
        })
        .collect()
}

#[test]
fn dic3_of_a_single_draw_is_its_deviance() {
    let data = small_data(2, 1);
    let s = short_run(&data, ModelVariant::Model3, 1, 1);
    let report = dic3(&s, &data).unwrap();
    let deviance: f64 = -2.0 * deviance_of_draw(&s, &data, 0, 0).iter().map(|p| p.ln()).sum::<f64>();
    assert_eq!(report.n_draws, 1);
    assert_eq!(report.n_observations, data.records().len());
    assert!((report.dic3 - deviance).abs() < 1e-8 * deviance.abs());
    assert!((report.expected_deviance - 2.0 * deviance).abs() < 1e-8 * deviance.abs());
}

#[test]
fn dic3_over_two_draws_matches_hand_formula() {
    let data = small_data(2, 2);
    let s = short_run(&data, ModelVariant::Model1, 2, 1);
    let p0 = deviance_of_draw(&s, &data, 0, 0);
    let p1 = deviance_of_draw(&s, &data, 1, 0);
    let mean_loglik: f64 = p0.iter().zip(&p1).map(|(a, b)| 0.5 * (a.ln() + b.ln())).sum();
    let log_fhat: f64 = p0.iter().zip(&p1).map(|(a, b)| (0.5 * (a + b)).ln()).sum();
    let expected = -4.0 * mean_loglik + 2.0 * log_fhat;
    let report = dic3(&s, &data).unwrap();
    assert!((report.dic3 - expected).abs() < 1e-8 * expected.abs(), "{} vs {expected}", report.dic3);
}

#[test]
fn summaries_reject_samples_from_another_dataset() {
    let data = small_data(2, 3);
    let other = small_data(3, 3);
    let s = short_run(&data, ModelVariant::Model2, 1, 5);
    assert!(matches!(dic3(&s, &other), Err(DiagnosticsError::Mismatch(_))));
    assert!(matches!(
        posterior_predictive_agreement(&s, &other, &PredictiveOptions::new(10, 1)),
        Err(AgreementError::Mismatch(_))
    ));
}

#[test]
fn single_replicate_collapses_every_interval() {
    let data = small_data(2, 4);
    let s = short_run(&data, ModelVariant::Model3, 2, 20);
    let out = posterior_predictive_agreement(&s, &data, &PredictiveOptions::new(1, 3)).unwrap();
    assert_eq!(out.n_rep, 1);
    for row in &out.table.rows {
        let p = row.predictive.unwrap();
        for est in [Some(p.p_exact), Some(p.p_within1), p.kappa].into_iter().flatten() {
            assert_eq!(est.lower, est.median);
            assert_eq!(est.upper, est.median);
            assert_eq!(est.n_used, 1);
        }
    }
}

#[test]
fn predictive_table_is_reproducible_and_ordered() {
    let data = small_data(2, 5);
    let s = short_run(&data, ModelVariant::Model3, 2, 100);
    let opts = PredictiveOptions::new(200, 9);
    let a = posterior_predictive_agreement(&s, &data, &opts).unwrap();
    let b = posterior_predictive_agreement(&s, &data, &opts).unwrap();
    assert_eq!(a, b);
    assert!(!a.resampled);

    let keys: Vec<PairKey> = a.table.rows.iter().map(|r| r.pair).collect();
    let expected: Vec<PairKey> = PairKey::table_order()
        .into_iter()
        .filter(|k| match k {
            PairKey::Pair(p) => ["AS", "BC", "CS", "AB"].contains(&p.label().as_str()),
            PairKey::Truth(_) => true,
        })
        .collect();
    assert_eq!(keys, expected);

    for (key, series) in &a.replicates {
        assert_eq!(series.len(), 200);
        for ix in series {
            assert!(ix.p_exact <= ix.p_within1, "{}", key.label());
            assert!(ix.kappa.is_none_or(|k| k <= 1.0));
        }
    }
    for row in &a.table.rows {
        let p = row.predictive.unwrap();
        assert!(p.p_exact.lower <= p.p_exact.median && p.p_exact.median <= p.p_exact.upper);
        assert!(p.p_exact.median <= p.p_within1.median);
        assert!(row.observed.is_some() == matches!(row.pair, PairKey::Pair(_)));
    }

    let more = posterior_predictive_agreement(&s, &data, &PredictiveOptions::new(500, 9)).unwrap();
    assert!(more.resampled);
}

#[test]
fn noiseless_examiners_agree_perfectly_with_truth() {
    let data = small_data(2, 6);
    let mut s = short_run(&data, ModelVariant::Model1, 1, 30);
    for c in &mut s.chains {
        for sd in &mut c.sigma {
            *sd = [1e-9; 4];
        }
    }
    let out = posterior_predictive_agreement(&s, &data, &PredictiveOptions::new(30, 2)).unwrap();
    for e in Examiner::ALL {
        let p = out.table.row(PairKey::Truth(e)).unwrap().predictive.unwrap();
        assert_eq!(p.p_exact.lower, 100.0, "{e}");
    }
    let p = out.table.row(PairKey::Pair(ExaminerPair::new(Examiner::B, Examiner::C))).unwrap().predictive.unwrap();
    assert_eq!(p.p_exact.median, 100.0);
}
