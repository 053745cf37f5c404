use rcd_core::boundary::BoundarySpec;
use rcd_core::calibration::{calibrate, CalibrationMethod, CalibrationOptions, EnvelopeLaw};
use rcd_core::delay::{delay_asymptotic, solve_delay, uniform_delay};
use rcd_core::detectors::{CusumState, StoppingRule};
use rcd_core::experiments::{estimate_delay, estimate_false_alarm, run_grid, sweep, ExperimentConfig, RuleConfig};
use rcd_core::model::{ChangeModel, ChangeTime, GaussianShift};
use rcd_core::rng::{stream_rng, trial_seed};
use rcd_core::RuleKind;

fn gauss() -> GaussianShift<f64> {
    GaussianShift::new(1.0).unwrap()
}

/// The excess of the no-change CUSUM path over the boundary is dominated
/// by the envelope law, up to the 99% DKW band.
#[test]
fn cusum_excess_dominated_by_envelope() {
    let model = gauss();
    let spec = BoundarySpec::new(1, 1.0).unwrap();
    let law = EnvelopeLaw::new(&spec, 1e-9).unwrap();
    let levels: Vec<f64> = (1..=2000).map(|k| spec.value(k)).collect();
    let n = 20_000;
    let mut maxima: Vec<f64> = (0..n)
        .map(|i| {
            let mut rng = stream_rng(trial_seed(77, i), 0);
            let mut state = CusumState::new();
            let mut best = f64::NEG_INFINITY;
            for b in &levels {
                state = state.update(model.llr(model.sample_pre(&mut rng))).unwrap();
                best = best.max(state.m_stat - b);
            }
            best
        })
        .collect();
    maxima.sort_by(f64::total_cmp);
    let band = ((2.0f64 / 0.01).ln() / (2.0 * n as f64)).sqrt();
    for x in [-0.5, 0.0, 0.5, 1.0, 2.0, 3.0, 4.0] {
        let above = maxima.iter().filter(|&&m| m >= x).count() as f64 / n as f64;
        let envelope = law.log_cdf(x).unwrap().survival_upper();
        assert!(above <= envelope + band, "x={x}: {above} vs {envelope}");
    }
}

/// `{tau < theta}` estimated from change-at-theta paths agrees with the
/// estimate from independent no-change paths cut at `theta - 1`.
#[test]
fn pre_change_law_identity() {
    let model = gauss();
    let rules = vec![
        ("cusum".to_string(), StoppingRule::cusum(0.05).unwrap()),
        ("sr".to_string(), StoppingRule::shiryaev_roberts(20.0).unwrap()),
        ("bayes".to_string(), StoppingRule::bayes_geometric(0.01, 0.05).unwrap()),
    ];
    for theta in [5u64, 50, 150] {
        let res = run_grid(&model, &rules, &[ChangeTime::At(theta)], 4_000, theta + 400, 1, None).unwrap();
        for (label, rule) in &rules {
            let row = res.row(label, ChangeTime::At(theta)).unwrap();
            let (p, se) = estimate_false_alarm(&model, rule, ChangeTime::At(theta), 4_000, 0, 999).unwrap();
            let joint = (se * se + row.alpha_se * row.alpha_se).sqrt();
            assert!((p - row.alpha_hat).abs() <= 3.0 * joint + 1e-12, "{label} theta={theta}: {p} vs {}", row.alpha_hat);
        }
        // same seeds: identical counts
        for (label, rule) in &rules {
            let row = res.row(label, ChangeTime::At(theta)).unwrap();
            let (p, _) = estimate_false_alarm(&model, rule, ChangeTime::At(theta), 4_000, 0, 1).unwrap();
            assert_eq!(p, row.alpha_hat);
        }
    }
}

#[test]
fn cusum_false_alarm_at_long_horizon() {
    let (p, _) =
        estimate_false_alarm(&gauss(), &StoppingRule::cusum(0.05).unwrap(), ChangeTime::At(10_000), 2_000, 10_000, 4)
            .unwrap();
    assert!(p > 0.9, "{p}");
}

#[test]
fn uniform_prior_delay_at_eighty() {
    let est = estimate_delay(&gauss(), &StoppingRule::uniform_prior(0.05).unwrap(), 80, 4_000, 2_000, 6).unwrap();
    let target = uniform_delay(0.05, 80, 0.5, 0.5).unwrap();
    assert!(((est.delta_hat - target) / target).abs() < 0.1, "{est:?}");
    assert_eq!(est.censored, 0);
}

#[test]
fn robust_delay_tracks_asymptotics() {
    let spec = BoundarySpec::new(1, 1.0).unwrap();
    let t = calibrate(&spec, 0.05, CalibrationMethod::ProductCdf, &CalibrationOptions::default()).unwrap();
    // the expansion's constant assumes t = log(1/(alpha eps)); the calibrated
    // offset differs from it by a fixed amount
    let offset = (t.value - (1.0f64 / 0.05).ln()) / 0.5;
    let mut prev = f64::INFINITY;
    for theta in [100u64, 1_000, 10_000, 100_000] {
        let d = solve_delay(&spec, &t, theta, 0.5).unwrap();
        let gap = (d.value - delay_asymptotic(&spec, 0.05, theta, 0.5).unwrap() - offset).abs();
        assert!(gap < prev, "theta={theta}: {gap}");
        prev = gap;
    }
    assert!(prev < 0.05);
}

#[test]
fn five_rule_sweep_shape() {
    let mut bayes = RuleConfig::new(RuleKind::BayesGeometric, 0.05);
    bayes.gamma = Some(0.005);
    let rules = vec![
        bayes,
        RuleConfig::new(RuleKind::UniformPrior, 0.05),
        RuleConfig::new(RuleKind::CusumMl, 0.05),
        RuleConfig::new(RuleKind::ShiryaevRoberts, 0.05),
        RuleConfig::new(RuleKind::RobustBoundary, 0.05),
    ];
    let thetas = [20u64, 50, 80, 200];
    let mut cfg = ExperimentConfig::new(1.0, rules, thetas.map(ChangeTime::At).to_vec());
    cfg.trials = 3_000;
    cfg.master_seed = 12;
    let res = sweep(&cfg).unwrap();
    let series = |rule: &str| -> Vec<(f64, f64, f64)> {
        thetas
            .iter()
            .map(|&t| {
                let r = res.row(rule, ChangeTime::At(t)).unwrap();
                (r.alpha_hat, r.alpha_se, r.delta_hat)
            })
            .collect()
    };
    // uniform prior: delay grows like theta
    let u = series("uniform_prior");
    assert!(u[3].2 - u[0].2 > 150.0);
    // constant-threshold rules: flat delays, growing false alarms
    for rule in ["cusum_ml", "shiryaev_roberts", "bayes_geometric"] {
        let s = series(rule);
        let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0f64), |(l, h), x| (l.min(x.2), h.max(x.2)));
        assert!(hi < 25.0 && hi - lo < 5.0, "{rule}: {s:?}");
        assert!(s[3].0 > s[0].0, "{rule}: {s:?}");
    }
    assert!(series("cusum_ml")[3].0 > 0.5);
    assert!(series("shiryaev_roberts")[3].0 > 0.5);
    // robust rule: controlled false alarms, slowly growing delay
    let r = series("robust_boundary");
    for x in &r {
        assert!(x.0 <= 0.05 + 3.0 * x.1);
    }
    assert!(r[3].2 > r[0].2 && r[3].2 - r[0].2 < 10.0);
}
