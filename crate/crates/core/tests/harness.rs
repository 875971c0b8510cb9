use tonic_core::gating::GatingPolicy;
use tonic_core::harness::{run_sweep, run_trial, PointContext, RunConfig, Variant, World};
use tonic_core::link::{LinkParams, LinkPlan};
use tonic_core::rng::Purpose;
use tonic_core::{ChannelKind, ChannelSpec, Error};

fn small() -> RunConfig {
    RunConfig {
        channels: vec![ChannelKind::Awgn],
        snr_db: vec![200.0],
        trials: 100,
        utility_samples: 50,
        profiling_trials: 50,
        calibration_samples: 50,
        ..RunConfig::default()
    }
}

/// Gated variants may still erase correct tokens when completion lowers
/// the loss, so only the ungated ones must be exact end to end.
#[test]
fn noiseless_link_is_perfect() {
    let report = run_sweep(&small()).unwrap();
    assert_eq!(report.points.len(), Variant::ALL.len() * 3);
    for p in &report.points {
        assert_eq!(p.summary.hard_error_rate, 0.0, "{} budget {}", p.variant, p.budget);
        assert_eq!(p.summary.mean_war, 0.0);
        assert!(p.symbols_used <= p.budget);
        if !p.variant.gates() {
            assert_eq!(p.summary.accuracy, 1.0, "{} budget {}", p.variant, p.budget);
            assert_eq!(p.summary.mean_ter, 0.0);
        }
    }
}

#[test]
fn zero_threshold_gating_is_a_no_op() {
    let world = World::build(&RunConfig::default()).unwrap();
    let group_of: Vec<usize> = (0..16).map(|i| i % 4).collect();
    let base = PointContext {
        variant: Variant::Uep,
        plan: LinkPlan::from_group_map(&group_of, vec![2, 1, 0, 3]),
        group_of,
        gating: None,
        params: LinkParams { alphabet_size: 16, power: 1.0, budget: 32, max_iters: 50 },
    };
    let gated = PointContext { variant: Variant::FullGrad, gating: Some(GatingPolicy::accept_all(4)), ..base.clone() };
    let spec = ChannelSpec::new(ChannelKind::Rayleigh);
    for t in 0..300u64 {
        let s = world.sample(5, Purpose::Sample, &[t]);
        let ch = spec.realize(6.0, 1.0, t);
        let a = run_trial(&world, &base, &s, &ch).unwrap();
        let b = run_trial(&world, &gated, &s, &ch).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn budget_below_uncoded_cost_is_rejected() {
    let cfg = RunConfig { budgets: Some(vec![15]), ..small() };
    assert!(matches!(run_sweep(&cfg), Err(Error::InfeasibleBudget { .. })));
}

#[test]
fn explicit_budgets_and_variants_shape_the_report() {
    let cfg = RunConfig { budgets: Some(vec![20, 40]), variants: vec![Variant::Uni, Variant::FullOracle], ..small() };
    let report = run_sweep(&cfg).unwrap();
    assert_eq!(report.budgets, vec![20, 40]);
    assert_eq!(report.points.len(), 4);
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().nth(1).unwrap().contains(",UNI,awgn,200.000000,20,100,"));
    let uni = report.point(Variant::Uni, ChannelKind::Awgn, 200.0, 40).unwrap();
    assert!(uni.thresholds.is_none());
    let full = report.point(Variant::FullOracle, ChannelKind::Awgn, 200.0, 40).unwrap();
    assert_eq!(full.thresholds.as_ref().unwrap().len(), cfg.groups);
}
