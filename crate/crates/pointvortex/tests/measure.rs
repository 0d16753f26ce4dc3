use std::f64::consts::{LN_2, PI};

use pointvortex::measure::{
    ensemble_statistics, sample_configurations, sample_positions, verify_greens, verify_inequality_suite_with,
    verify_pointwise_bounds, verify_pointwise_bounds_with, EnsembleOptions, InequalityOptions, KernelFault,
    MeasureError, Verdict,
};
use pointvortex::{DomainModel, HolomorphicMap};
use num_complex::Complex64;

#[test]
fn uniform_disk_second_moment() {
    let n = 100_000;
    let (pos, _) = sample_positions(&DomainModel::disk(), 1, n, 11).unwrap();
    let r2: Vec<f64> = pos.iter().map(|p| p[0].norm_sqr()).collect();
    let mean = r2.iter().sum::<f64>() / n as f64;
    // |x|^2 is uniform on [0, 1] for a uniform point in the disk.
    let sigma = (1.0 / 12.0 / n as f64).sqrt();
    assert!((mean - 0.5).abs() < 3.0 * sigma, "{mean}");
}

#[test]
fn annulus_acceptance_matches_area_ratio() {
    let (_, stats) = sample_positions(&DomainModel::annulus(0.5).unwrap(), 1, 40_000, 12).unwrap();
    // Draws come from the bounding square, so the disk's share pi/4 is factored out.
    let ratio = stats.acceptance_rate() / (PI / 4.0);
    assert!((ratio - 0.75).abs() < 0.01, "{ratio}");
}

#[test]
fn sampling_is_deterministic_and_valid() {
    let d = DomainModel::mapped(HolomorphicMap::polynomial(Complex64::new(0.2, 0.0)).unwrap()).unwrap();
    let a = sample_configurations(&d, 3, 50, 9).unwrap();
    assert_eq!(a, sample_configurations(&d, 3, 50, 9).unwrap());
    assert_ne!(a, sample_configurations(&d, 3, 50, 10).unwrap());
    for x in &a {
        x.validate(&d).unwrap();
    }
    assert!(matches!(sample_configurations(&d, 3, 0, 9), Err(MeasureError::InvalidParameter(_))));
}

#[test]
fn single_vortex_never_collapses() {
    let d = DomainModel::disk();
    let grid = [1e-2, 1e-3, 1e-4];
    let r = ensemble_statistics(&d, 1, &[1.0], 200, 5.0, &grid, 3, &EnsembleOptions::default()).unwrap();
    let (pos, _) = sample_positions(&d, 1, 200, 3).unwrap();
    let dmin = pos.iter().map(|p| d.distance_to_boundary(p[0])).fold(f64::INFINITY, f64::min);
    for &delta in grid.iter().filter(|&&g| g < dmin) {
        assert_eq!(r.collapse_fraction(delta), Some(0.0));
    }
    assert_eq!(r.terminations.horizon, 200);
}

#[test]
fn equal_pair_collapse_curve_decreases() {
    let grid = [1e-1, 3e-2, 1e-2, 3e-3];
    let r = ensemble_statistics(&DomainModel::disk(), 2, &[1.0, 1.0], 500, 10.0, &grid, 21, &EnsembleOptions::default())
        .unwrap();
    let fractions: Vec<f64> = r.collapse_fraction.iter().map(|e| e.fraction).collect();
    assert!(fractions.windows(2).all(|w| w[1] < w[0]), "{fractions:?}");
    for e in &r.collapse_fraction {
        assert!((0.0..=1.0).contains(&e.fraction));
        assert!(e.ci_low <= e.fraction && e.fraction <= e.ci_high);
    }
    let csv = r.collapse_csv();
    assert_eq!(csv.lines().count(), grid.len() + 1);
}

#[test]
fn ensemble_is_reproducible() {
    let d = DomainModel::annulus(0.3).unwrap();
    let run = || ensemble_statistics(&d, 2, &[1.0, -0.5], 60, 2.0, &[1e-2], 5, &EnsembleOptions::default()).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn disk_pointwise_bounds_follow_closed_forms() {
    let r = verify_pointwise_bounds(&DomainModel::disk(), 2000, 1).unwrap();
    assert_eq!(r.violations, 0);
    assert!(r.max_gap <= LN_2 + 1e-12 && r.max_gap > LN_2 - 1e-3, "{}", r.max_gap);
    assert!(r.max_gradient_distance <= 1.0 / (2.0 * PI) + 1e-9, "{}", r.max_gradient_distance);
    assert!(r.blowup_monotone);
    assert_eq!(r.strata.len(), 5);
}

#[test]
fn annulus_field_pairing_is_stable_under_refinement() {
    let r = verify_pointwise_bounds(&DomainModel::annulus(0.5).unwrap(), 2000, 2).unwrap();
    assert_eq!(r.violations, 0);
    let pairing: Vec<f64> = r.strata.iter().map(|s| s.max_field_pairing.unwrap()).collect();
    // Robin gradient is radial and the harmonic field tangential, so the
    // pairing is round-off even where |grad gamma~| ~ 1/d is huge.
    for (s, p) in r.strata.iter().zip(&pairing) {
        assert!(p * s.distance < 1e-12, "{pairing:?}");
    }
}

#[test]
fn corrupted_robin_is_caught() {
    let out = verify_pointwise_bounds_with(&DomainModel::disk(), 1000, 1, Some(KernelFault::RobinShift(0.5)));
    match out {
        Err(MeasureError::BoundViolation { violations, .. }) => assert!(violations > 0),
        other => panic!("expected a violation, got {other:?}"),
    }
    assert!(verify_pointwise_bounds(&DomainModel::disk(), 999, 1).is_err());
}

#[test]
fn small_inequality_suite_converges() {
    let opts = InequalityOptions {
        base_samples: 20_000,
        phi_samples: 2_000,
        ..InequalityOptions::default()
    };
    let r = verify_inequality_suite_with(&DomainModel::disk(), &opts).unwrap();
    assert_eq!(r.verdict, Verdict::Convergent);
    assert!(r.epsilon_uniform, "{:?}", r.epsilon_spread);
    assert!(r.estimates.iter().all(|s| s.estimates.iter().all(|e| e.is_finite() && *e >= 0.0)));
    let bad = InequalityOptions { kappa: 1.0, ..opts };
    assert!(verify_inequality_suite_with(&DomainModel::disk(), &bad).is_err());
}

#[test]
fn kernel_self_checks_pass_on_every_domain_kind() {
    let domains = [
        DomainModel::disk(),
        DomainModel::annulus(0.4).unwrap(),
        DomainModel::exterior_disk(),
        DomainModel::mapped(HolomorphicMap::polynomial(Complex64::new(0.1, 0.1)).unwrap()).unwrap(),
    ];
    for d in &domains {
        let r = verify_greens(d, 300, 4).unwrap();
        assert!(r.passed, "{}: {r:?}", d.kind());
        assert_eq!(r.negativity_violations, 0);
    }
}
