use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pointvortex::complexmap::boundary_normal;
use pointvortex::dynamics::{vortex_velocity, EventMonitor, IntegratorOptions, VortexConfiguration};
use pointvortex::greens::{grad_green, grad_robin, green, robin};
use pointvortex::measure::sample_point;
use pointvortex::regularization::{
    build_cutoff, flow_reg, lambda_eps, phi_eps, tau_eps, velocity_reg, FunctionalParams, RegularizedKernels,
    ThresholdMonitor,
};
use pointvortex::{DomainModel, HolomorphicMap};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn domains() -> Vec<DomainModel> {
    vec![
        DomainModel::disk(),
        DomainModel::annulus(0.4).unwrap(),
        DomainModel::exterior_disk(),
        DomainModel::mapped(HolomorphicMap::polynomial(c(0.15, 0.05)).unwrap()).unwrap(),
    ]
}

fn random_config(d: &DomainModel, n: usize, rng: &mut ChaCha8Rng) -> VortexConfiguration {
    let pos = (0..n).map(|_| sample_point(d, rng).unwrap().0).collect();
    let masses = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let xi = (0..d.hole_count()).map(|_| rng.gen_range(-0.5..0.5)).collect();
    VortexConfiguration::new(pos, masses, xi)
}

#[test]
fn disk_pair_below_threshold_is_unregularized() {
    let k = RegularizedKernels::new(&DomainModel::disk(), 1e-3).unwrap();
    let (x, y) = (c(0.5, 0.0), c(-0.5, 0.0));
    let mut m = [0.0; 3];
    ThresholdMonitor { domain: k.domain(), threshold: k.cutoff().threshold() }.margins(&[x, y], &mut m);
    assert!(m.iter().all(|&v| v > 0.0));
    let g = k.green_reg(x, y);
    assert_eq!(g.value, green(&DomainModel::disk(), x, y).unwrap());
    assert_abs_diff_eq!(g.value, -0.0355144, epsilon = 1e-7);
    assert_eq!(k.robin_reg(c(0.0, 0.0)).value, 0.0);
}

#[test]
fn regularized_green_vanishes_on_the_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in domains() {
        let k = RegularizedKernels::new(&d, 1e-3).unwrap();
        for _ in 0..50 {
            let b = d.boundary_point(rng.gen_range(0..d.boundary_components()), rng.gen_range(0.0..2.0 * PI));
            let (y, _) = sample_point(&d, &mut rng).unwrap();
            assert_abs_diff_eq!(k.green_reg(b, y).value, 0.0, epsilon = 1e-14);
        }
    }
    // Exactly representable boundary points give exactly zero.
    let annulus = DomainModel::annulus(0.5).unwrap();
    let k = RegularizedKernels::new(&annulus, 1e-3).unwrap();
    for b in [c(0.5, 0.0), c(0.0, -0.5), c(1.0, 0.0), c(0.0, 1.0)] {
        assert_eq!(k.green_reg(b, c(0.7, 0.1)).value, 0.0);
    }
}

#[test]
fn regularization_never_increases_magnitudes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in domains() {
        for eps in [1e-1, 1e-2, 1e-3] {
            let k = RegularizedKernels::new(&d, eps).unwrap();
            for _ in 0..1000 / (3 * 4) + 1 {
                let (x, _) = sample_point(&d, &mut rng).unwrap();
                let (y, _) = sample_point(&d, &mut rng).unwrap();
                assert!(k.green_reg(x, y).value.abs() <= green(&d, x, y).unwrap().abs() + 1e-15);
                let r = k.robin_reg(x);
                assert!(r.value.abs() <= robin(&d, x).unwrap().abs() + 1e-15);
                assert!(r.gradient.norm() <= grad_robin(&d, x).unwrap().norm() + 1e-15);
            }
        }
    }
}

#[test]
fn scaled_gradient_bound_is_uniform_in_epsilon() {
    let d = DomainModel::disk();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pairs = Vec::new();
    for _ in 0..500 {
        let (x, _) = sample_point(&d, &mut rng).unwrap();
        let y = x + Complex64::from_polar(10f64.powf(rng.gen_range(-7.0..-1.0)), rng.gen_range(0.0..2.0 * PI));
        if d.gap(y) > 0.0 {
            pairs.push((x, y));
        }
    }
    let sup = |eps: f64| {
        let k = RegularizedKernels::new(&d, eps).unwrap();
        pairs.iter().map(|&(x, y)| k.green_reg(x, y).gradient.norm() * (x - y).norm()).fold(0.0, f64::max)
    };
    let plain = pairs.iter().map(|&(x, y)| grad_green(&d, x, y).unwrap().norm() * (x - y).norm()).fold(0.0, f64::max);
    for eps in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
        assert!(sup(eps) <= plain + 1e-12, "eps = {eps}");
    }
}

#[test]
fn velocity_agrees_with_plain_field_below_thresholds() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for trial in 0..1000 {
        let d = &domains()[trial % 2];
        let k = RegularizedKernels::new(d, 1e-4).unwrap();
        let x = random_config(d, 3, &mut rng);
        let mut m = [0.0; 3];
        ThresholdMonitor { domain: d, threshold: k.cutoff().threshold() }.margins(&x.positions, &mut m);
        if m.iter().any(|&v| v <= 0.0) {
            continue;
        }
        checked += 1;
        let v = vortex_velocity(d, &x).unwrap();
        let w = velocity_reg(&k, &x).unwrap();
        for (a, b) in v.iter().zip(&w) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }
    assert!(checked > 900, "{checked}");
}

#[test]
fn velocity_is_total() {
    for d in domains() {
        let k = RegularizedKernels::new(&d, 1e-2).unwrap();
        let b = d.boundary_point(0, 0.4);
        let inner = sample_point(&d, &mut ChaCha8Rng::seed_from_u64(5)).unwrap().0;
        let near = d.boundary_point(0, 1.1) * (1.0 + 1e-9 * if d.kind() == "exterior_disk" { 1.0 } else { -1.0 });
        let stress = [
            vec![inner, inner],
            vec![b, inner],
            vec![b, b, inner],
            vec![near, near + c(1e-12, 0.0), inner],
        ];
        for pos in stress {
            let n = pos.len();
            let x = VortexConfiguration::new(pos, vec![1.0; n], vec![0.3; d.hole_count()]);
            let v = velocity_reg(&k, &x).unwrap();
            assert!(v.iter().all(|p| p.re.is_finite() && p.im.is_finite()), "{}", d.kind());
        }
    }
}

#[test]
fn boundary_vortices_move_tangentially() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for d in domains() {
        let k = RegularizedKernels::new(&d, 1e-3).unwrap();
        for _ in 0..20 {
            let b = d.boundary_point(rng.gen_range(0..d.boundary_components()), rng.gen_range(0.0..2.0 * PI));
            let (y, _) = sample_point(&d, &mut rng).unwrap();
            let x = VortexConfiguration::new(vec![b, y], vec![1.0, -0.7], vec![0.25; d.hole_count()]);
            let v = velocity_reg(&k, &x).unwrap()[0];
            let n = boundary_normal(&d, b).unwrap().vector;
            let dot = (v.re * n.re + v.im * n.im) / n.norm();
            assert!(dot.abs() < 1e-6, "{}: {dot}", d.kind());
        }
    }
}

#[test]
fn tau_examples() {
    let d = DomainModel::disk();
    let opts = IntegratorOptions::default();
    let centre = VortexConfiguration::simple(vec![c(0.0, 0.0)], vec![1.0]);
    for eps in [1e-1, 1e-3] {
        let out = tau_eps(&d, &centre, eps, 10.0, &opts).unwrap();
        assert_eq!(out.tau, 10.0);
        assert_eq!(out.condition, None);
    }
    let x = VortexConfiguration::simple(vec![c(0.9, 0.0), c(0.9, 0.02), c(-0.2, 0.3)], vec![-1.0, 1.2, 0.5]);
    let taus: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&e| tau_eps(&d, &x, e, 3.0, &opts).unwrap().tau)
        .collect();
    assert!(taus.windows(2).all(|w| w[1] >= w[0]), "{taus:?}");
}

#[test]
fn lambda_vanishes_at_symmetric_states() {
    let d = DomainModel::disk();
    let k = RegularizedKernels::new(&d, 1e-3).unwrap();
    let p = FunctionalParams::default();
    let centre = VortexConfiguration::simple(vec![c(0.0, 0.0)], vec![1.0]);
    assert_eq!(lambda_eps(&k, &p, &centre).unwrap().total, 0.0);
    let pair = VortexConfiguration::simple(vec![c(0.5, 0.0), c(-0.5, 0.0)], vec![1.0, 1.0]);
    assert_abs_diff_eq!(lambda_eps(&k, &p, &pair).unwrap().total, 0.0, epsilon = 1e-14);
}

#[test]
fn lambda_is_the_derivative_of_phi() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = FunctionalParams::new(0.2).unwrap();
    for d in &domains()[..2] {
        let k = RegularizedKernels::new(d, 1e-2).unwrap();
        for _ in 0..4 {
            let x = random_config(d, 3, &mut rng);
            let lam = lambda_eps(&k, &p, &x).unwrap();
            assert!(lam.terms[4].abs() <= 1e-15);
            let central = |h: f64| {
                let fwd = phi_eps(&k, &p, &flow_reg(&k, &x, h, 1e-6).unwrap());
                let bwd = phi_eps(&k, &p, &flow_reg(&k, &x, -h, 1e-6).unwrap());
                (fwd - bwd) / (2.0 * h)
            };
            let fd = (4.0 * central(5e-5) - central(1e-4)) / 3.0;
            let scale = lam.total.abs().max(1e-10 * phi_eps(&k, &p, &x));
            assert!((lam.total - fd).abs() / scale < 1e-5, "{} vs {fd}", lam.total);
        }
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(build_cutoff(0.0).is_err());
    assert!(build_cutoff(f64::NAN).is_err());
    assert!(FunctionalParams::new(-0.1).is_err());
    assert!(RegularizedKernels::new(&DomainModel::disk(), 2.0).is_err());
}

proptest! {
    #[test]
    fn cutoff_is_odd_monotone_and_bounded(e in -6.0..-0.5f64, r in -5.0..5.0f64, dr in 0.0..1.0f64) {
        let f = build_cutoff(10f64.powf(e)).unwrap();
        prop_assert_eq!(f.f(-r), -f.f(r));
        prop_assert!(f.f(r + dr) >= f.f(r));
        prop_assert!(f.f(r).abs() <= r.abs().min(f.plateau()));
        prop_assert!((0.0..=1.0).contains(&f.df(r)));
    }

    #[test]
    fn b5_vanishes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = DomainModel::annulus(0.3).unwrap();
        let k = RegularizedKernels::new(&d, 1e-2).unwrap();
        let x = random_config(&d, 4, &mut rng);
        let lam = lambda_eps(&k, &FunctionalParams::default(), &x).unwrap();
        prop_assert!(lam.terms[4].abs() <= 1e-15);
        let sum: f64 = lam.terms.iter().sum();
        prop_assert!((sum - lam.total).abs() <= 1e-12 * (1.0 + lam.total.abs()));
    }
}

