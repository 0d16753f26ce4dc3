//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! measured figure of merit and wall time; the process fails if any
//! criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pointvortex::complexmap::{dot, perp};
use pointvortex::dynamics::{
    flow_jacobian, integrate, integrate_field, IntegratorOptions, Termination, VortexConfiguration,
};
use pointvortex::greens::{grad_green, grad_robin, green, robin};
use pointvortex::measure::{
    ensemble_statistics, sample_point, verify_inequality_suite, verify_pointwise_bounds, EnsembleOptions,
    MeasureError, Verdict,
};
use pointvortex::regularization::{
    flow_reg, lambda_eps, phi_eps, phi_hitting_bound, tau_eps_with, velocity_reg, FunctionalParams,
    RegularizedKernels,
};
use pointvortex::{DomainModel, HolomorphicMap, Point};

type Check = Result<(bool, String), Box<dyn std::error::Error>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn in_disk(rng: &mut ChaCha8Rng, r_max: f64) -> Point {
    loop {
        let p = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if p.norm() < r_max {
            return p;
        }
    }
}

// Disk kernels in real-vector form.
fn disk_green(x: [f64; 2], y: [f64; 2]) -> f64 {
    let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
    let q2 = 1.0 - 2.0 * (x[0] * y[0] + x[1] * y[1]) + (x[0] * x[0] + x[1] * x[1]) * (y[0] * y[0] + y[1] * y[1]);
    (d2.ln() - q2.ln()) / (4.0 * PI)
}

fn disk_grad_green(x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
    let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
    let yy = y[0] * y[0] + y[1] * y[1];
    let q2 = 1.0 - 2.0 * (x[0] * y[0] + x[1] * y[1]) + (x[0] * x[0] + x[1] * x[1]) * yy;
    let k = 1.0 / (2.0 * PI);
    [
        k * ((x[0] - y[0]) / d2 + (y[0] - yy * x[0]) / q2),
        k * ((x[1] - y[1]) / d2 + (y[1] - yy * x[1]) / q2),
    ]
}

fn disk_robin(x: [f64; 2]) -> f64 {
    -(1.0 - x[0] * x[0] - x[1] * x[1]).ln() / (2.0 * PI)
}

fn disk_grad_robin(x: [f64; 2]) -> [f64; 2] {
    let s = PI * (1.0 - x[0] * x[0] - x[1] * x[1]);
    [x[0] / s, x[1] / s]
}

fn v(p: Point) -> [f64; 2] {
    [p.re, p.im]
}

fn rel(a: Point, b: [f64; 2]) -> f64 {
    let e = ((a.re - b[0]).powi(2) + (a.im - b[1]).powi(2)).sqrt();
    e / (1.0f64).max((b[0] * b[0] + b[1] * b[1]).sqrt())
}

fn disk_oracle() -> Check {
    let d = DomainModel::disk();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x = in_disk(&mut rng, 1.0);
        let y = in_disk(&mut rng, 1.0);
        worst = worst
            .max((green(&d, x, y)? - disk_green(v(x), v(y))).abs())
            .max((robin(&d, x)? - disk_robin(v(x))).abs())
            .max(rel(grad_green(&d, x, y)?, disk_grad_green(v(x), v(y))))
            .max(rel(grad_robin(&d, x)?, disk_grad_robin(v(x))));
    }
    Ok((worst < 1e-12, format!("max error {worst:.2e} over 1000 points (tol 1e-12)")))
}

fn mobius_invariance() -> Check {
    let d = DomainModel::disk();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let a = in_disk(&mut rng, 0.9);
        let t = HolomorphicMap::mobius(a, rng.gen_range(0.0..2.0 * PI))?;
        for _ in 0..1000 {
            let x = in_disk(&mut rng, 1.0);
            let y = in_disk(&mut rng, 1.0);
            let (tx, ty) = (t.eval(x)?, t.eval(y)?);
            worst = worst.max((green(&d, x, y)? - green(&d, tx, ty)?).abs());
        }
    }
    Ok((worst < 1e-12, format!("max |G(x,y) - G(Tx,Ty)| = {worst:.2e} (tol 1e-12)")))
}

fn transport_identity() -> Check {
    let coef = 0.25;
    let map = HolomorphicMap::polynomial(c(coef, 0.0))?;
    let u = DomainModel::mapped(map)?;
    let disk = DomainModel::disk();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut pairs = 0;
    while pairs < 100 {
        let (x, _) = sample_point(&u, &mut rng)?;
        let (y, _) = sample_point(&u, &mut rng)?;
        if x == y {
            continue;
        }
        pairs += 1;
        let lhs = dot(grad_green(&u, x, y)?, perp(grad_robin(&u, x)?));
        // T(z) = z + c z^2, T' = 1 + 2cz, T'' = 2c.
        let (tx, ty) = (x + coef * x * x, y + coef * y * y);
        let d1 = 1.0 + 2.0 * coef * x;
        let d2 = c(2.0 * coef, 0.0);
        let s = d1.norm_sqr();
        let psi = Complex64::i() * d2.conj() * d1 * d1 / (2.0 * PI);
        let g = grad_green(&disk, tx, ty)?;
        let rhs = s * dot(g, perp(grad_robin(&disk, tx)?)) + dot(g, psi) / s;
        worst = worst.max((lhs - rhs).abs() / (1.0f64).max(lhs.abs()));
    }
    Ok((worst < 1e-8, format!("max residual {worst:.2e} over 100 pairs (tol 1e-8)")))
}

fn single_vortex_orbit() -> Check {
    let d = DomainModel::disk();
    let x0 = VortexConfiguration::simple(vec![c(0.5, 0.0)], vec![2.0 * PI]);
    let traj = integrate(&d, &x0, 1.5 * PI, &IntegratorOptions::default())?;
    let end = traj.final_state().positions[0];
    let closure = (end - x0.positions[0]).norm();
    let radius = traj
        .states
        .iter()
        .map(|s| (s.positions[0].norm() - 0.5).abs())
        .fold(0.0, f64::max);
    let ok = closure < 1e-6 && radius < 1e-8 && traj.termination == Termination::HorizonReached;
    Ok((ok, format!("return error {closure:.2e} (tol 1e-6), radius drift {radius:.2e} (tol 1e-8)")))
}

/// Draws masses and positions until the orbit keeps `d >= 0.1` up to `horizon`.
fn well_separated_run(d: &DomainModel, rng: &mut ChaCha8Rng, n: usize, horizon: f64) -> Result<(f64, usize), Box<dyn std::error::Error>> {
    let mut opts = IntegratorOptions {
        delta_stop: 0.1,
        ..IntegratorOptions::default()
    };
    for attempt in 1..=200 {
        let mut pos = Vec::new();
        while pos.len() < n {
            let (p, _) = sample_point(d, rng)?;
            if d.distance_to_boundary(p) > 0.15 && pos.iter().all(|q: &Point| (p - q).norm() > 0.15) {
                pos.push(p);
            }
        }
        let masses = (0..n).map(|_| rng.gen_range(0.5..1.5) * if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let circ = vec![0.3; d.hole_count()];
        let x0 = VortexConfiguration::new(pos, masses, circ);
        opts.record_every = 1;
        let traj = integrate(d, &x0, horizon, &opts)?;
        if traj.termination == Termination::HorizonReached {
            return Ok((traj.max_energy_drift(), attempt));
        }
    }
    Err("no well-separated orbit found".into())
}

fn conservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for d in [DomainModel::disk(), DomainModel::annulus(0.3)?] {
        for _ in 0..2 {
            let t = Instant::now();
            let (drift, _) = well_separated_run(&d, &mut rng, 3, 10.0)?;
            if t.elapsed() > Duration::from_secs(30) {
                return Ok((false, format!("{} run took {:?}", d.kind(), t.elapsed())));
            }
            worst = worst.max(drift);
            lines.push(format!("{} {drift:.1e}", d.kind()));
        }
    }
    Ok((worst < 1e-8, format!("max relative drift {worst:.2e} (tol 1e-8): {}", lines.join(", "))))
}

fn area_preservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for d in [DomainModel::disk(), DomainModel::annulus(0.4)?] {
        for n in [1usize, 3] {
            let mut pos = Vec::new();
            while pos.len() < n {
                let (p, _) = sample_point(&d, &mut rng)?;
                if d.distance_to_boundary(p) > 0.15 && pos.iter().all(|q: &Point| (p - q).norm() > 0.2) {
                    pos.push(p);
                }
            }
            let masses = (0..n).map(|k| [1.0, -0.7, 0.5][k]).collect();
            let x0 = VortexConfiguration::new(pos, masses, vec![0.2; d.hole_count()]);
            for t in [0.5, 1.0] {
                worst = worst.max((flow_jacobian(&d, &x0, t)? - 1.0).abs());
            }
        }
    }
    Ok((worst < 1e-5, format!("max |det - 1| = {worst:.2e} (tol 1e-5)")))
}

fn regularization_coincidence() -> Check {
    let d = DomainModel::annulus(0.3)?;
    let eps = 1e-3;
    let kernels = RegularizedKernels::new(&d, eps)?;
    let a = kernels.cutoff().threshold();
    let x0 = VortexConfiguration::new(
        vec![c(0.6, 0.1), c(-0.5, 0.3), c(0.1, -0.7)],
        vec![1.0, -0.6, 0.8],
        vec![0.25],
    );
    let opts = IntegratorOptions::default();
    let plain = integrate(&d, &x0, 5.0, &opts)?;
    let reg = integrate_field(&kernels, &x0, 5.0, &opts)?;
    // The comparison is meaningful only if the orbit stays below the threshold.
    let below = plain.states.iter().all(|s| {
        let p = &s.positions;
        (0..p.len()).all(|i| {
            robin(&d, p[i]).is_ok_and(|r| r.abs() < a)
                && (0..i).all(|j| {
                    let g0 = ((p[i] - p[j]).norm().ln() / (2.0 * PI)).abs();
                    let g = green(&d, p[i], p[j]).unwrap_or(f64::NAN);
                    g0 < a && (g - (p[i] - p[j]).norm().ln() / (2.0 * PI)).abs() < a
                })
        })
    });
    let n = plain.states.len().min(reg.states.len());
    let sup = (0..n)
        .flat_map(|k| {
            plain.states[k]
                .positions
                .iter()
                .zip(&reg.states[k].positions)
                .map(|(p, q)| (p - q).norm())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    let same_grid = plain.times == reg.times;

    let stress = [
        VortexConfiguration::new(vec![c(1.0, 0.0), c(0.5, 0.0)], vec![1.0, 1.0], vec![0.0]),
        VortexConfiguration::new(vec![c(0.5, 0.1), c(0.5, 0.1)], vec![1.0, -2.0], vec![0.1]),
        VortexConfiguration::new(vec![c(0.0, 0.3), c(0.0, 0.3), c(-1.0, 0.0)], vec![1.0, 1.0, 1.0], vec![0.0]),
        VortexConfiguration::new(vec![c(0.3, 0.0), c(0.0, -0.3)], vec![1.0, 1.0], vec![0.0]),
    ];
    let mut finite = true;
    for s in &stress {
        finite &= velocity_reg(&kernels, s)?.iter().all(|u| u.re.is_finite() && u.im.is_finite());
    }
    let ok = below && same_grid && sup <= 1e-9 && finite;
    Ok((
        ok,
        format!("sup distance {sup:.2e} over {n} states (tol 1e-9), below threshold {below}, stress velocities finite {finite}"),
    ))
}

fn lambda_cross_check() -> Check {
    let params = FunctionalParams::new(0.1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let domains = [DomainModel::disk(), DomainModel::annulus(0.4)?];
    let mut worst = 0.0f64;
    let mut worst_b5 = 0.0f64;
    for k in 0..100 {
        let d = &domains[k % 2];
        let kernels = RegularizedKernels::new(d, [1e-2, 1e-3][k % 2])?;
        let mut pos = Vec::new();
        while pos.len() < 3 {
            let (p, _) = sample_point(d, &mut rng)?;
            if pos.iter().all(|q: &Point| (p - q).norm() > 0.02) {
                pos.push(p);
            }
        }
        let masses = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let x = VortexConfiguration::new(pos, masses, vec![rng.gen_range(-0.5..0.5); d.hole_count()]);
        let lam = lambda_eps(&kernels, &params, &x)?;
        // Richardson-extrapolated centred difference of phi along the flow.
        let central = |h: f64| -> Result<f64, Box<dyn std::error::Error>> {
            let fwd = phi_eps(&kernels, &params, &flow_reg(&kernels, &x, h, 1e-6)?);
            let bwd = phi_eps(&kernels, &params, &flow_reg(&kernels, &x, -h, 1e-6)?);
            Ok((fwd - bwd) / (2.0 * h))
        };
        let fd = (4.0 * central(5e-5)? - central(1e-4)?) / 3.0;
        let phi = phi_eps(&kernels, &params, &x);
        let scale = lam.total.abs().max(1e-10 * phi);
        worst = worst.max((lam.total - fd).abs() / scale);
        worst_b5 = worst_b5.max(lam.terms[4].abs());
    }
    Ok((
        worst < 1e-5 && worst_b5 <= 1e-15,
        format!("max relative mismatch {worst:.2e} (tol 1e-5), max |B5| = {worst_b5:.1e}"),
    ))
}

/// Unequal dipoles started near the wall of the disk; most run into the
/// Robin threshold within a short time.
fn event_inequality() -> Check {
    let d = DomainModel::disk();
    let eps = 1e-2;
    let kernels = RegularizedKernels::new(&d, eps)?;
    let params = FunctionalParams::new(0.1)?;
    let bound = phi_hitting_bound(eps, &params) * (1.0 - 1e-6);
    let opts = IntegratorOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut runs, mut tried, mut worst) = (0, 0, f64::INFINITY);
    while runs < 100 && tried < 2000 {
        tried += 1;
        let centre = Complex64::from_polar(rng.gen_range(0.85..0.95), rng.gen_range(0.0..2.0 * PI));
        let half = Complex64::from_polar(rng.gen_range(0.005..0.015), rng.gen_range(0.0..2.0 * PI));
        let ratio = rng.gen_range(1.05..1.4);
        let x0 = VortexConfiguration::simple(vec![centre + half, centre - half], vec![-1.0, ratio]);
        if x0.validate(&d).is_err() {
            continue;
        }
        let out = tau_eps_with(&kernels, &x0, 2.0, &opts, &mut |_, _| {})?;
        if out.condition.is_none() || out.tau == 0.0 {
            continue;
        }
        runs += 1;
        worst = worst.min(phi_eps(&kernels, &params, &out.state));
    }
    Ok((
        runs == 100 && worst >= bound,
        format!("{runs} threshold runs from {tried} starts, min phi(tau) {worst:.5} >= {bound:.5}"),
    ))
}

fn inequality_suite() -> Check {
    let grid = [1e-2, 1e-3, 1e-4];
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [DomainModel::disk(), DomainModel::annulus(0.5)?] {
        let r = verify_inequality_suite(&d, 0.5, 3, &grid, 11)?;
        ok &= r.verdict == Verdict::Convergent && r.epsilon_uniform;
        parts.push(format!(
            "{}: changes {:.2}%/{:.2}%, eps spread {:.2}/{:.2}",
            r.domain,
            100.0 * r.estimates[0].relative_change,
            100.0 * r.estimates[1].relative_change,
            r.epsilon_spread[0],
            r.epsilon_spread[1]
        ));
    }
    let rejected = matches!(
        verify_inequality_suite(&DomainModel::disk(), 1.0, 3, &grid, 11),
        Err(MeasureError::InvalidParameter(_))
    );
    ok &= rejected;
    parts.push(format!("kappa = 1 rejected {rejected}"));
    Ok((ok, parts.join("; ")))
}

fn pointwise_bounds() -> Check {
    let domains = [
        DomainModel::disk(),
        DomainModel::annulus(0.5)?,
        DomainModel::exterior_disk(),
        DomainModel::mapped(HolomorphicMap::polynomial(c(0.2, 0.1))?)?,
        DomainModel::mapped(HolomorphicMap::mobius(c(0.4, -0.3), 1.0)?)?,
    ];
    let mut violations = 0;
    let mut disk_gap = 0.0;
    let mut disk_grad = 0.0f64;
    for d in &domains {
        match verify_pointwise_bounds(d, 10_000, 12) {
            Ok(r) => {
                if r.strata.last().map(|s| s.distance) != Some(1e-6) || r.strata.iter().any(|s| s.samples == 0) {
                    return Ok((false, format!("{}: missing near-boundary stratum", r.domain)));
                }
                if r.domain == "disk" {
                    disk_gap = r.max_gap;
                    disk_grad = r.strata.iter().map(|s| s.max_gradient_distance).fold(0.0, f64::max);
                }
            }
            Err(MeasureError::BoundViolation { violations: v, .. }) => violations += v,
            Err(e) => return Err(e.into()),
        }
    }
    let ok = violations == 0 && disk_gap <= 2f64.ln() + 1e-9 && disk_grad <= 1.0 / (2.0 * PI) + 1e-6;
    Ok((
        ok,
        format!(
            "{violations} violations over {} domains, disk max gap {disk_gap:.12} (<= ln 2), disk max |grad|*d {disk_grad:.9} (<= 1/2π)",
            domains.len()
        ),
    ))
}

fn collapse_evidence() -> Check {
    let d = DomainModel::disk();
    let deltas = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let opts = EnsembleOptions::default();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(|| ensemble_statistics(&d, 2, &[1.0, 1.0], 10_000, 10.0, &deltas, 2024, &opts))
    };
    let r = run(8)?;
    let again = run(3)?;
    let f: Vec<f64> = r.collapse_fraction.iter().map(|e| e.fraction).collect();
    let strict = f[..4].windows(2).all(|w| w[1] < w[0]);
    let stable = serde_json::to_string(&r)? == serde_json::to_string(&again)?;
    let ok = strict && f[4] < 1e-2 && stable && r.terminations.errors == 0;
    Ok((
        ok,
        format!(
            "fractions {:?}, strictly decreasing {strict}, bit-identical across worker counts {stable}",
            f
        ),
    ))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Check); 12] = [
        ("disk closed-form oracle", 1, disk_oracle),
        ("Mobius invariance of the disk kernel", 1, mobius_invariance),
        ("transport identity through z + 0.25 z^2", 1, transport_identity),
        ("single-vortex orbit", 1, single_vortex_orbit),
        ("Hamiltonian conservation", 120, conservation),
        ("area preservation", 60, area_preservation),
        ("regularization coincidence and totality", 10, regularization_coincidence),
        ("Lambda_eps against finite differences", 10, lambda_cross_check),
        ("phi_eps at threshold events", 300, event_inequality),
        ("singular-integral quadrature", 600, inequality_suite),
        ("pointwise Robin bounds", 60, pointwise_bounds),
        ("collapse-measure evidence", 1800, collapse_evidence),
    ];
    let mut failed = 0;
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = check();
        let elapsed = t.elapsed();
        let (ok, detail) = match result {
            Ok((ok, detail)) => (ok && elapsed.as_secs_f64() < *budget as f64, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "[{}] {:>2} {name}: {detail} ({:.2} s, budget {budget} s)",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
