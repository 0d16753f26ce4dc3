//! Monte Carlo harness: uniform sampling of configurations, near-collapse
//! statistics over ensembles, stratified quadrature of singular integrals,
//! and pointwise checks of the kernel bounds.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, index)`, and
//! all reductions run in index order, so results do not depend on the number
//! of worker threads.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexmap::{dot, perp, HolomorphicMap, Point};
use crate::dynamics::{
    minimum_separation_along, CollisionKind, DynamicsError, IntegratorOptions, PointVortexField,
    Termination, VortexConfiguration,
};
use crate::greens::{free_green, DomainModel, GreensError};
use crate::regularization::{
    phi_positions, tau_eps_with, FunctionalParams, RegularizationError, RegularizedKernels,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sampling geometry error: {0}")]
    Geometry(String),
    #[error("{violations} violation(s) of the pointwise lower bound ln d <= -2π gamma~")]
    BoundViolation {
        violations: usize,
        report: Box<PointwiseReport>,
    },
    #[error("kernel self-check failed: {0}")]
    KernelCheck(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Regularization(#[from] RegularizationError),
    #[error(transparent)]
    Greens(#[from] GreensError),
}

const MAX_DRAWS: u64 = 1_000_000;
const CHUNK: usize = 2048;

/// Independent random stream for sample `index`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform point of the sampling region by rejection from its bounding box.
/// Returns the point and the number of draws used.
pub fn sample_point<R: Rng>(domain: &DomainModel, rng: &mut R) -> Result<(Point, u64), MeasureError> {
    let (lo, hi) = domain.bounding_box();
    for draws in 1..=MAX_DRAWS {
        let p = Complex64::new(rng.gen_range(lo.re..hi.re), rng.gen_range(lo.im..hi.im));
        if domain.in_sampling_region(p) {
            return Ok((p, draws));
        }
    }
    Err(MeasureError::Geometry(format!(
        "no accepted point after {MAX_DRAWS} draws from the bounding box of the {} domain",
        domain.kind()
    )))
}

/// Draw counts of a sampling run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub draws: u64,
    pub accepted: u64,
}

impl SamplerStats {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.draws as f64
    }
}

fn sample_one(domain: &DomainModel, n: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<Point>, u64), MeasureError> {
    let mut total = 0;
    loop {
        let mut x = Vec::with_capacity(n);
        for _ in 0..n {
            let (p, k) = sample_point(domain, rng)?;
            total += k;
            x.push(p);
        }
        let distinct = (0..n).all(|i| !x[..i].contains(&x[i]));
        if distinct {
            return Ok((x, total));
        }
    }
}

/// `count` independent uniform samples of `n` positions each.
pub fn sample_positions(
    domain: &DomainModel,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<(Vec<Vec<Point>>, SamplerStats), MeasureError> {
    if n == 0 {
        return Err(MeasureError::InvalidParameter(
            "at least one vortex per configuration is required".into(),
        ));
    }
    let out: Result<Vec<_>, _> = (0..count)
        .into_par_iter()
        .map(|k| sample_one(domain, n, &mut stream_rng(seed, k as u64)))
        .collect();
    let out = out?;
    let draws = out.iter().map(|(_, d)| d).sum();
    let stats = SamplerStats {
        draws,
        accepted: (count * n) as u64,
    };
    Ok((out.into_iter().map(|(x, _)| x).collect(), stats))
}

/// Uniform configurations of `n` unit-mass vortices (zero hole circulations).
pub fn sample_configurations(
    domain: &DomainModel,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<VortexConfiguration>, MeasureError> {
    if count == 0 {
        return Err(MeasureError::InvalidParameter("count must be at least 1".into()));
    }
    let (pos, _) = sample_positions(domain, n, count, seed)?;
    let circ = vec![0.0; domain.hole_count()];
    Ok(pos
        .into_iter()
        .map(|x| VortexConfiguration::new(x, vec![1.0; n], circ.clone()))
        .collect())
}

/// Fraction of runs flagged at one threshold, with a 95% Wilson interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseEntry {
    pub delta: f64,
    pub flagged: usize,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Runs that reached the horizon without meeting a threshold.
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TerminationCounts {
    pub horizon: usize,
    pub separation: usize,
    pub stiffness: usize,
    pub step_limit: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub domain: String,
    pub n_vortices: usize,
    pub masses: Vec<f64>,
    pub sample_count: usize,
    pub horizon: f64,
    pub delta_grid: Vec<f64>,
    pub delta_stop: f64,
    /// One entry per threshold, in the order of `delta_grid`; empty for an
    /// empty ensemble.
    pub collapse_fraction: Vec<CollapseEntry>,
    pub terminations: TerminationCounts,
    /// Smallest `d(X)` seen over all runs.
    pub smallest_separation: Option<f64>,
    pub tau_eps_histogram: Option<Histogram>,
    pub seed: u64,
    /// First few per-run error messages.
    pub error_samples: Vec<String>,
}

impl EnsembleReport {
    pub fn collapse_fraction(&self, delta: f64) -> Option<f64> {
        self.collapse_fraction
            .iter()
            .find(|e| e.delta == delta)
            .map(|e| e.fraction)
    }

    /// The collapse curve as CSV with a header row.
    pub fn collapse_csv(&self) -> String {
        let mut out = String::from("delta,flagged,fraction,ci_low,ci_high\n");
        for e in &self.collapse_fraction {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.delta, e.flagged, e.fraction, e.ci_low, e.ci_high
            ));
        }
        out
    }
}

/// Settings of an ensemble run beyond the sampled configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleOptions {
    pub integrator: IntegratorOptions,
    pub circulations: Vec<f64>,
    /// When set, also records `tau_eps` for every sample.
    pub tau_epsilon: Option<f64>,
    pub histogram_bins: usize,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            integrator: IntegratorOptions {
                rtol: 1e-8,
                atol: 1e-10,
                ..IntegratorOptions::default()
            },
            circulations: Vec::new(),
            tau_epsilon: None,
            histogram_bins: 20,
        }
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(flagged: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054;
    let n = n as f64;
    let p = flagged as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

struct RunResult {
    dmin: Result<(f64, Termination), String>,
    tau: Option<Result<f64, String>>,
}

/// Integrates `count` uniformly sampled configurations and records, for each
/// `delta`, the fraction whose `d(S_t X)` dropped below `delta` before `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_statistics(
    domain: &DomainModel,
    n: usize,
    masses: &[f64],
    count: usize,
    horizon: f64,
    delta_grid: &[f64],
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<EnsembleReport, MeasureError> {
    if masses.len() != n || n == 0 {
        return Err(MeasureError::InvalidParameter(format!(
            "expected {n} masses (n >= 1), got {}",
            masses.len()
        )));
    }
    if masses.iter().any(|a| !a.is_finite()) {
        return Err(MeasureError::InvalidParameter("masses must be finite".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(MeasureError::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if delta_grid.is_empty() || delta_grid.iter().any(|d| !(*d > 0.0)) {
        return Err(MeasureError::InvalidParameter(
            "delta grid must be non-empty and positive".into(),
        ));
    }
    let circulations = if opts.circulations.is_empty() {
        vec![0.0; domain.hole_count()]
    } else {
        opts.circulations.clone()
    };
    if circulations.len() != domain.hole_count() {
        return Err(MeasureError::InvalidParameter(format!(
            "{} circulations for a domain with {} hole(s)",
            circulations.len(),
            domain.hole_count()
        )));
    }
    let delta_stop = delta_grid.iter().cloned().fold(f64::INFINITY, f64::min) / 10.0;
    let mut iopts = opts.integrator.clone();
    iopts.delta_stop = delta_stop;
    let kernels = match opts.tau_epsilon {
        Some(e) => Some(RegularizedKernels::new(domain, e)?),
        None => None,
    };
    let field = PointVortexField::new(domain);

    let results: Vec<RunResult> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let x = match sample_one(domain, n, &mut rng) {
                Ok((x, _)) => VortexConfiguration::new(x, masses.to_vec(), circulations.clone()),
                Err(e) => {
                    return RunResult {
                        dmin: Err(e.to_string()),
                        tau: None,
                    }
                }
            };
            let dmin = minimum_separation_along(&field, &x, horizon, &iopts).map_err(|e| e.to_string());
            let tau = kernels.as_ref().map(|kr| {
                tau_eps_with(kr, &x, horizon, &iopts, &mut |_, _| {})
                    .map(|o| o.tau)
                    .map_err(|e| e.to_string())
            });
            RunResult { dmin, tau }
        })
        .collect();

    let mut terms = TerminationCounts::default();
    let mut minima = Vec::with_capacity(count);
    let mut error_samples = Vec::new();
    for r in &results {
        match &r.dmin {
            Ok((d, t)) => {
                minima.push(*d);
                match t {
                    Termination::HorizonReached => terms.horizon += 1,
                    Termination::CollisionEvent {
                        kind: CollisionKind::Separation,
                        ..
                    } => terms.separation += 1,
                    Termination::CollisionEvent {
                        kind: CollisionKind::Stiffness,
                        ..
                    } => terms.stiffness += 1,
                    Termination::StepLimit { .. } => terms.step_limit += 1,
                    Termination::ThresholdEvent { .. } => {}
                }
            }
            Err(e) => {
                terms.errors += 1;
                if error_samples.len() < 5 {
                    error_samples.push(e.clone());
                }
            }
        }
    }
    let valid = minima.len();
    let collapse_fraction = if valid == 0 {
        Vec::new()
    } else {
        delta_grid
            .iter()
            .map(|&delta| {
                let flagged = minima.iter().filter(|&&d| d < delta).count();
                let (lo, hi) = wilson_interval(flagged, valid);
                CollapseEntry {
                    delta,
                    flagged,
                    fraction: flagged as f64 / valid as f64,
                    ci_low: lo,
                    ci_high: hi,
                }
            })
            .collect()
    };
    let tau_eps_histogram = kernels.as_ref().map(|_| {
        let bins = opts.histogram_bins.max(1);
        let edges: Vec<f64> = (0..=bins).map(|b| horizon * b as f64 / bins as f64).collect();
        let mut counts = vec![0; bins];
        let mut censored = 0;
        for r in &results {
            match &r.tau {
                Some(Ok(t)) if *t < horizon => {
                    let b = ((t / horizon * bins as f64) as usize).min(bins - 1);
                    counts[b] += 1;
                }
                Some(Ok(_)) => censored += 1,
                _ => {}
            }
        }
        Histogram {
            edges,
            counts,
            censored,
        }
    });
    Ok(EnsembleReport {
        domain: domain.kind().to_string(),
        n_vortices: n,
        masses: masses.to_vec(),
        sample_count: count,
        horizon,
        delta_grid: delta_grid.to_vec(),
        delta_stop,
        collapse_fraction,
        terminations: terms,
        smallest_separation: minima.iter().cloned().reduce(f64::min),
        tau_eps_histogram,
        seed,
        error_samples,
    })
}

/// Radial description of the reference region used by the importance sampler.
struct RefGeometry<'a> {
    r_lo: f64,
    r_hi: f64,
    /// Boundary circles with the sign of the inward radial direction.
    circles: Vec<(f64, f64)>,
    band: f64,
    map: Option<&'a HolomorphicMap>,
}

impl<'a> RefGeometry<'a> {
    fn of(domain: &'a DomainModel) -> Self {
        match domain {
            DomainModel::Disk => RefGeometry {
                r_lo: 0.0,
                r_hi: 1.0,
                circles: vec![(1.0, -1.0)],
                band: 0.5,
                map: None,
            },
            DomainModel::ExteriorDisk { window } => RefGeometry {
                r_lo: 1.0,
                r_hi: *window,
                circles: vec![(1.0, 1.0)],
                band: (0.5 * (window - 1.0)).min(0.5),
                map: None,
            },
            DomainModel::Annulus(a) => RefGeometry {
                r_lo: a.rho(),
                r_hi: 1.0,
                circles: vec![(1.0, -1.0), (a.rho(), 1.0)],
                band: 0.5 * (1.0 - a.rho()),
                map: None,
            },
            DomainModel::Mapped(m) => {
                let (r_lo, r_hi) = if m.is_exterior() {
                    (1.0, m.window())
                } else {
                    (0.0, 1.0)
                };
                RefGeometry {
                    r_lo,
                    r_hi,
                    circles: vec![(1.0, if m.is_exterior() { 1.0 } else { -1.0 })],
                    band: (0.5 * (r_hi - r_lo)).min(0.5),
                    map: Some(m.map()),
                }
            }
        }
    }

    /// Draws a point from the half-uniform, half boundary-concentrated mixture
    /// and returns it with its density in physical coordinates.
    fn sample<R: Rng>(&self, rng: &mut R, u_r: f64, beta: f64) -> Option<(Point, f64)> {
        let theta = rng.gen_range(0.0..2.0 * PI);
        let r = if rng.gen::<f64>() < 0.5 {
            (self.r_lo * self.r_lo + u_r * (self.r_hi * self.r_hi - self.r_lo * self.r_lo)).sqrt()
        } else {
            let (c, s) = self.circles[rng.gen_range(0..self.circles.len())];
            let delta = self.band * u_r.powf(1.0 / (1.0 - beta));
            if delta <= 0.0 {
                return None;
            }
            c + s * delta
        };
        if self.circles.iter().any(|&(c, _)| r == c) {
            return None;
        }
        let w = Complex64::from_polar(r, theta);
        let area = PI * (self.r_hi * self.r_hi - self.r_lo * self.r_lo);
        let mut p = 0.5 / area;
        for &(c, _) in &self.circles {
            let delta = (r - c).abs();
            if delta <= self.band {
                let f = (1.0 - beta) * delta.powf(-beta) / self.band.powf(1.0 - beta);
                p += 0.5 / self.circles.len() as f64 * f / (2.0 * PI * r);
            }
        }
        match self.map {
            None => Some((w, p)),
            Some(m) => {
                let x = m.inverse(w).ok()?;
                let j = m.jet(x).ok()?;
                Some((x, p * j.d1.norm_sqr()))
            }
        }
    }
}

/// One quadrature sequence over refinement levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralSeries {
    pub name: String,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `|I_finest - I_previous| / |I_finest|`.
    pub relative_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizedEstimate {
    pub epsilon: f64,
    pub distance_weighted: f64,
    pub boundary_weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiIntegral {
    pub epsilon: f64,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Convergent,
    Suspect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub domain: String,
    pub kappa: f64,
    /// Sample count of each level.
    pub quadrature_levels: Vec<usize>,
    /// Coupling integrals followed by the two primitive integrals.
    pub estimates: Vec<IntegralSeries>,
    pub epsilon_grid: Vec<f64>,
    /// Finest-level estimates with regularized kernels.
    pub regularized: Vec<RegularizedEstimate>,
    /// Largest-to-smallest ratio across the epsilon grid, per regularized integral.
    pub epsilon_spread: [f64; 2],
    pub epsilon_uniform: bool,
    pub phi_integrals: Vec<PhiIntegral>,
    pub eta: f64,
    pub n_vortices: usize,
    pub verdict: Verdict,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalityOptions {
    pub kappa: f64,
    pub levels: usize,
    pub base_samples: usize,
    pub epsilon_grid: Vec<f64>,
    pub eta: f64,
    pub n_vortices: usize,
    pub phi_samples: usize,
    pub seed: u64,
}

impl Default for InequalityOptions {
    fn default() -> Self {
        InequalityOptions {
            kappa: 0.5,
            levels: 3,
            base_samples: 40_000,
            epsilon_grid: vec![1e-2, 1e-3, 1e-4],
            eta: 0.1,
            n_vortices: 2,
            phi_samples: 20_000,
            seed: 0,
        }
    }
}

/// Relative-change threshold for a convergent verdict.
pub const CONVERGENCE_TOLERANCE: f64 = 0.05;

/// Stratified importance-sampled estimates of the coupling integrals for
/// `kappa` over `levels` levels, with default sample sizes.
pub fn verify_inequality_suite(
    domain: &DomainModel,
    kappa: f64,
    levels: usize,
    epsilon_grid: &[f64],
    seed: u64,
) -> Result<InequalityReport, MeasureError> {
    verify_inequality_suite_with(
        domain,
        &InequalityOptions {
            kappa,
            levels,
            epsilon_grid: epsilon_grid.to_vec(),
            seed,
            ..InequalityOptions::default()
        },
    )
}

const N_SUMS: usize = 4;

/// Per-chunk running sums: `[sum, sum of squares]` per integrand.
type Sums = Vec<[f64; 2]>;

pub fn verify_inequality_suite_with(
    domain: &DomainModel,
    opts: &InequalityOptions,
) -> Result<InequalityReport, MeasureError> {
    let kappa = opts.kappa;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(MeasureError::InvalidParameter(format!(
            "kappa must lie in (0, 1); the integrals diverge at kappa = {kappa}"
        )));
    }
    if opts.levels < 2 || opts.base_samples < 16 {
        return Err(MeasureError::InvalidParameter(
            "at least two levels of at least 16 samples are required".into(),
        ));
    }
    let params = FunctionalParams::new(opts.eta)?;
    let kernels: Vec<RegularizedKernels> = opts
        .epsilon_grid
        .iter()
        .map(|&e| RegularizedKernels::new(domain, e))
        .collect::<Result<_, _>>()?;
    let geo = RefGeometry::of(domain);
    let beta = 0.5 * (1.0 + kappa);
    let (blo, bhi) = domain.bounding_box();
    let box_area = (bhi.re - blo.re) * (bhi.im - blo.im);
    let reach = (bhi - blo).norm();
    let n_int = N_SUMS + 2 * kernels.len();

    let sample = |n: usize, k: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut out = vec![0.0; n_int];
        let u_r = (k as f64 + rng.gen::<f64>()) / n as f64;
        let Some((x, px)) = geo.sample(rng, u_r, beta) else {
            return out;
        };
        if !domain.in_sampling_region(x) {
            return out;
        }
        let (y, r) = if rng.gen::<f64>() < 0.5 {
            let y = Complex64::new(rng.gen_range(blo.re..bhi.re), rng.gen_range(blo.im..bhi.im));
            (y, (y - x).norm())
        } else {
            let r = reach * rng.gen::<f64>().powf(1.0 / (1.0 - kappa));
            (x + Complex64::from_polar(r, rng.gen_range(0.0..2.0 * PI)), r)
        };
        if r == 0.0 || !domain.in_sampling_region(y) {
            return out;
        }
        let in_box = y.re >= blo.re && y.re < bhi.re && y.im >= blo.im && y.im < bhi.im;
        let mut q = if in_box { 0.5 / box_area } else { 0.0 };
        if r <= reach {
            q += 0.5 * (1.0 - kappa) * r.powf(-kappa) / (reach.powf(1.0 - kappa) * 2.0 * PI * r);
        }
        let w = 1.0 / (px * q);
        let d = domain.distance_to_boundary(x);
        let h = dot(domain.grad_green_raw(x, y), perp(domain.grad_robin_raw(x))).abs();
        out[0] = w * h / r.powf(kappa);
        out[1] = w * h / d.powf(kappa);
        out[2] = w / r.powf(1.0 + kappa);
        out[3] = w / (d.powf(kappa) * r);
        for (e, kr) in kernels.iter().enumerate() {
            let he = dot(kr.green_reg(x, y).gradient, perp(kr.robin_reg(x).gradient)).abs();
            out[N_SUMS + 2 * e] = w * he / r.powf(kappa);
            out[N_SUMS + 2 * e + 1] = w * he / d.powf(kappa);
        }
        out
    };

    let mut level_sizes = Vec::new();
    let mut level_stats: Vec<Vec<(f64, f64)>> = Vec::new();
    for level in 0..opts.levels {
        let n = opts.base_samples * 4usize.pow(level as u32);
        level_sizes.push(n);
        let stream_base = ((level as u64) + 1) << 40;
        let chunks: Vec<Sums> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut sums = vec![[0.0; 2]; n_int];
                for k in (c * CHUNK)..((c + 1) * CHUNK).min(n) {
                    let mut rng = stream_rng(opts.seed, stream_base + k as u64);
                    let v = sample(n, k, &mut rng);
                    for (s, x) in sums.iter_mut().zip(&v) {
                        s[0] += x;
                        s[1] += x * x;
                    }
                }
                sums
            })
            .collect();
        let mut total = vec![[0.0; 2]; n_int];
        for ch in &chunks {
            for (t, s) in total.iter_mut().zip(ch) {
                t[0] += s[0];
                t[1] += s[1];
            }
        }
        level_stats.push(
            total
                .iter()
                .map(|s| {
                    let mean = s[0] / n as f64;
                    let var = (s[1] / n as f64 - mean * mean).max(0.0);
                    (mean, (var / n as f64).sqrt())
                })
                .collect(),
        );
    }

    let names = [
        "coupling_over_pair_distance",
        "coupling_over_boundary_distance",
        "pair_distance_primitive",
        "mixed_primitive",
    ];
    let estimates: Vec<IntegralSeries> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let est: Vec<f64> = level_stats.iter().map(|l| l[i].0).collect();
            let se: Vec<f64> = level_stats.iter().map(|l| l[i].1).collect();
            let m = est.len();
            IntegralSeries {
                name: name.to_string(),
                relative_change: ((est[m - 1] - est[m - 2]) / est[m - 1]).abs(),
                estimates: est,
                std_errors: se,
            }
        })
        .collect();
    let finest = level_stats.last().expect("at least two levels");
    let regularized: Vec<RegularizedEstimate> = kernels
        .iter()
        .enumerate()
        .map(|(e, kr)| RegularizedEstimate {
            epsilon: kr.epsilon(),
            distance_weighted: finest[N_SUMS + 2 * e].0,
            boundary_weighted: finest[N_SUMS + 2 * e + 1].0,
        })
        .collect();
    let spread = |f: fn(&RegularizedEstimate) -> f64| {
        let v: Vec<f64> = regularized.iter().map(f).collect();
        if v.is_empty() {
            return 1.0;
        }
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        hi / lo
    };
    let epsilon_spread = [spread(|r| r.distance_weighted), spread(|r| r.boundary_weighted)];
    let verdict = if estimates[..2]
        .iter()
        .all(|s| s.relative_change < CONVERGENCE_TOLERANCE)
    {
        Verdict::Convergent
    } else {
        Verdict::Suspect
    };

    let phi_integrals = phi_integrals(domain, &kernels, &params, opts)?;
    Ok(InequalityReport {
        domain: domain.kind().to_string(),
        kappa,
        quadrature_levels: level_sizes,
        estimates,
        epsilon_grid: opts.epsilon_grid.clone(),
        regularized,
        epsilon_uniform: epsilon_spread.iter().all(|&s| s < 2.0),
        epsilon_spread,
        phi_integrals,
        eta: opts.eta,
        n_vortices: opts.n_vortices,
        verdict,
        seed: opts.seed,
    })
}

fn phi_integrals(
    domain: &DomainModel,
    kernels: &[RegularizedKernels],
    params: &FunctionalParams,
    opts: &InequalityOptions,
) -> Result<Vec<PhiIntegral>, MeasureError> {
    if opts.n_vortices == 0 || opts.phi_samples == 0 {
        return Ok(Vec::new());
    }
    let (samples, _) = sample_positions(domain, opts.n_vortices, opts.phi_samples, opts.seed ^ 0x9e37_79b9)?;
    let volume = domain.area().powi(opts.n_vortices as i32);
    Ok(kernels
        .iter()
        .map(|kr| {
            let vals: Vec<f64> = samples
                .par_iter()
                .map(|x| phi_positions(kr, params, x))
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            PhiIntegral {
                epsilon: kr.epsilon(),
                value: volume * mean,
                std_error: volume * (var / n).sqrt(),
            }
        })
        .collect())
}

/// Maxima over the samples of one near-boundary stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub distance: f64,
    pub samples: usize,
    pub max_gap: f64,
    pub max_gradient_distance: f64,
    /// `max |∇gamma~ · beta_1|` (multiply connected domains only).
    pub max_field_pairing: Option<f64>,
}

/// Constant fitted for one exponent `k` in the concentration check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationFit {
    pub k: f64,
    /// Per epsilon: largest `max(|x-y|, d(x), d(y)) / eps^k` among qualifying pairs.
    pub ratios: Vec<Option<f64>>,
    /// Least-squares fit of `ln C` over the epsilon grid.
    pub fitted_c: Option<f64>,
    /// Largest ratio over smallest ratio.
    pub spread: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub domain: String,
    pub sample_count: usize,
    pub violations: usize,
    /// `max(-2π gamma~ - ln d)`.
    pub max_gap: f64,
    /// `max |∇gamma~| d`.
    pub max_gradient_distance: f64,
    pub max_field_pairing: Option<f64>,
    pub uniform: StratumStats,
    pub strata: Vec<StratumStats>,
    pub concentration_epsilons: Vec<f64>,
    pub concentration_margin: f64,
    pub concentration: Vec<ConcentrationFit>,
    /// `gamma(x, y)` increases as `x, y` approach a boundary point.
    pub blowup_monotone: bool,
    pub seed: u64,
}

/// Deliberate kernel corruption, used to exercise failure paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFault {
    /// Adds a constant to the Robin function.
    RobinShift(f64),
}

/// Distances of the near-boundary strata.
pub const STRATUM_DISTANCES: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
const CONCENTRATION_EPSILONS: [f64; 3] = [1e-2, 1e-3, 1e-4];
const CONCENTRATION_MARGIN: f64 = 0.1;
const BOUND_SLACK: f64 = 1e-12;

/// Point at distance about `delta` inside boundary component `comp` at `theta`.
fn near_boundary_point(domain: &DomainModel, comp: usize, theta: f64, delta: f64) -> Option<Point> {
    let b = domain.boundary_point(comp, theta);
    let n = domain.boundary_normal(b).ok()?;
    if n.degenerate {
        return None;
    }
    let x = b - delta * n.vector / n.vector.norm();
    domain.contains(x).then_some(x)
}

/// Checks the distance-Robin sandwich and the gradient bound at uniform and
/// near-boundary samples. Fails on any violation of the lower bound.
pub fn verify_pointwise_bounds(
    domain: &DomainModel,
    sample_count: usize,
    seed: u64,
) -> Result<PointwiseReport, MeasureError> {
    verify_pointwise_bounds_with(domain, sample_count, seed, None)
}

pub fn verify_pointwise_bounds_with(
    domain: &DomainModel,
    sample_count: usize,
    seed: u64,
    fault: Option<KernelFault>,
) -> Result<PointwiseReport, MeasureError> {
    if sample_count < 1000 {
        return Err(MeasureError::InvalidParameter(format!(
            "at least 1000 samples are required, got {sample_count}"
        )));
    }
    let shift = match fault {
        Some(KernelFault::RobinShift(s)) => s,
        None => 0.0,
    };
    let holes = domain.hole_count();
    let comps = domain.boundary_components();
    let n_uniform = sample_count / 2;
    let per_stratum = (sample_count - n_uniform) / STRATUM_DISTANCES.len();

    // (stratum index or None, gap, gradient * distance, field pairing)
    type Row = (Option<usize>, f64, f64, f64);
    let eval = |x: Point, stratum: Option<usize>| -> Row {
        let d = domain.distance_to_boundary(x);
        let g = domain.robin_raw(x) + shift;
        let grad = domain.grad_robin_raw(x);
        let pairing = if holes > 0 {
            dot(grad, domain.harmonic_field_raw(x)).abs()
        } else {
            0.0
        };
        (stratum, -2.0 * PI * g - d.ln(), grad.norm() * d, pairing)
    };
    let total = n_uniform + per_stratum * STRATUM_DISTANCES.len();
    let rows: Vec<Option<Row>> = (0..total)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            if k < n_uniform {
                let (x, _) = sample_point(domain, &mut rng).ok()?;
                Some(eval(x, None))
            } else {
                let s = (k - n_uniform) / per_stratum;
                let comp = rng.gen_range(0..comps);
                let theta = rng.gen_range(0.0..2.0 * PI);
                let x = near_boundary_point(domain, comp, theta, STRATUM_DISTANCES[s])?;
                Some(eval(x, Some(s)))
            }
        })
        .collect();

    let new_stats = |distance: f64| StratumStats {
        distance,
        samples: 0,
        max_gap: f64::NEG_INFINITY,
        max_gradient_distance: 0.0,
        max_field_pairing: (holes > 0).then_some(0.0),
    };
    let mut uniform = new_stats(0.0);
    let mut strata: Vec<StratumStats> = STRATUM_DISTANCES.iter().map(|&d| new_stats(d)).collect();
    let mut violations = 0;
    for (s, gap, gd, pairing) in rows.into_iter().flatten() {
        if gap.is_nan() || gap < -BOUND_SLACK {
            violations += 1;
        }
        let st = match s {
            None => &mut uniform,
            Some(i) => &mut strata[i],
        };
        st.samples += 1;
        st.max_gap = st.max_gap.max(gap);
        st.max_gradient_distance = st.max_gradient_distance.max(gd);
        if let Some(m) = st.max_field_pairing.as_mut() {
            *m = m.max(pairing);
        }
    }
    let all = std::iter::once(&uniform).chain(strata.iter());
    let max_gap = all.clone().map(|s| s.max_gap).fold(f64::NEG_INFINITY, f64::max);
    let max_gradient_distance = all.clone().map(|s| s.max_gradient_distance).fold(0.0, f64::max);
    let max_field_pairing = (holes > 0).then(|| {
        all.clone()
            .filter_map(|s| s.max_field_pairing)
            .fold(0.0, f64::max)
    });

    let concentration = concentration_fits(domain, sample_count, seed);
    let report = PointwiseReport {
        domain: domain.kind().to_string(),
        sample_count: uniform.samples + strata.iter().map(|s| s.samples).sum::<usize>(),
        violations,
        max_gap,
        max_gradient_distance,
        max_field_pairing,
        uniform,
        strata,
        concentration_epsilons: CONCENTRATION_EPSILONS.to_vec(),
        concentration_margin: CONCENTRATION_MARGIN,
        concentration,
        blowup_monotone: blowup_monotone(domain),
        seed,
    };
    if violations > 0 {
        return Err(MeasureError::BoundViolation {
            violations,
            report: Box::new(report),
        });
    }
    Ok(report)
}

/// Pairs near the boundary at many scales; for each `eps` and `k`, the pairs
/// with `gamma(x, y) >= (k / 2π)|ln eps| - M` must be `O(eps^k)` close to each
/// other and to the boundary.
fn concentration_fits(domain: &DomainModel, count: usize, seed: u64) -> Vec<ConcentrationFit> {
    let comps = domain.boundary_components();
    let pairs: Vec<Option<(f64, f64)>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed ^ 0x5bd1_e995, k as u64);
            let comp = rng.gen_range(0..comps);
            let theta = rng.gen_range(0.0..2.0 * PI);
            let depth = 10f64.powf(rng.gen_range(-7.0..-0.5));
            let x = near_boundary_point(domain, comp, theta, depth)?;
            let off = 10f64.powf(rng.gen_range(-7.0..0.0));
            let y = x + Complex64::from_polar(off, rng.gen_range(0.0..2.0 * PI));
            if !domain.contains(y) {
                return None;
            }
            let g = domain.gamma_raw(x, y);
            let spread = (x - y)
                .norm()
                .max(domain.distance_to_boundary(x))
                .max(domain.distance_to_boundary(y));
            Some((g, spread))
        })
        .collect();
    [1.0, 0.5]
        .iter()
        .map(|&k| {
            let ratios: Vec<Option<f64>> = CONCENTRATION_EPSILONS
                .iter()
                .map(|&eps| {
                    let level = k / (2.0 * PI) * eps.ln().abs() - CONCENTRATION_MARGIN;
                    pairs
                        .iter()
                        .flatten()
                        .filter(|(g, _)| *g >= level)
                        .map(|(_, s)| s / eps.powf(k))
                        .reduce(f64::max)
                })
                .collect();
            let logs: Vec<f64> = ratios.iter().flatten().map(|r| r.ln()).collect();
            let fitted_c = (!logs.is_empty()).then(|| (logs.iter().sum::<f64>() / logs.len() as f64).exp());
            let spread = (!logs.is_empty()).then(|| {
                let hi = logs.iter().cloned().fold(f64::MIN, f64::max);
                let lo = logs.iter().cloned().fold(f64::MAX, f64::min);
                (hi - lo).exp()
            });
            ConcentrationFit {
                k,
                ratios,
                fitted_c,
                spread,
            }
        })
        .collect()
}

/// `gamma(x_n, y_n)` along pairs converging to boundary points must increase.
fn blowup_monotone(domain: &DomainModel) -> bool {
    let comps = domain.boundary_components();
    (0..comps).all(|comp| {
        (0..8).all(|t| {
            let theta = 0.3 + t as f64 * PI / 4.0;
            let mut last = f64::NEG_INFINITY;
            for e in 1..=6 {
                let delta = 10f64.powi(-e);
                let (Some(x), Some(y)) = (
                    near_boundary_point(domain, comp, theta, delta),
                    near_boundary_point(domain, comp, theta + delta, 2.0 * delta),
                ) else {
                    return false;
                };
                let g = domain.gamma_raw(x, y);
                if !(g > last) {
                    return false;
                }
                last = g;
            }
            true
        })
    })
}

/// Residuals of the kernel self-consistency checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreensReport {
    pub domain: String,
    pub sample_count: usize,
    pub symmetry: f64,
    pub boundary_value: f64,
    pub diagonal: f64,
    pub gradient: f64,
    pub robin_gradient: f64,
    /// Residual of the coupling transport through the map (mapped domains).
    pub transport: Option<f64>,
    /// `|w_1 - 1|` on the hole and `|w_1|` on the outer boundary.
    pub harmonic_measure: Option<f64>,
    pub negativity_violations: usize,
    pub blowup_monotone: bool,
    pub passed: bool,
    pub seed: u64,
}

/// Tolerances applied by [`verify_greens`].
pub const GREENS_TOLERANCES: [(&str, f64); 6] = [
    ("symmetry", 1e-10),
    ("boundary_value", 1e-10),
    ("diagonal", 1e-12),
    ("gradient", 1e-6),
    ("robin_gradient", 1e-6),
    ("transport", 1e-8),
];

fn fd_gradient(f: impl Fn(Point) -> f64, x: Point, h: f64) -> Point {
    let d = |e: Point| {
        (-f(x + 2.0 * e) + 8.0 * f(x + e) - 8.0 * f(x - e) + f(x - 2.0 * e)) / (12.0 * h)
    };
    Complex64::new(d(Complex64::new(h, 0.0)), d(Complex64::new(0.0, h)))
}

/// Interior points kept away from the boundary, for finite-difference checks.
fn interior_sample(domain: &DomainModel, rng: &mut ChaCha8Rng, margin: f64) -> Option<Point> {
    for _ in 0..1000 {
        let (x, _) = sample_point(domain, rng).ok()?;
        if domain.distance_to_boundary(x) > margin {
            return Some(x);
        }
    }
    None
}

/// Symmetry, boundary vanishing, diagonal consistency, finite-difference
/// gradients, transport through the map, negativity and boundary blow-up.
pub fn verify_greens(domain: &DomainModel, sample_count: usize, seed: u64) -> Result<GreensReport, MeasureError> {
    if sample_count == 0 {
        return Err(MeasureError::InvalidParameter("sample_count must be positive".into()));
    }
    let comps = domain.boundary_components();
    type Row = [f64; 6];
    let rows: Vec<Option<(Row, bool)>> = (0..sample_count)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let x = interior_sample(domain, &mut rng, 1e-2)?;
            let y = interior_sample(domain, &mut rng, 1e-2)?;
            if x == y {
                return None;
            }
            let sym = (domain.gamma_raw(x, y) - domain.gamma_raw(y, x)).abs();
            let b = domain.boundary_point(rng.gen_range(0..comps), rng.gen_range(0.0..2.0 * PI));
            let bval = domain.green_raw(b, y).abs();
            let diag = (domain.gamma_raw(x, x) - domain.robin_raw(x)).abs();
            let h = 1e-4 * domain.distance_to_boundary(x).min((x - y).norm()).min(1.0);
            let g = domain.grad_gamma_raw(x, y);
            let gfd = fd_gradient(|p| domain.gamma_raw(p, y), x, h);
            let grad = (g - gfd).norm() / (1.0 + g.norm());
            let r = domain.grad_robin_raw(x);
            let rfd = fd_gradient(|p| domain.robin_raw(p), x, h);
            let rgrad = (r - rfd).norm() / (1.0 + r.norm());
            let transport = match domain {
                DomainModel::Mapped(m) if !m.is_exterior() => {
                    let disk = DomainModel::disk();
                    let j = m.map().jet(x).ok()?;
                    let ty = m.map().eval(y).ok()?;
                    let s = j.d1.norm_sqr();
                    let lhs = dot(domain.grad_green_raw(x, y), perp(r));
                    let ref_g = disk.grad_green_raw(j.value, ty);
                    let rhs = s * dot(ref_g, perp(disk.grad_robin_raw(j.value)))
                        + dot(ref_g, crate::complexmap::psi_from_jet(&j)) / s;
                    (lhs - rhs).abs() / (1.0 + lhs.abs())
                }
                _ => 0.0,
            };
            let negative = domain.green_raw(x, y) < 0.0;
            Some(([sym, bval, diag, grad, rgrad, transport], negative))
        })
        .collect();
    let mut maxima = [0.0f64; 6];
    let mut negativity_violations = 0;
    let mut used = 0;
    for (row, negative) in rows.into_iter().flatten() {
        used += 1;
        for (m, v) in maxima.iter_mut().zip(row) {
            *m = if v.is_nan() { f64::INFINITY } else { m.max(v) };
        }
        if !negative {
            negativity_violations += 1;
        }
    }
    let harmonic_measure = match domain {
        DomainModel::Annulus(a) => Some(
            (0..16)
                .map(|t| {
                    let th = t as f64 * PI / 8.0;
                    let inner = domain.harmonic_measure_raw(Complex64::from_polar(a.rho(), th));
                    let outer = domain.harmonic_measure_raw(Complex64::from_polar(1.0, th));
                    (inner - 1.0).abs().max(outer.abs())
                })
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    let transport = matches!(domain, DomainModel::Mapped(m) if !m.is_exterior()).then_some(maxima[5]);
    let blowup = blowup_monotone(domain);
    let passed = GREENS_TOLERANCES
        .iter()
        .zip(maxima)
        .all(|((_, tol), v)| v <= *tol)
        && harmonic_measure.is_none_or(|h| h <= 1e-12)
        && negativity_violations == 0
        && blowup
        && used > 0;
    Ok(GreensReport {
        domain: domain.kind().to_string(),
        sample_count: used,
        symmetry: maxima[0],
        boundary_value: maxima[1],
        diagonal: maxima[2],
        gradient: maxima[3],
        robin_gradient: maxima[4],
        transport,
        harmonic_measure,
        negativity_violations,
        blowup_monotone: blowup,
        passed,
        seed,
    })
}

/// `G_R2` for pairs of positions, exposed for reporting.
pub fn free_kernel(x: Point, y: Point) -> f64 {
    free_green(x, y)
}
