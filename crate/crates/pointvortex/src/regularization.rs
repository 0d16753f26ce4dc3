//! Cutoff-regularized kernels and dynamics, the stopping time `tau_eps`,
//! and the functionals `phi_eps` and `Lambda_eps`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complexmap::{dot, perp, Point};
use crate::dynamics::{
    coefficient, fixed_step_flow, hole_energy, DynamicsError, EventMonitor, IntegratorOptions,
    Stepper, Termination, VortexConfiguration, VortexField,
};
use crate::greens::{free_green, grad_free_green, DomainModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegularizationError {
    #[error("invalid regularization parameter: {0}")]
    InvalidParameter(String),
    #[error("integration failed: {0}")]
    IntegrationFailure(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

const RAMP_CELLS: usize = 1024;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Smooth step from 1 at `t <= 0` to 0 at `t >= 1`.
#[inline]
pub fn ramp(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 / (1.0 + (1.0 / (1.0 - t) - 1.0 / t).exp())
    }
}

#[derive(Debug)]
struct RampIntegral {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RampIntegral {
    fn new() -> Self {
        let (nodes, weights) = gauss_legendre(16);
        let mut r = RampIntegral {
            nodes,
            weights,
            cumulative: vec![0.0; RAMP_CELLS + 1],
        };
        for k in 0..RAMP_CELLS {
            let a = k as f64 / RAMP_CELLS as f64;
            let b = (k + 1) as f64 / RAMP_CELLS as f64;
            r.cumulative[k + 1] = r.cumulative[k] + r.quad(a, b);
        }
        r
    }

    fn quad(&self, a: f64, b: f64) -> f64 {
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        h * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * ramp(m + h * x))
            .sum::<f64>()
    }

    /// `∫_0^t ramp` for `t` in `[0, 1]`.
    fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let k = ((t * RAMP_CELLS as f64) as usize).min(RAMP_CELLS - 1);
        let a = k as f64 / RAMP_CELLS as f64;
        self.cumulative[k] + self.quad(a, t)
    }
}

/// The odd cutoff `f_eps`: identity below `A = |ln eps| / 2π`, constant
/// `L` above `A + 1`, with a smooth monotone ramp in between.
#[derive(Debug, Clone)]
pub struct CutoffProfile {
    epsilon: f64,
    threshold: f64,
    plateau: f64,
    ramp: Arc<RampIntegral>,
}

impl CutoffProfile {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `A`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `L`.
    pub fn plateau(&self) -> f64 {
        self.plateau
    }

    /// `f_eps(r)`.
    pub fn f(&self, r: f64) -> f64 {
        let s = r.abs();
        let v = if s < self.threshold {
            return r;
        } else if s <= self.threshold + 1.0 {
            self.threshold + self.ramp.eval(s - self.threshold)
        } else {
            self.plateau
        };
        v.copysign(r)
    }

    /// `f_eps'(r)`.
    pub fn df(&self, r: f64) -> f64 {
        let s = r.abs();
        if s < self.threshold {
            1.0
        } else if s <= self.threshold + 1.0 {
            ramp(s - self.threshold)
        } else {
            0.0
        }
    }
}

/// Builds the cutoff for `0 < eps < 1`.
pub fn build_cutoff(epsilon: f64) -> Result<CutoffProfile, RegularizationError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(RegularizationError::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let ramp = Arc::new(RampIntegral::new());
    let threshold = epsilon.ln().abs() / (2.0 * PI);
    let plateau = threshold + ramp.cumulative[RAMP_CELLS];
    Ok(CutoffProfile {
        epsilon,
        threshold,
        plateau,
        ramp,
    })
}

/// A kernel value together with its gradient in the first argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub gradient: Point,
}

/// Regularized Green's and Robin functions of a domain.
#[derive(Debug, Clone)]
pub struct RegularizedKernels {
    domain: DomainModel,
    cutoff: CutoffProfile,
}

impl RegularizedKernels {
    pub fn new(domain: &DomainModel, epsilon: f64) -> Result<Self, RegularizationError> {
        Ok(RegularizedKernels {
            domain: domain.clone(),
            cutoff: build_cutoff(epsilon)?,
        })
    }

    pub fn domain(&self) -> &DomainModel {
        &self.domain
    }

    pub fn cutoff(&self) -> &CutoffProfile {
        &self.cutoff
    }

    pub fn epsilon(&self) -> f64 {
        self.cutoff.epsilon
    }

    /// `G_eps(x, y)` and `∇_x G_eps(x, y)` on the closed domain.
    pub fn green_reg(&self, x: Point, y: Point) -> KernelValue {
        let d = &self.domain;
        let f = &self.cutoff;
        let (bx, by) = (d.gap(x) <= 0.0, d.gap(y) <= 0.0);
        if x == y {
            if bx {
                return KernelValue {
                    value: 0.0,
                    gradient: Complex64::new(0.0, 0.0),
                };
            }
            let r = d.robin_raw(x);
            let fp = f.df(r);
            let gradient = if fp == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                0.5 * d.grad_robin_raw(x) * fp
            };
            return KernelValue {
                value: -f.plateau + f.f(r),
                gradient,
            };
        }
        let g0 = free_green(x, y);
        let g1 = d.gamma_raw(x, y);
        let (p0, p1) = (f.df(g0), f.df(g1));
        let zero = Complex64::new(0.0, 0.0);
        let t0 = if p0 == 0.0 { zero } else { grad_free_green(x, y) * p0 };
        let t1 = if p1 == 0.0 { zero } else { d.grad_gamma_raw(x, y) * p1 };
        let gradient = t0 + t1;
        let value = if bx || by { 0.0 } else { f.f(g0) + f.f(g1) };
        KernelValue { value, gradient }
    }

    /// `gamma~_eps(x)` and its gradient on the closed domain.
    pub fn robin_reg(&self, x: Point) -> KernelValue {
        let d = &self.domain;
        if d.gap(x) <= 0.0 {
            return KernelValue {
                value: self.cutoff.plateau,
                gradient: Complex64::new(0.0, 0.0),
            };
        }
        let r = d.robin_raw(x);
        let fp = self.cutoff.df(r);
        let gradient = if fp == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            d.grad_robin_raw(x) * fp
        };
        KernelValue {
            value: self.cutoff.f(r),
            gradient,
        }
    }

    fn check_closed(&self, x: &[Point]) -> Result<(), DynamicsError> {
        for (i, &p) in x.iter().enumerate() {
            if !self.domain.contains_closed(p) {
                return Err(DynamicsError::ConfigurationInvalid(format!(
                    "vortex {i} at {p} lies outside the closed domain"
                )));
            }
        }
        Ok(())
    }
}

/// The regularized vortex field, defined on the whole closed domain.
impl VortexField for RegularizedKernels {
    fn domain(&self) -> &DomainModel {
        &self.domain
    }

    fn velocity_into(
        &self,
        x: &[Point],
        masses: &[f64],
        circulations: &[f64],
        out: &mut [Point],
    ) -> Result<(), DynamicsError> {
        self.check_closed(x)?;
        let d = &self.domain;
        let holes = d.hole_count();
        for i in 0..x.len() {
            let mut v = Complex64::new(0.0, 0.0);
            for j in 0..x.len() {
                if j != i {
                    v += masses[j] * perp(self.green_reg(x[i], x[j]).gradient);
                }
            }
            v += 0.5 * masses[i] * perp(self.robin_reg(x[i]).gradient);
            for h in 0..holes {
                let c = coefficient(d, h, x, masses, circulations);
                v += c * d.harmonic_field_raw(x[i]);
            }
            out[i] = v;
        }
        Ok(())
    }

    fn energy(&self, x: &[Point], masses: &[f64], circulations: &[f64]) -> Result<f64, DynamicsError> {
        self.check_closed(x)?;
        let mut h = 0.0;
        for i in 0..x.len() {
            for j in 0..i {
                h += masses[i] * masses[j] * self.green_reg(x[i], x[j]).value;
            }
            h += 0.5 * masses[i] * masses[i] * self.robin_reg(x[i]).value;
        }
        h += hole_energy(&self.domain, x, masses, circulations);
        Ok(h)
    }
}

/// `G_eps(x, y)` with its gradient.
pub fn green_reg(kernels: &RegularizedKernels, x: Point, y: Point) -> KernelValue {
    kernels.green_reg(x, y)
}

/// `gamma~_eps(x)` with its gradient.
pub fn robin_reg(kernels: &RegularizedKernels, x: Point) -> KernelValue {
    kernels.robin_reg(x)
}

/// Velocities of the regularized system. Coincident vortices and boundary
/// points are allowed.
pub fn velocity_reg(kernels: &RegularizedKernels, x: &VortexConfiguration) -> Result<Vec<Point>, DynamicsError> {
    x.validate_shape(&kernels.domain)?;
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    kernels.velocity_into(&x.positions, &x.masses, &x.circulations, &mut out)?;
    Ok(out)
}

/// Energy of the regularized system.
pub fn hamiltonian_reg(kernels: &RegularizedKernels, x: &VortexConfiguration) -> Result<f64, DynamicsError> {
    x.validate_shape(&kernels.domain)?;
    kernels.energy(&x.positions, &x.masses, &x.circulations)
}

/// Which threshold stopped the regularized flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdCondition {
    /// `|G_R2(x_i, x_j)| >= A`.
    FreeKernel,
    /// `|gamma~(x_i)| >= A`.
    Robin,
    /// `|gamma(x_i, x_j)| >= A`.
    RegularPart,
}

impl ThresholdCondition {
    pub fn index(self) -> usize {
        match self {
            ThresholdCondition::FreeKernel => 0,
            ThresholdCondition::Robin => 1,
            ThresholdCondition::RegularPart => 2,
        }
    }

    fn from_index(k: usize) -> Self {
        match k {
            0 => ThresholdCondition::FreeKernel,
            1 => ThresholdCondition::Robin,
            _ => ThresholdCondition::RegularPart,
        }
    }
}

/// Margins `A - max|G_R2|`, `A - max|gamma~|`, `A - max|gamma|`.
pub struct ThresholdMonitor<'a> {
    pub domain: &'a DomainModel,
    pub threshold: f64,
}

#[inline]
fn margin(a: f64, q: f64) -> f64 {
    if q.is_nan() {
        f64::NEG_INFINITY
    } else {
        a - q
    }
}

impl EventMonitor for ThresholdMonitor<'_> {
    fn families(&self) -> usize {
        3
    }

    fn margins(&self, x: &[Point], out: &mut [f64]) {
        let d = self.domain;
        let (mut g0, mut g1, mut g2) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..x.len() {
            let r = if d.gap(x[i]) <= 0.0 {
                f64::INFINITY
            } else {
                d.robin_raw(x[i]).abs()
            };
            g1 = if r.is_nan() { f64::NAN } else { g1.max(r) };
            for j in 0..i {
                let a = free_green(x[i], x[j]).abs();
                let b = d.gamma_raw(x[i], x[j]).abs();
                g0 = if a.is_nan() { f64::NAN } else { g0.max(a) };
                g2 = if b.is_nan() { f64::NAN } else { g2.max(b) };
            }
        }
        out[0] = margin(self.threshold, g0);
        out[1] = margin(self.threshold, g1);
        out[2] = margin(self.threshold, g2);
    }
}

/// Result of [`tau_eps`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauOutcome {
    /// Hitting time, or the horizon if no threshold was met.
    pub tau: f64,
    pub condition: Option<ThresholdCondition>,
    /// State of the regularized flow at `tau`.
    pub state: VortexConfiguration,
}

/// First time at which a threshold condition holds along the regularized flow.
pub fn tau_eps(
    domain: &DomainModel,
    x0: &VortexConfiguration,
    epsilon: f64,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<TauOutcome, RegularizationError> {
    let kernels = RegularizedKernels::new(domain, epsilon)?;
    tau_eps_with(&kernels, x0, horizon, opts, &mut |_, _| {})
}

/// [`tau_eps`] with prebuilt kernels and an observer called on every accepted step.
pub fn tau_eps_with(
    kernels: &RegularizedKernels,
    x0: &VortexConfiguration,
    horizon: f64,
    opts: &IntegratorOptions,
    observe: &mut dyn FnMut(f64, &[Point]),
) -> Result<TauOutcome, RegularizationError> {
    x0.validate(&kernels.domain)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(RegularizationError::InvalidParameter(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let monitor = ThresholdMonitor {
        domain: &kernels.domain,
        threshold: kernels.cutoff.threshold,
    };
    let mut stepper = Stepper::new(kernels, &x0.masses, &x0.circulations);
    let end = stepper.run(&x0.positions, horizon, opts, &monitor, observe)?;
    if end.stiff {
        return Err(RegularizationError::IntegrationFailure(format!(
            "step size underflow at t = {}",
            end.time
        )));
    }
    if end.step_limit {
        return Err(RegularizationError::IntegrationFailure(format!(
            "step limit reached at t = {}",
            end.time
        )));
    }
    let state = x0.with_positions(end.state);
    Ok(match end.event {
        Some((k, time)) => TauOutcome {
            tau: time,
            condition: Some(ThresholdCondition::from_index(k)),
            state,
        },
        None => TauOutcome {
            tau: horizon,
            condition: None,
            state,
        },
    })
}

/// Termination of a regularized run expressed in the common vocabulary.
pub fn tau_termination(outcome: &TauOutcome) -> Termination {
    match outcome.condition {
        Some(c) => Termination::ThresholdEvent {
            time: outcome.tau,
            condition: c.index(),
        },
        None => Termination::HorizonReached,
    }
}

/// State of the regularized flow at time `t` (negative times run the
/// time-reversed system), computed with fixed steps no longer than `max_step`.
pub fn flow_reg(
    kernels: &RegularizedKernels,
    x0: &VortexConfiguration,
    t: f64,
    max_step: f64,
) -> Result<VortexConfiguration, DynamicsError> {
    x0.validate_shape(&kernels.domain)?;
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let start = if t < 0.0 {
        VortexConfiguration::new(
            x0.positions.clone(),
            x0.masses.iter().map(|a| -a).collect(),
            x0.circulations.iter().map(|c| -c).collect(),
        )
    } else {
        x0.clone()
    };
    let steps = ((t.abs() / max_step).ceil() as usize).max(1);
    let y = fixed_step_flow(kernels, &start, t.abs(), steps)?;
    Ok(x0.with_positions(y))
}

/// Parameters of `F(r) = exp(-eta r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalParams {
    pub eta: f64,
}

impl Default for FunctionalParams {
    fn default() -> Self {
        FunctionalParams { eta: 0.1 }
    }
}

impl FunctionalParams {
    pub fn new(eta: f64) -> Result<Self, RegularizationError> {
        let p = FunctionalParams { eta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), RegularizationError> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(RegularizationError::InvalidParameter(format!(
                "eta must lie in (0, 1), got {}",
                self.eta
            )));
        }
        Ok(())
    }

    fn f(&self, r: f64) -> f64 {
        (-self.eta * r).exp()
    }

    fn df(&self, r: f64) -> f64 {
        -self.eta * (-self.eta * r).exp()
    }
}

/// `phi_eps(X)`.
pub fn phi_eps(kernels: &RegularizedKernels, params: &FunctionalParams, x: &VortexConfiguration) -> f64 {
    phi_positions(kernels, params, &x.positions)
}

pub(crate) fn phi_positions(kernels: &RegularizedKernels, params: &FunctionalParams, x: &[Point]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            if i != j {
                s += 0.5 * params.f(kernels.green_reg(x[i], x[j]).value);
            }
        }
        s += 0.5 * params.f(-kernels.robin_reg(x[i]).value);
    }
    s
}

/// Lower bound on `phi_eps` at a threshold hitting time.
pub fn phi_hitting_bound(epsilon: f64, params: &FunctionalParams) -> f64 {
    0.5 * epsilon.powf(-params.eta / (8.0 * PI))
}

/// The six contributions to `Lambda_eps` and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaBreakdown {
    pub terms: [f64; 6],
    pub total: f64,
}

/// Time derivative of `phi_eps` along the regularized flow at `X`.
pub fn lambda_eps(
    kernels: &RegularizedKernels,
    params: &FunctionalParams,
    x: &VortexConfiguration,
) -> Result<LambdaBreakdown, DynamicsError> {
    x.validate_shape(&kernels.domain)?;
    kernels.check_closed(&x.positions)?;
    let d = &kernels.domain;
    let p = &x.positions;
    let a = &x.masses;
    let n = p.len();
    let zero = Complex64::new(0.0, 0.0);

    let mut ext = vec![zero; n];
    for h in 0..d.hole_count() {
        let c = coefficient(d, h, p, a, &x.circulations);
        for i in 0..n {
            ext[i] += c * d.harmonic_field_raw(p[i]);
        }
    }
    let pairs: Vec<Vec<KernelValue>> = (0..n)
        .map(|i| (0..n).map(|j| kernels.green_reg(p[i], p[j])).collect())
        .collect();
    let robins: Vec<KernelValue> = p.iter().map(|&q| kernels.robin_reg(q)).collect();
    let pair_velocity: Vec<Point> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&k| k != i)
                .map(|k| a[k] * perp(pairs[i][k].gradient))
                .sum()
        })
        .collect();

    let mut b = [0.0; 6];
    for i in 0..n {
        let self_velocity = 0.5 * a[i] * perp(robins[i].gradient);
        for j in 0..n {
            if j == i {
                continue;
            }
            let g = pairs[i][j];
            let w = params.df(g.value);
            b[0] += w * dot(g.gradient, pair_velocity[i]);
            b[1] += w * dot(g.gradient, self_velocity);
            b[2] += w * dot(g.gradient, ext[i]);
        }
        let r = robins[i];
        let w = params.df(-r.value);
        b[3] -= 0.5 * w * dot(r.gradient, pair_velocity[i]);
        b[4] -= 0.25 * w * a[i] * dot(r.gradient, perp(r.gradient));
        b[5] -= 0.5 * w * dot(r.gradient, ext[i]);
    }
    Ok(LambdaBreakdown {
        terms: b,
        total: b.iter().sum(),
    })
}
