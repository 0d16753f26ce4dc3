//! The point-vortex vector field, its Hamiltonian, and time integration with
//! event detection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complexmap::{perp, Point};
use crate::greens::{DomainModel, GreensError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("invalid configuration: {0}")]
    ConfigurationInvalid(String),
    #[error("invalid integrator options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Kernel(#[from] GreensError),
}

/// Positions `x_i`, masses `a_i` and hole circulations `xi_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexConfiguration {
    pub positions: Vec<Point>,
    pub masses: Vec<f64>,
    #[serde(default)]
    pub circulations: Vec<f64>,
}

impl VortexConfiguration {
    pub fn new(positions: Vec<Point>, masses: Vec<f64>, circulations: Vec<f64>) -> Self {
        VortexConfiguration {
            positions,
            masses,
            circulations,
        }
    }

    /// A configuration in a domain without holes.
    pub fn simple(positions: Vec<Point>, masses: Vec<f64>) -> Self {
        Self::new(positions, masses, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Same masses and circulations at new positions.
    pub fn with_positions(&self, positions: Vec<Point>) -> Self {
        VortexConfiguration {
            positions,
            masses: self.masses.clone(),
            circulations: self.circulations.clone(),
        }
    }

    /// Checks shape, interiority and distinctness.
    pub fn validate(&self, domain: &DomainModel) -> Result<(), DynamicsError> {
        self.validate_shape(domain)?;
        check_positions(domain, &self.positions)
    }

    pub(crate) fn validate_shape(&self, domain: &DomainModel) -> Result<(), DynamicsError> {
        if self.positions.is_empty() {
            return Err(DynamicsError::ConfigurationInvalid(
                "at least one vortex is required".into(),
            ));
        }
        if self.masses.len() != self.positions.len() {
            return Err(DynamicsError::ConfigurationInvalid(format!(
                "{} positions but {} masses",
                self.positions.len(),
                self.masses.len()
            )));
        }
        if self.circulations.len() != domain.hole_count() {
            return Err(DynamicsError::ConfigurationInvalid(format!(
                "{} circulations given but the domain has {} hole(s)",
                self.circulations.len(),
                domain.hole_count()
            )));
        }
        if self
            .masses
            .iter()
            .chain(&self.circulations)
            .any(|v| !v.is_finite())
        {
            return Err(DynamicsError::ConfigurationInvalid(
                "masses and circulations must be finite".into(),
            ));
        }
        Ok(())
    }
}

fn check_positions(domain: &DomainModel, x: &[Point]) -> Result<(), DynamicsError> {
    for (i, &p) in x.iter().enumerate() {
        if !domain.contains(p) {
            return Err(DynamicsError::ConfigurationInvalid(format!(
                "vortex {i} at {p} is not strictly inside the domain"
            )));
        }
        if x[..i].contains(&p) {
            return Err(DynamicsError::ConfigurationInvalid(format!(
                "vortex {i} coincides with an earlier vortex at {p}"
            )));
        }
    }
    Ok(())
}

/// `d(X)`: the smaller of the closest pair distance and the closest boundary distance.
pub fn min_separation(domain: &DomainModel, x: &VortexConfiguration) -> f64 {
    separation(domain, &x.positions)
}

pub(crate) fn separation(domain: &DomainModel, x: &[Point]) -> f64 {
    let mut d = f64::INFINITY;
    for (i, &p) in x.iter().enumerate() {
        d = d.min(domain.distance_to_boundary(p));
        for &q in &x[..i] {
            d = d.min((p - q).norm());
        }
    }
    d
}

/// `c_j = xi_j + sum_k a_k w_j(x_k)` for every hole.
pub fn circulation_coefficients(domain: &DomainModel, x: &VortexConfiguration) -> Vec<f64> {
    (0..domain.hole_count())
        .map(|j| coefficient(domain, j, &x.positions, &x.masses, &x.circulations))
        .collect()
}

#[inline]
pub(crate) fn coefficient(
    domain: &DomainModel,
    j: usize,
    x: &[Point],
    masses: &[f64],
    circulations: &[f64],
) -> f64 {
    circulations[j]
        + x.iter()
            .zip(masses)
            .map(|(&p, &a)| a * domain.harmonic_measure_raw(p))
            .sum::<f64>()
}

/// A vortex vector field together with the energy it conserves.
pub trait VortexField: Sync {
    fn domain(&self) -> &DomainModel;

    /// Writes the velocity of every vortex into `out`.
    fn velocity_into(
        &self,
        x: &[Point],
        masses: &[f64],
        circulations: &[f64],
        out: &mut [Point],
    ) -> Result<(), DynamicsError>;

    /// The conserved energy.
    fn energy(&self, x: &[Point], masses: &[f64], circulations: &[f64]) -> Result<f64, DynamicsError>;
}

/// The singular point-vortex field of a domain.
#[derive(Debug, Clone, Copy)]
pub struct PointVortexField<'a> {
    domain: &'a DomainModel,
}

impl<'a> PointVortexField<'a> {
    pub fn new(domain: &'a DomainModel) -> Self {
        PointVortexField { domain }
    }
}

impl VortexField for PointVortexField<'_> {
    fn domain(&self) -> &DomainModel {
        self.domain
    }

    fn velocity_into(
        &self,
        x: &[Point],
        masses: &[f64],
        circulations: &[f64],
        out: &mut [Point],
    ) -> Result<(), DynamicsError> {
        check_positions(self.domain, x)?;
        let d = self.domain;
        let holes = d.hole_count();
        for i in 0..x.len() {
            let mut v = Complex64::new(0.0, 0.0);
            for j in 0..x.len() {
                if j != i {
                    v += masses[j] * perp(d.grad_green_raw(x[i], x[j]));
                }
            }
            v += 0.5 * masses[i] * perp(d.grad_robin_raw(x[i]));
            for h in 0..holes {
                let c = coefficient(d, h, x, masses, circulations);
                v += c * d.harmonic_field_raw(x[i]);
            }
            out[i] = v;
        }
        Ok(())
    }

    fn energy(&self, x: &[Point], masses: &[f64], circulations: &[f64]) -> Result<f64, DynamicsError> {
        check_positions(self.domain, x)?;
        let d = self.domain;
        let mut h = 0.0;
        for i in 0..x.len() {
            for j in 0..i {
                h += masses[i] * masses[j] * d.green_raw(x[i], x[j]);
            }
            h += 0.5 * masses[i] * masses[i] * d.robin_raw(x[i]);
        }
        h += hole_energy(d, x, masses, circulations);
        Ok(h)
    }
}

pub(crate) fn hole_energy(d: &DomainModel, x: &[Point], masses: &[f64], circulations: &[f64]) -> f64 {
    let mut h = 0.0;
    for j in 0..d.hole_count() {
        let s: f64 = x
            .iter()
            .zip(masses)
            .map(|(&p, &a)| a * d.harmonic_measure_raw(p))
            .sum();
        h += circulations[j] * s + 0.5 * s * s;
    }
    h
}

/// Velocities `dx_i/dt` of the point-vortex system.
pub fn vortex_velocity(domain: &DomainModel, x: &VortexConfiguration) -> Result<Vec<Point>, DynamicsError> {
    x.validate_shape(domain)?;
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    PointVortexField::new(domain).velocity_into(&x.positions, &x.masses, &x.circulations, &mut out)?;
    Ok(out)
}

/// Kirchhoff-Routh energy, normalised so that `a_i dx_i/dt = ∇^⊥_{x_i} H`.
pub fn hamiltonian(domain: &DomainModel, x: &VortexConfiguration) -> Result<f64, DynamicsError> {
    x.validate_shape(domain)?;
    PointVortexField::new(domain).energy(&x.positions, &x.masses, &x.circulations)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Dormand-Prince 5(4) with PI step-size control.
    Dopri5,
    /// Fixed-step implicit midpoint rule.
    ImplicitMidpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOptions {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    /// First trial step for the adaptive method.
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Step of the implicit midpoint rule.
    pub fixed_step: f64,
    pub max_steps: usize,
    /// Collision threshold on `d(X)`.
    pub delta_stop: f64,
    /// Keep every n-th accepted step in the recorded trajectory.
    pub record_every: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            method: Method::Dopri5,
            rtol: 1e-10,
            atol: 1e-12,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max: 0.25,
            fixed_step: 1e-3,
            max_steps: 5_000_000,
            delta_stop: 1e-4,
            record_every: 1,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("h_init", self.h_init),
            ("h_min", self.h_min),
            ("h_max", self.h_max),
            ("fixed_step", self.fixed_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DynamicsError::InvalidOptions(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.delta_stop >= 0.0) {
            return Err(DynamicsError::InvalidOptions(
                "delta_stop must be non-negative".into(),
            ));
        }
        if self.max_steps == 0 || self.record_every == 0 {
            return Err(DynamicsError::InvalidOptions(
                "max_steps and record_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Kind of event that stopped an integration early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    /// `d(X)` fell below `delta_stop`.
    Separation,
    /// The step size underflowed.
    Stiffness,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum Termination {
    HorizonReached,
    CollisionEvent { time: f64, kind: CollisionKind },
    /// A monitored threshold was met; `condition` indexes the monitor's families.
    ThresholdEvent { time: f64, condition: usize },
    StepLimit { time: f64 },
}

impl Termination {
    pub fn time(&self, horizon: f64) -> f64 {
        match *self {
            Termination::HorizonReached => horizon,
            Termination::CollisionEvent { time, .. }
            | Termination::ThresholdEvent { time, .. }
            | Termination::StepLimit { time } => time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<VortexConfiguration>,
    pub hamiltonian_series: Vec<f64>,
    pub min_separation_series: Vec<f64>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn final_state(&self) -> &VortexConfiguration {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// Largest `|H(t) - H(0)|` along the recorded steps.
    pub fn max_energy_drift(&self) -> f64 {
        let h0 = self.hamiltonian_series[0];
        self.hamiltonian_series
            .iter()
            .map(|h| (h - h0).abs())
            .fold(0.0, f64::max)
    }
}

/// Scalar event functions, each of which signals its event by becoming `<= 0`.
pub trait EventMonitor {
    fn families(&self) -> usize;
    fn margins(&self, x: &[Point], out: &mut [f64]);
}

/// Monitors `d(X) - delta_stop`.
pub struct SeparationMonitor<'a> {
    pub domain: &'a DomainModel,
    pub delta_stop: f64,
}

impl EventMonitor for SeparationMonitor<'_> {
    fn families(&self) -> usize {
        1
    }

    fn margins(&self, x: &[Point], out: &mut [f64]) {
        out[0] = separation(self.domain, x) - self.delta_stop;
    }
}

/// Outcome of the low-level integration loop.
pub(crate) struct RunEnd {
    pub time: f64,
    pub state: Vec<Point>,
    pub event: Option<(usize, f64)>,
    pub stiff: bool,
    pub step_limit: bool,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Evaluation context for one trajectory: the field, the constant data and
/// scratch buffers.
pub(crate) struct Stepper<'a, F: VortexField + ?Sized> {
    field: &'a F,
    masses: &'a [f64],
    circulations: &'a [f64],
    k: [Vec<Point>; 7],
    tmp: Vec<Point>,
}

impl<'a, F: VortexField + ?Sized> Stepper<'a, F> {
    pub fn new(field: &'a F, masses: &'a [f64], circulations: &'a [f64]) -> Self {
        let n = masses.len();
        let z = vec![Complex64::new(0.0, 0.0); n];
        Stepper {
            field,
            masses,
            circulations,
            k: [
                z.clone(),
                z.clone(),
                z.clone(),
                z.clone(),
                z.clone(),
                z.clone(),
                z.clone(),
            ],
            tmp: z,
        }
    }

    fn eval(&self, x: &[Point], out: &mut [Point]) -> Result<(), DynamicsError> {
        self.field
            .velocity_into(x, self.masses, self.circulations, out)?;
        if out.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(DynamicsError::ConfigurationInvalid(
                "non-finite velocity".into(),
            ));
        }
        Ok(())
    }

    fn combine(&mut self, y: &[Point], h: f64, coeffs: &[(usize, f64)]) {
        for i in 0..y.len() {
            let mut s = Complex64::new(0.0, 0.0);
            for &(j, c) in coeffs {
                s += c * self.k[j][i];
            }
            self.tmp[i] = y[i] + h * s;
        }
    }

    fn stage(&mut self, y: &[Point], h: f64, coeffs: &[(usize, f64)], slot: usize) -> Result<(), DynamicsError> {
        self.combine(y, h, coeffs);
        let mut out = std::mem::take(&mut self.k[slot]);
        let r = self.eval(&self.tmp, &mut out);
        self.k[slot] = out;
        r
    }

    /// One Dormand-Prince step from `y` with `k[0] = f(y)` already set.
    /// Writes the 5th-order solution to `out` and returns the scaled error norm.
    fn dopri_step(
        &mut self,
        y: &[Point],
        h: f64,
        rtol: f64,
        atol: f64,
        out: &mut Vec<Point>,
    ) -> Result<f64, DynamicsError> {
        self.stage(y, h, &[(0, A21)], 1)?;
        self.stage(y, h, &[(0, A31), (1, A32)], 2)?;
        self.stage(y, h, &[(0, A41), (1, A42), (2, A43)], 3)?;
        self.stage(y, h, &[(0, A51), (1, A52), (2, A53), (3, A54)], 4)?;
        self.stage(y, h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], 5)?;
        self.combine(y, h, &[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)]);
        out.clear();
        out.extend_from_slice(&self.tmp);
        let mut k6 = std::mem::take(&mut self.k[6]);
        let r = self.eval(out, &mut k6);
        self.k[6] = k6;
        r?;
        let mut acc = 0.0;
        for i in 0..y.len() {
            let e = h
                * (E1 * self.k[0][i]
                    + E3 * self.k[2][i]
                    + E4 * self.k[3][i]
                    + E5 * self.k[4][i]
                    + E6 * self.k[5][i]
                    + E7 * self.k[6][i]);
            let sre = atol + rtol * y[i].re.abs().max(out[i].re.abs());
            let sim = atol + rtol * y[i].im.abs().max(out[i].im.abs());
            acc += (e.re / sre).powi(2) + (e.im / sim).powi(2);
        }
        Ok((acc / (2 * y.len()) as f64).sqrt())
    }

    /// One implicit midpoint step by fixed-point iteration.
    fn midpoint_step(&mut self, y: &[Point], h: f64, out: &mut Vec<Point>) -> Result<(), DynamicsError> {
        let n = y.len();
        out.clear();
        out.extend((0..n).map(|i| y[i] + h * self.k[0][i]));
        let mut mid = vec![Complex64::new(0.0, 0.0); n];
        let mut f = vec![Complex64::new(0.0, 0.0); n];
        for _ in 0..100 {
            for i in 0..n {
                mid[i] = 0.5 * (y[i] + out[i]);
            }
            self.eval(&mid, &mut f)?;
            let mut change: f64 = 0.0;
            for i in 0..n {
                let next = y[i] + h * f[i];
                change = change.max((next - out[i]).norm() / (1.0 + next.norm()));
                out[i] = next;
            }
            if change < 1e-15 {
                return Ok(());
            }
        }
        Err(DynamicsError::ConfigurationInvalid(
            "implicit midpoint iteration did not converge".into(),
        ))
    }

    /// Single step of the selected method; `k[0]` must hold `f(y)`.
    fn single(&mut self, y: &[Point], h: f64, opts: &IntegratorOptions, out: &mut Vec<Point>) -> Result<f64, DynamicsError> {
        match opts.method {
            Method::Dopri5 => self.dopri_step(y, h, opts.rtol, opts.atol, out),
            Method::ImplicitMidpoint => self.midpoint_step(y, h, out).map(|_| 0.0),
        }
    }

    /// Integrates from `x0` to `horizon`, calling `observe(t, x)` on the
    /// initial state and every accepted step, and stopping at the first
    /// event of `monitor`.
    pub fn run(
        &mut self,
        x0: &[Point],
        horizon: f64,
        opts: &IntegratorOptions,
        monitor: &dyn EventMonitor,
        observe: &mut dyn FnMut(f64, &[Point]),
    ) -> Result<RunEnd, DynamicsError> {
        opts.validate()?;
        let fam = monitor.families();
        let mut margins = vec![0.0; fam];
        let mut y = x0.to_vec();
        let mut t = 0.0;
        monitor.margins(&y, &mut margins);
        observe(t, &y);
        if let Some(k) = margins.iter().position(|&m| m <= 0.0) {
            return Ok(RunEnd {
                time: 0.0,
                state: y,
                event: Some((k, 0.0)),
                stiff: false,
                step_limit: false,
            });
        }
        let mut k0 = std::mem::take(&mut self.k[0]);
        self.eval(&y, &mut k0)?;
        self.k[0] = k0;

        let adaptive = opts.method == Method::Dopri5;
        let mut h = if adaptive { opts.h_init } else { opts.fixed_step };
        let mut err_prev: f64 = 1e-4;
        let mut ynew = Vec::with_capacity(y.len());
        let mut steps = 0usize;
        let mut k0_saved = self.k[0].clone();

        loop {
            if t >= horizon {
                return Ok(RunEnd {
                    time: t,
                    state: y,
                    event: None,
                    stiff: false,
                    step_limit: false,
                });
            }
            if steps >= opts.max_steps {
                return Ok(RunEnd {
                    time: t,
                    state: y,
                    event: None,
                    stiff: false,
                    step_limit: true,
                });
            }
            let remaining = horizon - t;
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            self.k[0].copy_from_slice(&k0_saved);
            let attempt = self.single(&y, h_try, opts, &mut ynew);
            let ok = match attempt {
                Ok(err) if err <= 1.0 => Some(err),
                Ok(err) => {
                    if adaptive {
                        h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                    } else {
                        h = h_try * 0.5;
                    }
                    None
                }
                Err(_) => {
                    h = h_try * 0.25;
                    None
                }
            };
            let Some(err) = ok else {
                if h < opts.h_min {
                    return Ok(RunEnd {
                        time: t,
                        state: y,
                        event: None,
                        stiff: true,
                        step_limit: false,
                    });
                }
                continue;
            };
            steps += 1;
            monitor.margins(&ynew, &mut margins);
            if margins.iter().any(|&m| m <= 0.0) {
                let (k, s, state) = self.locate(&y, &k0_saved, h_try, opts, monitor, &margins)?;
                observe(t + s, &state);
                return Ok(RunEnd {
                    time: t + s,
                    state,
                    event: Some((k, t + s)),
                    stiff: false,
                    step_limit: false,
                });
            }
            t = if last { horizon } else { t + h_try };
            std::mem::swap(&mut y, &mut ynew);
            match opts.method {
                Method::Dopri5 => {
                    k0_saved.copy_from_slice(&self.k[6]);
                    let err = err.max(1e-10);
                    let fac = 0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
                    err_prev = err;
                    if !last {
                        h = (h_try * fac.clamp(0.2, 5.0)).min(opts.h_max);
                    }
                }
                Method::ImplicitMidpoint => {
                    let mut k0 = std::mem::take(&mut self.k[0]);
                    self.eval(&y, &mut k0)?;
                    k0_saved.copy_from_slice(&k0);
                    self.k[0] = k0;
                    if !last {
                        h = (h_try * 2.0).min(opts.fixed_step);
                    }
                }
            }
            observe(t, &y);
        }
    }

    /// Bisects the one-step map from `y` for the earliest event, to an
    /// interval of 1e-10. Ties go to the lower family index.
    fn locate(
        &mut self,
        y: &[Point],
        k0: &[Point],
        h: f64,
        opts: &IntegratorOptions,
        monitor: &dyn EventMonitor,
        end_margins: &[f64],
    ) -> Result<(usize, f64, Vec<Point>), DynamicsError> {
        let fam = monitor.families();
        let mut margins = vec![0.0; fam];
        let mut buf = Vec::with_capacity(y.len());
        let mut best: Option<(usize, f64)> = None;
        for k in 0..fam {
            if end_margins[k] > 0.0 {
                continue;
            }
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                self.k[0].copy_from_slice(k0);
                let hit = match self.single(y, mid, opts, &mut buf) {
                    Ok(_) => {
                        monitor.margins(&buf, &mut margins);
                        margins[k] <= 0.0
                    }
                    Err(_) => true,
                };
                if hit {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            if best.is_none_or(|(_, s)| hi < s) {
                best = Some((k, hi));
            }
        }
        let (k, s) = best.expect("at least one margin is non-positive");
        self.k[0].copy_from_slice(k0);
        match self.single(y, s, opts, &mut buf) {
            Ok(_) => Ok((k, s, buf)),
            Err(_) => Ok((k, s, y.to_vec())),
        }
    }
}

/// Integrates a vortex field with collision detection on `d(X)`.
pub fn integrate_field<F: VortexField + ?Sized>(
    field: &F,
    x0: &VortexConfiguration,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory, DynamicsError> {
    let domain = field.domain();
    x0.validate(domain)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(DynamicsError::InvalidOptions(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let monitor = SeparationMonitor {
        domain,
        delta_stop: opts.delta_stop,
    };
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        hamiltonian_series: Vec::new(),
        min_separation_series: Vec::new(),
        termination: Termination::HorizonReached,
    };
    let mut count = 0usize;
    let mut energy_error = None;
    let mut pending: Option<(f64, Vec<Point>)> = None;
    let mut stepper = Stepper::new(field, &x0.masses, &x0.circulations);
    let end = {
        let mut observe = |t: f64, x: &[Point]| {
            let keep = count.is_multiple_of(opts.record_every);
            count += 1;
            if !keep {
                pending = Some((t, x.to_vec()));
                return;
            }
            pending = None;
            record(field, x0, &mut traj, t, x, &mut energy_error);
        };
        stepper.run(&x0.positions, horizon, opts, &monitor, &mut observe)?
    };
    if let Some((t, x)) = pending {
        record(field, x0, &mut traj, t, &x, &mut energy_error);
    }
    if let Some(e) = energy_error {
        return Err(e);
    }
    traj.termination = if end.stiff {
        Termination::CollisionEvent {
            time: end.time,
            kind: CollisionKind::Stiffness,
        }
    } else if end.step_limit {
        Termination::StepLimit { time: end.time }
    } else if let Some((_, time)) = end.event {
        Termination::CollisionEvent {
            time,
            kind: CollisionKind::Separation,
        }
    } else {
        Termination::HorizonReached
    };
    Ok(traj)
}

fn record<F: VortexField + ?Sized>(
    field: &F,
    x0: &VortexConfiguration,
    traj: &mut Trajectory,
    t: f64,
    x: &[Point],
    energy_error: &mut Option<DynamicsError>,
) {
    let h = match field.energy(x, &x0.masses, &x0.circulations) {
        Ok(h) => h,
        Err(e) => {
            energy_error.get_or_insert(e);
            f64::NAN
        }
    };
    if traj.times.last().is_some_and(|&last| t <= last) {
        return;
    }
    traj.times.push(t);
    traj.states.push(x0.with_positions(x.to_vec()));
    traj.hamiltonian_series.push(h);
    traj.min_separation_series.push(separation(field.domain(), x));
}

/// Integrates the point-vortex system from `x0` up to `horizon`.
pub fn integrate(
    domain: &DomainModel,
    x0: &VortexConfiguration,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory, DynamicsError> {
    integrate_field(&PointVortexField::new(domain), x0, horizon, opts)
}

/// Runs the integrator and returns only the smallest `d(X)` seen (including
/// the refined event state) and the termination.
pub fn minimum_separation_along<F: VortexField + ?Sized>(
    field: &F,
    x0: &VortexConfiguration,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<(f64, Termination), DynamicsError> {
    let domain = field.domain();
    x0.validate(domain)?;
    let monitor = SeparationMonitor {
        domain,
        delta_stop: opts.delta_stop,
    };
    let mut dmin = f64::INFINITY;
    let mut stepper = Stepper::new(field, &x0.masses, &x0.circulations);
    let end = stepper.run(&x0.positions, horizon, opts, &monitor, &mut |_, x| {
        dmin = dmin.min(separation(domain, x));
    })?;
    let term = if end.stiff {
        Termination::CollisionEvent {
            time: end.time,
            kind: CollisionKind::Stiffness,
        }
    } else if end.step_limit {
        Termination::StepLimit { time: end.time }
    } else if let Some((_, time)) = end.event {
        Termination::CollisionEvent {
            time,
            kind: CollisionKind::Separation,
        }
    } else {
        Termination::HorizonReached
    };
    Ok((dmin, term))
}

/// Flow map `X0 -> S_t X0` of a field by `steps` fixed Dormand-Prince steps.
pub(crate) fn fixed_step_flow<F: VortexField + ?Sized>(
    field: &F,
    x0: &VortexConfiguration,
    t: f64,
    steps: usize,
) -> Result<Vec<Point>, DynamicsError> {
    let mut stepper = Stepper::new(field, &x0.masses, &x0.circulations);
    let mut y = x0.positions.clone();
    let mut out = Vec::with_capacity(y.len());
    let h = t / steps as f64;
    for _ in 0..steps {
        let mut k0 = std::mem::take(&mut stepper.k[0]);
        stepper.eval(&y, &mut k0)?;
        stepper.k[0] = k0;
        stepper.dopri_step(&y, h, 1.0, 1.0, &mut out)?;
        std::mem::swap(&mut y, &mut out);
    }
    Ok(y)
}

/// Determinant of the central finite-difference Jacobian (step 1e-6) of the
/// flow map `X0 -> S_t X0`.
///
/// The flow is computed with fixed steps so that the numerical flow map is
/// smooth in the initial data.
pub fn flow_jacobian(domain: &DomainModel, x0: &VortexConfiguration, t: f64) -> Result<f64, DynamicsError> {
    x0.validate(domain)?;
    if t == 0.0 {
        return Ok(1.0);
    }
    let field = PointVortexField::new(domain);
    let steps = ((t.abs() / 2e-3).ceil() as usize).max(1);
    let n = x0.len();
    let h = 1e-6;
    let mut jac = nalgebra::DMatrix::<f64>::zeros(2 * n, 2 * n);
    for col in 0..2 * n {
        let dir = if col % 2 == 0 {
            Complex64::new(h, 0.0)
        } else {
            Complex64::new(0.0, h)
        };
        let mut plus = x0.positions.clone();
        let mut minus = x0.positions.clone();
        plus[col / 2] += dir;
        minus[col / 2] -= dir;
        let fp = fixed_step_flow(&field, &x0.with_positions(plus), t, steps)?;
        let fm = fixed_step_flow(&field, &x0.with_positions(minus), t, steps)?;
        for row in 0..n {
            let d = (fp[row] - fm[row]) / (2.0 * h);
            jac[(2 * row, col)] = d.re;
            jac[(2 * row + 1, col)] = d.im;
        }
    }
    Ok(jac.determinant())
}
