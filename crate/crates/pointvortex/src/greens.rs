//! Green's functions, Robin functions, harmonic measures and boundary
//! geometry for the supported planar domains.
//!
//! Sign convention: `G = G_R2 + gamma` with `G_R2(x, y) = ln|x - y| / 2π`,
//! so that `G < 0` inside the domain and `G = 0` on its boundary. The Robin
//! function is `gamma(x, x)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complexmap::{
    dot, map_sanity_report, perp, HolomorphicMap, MapError, MapSanityReport, MapSpec, NormalField,
    Point,
};

const TWO_PI: f64 = 2.0 * PI;
/// Points this far outside the closed domain (in reference coordinates) are
/// still accepted as boundary points.
pub const CLOSED_TOLERANCE: f64 = 1e-12;
const BOUNDARY_NODES: usize = 1024;
const DEFAULT_WINDOW: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GreensError {
    #[error("point {point} lies outside the domain")]
    DomainViolation { point: Point },
    #[error("the two arguments coincide at {point}")]
    Coincident { point: Point },
    #[error("hole index {index} out of range: the domain has {holes} hole(s)")]
    NoSuchHole { index: usize, holes: usize },
    #[error("invalid domain parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Serializable description of a domain, as found in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Disk {},
    ExteriorDisk {
        #[serde(default = "default_window")]
        window: f64,
    },
    Annulus {
        rho: f64,
    },
    MappedSimplyConnected {
        map: MapSpec,
    },
    MappedExterior {
        map: MapSpec,
        #[serde(default = "default_window")]
        window: f64,
    },
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

impl DomainSpec {
    pub fn build(&self) -> Result<DomainModel, GreensError> {
        match self {
            DomainSpec::Disk {} => Ok(DomainModel::disk()),
            DomainSpec::ExteriorDisk { window } => DomainModel::exterior_disk_with_window(*window),
            DomainSpec::Annulus { rho } => DomainModel::annulus(*rho),
            DomainSpec::MappedSimplyConnected { map } => DomainModel::mapped(map.build()?),
            DomainSpec::MappedExterior { map, window } => {
                DomainModel::mapped_exterior_with_window(map.build()?, *window)
            }
        }
    }
}

/// The annulus `rho < |z| < 1`, with its kernels expanded in product series.
#[derive(Debug, Clone)]
pub struct Annulus {
    rho: f64,
    ln_rho: f64,
    powers: Vec<f64>,
    ln_phat_one: f64,
}

/// `ln|1 - u|`, accurate for small `u`.
#[inline]
fn ln_abs_one_minus(u: Complex64) -> f64 {
    0.5 * (u.norm_sqr() - 2.0 * u.re).ln_1p()
}

impl Annulus {
    fn new(rho: f64) -> Result<Self, GreensError> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(GreensError::InvalidParameter(format!(
                "annulus requires 0 < rho < 1, got rho = {rho}"
            )));
        }
        let q = rho * rho;
        let mut powers = Vec::new();
        let mut qk = q;
        loop {
            powers.push(qk);
            if qk < 1e-16 {
                break;
            }
            qk *= q;
        }
        let ln_phat_one = 2.0 * powers.iter().map(|&p| (-p).ln_1p()).sum::<f64>();
        Ok(Annulus {
            rho,
            ln_rho: rho.ln(),
            powers,
            ln_phat_one,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Number of product factors kept.
    pub fn terms(&self) -> usize {
        self.powers.len()
    }

    fn ln_abs_phat(&self, z: Complex64) -> f64 {
        let zi = z.inv();
        self.powers
            .iter()
            .map(|&p| ln_abs_one_minus(p * z) + ln_abs_one_minus(p * zi))
            .sum()
    }

    /// Logarithmic derivative of the product without its `(1 - z)` factor.
    fn log_deriv_phat(&self, z: Complex64) -> Complex64 {
        self.powers
            .iter()
            .map(|&p| -p / (1.0 - p * z) + p / (z * (z - p)))
            .sum()
    }

    fn gamma(&self, z: Complex64, w: Complex64) -> f64 {
        let zw = z * w.conj();
        (self.ln_abs_phat(z / w)
            - ln_abs_one_minus(zw)
            - self.ln_abs_phat(zw)
            - z.norm().ln() * w.norm().ln() / self.ln_rho)
            / TWO_PI
    }

    fn grad_gamma(&self, z: Complex64, w: Complex64) -> Complex64 {
        let zw = z * w.conj();
        let lp = -(1.0 - zw).inv() + self.log_deriv_phat(zw);
        ((self.log_deriv_phat(z / w) / w).conj()
            - w * lp.conj()
            - (w.norm().ln() / self.ln_rho) * z / z.norm_sqr())
            / TWO_PI
    }

    fn robin(&self, z: Complex64) -> f64 {
        let r2 = z.norm_sqr();
        let lr = 0.5 * r2.ln();
        (self.ln_phat_one
            - (-r2).ln_1p()
            - self.ln_abs_phat(Complex64::new(r2, 0.0))
            - lr * lr / self.ln_rho)
            / TWO_PI
    }

    fn grad_robin(&self, z: Complex64) -> Complex64 {
        let r2 = z.norm_sqr();
        let lp = -1.0 / (1.0 - r2) + self.log_deriv_phat(Complex64::new(r2, 0.0)).re;
        let lr = 0.5 * r2.ln();
        -(z * lp + (lr / self.ln_rho) * z / r2) / PI
    }
}

/// A domain whose kernels are obtained by pulling back the disk (or the
/// exterior of the disk) through a conformal map `T`.
#[derive(Debug, Clone)]
pub struct MappedDomain {
    map: HolomorphicMap,
    exterior: bool,
    window: f64,
    boundary: Arc<[Point]>,
    window_curve: Option<Arc<[Point]>>,
    report: MapSanityReport,
}

impl MappedDomain {
    pub fn map(&self) -> &HolomorphicMap {
        &self.map
    }

    pub fn is_exterior(&self) -> bool {
        self.exterior
    }

    /// Reference radius bounding the sampling window of an exterior domain.
    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn sanity_report(&self) -> &MapSanityReport {
        &self.report
    }

    fn curve_point(&self, radius: f64, theta: f64) -> Point {
        self.map
            .inverse_unchecked(Complex64::from_polar(radius, theta))
    }
}

/// A planar domain together with the data needed to evaluate its kernels.
#[derive(Debug, Clone)]
pub enum DomainModel {
    /// The unit disk.
    Disk,
    /// The exterior of the closed unit disk. Sampling is restricted to
    /// `|x| < window`.
    ExteriorDisk { window: f64 },
    /// `rho < |x| < 1`.
    Annulus(Annulus),
    /// `T^{-1}` of the disk or of its exterior.
    Mapped(MappedDomain),
}

fn curve(n: usize, f: impl Fn(f64) -> Point) -> Arc<[Point]> {
    (0..n)
        .map(|k| f(TWO_PI * k as f64 / n as f64))
        .collect::<Vec<_>>()
        .into()
}

fn shoelace(points: &[Point]) -> f64 {
    let n = points.len();
    0.5 * (0..n)
        .map(|k| {
            let (a, b) = (points[k], points[(k + 1) % n]);
            a.re * b.im - b.re * a.im
        })
        .sum::<f64>()
        .abs()
}

impl DomainModel {
    pub fn disk() -> Self {
        DomainModel::Disk
    }

    pub fn exterior_disk() -> Self {
        DomainModel::ExteriorDisk {
            window: DEFAULT_WINDOW,
        }
    }

    pub fn exterior_disk_with_window(window: f64) -> Result<Self, GreensError> {
        if !(window > 1.0 && window.is_finite()) {
            return Err(GreensError::InvalidParameter(format!(
                "sampling window must exceed 1, got {window}"
            )));
        }
        Ok(DomainModel::ExteriorDisk { window })
    }

    pub fn annulus(rho: f64) -> Result<Self, GreensError> {
        Ok(DomainModel::Annulus(Annulus::new(rho)?))
    }

    /// `U = T^{-1}(D)`, where `T` maps `U` conformally onto the unit disk.
    pub fn mapped(map: HolomorphicMap) -> Result<Self, GreensError> {
        Self::build_mapped(map, false, DEFAULT_WINDOW)
    }

    /// `T^{-1}` of the exterior of the unit disk.
    pub fn mapped_exterior(map: HolomorphicMap) -> Result<Self, GreensError> {
        Self::build_mapped(map, true, DEFAULT_WINDOW)
    }

    pub fn mapped_exterior_with_window(
        map: HolomorphicMap,
        window: f64,
    ) -> Result<Self, GreensError> {
        Self::build_mapped(map, true, window)
    }

    fn build_mapped(map: HolomorphicMap, exterior: bool, window: f64) -> Result<Self, GreensError> {
        map.validate()?;
        check_polynomial_factors(&map)?;
        if exterior && !(window > 1.0 && window.is_finite()) {
            return Err(GreensError::InvalidParameter(format!(
                "sampling window must exceed 1, got {window}"
            )));
        }
        let report = map_sanity_report(&map, 2048, 0)?;
        let boundary = curve(BOUNDARY_NODES, |t| {
            map.inverse_unchecked(Complex64::from_polar(1.0, t))
        });
        for (k, &b) in boundary.iter().enumerate() {
            let w = Complex64::from_polar(1.0, TWO_PI * k as f64 / BOUNDARY_NODES as f64);
            let back = map.value_unchecked(b);
            if !(b.re.is_finite() && b.im.is_finite()) || (back - w).norm() > 1e-9 {
                return Err(GreensError::InvalidParameter(format!(
                    "map does not invert cleanly on the unit circle near {w}"
                )));
            }
        }
        let window_curve = exterior.then(|| {
            curve(BOUNDARY_NODES, |t| {
                map.inverse_unchecked(Complex64::from_polar(window, t))
            })
        });
        Ok(DomainModel::Mapped(MappedDomain {
            map,
            exterior,
            window,
            boundary,
            window_curve,
            report,
        }))
    }

    /// Short name of the domain family.
    pub fn kind(&self) -> &'static str {
        match self {
            DomainModel::Disk => "disk",
            DomainModel::ExteriorDisk { .. } => "exterior_disk",
            DomainModel::Annulus(_) => "annulus",
            DomainModel::Mapped(m) if m.exterior => "mapped_exterior",
            DomainModel::Mapped(_) => "mapped_simply_connected",
        }
    }

    /// Number of bounded holes (the `m` in `w_1, ..., w_m`).
    pub fn hole_count(&self) -> usize {
        match self {
            DomainModel::Annulus(_) => 1,
            _ => 0,
        }
    }

    /// Number of boundary circles (or curves).
    pub fn boundary_components(&self) -> usize {
        match self {
            DomainModel::Annulus(_) => 2,
            _ => 1,
        }
    }

    /// Whether the domain is unbounded (and sampled through a window).
    pub fn is_exterior(&self) -> bool {
        match self {
            DomainModel::ExteriorDisk { .. } => true,
            DomainModel::Mapped(m) => m.exterior,
            _ => false,
        }
    }

    /// Signed distance to the boundary measured in reference coordinates:
    /// positive inside, zero on the boundary, negative (or `-inf`) outside.
    pub fn gap(&self, x: Point) -> f64 {
        if !(x.re.is_finite() && x.im.is_finite()) {
            return f64::NEG_INFINITY;
        }
        match self {
            DomainModel::Disk => 1.0 - x.norm(),
            DomainModel::ExteriorDisk { .. } => x.norm() - 1.0,
            DomainModel::Annulus(a) => {
                let r = x.norm();
                (1.0 - r).min(r - a.rho)
            }
            DomainModel::Mapped(m) => {
                if !m.map.in_chart(x) {
                    return f64::NEG_INFINITY;
                }
                let r = m.map.value_unchecked(x).norm();
                if m.exterior {
                    r - 1.0
                } else {
                    1.0 - r
                }
            }
        }
    }

    /// Open-domain membership.
    pub fn contains(&self, x: Point) -> bool {
        self.gap(x) > 0.0
    }

    /// Closed-domain membership, up to [`CLOSED_TOLERANCE`].
    pub fn contains_closed(&self, x: Point) -> bool {
        self.gap(x) >= -CLOSED_TOLERANCE
    }

    /// Whether `x` is treated as a boundary point.
    pub fn on_boundary(&self, x: Point) -> bool {
        self.gap(x).abs() <= CLOSED_TOLERANCE
    }

    /// The part of the domain used for sampling: the domain itself when it
    /// is bounded, otherwise the part with reference radius below the window.
    pub fn in_sampling_region(&self, x: Point) -> bool {
        if !self.contains(x) {
            return false;
        }
        match self {
            DomainModel::ExteriorDisk { window } => x.norm() < *window,
            DomainModel::Mapped(m) if m.exterior => m.map.value_unchecked(x).norm() < m.window,
            _ => true,
        }
    }

    /// Axis-aligned box containing the sampling region.
    pub fn bounding_box(&self) -> (Point, Point) {
        let unit = (Complex64::new(-1.0, -1.0), Complex64::new(1.0, 1.0));
        match self {
            DomainModel::Disk | DomainModel::Annulus(_) => unit,
            DomainModel::ExteriorDisk { window } => (unit.0 * window, unit.1 * window),
            DomainModel::Mapped(m) => {
                let pts = m.window_curve.as_ref().unwrap_or(&m.boundary);
                let (mut lo, mut hi) = (pts[0], pts[0]);
                for p in pts.iter() {
                    lo = Complex64::new(lo.re.min(p.re), lo.im.min(p.im));
                    hi = Complex64::new(hi.re.max(p.re), hi.im.max(p.im));
                }
                let pad = (hi - lo) * 0.02;
                (lo - pad, hi + pad)
            }
        }
    }

    /// Area of the sampling region.
    pub fn area(&self) -> f64 {
        match self {
            DomainModel::Disk => PI,
            DomainModel::ExteriorDisk { window } => PI * (window * window - 1.0),
            DomainModel::Annulus(a) => PI * (1.0 - a.rho * a.rho),
            DomainModel::Mapped(m) => {
                let fine = |r: f64| curve(16 * BOUNDARY_NODES, |t| m.curve_point(r, t));
                let inner = shoelace(&fine(1.0));
                if m.exterior {
                    shoelace(&fine(m.window)) - inner
                } else {
                    inner
                }
            }
        }
    }

    /// Point on boundary component `component` at parameter `theta`.
    /// Component 0 is the outer circle of the annulus, 1 the inner one.
    pub fn boundary_point(&self, component: usize, theta: f64) -> Point {
        match self {
            DomainModel::Annulus(a) if component == 1 => Complex64::from_polar(a.rho, theta),
            DomainModel::Mapped(m) => m.curve_point(1.0, theta),
            _ => Complex64::from_polar(1.0, theta),
        }
    }

    /// Euclidean distance from `x` to the boundary.
    pub fn distance_to_boundary(&self, x: Point) -> f64 {
        match self {
            DomainModel::Disk => 1.0 - x.norm(),
            DomainModel::ExteriorDisk { .. } => x.norm() - 1.0,
            DomainModel::Annulus(a) => {
                let r = x.norm();
                (1.0 - r).min(r - a.rho)
            }
            DomainModel::Mapped(m) => mapped_distance(m, x),
        }
    }

    /// Outward unit normal extended into the domain.
    pub fn boundary_normal(&self, x: Point) -> Result<NormalField, GreensError> {
        self.check_closed(x)?;
        let v = match self {
            DomainModel::Disk => x,
            DomainModel::ExteriorDisk { .. } => -x,
            DomainModel::Annulus(a) => {
                let r = x.norm();
                if 1.0 - r <= r - a.rho {
                    x
                } else {
                    -x / a.rho
                }
            }
            DomainModel::Mapped(m) => {
                let j = m.map.jet_unchecked(x);
                let n_ref = if m.exterior { -j.value } else { j.value };
                let s = j.d1.norm();
                if s == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    j.d1.conj() * n_ref / s
                }
            }
        };
        Ok(NormalField {
            vector: v,
            degenerate: v.norm() == 0.0,
        })
    }

    pub(crate) fn check_closed(&self, x: Point) -> Result<(), GreensError> {
        if self.contains_closed(x) {
            Ok(())
        } else {
            Err(GreensError::DomainViolation { point: x })
        }
    }

    fn check_open(&self, x: Point) -> Result<(), GreensError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(GreensError::DomainViolation { point: x })
        }
    }

    fn check_hole(&self, j: usize) -> Result<(), GreensError> {
        let holes = self.hole_count();
        if j == 0 || j > holes {
            Err(GreensError::NoSuchHole { index: j, holes })
        } else {
            Ok(())
        }
    }

    /// `gamma(x, y)` without membership checks.
    pub(crate) fn gamma_raw(&self, x: Point, y: Point) -> f64 {
        match self {
            DomainModel::Disk | DomainModel::ExteriorDisk { .. } => disk_gamma(x, y),
            DomainModel::Annulus(a) => a.gamma(x, y),
            DomainModel::Mapped(m) => {
                let (tx, ty) = (m.map.value_unchecked(x), m.map.value_unchecked(y));
                let (q, _) = m.map.divided_difference_unchecked(x, y);
                disk_gamma(tx, ty) + q.norm().ln() / TWO_PI
            }
        }
    }

    /// `∇_x gamma(x, y)` without membership checks.
    pub(crate) fn grad_gamma_raw(&self, x: Point, y: Point) -> Point {
        match self {
            DomainModel::Disk | DomainModel::ExteriorDisk { .. } => disk_grad_gamma(x, y),
            DomainModel::Annulus(a) => a.grad_gamma(x, y),
            DomainModel::Mapped(m) => {
                let jx = m.map.jet_unchecked(x);
                let ty = m.map.value_unchecked(y);
                let (_, dq) = m.map.divided_difference_unchecked(x, y);
                jx.d1.conj() * disk_grad_gamma(jx.value, ty) + dq.conj() / TWO_PI
            }
        }
    }

    pub(crate) fn robin_raw(&self, x: Point) -> f64 {
        match self {
            DomainModel::Disk | DomainModel::ExteriorDisk { .. } => disk_robin(x),
            DomainModel::Annulus(a) => a.robin(x),
            DomainModel::Mapped(m) => {
                let j = m.map.jet_unchecked(x);
                disk_robin(j.value) + j.d1.norm().ln() / TWO_PI
            }
        }
    }

    pub(crate) fn grad_robin_raw(&self, x: Point) -> Point {
        match self {
            DomainModel::Disk | DomainModel::ExteriorDisk { .. } => disk_grad_robin(x),
            DomainModel::Annulus(a) => a.grad_robin(x),
            DomainModel::Mapped(m) => {
                let j = m.map.jet_unchecked(x);
                j.d1.conj() * disk_grad_robin(j.value) + (j.d2 / j.d1).conj() / TWO_PI
            }
        }
    }

    pub(crate) fn green_raw(&self, x: Point, y: Point) -> f64 {
        free_green(x, y) + self.gamma_raw(x, y)
    }

    pub(crate) fn grad_green_raw(&self, x: Point, y: Point) -> Point {
        grad_free_green(x, y) + self.grad_gamma_raw(x, y)
    }

    pub(crate) fn harmonic_measure_raw(&self, x: Point) -> f64 {
        match self {
            DomainModel::Annulus(a) => x.norm().ln() / a.ln_rho,
            _ => 0.0,
        }
    }

    pub(crate) fn harmonic_field_raw(&self, x: Point) -> Point {
        match self {
            DomainModel::Annulus(a) => perp(x) / (x.norm_sqr() * a.ln_rho),
            _ => Complex64::new(0.0, 0.0),
        }
    }
}

fn check_polynomial_factors(map: &HolomorphicMap) -> Result<(), GreensError> {
    match map {
        HolomorphicMap::Polynomial { c } if c.norm() > 0.25 => {
            Err(GreensError::InvalidParameter(format!(
                "z + c z^2 has a critical value inside the unit disk when |c| > 1/4 (|c| = {})",
                c.norm()
            )))
        }
        HolomorphicMap::Composed { outer, inner } => {
            check_polynomial_factors(outer)?;
            check_polynomial_factors(inner)
        }
        _ => Ok(()),
    }
}

fn mapped_distance(m: &MappedDomain, x: Point) -> f64 {
    let n = m.boundary.len();
    let (k, _) = m
        .boundary
        .iter()
        .enumerate()
        .map(|(k, b)| (k, (x - b).norm_sqr()))
        .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
    let step = TWO_PI / n as f64;
    let f = |t: f64| (x - m.curve_point(1.0, t)).norm_sqr();
    let (mut a, mut b) = ((k as f64 - 1.0) * step, (k as f64 + 1.0) * step);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let best = fc.min(fd).min((x - m.boundary[k]).norm_sqr());
    best.sqrt()
}

/// `ln|x - y| / 2π`.
#[inline]
pub fn free_green(x: Point, y: Point) -> f64 {
    (x - y).norm().ln() / TWO_PI
}

/// `∇_x` of [`free_green`].
#[inline]
pub fn grad_free_green(x: Point, y: Point) -> Point {
    let d = x - y;
    d / (TWO_PI * d.norm_sqr())
}

#[inline]
fn disk_gamma(x: Point, y: Point) -> f64 {
    -ln_abs_one_minus(x * y.conj()) / TWO_PI
}

#[inline]
fn disk_grad_gamma(x: Point, y: Point) -> Point {
    y / (TWO_PI * (1.0 - x.conj() * y))
}

#[inline]
fn disk_robin(x: Point) -> f64 {
    -(1.0 - x.norm_sqr()).abs().ln() / TWO_PI
}

#[inline]
fn disk_grad_robin(x: Point) -> Point {
    x / (PI * (1.0 - x.norm_sqr()))
}

/// Green's function `G(x, y)`; zero when either point is on the boundary.
pub fn green(domain: &DomainModel, x: Point, y: Point) -> Result<f64, GreensError> {
    domain.check_closed(x)?;
    domain.check_closed(y)?;
    if x == y {
        return Err(GreensError::Coincident { point: x });
    }
    if domain.on_boundary(x) || domain.on_boundary(y) {
        return Ok(0.0);
    }
    Ok(domain.green_raw(x, y))
}

/// `∇_x G(x, y)`.
pub fn grad_green(domain: &DomainModel, x: Point, y: Point) -> Result<Point, GreensError> {
    domain.check_closed(x)?;
    domain.check_closed(y)?;
    if x == y {
        return Err(GreensError::Coincident { point: x });
    }
    Ok(domain.grad_green_raw(x, y))
}

/// Regular part `gamma(x, y) = G(x, y) - G_R2(x, y)`.
pub fn gamma(domain: &DomainModel, x: Point, y: Point) -> Result<f64, GreensError> {
    domain.check_closed(x)?;
    domain.check_closed(y)?;
    Ok(domain.gamma_raw(x, y))
}

/// `∇_x gamma(x, y)`.
pub fn grad_gamma(domain: &DomainModel, x: Point, y: Point) -> Result<Point, GreensError> {
    domain.check_closed(x)?;
    domain.check_closed(y)?;
    Ok(domain.grad_gamma_raw(x, y))
}

/// Robin function `gamma(x, x)`.
pub fn robin(domain: &DomainModel, x: Point) -> Result<f64, GreensError> {
    domain.check_open(x)?;
    Ok(domain.robin_raw(x))
}

/// Gradient of the Robin function.
pub fn grad_robin(domain: &DomainModel, x: Point) -> Result<Point, GreensError> {
    domain.check_open(x)?;
    Ok(domain.grad_robin_raw(x))
}

/// Harmonic measure `w_j` of the `j`-th hole (1-based): 1 on that hole, 0 on
/// every other boundary component.
pub fn harmonic_measure(domain: &DomainModel, j: usize, x: Point) -> Result<f64, GreensError> {
    domain.check_hole(j)?;
    domain.check_closed(x)?;
    Ok(domain.harmonic_measure_raw(x))
}

/// `∇^⊥ w_j`, tangent to every boundary component.
pub fn harmonic_field(domain: &DomainModel, j: usize, x: Point) -> Result<Point, GreensError> {
    domain.check_hole(j)?;
    domain.check_closed(x)?;
    Ok(domain.harmonic_field_raw(x))
}

/// `∇_x G(x, y) · ∇^⊥ gamma~(x)`, the pairing controlled by the transport identity.
pub fn coupling(domain: &DomainModel, x: Point, y: Point) -> Result<f64, GreensError> {
    let g = grad_green(domain, x, y)?;
    let r = grad_robin(domain, x)?;
    Ok(dot(g, perp(r)))
}

/// Euclidean distance to the boundary.
pub fn distance_to_boundary(domain: &DomainModel, x: Point) -> Result<f64, GreensError> {
    domain.check_closed(x)?;
    Ok(domain.distance_to_boundary(x).max(0.0))
}
