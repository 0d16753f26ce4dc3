//! Holomorphic maps of the plane and the transport rules that move
//! gradients, normals and curvature terms through them.
//!
//! Points and planar vectors are both represented as [`Complex64`], with
//! `(x1, x2)` identified with `x1 + i x2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::greens::DomainModel;

/// A point (or planar vector) identified with a complex number.
pub type Point = Complex64;

/// Rotation by a quarter turn: `(a, b) -> (-b, a)`.
#[inline]
pub fn perp(v: Point) -> Point {
    Complex64::new(-v.im, v.re)
}

/// Euclidean inner product of two planar vectors.
#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a.re * b.re + a.im * b.im
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("invalid map parameter: {0}")]
    InvalidParameter(String),
    #[error("point {point} lies outside the chart of the map")]
    DomainViolation { point: Point },
    #[error(
        "map rejected: m_lower = {:e}, {} injectivity violations",
        .report.m_lower,
        .report.injectivity_violations
    )]
    Rejected { report: Box<MapSanityReport> },
}

/// Value and first two complex derivatives of a map at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: Complex64,
    pub d1: Complex64,
    pub d2: Complex64,
}

/// A holomorphic map `T`.
///
/// The variants are public so that arbitrary parameters can be fed to
/// [`map_sanity_report`]; the named constructors validate their input.
#[derive(Debug, Clone, PartialEq)]
pub enum HolomorphicMap {
    Identity,
    /// `z -> scale * z + shift`.
    Affine { scale: Complex64, shift: Complex64 },
    /// `z -> rotation * (z - a) / (1 - conj(a) z)` with `|rotation| = 1`.
    Mobius { a: Complex64, rotation: Complex64 },
    /// `z -> z + c z^2`, restricted to the half plane `Re(1 + 2cz) > 0`.
    Polynomial { c: Complex64 },
    /// `z -> 1 / z`.
    Inversion,
    /// `z -> outer(inner(z))`.
    Composed {
        outer: Box<HolomorphicMap>,
        inner: Box<HolomorphicMap>,
    },
}

fn finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

impl HolomorphicMap {
    pub fn identity() -> Self {
        HolomorphicMap::Identity
    }

    pub fn affine(scale: Complex64, shift: Complex64) -> Result<Self, MapError> {
        let m = HolomorphicMap::Affine { scale, shift };
        m.validate()?;
        Ok(m)
    }

    /// Disk automorphism sending `a` to the origin, followed by a rotation by `theta`.
    pub fn mobius(a: Complex64, theta: f64) -> Result<Self, MapError> {
        let m = HolomorphicMap::Mobius {
            a,
            rotation: Complex64::from_polar(1.0, theta),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn polynomial(c: Complex64) -> Result<Self, MapError> {
        let m = HolomorphicMap::Polynomial { c };
        m.validate()?;
        Ok(m)
    }

    pub fn inversion() -> Self {
        HolomorphicMap::Inversion
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: HolomorphicMap, inner: HolomorphicMap) -> Self {
        HolomorphicMap::Composed {
            outer: Box::new(outer),
            inner: Box::new(inner),
        }
    }

    /// Checks the parameter ranges of every component.
    pub fn validate(&self) -> Result<(), MapError> {
        match self {
            HolomorphicMap::Identity | HolomorphicMap::Inversion => Ok(()),
            HolomorphicMap::Affine { scale, shift } => {
                if !finite(*scale) || !finite(*shift) || scale.norm() == 0.0 {
                    return Err(MapError::InvalidParameter(
                        "affine scale must be finite and nonzero".into(),
                    ));
                }
                Ok(())
            }
            HolomorphicMap::Mobius { a, rotation } => {
                if !finite(*a) || a.norm() >= 1.0 {
                    return Err(MapError::InvalidParameter(format!(
                        "Möbius parameter must satisfy |a| < 1, got |a| = {}",
                        a.norm()
                    )));
                }
                if !finite(*rotation) || (rotation.norm() - 1.0).abs() > 1e-12 {
                    return Err(MapError::InvalidParameter(
                        "Möbius rotation must have unit modulus".into(),
                    ));
                }
                Ok(())
            }
            HolomorphicMap::Polynomial { c } => {
                if !finite(*c) || c.norm() > 0.5 {
                    return Err(MapError::InvalidParameter(format!(
                        "polynomial coefficient must satisfy |c| <= 1/2, got {}",
                        c.norm()
                    )));
                }
                Ok(())
            }
            HolomorphicMap::Composed { outer, inner } => {
                outer.validate()?;
                inner.validate()
            }
        }
    }

    /// Whether `z` lies in the open set on which the map is defined and injective.
    pub fn in_chart(&self, z: Complex64) -> bool {
        if !finite(z) {
            return false;
        }
        match self {
            HolomorphicMap::Identity | HolomorphicMap::Affine { .. } => true,
            HolomorphicMap::Mobius { a, .. } => (1.0 - a.conj() * z).norm() > 0.0,
            HolomorphicMap::Polynomial { c } => {
                *c == Complex64::new(0.0, 0.0) || (1.0 + 2.0 * c * z).re > 0.0
            }
            HolomorphicMap::Inversion => z.norm() > 0.0,
            HolomorphicMap::Composed { outer, inner } => {
                inner.in_chart(z) && outer.in_chart(inner.value_unchecked(z))
            }
        }
    }

    fn check(&self, z: Complex64) -> Result<(), MapError> {
        if self.in_chart(z) {
            Ok(())
        } else {
            Err(MapError::DomainViolation { point: z })
        }
    }

    pub(crate) fn value_unchecked(&self, z: Complex64) -> Complex64 {
        match self {
            HolomorphicMap::Identity => z,
            HolomorphicMap::Affine { scale, shift } => scale * z + shift,
            HolomorphicMap::Mobius { a, rotation } => rotation * (z - a) / (1.0 - a.conj() * z),
            HolomorphicMap::Polynomial { c } => z + c * z * z,
            HolomorphicMap::Inversion => z.inv(),
            HolomorphicMap::Composed { outer, inner } => {
                outer.value_unchecked(inner.value_unchecked(z))
            }
        }
    }

    pub(crate) fn jet_unchecked(&self, z: Complex64) -> Jet {
        match self {
            HolomorphicMap::Identity => Jet {
                value: z,
                d1: Complex64::new(1.0, 0.0),
                d2: Complex64::new(0.0, 0.0),
            },
            HolomorphicMap::Affine { scale, shift } => Jet {
                value: scale * z + shift,
                d1: *scale,
                d2: Complex64::new(0.0, 0.0),
            },
            HolomorphicMap::Mobius { a, rotation } => {
                let ab = a.conj();
                let den = 1.0 - ab * z;
                let k = rotation * (1.0 - a.norm_sqr());
                Jet {
                    value: rotation * (z - a) / den,
                    d1: k / (den * den),
                    d2: 2.0 * ab * k / (den * den * den),
                }
            }
            HolomorphicMap::Polynomial { c } => Jet {
                value: z + c * z * z,
                d1: 1.0 + 2.0 * c * z,
                d2: 2.0 * c,
            },
            HolomorphicMap::Inversion => {
                let w = z.inv();
                Jet {
                    value: w,
                    d1: -w * w,
                    d2: 2.0 * w * w * w,
                }
            }
            HolomorphicMap::Composed { outer, inner } => {
                let g = inner.jet_unchecked(z);
                let f = outer.jet_unchecked(g.value);
                Jet {
                    value: f.value,
                    d1: f.d1 * g.d1,
                    d2: f.d2 * g.d1 * g.d1 + f.d1 * g.d2,
                }
            }
        }
    }

    /// Exact divided difference `Q(x, y) = (T(x) - T(y)) / (x - y)` (equal to
    /// `T'(x)` on the diagonal) together with `∂_x log Q(x, y)`.
    pub(crate) fn divided_difference_unchecked(
        &self,
        x: Complex64,
        y: Complex64,
    ) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        match self {
            HolomorphicMap::Identity => (Complex64::new(1.0, 0.0), zero),
            HolomorphicMap::Affine { scale, .. } => (*scale, zero),
            HolomorphicMap::Mobius { a, rotation } => {
                let ab = a.conj();
                let dx = 1.0 - ab * x;
                let dy = 1.0 - ab * y;
                (rotation * (1.0 - a.norm_sqr()) / (dx * dy), ab / dx)
            }
            HolomorphicMap::Polynomial { c } => {
                let q = 1.0 + c * (x + y);
                (q, c / q)
            }
            HolomorphicMap::Inversion => (-(x * y).inv(), -x.inv()),
            HolomorphicMap::Composed { outer, inner } => {
                let gx = inner.jet_unchecked(x);
                let gy = inner.value_unchecked(y);
                let (qf, dqf) = outer.divided_difference_unchecked(gx.value, gy);
                let (qg, dqg) = inner.divided_difference_unchecked(x, y);
                (qf * qg, dqf * gx.d1 + dqg)
            }
        }
    }

    pub(crate) fn inverse_unchecked(&self, w: Complex64) -> Complex64 {
        match self {
            HolomorphicMap::Identity => w,
            HolomorphicMap::Affine { scale, shift } => (w - shift) / scale,
            HolomorphicMap::Mobius { a, rotation } => {
                let u = w * rotation.conj();
                (u + a) / (1.0 + a.conj() * u)
            }
            HolomorphicMap::Polynomial { c } => {
                if *c == Complex64::new(0.0, 0.0) {
                    w
                } else {
                    2.0 * w / (1.0 + (1.0 + 4.0 * c * w).sqrt())
                }
            }
            HolomorphicMap::Inversion => w.inv(),
            HolomorphicMap::Composed { outer, inner } => {
                inner.inverse_unchecked(outer.inverse_unchecked(w))
            }
        }
    }

    /// `T(z)`.
    pub fn eval(&self, z: Complex64) -> Result<Complex64, MapError> {
        self.check(z)?;
        Ok(self.value_unchecked(z))
    }

    /// `T'(z)`.
    pub fn deriv(&self, z: Complex64) -> Result<Complex64, MapError> {
        self.check(z)?;
        Ok(self.jet_unchecked(z).d1)
    }

    /// `T''(z)`.
    pub fn second_deriv(&self, z: Complex64) -> Result<Complex64, MapError> {
        self.check(z)?;
        Ok(self.jet_unchecked(z).d2)
    }

    /// Value, first and second derivative at once.
    pub fn jet(&self, z: Complex64) -> Result<Jet, MapError> {
        self.check(z)?;
        Ok(self.jet_unchecked(z))
    }

    /// `T^{-1}(w)` on the principal branch.
    pub fn inverse(&self, w: Complex64) -> Result<Complex64, MapError> {
        let z = self.inverse_unchecked(w);
        if finite(z) {
            Ok(z)
        } else {
            Err(MapError::DomainViolation { point: w })
        }
    }

    /// Region sampled by [`map_sanity_report`] when none is given.
    pub fn default_region(&self) -> SampleRegion {
        match self {
            HolomorphicMap::Inversion => SampleRegion::Annulus {
                inner: 1.0,
                outer: 2.0,
            },
            HolomorphicMap::Composed { inner, .. } => inner.default_region(),
            _ => SampleRegion::Disk { radius: 1.0 },
        }
    }
}

/// Serializable description of a map, as found in configuration files.
/// Complex parameters are written as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Identity {},
    Affine {
        scale: [f64; 2],
        #[serde(default)]
        shift: [f64; 2],
    },
    Mobius {
        a: [f64; 2],
        #[serde(default)]
        theta: f64,
    },
    Polynomial {
        c: [f64; 2],
    },
    Inversion {},
    Composed {
        outer: Box<MapSpec>,
        inner: Box<MapSpec>,
    },
}

fn cplx(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

impl MapSpec {
    pub fn build(&self) -> Result<HolomorphicMap, MapError> {
        match self {
            MapSpec::Identity {} => Ok(HolomorphicMap::identity()),
            MapSpec::Affine { scale, shift } => HolomorphicMap::affine(cplx(*scale), cplx(*shift)),
            MapSpec::Mobius { a, theta } => HolomorphicMap::mobius(cplx(*a), *theta),
            MapSpec::Polynomial { c } => HolomorphicMap::polynomial(cplx(*c)),
            MapSpec::Inversion {} => Ok(HolomorphicMap::inversion()),
            MapSpec::Composed { outer, inner } => {
                Ok(HolomorphicMap::compose(outer.build()?, inner.build()?))
            }
        }
    }
}

/// `∇(f ∘ T)(z)` given `g = (∇f)(T(z))`.
pub fn pullback_gradient(map: &HolomorphicMap, z: Point, g: Point) -> Result<Point, MapError> {
    Ok(map.deriv(z)?.conj() * g)
}

/// The curvature correction `ψ` built from `T'` and `T''`.
pub fn psi_correction(map: &HolomorphicMap, z: Point) -> Result<Point, MapError> {
    let j = map.jet(z)?;
    Ok(psi_from_jet(&j))
}

pub(crate) fn psi_from_jet(j: &Jet) -> Point {
    let (t1, t2) = (j.d1.re, j.d1.im);
    let (s1, s2) = (j.d2.re, j.d2.im);
    let a = t1 * t1 - t2 * t2;
    let b = 2.0 * t1 * t2;
    Complex64::new(-b * s1 + a * s2, a * s1 + b * s2) / (2.0 * PI)
}

/// Outward unit normal extended into the domain, with a flag raised where
/// the extension has no direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalField {
    pub vector: Point,
    pub degenerate: bool,
}

/// Unit normal field of the domain boundary, extended to interior points.
pub fn boundary_normal(domain: &DomainModel, x: Point) -> Result<NormalField, crate::greens::GreensError> {
    domain.boundary_normal(x)
}

/// Closed region sampled by the sanity report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SampleRegion {
    Disk { radius: f64 },
    Annulus { inner: f64, outer: f64 },
}

impl SampleRegion {
    fn circles(&self) -> Vec<f64> {
        match *self {
            SampleRegion::Disk { radius } => vec![radius],
            SampleRegion::Annulus { inner, outer } => vec![outer, inner],
        }
    }

    fn radial_bounds(&self) -> (f64, f64) {
        match *self {
            SampleRegion::Disk { radius } => (0.0, radius),
            SampleRegion::Annulus { inner, outer } => (inner, outer),
        }
    }
}

/// Outcome of sampling a map over a closed region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSanityReport {
    pub region: SampleRegion,
    pub sample_count: usize,
    /// Smallest `|T'|` seen.
    pub m_lower: f64,
    /// Largest of `|T'|` and `|T''|` seen.
    pub m_upper: f64,
    pub deriv_max: f64,
    pub second_deriv_max: f64,
    /// Largest Cauchy-Riemann residual from central differences.
    pub cr_residual_max: f64,
    /// Crossing pairs among the images of boundary segments.
    pub injectivity_violations: usize,
}

impl MapSanityReport {
    pub fn passed(&self) -> bool {
        self.m_lower > 0.0 && self.injectivity_violations == 0
    }
}

/// Samples `map` over its default region. See [`map_sanity_report_on`].
pub fn map_sanity_report(
    map: &HolomorphicMap,
    sample_count: usize,
    seed: u64,
) -> Result<MapSanityReport, MapError> {
    map_sanity_report_on(map, map.default_region(), sample_count, seed)
}

/// Samples `map` over a closed region and checks that it is a local
/// diffeomorphism there whose boundary image does not cross itself.
///
/// Returns [`MapError::Rejected`] (carrying the report) when `T'` vanishes or
/// an injectivity violation is found.
pub fn map_sanity_report_on(
    map: &HolomorphicMap,
    region: SampleRegion,
    sample_count: usize,
    seed: u64,
) -> Result<MapSanityReport, MapError> {
    let sample_count = sample_count.max(64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let circles = region.circles();
    let per_circle = (sample_count / 4 / circles.len()).max(32);
    let interior = sample_count.saturating_sub(per_circle * circles.len()).max(16);

    let mut m_lower = f64::INFINITY;
    let mut deriv_max: f64 = 0.0;
    let mut second_max: f64 = 0.0;
    let mut cr_max: f64 = 0.0;
    let mut bad_points = 0usize;

    let mut record = |z: Complex64, with_cr: bool| {
        if !map.in_chart(z) {
            bad_points += 1;
            m_lower = 0.0;
            return;
        }
        let j = map.jet_unchecked(z);
        let (a1, a2) = (j.d1.norm(), j.d2.norm());
        if !a1.is_finite() || !a2.is_finite() {
            bad_points += 1;
            m_lower = 0.0;
            return;
        }
        m_lower = m_lower.min(a1);
        deriv_max = deriv_max.max(a1);
        second_max = second_max.max(a2);
        if with_cr {
            let h = 1e-5 * z.norm().max(1.0);
            let ih = Complex64::new(0.0, h);
            let (p, m, pi, mi) = (z + h, z - h, z + ih, z - ih);
            if [p, m, pi, mi].iter().all(|&w| map.in_chart(w)) {
                let dx = (map.value_unchecked(p) - map.value_unchecked(m)) / (2.0 * h);
                let dy = (map.value_unchecked(pi) - map.value_unchecked(mi)) / (2.0 * h);
                let scale = a1.max(1.0);
                let cr = (dy - Complex64::i() * dx).norm() / scale;
                let fd = (dx - j.d1).norm() / scale;
                cr_max = cr_max.max(cr.max(fd));
            }
        }
    };

    let (r_lo, r_hi) = region.radial_bounds();
    let golden = PI * (3.0 - 5f64.sqrt());
    for k in 0..interior {
        let u = (k as f64 + 0.5) / interior as f64;
        let r = (r_lo * r_lo + u * (r_hi * r_hi - r_lo * r_lo)).sqrt();
        let z = Complex64::from_polar(r, phase + golden * k as f64);
        record(z, true);
    }
    let mut polygons: Vec<Vec<Complex64>> = Vec::with_capacity(circles.len());
    for &radius in &circles {
        let mut poly = Vec::with_capacity(per_circle);
        for k in 0..per_circle {
            let z = Complex64::from_polar(radius, phase + 2.0 * PI * k as f64 / per_circle as f64);
            record(z, false);
            poly.push(map.value_unchecked(z));
        }
        polygons.push(poly);
    }

    let report = MapSanityReport {
        region,
        sample_count: interior + per_circle * circles.len(),
        m_lower: if m_lower.is_finite() { m_lower } else { 0.0 },
        m_upper: deriv_max.max(second_max),
        deriv_max,
        second_deriv_max: second_max,
        cr_residual_max: cr_max,
        injectivity_violations: bad_points + count_crossings(&polygons),
    };
    if report.passed() {
        Ok(report)
    } else {
        Err(MapError::Rejected {
            report: Box::new(report),
        })
    }
}

fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    (b.re - a.re) * (c.im - a.im) - (b.im - a.im) * (c.re - a.re)
}

fn segments_cross(p1: Complex64, p2: Complex64, q1: Complex64, q2: Complex64) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Counts properly crossing pairs of non-adjacent edges across closed polygons.
fn count_crossings(polygons: &[Vec<Complex64>]) -> usize {
    let mut edges: Vec<(usize, usize, Complex64, Complex64)> = Vec::new();
    for (pi, poly) in polygons.iter().enumerate() {
        let n = poly.len();
        for k in 0..n {
            edges.push((pi, k, poly[k], poly[(k + 1) % n]));
        }
    }
    let mut count = 0;
    for a in 0..edges.len() {
        for b in (a + 1)..edges.len() {
            let (pa, ka, a1, a2) = edges[a];
            let (pb, kb, b1, b2) = edges[b];
            if pa == pb {
                let n = polygons[pa].len();
                if (ka + 1) % n == kb || (kb + 1) % n == ka {
                    continue;
                }
            }
            if segments_cross(a1, a2, b1, b2) {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn mobius_sends_a_to_origin() {
        let m = HolomorphicMap::mobius(c(0.3, 0.0), 0.0).unwrap();
        assert!(m.eval(c(0.3, 0.0)).unwrap().norm() < 1e-15);
    }

    #[test]
    fn mobius_rejects_parameter_on_circle() {
        assert!(matches!(
            HolomorphicMap::mobius(c(1.0, 0.0), 0.0),
            Err(MapError::InvalidParameter(_))
        ));
    }

    #[test]
    fn polynomial_coefficient_bound() {
        assert!(HolomorphicMap::polynomial(c(0.5, 0.0)).is_ok());
        assert!(HolomorphicMap::polynomial(c(0.51, 0.0)).is_err());
    }

    #[test]
    fn jets_match_finite_differences() {
        let maps = [
            HolomorphicMap::affine(c(2.0, -1.0), c(0.1, 0.2)).unwrap(),
            HolomorphicMap::mobius(c(0.2, -0.4), 0.7).unwrap(),
            HolomorphicMap::polynomial(c(0.2, 0.1)).unwrap(),
            HolomorphicMap::inversion(),
            HolomorphicMap::compose(
                HolomorphicMap::inversion(),
                HolomorphicMap::compose(
                    HolomorphicMap::polynomial(c(0.2, 0.0)).unwrap(),
                    HolomorphicMap::inversion(),
                ),
            ),
        ];
        let z = c(0.31, 0.47);
        let h = 1e-5;
        for m in &maps {
            let j = m.jet(z).unwrap();
            let d1 = (m.eval(z + h).unwrap() - m.eval(z - h).unwrap()) / (2.0 * h);
            let d2 = (m.deriv(z + h).unwrap() - m.deriv(z - h).unwrap()) / (2.0 * h);
            assert!((d1 - j.d1).norm() < 1e-8 * j.d1.norm().max(1.0), "{m:?}");
            assert!((d2 - j.d2).norm() < 1e-7 * j.d2.norm().max(1.0), "{m:?}");
        }
    }

    #[test]
    fn divided_difference_matches_definition() {
        let maps = [
            HolomorphicMap::mobius(c(0.2, -0.4), 0.7).unwrap(),
            HolomorphicMap::polynomial(c(0.2, 0.1)).unwrap(),
            HolomorphicMap::compose(
                HolomorphicMap::polynomial(c(-0.1, 0.2)).unwrap(),
                HolomorphicMap::mobius(c(0.3, 0.1), -1.0).unwrap(),
            ),
        ];
        let (x, y) = (c(0.31, 0.47), c(-0.2, 0.1));
        for m in &maps {
            let (q, dq) = m.divided_difference_unchecked(x, y);
            let direct = (m.eval(x).unwrap() - m.eval(y).unwrap()) / (x - y);
            assert!((q - direct).norm() < 1e-14);
            let h = 1e-6;
            let qp = m.divided_difference_unchecked(x + h, y).0;
            let qm = m.divided_difference_unchecked(x - h, y).0;
            let fd = (qp.ln() - qm.ln()) / (2.0 * h);
            assert!((fd - dq).norm() < 1e-8);
            let (qd, _) = m.divided_difference_unchecked(x, x);
            assert!((qd - m.deriv(x).unwrap()).norm() < 1e-14);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let m = HolomorphicMap::polynomial(c(0.25, 0.0)).unwrap();
        let w = c(-0.4, 0.6);
        let z = m.inverse(w).unwrap();
        assert!(m.in_chart(z));
        assert!((m.eval(z).unwrap() - w).norm() < 1e-15);
    }

    #[test]
    fn identity_sanity() {
        let r = map_sanity_report(&HolomorphicMap::identity(), 512, 1).unwrap();
        assert_eq!(r.m_lower, 1.0);
        assert_eq!(r.deriv_max, 1.0);
        assert!(r.cr_residual_max < 1e-8);
        assert_eq!(r.injectivity_violations, 0);
    }

    #[test]
    fn folded_polynomial_is_rejected() {
        let m = HolomorphicMap::Polynomial { c: c(0.75, 0.0) };
        match map_sanity_report(&m, 1024, 3) {
            Err(MapError::Rejected { report }) => assert!(report.injectivity_violations > 0),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn pullback_and_psi_on_identity() {
        let id = HolomorphicMap::identity();
        let g = c(0.3, -0.2);
        assert_eq!(pullback_gradient(&id, c(0.1, 0.1), g).unwrap(), g);
        assert_eq!(psi_correction(&id, c(0.1, 0.1)).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn perp_is_quarter_turn() {
        assert_eq!(perp(c(1.0, 2.0)), c(-2.0, 1.0));
        assert_eq!(dot(c(1.0, 2.0), perp(c(1.0, 2.0))), 0.0);
    }
}
