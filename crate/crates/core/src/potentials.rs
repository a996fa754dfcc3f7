//! Compactly supported potentials and the canonical test library.

use crate::error::{Error, Result};
use crate::quadrature;
use serde::{Deserialize, Serialize};

/// Declared regularity of a potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Smoothness {
    C0,
    C1,
    C2,
    Cinf,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    SquareWell { v0: f64, r: f64 },
    Bump { v0: f64, r: f64 },
    Zero { r: f64 },
    /// Constant on all of space. Diagnostic only: it has no compact support.
    Uniform { c: f64 },
    Sum(Vec<Kind>),
}

impl Kind {
    fn radial(&self, rho: f64) -> f64 {
        match *self {
            Kind::SquareWell { v0, r } => {
                if rho <= r {
                    v0
                } else {
                    0.0
                }
            }
            Kind::Bump { v0, r } => {
                if rho < r {
                    let q = rho / r;
                    v0 * (1.0 - 1.0 / (1.0 - q * q)).exp()
                } else {
                    0.0
                }
            }
            Kind::Zero { .. } => 0.0,
            Kind::Uniform { c } => c,
            Kind::Sum(ref ks) => ks.iter().map(|k| k.radial(rho)).sum(),
        }
    }

    fn support(&self) -> f64 {
        match *self {
            Kind::SquareWell { r, .. } | Kind::Bump { r, .. } | Kind::Zero { r } => r,
            Kind::Uniform { .. } => f64::INFINITY,
            Kind::Sum(ref ks) => ks.iter().map(Kind::support).fold(0.0, f64::max),
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            Kind::SquareWell { v0, .. } | Kind::Bump { v0, .. } => (v0.min(0.0), v0.max(0.0)),
            Kind::Zero { .. } => (0.0, 0.0),
            Kind::Uniform { c } => (c, c),
            Kind::Sum(ref ks) => ks.iter().map(Kind::bounds).fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1)),
        }
    }

    fn smoothness(&self) -> Smoothness {
        match self {
            Kind::SquareWell { .. } => Smoothness::C0,
            Kind::Bump { .. } | Kind::Zero { .. } | Kind::Uniform { .. } => Smoothness::Cinf,
            Kind::Sum(ks) => ks.iter().map(Kind::smoothness).min().unwrap_or(Smoothness::Cinf),
        }
    }

    fn breaks(&self, out: &mut Vec<f64>) {
        match *self {
            Kind::SquareWell { r, .. } | Kind::Bump { r, .. } => out.push(r),
            Kind::Zero { .. } | Kind::Uniform { .. } => {}
            Kind::Sum(ref ks) => ks.iter().for_each(|k| k.breaks(out)),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Kind::Zero { .. } => true,
            Kind::Uniform { c } => *c == 0.0,
            Kind::SquareWell { v0, .. } | Kind::Bump { v0, .. } => *v0 == 0.0,
            Kind::Sum(ks) => ks.iter().all(Kind::is_zero),
        }
    }
}

/// A radially symmetric potential `v(x) = f(|x|)` in dimension `dim`.
///
/// `min_value` and `max_value` are exact for the elementary kinds and
/// conservative (summed) bounds for composites.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    dim: usize,
    kind: Kind,
    support_radius: f64,
    smoothness: Smoothness,
    min_value: f64,
    max_value: f64,
}

/// Configuration form of a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    SquareWell { v0: f64, r: f64 },
    Bump { v0: f64, r: f64 },
    Zero {
        #[serde(default = "default_zero_radius")]
        r: f64,
    },
    Composite { terms: Vec<PotentialSpec> },
}

fn default_zero_radius() -> f64 {
    1.0
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("dim", "dimension must be at least 1"));
    }
    Ok(())
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("r", format!("radius must be positive and finite, got {r}")));
    }
    Ok(())
}

impl Potential {
    fn from_kind(dim: usize, kind: Kind) -> Self {
        let (min_value, max_value) = kind.bounds();
        Potential {
            dim,
            support_radius: kind.support(),
            smoothness: kind.smoothness(),
            min_value,
            max_value,
            kind,
        }
    }

    /// `v = v0` on the closed ball of radius `r`, zero outside.
    pub fn square_well(d: usize, v0: f64, r: f64) -> Result<Self> {
        check_dim(d)?;
        check_radius(r)?;
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(Error::invalid("v0", format!("well depth must be positive, got {v0}")));
        }
        Ok(Self::from_kind(d, Kind::SquareWell { v0, r }))
    }

    /// Smooth bump `v0 exp(1 - 1/(1 - |x/r|^2))` on the open ball of radius `r`.
    /// `v0 < 0` gives a killing potential.
    pub fn bump(d: usize, v0: f64, r: f64) -> Result<Self> {
        check_dim(d)?;
        check_radius(r)?;
        if !v0.is_finite() {
            return Err(Error::invalid("v0", "amplitude must be finite"));
        }
        Ok(Self::from_kind(d, Kind::Bump { v0, r }))
    }

    /// The identically zero potential with a nominal support radius `r`.
    pub fn zero(d: usize, r: f64) -> Result<Self> {
        check_dim(d)?;
        check_radius(r)?;
        Ok(Self::from_kind(d, Kind::Zero { r }))
    }

    /// Constant potential on all of space. Diagnostic use only: it violates the
    /// compact-support assumption and is rejected wherever support geometry matters.
    pub fn uniform_unbounded(d: usize, c: f64) -> Result<Self> {
        check_dim(d)?;
        if !c.is_finite() {
            return Err(Error::invalid("c", "constant must be finite"));
        }
        Ok(Self::from_kind(d, Kind::Uniform { c }))
    }

    /// Pointwise sum of potentials of the same dimension.
    pub fn sum(terms: &[Potential]) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::invalid("terms", "empty sum"))?;
        for t in terms {
            if t.dim != first.dim {
                return Err(Error::DimensionMismatch { expected: first.dim, got: t.dim });
            }
        }
        Ok(Self::from_kind(first.dim, Kind::Sum(terms.iter().map(|t| t.kind.clone()).collect())))
    }

    /// Builds a potential from its configuration form.
    pub fn from_spec(d: usize, spec: &PotentialSpec) -> Result<Self> {
        match spec {
            PotentialSpec::SquareWell { v0, r } => Self::square_well(d, *v0, *r),
            PotentialSpec::Bump { v0, r } => Self::bump(d, *v0, *r),
            PotentialSpec::Zero { r } => Self::zero(d, *r),
            PotentialSpec::Composite { terms } => {
                let parts = terms.iter().map(|t| Self::from_spec(d, t)).collect::<Result<Vec<_>>>()?;
                Self::sum(&parts)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    /// `sup |v|`.
    pub fn sup_abs(&self) -> f64 {
        self.max_value.abs().max(self.min_value.abs())
    }

    pub fn has_compact_support(&self) -> bool {
        self.support_radius.is_finite()
    }

    /// True when `v` vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.kind.is_zero()
    }

    /// Value as a function of the radius `|x|`.
    pub fn radial(&self, rho: f64) -> f64 {
        self.kind.radial(rho)
    }

    /// Value at the point `x`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.kind.radial(norm(x))
    }

    /// Radii at which `v` or one of its derivatives may jump, sorted and deduplicated.
    pub fn radial_breaks(&self) -> Vec<f64> {
        let mut b = Vec::new();
        self.kind.breaks(&mut b);
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Requires compact support, returning a solver error otherwise.
    pub(crate) fn require_compact(&self) -> Result<()> {
        if self.has_compact_support() {
            Ok(())
        } else {
            Err(Error::Unsupported("operation needs a compactly supported potential".into()))
        }
    }

    /// `int_0^inf v(y + s alpha) ds` by adaptive quadrature to absolute tolerance `tol`.
    pub fn line_integral(&self, y: &SourcePoint, alpha: &[f64], tol: f64) -> Result<f64> {
        self.require_compact()?;
        check_unit(alpha)?;
        if alpha.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: alpha.len() });
        }
        let y = y.as_slice();
        let ya = dot(y, alpha);
        let yy = dot(y, y);
        let r = self.support_radius;
        let s_end = 2.0 * r + norm(y);
        let mut breaks = vec![0.0, s_end];
        for rho in self.radial_breaks() {
            let disc = ya * ya - yy + rho * rho;
            if disc > 0.0 {
                for s in [-ya - disc.sqrt(), -ya + disc.sqrt()] {
                    if s > 0.0 && s < s_end {
                        breaks.push(s);
                    }
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        let mut p = vec![0.0; self.dim];
        let r = quadrature::integrate_pieces(
            |s| {
                for k in 0..p.len() {
                    p[k] = y[k] + s * alpha[k];
                }
                self.evaluate(&p)
            },
            &breaks,
            tol,
            0.0,
        )?;
        Ok(r.value)
    }
}

/// Source point `y` with `|y| <= R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePoint(Vec<f64>);

impl SourcePoint {
    /// Validates `|y| <= R` for the given potential.
    pub fn new(y: Vec<f64>, v: &Potential) -> Result<Self> {
        if y.len() != v.dim() {
            return Err(Error::DimensionMismatch { expected: v.dim(), got: y.len() });
        }
        if y.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("y", "coordinates must be finite"));
        }
        if norm(&y) > v.support_radius() * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "y",
                format!("|y| = {} exceeds the support radius {}", norm(&y), v.support_radius()),
            ));
        }
        Ok(SourcePoint(y))
    }

    /// The origin in dimension `d`.
    pub fn origin(d: usize) -> Self {
        SourcePoint(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_unit(alpha: &[f64]) -> Result<()> {
    if (norm(alpha) - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("alpha", format!("direction must be a unit vector, |alpha| = {}", norm(alpha))));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_well_examples() {
        let v = Potential::square_well(1, 2.0, 1.0).unwrap();
        assert_eq!(v.evaluate(&[0.0]), 2.0);
        assert_eq!(v.evaluate(&[1.5]), 0.0);
        assert_eq!(v.evaluate(&[-0.999]), 2.0);
        let v3 = Potential::square_well(3, 1.0, 1.0).unwrap();
        assert_eq!(v3.evaluate(&[0.0, 0.0, 2.0]), 0.0);
        assert_eq!(v.smoothness(), Smoothness::C0);
        assert!(Potential::square_well(1, 0.0, 1.0).is_err());
        assert!(Potential::square_well(1, 2.0, -1.0).is_err());
    }

    #[test]
    fn bump_examples() {
        let v = Potential::bump(1, 2.0, 1.0).unwrap();
        assert_eq!(v.evaluate(&[0.0]), 2.0);
        assert_eq!(v.evaluate(&[1.0]), 0.0);
        assert_eq!(v.evaluate(&[1.0 + 1e-9]), 0.0);
        let k = Potential::bump(1, -1.0, 1.0).unwrap();
        assert_eq!(k.evaluate(&[0.0]), -1.0);
        assert_eq!(k.min_value(), -1.0);
        assert_eq!(k.max_value(), 0.0);
        assert!(Potential::bump(1, 1.0, 0.0).is_err());
        assert_eq!(v.smoothness(), Smoothness::Cinf);
    }

    #[test]
    fn line_integral_of_square_well() {
        let v = Potential::square_well(1, 2.0, 1.0).unwrap();
        let y0 = SourcePoint::origin(1);
        assert!((v.line_integral(&y0, &[1.0], 1e-9).unwrap() - 2.0).abs() < 1e-9);
        let y = SourcePoint::new(vec![0.5], &v).unwrap();
        assert!((v.line_integral(&y, &[1.0], 1e-9).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn source_point_must_lie_in_support_ball() {
        let v = Potential::square_well(2, 2.0, 1.0).unwrap();
        assert!(SourcePoint::new(vec![0.6, 0.8], &v).is_ok());
        assert!(SourcePoint::new(vec![1.0, 1.0], &v).is_err());
        assert!(SourcePoint::new(vec![0.0], &v).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let spec: PotentialSpec = toml::from_str("kind = \"square_well\"\nv0 = 2.0\nr = 1.0").unwrap();
        assert_eq!(spec, PotentialSpec::SquareWell { v0: 2.0, r: 1.0 });
        let v = Potential::from_spec(1, &spec).unwrap();
        assert_eq!(v.evaluate(&[0.2]), 2.0);
        let c: PotentialSpec = toml::from_str(
            "kind = \"composite\"\n[[terms]]\nkind = \"bump\"\nv0 = -1.0\nr = 1.0\n[[terms]]\nkind = \"square_well\"\nv0 = 3.0\nr = 0.5",
        )
        .unwrap();
        let v = Potential::from_spec(1, &c).unwrap();
        assert!((v.evaluate(&[0.0]) - 2.0).abs() < 1e-15);
        assert!((v.evaluate(&[0.7]) + (1.0f64 - 1.0 / (1.0 - 0.49)).exp()).abs() < 1e-15);
    }
}
