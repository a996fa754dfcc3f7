//! Scaled distance `θ = |x - y| / t`, directions and the interior/exterior regions.

use crate::error::{Error, Result};
use crate::potentials::{norm, SourcePoint};
use serde::{Deserialize, Serialize};

/// Region of `(t, x)` relative to the cone `θ = sqrt(2λ₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "region", rename_all = "snake_case")]
pub enum Region {
    /// `θ ≤ sqrt(2λ₀) - eps`.
    Interior { eps: f64 },
    /// `θ ≥ sqrt(2λ₀) + eps`.
    Exterior { eps: f64 },
    /// Within `eps` of the cone.
    NearCone,
    /// No positive eigenvalue, so the cone does not exist.
    Undefined,
}

impl Region {
    pub fn name(&self) -> &'static str {
        match self {
            Region::Interior { .. } => "interior",
            Region::Exterior { .. } => "exterior",
            Region::NearCone => "near_cone",
            Region::Undefined => "undefined",
        }
    }
}

/// Cone coordinates of a point `(t, x)` for the source `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCoordinates {
    pub theta: f64,
    /// `(x - y) / |x - y|`, `None` at `x = y`.
    pub alpha: Option<Vec<f64>>,
    /// `x / |x|`, `None` at `x = 0`.
    pub xhat: Option<Vec<f64>>,
    pub t: f64,
    pub region: Region,
}

fn unit(v: Vec<f64>) -> Option<Vec<f64>> {
    let n = norm(&v);
    (n > 0.0).then(|| v.into_iter().map(|c| c / n).collect())
}

/// Classifies `(t, x)`. Points within `eps` of the cone (or on it when `eps = 0`)
/// are tagged near-cone; `lambda0 ≤ 0` gives `Undefined`.
pub fn classify(t: f64, x: &[f64], y: &SourcePoint, lambda0: f64, eps: f64) -> Result<ConeCoordinates> {
    if !(t > 0.0) {
        return Err(Error::invalid("t", format!("must be positive, got {t}")));
    }
    if x.len() != y.dim() {
        return Err(Error::DimensionMismatch { expected: y.dim(), got: x.len() });
    }
    if !(eps >= 0.0) {
        return Err(Error::invalid("eps", "must be non-negative"));
    }
    let diff: Vec<f64> = x.iter().zip(y.as_slice()).map(|(a, b)| a - b).collect();
    let theta = norm(&diff) / t;
    let region = if !(lambda0 > 0.0) {
        Region::Undefined
    } else {
        let kappa = (2.0 * lambda0).sqrt();
        if (theta - kappa).abs() < eps || theta == kappa {
            Region::NearCone
        } else if theta < kappa {
            Region::Interior { eps }
        } else {
            Region::Exterior { eps }
        }
    };
    Ok(ConeCoordinates { theta, alpha: unit(diff), xhat: unit(x.to_vec()), t, region })
}
