//! Stereographic chart from the north pole `e_(n+1)`.
//!
//! `ψ(x) = J x / (1 - x_(n+1))` where `J` keeps the first n coordinates.
//! The chart is a diffeomorphism from S^n minus the pole onto R^n.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sphere::{same_dim, UnitVector};

/// Minimum gap `1 - x_(n+1)` accepted before reporting a pole singularity.
pub const POLE_EPSILON: f64 = 1e-9;

/// A point of R^n, the image of the chart.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanPoint(DVector<f64>);

impl EuclideanPoint {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn origin(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn distance(&self, other: &EuclideanPoint) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

fn pole_gap(x: &UnitVector) -> Result<f64> {
    let gap = 1.0 - x.last();
    if gap < POLE_EPSILON {
        Err(Error::PoleSingularity { gap })
    } else {
        Ok(gap)
    }
}

/// `ψ(x)`.
pub fn project(x: &UnitVector) -> Result<EuclideanPoint> {
    let gap = pole_gap(x)?;
    let n = x.n();
    Ok(EuclideanPoint(x.coords().rows(0, n) / gap))
}

/// `ψ⁻¹(ξ) = (2ξ, ‖ξ‖² - 1) / (1 + ‖ξ‖²)`.
pub fn unproject(xi: &EuclideanPoint) -> UnitVector {
    let n = xi.dim();
    let sq = xi.0.norm_squared();
    let denom = 1.0 + sq;
    let mut out = DVector::zeros(n + 1);
    out.rows_mut(0, n).copy_from(&(&xi.0 * (2.0 / denom)));
    out[n] = (sq - 1.0) / denom;
    // Exact in real arithmetic; renormalizing only removes round-off.
    UnitVector::normalize(out).expect("inverse stereographic image is never zero")
}

/// `∇ψ(x) = J((1 - s) I + x e_(n+1)ᵀ) / (1 - s)²` with `s = x_(n+1)`, an
/// n × (n+1) matrix.
pub fn jacobian(x: &UnitVector) -> Result<DMatrix<f64>> {
    let gap = pole_gap(x)?;
    let n = x.n();
    let mut jac = DMatrix::zeros(n, n + 1);
    let inv = 1.0 / gap;
    let inv2 = inv * inv;
    for i in 0..n {
        jac[(i, i)] = inv;
        jac[(i, n)] = x.coords()[i] * inv2;
    }
    Ok(jac)
}

/// `∇ψ(x) v` without forming the matrix.
pub fn push_forward(x: &UnitVector, v: &DVector<f64>) -> Result<DVector<f64>> {
    same_dim(x.ambient_dim(), v.len())?;
    let gap = pole_gap(x)?;
    let n = x.n();
    let tail = v[n] / (gap * gap);
    Ok(DVector::from_fn(n, |i, _| v[i] / gap + x.coords()[i] * tail))
}

/// Closed form of `‖ψ(x₁) - ψ(x₂)‖²`:
/// `2(1 - x₁ᵀx₂) / ((1 - x₁,(n+1))(1 - x₂,(n+1)))`.
///
/// The numerator is evaluated as `‖x₁ - x₂‖²`, which avoids the
/// cancellation in `1 - x₁ᵀx₂` for nearby points.
pub fn chordal_norm_sq(x1: &UnitVector, x2: &UnitVector) -> Result<f64> {
    same_dim(x1.ambient_dim(), x2.ambient_dim())?;
    let g1 = pole_gap(x1)?;
    let g2 = pole_gap(x2)?;
    Ok((x1.coords() - x2.coords()).norm_squared() / (g1 * g2))
}

/// The stereographic chart composed with a fixed rotation, `ξ = ψ(R x)`.
///
/// Callers keep states in their own frame while the chart pole sits at
/// `Rᵀ e_(n+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    rotation: DMatrix<f64>,
    identity: bool,
}

impl Chart {
    pub fn new(rotation: DMatrix<f64>) -> Self {
        let dim = rotation.nrows();
        let identity = rotation == DMatrix::identity(dim, dim);
        Self { rotation, identity }
    }

    pub fn identity(ambient_dim: usize) -> Self {
        Self::new(DMatrix::identity(ambient_dim, ambient_dim))
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn ambient_dim(&self) -> usize {
        self.rotation.nrows()
    }

    /// `R x`.
    pub fn to_aligned(&self, x: &UnitVector) -> Result<UnitVector> {
        if self.identity {
            same_dim(self.ambient_dim(), x.ambient_dim())?;
            Ok(x.clone())
        } else {
            x.rotate(&self.rotation)
        }
    }

    /// `Rᵀ y`.
    pub fn from_aligned(&self, y: &UnitVector) -> Result<UnitVector> {
        if self.identity {
            same_dim(self.ambient_dim(), y.ambient_dim())?;
            Ok(y.clone())
        } else {
            y.rotate(&self.rotation.transpose())
        }
    }

    pub fn project(&self, x: &UnitVector) -> Result<EuclideanPoint> {
        project(&self.to_aligned(x)?)
    }

    pub fn unproject(&self, xi: &EuclideanPoint) -> Result<UnitVector> {
        same_dim(self.ambient_dim(), xi.dim() + 1)?;
        self.from_aligned(&unproject(xi))
    }

    /// `∇ψ(R x) R`.
    pub fn jacobian(&self, x: &UnitVector) -> Result<DMatrix<f64>> {
        let jac = jacobian(&self.to_aligned(x)?)?;
        if self.identity {
            Ok(jac)
        } else {
            Ok(jac * &self.rotation)
        }
    }
}
