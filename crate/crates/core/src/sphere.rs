//! Points and tangent vectors on the unit n-sphere embedded in R^(n+1).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum deviation of `‖x‖` from one accepted by the strict constructor.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// Tangency tolerance for [`TangentVector`].
pub const TANGENT_TOLERANCE: f64 = 1e-10;

/// Smallest norm [`renormalize`] will divide by.
pub const MIN_NORM: f64 = 1e-8;

/// A point on S^n, stored as its n+1 ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(DVector<f64>);

impl UnitVector {
    /// Strict constructor: the input must already have unit norm.
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        Self::check_shape(&coords)?;
        let norm = coords.norm();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NotUnit { norm });
        }
        Ok(Self(coords))
    }

    /// Lenient constructor: divides by the norm.
    pub fn normalize(coords: DVector<f64>) -> Result<Self> {
        Self::check_shape(&coords)?;
        let norm = coords.norm();
        if norm <= MIN_NORM {
            return Err(Error::ZeroVector { norm });
        }
        Ok(Self(coords / norm))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn normalize_slice(coords: &[f64]) -> Result<Self> {
        Self::normalize(DVector::from_column_slice(coords))
    }

    /// Canonical basis vector `e_k` (zero-based) of R^dim.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::TooFewCoordinates(dim));
        }
        if k >= dim {
            return Err(Error::DimensionMismatch { expected: dim, found: k + 1 });
        }
        let mut v = DVector::zeros(dim);
        v[k] = 1.0;
        Ok(Self(v))
    }

    /// The projection pole `e_(n+1)` of S^n.
    pub fn north_pole(n: usize) -> Result<Self> {
        Self::basis(n + 1, n)
    }

    fn check_shape(coords: &DVector<f64>) -> Result<()> {
        if coords.len() < 2 {
            return Err(Error::TooFewCoordinates(coords.len()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// Sphere dimension n.
    pub fn n(&self) -> usize {
        self.0.len() - 1
    }

    /// Ambient dimension n+1.
    pub fn ambient_dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Last ambient coordinate, `e_(n+1)ᵀx`.
    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn dot(&self, other: &UnitVector) -> Result<f64> {
        same_dim(self.ambient_dim(), other.ambient_dim())?;
        Ok(self.0.dot(&other.0))
    }

    pub fn neg(&self) -> UnitVector {
        UnitVector(-&self.0)
    }

    /// Applies an orthogonal matrix. The result is renormalized to absorb
    /// round-off, which for an orthogonal input is below 1e-15.
    pub fn rotate(&self, rotation: &DMatrix<f64>) -> Result<UnitVector> {
        same_dim(rotation.ncols(), self.ambient_dim())?;
        same_dim(rotation.nrows(), self.ambient_dim())?;
        UnitVector::normalize(rotation * &self.0)
    }
}

/// A vector in the tangent space T_x S^n.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: UnitVector,
    vec: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: UnitVector, vec: DVector<f64>) -> Result<Self> {
        same_dim(base.ambient_dim(), vec.len())?;
        let inner = base.coords().dot(&vec);
        if inner.abs() > TANGENT_TOLERANCE {
            return Err(Error::NotTangent { inner });
        }
        Ok(Self { base, vec })
    }

    /// Orthogonal projection of an ambient vector onto T_x S^n.
    pub fn project(base: UnitVector, ambient: &DVector<f64>) -> Result<Self> {
        same_dim(base.ambient_dim(), ambient.len())?;
        let vec = ambient - base.coords() * base.coords().dot(ambient);
        Ok(Self { base, vec })
    }

    pub fn base(&self) -> &UnitVector {
        &self.base
    }

    pub fn vec(&self) -> &DVector<f64> {
        &self.vec
    }
}

pub(crate) fn same_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// Inner product clamped to [-1, 1] so that `acos` never sees round-off
/// overshoot.
pub fn clamped_cos(x: &UnitVector, y: &UnitVector) -> Result<f64> {
    Ok(x.dot(y)?.clamp(-1.0, 1.0))
}

/// Geodesic (great-circle) distance `arccos(xᵀy)` in [0, π].
pub fn geodesic_distance(x: &UnitVector, y: &UnitVector) -> Result<f64> {
    Ok(clamped_cos(x, y)?.acos())
}

/// `x / ‖x‖` as a point on the sphere.
pub fn renormalize(x: &DVector<f64>) -> Result<UnitVector> {
    UnitVector::normalize(x.clone())
}

/// A proper rotation `R` with `R a = b`.
///
/// Acts as the identity on the orthogonal complement of span{a, b}. When `a`
/// and `b` are close to antipodal the map is split into a half-turn taking
/// `a` to `-a` (in the plane of `a` and the lowest-index coordinate axis not
/// parallel to it) followed by the well-conditioned rotation from `-a` to `b`.
pub fn rotation_aligning(a: &UnitVector, b: &UnitVector) -> Result<DMatrix<f64>> {
    let c = a.dot(b)?;
    if c >= -0.5 {
        return Ok(plane_rotation(a.coords(), b.coords(), c));
    }
    let half_turn = half_turn_about(a);
    let minus_a = -a.coords();
    let rest = plane_rotation(&minus_a, b.coords(), -c);
    Ok(rest * half_turn)
}

/// `I + K + K²/(1 + c)` with `K = b aᵀ - a bᵀ`, `c = aᵀb > -1`.
fn plane_rotation(a: &DVector<f64>, b: &DVector<f64>, c: f64) -> DMatrix<f64> {
    let dim = a.len();
    let k = b * a.transpose() - a * b.transpose();
    let k2 = &k * &k;
    DMatrix::identity(dim, dim) + k + k2 / (1.0 + c)
}

/// `I - 2aaᵀ - 2uuᵀ` for a unit `u ⟂ a`: rotation by π in span{a, u}.
fn half_turn_about(a: &UnitVector) -> DMatrix<f64> {
    let x = a.coords();
    let dim = x.len();
    // Some coordinate has |x_k| <= 1/sqrt(dim), so this always finds one.
    let k = (0..dim)
        .find(|&k| x[k].abs() < 1.0 - 1e-6)
        .expect("a unit vector in dim >= 2 has a non-parallel coordinate axis");
    let mut u = -x * x[k];
    u[k] += 1.0;
    u /= u.norm();
    DMatrix::identity(dim, dim) - 2.0 * x * x.transpose() - 2.0 * &u * u.transpose()
}
