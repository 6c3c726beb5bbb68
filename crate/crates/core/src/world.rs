//! Conic keep-out zones on S^n and their stereographic image, a Euclidean
//! sphere world.
//!
//! Constraint 0 bounds the workspace. Its axis is rotated onto the chart pole
//! `e_(n+1)` internally; every public input and output stays in the caller's
//! frame.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sphere::{rotation_aligning, same_dim, UnitVector};
use crate::stereographic::{Chart, EuclideanPoint};

/// Tolerance on the start-point margins (closed free space).
pub const START_TOLERANCE: f64 = 1e-12;
/// Minimum target margin required for the target to count as interior.
pub const TARGET_INTERIOR_MARGIN: f64 = 1e-9;

/// Forbidden cone `{x : xᵀa > cos θ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicConstraint {
    axis: UnitVector,
    half_angle: f64,
}

impl ConicConstraint {
    pub fn new(axis: UnitVector, half_angle: f64) -> Result<Self> {
        if !(half_angle > 0.0 && half_angle < FRAC_PI_2) {
            return Err(Error::InvalidHalfAngle(half_angle));
        }
        Ok(Self { axis, half_angle })
    }

    pub fn axis(&self) -> &UnitVector {
        &self.axis
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    /// `cos θ - xᵀa`; non-negative outside the cone.
    pub fn margin(&self, x: &UnitVector) -> Result<f64> {
        Ok(self.half_angle.cos() - x.dot(&self.axis)?)
    }
}

/// Ordered conic constraints; index 0 is the workspace-bounding cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    constraints: Vec<ConicConstraint>,
    aligned: Vec<ConicConstraint>,
    chart: Chart,
}

impl ConstraintSet {
    pub fn new(constraints: Vec<ConicConstraint>) -> Result<Self> {
        let first = constraints.first().ok_or(Error::NoConstraints)?;
        let dim = first.axis.ambient_dim();
        for c in &constraints {
            same_dim(dim, c.axis.ambient_dim())?;
        }
        let pole = UnitVector::north_pole(dim - 1)?;
        let rotation = rotation_aligning(&first.axis, &pole)?;
        let chart = Chart::new(rotation);
        let mut aligned = Vec::with_capacity(constraints.len());
        for (i, c) in constraints.iter().enumerate() {
            let axis = if i == 0 { pole.clone() } else { chart.to_aligned(&c.axis)? };
            aligned.push(ConicConstraint { axis, half_angle: c.half_angle });
        }
        Ok(Self { constraints, aligned, chart })
    }

    /// Sphere dimension n.
    pub fn n(&self) -> usize {
        self.constraints[0].axis.n()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Constraints in the caller's frame.
    pub fn constraints(&self) -> &[ConicConstraint] {
        &self.constraints
    }

    /// Constraints after rotating axis 0 onto `e_(n+1)`.
    pub fn aligned_constraints(&self) -> &[ConicConstraint] {
        &self.aligned
    }

    /// Stereographic chart whose pole is the axis of constraint 0.
    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    /// Free space membership: every margin non-negative.
    pub fn contains(&self, x: &UnitVector) -> Result<bool> {
        Ok(sphere_margin(self, x)?.min() >= 0.0)
    }
}

/// Per-constraint margins and their minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margins {
    pub values: Vec<f64>,
}

impl Margins {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Indices whose margin is below `threshold`.
    pub fn below(&self, threshold: f64) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, m)| **m < threshold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// `cos θᵢ - xᵀaᵢ` for every constraint.
pub fn sphere_margin(set: &ConstraintSet, x: &UnitVector) -> Result<Margins> {
    let values = set
        .constraints
        .iter()
        .map(|c| c.margin(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(Margins { values })
}

/// Pairwise separation entry: `cos(θᵢ + θⱼ) - aᵢᵀaⱼ`, positive when the
/// closed cones are disjoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSeparation {
    pub i: usize,
    pub j: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidationIssue {
    /// Item 2: cones `i` and `j` overlap or touch.
    Overlap { i: usize, j: usize, margin: f64 },
    /// Item 3: rotating axis 0 onto the pole left a residual.
    Alignment { residual: f64 },
    /// Item 4: the start point lies inside these cones.
    StartOutside { indices: Vec<usize> },
    /// Item 4: the target is not strictly inside the free space.
    TargetNotInterior { indices: Vec<usize> },
    /// Start or target has the wrong dimension.
    Dimension { expected: usize, found: usize },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Overlap { i, j, margin } => {
                write!(f, "item 2: cones {i} and {j} are not separated (margin {margin:.3e})")
            }
            Self::Alignment { residual } => {
                write!(f, "item 3: axis 0 alignment residual {residual:.3e}")
            }
            Self::StartOutside { indices } => {
                write!(f, "item 4: start lies inside cone(s) {indices:?}")
            }
            Self::TargetNotInterior { indices } => {
                write!(f, "item 4: target not in the interior, cone(s) {indices:?}")
            }
            Self::Dimension { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
        }
    }
}

/// Outcome of checking the standing assumptions on a constraint set and a
/// start/target pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub separations: Vec<PairSeparation>,
    pub alignment_residual: f64,
    pub start_margins: Option<Margins>,
    pub target_margins: Option<Margins>,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks pairwise separation, alignment, and the start/target placement.
pub fn validate(set: &ConstraintSet, x0: &UnitVector, xd: &UnitVector) -> ValidationReport {
    let mut issues = Vec::new();

    let mut separations = Vec::new();
    let cs = &set.constraints;
    for i in 0..cs.len() {
        for j in (i + 1)..cs.len() {
            let inner = cs[i].axis.coords().dot(cs[j].axis.coords());
            let margin = (cs[i].half_angle + cs[j].half_angle).cos() - inner;
            if margin <= 0.0 {
                issues.push(ValidationIssue::Overlap { i, j, margin });
            }
            separations.push(PairSeparation { i, j, margin });
        }
    }

    let pole = set.aligned[0].axis.coords();
    let rotated = set.chart.rotation() * cs[0].axis.coords();
    let alignment_residual = (rotated - pole).amax();
    if alignment_residual > 1e-12 {
        issues.push(ValidationIssue::Alignment { residual: alignment_residual });
    }

    let dim = set.n() + 1;
    let margins_for = |x: &UnitVector, issues: &mut Vec<ValidationIssue>| {
        if x.ambient_dim() != dim {
            issues.push(ValidationIssue::Dimension { expected: dim, found: x.ambient_dim() });
            None
        } else {
            sphere_margin(set, x).ok()
        }
    };
    let start_margins = margins_for(x0, &mut issues);
    if let Some(m) = &start_margins {
        let bad = m.below(-START_TOLERANCE);
        if !bad.is_empty() {
            issues.push(ValidationIssue::StartOutside { indices: bad });
        }
    }
    let target_margins = margins_for(xd, &mut issues);
    if let Some(m) = &target_margins {
        let bad: Vec<usize> = m
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v <= TARGET_INTERIOR_MARGIN)
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            issues.push(ValidationIssue::TargetNotInterior { indices: bad });
        }
    }

    ValidationReport { separations, alignment_residual, start_margins, target_margins, issues }
}

/// A problem expressed in the frame where axis 0 is `e_(n+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub constraints: ConstraintSet,
    pub start: UnitVector,
    pub target: UnitVector,
    pub rotation: nalgebra::DMatrix<f64>,
}

/// Rotates axes, start and target so that axis 0 becomes `e_(n+1)`.
pub fn align(set: &ConstraintSet, x0: &UnitVector, xd: &UnitVector) -> Result<Alignment> {
    let chart = set.chart();
    let constraints = ConstraintSet::new(set.aligned.clone())?;
    Ok(Alignment {
        constraints,
        start: chart.to_aligned(x0)?,
        target: chart.to_aligned(xd)?,
        rotation: chart.rotation().clone(),
    })
}

/// Ball `{ξ : ‖ξ - c‖ < r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallObstacle {
    center: DVector<f64>,
    radius: f64,
}

impl BallObstacle {
    pub fn new(center: EuclideanPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidWorld(format!("obstacle radius {radius} must be positive")));
        }
        Ok(Self { center: center.into_inner(), radius })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Workspace ball of radius ρ₀ centred at the origin, minus disjoint open
/// ball obstacles strictly inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereWorld {
    workspace_radius: f64,
    obstacles: Vec<BallObstacle>,
}

impl SphereWorld {
    pub fn new(workspace_radius: f64, obstacles: Vec<BallObstacle>) -> Result<Self> {
        if !(workspace_radius > 0.0) || !workspace_radius.is_finite() {
            return Err(Error::InvalidWorld(format!(
                "workspace radius {workspace_radius} must be positive"
            )));
        }
        let n = obstacles.first().map(|o| o.center.len());
        for (i, o) in obstacles.iter().enumerate() {
            if Some(o.center.len()) != n {
                return Err(Error::InvalidWorld(format!("obstacle {} has wrong dimension", i + 1)));
            }
            if o.center.norm() + o.radius >= workspace_radius {
                return Err(Error::InvalidWorld(format!(
                    "obstacle {} is not strictly inside the workspace",
                    i + 1
                )));
            }
            for (j, p) in obstacles.iter().enumerate().skip(i + 1) {
                if (&o.center - &p.center).norm() <= o.radius + p.radius {
                    return Err(Error::InvalidWorld(format!(
                        "obstacles {} and {} intersect",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { workspace_radius, obstacles })
    }

    pub fn workspace_radius(&self) -> f64 {
        self.workspace_radius
    }

    /// Obstacles 1..=I; obstacle `i` is stored at index `i - 1`.
    pub fn obstacles(&self) -> &[BallObstacle] {
        &self.obstacles
    }

    /// Gaps `‖cᵢ - cⱼ‖ - rᵢ - rⱼ` between obstacles, and `ρ₀ - ‖cᵢ‖ - rᵢ`
    /// to the workspace boundary (reported as pair `(0, i)`).
    pub fn clearances(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, o) in self.obstacles.iter().enumerate() {
            out.push((0, i + 1, self.workspace_radius - o.center.norm() - o.radius));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            for (j, p) in self.obstacles.iter().enumerate().skip(i + 1) {
                out.push((i + 1, j + 1, (&o.center - &p.center).norm() - o.radius - p.radius));
            }
        }
        out
    }
}

/// Image of the constraint set under the chart: `ρ₀ = cot(θ₀/2)`,
/// `cᵢ = J aᵢ / (cos θᵢ - a₀ᵀaᵢ)`, `rᵢ = sin θᵢ / (cos θᵢ - a₀ᵀaᵢ)`.
pub fn to_sphere_world(set: &ConstraintSet) -> Result<SphereWorld> {
    let aligned = set.aligned_constraints();
    let n = set.n();
    let workspace_radius = 1.0 / (aligned[0].half_angle / 2.0).tan();
    let mut obstacles = Vec::with_capacity(aligned.len() - 1);
    for (index, c) in aligned.iter().enumerate().skip(1) {
        let denominator = c.half_angle.cos() - c.axis.last();
        if !(denominator > 0.0) {
            return Err(Error::InconsistentConstraints { index, denominator });
        }
        let center = EuclideanPoint::new(c.axis.coords().rows(0, n) / denominator)?;
        obstacles.push(BallObstacle::new(center, c.half_angle.sin() / denominator)?);
    }
    SphereWorld::new(workspace_radius, obstacles)
}

/// `ρ₀ - ‖ξ‖` followed by `‖ξ - cᵢ‖ - rᵢ` for each obstacle.
pub fn euclidean_margin(world: &SphereWorld, xi: &EuclideanPoint) -> Margins {
    let x = xi.coords();
    let mut values = Vec::with_capacity(world.obstacles.len() + 1);
    values.push(world.workspace_radius - x.norm());
    values.extend(world.obstacles.iter().map(|o| (x - &o.center).norm() - o.radius));
    Margins { values }
}
