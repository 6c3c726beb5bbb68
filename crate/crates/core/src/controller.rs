//! Feedback linearization through the chart.
//!
//! For `ẋ = Π(x) u` the chart coordinates obey `ξ̇ = Σ(x) u` with
//! `Σ(x) = ∇ψ(x) Π(x)`. Choosing `u = Σ⁺ v`, `Σ⁺ = Σᵀ(ΣΣᵀ)⁻¹`, gives `ξ̇ = v`,
//! so any Euclidean sphere-world controller `v = κ̃(ξ, ξd)` lifts to the
//! sphere.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::navigation::{kappa_single, phi_and_grad, NavParams};
use crate::sphere::{same_dim, UnitVector};
use crate::stereographic::{Chart, EuclideanPoint};
use crate::world::{ConstraintSet, SphereWorld};

/// Largest accepted condition number of `ΣΣᵀ`.
pub const MAX_CONDITION: f64 = 1e12;

/// Kinematic model `ẋ = Π(x) u`.
///
/// Implementations must keep `Im Π(x) ⊆ T_x S^n` and be stateless.
pub trait DynamicsModel: fmt::Debug + Send + Sync {
    /// n + 1.
    fn ambient_dim(&self) -> usize;

    /// m.
    fn input_dim(&self) -> usize;

    /// The (n+1) × m input matrix.
    fn pi_matrix(&self, x: &UnitVector) -> DMatrix<f64>;

    /// `Π(x) u`.
    fn apply(&self, x: &UnitVector, u: &DVector<f64>) -> DVector<f64> {
        self.pi_matrix(x) * u
    }
}

/// Spherical pendulum / reduced attitude on S²: `ẋ = x × u`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SphericalPendulum;

/// `[x]×`, so that `[x]× u = x × u`.
pub fn skew(x: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -x[2], x[1], x[2], 0.0, -x[0], -x[1], x[0], 0.0])
}

impl DynamicsModel for SphericalPendulum {
    fn ambient_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        3
    }

    fn pi_matrix(&self, x: &UnitVector) -> DMatrix<f64> {
        skew(x.coords())
    }

    fn apply(&self, x: &UnitVector, u: &DVector<f64>) -> DVector<f64> {
        x.coords().cross(u)
    }
}

/// Fully actuated tangent model on S^n: `Π(x) = I - xxᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FullTangent {
    n: usize,
}

impl FullTangent {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::TooFewCoordinates(1));
        }
        Ok(Self { n })
    }
}

impl DynamicsModel for FullTangent {
    fn ambient_dim(&self) -> usize {
        self.n + 1
    }

    fn input_dim(&self) -> usize {
        self.n + 1
    }

    fn pi_matrix(&self, x: &UnitVector) -> DMatrix<f64> {
        let c = x.coords();
        DMatrix::identity(self.n + 1, self.n + 1) - c * c.transpose()
    }

    fn apply(&self, x: &UnitVector, u: &DVector<f64>) -> DVector<f64> {
        let c = x.coords();
        u - c * c.dot(u)
    }
}

/// Which Euclidean controller is pulled back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Linear law `-γ(ξ - ξd)`; requires exactly one constraint.
    Single,
    /// Navigation-function gradient law `-γ∇φ`.
    Multi,
}

/// `Σ(x) = ∇ψ(Rx) R Π(x)`, an n × m matrix.
pub fn sigma(model: &dyn DynamicsModel, chart: &Chart, x: &UnitVector) -> Result<DMatrix<f64>> {
    same_dim(model.ambient_dim(), x.ambient_dim())?;
    same_dim(chart.ambient_dim(), x.ambient_dim())?;
    Ok(chart.jacobian(x)? * model.pi_matrix(x))
}

/// Cholesky factor of `ΣΣᵀ` after the conditioning check.
fn gram_cholesky(sigma: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let gram = sigma * sigma.transpose();
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::NearSingular { condition });
    }
    gram.cholesky().ok_or(Error::NearSingular { condition })
}

/// `Σ⁺ v = Σᵀ y` where `(ΣΣᵀ) y = v`.
pub fn apply_pinv(sigma: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    same_dim(sigma.nrows(), v.len())?;
    let chol = gram_cholesky(sigma)?;
    Ok(sigma.transpose() * chol.solve(v))
}

/// `Σ(x)⁺` as an m × n matrix.
pub fn sigma_pinv(model: &dyn DynamicsModel, chart: &Chart, x: &UnitVector) -> Result<DMatrix<f64>> {
    let s = sigma(model, chart, x)?;
    let chol = gram_cholesky(&s)?;
    let n = s.nrows();
    Ok(s.transpose() * chol.solve(&DMatrix::identity(n, n)))
}

/// Closed form for the pendulum with the pole at `e₃`:
/// `Σ⁺ = -Π(x)((1 - x₃) I₃ + e₃ xᵀ) J₂ᵀ`.
pub fn pendulum_pinv_closed_form(x: &UnitVector) -> Result<DMatrix<f64>> {
    same_dim(3, x.ambient_dim())?;
    let c = x.coords();
    let mut inner = DMatrix::identity(3, 3) * (1.0 - c[2]);
    for j in 0..3 {
        inner[(2, j)] += c[j];
    }
    let selection_t = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    Ok(-(skew(c) * inner * selection_t))
}

/// One evaluation of the lifted controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlEval {
    /// Chart coordinates of the state.
    pub xi: EuclideanPoint,
    /// Euclidean virtual input `v = κ̃(ξ, ξd)`.
    pub v: DVector<f64>,
    /// Sphere input `u = Σ⁺ v`.
    pub u: DVector<f64>,
    /// Navigation function value (multi mode only).
    pub phi: Option<f64>,
}

/// Everything needed to evaluate `u = Σ(x)⁺ κ̃(ψ(x), ψ(xd))` repeatedly.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    model: Arc<dyn DynamicsModel>,
    chart: Chart,
    world: SphereWorld,
    target_xi: EuclideanPoint,
    params: NavParams,
    mode: Mode,
}

impl ClosedLoop {
    pub fn new(
        model: Arc<dyn DynamicsModel>,
        set: &ConstraintSet,
        world: SphereWorld,
        target: &UnitVector,
        params: NavParams,
        mode: Mode,
    ) -> Result<Self> {
        same_dim(model.ambient_dim(), set.n() + 1)?;
        same_dim(model.ambient_dim(), target.ambient_dim())?;
        if mode == Mode::Single && (set.len() != 1 || !world.obstacles().is_empty()) {
            return Err(Error::InvalidScenario(format!(
                "single mode needs exactly one constraint, got {}",
                set.len()
            )));
        }
        let chart = set.chart().clone();
        let target_xi = chart.project(target)?;
        Ok(Self { model, chart, world, target_xi, params, mode })
    }

    pub fn model(&self) -> &dyn DynamicsModel {
        self.model.as_ref()
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn world(&self) -> &SphereWorld {
        &self.world
    }

    pub fn target_xi(&self) -> &EuclideanPoint {
        &self.target_xi
    }

    pub fn params(&self) -> &NavParams {
        &self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Virtual Euclidean controller and, in multi mode, `φ`.
    pub fn virtual_input(&self, xi: &EuclideanPoint) -> Result<(DVector<f64>, Option<f64>)> {
        match self.mode {
            Mode::Single => Ok((kappa_single(xi, &self.target_xi, self.params.gamma())?, None)),
            Mode::Multi => {
                let (value, grad) = phi_and_grad(&self.world, xi, &self.target_xi, &self.params)?;
                Ok((grad * -self.params.gamma(), Some(value)))
            }
        }
    }

    pub fn evaluate(&self, x: &UnitVector) -> Result<ControlEval> {
        let xi = self.chart.project(x)?;
        let (v, phi) = self.virtual_input(&xi)?;
        let s = sigma(self.model.as_ref(), &self.chart, x)?;
        let u = apply_pinv(&s, &v)?;
        Ok(ControlEval { xi, v, u, phi })
    }

    /// Closed-loop vector field `Π(x) u(x)`.
    pub fn velocity(&self, x: &UnitVector) -> Result<DVector<f64>> {
        let eval = self.evaluate(x)?;
        Ok(self.model.apply(x, &eval.u))
    }
}

/// `u = Σ(x)⁺ κ̃(ψ(x), ψ(xd))` for a single state.
pub fn control(
    model: Arc<dyn DynamicsModel>,
    set: &ConstraintSet,
    world: &SphereWorld,
    x: &UnitVector,
    target: &UnitVector,
    params: NavParams,
    mode: Mode,
) -> Result<DVector<f64>> {
    let closed = ClosedLoop::new(model, set, world.clone(), target, params, mode)?;
    Ok(closed.evaluate(x)?.u)
}

/// Sampled check of the structural assumptions on `Π`: tangency of its image
/// and rank n away from the pole.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelCheck {
    pub samples: usize,
    pub max_tangency: f64,
    pub min_rank: usize,
    pub min_singular_value: f64,
    pub passed: bool,
}

/// Singular values below this count as zero when measuring rank.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Checks tangency and rank at `extra` states plus `samples` random ones.
/// Points within 1e-3 of `pole` are skipped.
pub fn check_model(
    model: &dyn DynamicsModel,
    pole: &UnitVector,
    samples: usize,
    seed: u64,
    extra: &[UnitVector],
) -> ModelCheck {
    let dim = model.ambient_dim();
    let n = dim - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states: Vec<UnitVector> = extra.to_vec();
    while states.len() < extra.len() + samples {
        let raw = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        if let Ok(x) = UnitVector::normalize(raw) {
            states.push(x);
        }
    }
    let mut max_tangency: f64 = 0.0;
    let mut min_rank = usize::MAX;
    let mut min_singular_value = f64::INFINITY;
    let mut count = 0;
    for x in &states {
        if x.ambient_dim() != dim || (x.coords() - pole.coords()).norm() < 1e-3 {
            continue;
        }
        count += 1;
        let pi = model.pi_matrix(x);
        max_tangency = max_tangency.max((x.coords().transpose() * &pi).amax());
        let svd = pi.svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let rank = sv.iter().filter(|s| **s > RANK_TOLERANCE).count();
        min_rank = min_rank.min(rank);
        if let Some(s) = sv.get(n - 1) {
            min_singular_value = min_singular_value.min(*s);
        }
    }
    let passed = count > 0 && max_tangency <= 1e-10 && min_rank == n;
    ModelCheck { samples: count, max_tangency, min_rank, min_singular_value, passed }
}
