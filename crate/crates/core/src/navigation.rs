//! Navigation function on a Euclidean sphere world and the two virtual
//! controllers built on it.
//!
//! With `q = ‖ξ - ξd‖²` and `β = Πᵢ βᵢ`,
//!
//! ```text
//! φ  = q / (q^k + β)^(1/k)
//! ∇φ = (β ∇q - (q/k) ∇β) / (q^k + β)^(1 + 1/k)
//! ```
//!
//! The gradient stays finite on the boundary (`β = 0`), where it reduces to
//! `-∇β / (k q^k)`, so the same expression serves boundary start states.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sphere::same_dim;
use crate::stereographic::EuclideanPoint;
use crate::world::{euclidean_margin, SphereWorld};

/// Euclidean margin below which a point counts as outside the free space.
pub const DOMAIN_TOLERANCE: f64 = 1e-6;

/// Above this exponent, or when `q^k`/`β` would exceed [`LOG_SPACE_MAGNITUDE`],
/// the evaluation is rescaled in log space.
pub const LOG_SPACE_EXPONENT: f64 = 20.0;
pub const LOG_SPACE_MAGNITUDE: f64 = 1e150;

/// Gain γ and exponent k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NavParams {
    gamma: f64,
    k: f64,
}

impl NavParams {
    pub fn new(gamma: f64, k: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParams(format!("gamma must be positive, got {gamma}")));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParams(format!("k must be positive, got {k}")));
        }
        Ok(Self { gamma, k })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn k(&self) -> f64 {
        self.k
    }
}

impl Default for NavParams {
    fn default() -> Self {
        Self { gamma: 5.0, k: 5.0 }
    }
}

fn check_dim(world: &SphereWorld, xi: &EuclideanPoint) -> Result<()> {
    if let Some(o) = world.obstacles().first() {
        same_dim(o.center().len(), xi.dim())?;
    }
    Ok(())
}

/// `β(ξ)` and `∇β(ξ)`, with `β₀ = ρ₀² - ‖ξ‖²` and `βᵢ = ‖ξ - cᵢ‖² - rᵢ²`.
pub fn beta(world: &SphereWorld, xi: &EuclideanPoint) -> Result<(f64, DVector<f64>)> {
    check_dim(world, xi)?;
    let x = xi.coords();
    let rho = world.workspace_radius();

    let mut factors = Vec::with_capacity(world.obstacles().len() + 1);
    let mut grads = Vec::with_capacity(world.obstacles().len() + 1);
    factors.push(rho * rho - x.norm_squared());
    grads.push(x * -2.0);
    for o in world.obstacles() {
        let d = x - o.center();
        factors.push(d.norm_squared() - o.radius() * o.radius());
        grads.push(d * 2.0);
    }

    // Prefix/suffix products give Π_{j≠i} βⱼ without dividing by a factor
    // that may vanish on the boundary.
    let count = factors.len();
    let mut suffix = vec![1.0; count + 1];
    for i in (0..count).rev() {
        suffix[i] = suffix[i + 1] * factors[i];
    }
    let mut prefix = 1.0;
    let mut grad = DVector::zeros(x.len());
    for i in 0..count {
        grad.axpy(prefix * suffix[i + 1], &grads[i], 1.0);
        prefix *= factors[i];
    }
    Ok((suffix[0], grad))
}

struct Terms {
    q: f64,
    diff: DVector<f64>,
    beta: f64,
    grad_beta: DVector<f64>,
}

fn terms(world: &SphereWorld, xi: &EuclideanPoint, target: &EuclideanPoint) -> Result<Terms> {
    same_dim(xi.dim(), target.dim())?;
    let min_margin = euclidean_margin(world, xi).min();
    if min_margin < -DOMAIN_TOLERANCE {
        return Err(Error::OutsideDomain { min_margin });
    }
    let diff = xi.coords() - target.coords();
    let q = diff.norm_squared();
    let (beta, grad_beta) = beta(world, xi)?;
    Ok(Terms { q, diff, beta: beta.max(0.0), grad_beta })
}

fn use_log_space(t: &Terms, k: f64) -> bool {
    k > LOG_SPACE_EXPONENT
        || t.beta > LOG_SPACE_MAGNITUDE
        || k * t.q.ln() > LOG_SPACE_MAGNITUDE.ln()
}

/// `(φ, ∇φ)` from precomputed terms.
fn evaluate(t: &Terms, k: f64) -> Result<(f64, DVector<f64>)> {
    if t.q == 0.0 {
        if t.beta > 0.0 {
            return Ok((0.0, DVector::zeros(t.diff.len())));
        }
        return Err(Error::DegenerateConfiguration);
    }
    let grad_q = &t.diff * 2.0;
    if use_log_space(t, k) {
        // Factor out e^L, L = max(k ln q, ln β).
        let lq = k * t.q.ln();
        let lb = if t.beta > 0.0 { t.beta.ln() } else { f64::NEG_INFINITY };
        let l = lq.max(lb);
        let beta_s = (lb - l).exp();
        let s = (lq - l).exp() + beta_s;
        let scale = (-l / k).exp();
        let phi = t.q * scale / s.powf(1.0 / k);
        let grad_beta_s = &t.grad_beta * (-l).exp();
        let grad = (grad_q * beta_s - grad_beta_s * (t.q / k)) * (scale / s.powf(1.0 + 1.0 / k));
        return Ok((phi, grad));
    }
    let s = t.q.powf(k) + t.beta;
    if !(s > 0.0) {
        return Err(Error::DegenerateConfiguration);
    }
    let phi = t.q / s.powf(1.0 / k);
    let grad = (grad_q * t.beta - &t.grad_beta * (t.q / k)) / s.powf(1.0 + 1.0 / k);
    Ok((phi, grad))
}

/// Navigation function value, in [0, 1] on the free space.
pub fn phi(
    world: &SphereWorld,
    xi: &EuclideanPoint,
    target: &EuclideanPoint,
    params: &NavParams,
) -> Result<f64> {
    let t = terms(world, xi, target)?;
    Ok(evaluate(&t, params.k)?.0)
}

/// Analytic gradient of [`phi`] with respect to `ξ`.
pub fn grad_phi(
    world: &SphereWorld,
    xi: &EuclideanPoint,
    target: &EuclideanPoint,
    params: &NavParams,
) -> Result<DVector<f64>> {
    let t = terms(world, xi, target)?;
    Ok(evaluate(&t, params.k)?.1)
}

/// `φ` and `∇φ` in one pass.
pub fn phi_and_grad(
    world: &SphereWorld,
    xi: &EuclideanPoint,
    target: &EuclideanPoint,
    params: &NavParams,
) -> Result<(f64, DVector<f64>)> {
    let t = terms(world, xi, target)?;
    evaluate(&t, params.k)
}

/// `-γ ∇φ(ξ, ξd)`.
pub fn kappa_nav(
    world: &SphereWorld,
    xi: &EuclideanPoint,
    target: &EuclideanPoint,
    params: &NavParams,
) -> Result<DVector<f64>> {
    Ok(grad_phi(world, xi, target, params)? * -params.gamma)
}

/// `-γ (ξ - ξd)`, the globally exponentially stable single-cone law.
pub fn kappa_single(xi: &EuclideanPoint, target: &EuclideanPoint, gamma: f64) -> Result<DVector<f64>> {
    same_dim(xi.dim(), target.dim())?;
    Ok((xi.coords() - target.coords()) * -gamma)
}

/// A sampled point where `‖∇φ‖` is small and no probe direction decreases
/// `φ`, i.e. a candidate spurious local minimum.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryCandidate {
    pub point: Vec<f64>,
    pub grad_norm: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryScan {
    pub samples: usize,
    pub free_samples: usize,
    pub min_grad_norm: f64,
    pub candidates: Vec<StationaryCandidate>,
}

/// Samples the free space uniformly and flags candidate local minima of `φ`
/// away from the target. An empty candidate list is evidence, not proof,
/// that `k` is large enough.
pub fn scan_stationary_points(
    world: &SphereWorld,
    target: &EuclideanPoint,
    params: &NavParams,
    samples: usize,
    seed: u64,
) -> Result<StationaryScan> {
    let n = target.dim();
    let rho = world.workspace_radius();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scored = Vec::new();
    let mut min_grad_norm = f64::INFINITY;
    for _ in 0..samples {
        let p: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-rho..rho));
        let xi = EuclideanPoint::new(p)?;
        let margins = euclidean_margin(world, &xi);
        if margins.min() <= 1e-3 * rho || xi.distance(target) < 1e-2 * rho {
            continue;
        }
        let (value, grad) = phi_and_grad(world, &xi, target, params)?;
        let g = grad.norm();
        min_grad_norm = min_grad_norm.min(g);
        scored.push((g, value, xi));
    }
    let free_samples = scored.len();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut candidates = Vec::new();
    for (g, value, xi) in scored.into_iter().take(20) {
        let step = 1e-3 * rho;
        let mut descends = false;
        for axis in 0..n {
            for sign in [-1.0, 1.0] {
                let mut probe = xi.coords().clone();
                probe[axis] += sign * step;
                let probe = EuclideanPoint::new(probe)?;
                if euclidean_margin(world, &probe).min() < 0.0 {
                    continue;
                }
                if phi(world, &probe, target, params)? < value {
                    descends = true;
                }
            }
        }
        if !descends {
            candidates.push(StationaryCandidate {
                point: xi.coords().iter().copied().collect(),
                grad_norm: g,
                phi: value,
            });
        }
    }
    Ok(StationaryScan { samples, free_samples, min_grad_norm, candidates })
}
