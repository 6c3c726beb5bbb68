//! Fixed-step RK4 integration of the closed loop `ẋ = Π(x) u(x)` with
//! post-step renormalization, trajectory recording and batch basin runs.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::controller::{ClosedLoop, ControlEval, DynamicsModel, FullTangent, Mode, SphericalPendulum};
use crate::error::{Error, Result};
use crate::navigation::NavParams;
use crate::sphere::{geodesic_distance, UnitVector};
use crate::stereographic::EuclideanPoint;
use crate::world::{sphere_margin, to_sphere_world, validate, ConicConstraint, ConstraintSet, SphereWorld, ValidationReport};

/// Sphere margin below which a run is aborted.
pub const SAFETY_TOLERANCE: f64 = 1e-6;
/// Margin accepted as "inside" when reporting a successful run.
pub const REPORT_TOLERANCE: f64 = 1e-9;
/// Consecutive sub-tolerance steps required to declare convergence.
pub const CONVERGENCE_STREAK: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsChoice {
    SphericalPendulum,
    FullTangent,
}

/// Complete description of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub dynamics: DynamicsChoice,
    pub constraints: Vec<ConicConstraint>,
    pub start: UnitVector,
    pub target: UnitVector,
    pub params: NavParams,
    pub mode: Mode,
    pub dt: f64,
    pub t_end: f64,
    pub convergence_tol: f64,
    pub record_stride: usize,
}

impl Scenario {
    /// Checks the scalar fields and dimensions.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.n == 0 {
            return bad("dimension must be at least 1".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= self.dt) {
            return bad(format!("t_end {} must be at least dt {}", self.t_end, self.dt));
        }
        if !(self.convergence_tol > 0.0) {
            return bad(format!("convergence_tol must be positive, got {}", self.convergence_tol));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if self.dynamics == DynamicsChoice::SphericalPendulum && self.n != 2 {
            return bad(format!("spherical_pendulum needs dimension 2, got {}", self.n));
        }
        let dim = self.n + 1;
        for (name, x) in [("start", &self.start), ("target", &self.target)] {
            if x.ambient_dim() != dim {
                return bad(format!("{name} has {} coordinates, expected {dim}", x.ambient_dim()));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.axis().ambient_dim() != dim {
                return bad(format!("constraint {i} axis has {} coordinates, expected {dim}", c.axis().ambient_dim()));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Arc<dyn DynamicsModel>> {
        Ok(match self.dynamics {
            DynamicsChoice::SphericalPendulum => Arc::new(SphericalPendulum),
            DynamicsChoice::FullTangent => Arc::new(FullTangent::new(self.n)?),
        })
    }

    pub fn constraint_set(&self) -> Result<ConstraintSet> {
        ConstraintSet::new(self.constraints.clone())
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        self.check()?;
        Ok(validate(&self.constraint_set()?, &self.start, &self.target))
    }

    /// Number of whole steps that fit in `[0, t_end]`.
    pub fn total_steps(&self) -> usize {
        ((self.t_end / self.dt) + 1e-9).floor().max(1.0) as usize
    }

    pub fn with_start(&self, start: UnitVector) -> Scenario {
        Scenario { start, ..self.clone() }
    }

    /// Validates and assembles the closed loop.
    pub fn prepare(&self) -> Result<Prepared> {
        let report = self.validate()?;
        if !report.passed() {
            let issues: Vec<String> = report.issues.iter().map(|i| i.to_string()).collect();
            return Err(Error::ValidationFailed(issues.join("; ")));
        }
        let set = self.constraint_set()?;
        let world = to_sphere_world(&set)?;
        let closed = ClosedLoop::new(self.model()?, &set, world.clone(), &self.target, self.params, self.mode)?;
        Ok(Prepared { set, world, closed })
    }
}

/// Validated constraint set, sphere world and closed loop of a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub set: ConstraintSet,
    pub world: SphereWorld,
    pub closed: ClosedLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub u: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    pub min_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SafetyViolation {
    pub t: f64,
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub converged: bool,
    pub t_converge: Option<f64>,
    pub final_time: f64,
    pub final_distance: f64,
    pub min_margin_overall: f64,
    pub max_control_norm: f64,
    pub steps: usize,
    pub safety_violation: Option<SafetyViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub summary: Summary,
}

impl Trajectory {
    pub fn succeeded(&self) -> bool {
        self.summary.converged && self.summary.safety_violation.is_none()
    }
}

fn normalized(y: &DVector<f64>) -> Result<UnitVector> {
    UnitVector::normalize(y.clone())
}

/// RK4 increment before renormalization. Stage states are projected back to
/// the sphere to evaluate the controller, so the field is `Π(ŷ)u(ŷ)` with
/// `ŷ = y/‖y‖`. `k1` may be supplied when the control at `x` is already known.
pub fn rk4_unnormalized(
    closed: &ClosedLoop,
    x: &UnitVector,
    dt: f64,
    k1: Option<DVector<f64>>,
) -> Result<DVector<f64>> {
    let f = |y: &DVector<f64>| closed.velocity(&normalized(y)?);
    let x0 = x.coords();
    let k1 = match k1 {
        Some(k) => k,
        None => closed.velocity(x)?,
    };
    let k2 = f(&(x0 + &k1 * (dt / 2.0)))?;
    let k3 = f(&(x0 + &k2 * (dt / 2.0)))?;
    let k4 = f(&(x0 + &k3 * dt))?;
    Ok(x0 + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}

/// One RK4 step followed by renormalization. Fails with
/// [`Error::OutsideDomain`] when the new state violates a constraint by more
/// than [`SAFETY_TOLERANCE`].
pub fn step(closed: &ClosedLoop, set: &ConstraintSet, x: &UnitVector, dt: f64) -> Result<UnitVector> {
    step_with(closed, set, x, dt, None)
}

fn step_with(
    closed: &ClosedLoop,
    set: &ConstraintSet,
    x: &UnitVector,
    dt: f64,
    k1: Option<DVector<f64>>,
) -> Result<UnitVector> {
    let next = normalized(&rk4_unnormalized(closed, x, dt, k1)?)?;
    let min_margin = sphere_margin(set, &next)?.min();
    if min_margin < -SAFETY_TOLERANCE {
        return Err(Error::OutsideDomain { min_margin });
    }
    Ok(next)
}

fn sample(t: f64, x: &UnitVector, eval: &ControlEval, min_margin: f64) -> Sample {
    Sample {
        t,
        x: x.coords().iter().copied().collect(),
        xi: eval.xi.coords().iter().copied().collect(),
        u: eval.u.iter().copied().collect(),
        phi: eval.phi,
        min_margin,
    }
}

/// Observer called at every integration step with `(index, t, x, eval)`.
type StepObserver<'a> = dyn FnMut(usize, f64, &UnitVector, &ControlEval) + 'a;

fn run(scenario: &Scenario, prepared: &Prepared, observer: &mut StepObserver<'_>) -> Result<Trajectory> {
    let Prepared { set, closed, .. } = prepared;
    let model = closed.model();
    let total = scenario.total_steps();
    let mut x = scenario.start.clone();
    let mut samples = Vec::new();
    let mut min_margin_overall = f64::INFINITY;
    let mut max_control_norm: f64 = 0.0;
    let mut streak = 0usize;
    let mut t_converge = None;
    let mut violation = None;
    let mut i = 0usize;
    loop {
        let t = i as f64 * scenario.dt;
        let margin = sphere_margin(set, &x)?.min();
        min_margin_overall = min_margin_overall.min(margin);
        let eval = closed.evaluate(&x)?;
        max_control_norm = max_control_norm.max(eval.u.norm());
        observer(i, t, &x, &eval);

        let distance = geodesic_distance(&x, &scenario.target)?;
        if distance < scenario.convergence_tol {
            if streak == 0 {
                t_converge = Some(t);
            }
            streak += 1;
        } else {
            streak = 0;
            t_converge = None;
        }
        let converged = streak >= CONVERGENCE_STREAK;
        let finished = converged || i >= total;
        let next = if finished {
            None
        } else {
            let k1 = model.apply(&x, &eval.u);
            match step_with(closed, set, &x, scenario.dt, Some(k1)) {
                Ok(next) => Some(next),
                Err(Error::OutsideDomain { min_margin }) => {
                    violation = Some(SafetyViolation { t: t + scenario.dt, min_margin });
                    min_margin_overall = min_margin_overall.min(min_margin);
                    None
                }
                Err(e) => return Err(e),
            }
        };
        if i.is_multiple_of(scenario.record_stride) || next.is_none() {
            samples.push(sample(t, &x, &eval, margin));
        }
        match next {
            Some(n) => {
                x = n;
                i += 1;
            }
            None => {
                let summary = Summary {
                    converged,
                    t_converge: if converged { t_converge } else { None },
                    final_time: t,
                    final_distance: distance,
                    min_margin_overall,
                    max_control_norm,
                    steps: i,
                    safety_violation: violation,
                };
                return Ok(Trajectory { samples, summary });
            }
        }
    }
}

/// Integrates the scenario until convergence (sustained for
/// [`CONVERGENCE_STREAK`] steps) or `t_end`.
pub fn simulate(scenario: &Scenario) -> Result<Trajectory> {
    let prepared = scenario.prepare()?;
    run(scenario, &prepared, &mut |_, _, _, _| {})
}

/// Same as [`simulate`] but also hands every step to `observer`.
pub fn simulate_observed(
    scenario: &Scenario,
    observer: &mut dyn FnMut(usize, f64, &UnitVector, &ControlEval),
) -> Result<Trajectory> {
    let prepared = scenario.prepare()?;
    run(scenario, &prepared, observer)
}

/// Integrates `ξ̇ = κ̃(ξ, ξd)` directly alongside the sphere trajectory and
/// returns `sup_t ‖ψ(x(t)) - ξ(t)‖` over the steps of the sphere run.
pub fn dual_consistency_check(scenario: &Scenario) -> Result<f64> {
    dual_consistency_over(scenario, None)
}

/// [`dual_consistency_check`] truncated to at most `max_steps` steps.
pub fn dual_consistency_over(scenario: &Scenario, max_steps: Option<usize>) -> Result<f64> {
    let prepared = scenario.prepare()?;
    let mut projected: Vec<DVector<f64>> = Vec::new();
    run(scenario, &prepared, &mut |i, _, _, eval| {
        if max_steps.is_none_or(|m| i <= m) {
            projected.push(eval.xi.coords().clone());
        }
    })?;

    let closed = &prepared.closed;
    let dt = scenario.dt;
    let field = |xi: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(closed.virtual_input(&EuclideanPoint::new(xi.clone())?)?.0)
    };
    let mut xi = closed.chart().project(&scenario.start)?.into_inner();
    let mut worst: f64 = 0.0;
    for (i, target) in projected.iter().enumerate() {
        if i > 0 {
            let k1 = field(&xi)?;
            let k2 = field(&(&xi + &k1 * (dt / 2.0)))?;
            let k3 = field(&(&xi + &k2 * (dt / 2.0)))?;
            let k4 = field(&(&xi + &k3 * dt))?;
            xi += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
        }
        worst = worst.max((&xi - target).norm());
    }
    Ok(worst)
}

/// Deterministic quasi-uniform points on S^n.
///
/// n = 1 uses evenly spaced angles, n = 2 a Fibonacci lattice, higher n an
/// R_d low-discrepancy sequence in the unit ball projected radially.
pub fn lattice_points(n: usize, count: usize) -> Vec<UnitVector> {
    let dim = n + 1;
    match n {
        1 => (0..count)
            .map(|j| {
                let a = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / count as f64;
                UnitVector::normalize_slice(&[a.cos(), a.sin()]).expect("unit circle point")
            })
            .collect(),
        2 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - (2.0 * j as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * j as f64;
                    UnitVector::normalize_slice(&[r * a.cos(), r * a.sin(), z]).expect("lattice point")
                })
                .collect()
        }
        _ => {
            // Generalized golden ratio: the root of g^(d+1) = g + 1.
            let mut g = 2.0f64;
            for _ in 0..64 {
                g = (1.0 + g).powf(1.0 / (dim as f64 + 1.0));
            }
            let alpha: Vec<f64> = (1..=dim).map(|i| (1.0 / g).powi(i as i32).fract()).collect();
            let mut out = Vec::with_capacity(count);
            let mut j = 0u64;
            while out.len() < count {
                j += 1;
                let p: Vec<f64> = alpha.iter().map(|a| 2.0 * (0.5 + a * j as f64).fract() - 1.0).collect();
                let r2: f64 = p.iter().map(|c| c * c).sum();
                if (1e-2..=1.0).contains(&r2) {
                    out.push(UnitVector::normalize_slice(&p).expect("lattice point"));
                }
            }
            out
        }
    }
}

/// `count` starts in the free space: the scenario's own start followed by
/// evenly thinned lattice points that satisfy every constraint.
pub fn basin_starts(scenario: &Scenario, count: usize) -> Result<Vec<UnitVector>> {
    let set = scenario.constraint_set()?;
    let mut starts = vec![scenario.start.clone()];
    if count <= 1 {
        starts.truncate(count);
        return Ok(starts);
    }
    let wanted = count - 1;
    let mut lattice_size = wanted;
    loop {
        let free: Vec<UnitVector> = lattice_points(scenario.n, lattice_size)
            .into_iter()
            .filter(|x| set.contains(x).unwrap_or(false))
            .collect();
        if free.len() >= wanted {
            let stride = free.len() as f64 / wanted as f64;
            starts.extend((0..wanted).map(|j| free[(j as f64 * stride) as usize].clone()));
            return Ok(starts);
        }
        if lattice_size > 1000 * count + 10_000 {
            return Err(Error::InvalidScenario("free space too small to place basin starts".into()));
        }
        let ratio = wanted as f64 / free.len().max(1) as f64;
        lattice_size = ((lattice_size as f64 * ratio * 1.05).ceil() as usize).max(lattice_size + 1);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinRun {
    pub index: usize,
    pub start: Vec<f64>,
    pub converged: bool,
    pub safety_violation: bool,
    pub final_distance: f64,
    pub t_converge: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinReport {
    pub starts: usize,
    pub converged: usize,
    pub violations: usize,
    pub converged_fraction: f64,
    pub violation_fraction: f64,
    pub non_converged: Vec<BasinRun>,
}

/// Runs the scenario from `count` deterministic starts in the free space.
/// Runs are independent; results are ordered by start index.
pub fn basin(scenario: &Scenario, count: usize) -> Result<BasinReport> {
    scenario.prepare()?;
    let starts = basin_starts(scenario, count)?;
    let runs: Vec<BasinRun> = starts
        .par_iter()
        .enumerate()
        .map(|(index, start)| {
            let start_vec = start.coords().iter().copied().collect();
            match simulate(&scenario.with_start(start.clone())) {
                Ok(traj) => BasinRun {
                    index,
                    start: start_vec,
                    converged: traj.summary.converged,
                    safety_violation: traj.summary.safety_violation.is_some()
                        || traj.summary.min_margin_overall < -REPORT_TOLERANCE,
                    final_distance: traj.summary.final_distance,
                    t_converge: traj.summary.t_converge,
                    error: None,
                },
                Err(e) => BasinRun {
                    index,
                    start: start_vec,
                    converged: false,
                    safety_violation: false,
                    final_distance: f64::NAN,
                    t_converge: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let total = runs.len();
    let converged = runs.iter().filter(|r| r.converged).count();
    let violations = runs.iter().filter(|r| r.safety_violation).count();
    let frac = |k: usize| if total == 0 { 0.0 } else { k as f64 / total as f64 };
    Ok(BasinReport {
        starts: total,
        converged,
        violations,
        converged_fraction: frac(converged),
        violation_fraction: frac(violations),
        non_converged: runs.into_iter().filter(|r| !r.converged).collect(),
    })
}
