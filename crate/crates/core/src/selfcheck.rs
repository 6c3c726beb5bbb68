//! Built-in numerical suites run by `conic-nav selfcheck`.
//!
//! Each suite compares an implementation path against an independent route
//! (finite differences, a closed form, direct projection) on seeded random
//! samples and reports the worst error against a fixed tolerance.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::controller::{pendulum_pinv_closed_form, sigma_pinv, SphericalPendulum};
use crate::error::Result;
use crate::navigation::{grad_phi, phi, NavParams};
use crate::sphere::{renormalize, UnitVector};
use crate::stereographic::{chordal_norm_sq, jacobian, project, unproject, Chart, EuclideanPoint};
use crate::world::{euclidean_margin, to_sphere_world, validate, ConicConstraint, ConstraintSet};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub n: usize,
    pub samples: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheckReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

/// Options for [`run`].
#[derive(Debug, Clone)]
pub struct SelfCheckOptions {
    pub dims: Vec<usize>,
    pub seed: u64,
    pub samples: usize,
    /// Adds a 1e-6 offset to the projection in the round-trip suite. Used to
    /// confirm that the suites can fail.
    pub perturb: bool,
}

impl Default for SelfCheckOptions {
    fn default() -> Self {
        Self { dims: vec![1, 2, 3, 5], seed: 0, samples: 2000, perturb: false }
    }
}

fn suite(name: &str, n: usize, samples: usize, worst: f64, tolerance: f64) -> SuiteResult {
    SuiteResult {
        name: name.into(),
        n,
        samples,
        worst,
        tolerance,
        passed: worst.is_finite() && worst <= tolerance,
    }
}

/// Uniform point on S^(dim-1). Panics if `dim < 2`.
pub fn random_unit(rng: &mut impl Rng, dim: usize) -> UnitVector {
    assert!(dim >= 2, "a unit vector needs at least two coordinates");
    loop {
        let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        if let Ok(x) = UnitVector::normalize(v) {
            return x;
        }
    }
}

/// Random point of S^n with `x_(n+1) <= max_last`.
pub fn random_unit_below(rng: &mut impl Rng, dim: usize, max_last: f64) -> UnitVector {
    loop {
        let x = random_unit(rng, dim);
        if x.last() <= max_last {
            return x;
        }
    }
}

/// Random unit vector orthogonal to `a`.
pub fn random_orthogonal(rng: &mut impl Rng, a: &UnitVector) -> UnitVector {
    loop {
        let v: DVector<f64> = DVector::from_fn(a.ambient_dim(), |_, _| StandardNormal.sample(rng));
        let t = &v - a.coords() * a.coords().dot(&v);
        if t.norm() > 1e-3 {
            return UnitVector::normalize(t).expect("non-zero tangent");
        }
    }
}

/// A random constraint set of `count` cones satisfying pairwise separation
/// with some slack. Axis 0 is random, so alignment is exercised too.
pub fn random_constraint_set(rng: &mut impl Rng, n: usize, count: usize) -> ConstraintSet {
    let dim = n + 1;
    'outer: loop {
        let mut cones: Vec<ConicConstraint> = Vec::with_capacity(count);
        let theta0 = rng.random_range(0.2..0.6);
        cones.push(ConicConstraint::new(random_unit(rng, dim), theta0).expect("valid angle"));
        let mut attempts = 0;
        while cones.len() < count {
            attempts += 1;
            if attempts > 2000 {
                continue 'outer;
            }
            let axis = random_unit(rng, dim);
            let theta = rng.random_range(0.05..0.3);
            let separated = cones.iter().all(|c| {
                let inner = c.axis().coords().dot(axis.coords());
                (c.half_angle() + theta).cos() - inner > 0.02
            });
            if separated {
                cones.push(ConicConstraint::new(axis, theta).expect("valid angle"));
            }
        }
        return ConstraintSet::new(cones).expect("consistent dimensions");
    }
}

/// Round trip of the chart in both directions.
fn round_trip(rng: &mut ChaCha8Rng, n: usize, samples: usize, perturb: bool) -> Result<SuiteResult> {
    let offset = if perturb { 1e-6 } else { 0.0 };
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let xi = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0) * 10f64.powf(rng.random_range(-2.0..2.0)));
        let p = EuclideanPoint::new(xi.clone())?;
        let back = project(&unproject(&p))?.into_inner().add_scalar(offset);
        worst = worst.max((back - &xi).norm() / (1.0 + xi.norm()));

        let x = random_unit_below(rng, n + 1, 0.9);
        let back = unproject(&project(&x)?);
        worst = worst.max((back.coords() - x.coords()).norm());
    }
    Ok(suite("chart round trip", n, samples, worst, 1e-10))
}

/// Closed-form chordal distance and the norm identity against direct
/// projection.
fn chart_identities(rng: &mut ChaCha8Rng, n: usize, samples: usize) -> Result<Vec<SuiteResult>> {
    let mut chordal: f64 = 0.0;
    let mut norm: f64 = 0.0;
    for _ in 0..samples {
        let x1 = random_unit_below(rng, n + 1, 0.9);
        let x2 = random_unit_below(rng, n + 1, 0.9);
        let p1 = project(&x1)?;
        let p2 = project(&x2)?;
        let direct = (p1.coords() - p2.coords()).norm_squared();
        let closed = chordal_norm_sq(&x1, &x2)?;
        chordal = chordal.max((direct - closed).abs() / direct.max(f64::MIN_POSITIVE));
        let s = x1.last();
        let expected = (1.0 + s) / (1.0 - s);
        let got = p1.coords().norm_squared();
        // Near the south pole `1 + s` is tiny and the input's own distance
        // from the sphere, `‖x‖² - 1`, dominates; that part is excused.
        // `(s - 1)(s + 1)` keeps the defect accurate there.
        let head = x1.coords().rows(0, n).norm_squared();
        let defect = (head + (s - 1.0) * (s + 1.0)).abs() / (1.0 - s).powi(2);
        norm = norm.max(((got - expected).abs() - defect).max(0.0) / expected);
    }
    Ok(vec![
        suite("chordal distance identity", n, samples, chordal, 1e-10),
        suite("chart norm identity", n, samples, norm, 1e-10),
    ])
}

/// Jacobian against tangent-space central differences, and its kernel.
fn jacobian_checks(rng: &mut ChaCha8Rng, n: usize, samples: usize) -> Result<Vec<SuiteResult>> {
    let h = 1e-6;
    let mut fd_worst: f64 = 0.0;
    let mut kernel_worst: f64 = 0.0;
    for _ in 0..samples {
        let x = random_unit_below(rng, n + 1, 0.9);
        let jac = jacobian(&x)?;
        let t = random_orthogonal(rng, &x).into_inner();
        let plus = project(&renormalize(&(x.coords() + &t * h))?)?;
        let minus = project(&renormalize(&(x.coords() - &t * h))?)?;
        let fd = (plus.coords() - minus.coords()) / (2.0 * h);
        let analytic = &jac * &t;
        fd_worst = fd_worst.max((&fd - &analytic).norm() / analytic.norm().max(1.0));
        let mut chord = x.coords().clone();
        chord[n] -= 1.0;
        kernel_worst = kernel_worst.max((&jac * chord).norm());
    }
    Ok(vec![
        suite("jacobian finite differences", n, samples, fd_worst, 1e-6),
        suite("jacobian kernel", n, samples, kernel_worst, 1e-10),
    ])
}

/// Cone boundaries map onto the sphere-world boundaries.
fn boundary_mapping(rng: &mut ChaCha8Rng, n: usize, samples: usize) -> Result<SuiteResult> {
    let set = random_constraint_set(rng, n, if n == 1 { 3 } else { 4 });
    let world = to_sphere_world(&set)?;
    let chart = set.chart();
    let mut worst: f64 = 0.0;
    let per_cone = (samples / set.len()).max(1);
    for (i, cone) in set.constraints().iter().enumerate() {
        for _ in 0..per_cone {
            let t = random_orthogonal(rng, cone.axis());
            let theta = cone.half_angle();
            let x = UnitVector::normalize(cone.axis().coords() * theta.cos() + t.coords() * theta.sin())?;
            let m = euclidean_margin(&world, &chart.project(&x)?);
            worst = worst.max(m.values[i].abs());
        }
    }
    Ok(suite("cone boundary to ball boundary", n, per_cone * set.len(), worst, 1e-9))
}

/// Navigation gradient against central differences of `φ`.
fn navigation_gradient(rng: &mut ChaCha8Rng, n: usize, samples: usize) -> Result<SuiteResult> {
    let set = random_constraint_set(rng, n, if n == 1 { 3 } else { 4 });
    let world = to_sphere_world(&set)?;
    let rho = world.workspace_radius();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let free_point = |rng: &mut ChaCha8Rng| loop {
        let p = EuclideanPoint::new(DVector::from_fn(n, |_, _| rng.random_range(-rho..rho))).unwrap();
        if euclidean_margin(&world, &p).min() > 1e-2 {
            return p;
        }
    };
    let target = free_point(rng);
    for k in [3.0, 5.0, 8.0] {
        let params = NavParams::new(1.0, k)?;
        for _ in 0..samples / 3 {
            let p = free_point(rng);
            let g = grad_phi(&world, &p, &target, &params)?;
            let mut fd = DVector::zeros(n);
            for i in 0..n {
                let mut a = p.coords().clone();
                let mut b = p.coords().clone();
                a[i] += h;
                b[i] -= h;
                fd[i] = (phi(&world, &EuclideanPoint::new(a)?, &target, &params)?
                    - phi(&world, &EuclideanPoint::new(b)?, &target, &params)?)
                    / (2.0 * h);
            }
            worst = worst.max((&fd - &g).norm() / (g.norm() + FD_NOISE_FLOOR));
            count += 1;
        }
    }
    Ok(suite("navigation gradient finite differences", n, count, worst, 1e-6))
}

/// Gradient norm below which the comparison becomes absolute. Central
/// differences of `φ ≈ 1` with step 1e-6 carry ~1e-10 of round-off, so the
/// effective absolute tolerance is 1e-9.
pub const FD_NOISE_FLOOR: f64 = 1e-3;

/// Pendulum pseudo-inverse against its closed form, and `ΣΣᵀ = (1-x₃)⁻² I`.
fn pendulum_closed_form(rng: &mut ChaCha8Rng, samples: usize) -> Result<Vec<SuiteResult>> {
    let chart = Chart::identity(3);
    let mut pinv: f64 = 0.0;
    let mut gram: f64 = 0.0;
    for _ in 0..samples {
        let x = random_unit_below(rng, 3, 0.9);
        let numeric = sigma_pinv(&SphericalPendulum, &chart, &x)?;
        let closed = pendulum_pinv_closed_form(&x)?;
        pinv = pinv.max((numeric - closed).amax());
        let s = crate::controller::sigma(&SphericalPendulum, &chart, &x)?;
        let expected = nalgebra::DMatrix::identity(2, 2) / (1.0 - x.last()).powi(2);
        gram = gram.max((&s * s.transpose() - expected).amax());
    }
    Ok(vec![
        suite("pendulum pseudo-inverse closed form", 2, samples, pinv, 1e-8),
        suite("pendulum gram identity", 2, samples, gram, 1e-8),
    ])
}

/// The reference five-cone configuration on S² must validate.
fn reference_validation() -> Result<SuiteResult> {
    use std::f64::consts::PI;
    let e = |k| UnitVector::basis(3, k);
    let axes = [e(2)?, e(0)?, e(0)?.neg(), e(1)?, e(1)?.neg()];
    let set = ConstraintSet::new(
        axes.into_iter()
            .enumerate()
            .map(|(i, a)| ConicConstraint::new(a, PI / (7.0 + i as f64)))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let x0 = UnitVector::normalize_slice(&[-1.0, 0.0, 1.0])?;
    let xd = UnitVector::normalize_slice(&[1.0, 2.0, -2.0])?;
    let report = validate(&set, &x0, &xd);
    let worst = if report.passed() { 0.0 } else { 1.0 };
    Ok(suite("reference configuration validates", 2, 1, worst, 0.0))
}

pub fn run(options: &SelfCheckOptions) -> Result<SelfCheckReport> {
    let mut suites = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let samples = options.samples.max(3);
    for &n in &options.dims {
        suites.push(round_trip(&mut rng, n, samples, options.perturb)?);
        suites.extend(chart_identities(&mut rng, n, samples)?);
        suites.extend(jacobian_checks(&mut rng, n, samples)?);
        suites.push(boundary_mapping(&mut rng, n, samples)?);
        suites.push(navigation_gradient(&mut rng, n, samples.min(600))?);
    }
    suites.extend(pendulum_closed_form(&mut rng, samples)?);
    suites.push(reference_validation()?);
    Ok(SelfCheckReport { seed: options.seed, suites })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suites_pass() {
        let report = run(&SelfCheckOptions { samples: 300, ..Default::default() }).unwrap();
        for s in &report.suites {
            assert!(s.passed, "{s:?}");
        }
    }

    #[test]
    fn perturbation_is_detected() {
        let report = run(&SelfCheckOptions { dims: vec![2], samples: 50, perturb: true, ..Default::default() }).unwrap();
        assert!(!report.passed());
        assert!(!report.suites[0].passed);
    }

    #[test]
    fn circle_only() {
        let report = run(&SelfCheckOptions { dims: vec![1], samples: 200, ..Default::default() }).unwrap();
        assert!(report.passed(), "{:?}", report.suites);
        assert!(report.suites.iter().any(|s| s.n == 1));
    }

    #[test]
    fn random_sets_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [1, 2, 3, 5] {
            let set = random_constraint_set(&mut rng, n, 4.min(n + 2));
            let report = validate(&set, &random_unit(&mut rng, n + 1), &random_unit(&mut rng, n + 1));
            assert!(report.separations.iter().all(|s| s.margin > 0.0));
            assert!(to_sphere_world(&set).is_ok());
        }
    }
}
