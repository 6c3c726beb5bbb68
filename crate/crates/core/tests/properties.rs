//! Cross-module properties on random inputs.

use std::sync::Arc;

use conic_nav::controller::{sigma, ClosedLoop, FullTangent, Mode, SphericalPendulum};
use conic_nav::navigation::{phi, NavParams};
use conic_nav::scenario::{read_csv, write_csv};
use conic_nav::selfcheck::{random_constraint_set, random_unit, random_unit_below};
use conic_nav::simulator::{simulate, DynamicsChoice, Scenario};
use conic_nav::sphere::{rotation_aligning, UnitVector};
use conic_nav::stereographic::EuclideanPoint;
use conic_nav::world::{align, euclidean_margin, to_sphere_world, validate, ConicConstraint, ConstraintSet};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent cone test: inside the open cone iff `aᵀx > cos θ`.
fn in_some_cone(set: &ConstraintSet, x: &UnitVector) -> Option<bool> {
    let mut closest = f64::INFINITY;
    let mut inside = false;
    for c in set.constraints() {
        let m = c.half_angle().cos() - c.axis().coords().dot(x.coords());
        closest = closest.min(m.abs());
        inside |= m < 0.0;
    }
    (closest > 1e-9).then_some(inside)
}

fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let a = random_unit(rng, dim);
    let b = random_unit(rng, dim);
    let c = random_unit(rng, dim);
    let d = random_unit(rng, dim);
    rotation_aligning(&a, &b).unwrap() * rotation_aligning(&c, &d).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn membership_transfers_to_sphere_world(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_constraint_set(&mut rng, n, 3);
        let world = to_sphere_world(&set).unwrap();
        for _ in 0..300 {
            let x = random_unit(&mut rng, n + 1);
            let Some(inside) = in_some_cone(&set, &x) else { continue };
            let Ok(xi) = set.chart().project(&x) else { continue };
            let free = euclidean_margin(&world, &xi).min() >= 0.0;
            prop_assert_eq!(free, !inside);
        }
    }

    #[test]
    fn validation_is_rotation_invariant(seed in any::<u64>(), n in 1usize..5, overlap in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cones = random_constraint_set(&mut rng, n, 3).constraints().to_vec();
        if overlap {
            let a = cones[1].axis().clone();
            cones.push(ConicConstraint::new(a, 0.05).unwrap());
        }
        let set = ConstraintSet::new(cones.clone()).unwrap();
        let x0 = random_unit(&mut rng, n + 1);
        let xd = random_unit(&mut rng, n + 1);
        let before = validate(&set, &x0, &xd).passed();

        let r = random_rotation(&mut rng, n + 1);
        let rotated = ConstraintSet::new(
            cones.iter().map(|c| ConicConstraint::new(c.axis().rotate(&r).unwrap(), c.half_angle()).unwrap()).collect(),
        ).unwrap();
        let after = validate(&rotated, &x0.rotate(&r).unwrap(), &xd.rotate(&r).unwrap()).passed();
        prop_assert_eq!(before, after);

        let aligned = align(&set, &x0, &xd).unwrap();
        prop_assert_eq!(before, validate(&aligned.constraints, &aligned.start, &aligned.target).passed());
        if overlap {
            prop_assert!(!before);
        }
    }

    #[test]
    fn mapped_world_is_disjoint_and_contained(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_constraint_set(&mut rng, n, 4.min(n + 2));
        let world = to_sphere_world(&set).unwrap();
        let rho = world.workspace_radius();
        for (i, a) in world.obstacles().iter().enumerate() {
            prop_assert!(a.center().norm() + a.radius() < rho);
            for b in &world.obstacles()[i + 1..] {
                prop_assert!((a.center() - b.center()).norm() > a.radius() + b.radius());
            }
        }
    }

    #[test]
    fn phi_is_a_unit_range_potential(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_constraint_set(&mut rng, n, 3);
        let world = to_sphere_world(&set).unwrap();
        let params = NavParams::new(1.0, 5.0).unwrap();
        let free = |rng: &mut ChaCha8Rng| loop {
            let x = random_unit_below(rng, n + 1, 0.95);
            if let Some(false) = in_some_cone(&set, &x) {
                return set.chart().project(&x).unwrap();
            }
        };
        let target = free(&mut rng);
        prop_assert_eq!(phi(&world, &target, &target, &params).unwrap(), 0.0);
        for _ in 0..50 {
            let p = free(&mut rng);
            let v = phi(&world, &p, &target, &params).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
        // On the workspace boundary β = 0, so φ = 1.
        let dir = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let edge = EuclideanPoint::new(dir.normalize() * world.workspace_radius()).unwrap();
        prop_assert!((phi(&world, &edge, &target, &params).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lifted_control_linearizes(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_constraint_set(&mut rng, n, 3);
        let world = to_sphere_world(&set).unwrap();
        let target = loop {
            let x = random_unit_below(&mut rng, n + 1, 0.95);
            if let Some(false) = in_some_cone(&set, &x) {
                if validate(&set, &x, &x).passed() {
                    break x;
                }
            }
        };
        let model: Arc<dyn conic_nav::controller::DynamicsModel> = if n == 2 {
            Arc::new(SphericalPendulum)
        } else {
            Arc::new(FullTangent::new(n).unwrap())
        };
        let closed = ClosedLoop::new(model.clone(), &set, world, &target, NavParams::default(), Mode::Multi).unwrap();
        for _ in 0..20 {
            let x = random_unit_below(&mut rng, n + 1, 0.95);
            if in_some_cone(&set, &x) != Some(false) {
                continue;
            }
            let Ok(eval) = closed.evaluate(&x) else { continue };
            let s = sigma(model.as_ref(), set.chart(), &x).unwrap();
            let residual = (&s * &eval.u - &eval.v).norm();
            prop_assert!(residual <= 1e-9 * (1.0 + eval.v.norm()), "residual {}", residual);
            // Ambient velocity stays tangent.
            let xdot = model.apply(&x, &eval.u);
            prop_assert!(xdot.dot(x.coords()).abs() <= 1e-10 * (1.0 + xdot.norm()));
        }
    }
}

fn short_scenario(start: UnitVector, mode: Mode) -> Scenario {
    let e3 = UnitVector::basis(3, 2).unwrap();
    let mut constraints = vec![ConicConstraint::new(e3, 0.45).unwrap()];
    if mode == Mode::Multi {
        constraints.push(ConicConstraint::new(UnitVector::basis(3, 0).unwrap(), 0.39).unwrap());
    }
    Scenario {
        n: 2,
        dynamics: DynamicsChoice::SphericalPendulum,
        constraints,
        start,
        target: UnitVector::normalize_slice(&[1.0, 2.0, -2.0]).unwrap(),
        params: NavParams::default(),
        mode,
        dt: 1e-3,
        t_end: 0.4,
        convergence_tol: 1e-3,
        record_stride: 7,
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 6 {
        let start = random_unit_below(&mut rng, 3, 0.8);
        let mode = if rng.random_bool(0.5) { Mode::Multi } else { Mode::Single };
        let scenario = short_scenario(start, mode);
        if !scenario.validate().unwrap().passed() {
            continue;
        }
        let traj = simulate(&scenario).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &traj).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, traj.samples);
        assert_eq!(back.iter().all(|s| s.phi.is_some()), mode == Mode::Multi);
        checked += 1;
    }
}

#[test]
fn csv_preserves_awkward_values() {
    use conic_nav::simulator::{Sample, Summary, Trajectory};
    let values = [0.1, 1.0 / 3.0, f64::MIN_POSITIVE, 5e-324, -2.5e300, f64::EPSILON, -0.0];
    let samples: Vec<Sample> = values
        .iter()
        .map(|&v| Sample { t: v, x: vec![v, -v], xi: vec![v * 7.0], u: vec![v / 3.0], phi: Some(v), min_margin: v })
        .collect();
    let summary = Summary {
        converged: false,
        t_converge: None,
        final_time: 0.0,
        final_distance: 0.0,
        min_margin_overall: 0.0,
        max_control_norm: 0.0,
        steps: 0,
        safety_violation: None,
    };
    let traj = Trajectory { samples, summary };
    let mut buf = Vec::new();
    write_csv(&mut buf, &traj).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    for (a, b) in back.iter().zip(&traj.samples) {
        assert_eq!(a.t.to_bits(), b.t.to_bits());
        assert_eq!(a.x[1].to_bits(), b.x[1].to_bits());
        assert_eq!(a.u[0].to_bits(), b.u[0].to_bits());
    }
}

#[test]
fn rotating_the_problem_rotates_the_trajectory() {
    let base = short_scenario(UnitVector::normalize_slice(&[-1.0, 0.0, 1.0]).unwrap(), Mode::Multi);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = random_rotation(&mut rng, 3);
    let rot = |x: &UnitVector| x.rotate(&r).unwrap();
    let rotated = Scenario {
        constraints: base
            .constraints
            .iter()
            .map(|c| ConicConstraint::new(rot(c.axis()), c.half_angle()).unwrap())
            .collect(),
        start: rot(&base.start),
        target: rot(&base.target),
        ..base.clone()
    };
    let a = simulate(&base).unwrap();
    let b = simulate(&rotated).unwrap();
    assert_eq!(a.samples.len(), b.samples.len());
    for (sa, sb) in a.samples.iter().zip(&b.samples) {
        let xa = &r * DVector::from_column_slice(&sa.x);
        let xb = DVector::from_column_slice(&sb.x);
        assert!((xa - xb).norm() < 1e-9);
        assert!((sa.min_margin - sb.min_margin).abs() < 1e-9);
        assert!((sa.phi.unwrap() - sb.phi.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn control_stays_below_sampled_cap() {
    use conic_nav::controller::sigma_pinv;
    use conic_nav::navigation::kappa_nav;
    use std::f64::consts::PI;

    let axes = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0]];
    let cones: Vec<ConicConstraint> = axes
        .iter()
        .enumerate()
        .map(|(i, a)| ConicConstraint::new(UnitVector::from_slice(a).unwrap(), PI / (7.0 + i as f64)).unwrap())
        .collect();
    let scenario = Scenario {
        constraints: cones,
        t_end: 20.0,
        ..short_scenario(UnitVector::normalize_slice(&[-1.0, 0.0, 1.0]).unwrap(), Mode::Multi)
    };
    let prepared = scenario.prepare().unwrap();
    let set = &prepared.set;
    let world = &prepared.world;
    let target = set.chart().project(&scenario.target).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);

    let mut pinv_max: f64 = 0.0;
    for _ in 0..20_000 {
        let x = random_unit(&mut rng, 3);
        if in_some_cone(set, &x) != Some(false) {
            continue;
        }
        let p = sigma_pinv(&SphericalPendulum, set.chart(), &x).unwrap();
        pinv_max = pinv_max.max(p.svd(false, false).singular_values.max());
    }
    let rho = world.workspace_radius();
    let mut kappa_max: f64 = 0.0;
    for _ in 0..20_000 {
        let xi = EuclideanPoint::new(DVector::from_fn(2, |_, _| rng.random_range(-rho..rho))).unwrap();
        if euclidean_margin(world, &xi).min() < 0.0 {
            continue;
        }
        kappa_max = kappa_max.max(kappa_nav(world, &xi, &target, &scenario.params).unwrap().norm());
    }
    let cap = pinv_max * kappa_max;
    let traj = simulate(&scenario).unwrap();
    assert!(traj.summary.converged);
    assert!(traj.summary.max_control_norm.is_finite());
    assert!(traj.summary.max_control_norm <= cap, "{} > {cap}", traj.summary.max_control_norm);
}
