//! Fields, symmetries, integration, invariant manifolds, cycles and saddle-node loops.

use sntbif_core::equilibria::{find_equilibria, make_equilibrium, Classification};
use sntbif_core::global::{
    classify_sn_segment, find_connection_with, find_limit_cycle, scan_cycles, splitting, trace_manifold, ConnectionSpec, CycleOpts,
    SaddleSelector, Section, SectionSpec, SnKind, SnOpts, TraceBudget, Which,
};
use sntbif_core::integrate::{integrate, solve, Flow, IntegOpts, TrajStatus};
use sntbif_core::models::{apply_symmetry_scaling, reflect_st2, CuspParams, MlvParams, Model, St2Params};
use sntbif_core::normalform::min2_sn_curve;
use sntbif_core::verify::{amplitude_exponent, hopf_amplitudes, saddle_cycle_side};
use sntbif_core::walk::st2_het_spec;

fn saddle_k() -> (f64, f64, f64, f64) {
    let r10 = 10f64.sqrt();
    (r10 / 2.0, 8.0 / r10, r10 / 15.0, 1.0)
}

fn st2(a: f64, b: f64) -> Model {
    let (k1, k2, k3, eps) = saddle_k();
    Model::St2Min(St2Params::new(a, b, k1, k2, k3, eps))
}

#[test]
fn field_and_jacobian_examples() {
    let m = Model::Mlv(MlvParams::saddle_case(-10.0, -3.0));
    assert_eq!(m.f([0.0, 0.0]), [-10.0, 0.0]);
    let p = MlvParams::saddle_case(-10.0, -3.0);
    for x1 in [0.5, 1.0, 2.0] {
        let j = m.jac([x1, 0.0]);
        assert_eq!((j.a, j.b, j.c, j.d), (p.b1 + 2.0 * p.a11 * x1, p.a12 * x1, 0.0, p.b2 + p.a21 * x1));
    }
    let (k1, ..) = saddle_k();
    let s = st2(-0.3, 0.2);
    assert_eq!(s.f([0.0, 0.0]), [0.0, 0.0]);
    let j = s.jac([0.0, 0.0]);
    assert_eq!((j.a, j.b, j.c, j.d), (0.0, 1.0, -0.3, k1 * 0.2));
    let c = Model::CuspUnf(CuspParams { mu: 0.4, nu: -0.7 });
    assert_eq!(c.jac([0.0, 0.0]).a, -0.7);
}

#[test]
fn scaling_symmetry_examples() {
    let p = MlvParams::saddle_case(-10.0, -3.0);
    let (q, r) = apply_symmetry_scaling(&p, 1.0, 1.0, 1.0).unwrap();
    assert_eq!(q, p);
    assert_eq!((r.x1_factor, r.x2_factor, r.time_factor), (1.0, 1.0, 1.0));
    let (q, r) = apply_symmetry_scaling(&p, 1.0, 1.0, 2.0).unwrap();
    assert_eq!(
        [q.b1, q.b2, q.a11, q.a12, q.a21, q.a22, q.e],
        [p.b1, p.b2, p.a11, p.a12, p.a21, p.a22, p.e].map(|v| 2.0 * v)
    );
    assert_eq!(r.time_factor, 0.5);
    let (q, _) = apply_symmetry_scaling(&p, 2.0, 1.0, 1.0).unwrap();
    assert_eq!((q.a11, q.a21, q.e), (p.a11 / 2.0, p.a21 / 2.0, 2.0 * p.e));
    assert_eq!((q.b1, q.b2, q.a12, q.a22), (p.b1, p.b2, p.a12, p.a22));
    assert!(apply_symmetry_scaling(&p, 0.0, 1.0, 1.0).is_err());
}

#[test]
fn scaling_conjugacy_of_trajectories() {
    let tol = 1e-9;
    let p = MlvParams::saddle_case(-10.0, -3.0);
    let (q, r) = apply_symmetry_scaling(&p, 2.0, 0.5, 3.0).unwrap();
    for x0 in [[1.5, 0.1], [1.2, 0.05]] {
        let a = integrate(&Model::Mlv(p), &x0, (0.0, 0.5), tol).unwrap();
        let b = integrate(&Model::Mlv(q), &r.apply_state(x0), (0.0, 0.5 * r.time_factor), tol).unwrap();
        assert_eq!(a.status, TrajStatus::Completed);
        let (sa, sb) = (r.apply_state(a.last()), b.last());
        let scale = sa[0].abs().max(sa[1].abs()).max(1.0);
        assert!((sa[0] - sb[0]).abs().max((sa[1] - sb[1]).abs()) < 10.0 * tol * scale);
    }
}

#[test]
fn reflection_is_an_equivariant_involution() {
    let m = st2(-0.04, 0.002);
    let (y, mr) = reflect_st2(&[0.3, -0.2], &m).unwrap();
    assert_eq!(y, vec![-0.3, 0.2]);
    let (z, mm) = reflect_st2(&y, &mr).unwrap();
    assert_eq!((z, mm), (vec![0.3, -0.2], m));
    for x in [[0.3, -0.2], [-1.1, 0.7], [0.05, 0.0]] {
        let f = m.f(x);
        assert_eq!(mr.f([-x[0], -x[1]]), [-f[0], -f[1]]);
    }
    let Model::St2Min(q) = mr else { unreachable!() };
    let Model::St2Min(p) = m else { unreachable!() };
    assert_eq!((q.k3, q.k1, q.k2, q.a, q.b), (-p.k3, -p.k1, -p.k2, p.a, -p.b));
    assert!(reflect_st2(&[0.0, 0.0], &Model::Mlv(MlvParams::saddle_case(0.0, 0.0))).is_err());
}

#[test]
fn reflection_conjugacy_of_trajectories() {
    let tol = 1e-9;
    let m = st2(-0.04, 0.002);
    for x0 in [[0.05, 0.0], [0.1, -0.05]] {
        let a = integrate(&m, &x0, (0.0, 10.0), tol).unwrap().last();
        let (y0, mr) = reflect_st2(&x0, &m).unwrap();
        let b = integrate(&mr, &y0, (0.0, 10.0), tol).unwrap().last();
        assert!((a[0] + b[0]).abs().max((a[1] + b[1]).abs()) < 10.0 * tol);
    }
}

#[test]
fn integrator_accuracy_and_order() {
    let tol = 1e-10;
    let tr = solve(|y| [-y[0], 0.0], [2.0, 0.0], 0.0, 1.0, &IntegOpts::new(tol, 1), |_| Flow::Continue);
    assert!((tr.last()[0] - 2.0 * (-1.0f64).exp()).abs() < 10.0 * tol);
    // fixed steps: doubling the step count divides the error by about 2⁵
    let err = |n: usize| {
        let opts = IntegOpts::new(1.0, 1).with_h_max(2.0 / n as f64);
        let tr = solve(|y| [-y[0], 0.0], [1.0, 0.0], 0.0, 2.0, &opts, |_| Flow::Continue);
        ((tr.t.len() - 1) as f64, (tr.last()[0] - (-2.0f64).exp()).abs())
    };
    let (n1, e1) = err(8);
    let (n2, e2) = err(16);
    let order = (e1 / e2).ln() / (n2 / n1).ln();
    assert!(order >= 4.5, "observed order {order}");
}

#[test]
fn axis_trajectories_stay_on_axis() {
    for p in [MlvParams::saddle_case(-10.0, -3.0), MlvParams::elliptic_case(5.0, 1.0)] {
        for x0 in [0.3, 1.5, 3.0] {
            let tr = integrate(&Model::Mlv(p), &[x0, 0.0], (0.0, 100.0), 1e-10).unwrap();
            assert!(tr.y.iter().all(|y| y[1].abs() < 1e-12));
        }
    }
}

#[test]
fn stable_focus_side_of_hopf_spirals_inward() {
    let tr = integrate(&st2(-1.0, -0.05), &[0.01, 0.0], (0.0, 60.0), 1e-11).unwrap();
    let r = |y: &[f64; 2]| y[0].hypot(y[1]);
    assert!(r(&tr.last()) < 0.5 * r(&tr.y[0]));
}

fn axis_link() -> ConnectionSpec {
    ConnectionSpec {
        source: SaddleSelector::AxisLeft,
        target: SaddleSelector::AxisRight,
        unstable_side: 1.0,
        stable_side: -1.0,
        section: SectionSpec::Bisector,
        delta: 1e-6,
        budget: TraceBudget::default(),
    }
}

#[test]
fn axis_connection_has_zero_splitting() {
    for e in [-10.0, -10.5, -11.0] {
        let m = Model::Mlv(MlvParams::saddle_case(e, -3.0));
        let r = splitting(&m, &axis_link()).unwrap();
        assert_eq!(r.splitting, 0.0, "e = {e}");
    }
}

#[test]
fn manifold_trace_converges_in_delta() {
    let m = st2(-0.04, 0.002);
    let spec = st2_het_spec(&m, true).expect("two small saddles");
    let coord = |delta: f64| splitting(&m, &ConnectionSpec { delta, ..spec }).unwrap().coord_unstable;
    let (c1, c2, c3) = (coord(4e-6), coord(2e-6), coord(1e-6));
    assert!((c1 - c2).abs() < 10.0 * 4e-6, "{c1} {c2}");
    assert!((c2 - c3).abs() < 10.0 * 2e-6, "{c2} {c3}");
}

#[test]
fn stable_manifold_of_origin_leaves_along_eigenvector() {
    let a: f64 = 0.09;
    let m = st2(a, 0.0);
    let o = make_equilibrium(&m, [0.0, 0.0], 1, 1e-9);
    assert_eq!(o.classification, Classification::Saddle);
    let t = trace_manifold(&m, &o, Which::Stable, 1.0, 1e-6, &TraceBudget { t_max: 1.0, ..TraceBudget::default() }, None).unwrap();
    let v = [1.0 / (1.0 + a).sqrt(), -a.sqrt() / (1.0 + a).sqrt()];
    let cross = (t.direction[0] * v[1] - t.direction[1] * v[0]).abs();
    assert!(cross < 1e-12, "direction {:?}", t.direction);
    // backward in time the trace moves away along the same line
    let y = t.trajectory.y[1];
    let d = [y[0], y[1]];
    let n = d[0].hypot(d[1]);
    assert!((d[0] * v[1] - d[1] * v[0]).abs() / n < 1e-3);
}

fn cycle_on_ray(m: &Model, reach: f64) -> sntbif_core::global::CycleRecord {
    cycle_in(m, (1e-4 * reach, 0.95 * reach))
}

fn cycle_in(m: &Model, range: (f64, f64)) -> sntbif_core::global::CycleRecord {
    let sec = Section::ray([0.0, 0.0], [1.0, 0.0]).unwrap();
    scan_cycles(m, &sec, range, 60, &CycleOpts { t_max: 2e4, ..CycleOpts::default() })
        .unwrap()
        .into_iter()
        .min_by(|x, y| x.amplitude.total_cmp(&y.amplitude))
        .expect("a cycle")
}

fn right_saddle(m: &Model) -> f64 {
    find_equilibria(m).unwrap().iter().filter(|e| e.state[0] > 1e-9 && e.state[0] < 1.0).map(|e| e.state[0]).fold(f64::INFINITY, f64::min)
}

#[test]
fn cycle_is_refound_from_perturbed_guess() {
    let a = -0.04;
    let side = saddle_cycle_side(a).unwrap();
    let m = st2(a, side * 8e-4);
    let c = cycle_on_ray(&m, right_saddle(&m));
    let again = find_limit_cycle(&m, Some(c.section), [c.point[0] * 1.02, c.point[1]], &CycleOpts::default()).unwrap();
    assert!((again.period - c.period).abs() < 1e-6, "{} vs {}", again.period, c.period);
}

/// Outermost cycle crossing the positive x-axis inside the right saddle.
fn outer_cycle(m: &Model) -> sntbif_core::global::CycleRecord {
    let sec = Section::ray([0.0, 0.0], [1.0, 0.0]).unwrap();
    scan_cycles(m, &sec, (1e-3, 0.99 * right_saddle(m)), 200, &CycleOpts { t_max: 2e4, ..CycleOpts::default() })
        .unwrap()
        .into_iter()
        .max_by(|x, y| x.amplitude.total_cmp(&y.amplitude))
        .expect("a cycle")
}

#[test]
fn period_grows_towards_heteroclinic() {
    let a = -0.04;
    let side = saddle_cycle_side(a).unwrap();
    let f = |mm: &Model| {
        let sp = st2_het_spec(mm, side < 0.0).expect("saddles");
        splitting(mm, &sp).map(|r| r.splitting)
    };
    let b_het = find_connection_with(&st2(a, 0.0), "b", (side * 1e-5, side * 0.05), 1e-14, f).unwrap().param;
    let near_hb = st2(a, 0.05 * b_het);
    let p0 = cycle_on_ray(&near_hb, right_saddle(&near_hb)).period;
    let mut periods = Vec::new();
    for d in [1e-1, 1e-2, 1e-3, 1e-4] {
        periods.push(outer_cycle(&st2(a, (1.0 - d) * b_het)).period);
    }
    eprintln!("HB-side period {p0}, towards Het {periods:?}");
    // logarithmic divergence: each decade closer adds a comparable increment
    let inc: Vec<f64> = periods.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(periods[0] > p0 && inc.iter().all(|&x| x > 0.0), "{p0} {periods:?}");
    assert!(inc.iter().all(|&x| (x / inc[0] - 1.0).abs() < 0.5), "increments {inc:?}");
}

#[test]
fn hopf_amplitude_exponent_at_unit_distance() {
    let a = -1.0;
    let side = saddle_cycle_side(a).unwrap();
    let bs: Vec<f64> = [1e-4, 2e-4, 4e-4, 8e-4, 1.6e-3].iter().map(|b| side * b).collect();
    let am = hopf_amplitudes(a, &bs).unwrap();
    let k = amplitude_exponent(&am);
    assert!((k - 0.5).abs() < 0.1, "exponent {k}");
}

#[test]
fn saddle_case_folds_classify_sn() {
    let (k1, _, k3, eps) = saddle_k();
    for b in [0.02, 0.05, -0.05] {
        let (a, x) = min2_sn_curve(b, eps, k3, Some(k1)).unwrap();
        let m = st2(a, b);
        let x = x.unwrap();
        let opts = SnOpts::for_scale(0.1);
        let c = classify_sn_segment(&m, [x, 0.0], &opts).unwrap();
        assert_eq!(c.kind, SnKind::Sn, "b = {b}: {c:?}");
        if c.decided && c.margin > 10.0 * opts.r {
            let c4 = classify_sn_segment(&m, [x, 0.0], &SnOpts { t_budget: 4.0 * opts.t_budget, ..opts }).unwrap();
            assert_eq!(c4.kind, c.kind);
        }
    }
}
