//! Randomised properties of models, root solver, polynomial ring and normal-form identities.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sntbif_core::algebra::{solve_poly_real, tp_add, tp_mul, Poly1, TruncMultiPoly};
use sntbif_core::models::{CuspParams, DbtParams, MlvParams, Model, St1Params, St2Params};
use sntbif_core::normalform::{conditions_residual, invariant_manifold_check, st2_point};

fn fd_jacobian_error(m: &Model, x: [f64; 2]) -> f64 {
    let h = 1e-6;
    let j = m.jac(x);
    let jm = [[j.a, j.b], [j.c, j.d]];
    let dim = m.dim();
    let scale = jm.iter().flatten().fold(1.0_f64, |s, v| s.max(v.abs()));
    let mut worst = 0.0_f64;
    for k in 0..dim {
        let mut xp = x;
        let mut xm = x;
        xp[k] += h;
        xm[k] -= h;
        let (fp, fm) = (m.f(xp), m.f(xm));
        for i in 0..dim {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            worst = worst.max((fd - jm[i][k]).abs() / scale);
        }
    }
    worst
}

fn random_models(rng: &mut ChaCha8Rng) -> Vec<Model> {
    let mut u = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    vec![
        Model::Mlv(MlvParams { b1: u(-20.0, 20.0), b2: u(-10.0, 10.0), a11: u(-8.0, 8.0), a12: u(-5.0, 5.0), a21: u(-5.0, 5.0), a22: u(-5.0, 5.0), e: u(-15.0, 15.0) }),
        Model::St1Min(St1Params { a: u(-1.0, 1.0), b: u(-1.0, 1.0), eps: if u(0.0, 1.0) < 0.5 { 1.0 } else { -1.0 } }),
        Model::St2Min(St2Params::new(u(-1.0, 1.0), u(-1.0, 1.0), u(0.2, 2.0), u(0.2, 2.0), u(0.05, 1.0), 1.0)),
        Model::CuspUnf(CuspParams { mu: u(-1.0, 1.0), nu: u(-1.0, 1.0) }),
        Model::DbtTrunc(DbtParams { mu1: u(-1.0, 1.0), mu2: u(-1.0, 1.0), nu: u(-1.0, 1.0), k2: u(0.5, 4.0), eps: 1.0 }),
    ]
}

#[test]
fn jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        for m in random_models(&mut rng) {
            let x = [rng.gen_range(-3.0..3.0), if m.dim() == 2 { rng.gen_range(-3.0..3.0) } else { 0.0 }];
            let e = fd_jacobian_error(&m, x);
            assert!(e < 1e-6, "{m:?} at {x:?}: relative error {e:e}");
        }
    }
}

#[test]
fn harvested_axis_is_exactly_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let m = random_models(&mut rng)[0];
        let x1: f64 = rng.gen_range(-100.0..100.0);
        assert_eq!(m.f([x1, 0.0])[1], 0.0);
    }
}

/// Real roots of p by isolation between the real roots of p′ and bisection.
fn oracle_roots(p: &Poly1) -> Vec<f64> {
    let deg = p.degree().unwrap_or(0);
    if deg == 0 {
        return Vec::new();
    }
    let lead = p.coeffs[deg];
    let bound = 1.0 + p.coeffs[..deg].iter().fold(0.0_f64, |m, c| m.max((c / lead).abs()));
    let mut knots = vec![-bound];
    knots.extend(oracle_roots(&Poly1::new(&p.coeffs[..=deg]).deriv()));
    knots.push(bound);
    let mut out = Vec::new();
    for w in knots.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (p.eval(lo), p.eval(hi));
        if flo == 0.0 {
            out.push(lo);
            continue;
        }
        if flo.signum() == fhi.signum() {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if m == lo || m == hi {
                break;
            }
            if p.eval(m).signum() == flo.signum() {
                lo = m;
            } else {
                hi = m;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

#[test]
fn root_solver_matches_isolation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let deg = rng.gen_range(1..=4);
        let mut c: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-10.0..10.0)).collect();
        if c[deg].abs() < 1e-3 {
            c[deg] = 1.0;
        }
        let p = Poly1::new(&c);
        let got = solve_poly_real(&p, 1e-12).unwrap();
        let want = oracle_roots(&p);
        for r in &want {
            let near = got.iter().map(|(g, _)| (g - r).abs()).fold(f64::INFINITY, f64::min);
            assert!(near < 1e-9 * r.abs().max(1.0), "{c:?}: oracle root {r} missing from {got:?}");
        }
        let odd = got.iter().filter(|(_, m)| m % 2 == 1).count();
        assert_eq!(odd, want.len(), "{c:?}: {got:?} vs {want:?}");
    }
}

fn small_poly() -> impl Strategy<Value = TruncMultiPoly> {
    // integer coefficients keep every ring operation exact
    prop::collection::vec(((0u32..3, 0u32..3, 0u32..3), -4i32..=4), 0..6).prop_map(|terms| {
        let mut p = TruncMultiPoly::zero(3, 6).unwrap();
        for ((i, j, k), c) in terms {
            p = tp_add(&p, &TruncMultiPoly::monomial(3, 6, &[i, j, k], c as f64).unwrap()).unwrap();
        }
        p
    })
}

proptest! {
    #[test]
    fn ring_laws_hold_exactly(p in small_poly(), q in small_poly(), r in small_poly()) {
        prop_assert_eq!(tp_add(&p, &q).unwrap(), tp_add(&q, &p).unwrap());
        prop_assert_eq!(tp_mul(&p, &q).unwrap(), tp_mul(&q, &p).unwrap());
        prop_assert_eq!(
            tp_add(&tp_add(&p, &q).unwrap(), &r).unwrap(),
            tp_add(&p, &tp_add(&q, &r).unwrap()).unwrap()
        );
        prop_assert_eq!(
            tp_mul(&tp_mul(&p, &q).unwrap(), &r).unwrap(),
            tp_mul(&p, &tp_mul(&q, &r).unwrap()).unwrap()
        );
        prop_assert_eq!(
            tp_mul(&p, &tp_add(&q, &r).unwrap()).unwrap(),
            tp_add(&tp_mul(&p, &q).unwrap(), &tp_mul(&p, &r).unwrap()).unwrap()
        );
    }
}

/// A random harvested parameter set passing the double-zero point guards.
fn guarded_set(rng: &mut ChaCha8Rng) -> MlvParams {
    loop {
        let mut u = |lo: f64, hi: f64| rng.gen_range(lo..hi);
        let p = MlvParams { b1: u(-20.0, 20.0), b2: 0.0, a11: u(-8.0, 8.0), a12: u(-5.0, 5.0), a21: u(-5.0, 5.0), a22: u(-5.0, 5.0), e: 0.0 };
        if let Ok(d) = st2_point(&p) {
            // keep the guard quantities away from zero so rounding stays relative
            if [d.gamma, d.d3, d.d4, p.a11, p.a21, p.a22, p.a12 + p.a22].iter().all(|v| v.abs() > 0.05) {
                return p;
            }
        }
    }
}

#[test]
fn conditions_hold_for_random_guarded_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..1000 {
        let p = guarded_set(&mut rng);
        let d = st2_point(&p).unwrap();
        let (r1, r2) = conditions_residual(d.k1, d.k2, d.k3, d.eps);
        assert!(r1.abs() < 1e-12 && r2.abs() < 1e-12, "{p:?}: ({r1:e}, {r2:e})");
    }
}

#[test]
fn invariant_manifold_iff_conditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let d = st2_point(&guarded_set(&mut rng)).unwrap();
        let scale = d.k1.abs().max(d.k2.abs()).max(d.k3.abs()).max(1.0).powi(3);
        let zero = invariant_manifold_check(d.k1, d.k2, d.k3, d.eps).unwrap();
        assert!(zero.max_abs_coeff() < 1e-12 * scale, "satisfying set leaves {:e}", zero.max_abs_coeff());
        let dk = rng.gen_range(1e-3..1e-1) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let k3 = d.k3 + dk;
        let bad = invariant_manifold_check(d.k1, d.k2, k3, d.eps).unwrap();
        let (_, r2) = conditions_residual(d.k1, d.k2, k3, d.eps);
        // only the x⁴ coefficient moves, by −Δk3 = −(3k1k3 − 1)/(3k1)
        let x4 = bad.coeff(&[4, 0, 0]);
        assert!(x4.abs() > 1e-6, "perturbed set has vanishing residual");
        assert!((x4 + r2 / (3.0 * d.k1)).abs() < 1e-10 * scale, "x⁴ coefficient {x4} vs {r2}");
    }
}
