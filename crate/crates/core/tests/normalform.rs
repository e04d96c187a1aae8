//! Normal-form data, identities and their cross-module consistency.

use sntbif_core::continuation::{mlv_interior_fold_seed, tc_curve_mlv};
use sntbif_core::equilibria::make_equilibrium;
use sntbif_core::models::{MlvParams, Model, St2Params};
use sntbif_core::normalform::{
    conditions_residual, cusp_discriminant, cusp_map, cusp_map_jacobian_det, dbt_map, dbt_surfaces, equilibria_on_curve_residual,
    first_lyapunov, gamma_curves, min2_sn_curve, sn_residual_slope_along_s, st1_nondegeneracy, st1_point, st2_point,
    verify_st1_centre_manifold, verify_st1_centre_manifold_with,
};

fn saddle() -> MlvParams {
    MlvParams::saddle_case(0.0, 0.0)
}

fn elliptic() -> MlvParams {
    MlvParams::elliptic_case(0.0, 0.0)
}

#[test]
fn st1_point_lies_on_tc_and_interior_fold() {
    for p in [saddle(), elliptic()] {
        let d = st1_point(&p).unwrap();
        let tc = tc_curve_mlv(&p, (d.x1_star - 1.0, d.x1_star + 1.0)).unwrap();
        // TC in closed form: e = −x1(b1 + a11 x1), b2 = −a21 x1
        let x = d.x1_star;
        assert!((-(x * (p.b1 + p.a11 * x)) - d.e_star).abs() < 1e-8);
        assert!((-p.a21 * x - d.b2_star).abs() < 1e-8);
        assert!(tc.points.iter().any(|q| (q.params[0] - d.e_star).hypot(q.params[1] - d.b2_star) < 1e-1));
        let fold = mlv_interior_fold_seed(&p, d.b2_star).unwrap();
        let Model::Mlv(q) = fold.model else { unreachable!() };
        assert!((q.e - d.e_star).abs() < 1e-8, "{} vs {}", q.e, d.e_star);
        assert!((fold.state[0] - d.x1_star).abs() < 1e-8 && fold.state[1].abs() < 1e-8);
    }
}

#[test]
fn conditions_hold_and_perturbation_is_linear() {
    for p in [saddle(), elliptic()] {
        let d = st2_point(&p).unwrap();
        let (r1, r2) = conditions_residual(d.k1, d.k2, d.k3, d.eps);
        assert!(r1.abs() < 1e-12 && r2.abs() < 1e-12);
        let (_, r2p) = conditions_residual(d.k1, d.k2, d.k3 + 1e-3, d.eps);
        assert!((r2p - 3.0 * d.k1 * 1e-3).abs() < 1e-14);
        let eq = equilibria_on_curve_residual(d.k1, d.k2, d.k3, d.eps).unwrap();
        assert!(eq.max_abs_coeff() < 1e-12);
    }
}

#[test]
fn cusp_map_examples() {
    let (mu, nu) = cusp_map(0.0, 3.0);
    assert!((mu - 2.0).abs() < 1e-15 && (nu + 3.0).abs() < 1e-15);
    assert!(cusp_discriminant(mu, nu).abs() < 1e-12);
    assert!((cusp_map_jacobian_det(1.0, 2.0) - 1.0 / 3.0).abs() < 1e-12);
    for b in [-2.0, -0.5, 0.3, 1.7] {
        assert!((cusp_map_jacobian_det(b * b / 4.0, b) - b * b / 12.0).abs() < 1e-12);
        assert!(cusp_map_jacobian_det(0.0, b).abs() < 1e-12);
        // both preimage components of the fold set land on the discriminant
        for a in [b * b / 4.0, 0.0] {
            let (mu, nu) = cusp_map(a, b);
            assert!(cusp_discriminant(mu, nu).abs() < 1e-12, "a = {a}, b = {b}");
        }
    }
}

#[test]
fn scalar_nondegeneracy_values() {
    let n = st1_nondegeneracy(2.0).unwrap();
    assert_eq!(n.fold, (-1.0, -2.0));
    assert_eq!(n.tc, (0.0, 1.0, 4.0));
    assert!(n.fd_discrepancy < 1e-6);
}

#[test]
fn planar_fold_curve_examples() {
    let (a, x) = min2_sn_curve(0.0, 1.0, 0.2, Some(1.5)).unwrap();
    assert_eq!(a, 0.0);
    assert_eq!(x, Some(0.0));
    assert!(min2_sn_curve(10.0, 1.0, 0.2, None).is_err());
}

#[test]
fn dbt_embedding_examples() {
    let d = st2_point(&saddle()).unwrap();
    let o = dbt_map(0.0, 0.0, d.eps, d.k1, d.k2).unwrap();
    assert_eq!((o.mu1, o.mu2, o.nu), (0.0, 0.0, 0.0));
    let h = 1e-6;
    let dmu2 = (dbt_map(h, 0.0, d.eps, d.k1, d.k2).unwrap().mu2 - dbt_map(-h, 0.0, d.eps, d.k1, d.k2).unwrap().mu2) / (2.0 * h);
    assert!((dmu2 - 1.0).abs() < 1e-8);
    let ((s1, s2), (t1, t2)) = gamma_curves(0.0, d.eps, d.k1, d.k2).unwrap();
    assert_eq!((s1, s2, t1, t2), (0.0, 0.0, 0.0, 0.0));
    for nu in [-0.3, 0.1, 0.4] {
        let (sn, tc) = gamma_curves(nu, d.eps, d.k1, d.k2).unwrap();
        for (m1, m2) in [sn, tc] {
            let (rs, rsn) = dbt_surfaces(m1, m2, nu, d.eps, d.k1, d.k2).unwrap();
            assert!(rs.abs() < 1e-10 && rsn.abs() < 1e-10);
        }
        let slope = sn_residual_slope_along_s(tc.0, tc.1, nu, d.eps, d.k1, d.k2, 1e-4).unwrap();
        assert!(slope * 1e-4 < 1e-6, "tangency slope {slope}");
    }
}

#[test]
fn centre_manifold_residual_and_reduced_dynamics() {
    for p in [saddle(), elliptic()] {
        let cm = verify_st1_centre_manifold(&p).unwrap();
        assert!(cm.residual.max_abs_coeff_upto(2) < 1e-12);
        // ż2 linear part: (z4 + a21 z3) z2
        assert!((cm.reduced.coeff(&[0, 1, 0, 1]) - 1.0).abs() < 1e-12);
        assert!((cm.reduced.coeff(&[0, 1, 1, 0]) - p.a21).abs() < 1e-12);
    }
}

#[test]
fn centre_manifold_perturbation_shows_in_z2_squared() {
    let p = saddle();
    let d = st1_point(&p).unwrap();
    let cm = verify_st1_centre_manifold_with(&p, 1e-3).unwrap();
    let got = cm.residual.coeff(&[0, 2, 0, 0]).abs();
    let want = 1e-3 * (p.b1 * p.a12 * p.a21 / d.d2).abs();
    assert!((got - want).abs() < 1e-2 * want, "z2² coefficient {got} vs {want}");
}

#[test]
fn lyapunov_coefficient_examples() {
    let r10 = 10f64.sqrt();
    let m = Model::St2Min(St2Params::new(-1.0, 0.0, r10 / 2.0, 8.0 / r10, r10 / 15.0, 1.0));
    let o = make_equilibrium(&m, [0.0, 0.0], 1, 1e-9);
    let l1 = first_lyapunov(&m, &o).unwrap();
    assert!(l1 > 0.0, "{l1}");
    // off the Hopf line it is rejected
    let m = Model::St2Min(St2Params::new(-1.0, 0.1, r10 / 2.0, 8.0 / r10, r10 / 15.0, 1.0));
    assert!(first_lyapunov(&m, &make_equilibrium(&m, [0.0, 0.0], 1, 1e-9)).is_err());
}
