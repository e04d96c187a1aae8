//! Closed-form codimension-two data and mechanical checks of the
//! normal-form identities (invariant manifold, cusp map, DBT embedding,
//! centre-manifold expansion, first Lyapunov coefficient).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{tp_add, tp_compose, tp_diff, tp_mul, tp_sub, TruncMultiPoly};
use crate::equilibria::{Classification, Equilibrium};
use crate::error::{degenerate, usage, Error, Result};
use crate::models::{MlvParams, Model};

/// Thresholds for the exact identities, all relative to the largest input magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolPolicy {
    /// Residual of identities that are exact in rational arithmetic.
    pub identity: f64,
    /// Residual of surface equations evaluated at mapped points.
    pub surface: f64,
}

pub const TOL: TolPolicy = TolPolicy { identity: 1e-12, surface: 1e-10 };

impl TolPolicy {
    pub fn identity_threshold(&self, scale: f64) -> f64 {
        self.identity * scale.max(1.0)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Data of the saddle-node–transcritical point with one zero eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct St1Data {
    pub b2_star: f64,
    pub e_star: f64,
    pub x1_star: f64,
    pub x2_star: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub eps: f64,
    /// e = e* + e_z3 · z3.
    pub e_z3: f64,
    /// Coordinate scale: x = x_scale · z2.
    pub x_scale: f64,
    /// a = a_z3 · z3 + a_z3z3 · z3² + z4.
    pub a_z3: f64,
    pub a_z3z3: f64,
    /// b = b_scale · (z4 + b_z3 · z3); the printed prefactor divides by an
    /// undefined symbol which is taken to be D1.
    pub b_scale: f64,
    pub b_z3: f64,
}

impl St1Data {
    /// Parameters (a, b) of the scalar minimal model as functions of (z3, z4).
    pub fn param_map(&self, z3: f64, z4: f64) -> (f64, f64) {
        (
            self.a_z3 * z3 + self.a_z3z3 * z3 * z3 + z4,
            self.b_scale * (z4 + self.b_z3 * z3),
        )
    }
}

pub fn st1_point(p: &MlvParams) -> Result<St1Data> {
    let d1 = p.a11 * p.a22 - p.a12 * p.a21;
    let d2 = 2.0 * p.a11 * p.a22 - p.a12 * p.a21;
    let d3 = 2.0 * p.a11 * p.a22 - p.a12 * p.a21 - p.a22 * p.a21;
    for (name, v) in [("D1", d1), ("D2", d2), ("a21", p.a21), ("a22", p.a22), ("a12", p.a12), ("b1", p.b1)] {
        if v == 0.0 {
            return degenerate(format!("ST1 guard violated: {name} = 0"));
        }
    }
    let b2_star = p.b1 * p.a22 * p.a21 / d2;
    let e_star = p.b1 * p.b1 * p.a22 * d1 / (d2 * d2);
    let x1_star = -b2_star / p.a21;
    let ratio = p.a22 * d1 * d2 / (p.b1 * p.a12);
    let eps = sign(ratio);
    let x_scale = (ratio / (p.a21 * p.a21)).abs().sqrt();
    Ok(St1Data {
        b2_star,
        e_star,
        x1_star,
        x2_star: 0.0,
        d1,
        d2,
        d3,
        eps,
        e_z3: p.b1 * p.a12 * p.a21 / d2,
        x_scale,
        a_z3: p.a21,
        a_z3z3: p.a11 * d2 / (p.b1 * p.a12),
        b_scale: eps * p.a21 / d1 * x_scale,
        b_z3: -d3 / p.a22,
    })
}

/// Data of the saddle-node–transcritical point with a double zero eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct St2Data {
    pub x1_star: f64,
    pub e_star: f64,
    pub b2_star: f64,
    pub gamma: f64,
    pub d3: f64,
    pub d4: f64,
    pub eps: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
}

impl St2Data {
    /// "topological saddle" for ε = 1, otherwise focus/elliptic by the sign of k2² − 8.
    pub fn dbt_type(&self) -> &'static str {
        if self.eps > 0.0 {
            "saddle"
        } else if self.k2 * self.k2 - 8.0 > 0.0 {
            "elliptic"
        } else {
            "focus"
        }
    }
}

pub fn st2_point(p: &MlvParams) -> Result<St2Data> {
    let gamma = -p.b1 * p.a12 / (2.0 * p.a11);
    let d3 = 2.0 * p.a11 * p.a22 - p.a12 * p.a21 - p.a22 * p.a21;
    let d4 = 2.0 * p.a11 + p.a21;
    if p.a11 == 0.0 {
        return degenerate("ST2 guard violated: a11 = 0");
    }
    for (name, v) in [
        ("gamma", gamma),
        ("a11", p.a11),
        ("a21", p.a21),
        ("a22", p.a22),
        ("D3", d3),
        ("D4", d4),
        ("a22+a12", p.a22 + p.a12),
        ("a11-a21", p.a11 - p.a21),
        ("4a11-a21", 4.0 * p.a11 - p.a21),
    ] {
        if v == 0.0 || !v.is_finite() {
            return degenerate(format!("ST2 guard violated: {name} = 0"));
        }
    }
    let eps = -sign(p.a11 * p.a21);
    let s = (p.a11 * p.a21).abs().sqrt();
    Ok(St2Data {
        x1_star: -p.b1 / (2.0 * p.a11),
        e_star: p.b1 * p.b1 / (4.0 * p.a11),
        b2_star: p.b1 * p.a21 / (2.0 * p.a11),
        gamma,
        d3,
        d4,
        eps,
        k1: eps * s / p.a21,
        k2: -eps * d4 / s,
        k3: -s / (3.0 * p.a11),
        k4: 16.0 * p.a11 * p.a11 * s / (3.0 * d4),
        k5: 4.0 * eps * (2.0 * p.a11 - p.a21) * s / (3.0 * d4),
    })
}

/// Left-hand sides of 2εk1² − k1k2 − 1 = 0 and 3k1k3 − 1 = 0.
pub fn conditions_residual(k1: f64, k2: f64, k3: f64, eps: f64) -> (f64, f64) {
    (2.0 * eps * k1 * k1 - k1 * k2 - 1.0, 3.0 * k1 * k3 - 1.0)
}

/// The invariant curve y = g(x, a, b) = a k1 + b k1 x + ε k1 x² + x³/3 in variables (x, a, b).
pub fn invariant_curve(k1: f64, eps: f64) -> Result<TruncMultiPoly> {
    let (x, a, b) = xab()?;
    let mut g = tp_mul(&a, &TruncMultiPoly::constant(3, 6, k1)?)?;
    g = tp_add(&g, &tp_mul(&b, &x)?.scale(k1))?;
    g = tp_add(&g, &tp_mul(&x, &x)?.scale(eps * k1))?;
    tp_add(&g, &tp_mul(&tp_mul(&x, &x)?, &x)?.scale(1.0 / 3.0))
}

fn xab() -> Result<(TruncMultiPoly, TruncMultiPoly, TruncMultiPoly)> {
    Ok((TruncMultiPoly::var(3, 6, 0)?, TruncMultiPoly::var(3, 6, 1)?, TruncMultiPoly::var(3, 6, 2)?))
}

/// f2(x, y, a, b) of the planar minimal model with `y` supplied as a polynomial.
fn min2_f2(y: &TruncMultiPoly, k1: f64, k2: f64, k3: f64, eps: f64) -> Result<TruncMultiPoly> {
    let (x, a, b) = xab()?;
    let x2 = tp_mul(&x, &x)?;
    let x3 = tp_mul(&x2, &x)?;
    let x4 = tp_mul(&x3, &x)?;
    let terms = [
        tp_mul(&a, &x)?,
        tp_mul(&b, y)?.scale(k1),
        tp_mul(&b, &x2)?,
        tp_mul(&x, y)?.scale(k2),
        tp_mul(&x2, y)?,
        x3.scale(eps),
        x4.scale(k3),
    ];
    let mut s = TruncMultiPoly::zero(3, 6)?;
    for t in &terms {
        s = tp_add(&s, t)?;
    }
    Ok(s)
}

/// Residual g_x · g − f2(x, g, a, b) of the invariance equation, a polynomial in (x, a, b).
pub fn invariant_manifold_check(k1: f64, k2: f64, k3: f64, eps: f64) -> Result<TruncMultiPoly> {
    let g = invariant_curve(k1, eps)?;
    let gx = tp_diff(&g, 0)?;
    tp_sub(&tp_mul(&gx, &g)?, &min2_f2(&g, k1, k2, k3, eps)?)
}

/// f2(x, 0, a, b) − x·g(x, a, b)/k1 as a polynomial in (x, a, b).
pub fn equilibria_on_curve_residual(k1: f64, k2: f64, k3: f64, eps: f64) -> Result<TruncMultiPoly> {
    let g = invariant_curve(k1, eps)?;
    let (x, _, _) = xab()?;
    let zero = TruncMultiPoly::zero(3, 6)?;
    tp_sub(&min2_f2(&zero, k1, k2, k3, eps)?, &tp_mul(&x, &g)?.scale(1.0 / k1))
}

/// φ(a, b) = (μ, ν) taking the scalar minimal model to the cusp unfolding.
pub fn cusp_map(a: f64, b: f64) -> (f64, f64) {
    (-a * b / 3.0 + 2.0 * b * b * b / 27.0, a - b * b / 3.0)
}

pub fn cusp_map_jacobian_det(a: f64, b: f64) -> f64 {
    let (mu_a, mu_b) = (-b / 3.0, -a / 3.0 + 2.0 * b * b / 9.0);
    let (nu_a, nu_b) = (1.0, -2.0 * b / 3.0);
    mu_a * nu_b - mu_b * nu_a
}

/// μ²/4 + ν³/27, zero on the Λ-shaped fold set of the cusp.
pub fn cusp_discriminant(mu: f64, nu: f64) -> f64 {
    mu * mu / 4.0 + nu * nu * nu / 27.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct St1Nondegeneracy {
    /// (∂f/∂a, ∂²f/∂x²) at the fold a = b²/4, x = −b/2.
    pub fold: (f64, f64),
    /// (∂f/∂a, ∂²f/∂a∂x, ∂²f/∂x²) at a = 0, x = 0.
    pub tc: (f64, f64, f64),
    /// Max deviation of a central-difference evaluation of the same quantities.
    pub fd_discrepancy: f64,
}

/// Fold and transcritical nondegeneracy coefficients of the scalar minimal model (ε = 1).
pub fn st1_nondegeneracy(b: f64) -> Result<St1Nondegeneracy> {
    if b == 0.0 {
        return degenerate("b = 0 is the codimension-two point itself");
    }
    let fold = (-b / 2.0, -b);
    let tc = (0.0, 1.0, 2.0 * b);
    let f = |a: f64, x: f64| a * x + b * x * x + x * x * x;
    let h = 1e-4;
    let (af, xf) = (b * b / 4.0, -b / 2.0);
    let fd_fold = ((f(af + h, xf) - f(af - h, xf)) / (2.0 * h), (f(af, xf + h) - 2.0 * f(af, xf) + f(af, xf - h)) / (h * h));
    let fd_tc = (
        (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h),
        (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h),
        (f(0.0, h) - 2.0 * f(0.0, 0.0) + f(0.0, -h)) / (h * h),
    );
    let disc = [
        fd_fold.0 - fold.0,
        fd_fold.1 - fold.1,
        fd_tc.0 - tc.0,
        fd_tc.1 - tc.1,
        fd_tc.2 - tc.2,
    ]
    .iter()
    .fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(St1Nondegeneracy { fold, tc, fd_discrepancy: disc })
}

/// a_SN(b) and, given k1, the fold point x_SN of the planar minimal model.
pub fn min2_sn_curve(b: f64, eps: f64, k3: f64, k1: Option<f64>) -> Result<(f64, Option<f64>)> {
    let w = 1.0 - 3.0 * k3 * b;
    if w < 0.0 {
        return Err(Error::OutOfDomain(format!("1 - 3 k3 b = {w} < 0")));
    }
    if k3 == 0.0 {
        return degenerate("k3 = 0");
    }
    let s = w.sqrt();
    let a = eps / (27.0 * k3 * k3) * (2.0 * w * s - 2.0 + 9.0 * k3 * b);
    Ok((a, k1.map(|k1| eps * k1 * (s - 1.0))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbtMapData {
    pub a_bar: f64,
    pub b_bar: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub nu: f64,
    /// z1 = x + z1_b·b + z1_xb·x·b + z1_bb·b².
    pub z1_b: f64,
    pub z1_xb: f64,
    pub z1_bb: f64,
    /// z2 = y + z2_by·b·y.
    pub z2_by: f64,
    /// Residual of the embedding surface at (μ1, μ2, ν).
    pub s_residual: f64,
}

impl DbtMapData {
    pub fn coords(&self, x: f64, y: f64, b: f64) -> (f64, f64) {
        (x + self.z1_b * b + self.z1_xb * x * b + self.z1_bb * b * b, y + self.z2_by * b * y)
    }
}

/// Φ: (a, b) ↦ (μ1, μ2, ν), mapping the planar minimal model onto the truncated DBT unfolding.
pub fn dbt_map(a: f64, b: f64, eps: f64, k1: f64, k2: f64) -> Result<DbtMapData> {
    if k1 == 0.0 || k2 == 0.0 {
        return degenerate("dbt_map needs k1, k2 nonzero");
    }
    let a_bar = a - eps * b * b / 3.0;
    let b_bar = b - b * b / (9.0 * k1);
    let mu1 = -(eps / 3.0) * (a_bar + eps * b_bar * b_bar / 9.0) * b_bar;
    let mu2 = a_bar;
    let nu = (k1 - eps * k2 / 3.0) * b_bar;
    let c = 3.0 * k1 - eps * k2;
    Ok(DbtMapData {
        a_bar,
        b_bar,
        mu1,
        mu2,
        nu,
        z1_b: eps / 3.0,
        z1_xb: -2.0 * eps / (3.0 * k2),
        z1_bb: -eps / (27.0 * k1),
        z2_by: -2.0 * eps / (3.0 * k2),
        s_residual: s_surface(mu1, mu2, nu, eps, c),
    })
}

fn s_surface(mu1: f64, mu2: f64, nu: f64, eps: f64, c: f64) -> f64 {
    c * c * c * mu1 + eps * c * c * mu2 * nu + nu * nu * nu
}

/// (S residual, saddle-node surface residual 27μ1² + 4εμ2³).
pub fn dbt_surfaces(mu1: f64, mu2: f64, nu: f64, eps: f64, k1: f64, k2: f64) -> Result<(f64, f64)> {
    let c = 3.0 * k1 - eps * k2;
    if c == 0.0 {
        return degenerate("3k1 = eps k2");
    }
    Ok((s_surface(mu1, mu2, nu, eps, c), 27.0 * mu1 * mu1 + 4.0 * eps * mu2 * mu2 * mu2))
}

/// Points (μ1, μ2) of the curves Γ_SN and Γ_TC at a given ν.
///
/// The μ2 components carry a factor ε; for ε = 1 these are the printed
/// formulas, for ε = −1 the sign flip keeps both curves on both surfaces.
pub fn gamma_curves(nu: f64, eps: f64, k1: f64, k2: f64) -> Result<((f64, f64), (f64, f64))> {
    let c = 3.0 * k1 - eps * k2;
    if c == 0.0 {
        return degenerate("3k1 = eps k2");
    }
    let (c2, c3) = (c * c, c * c * c);
    let n2 = nu * nu;
    let n3 = n2 * nu;
    Ok(((-0.25 * n3 / c3, -0.75 * eps * n2 / c2), (2.0 * n3 / c3, -3.0 * eps * n2 / c2)))
}

/// Max |directional derivative| of the saddle-node residual along the two
/// tangent directions of S at (μ1, μ2, ν), by central differences of step h.
pub fn sn_residual_slope_along_s(mu1: f64, mu2: f64, nu: f64, eps: f64, k1: f64, k2: f64, h: f64) -> Result<f64> {
    let c = 3.0 * k1 - eps * k2;
    let grad = [c * c * c, eps * c * c * nu, eps * c * c * mu2 + 3.0 * nu * nu];
    let gn = (grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2]).sqrt();
    let n = [grad[0] / gn, grad[1] / gn, grad[2] / gn];
    // orthonormal tangent basis
    let pick = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = pick[0] * n[0] + pick[1] * n[1] + pick[2] * n[2];
    let mut t1 = [pick[0] - dot * n[0], pick[1] - dot * n[1], pick[2] - dot * n[2]];
    let l = (t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]).sqrt();
    t1 = [t1[0] / l, t1[1] / l, t1[2] / l];
    let t2 = [n[1] * t1[2] - n[2] * t1[1], n[2] * t1[0] - n[0] * t1[2], n[0] * t1[1] - n[1] * t1[0]];
    let sn = |m1: f64, m2: f64| 27.0 * m1 * m1 + 4.0 * eps * m2 * m2 * m2;
    let mut worst = 0.0_f64;
    for t in [t1, t2] {
        let fp = sn(mu1 + h * t[0], mu2 + h * t[1]);
        let fm = sn(mu1 - h * t[0], mu2 - h * t[1]);
        worst = worst.max(((fp - fm) / (2.0 * h)).abs());
    }
    Ok(worst)
}

/// Outcome of the centre-manifold check at the one-zero-eigenvalue point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct St1CentreManifold {
    /// Extended system right-hand sides in (z1, z2, z3, z4), cap 3.
    pub z1_dot: TruncMultiPoly,
    pub z2_dot: TruncMultiPoly,
    /// The quadratic Taylor polynomial ψ(z2, z3, z4) (as a 4-variable polynomial without z1).
    pub psi: TruncMultiPoly,
    /// ψ_z2 · ż2 − ż1 on z1 = ψ; its terms of degree ≤ 2 must vanish.
    pub residual: TruncMultiPoly,
    /// ż2 on z1 = ψ (the reduced dynamics).
    pub reduced: TruncMultiPoly,
}

/// The printed quadratic coefficients of ψ, with an optional perturbation of the z2² one.
pub fn st1_psi(p: &MlvParams, dz2z2: f64) -> Result<TruncMultiPoly> {
    let d = st1_point(p)?;
    let pre = d.d2 / (p.b1 * p.a21 * p.a12);
    let mono = |e: [u32; 4], c: f64| TruncMultiPoly::monomial(4, 3, &e, c);
    let mut psi = mono([0, 2, 0, 0], pre * p.a22 * d.d1 / (p.a21 * p.a21) + dz2z2)?;
    psi = tp_add(&psi, &mono([0, 0, 2, 0], pre * p.a11)?)?;
    psi = tp_add(&psi, &mono([0, 1, 1, 0], -pre * d.d3 / p.a21)?)?;
    tp_add(&psi, &mono([0, 1, 0, 1], pre * p.a22 / p.a21)?)
}

/// Builds the extended system from the harvested model by the affine change of
/// variables around the point, substitutes z1 = ψ and returns the invariance residual.
pub fn verify_st1_centre_manifold(p: &MlvParams) -> Result<St1CentreManifold> {
    verify_st1_centre_manifold_with(p, 0.0)
}

pub fn verify_st1_centre_manifold_with(p: &MlvParams, dz2z2: f64) -> Result<St1CentreManifold> {
    let d = st1_point(p)?;
    let (n, cap) = (4, 3);
    let z = |i| TruncMultiPoly::var(n, cap, i);
    let k = |c| TruncMultiPoly::constant(n, cap, c);
    // x1 = x1* + z1 − (a22/a21) z2 + z3, x2 = z2, e = e* + e_z3 z3, b2 = b2* + z4
    let x1 = tp_add(&tp_add(&k(d.x1_star)?, &z(0)?)?, &tp_add(&z(1)?.scale(-p.a22 / p.a21), &z(2)?)?)?;
    let x2 = z(1)?;
    let e = tp_add(&k(d.e_star)?, &z(2)?.scale(d.e_z3))?;
    let b2 = tp_add(&k(d.b2_star)?, &z(3)?)?;
    // the field as a polynomial in (x1, x2, e, b2)
    let v = |i| TruncMultiPoly::var(4, 3, i);
    let (vx1, vx2, ve, vb2) = (v(0)?, v(1)?, v(2)?, v(3)?);
    let inner1 = tp_add(
        &tp_add(&TruncMultiPoly::constant(4, 3, p.b1)?, &vx1.scale(p.a11))?,
        &vx2.scale(p.a12),
    )?;
    let f1 = tp_add(&tp_mul(&vx1, &inner1)?, &ve)?;
    let inner2 = tp_add(&tp_add(&vb2, &vx1.scale(p.a21))?, &vx2.scale(p.a22))?;
    let f2 = tp_mul(&vx2, &inner2)?;
    let subs = [x1, x2, e, b2];
    let f1z = tp_compose(&f1, &subs)?;
    let f2z = tp_compose(&f2, &subs)?;
    // ẋ1 = ż1 − (a22/a21) ż2  ⇒  ż1 = f1 + (a22/a21) f2
    let z1_dot = tp_add(&f1z, &f2z.scale(p.a22 / p.a21))?;
    let z2_dot = f2z;
    let psi = st1_psi(p, dz2z2)?;
    let on = [psi.clone(), z(1)?, z(2)?, z(3)?];
    let z1_on = tp_compose(&z1_dot, &on)?;
    let z2_on = tp_compose(&z2_dot, &on)?;
    let residual = tp_sub(&tp_mul(&tp_diff(&psi, 1)?, &z2_on)?, &z1_on)?;
    Ok(St1CentreManifold { z1_dot, z2_dot, psi, residual, reduced: z2_on })
}

/// The printed extended-system right-hand side ż1, for comparison with the derived one.
pub fn st1_printed_z1_dot(p: &MlvParams) -> Result<TruncMultiPoly> {
    let d = st1_point(p)?;
    let mono = |e: [u32; 4], c: f64| TruncMultiPoly::monomial(4, 3, &e, c);
    let terms = [
        mono([1, 0, 0, 0], -p.b1 * p.a12 * p.a21 / d.d2)?,
        mono([2, 0, 0, 0], p.a11)?,
        mono([1, 1, 0, 0], -d.d3 / p.a21)?,
        mono([0, 2, 0, 0], p.a22 / (p.a21 * p.a21) * d.d1)?,
        mono([0, 0, 2, 0], p.a11)?,
        mono([1, 0, 1, 0], 2.0 * p.a11)?,
        mono([0, 1, 1, 0], -d.d3 / p.a21)?,
        mono([0, 1, 0, 1], p.a22 / p.a21)?,
    ];
    let mut s = TruncMultiPoly::zero(4, 3)?;
    for t in &terms {
        s = tp_add(&s, t)?;
    }
    Ok(s)
}

/// First Lyapunov coefficient from Jacobian and derivative tensors at a Hopf point.
///
/// Invariant formula with ⟨q, q⟩ = ⟨p, q⟩ = 1; with this normalisation the
/// radial system r' = r³ (unit rotation) has coefficient 2.
pub fn lyapunov_from_derivatives(
    j: &crate::algebra::Matrix2,
    d2: &crate::models::Tensor3,
    d3: &crate::models::Tensor4,
) -> Result<f64> {
    let det = j.det();
    let tr = j.trace();
    if !(det > 0.0) {
        return usage("not a Hopf point: det J <= 0");
    }
    let w = det.sqrt();
    if tr.abs() > 1e-6 * w.max(1.0) {
        return usage("not a Hopf point: trace J is not zero");
    }
    let i = Complex64::i();
    let c = |v: f64| Complex64::new(v, 0.0);
    // q: J q = iω q
    let q = if j.b.abs() >= j.c.abs() {
        [c(j.b), i * w - j.a]
    } else {
        [i * w - j.d, c(j.c)]
    };
    let qn = (q[0].norm_sqr() + q[1].norm_sqr()).sqrt();
    let q = [q[0] / qn, q[1] / qn];
    // p: Jᵀ p = −iω p
    let pv = if j.c.abs() >= j.b.abs() {
        [c(j.c), -i * w - j.a]
    } else {
        [-i * w - j.d, c(j.b)]
    };
    let inner = |p: &[Complex64; 2], v: &[Complex64; 2]| p[0].conj() * v[0] + p[1].conj() * v[1];
    let pq = inner(&pv, &q);
    let pv = [pv[0] / pq.conj(), pv[1] / pq.conj()];
    let bf = |x: &[Complex64; 2], y: &[Complex64; 2]| {
        let mut r = [Complex64::new(0.0, 0.0); 2];
        for (ii, ri) in r.iter_mut().enumerate() {
            for jj in 0..2 {
                for kk in 0..2 {
                    *ri += d2[ii][jj][kk] * x[jj] * y[kk];
                }
            }
        }
        r
    };
    let cf = |x: &[Complex64; 2], y: &[Complex64; 2], z: &[Complex64; 2]| {
        let mut r = [Complex64::new(0.0, 0.0); 2];
        for (ii, ri) in r.iter_mut().enumerate() {
            for jj in 0..2 {
                for kk in 0..2 {
                    for ll in 0..2 {
                        *ri += d3[ii][jj][kk][ll] * x[jj] * y[kk] * z[ll];
                    }
                }
            }
        }
        r
    };
    let solve = |m: [[Complex64; 2]; 2], r: [Complex64; 2]| {
        let dd = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [(m[1][1] * r[0] - m[0][1] * r[1]) / dd, (-m[1][0] * r[0] + m[0][0] * r[1]) / dd]
    };
    let qb = [q[0].conj(), q[1].conj()];
    let a = [[c(j.a), c(j.b)], [c(j.c), c(j.d)]];
    // A⁻¹ B(q, q̄)
    let s1 = solve(a, bf(&q, &qb));
    // (2iω − A)⁻¹ B(q, q)
    let m2 = [[2.0 * i * w - j.a, c(-j.b)], [c(-j.c), 2.0 * i * w - j.d]];
    let s2 = solve(m2, bf(&q, &q));
    let t = inner(&pv, &cf(&q, &q, &qb)) - 2.0 * inner(&pv, &bf(&q, &s1)) + inner(&pv, &bf(&qb, &s2));
    Ok(t.re / (2.0 * w))
}

/// First Lyapunov coefficient of a planar model at a Hopf-type equilibrium.
pub fn first_lyapunov(model: &Model, hopf_eq: &Equilibrium) -> Result<f64> {
    if model.dim() != 2 {
        return usage("first Lyapunov coefficient needs a planar model");
    }
    if hopf_eq.classification != Classification::NonhyperbolicHopfType {
        return usage(format!("equilibrium is {:?}, not Hopf-type", hopf_eq.classification));
    }
    let x = hopf_eq.xy();
    lyapunov_from_derivatives(&model.jac(x), &model.d2(x), &model.d3(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn st1_saddle_case() {
        let d = st1_point(&MlvParams::saddle_case(0.0, 0.0)).unwrap();
        assert_eq!((d.d1, d.d2), (1.0, -4.0));
        assert_eq!((d.b2_star, d.e_star, d.x1_star), (-7.5, 14.0625, 3.75));
    }

    #[test]
    fn st1_elliptic_case() {
        let d = st1_point(&MlvParams::elliptic_case(0.0, 0.0)).unwrap();
        assert_eq!((d.d1, d.d2), (13.0, 20.0));
        assert_eq!((d.b2_star, d.e_star, d.x1_star), (1.5, 7.3125, -0.75));
    }

    #[test]
    fn st2_saddle_case() {
        let d = st2_point(&MlvParams::saddle_case(0.0, 0.0)).unwrap();
        assert_eq!((d.x1_star, d.e_star, d.b2_star), (1.5, -11.25, -3.0));
        assert_eq!((d.gamma, d.d3, d.d4, d.eps), (-4.5, -6.0, -8.0, 1.0));
        let r10 = 10f64.sqrt();
        assert!((d.k1 - r10 / 2.0).abs() < 1e-15);
        assert!((d.k2 - 8.0 / r10).abs() < 1e-15);
        assert!((d.k3 - r10 / 15.0).abs() < 1e-15);
        assert_eq!(d.dbt_type(), "saddle");
    }

    #[test]
    fn st2_elliptic_case() {
        let d = st2_point(&MlvParams::elliptic_case(0.0, 0.0)).unwrap();
        let r14 = 14f64.sqrt();
        assert_eq!(d.eps, -1.0);
        assert!((d.k1 + r14 / 2.0).abs() < 1e-15);
        assert!((d.k2 - 16.0 / r14).abs() < 1e-14);
        assert_eq!(d.dbt_type(), "elliptic");
    }

    #[test]
    fn lyapunov_of_radial_cubic() {
        // ẋ = −y + x r², ẏ = x + y r²: r' = r³
        let j = crate::algebra::Matrix2::new(0.0, -1.0, 1.0, 0.0);
        let d2 = [[[0.0; 2]; 2]; 2];
        let mut d3 = [[[[0.0; 2]; 2]; 2]; 2];
        d3[0][0][0][0] = 6.0;
        for (a, b, c) in [(0, 1, 1), (1, 0, 1), (1, 1, 0)] {
            d3[0][a][b][c] = 2.0;
        }
        d3[1][1][1][1] = 6.0;
        for (a, b, c) in [(0, 0, 1), (0, 1, 0), (1, 0, 0)] {
            d3[1][a][b][c] = 2.0;
        }
        let l1 = lyapunov_from_derivatives(&j, &d2, &d3).unwrap();
        assert!((l1 - 2.0).abs() < 1e-14, "{l1}");
        let l0 = lyapunov_from_derivatives(&j, &d2, &[[[[0.0; 2]; 2]; 2]; 2]).unwrap();
        assert_eq!(l0, 0.0);
    }
}
