//! Equilibria of the built-in models from closed-form reductions, Newton-polished.

use serde::{Deserialize, Serialize};

use crate::algebra::{eigen2, solve_poly_real, EigPair, Eigen2, Poly1, DEFAULT_CLUSTER_TOL};
use crate::error::{degenerate, Result};
use crate::models::{MlvParams, Model};

/// Eigen-data of an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EigenData {
    /// Derivative of a scalar field.
    Scalar(f64),
    Planar(Eigen2),
}

impl EigenData {
    /// Eigenvalues as (re, im) pairs; a scalar model gives one pair.
    pub fn re_im(&self) -> Vec<(f64, f64)> {
        match self {
            EigenData::Scalar(d) => vec![(*d, 0.0)],
            EigenData::Planar(e) => e.values().iter().map(|c| (c.re, c.im)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Sink,
    Source,
    Saddle,
    NonhyperbolicFoldType,
    NonhyperbolicHopfType,
    DoubleZero,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: Vec<f64>,
    pub eigen: EigenData,
    pub classification: Classification,
    /// Max-norm of the field at `state`.
    pub residual: f64,
    /// On the invariant x1-axis of the harvested model (x2 set to exactly 0).
    pub on_axis: bool,
    /// False for harvested-model equilibria with x2 < 0 (biologically infeasible).
    pub in_first_quadrant: bool,
    pub multiplicity: usize,
}

impl Equilibrium {
    pub fn xy(&self) -> [f64; 2] {
        [self.state[0], self.state.get(1).copied().unwrap_or(0.0)]
    }
}

/// Default eigenvalue tolerance relative to the spectral scale.
pub const DEFAULT_TOL_EIG: f64 = 1e-8;

/// Spectral scale of a Jacobian: max(1, largest entry).
pub fn spectral_scale(m: &crate::algebra::Matrix2) -> f64 {
    m.max_abs().max(1.0)
}

/// Classifies from eigen-data; `tol_eig` is absolute (callers scale it).
pub fn classify_eigen(eigen: &EigenData, tol_eig: f64, second_derivative: f64) -> Classification {
    match *eigen {
        EigenData::Scalar(d) => {
            if !d.is_finite() {
                Classification::Degenerate
            } else if d.abs() < tol_eig {
                if second_derivative.abs() < tol_eig {
                    Classification::Degenerate
                } else {
                    Classification::NonhyperbolicFoldType
                }
            } else if d < 0.0 {
                Classification::Sink
            } else {
                Classification::Source
            }
        }
        EigenData::Planar(e) => match e.pair {
            EigPair::Real(l1, l2) => {
                if !l1.is_finite() || !l2.is_finite() {
                    return Classification::Degenerate;
                }
                let z1 = l1.abs() < tol_eig;
                let z2 = l2.abs() < tol_eig;
                match (z1, z2) {
                    (true, true) => {
                        if second_derivative.abs() < tol_eig {
                            Classification::Degenerate
                        } else {
                            Classification::DoubleZero
                        }
                    }
                    (true, false) | (false, true) => Classification::NonhyperbolicFoldType,
                    _ if l1 < 0.0 && l2 < 0.0 => Classification::Sink,
                    _ if l1 > 0.0 && l2 > 0.0 => Classification::Source,
                    _ => Classification::Saddle,
                }
            }
            EigPair::Complex { re, im } => {
                if re.abs() < tol_eig {
                    if im < tol_eig {
                        Classification::DoubleZero
                    } else {
                        Classification::NonhyperbolicHopfType
                    }
                } else if re < 0.0 {
                    Classification::Sink
                } else {
                    Classification::Source
                }
            }
        },
    }
}

/// Re-classifies an equilibrium with an explicit relative tolerance.
pub fn classify(model: &Model, eq: &Equilibrium, tol_eig: f64) -> Classification {
    let j = model.jac(eq.xy());
    let scale = spectral_scale(&j);
    // for planar models the "second derivative" slot carries the nilpotency
    // check: a double-zero point with J ≡ 0 is degenerate
    let aux = match eq.eigen {
        EigenData::Scalar(_) => model.d2(eq.xy())[0][0][0],
        EigenData::Planar(_) => j.max_abs(),
    };
    classify_eigen(&eq.eigen, tol_eig * scale, aux)
}

/// Builds an equilibrium record at `x` (already located).
pub fn make_equilibrium(model: &Model, x: [f64; 2], multiplicity: usize, tol_eig: f64) -> Equilibrium {
    let dim = model.dim();
    let f = model.f(x);
    let residual = f[..dim].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let j = model.jac(x);
    let eigen = if dim == 1 { EigenData::Scalar(j.a) } else { EigenData::Planar(eigen2(&j)) };
    let on_axis = matches!(model, Model::Mlv(_)) && x[1] == 0.0;
    let mut eq = Equilibrium {
        state: x[..dim].to_vec(),
        eigen,
        classification: Classification::Degenerate,
        residual,
        on_axis,
        in_first_quadrant: !(matches!(model, Model::Mlv(_)) && x[1] < 0.0),
        multiplicity,
    };
    eq.classification = classify(model, &eq, tol_eig);
    eq
}

fn polish_scalar(p: &Poly1, x: f64, multiplicity: usize) -> f64 {
    if multiplicity > 1 {
        return x;
    }
    let dp = p.deriv();
    let mut x = x;
    let mut fx = p.eval(x).abs();
    for _ in 0..6 {
        let d = dp.eval(x);
        if d == 0.0 || fx == 0.0 {
            break;
        }
        let xn = x - p.eval(x) / d;
        let fnew = p.eval(xn).abs();
        if !(fnew < fx) {
            break;
        }
        x = xn;
        fx = fnew;
    }
    x
}

/// Newton polish on the planar field (used for interior equilibria).
pub fn newton_polish_planar(model: &Model, mut x: [f64; 2]) -> [f64; 2] {
    let norm = |f: [f64; 2]| f[0].abs().max(f[1].abs());
    let mut r = norm(model.f(x));
    for _ in 0..8 {
        if r == 0.0 {
            break;
        }
        let f = model.f(x);
        let j = model.jac(x);
        let det = j.det();
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = [(j.d * f[0] - j.b * f[1]) / det, (-j.c * f[0] + j.a * f[1]) / det];
        let xn = [x[0] - dx[0], x[1] - dx[1]];
        let rn = norm(model.f(xn));
        if !(rn < r) {
            break;
        }
        x = xn;
        r = rn;
    }
    x
}

/// Equilibria of the harvested model: up to two on the axis, up to two interior.
pub fn find_equilibria_mlv(p: &MlvParams) -> Result<Vec<Equilibrium>> {
    find_equilibria_mlv_tol(p, DEFAULT_CLUSTER_TOL, DEFAULT_TOL_EIG)
}

pub fn find_equilibria_mlv_tol(p: &MlvParams, cluster_tol: f64, tol_eig: f64) -> Result<Vec<Equilibrium>> {
    if p.a11 == 0.0 {
        return degenerate("a11 = 0: axis equilibria are not given by a quadratic");
    }
    if p.a22 == 0.0 {
        return degenerate("a22 = 0: interior nullcline is not a graph over x1");
    }
    let model = Model::Mlv(*p);
    let mut out = Vec::new();
    let axis = Poly1::new(&[p.e, p.b1, p.a11]);
    for (x1, m) in solve_poly_real(&axis, cluster_tol)? {
        let x1 = polish_scalar(&axis, x1, m);
        out.push(make_equilibrium(&model, [x1, 0.0], m, tol_eig));
    }
    let d1 = p.a11 * p.a22 - p.a12 * p.a21;
    let interior = Poly1::new(&[p.a22 * p.e, p.b1 * p.a22 - p.a12 * p.b2, d1]);
    if interior.degree().is_some() && interior.degree() != Some(0) {
        for (x1, m) in solve_poly_real(&interior, cluster_tol)? {
            let x2 = -(p.b2 + p.a21 * x1) / p.a22;
            // an interior root on the axis duplicates an axis equilibrium
            if x2.abs() <= cluster_tol && out.iter().any(|e: &Equilibrium| (e.state[0] - x1).abs() <= cluster_tol) {
                continue;
            }
            let x = if m == 1 { newton_polish_planar(&model, [x1, x2]) } else { [x1, x2] };
            out.push(make_equilibrium(&model, x, m, tol_eig));
        }
    }
    Ok(out)
}

/// Equilibria of the minimal models and the normal-form unfoldings (all on y = 0).
pub fn find_equilibria_min(model: &Model) -> Result<Vec<Equilibrium>> {
    find_equilibria_min_tol(model, DEFAULT_CLUSTER_TOL, DEFAULT_TOL_EIG)
}

pub fn find_equilibria_min_tol(model: &Model, cluster_tol: f64, tol_eig: f64) -> Result<Vec<Equilibrium>> {
    model.validate()?;
    let poly = match model {
        Model::Mlv(_) => return crate::error::usage("use find_equilibria_mlv for MLV"),
        Model::St1Min(p) => Poly1::new(&[0.0, p.a, p.b, p.eps]),
        Model::St2Min(p) => {
            let (mut c2, mut c3) = (p.b, p.eps);
            if let Some(e) = p.ext {
                c2 += e.k4 * p.b * p.b;
                c3 += e.k5 * p.b;
            }
            Poly1::new(&[0.0, p.a, c2, c3, p.k3])
        }
        Model::CuspUnf(p) => Poly1::new(&[p.mu, p.nu, 0.0, 1.0]),
        Model::DbtTrunc(p) => Poly1::new(&[p.mu1, p.mu2, 0.0, p.eps]),
    };
    let mut out = Vec::new();
    for (x, m) in solve_poly_real(&poly, cluster_tol)? {
        let x = polish_scalar(&poly, x, m);
        out.push(make_equilibrium(model, [x, 0.0], m, tol_eig));
    }
    Ok(out)
}

/// Dispatches to the model-specific finder.
pub fn find_equilibria(model: &Model) -> Result<Vec<Equilibrium>> {
    match model {
        Model::Mlv(p) => find_equilibria_mlv(p),
        _ => find_equilibria_min(model),
    }
}
