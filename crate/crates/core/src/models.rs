//! The five vector fields: the harvested Lotka-Volterra model, the scalar
//! and planar minimal models, the cusp unfolding and the truncated
//! degenerate Bogdanov-Takens unfolding.  Everything is hand-differentiated.

use serde::{Deserialize, Serialize};

use crate::algebra::Matrix2;
use crate::error::{degenerate, usage, Result};

/// Identifier of a built-in model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "MLV")]
    Mlv,
    #[serde(rename = "ST1_MIN")]
    St1Min,
    #[serde(rename = "ST2_MIN")]
    St2Min,
    #[serde(rename = "CUSP_UNF")]
    CuspUnf,
    #[serde(rename = "DBT_TRUNC")]
    DbtTrunc,
}

impl ModelId {
    pub fn dim(self) -> usize {
        match self {
            ModelId::St1Min | ModelId::CuspUnf => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Mlv => "MLV",
            ModelId::St1Min => "ST1_MIN",
            ModelId::St2Min => "ST2_MIN",
            ModelId::CuspUnf => "CUSP_UNF",
            ModelId::DbtTrunc => "DBT_TRUNC",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "MLV" => Ok(ModelId::Mlv),
            "ST1_MIN" => Ok(ModelId::St1Min),
            "ST2_MIN" => Ok(ModelId::St2Min),
            "CUSP_UNF" => Ok(ModelId::CuspUnf),
            "DBT_TRUNC" => Ok(ModelId::DbtTrunc),
            _ => usage(format!("unknown model '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlvParams {
    pub b1: f64,
    pub b2: f64,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub e: f64,
}

impl MlvParams {
    /// Fixed rates of the saddle-type configuration (a11 < 0).
    pub fn saddle_case(e: f64, b2: f64) -> Self {
        MlvParams { b1: 15.0, b2, a11: -5.0, a12: -3.0, a21: 2.0, a22: 1.0, e }
    }

    /// Fixed rates of the elliptic-type configuration (a11 > 0).
    pub fn elliptic_case(e: f64, b2: f64) -> Self {
        MlvParams { a11: 7.0, ..Self::saddle_case(e, b2) }
    }

    pub fn max_abs(&self) -> f64 {
        [self.b1, self.b2, self.a11, self.a12, self.a21, self.a22, self.e]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct St1Params {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
}

/// The optional quartic splitting terms k4·b²x² + k5·b·x³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct St2Extension {
    pub k4: f64,
    pub k5: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct St2Params {
    pub a: f64,
    pub b: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ext: Option<St2Extension>,
}

impl St2Params {
    pub fn new(a: f64, b: f64, k1: f64, k2: f64, k3: f64, eps: f64) -> Self {
        St2Params { a, b, k1, k2, k3, eps, ext: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspParams {
    pub mu: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbtParams {
    pub mu1: f64,
    pub mu2: f64,
    pub nu: f64,
    pub k2: f64,
    pub eps: f64,
}

/// A model together with its parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum Model {
    #[serde(rename = "MLV")]
    Mlv(MlvParams),
    #[serde(rename = "ST1_MIN")]
    St1Min(St1Params),
    #[serde(rename = "ST2_MIN")]
    St2Min(St2Params),
    #[serde(rename = "CUSP_UNF")]
    CuspUnf(CuspParams),
    #[serde(rename = "DBT_TRUNC")]
    DbtTrunc(DbtParams),
}

/// Second derivatives d2[i][j][k] = ∂²f_i/∂x_j∂x_k (unused slots are 0 for 1-D models).
pub type Tensor3 = [[[f64; 2]; 2]; 2];
/// Third derivatives d3[i][j][k][l].
pub type Tensor4 = [[[[f64; 2]; 2]; 2]; 2];

/// Jacobian of a 1-D or planar model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Jacobian {
    Scalar(f64),
    Planar(Matrix2),
}

fn check_eps(eps: f64) -> Result<()> {
    if eps == 1.0 || eps == -1.0 {
        Ok(())
    } else {
        usage(format!("eps must be +1 or -1, got {eps}"))
    }
}

impl Model {
    pub fn id(&self) -> ModelId {
        match self {
            Model::Mlv(_) => ModelId::Mlv,
            Model::St1Min(_) => ModelId::St1Min,
            Model::St2Min(_) => ModelId::St2Min,
            Model::CuspUnf(_) => ModelId::CuspUnf,
            Model::DbtTrunc(_) => ModelId::DbtTrunc,
        }
    }

    pub fn dim(&self) -> usize {
        self.id().dim()
    }

    /// Names of the parameters, in canonical order.
    pub fn param_names(&self) -> Vec<&'static str> {
        match self {
            Model::Mlv(_) => vec!["b1", "b2", "a11", "a12", "a21", "a22", "e"],
            Model::St1Min(_) => vec!["a", "b", "eps"],
            Model::St2Min(p) => {
                let mut v = vec!["a", "b", "k1", "k2", "k3", "eps"];
                if p.ext.is_some() {
                    v.extend(["k4", "k5"]);
                }
                v
            }
            Model::CuspUnf(_) => vec!["mu", "nu"],
            Model::DbtTrunc(_) => vec!["mu1", "mu2", "nu", "k2", "eps"],
        }
    }

    fn slot(&mut self, name: &str) -> Result<&mut f64> {
        let id = self.id();
        let s = match (self, name) {
            (Model::Mlv(p), "b1") => &mut p.b1,
            (Model::Mlv(p), "b2") => &mut p.b2,
            (Model::Mlv(p), "a11") => &mut p.a11,
            (Model::Mlv(p), "a12") => &mut p.a12,
            (Model::Mlv(p), "a21") => &mut p.a21,
            (Model::Mlv(p), "a22") => &mut p.a22,
            (Model::Mlv(p), "e") => &mut p.e,
            (Model::St1Min(p), "a") => &mut p.a,
            (Model::St1Min(p), "b") => &mut p.b,
            (Model::St1Min(p), "eps") => &mut p.eps,
            (Model::St2Min(p), "a") => &mut p.a,
            (Model::St2Min(p), "b") => &mut p.b,
            (Model::St2Min(p), "k1") => &mut p.k1,
            (Model::St2Min(p), "k2") => &mut p.k2,
            (Model::St2Min(p), "k3") => &mut p.k3,
            (Model::St2Min(p), "eps") => &mut p.eps,
            (Model::St2Min(St2Params { ext: Some(x), .. }), "k4") => &mut x.k4,
            (Model::St2Min(St2Params { ext: Some(x), .. }), "k5") => &mut x.k5,
            (Model::CuspUnf(p), "mu") => &mut p.mu,
            (Model::CuspUnf(p), "nu") => &mut p.nu,
            (Model::DbtTrunc(p), "mu1") => &mut p.mu1,
            (Model::DbtTrunc(p), "mu2") => &mut p.mu2,
            (Model::DbtTrunc(p), "nu") => &mut p.nu,
            (Model::DbtTrunc(p), "k2") => &mut p.k2,
            (Model::DbtTrunc(p), "eps") => &mut p.eps,
            _ => return usage(format!("model {} has no parameter '{name}'", id.name())),
        };
        Ok(s)
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        let mut m = *self;
        m.slot(name).map(|v| *v)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        *self.slot(name)? = value;
        Ok(())
    }

    pub fn with(&self, name: &str, value: f64) -> Result<Model> {
        let mut m = *self;
        m.set(name, value)?;
        Ok(m)
    }

    /// Default parameter record of a model: the saddle-type rates for MLV,
    /// the saddle-case coefficients for ST2_MIN, zeros and ε = 1 elsewhere.
    pub fn template(id: ModelId) -> Model {
        let r10 = 10f64.sqrt();
        match id {
            ModelId::Mlv => Model::Mlv(MlvParams::saddle_case(0.0, 0.0)),
            ModelId::St1Min => Model::St1Min(St1Params { a: 0.0, b: 0.0, eps: 1.0 }),
            ModelId::St2Min => Model::St2Min(St2Params::new(0.0, 0.0, r10 / 2.0, 8.0 / r10, r10 / 15.0, 1.0)),
            ModelId::CuspUnf => Model::CuspUnf(CuspParams { mu: 0.0, nu: 0.0 }),
            ModelId::DbtTrunc => Model::DbtTrunc(DbtParams { mu1: 0.0, mu2: 0.0, nu: 0.0, k2: 3.0, eps: 1.0 }),
        }
    }

    /// Template overridden by named values; `k4`/`k5` switch on the ST2_MIN extension.
    pub fn from_values<'a, I>(id: ModelId, values: I) -> Result<Model>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut m = Model::template(id);
        for (name, v) in values {
            if let (Model::St2Min(p), "k4" | "k5") = (&mut m, name) {
                p.ext.get_or_insert(St2Extension { k4: 0.0, k5: 0.0 });
            }
            m.set(name, v)?;
        }
        m.validate()?;
        Ok(m)
    }

    /// Largest parameter magnitude, used to scale residual tolerances.
    pub fn param_scale(&self) -> f64 {
        self.param_names()
            .iter()
            .map(|n| self.get(n).unwrap_or(0.0).abs())
            .fold(1.0, f64::max)
    }

    /// Checks the structural guards on the parameter record.
    pub fn validate(&self) -> Result<()> {
        for n in self.param_names() {
            if !self.get(n)?.is_finite() {
                return usage(format!("parameter '{n}' is not finite"));
            }
        }
        match self {
            Model::St1Min(p) => check_eps(p.eps),
            Model::St2Min(p) => {
                check_eps(p.eps)?;
                if p.k1 == 0.0 || p.k2 == 0.0 || p.k3 == 0.0 {
                    return degenerate("ST2_MIN requires k1, k2, k3 nonzero");
                }
                // the reflection maps k2 to -k2, so both signs of 2√2 are excluded
                if (p.k2.abs() - 8f64.sqrt()).abs() < 1e-12 {
                    return degenerate("ST2_MIN requires |k2| != 2*sqrt(2)");
                }
                Ok(())
            }
            Model::DbtTrunc(p) => check_eps(p.eps),
            _ => Ok(()),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return usage(format!(
                "state of dimension {} given to {} (dimension {})",
                x.len(),
                self.id().name(),
                self.dim()
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return usage("state has non-finite entries");
        }
        Ok(())
    }

    /// Unchecked field evaluation on a 2-slot state (second slot ignored for 1-D models).
    #[inline]
    pub fn f(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            Model::Mlv(p) => {
                let (x1, x2) = (x[0], x[1]);
                [
                    x1 * (p.b1 + p.a11 * x1 + p.a12 * x2) + p.e,
                    x2 * (p.b2 + p.a21 * x1 + p.a22 * x2),
                ]
            }
            Model::St1Min(p) => {
                let z = x[0];
                [p.a * z + p.b * z * z + p.eps * z * z * z, 0.0]
            }
            Model::St2Min(p) => {
                let (u, y) = (x[0], x[1]);
                let mut f2 = p.a * u
                    + p.k1 * p.b * y
                    + p.b * u * u
                    + p.k2 * u * y
                    + u * u * y
                    + p.eps * u * u * u
                    + p.k3 * u * u * u * u;
                if let Some(e) = p.ext {
                    f2 += e.k4 * p.b * p.b * u * u + e.k5 * p.b * u * u * u;
                }
                [y, f2]
            }
            Model::CuspUnf(p) => {
                let z = x[0];
                [p.mu + p.nu * z + z * z * z, 0.0]
            }
            Model::DbtTrunc(p) => {
                let (z1, z2) = (x[0], x[1]);
                [
                    z2,
                    p.mu1 + p.mu2 * z1 + p.nu * z2 + p.k2 * z1 * z2 + z1 * z1 * z2 + p.eps * z1 * z1 * z1,
                ]
            }
        }
    }

    /// Unchecked Jacobian on a 2-slot state; for 1-D models only entry (0,0) is meaningful.
    #[inline]
    pub fn jac(&self, x: [f64; 2]) -> Matrix2 {
        match self {
            Model::Mlv(p) => {
                let (x1, x2) = (x[0], x[1]);
                Matrix2::new(
                    p.b1 + 2.0 * p.a11 * x1 + p.a12 * x2,
                    p.a12 * x1,
                    p.a21 * x2,
                    p.b2 + p.a21 * x1 + 2.0 * p.a22 * x2,
                )
            }
            Model::St1Min(p) => {
                let z = x[0];
                Matrix2::new(p.a + 2.0 * p.b * z + 3.0 * p.eps * z * z, 0.0, 0.0, 0.0)
            }
            Model::St2Min(p) => {
                let (u, y) = (x[0], x[1]);
                let mut c = p.a
                    + 2.0 * p.b * u
                    + p.k2 * y
                    + 2.0 * u * y
                    + 3.0 * p.eps * u * u
                    + 4.0 * p.k3 * u * u * u;
                if let Some(e) = p.ext {
                    c += 2.0 * e.k4 * p.b * p.b * u + 3.0 * e.k5 * p.b * u * u;
                }
                Matrix2::new(0.0, 1.0, c, p.k1 * p.b + p.k2 * u + u * u)
            }
            Model::CuspUnf(p) => Matrix2::new(p.nu + 3.0 * x[0] * x[0], 0.0, 0.0, 0.0),
            Model::DbtTrunc(p) => {
                let (z1, z2) = (x[0], x[1]);
                Matrix2::new(
                    0.0,
                    1.0,
                    p.mu2 + p.k2 * z2 + 2.0 * z1 * z2 + 3.0 * p.eps * z1 * z1,
                    p.nu + p.k2 * z1 + z1 * z1,
                )
            }
        }
    }

    /// Analytic second derivatives of the field.
    pub fn d2(&self, x: [f64; 2]) -> Tensor3 {
        let mut t = [[[0.0; 2]; 2]; 2];
        match self {
            Model::Mlv(p) => {
                t[0][0][0] = 2.0 * p.a11;
                t[0][0][1] = p.a12;
                t[0][1][0] = p.a12;
                t[1][0][1] = p.a21;
                t[1][1][0] = p.a21;
                t[1][1][1] = 2.0 * p.a22;
            }
            Model::St1Min(p) => t[0][0][0] = 2.0 * p.b + 6.0 * p.eps * x[0],
            Model::St2Min(p) => {
                let (u, y) = (x[0], x[1]);
                let mut xx = 2.0 * p.b + 2.0 * y + 6.0 * p.eps * u + 12.0 * p.k3 * u * u;
                if let Some(e) = p.ext {
                    xx += 2.0 * e.k4 * p.b * p.b + 6.0 * e.k5 * p.b * u;
                }
                t[1][0][0] = xx;
                t[1][0][1] = p.k2 + 2.0 * u;
                t[1][1][0] = p.k2 + 2.0 * u;
            }
            Model::CuspUnf(_) => t[0][0][0] = 6.0 * x[0],
            Model::DbtTrunc(p) => {
                let (z1, z2) = (x[0], x[1]);
                t[1][0][0] = 2.0 * z2 + 6.0 * p.eps * z1;
                t[1][0][1] = p.k2 + 2.0 * z1;
                t[1][1][0] = p.k2 + 2.0 * z1;
            }
        }
        t
    }

    /// Analytic third derivatives of the field.
    pub fn d3(&self, x: [f64; 2]) -> Tensor4 {
        let mut t = [[[[0.0; 2]; 2]; 2]; 2];
        let sym_xxy = |t: &mut Tensor4, v: f64| {
            t[1][0][0][1] = v;
            t[1][0][1][0] = v;
            t[1][1][0][0] = v;
        };
        match self {
            Model::Mlv(_) => {}
            Model::St1Min(p) => t[0][0][0][0] = 6.0 * p.eps,
            Model::St2Min(p) => {
                let mut xxx = 6.0 * p.eps + 24.0 * p.k3 * x[0];
                if let Some(e) = p.ext {
                    xxx += 6.0 * e.k5 * p.b;
                }
                t[1][0][0][0] = xxx;
                sym_xxy(&mut t, 2.0);
            }
            Model::CuspUnf(_) => t[0][0][0][0] = 6.0,
            Model::DbtTrunc(p) => {
                t[1][0][0][0] = 6.0 * p.eps;
                sym_xxy(&mut t, 2.0);
            }
        }
        t
    }

    /// Unchecked derivative of the field with respect to a named parameter.
    pub fn dfdp_raw(&self, name: &str, x: [f64; 2]) -> Result<[f64; 2]> {
        let (u, y) = (x[0], x[1]);
        let r = match (self, name) {
            (Model::Mlv(_), "b1") => [u, 0.0],
            (Model::Mlv(_), "b2") => [0.0, y],
            (Model::Mlv(_), "a11") => [u * u, 0.0],
            (Model::Mlv(_), "a12") => [u * y, 0.0],
            (Model::Mlv(_), "a21") => [0.0, u * y],
            (Model::Mlv(_), "a22") => [0.0, y * y],
            (Model::Mlv(_), "e") => [1.0, 0.0],
            (Model::St1Min(_), "a") => [u, 0.0],
            (Model::St1Min(_), "b") => [u * u, 0.0],
            (Model::St1Min(_), "eps") => [u * u * u, 0.0],
            (Model::St2Min(_), "a") => [0.0, u],
            (Model::St2Min(p), "b") => {
                let mut v = p.k1 * y + u * u;
                if let Some(e) = p.ext {
                    v += 2.0 * e.k4 * p.b * u * u + e.k5 * u * u * u;
                }
                [0.0, v]
            }
            (Model::St2Min(p), "k1") => [0.0, p.b * y],
            (Model::St2Min(_), "k2") => [0.0, u * y],
            (Model::St2Min(_), "k3") => [0.0, u * u * u * u],
            (Model::St2Min(_), "eps") => [0.0, u * u * u],
            (Model::St2Min(St2Params { ext: Some(_), b, .. }), "k4") => [0.0, b * b * u * u],
            (Model::St2Min(St2Params { ext: Some(_), b, .. }), "k5") => [0.0, b * u * u * u],
            (Model::CuspUnf(_), "mu") => [1.0, 0.0],
            (Model::CuspUnf(_), "nu") => [u, 0.0],
            (Model::DbtTrunc(_), "mu1") => [0.0, 1.0],
            (Model::DbtTrunc(_), "mu2") => [0.0, u],
            (Model::DbtTrunc(_), "nu") => [0.0, y],
            (Model::DbtTrunc(_), "k2") => [0.0, u * y],
            (Model::DbtTrunc(_), "eps") => [0.0, u * u * u],
            _ => return usage(format!("model {} has no parameter '{name}'", self.id().name())),
        };
        Ok(r)
    }

    fn pack(&self, x: &[f64]) -> [f64; 2] {
        [x[0], if x.len() > 1 { x[1] } else { 0.0 }]
    }

    /// Checked field evaluation.
    pub fn eval_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let f = self.f(self.pack(x));
        Ok(f[..self.dim()].to_vec())
    }

    /// Checked Jacobian evaluation.
    pub fn eval_jacobian(&self, x: &[f64]) -> Result<Jacobian> {
        self.check_dim(x)?;
        let j = self.jac(self.pack(x));
        Ok(if self.dim() == 1 { Jacobian::Scalar(j.a) } else { Jacobian::Planar(j) })
    }

    /// Checked parameter derivative of the field.
    pub fn eval_dfdp(&self, name: &str, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let d = self.dfdp_raw(name, self.pack(x))?;
        Ok(d[..self.dim()].to_vec())
    }
}

/// How coordinates and time transform under the scaling symmetries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub x1_factor: f64,
    pub x2_factor: f64,
    /// New time is `time_factor · t`.
    pub time_factor: f64,
}

impl Rescaling {
    pub fn apply_state(&self, x: [f64; 2]) -> [f64; 2] {
        [self.x1_factor * x[0], self.x2_factor * x[1]]
    }
}

/// The three scaling symmetries of the harvested model combined:
/// x1 → λx1, x2 → μx2, all rates ×κ with t → t/κ.
pub fn apply_symmetry_scaling(p: &MlvParams, lambda: f64, mu: f64, kappa: f64) -> Result<(MlvParams, Rescaling)> {
    for (n, v) in [("lambda", lambda), ("mu", mu), ("kappa", kappa)] {
        if v == 0.0 || !v.is_finite() {
            return usage(format!("scale factor {n} must be finite and nonzero"));
        }
    }
    let q = MlvParams {
        b1: kappa * p.b1,
        b2: kappa * p.b2,
        a11: kappa * p.a11 / lambda,
        a12: kappa * p.a12 / mu,
        a21: kappa * p.a21 / lambda,
        a22: kappa * p.a22 / mu,
        e: kappa * lambda * p.e,
    };
    Ok((q, Rescaling { x1_factor: lambda, x2_factor: mu, time_factor: 1.0 / kappa }))
}

/// Reflection (x, y, b, k1, k2, k3[, k4, k5]) → negatives, with a fixed.
pub fn reflect_st2(x: &[f64], model: &Model) -> Result<(Vec<f64>, Model)> {
    let Model::St2Min(p) = model else {
        return usage(format!("reflection is defined for ST2_MIN, not {}", model.id().name()));
    };
    if x.len() != 2 {
        return usage("ST2_MIN state must have dimension 2");
    }
    let q = St2Params {
        a: p.a,
        b: -p.b,
        k1: -p.k1,
        k2: -p.k2,
        k3: -p.k3,
        eps: p.eps,
        ext: p.ext.map(|e| St2Extension { k4: -e.k4, k5: -e.k5 }),
    };
    Ok((vec![-x[0], -x[1]], Model::St2Min(q)))
}
