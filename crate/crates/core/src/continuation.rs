//! Pseudo-arclength continuation of equilibria, fold and Hopf curves, the
//! closed-form transcritical curve of the harvested model, and codim-2 detection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{eigen2, Matrix2};
use crate::equilibria::EigenData;
use crate::error::{degenerate, usage, Error, Result};
use crate::models::{MlvParams, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CurveKind {
    Eq,
    Sn,
    Tc,
    Hb,
    Ns,
    Het,
    Hom,
}

impl CurveKind {
    pub fn label(self) -> &'static str {
        match self {
            CurveKind::Eq => "EQ",
            CurveKind::Sn => "SN",
            CurveKind::Tc => "TC",
            CurveKind::Hb => "HB",
            CurveKind::Ns => "NS",
            CurveKind::Het => "HET",
            CurveKind::Hom => "HOM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Codim2Kind {
    St1,
    St2,
    Bt,
    Cusp,
    SnHet,
    T0,
}

impl Codim2Kind {
    pub fn label(self) -> &'static str {
        match self {
            Codim2Kind::St1 => "ST1",
            Codim2Kind::St2 => "ST2",
            Codim2Kind::Bt => "BT",
            Codim2Kind::Cusp => "CUSP",
            Codim2Kind::SnHet => "SNHET",
            Codim2Kind::T0 => "T0",
        }
    }
}

/// Test function whose zero was localised at a branch point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// det J = 0 on an equilibrium branch with a turning parameter.
    Fold,
    /// tr J = 0 with det J > 0 on an equilibrium branch.
    Hopf,
    /// det J = 0 on an equilibrium branch without a turn (branch crossing).
    Branch,
    ZeroTrace,
    ZeroDet,
    /// The equilibrium reaches the invariant axis (x2 = 0).
    AxisContact,
    /// Fold quadratic coefficient vanishes.
    FoldCoeffZero,
    /// Eigenvalue along the axis vanishes on the transcritical curve.
    AxisTangentialZero,
    /// Quadratic transcritical coefficient vanishes.
    TcDegeneracy,
}

/// Test-function values recorded at each branch point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestValues {
    pub det: f64,
    pub trace: f64,
    /// Distance to the invariant axis (harvested model only).
    pub x2: Option<f64>,
    /// ∂f2/∂x2, the eigenvalue transverse to the axis when x2 = 0 (harvested model only).
    pub transverse: Option<f64>,
    /// ½⟨w, B(v,v)⟩ on fold curves, with unit right/left null vectors v, w
    /// oriented continuously along the curve (finite through double zeros).
    pub fold_coeff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub state: Vec<f64>,
    /// Values of the curve's free parameters, in `Curve::free_params` order.
    pub params: Vec<f64>,
    pub eigen: EigenData,
    pub tests: TestValues,
    /// Unit null vector of J (fold curves).
    pub null_vector: Option<[f64; 2]>,
    /// Unit left null vector of J (fold curves).
    pub left_null_vector: Option<[f64; 2]>,
    pub arclength: f64,
    /// Defining-system residual (max norm).
    pub residual: f64,
    /// Hopf-system point with det J < 0 (not a bifurcation).
    pub neutral_saddle: bool,
    pub event: Option<EventKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodimTwoPoint {
    pub kind: Codim2Kind,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    pub state: Vec<f64>,
    pub residuals: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub kind: CurveKind,
    /// Model with all fixed parameters (free ones hold the seed values).
    pub model: Model,
    pub free_params: Vec<String>,
    pub points: Vec<BranchPoint>,
    pub markers: Vec<CodimTwoPoint>,
    pub diagnostics: Vec<String>,
}

impl Curve {
    /// Model evaluated at point `i`.
    pub fn model_at(&self, i: usize) -> Result<Model> {
        let mut m = self.model;
        for (n, v) in self.free_params.iter().zip(&self.points[i].params) {
            m.set(n, *v)?;
        }
        Ok(m)
    }

    /// Maximal runs of points with equal `neutral_saddle` flag, as (kind, index range).
    pub fn segments(&self) -> Vec<(CurveKind, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.points.len() {
            if i == self.points.len() || self.points[i].neutral_saddle != self.points[start].neutral_saddle {
                if i > start {
                    let k = if self.points[start].neutral_saddle { CurveKind::Ns } else { self.kind };
                    out.push((k, start..i));
                }
                start = i;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContOpts {
    pub h0: f64,
    pub h_max: f64,
    pub h_min: f64,
    /// Points per direction.
    pub max_points: usize,
    pub max_iter: usize,
    pub corr_tol: f64,
    /// Arclength tolerance of event localisation.
    pub event_tol: f64,
    /// Bounds per free parameter; empty = unbounded.
    pub param_bounds: Vec<(f64, f64)>,
    /// Continuation stops once a state component exceeds this magnitude.
    pub state_bound: f64,
    pub both_directions: bool,
}

impl Default for ContOpts {
    fn default() -> Self {
        ContOpts {
            h0: 1e-2,
            h_max: 0.1,
            h_min: 1e-10,
            max_points: 5000,
            max_iter: 8,
            corr_tol: 1e-10,
            event_tol: 1e-10,
            param_bounds: Vec::new(),
            state_bound: 1e6,
            both_directions: true,
        }
    }
}

impl ContOpts {
    /// Same options with all step sizes multiplied by `f`.
    pub fn scaled_steps(&self, f: f64) -> ContOpts {
        ContOpts { h0: self.h0 * f, h_max: self.h_max * f, max_points: (self.max_points as f64 / f).ceil() as usize, ..self.clone() }
    }
}

/// A located point on a codim-1 curve used to seed its continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodimOnePoint {
    pub model: Model,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Defining {
    Eq,
    Fold,
    Hopf,
    /// Harvested model, interior equilibria: f2 divided by x2 and the reduced determinant.
    MlvInteriorFold,
    /// Harvested model restricted to the axis: x2 = 0 and the axis eigenvalue.
    MlvAxisFold,
    MlvInteriorHopf,
}

impl Defining {
    fn is_fold(self) -> bool {
        matches!(self, Defining::Fold | Defining::MlvInteriorFold | Defining::MlvAxisFold)
    }

    fn is_hopf(self) -> bool {
        matches!(self, Defining::Hopf | Defining::MlvInteriorHopf)
    }
}

struct System {
    base: Model,
    dim: usize,
    free: Vec<String>,
    defining: Defining,
    scale: f64,
}

impl System {
    fn new(base: Model, free: &[&str], defining: Defining) -> Result<Self> {
        let need = match defining {
            Defining::Eq => 1,
            _ => 2,
        };
        if free.len() != need {
            return usage(format!("expected {need} free parameter(s), got {}", free.len()));
        }
        for n in free {
            base.get(n)?;
        }
        if defining.is_hopf() && base.dim() != 2 {
            return usage("Hopf curves need a planar model");
        }
        Ok(System {
            base,
            dim: base.dim(),
            free: free.iter().map(|s| s.to_string()).collect(),
            defining,
            scale: base.param_scale(),
        })
    }

    fn n(&self) -> usize {
        self.dim + self.free.len()
    }

    fn model(&self, u: &DVector<f64>) -> Model {
        let mut m = self.base;
        for (k, n) in self.free.iter().enumerate() {
            // names were checked in `new`
            let _ = m.set(n, u[self.dim + k]);
        }
        m
    }

    fn x(&self, u: &DVector<f64>) -> [f64; 2] {
        [u[0], if self.dim > 1 { u[1] } else { 0.0 }]
    }

    fn jac_of(&self, m: &Model, x: [f64; 2]) -> Matrix2 {
        let j = m.jac(x);
        if self.dim == 1 {
            Matrix2::new(j.a, 0.0, 0.0, 0.0)
        } else {
            j
        }
    }

    /// Scaled residual of the defining system.
    fn g(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = self.model(u);
        let x = self.x(u);
        let f = m.f(x);
        let mut r = DVector::zeros(self.n() - 1);
        for i in 0..self.dim {
            r[i] = f[i] / self.scale;
        }
        let j = self.jac_of(&m, x);
        match self.defining {
            Defining::Eq => {}
            Defining::Fold => {
                r[self.dim] = if self.dim == 1 { j.a / self.scale } else { j.det() / (self.scale * self.scale) }
            }
            Defining::Hopf => r[self.dim] = j.trace() / self.scale,
            Defining::MlvInteriorFold | Defining::MlvAxisFold | Defining::MlvInteriorHopf => {
                let Model::Mlv(p) = m else { unreachable!("harvested-model system on another model") };
                let s = self.scale;
                match self.defining {
                    Defining::MlvInteriorFold => {
                        r[1] = (p.b2 + p.a21 * x[0] + p.a22 * x[1]) / s;
                        r[2] = (j.a * p.a22 - j.b * p.a21) / (s * s);
                    }
                    Defining::MlvAxisFold => {
                        r[1] = x[1];
                        r[2] = j.a / s;
                    }
                    _ => {
                        r[1] = (p.b2 + p.a21 * x[0] + p.a22 * x[1]) / s;
                        r[2] = j.trace() / s;
                    }
                }
            }
        }
        r
    }

    fn dg(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mut d = DMatrix::zeros(n - 1, n);
        for k in 0..n {
            let h = 1e-6 * u[k].abs().max(1.0);
            let mut up = u.clone();
            let mut um = u.clone();
            up[k] += h;
            um[k] -= h;
            let c = (self.g(&up) - self.g(&um)) / (2.0 * h);
            d.set_column(k, &c);
        }
        d
    }
}

/// Null vector of an (n−1)×n matrix from signed maximal minors.
fn null_vector(d: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = d.ncols();
    let mut t = DVector::zeros(n);
    for k in 0..n {
        let minor = d.clone().remove_column(k);
        let s = if k % 2 == 0 { 1.0 } else { -1.0 };
        t[k] = s * minor.determinant();
    }
    let nn = t.norm();
    if nn == 0.0 || !nn.is_finite() {
        None
    } else {
        Some(t / nn)
    }
}

fn tangent(sys: &System, u: &DVector<f64>, prev: Option<&DVector<f64>>) -> Option<DVector<f64>> {
    let d = sys.dg(u);
    let mut t = match prev {
        Some(p) => {
            let n = sys.n();
            let mut a = DMatrix::zeros(n, n);
            a.view_mut((0, 0), (n - 1, n)).copy_from(&d);
            a.set_row(n - 1, &p.transpose());
            let mut rhs = DVector::zeros(n);
            rhs[n - 1] = 1.0;
            match a.lu().solve(&rhs) {
                Some(t) if t.iter().all(|v| v.is_finite()) && t.norm() > 0.0 => t.normalize(),
                _ => null_vector(&d)?,
            }
        }
        None => null_vector(&d)?,
    };
    if let Some(p) = prev {
        if t.dot(p) < 0.0 {
            t = -t;
        }
    }
    Some(t)
}

/// Keller corrector on the hyperplane through `pred` orthogonal to `t`.
fn correct(sys: &System, pred: &DVector<f64>, t: &DVector<f64>, opts: &ContOpts) -> Option<(DVector<f64>, usize)> {
    let n = sys.n();
    let mut u = pred.clone();
    for it in 1..=opts.max_iter {
        let g = sys.g(&u);
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, n - 1).copy_from(&(-&g));
        rhs[n - 1] = -t.dot(&(&u - pred));
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n - 1, n)).copy_from(&sys.dg(&u));
        a.set_row(n - 1, &t.transpose());
        let du = a.lu().solve(&rhs)?;
        if !du.iter().all(|v| v.is_finite()) {
            return None;
        }
        u += &du;
        let step = du.amax();
        let res = sys.g(&u).amax();
        if step <= opts.corr_tol * (1.0 + u.amax()) && res <= opts.corr_tol {
            return Some((u, it));
        }
    }
    None
}

type NullPair = [[f64; 2]; 2];

fn fold_data(m: &Model, x: [f64; 2], j: &Matrix2, dim: usize, prev: Option<NullPair>) -> (Option<NullPair>, Option<f64>) {
    let d2 = m.d2(x);
    if dim == 1 {
        return (Some([[1.0, 0.0], [1.0, 0.0]]), Some(0.5 * d2[0][0][0]));
    }
    let rows = [(j.a, j.b), (j.c, j.d)];
    let (ra, rb) = if j.a.hypot(j.b) >= j.c.hypot(j.d) { rows[0] } else { rows[1] };
    let nr = ra.hypot(rb);
    let cols = [(j.a, j.c), (j.b, j.d)];
    let (ca, cc) = if j.a.hypot(j.c) >= j.b.hypot(j.d) { cols[0] } else { cols[1] };
    let nc = ca.hypot(cc);
    if nr == 0.0 || nc == 0.0 {
        return (None, None);
    }
    let mut v = [-rb / nr, ra / nr];
    let mut w = [-cc / nc, ca / nc];
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    if let Some([pv, pw]) = prev {
        if dot(v, pv) < 0.0 {
            v = [-v[0], -v[1]];
        }
        if dot(w, pw) < 0.0 {
            w = [-w[0], -w[1]];
        }
    }
    let mut bvv = [0.0; 2];
    for (i, b) in bvv.iter_mut().enumerate() {
        for a in 0..2 {
            for c in 0..2 {
                *b += d2[i][a][c] * v[a] * v[c];
            }
        }
    }
    (Some([v, w]), Some(0.5 * dot(w, bvv)))
}

fn make_point(sys: &System, u: &DVector<f64>, s: f64, prev_v: Option<NullPair>) -> BranchPoint {
    let m = sys.model(u);
    let x = sys.x(u);
    let j = sys.jac_of(&m, x);
    let eigen = if sys.dim == 1 { EigenData::Scalar(j.a) } else { EigenData::Planar(eigen2(&j)) };
    let is_mlv = matches!(m, Model::Mlv(_));
    let (nulls, fold_coeff) = if sys.defining.is_fold() {
        fold_data(&m, x, &j, sys.dim, prev_v)
    } else {
        (None, None)
    };
    let det = if sys.dim == 1 { j.a } else { j.det() };
    BranchPoint {
        state: x[..sys.dim].to_vec(),
        params: u.rows(sys.dim, sys.free.len()).iter().copied().collect(),
        eigen,
        tests: TestValues {
            det,
            trace: j.trace(),
            x2: is_mlv.then_some(x[1]),
            transverse: is_mlv.then_some(j.d),
            fold_coeff,
        },
        null_vector: nulls.map(|n| n[0]),
        left_null_vector: nulls.map(|n| n[1]),
        arclength: s,
        residual: sys.g(u).amax() * sys.scale,
        neutral_saddle: sys.defining.is_hopf() && det < 0.0,
        event: None,
    }
}

fn nulls_of(p: &BranchPoint) -> Option<NullPair> {
    p.null_vector.zip(p.left_null_vector).map(|(v, w)| [v, w])
}

/// Test functions monitored for a defining system, paired with their event kinds.
fn monitored(sys: &System, p: &BranchPoint) -> Vec<(EventKind, f64)> {
    let t = &p.tests;
    let mut out = Vec::new();
    match sys.defining {
        Defining::Eq => {
            out.push((EventKind::Fold, t.det));
            if sys.dim == 2 {
                out.push((EventKind::Hopf, t.trace));
            }
        }
        Defining::Fold | Defining::MlvInteriorFold | Defining::MlvAxisFold => {
            if sys.dim == 2 {
                out.push((EventKind::ZeroTrace, t.trace));
            }
            if let Some(x2) = t.x2 {
                out.push((EventKind::AxisContact, x2));
            }
            if let Some(c) = t.fold_coeff {
                out.push((EventKind::FoldCoeffZero, c));
            }
        }
        Defining::Hopf | Defining::MlvInteriorHopf => out.push((EventKind::ZeroDet, t.det)),
    }
    out
}

fn sign_change(a: f64, b: f64) -> bool {
    (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0) || (b == 0.0 && a != 0.0)
}

/// Localises the zero of the `idx`-th monitored test function between arclength
/// offsets 0 and h from `ua` along `ta`.
fn locate_event(
    sys: &System,
    ua: &DVector<f64>,
    ta: &DVector<f64>,
    h: f64,
    idx: usize,
    ga: f64,
    gb: f64,
    opts: &ContOpts,
    prev_v: Option<NullPair>,
) -> Option<DVector<f64>> {
    let eval = |s: f64| -> Option<(DVector<f64>, f64)> {
        let pred = ua + ta * s;
        let (u, _) = correct(sys, &pred, ta, opts)?;
        let p = make_point(sys, &u, 0.0, prev_v);
        let g = monitored(sys, &p).get(idx)?.1;
        Some((u, g))
    };
    let (mut a, mut b, mut fa, mut fb) = (0.0, h, ga, gb);
    let mut best: Option<DVector<f64>> = None;
    for _ in 0..200 {
        if (b - a).abs() <= opts.event_tol {
            break;
        }
        let m = 0.5 * (a + b);
        match eval(m) {
            Some((u, g)) => {
                if g == 0.0 {
                    return Some(u);
                }
                if sign_change(fa, g) || (fa == 0.0) {
                    b = m;
                    fb = g;
                } else {
                    a = m;
                    fa = g;
                }
                best = Some(u);
            }
            None => break,
        }
    }
    let s = if fb != fa { a - fa * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
    let s = s.clamp(a.min(b), a.max(b));
    eval(s).map(|(u, _)| u).or(best)
}

struct RunResult {
    points: Vec<BranchPoint>,
    diagnostic: Option<String>,
}

fn in_window(sys: &System, u: &DVector<f64>, opts: &ContOpts) -> bool {
    for (k, (lo, hi)) in opts.param_bounds.iter().enumerate().take(sys.free.len()) {
        let v = u[sys.dim + k];
        if v < *lo || v > *hi {
            return false;
        }
    }
    (0..sys.dim).all(|i| u[i].abs() <= opts.state_bound)
}

fn run_direction(sys: &System, u0: &DVector<f64>, t0: &DVector<f64>, opts: &ContOpts, sign: f64) -> RunResult {
    let mut points = Vec::new();
    let mut u = u0.clone();
    let mut t = t0 * sign;
    let mut h = opts.h0.min(0.9 * opts.h_max);
    let mut s = 0.0;
    let mut prev_v = None;
    let mut cur = make_point(sys, &u, 0.0, None);
    prev_v = nulls_of(&cur).or(prev_v);
    let mut travelled = 0.0;
    let mut diagnostic = None;
    while points.len() < opts.max_points {
        let pred = &u + &t * h;
        let ok = correct(sys, &pred, &t, opts).and_then(|(un, it)| {
            let dist = (&un - &u).norm();
            if dist > opts.h_max || dist > 2.0 * h {
                return None;
            }
            let tn = tangent(sys, &un, Some(&t))?;
            if tn.dot(&t) < 0.8 {
                return None;
            }
            Some((un, it, tn, dist))
        });
        let Some((un, it, tn, dist)) = ok else {
            h *= 0.5;
            if h < opts.h_min {
                diagnostic = Some(format!("corrector failed below minimum step at arclength {:.6e}", sign * s));
                break;
            }
            continue;
        };
        s += dist;
        travelled += dist;
        let mut next = make_point(sys, &un, sign * s, prev_v);
        // events between cur and next, in arclength order
        let ga = monitored(sys, &cur);
        let gb = monitored(sys, &next);
        let mut evs: Vec<BranchPoint> = Vec::new();
        for (idx, ((kind, a), (_, b))) in ga.iter().zip(gb.iter()).enumerate() {
            if !sign_change(*a, *b) {
                continue;
            }
            if let Some(ue) = locate_event(sys, &u, &t, h, idx, *a, *b, opts, prev_v) {
                let se = s - dist + (&ue - &u).norm();
                let mut ep = make_point(sys, &ue, sign * se, prev_v);
                let mut k = *kind;
                if sys.defining == Defining::Eq {
                    if k == EventKind::Fold {
                        let pc = sys.dim;
                        if t[pc] * tn[pc] > 0.0 {
                            k = EventKind::Branch;
                        }
                    } else if k == EventKind::Hopf && ep.tests.det <= 0.0 {
                        continue;
                    }
                }
                ep.event = Some(k);
                evs.push(ep);
            }
        }
        evs.sort_by(|a, b| a.arclength.abs().total_cmp(&b.arclength.abs()));
        if points.is_empty() {
            points.push(cur.clone());
        }
        points.extend(evs);
        prev_v = nulls_of(&next).or(prev_v);
        next.arclength = sign * s;
        let inside = in_window(sys, &un, opts);
        points.push(next.clone());
        u = un;
        t = tn;
        cur = next;
        if !inside {
            break;
        }
        if travelled > 10.0 * h && (&u - u0).norm() < 0.5 * h.min(opts.h_max) {
            diagnostic = Some("curve closed on itself".into());
            break;
        }
        if it <= 3 {
            h = (h * 1.3).min(0.9 * opts.h_max);
        }
    }
    if points.is_empty() {
        points.push(cur);
    }
    RunResult { points, diagnostic }
}

fn continue_system(sys: System, seed: DVector<f64>, opts: &ContOpts, kind: CurveKind) -> Result<Curve> {
    if !(opts.h0 > 0.0 && opts.h_max > 0.0 && opts.h_min > 0.0 && opts.corr_tol > 0.0) {
        return usage("continuation step sizes and tolerances must be positive");
    }
    let t0 = tangent(&sys, &seed, None).ok_or_else(|| Error::Numerical("singular defining system at the seed".into()))?;
    let (u0, _) = correct(&sys, &seed, &t0, opts)
        .ok_or_else(|| Error::Numerical("corrector failed at the seed; start is not on the curve".into()))?;
    let t0 = tangent(&sys, &u0, Some(&t0)).ok_or_else(|| Error::Numerical("no tangent at the seed".into()))?;
    let fwd = run_direction(&sys, &u0, &t0, opts, 1.0);
    let mut points = Vec::new();
    let mut diagnostics = Vec::new();
    if opts.both_directions {
        let bwd = run_direction(&sys, &u0, &t0, opts, -1.0);
        points.extend(bwd.points.into_iter().skip(1).rev());
        diagnostics.extend(bwd.diagnostic.map(|d| format!("backward: {d}")));
    }
    points.extend(fwd.points);
    diagnostics.extend(fwd.diagnostic.map(|d| format!("forward: {d}")));
    let mut model = sys.base;
    for (k, n) in sys.free.iter().enumerate() {
        model.set(n, u0[sys.dim + k])?;
    }
    let mut curve = Curve { kind, model, free_params: sys.free.clone(), points, markers: Vec::new(), diagnostics };
    curve.markers = detect_codim2(&curve);
    Ok(curve)
}

fn seed_vector(model: &Model, state: &[f64], free: &[&str]) -> Result<DVector<f64>> {
    if state.len() != model.dim() || state.iter().any(|v| !v.is_finite()) {
        return usage("seed state must be finite and match the model dimension");
    }
    let mut v: Vec<f64> = state.to_vec();
    for n in free {
        v.push(model.get(n)?);
    }
    Ok(DVector::from_vec(v))
}

/// Equilibrium branch in one free parameter; emits fold, Hopf and branch-crossing events.
pub fn continue_equilibrium_branch(model: &Model, free_param: &str, start: &[f64], opts: &ContOpts) -> Result<Curve> {
    let sys = System::new(*model, &[free_param], Defining::Eq)?;
    let seed = seed_vector(model, start, &[free_param])?;
    if sys.g(&seed).amax() > 1e-6 {
        return usage("start is not an equilibrium");
    }
    continue_system(sys, seed, opts, CurveKind::Eq)
}

/// Fold (saddle-node) curve in two free parameters.
pub fn continue_fold_curve(free_params: (&str, &str), start: &CodimOnePoint, opts: &ContOpts) -> Result<Curve> {
    let defining = match start.model {
        Model::Mlv(_) if start.state.get(1) == Some(&0.0) => Defining::MlvAxisFold,
        Model::Mlv(_) => Defining::MlvInteriorFold,
        _ => Defining::Fold,
    };
    let sys = System::new(start.model, &[free_params.0, free_params.1], defining)?;
    let seed = seed_vector(&start.model, &start.state, &[free_params.0, free_params.1])?;
    if sys.g(&seed).amax() > 1e-6 {
        return usage("start does not satisfy the fold conditions");
    }
    continue_system(sys, seed, opts, CurveKind::Sn)
}

/// Hopf curve {F = 0, tr J = 0}; points with det J < 0 are flagged neutral saddles.
pub fn continue_hopf_curve(free_params: (&str, &str), start: &CodimOnePoint, opts: &ContOpts) -> Result<Curve> {
    let defining = if matches!(start.model, Model::Mlv(_)) { Defining::MlvInteriorHopf } else { Defining::Hopf };
    let sys = System::new(start.model, &[free_params.0, free_params.1], defining)?;
    let seed = seed_vector(&start.model, &start.state, &[free_params.0, free_params.1])?;
    if sys.g(&seed).amax() > 1e-6 {
        return usage("start does not satisfy the Hopf conditions");
    }
    continue_system(sys, seed, opts, CurveKind::Hb)
}

/// Fold of the axis equilibria: x1 = −b1/(2a11), e = b1²/(4a11).
pub fn mlv_axis_fold_seed(p: &MlvParams, b2: f64) -> Result<CodimOnePoint> {
    if p.a11 == 0.0 {
        return degenerate("a11 = 0: the axis equilibria have no fold");
    }
    let x1 = -p.b1 / (2.0 * p.a11);
    let q = MlvParams { e: p.b1 * p.b1 / (4.0 * p.a11), b2, ..*p };
    Ok(CodimOnePoint { model: Model::Mlv(q), state: vec![x1, 0.0] })
}

/// Fold of the interior equilibria at given b2.
pub fn mlv_interior_fold_seed(p: &MlvParams, b2: f64) -> Result<CodimOnePoint> {
    let d1 = p.a11 * p.a22 - p.a12 * p.a21;
    if d1 == 0.0 || p.a22 == 0.0 {
        return degenerate("D1 = 0 or a22 = 0: no interior fold");
    }
    let c = p.b1 * p.a22 - p.a12 * b2;
    let x1 = -c / (2.0 * d1);
    let x2 = -(b2 + p.a21 * x1) / p.a22;
    let q = MlvParams { e: c * c / (4.0 * d1 * p.a22), b2, ..*p };
    Ok(CodimOnePoint { model: Model::Mlv(q), state: vec![x1, x2] })
}

/// Interior equilibrium with zero trace, parametrised by x1.
pub fn mlv_hopf_seed(p: &MlvParams, x1: f64) -> Result<CodimOnePoint> {
    if p.a12 + p.a22 == 0.0 || p.a22 == 0.0 {
        return degenerate("a12 + a22 = 0 or a22 = 0: Hopf set not a graph over x1");
    }
    let x2 = -(p.b1 + 2.0 * p.a11 * x1) / (p.a12 + p.a22);
    let b2 = -p.a21 * x1 - p.a22 * x2;
    let e = -x1 * (p.b1 + p.a11 * x1 + p.a12 * x2);
    Ok(CodimOnePoint { model: Model::Mlv(MlvParams { e, b2, ..*p }), state: vec![x1, x2] })
}

fn tc_point(p: &MlvParams, x1: f64, s: f64) -> BranchPoint {
    let e = -(x1 * (p.b1 + p.a11 * x1));
    let b2 = -(p.a21 * x1);
    let m = Model::Mlv(MlvParams { e, b2, ..*p });
    let x = [x1, 0.0];
    let j = m.jac(x);
    let f = m.f(x);
    BranchPoint {
        state: vec![x1, 0.0],
        params: vec![e, b2],
        eigen: EigenData::Planar(eigen2(&j)),
        tests: TestValues { det: j.det(), trace: j.trace(), x2: Some(0.0), transverse: Some(j.d), fold_coeff: None },
        null_vector: None,
        left_null_vector: None,
        arclength: s,
        residual: f[0].abs().max(f[1].abs()),
        neutral_saddle: false,
        event: None,
    }
}

fn tc_tests(p: &MlvParams, x1: f64) -> [(EventKind, f64); 2] {
    let tang = p.b1 + 2.0 * p.a11 * x1;
    [(EventKind::AxisTangentialZero, tang), (EventKind::TcDegeneracy, p.a22 * tang - p.a12 * p.a21 * x1)]
}

/// Transcritical curve of the harvested model in closed form over `x1_range`.
pub fn tc_curve_mlv(p: &MlvParams, x1_range: (f64, f64)) -> Result<Curve> {
    tc_curve_mlv_n(p, x1_range, 400)
}

pub fn tc_curve_mlv_n(p: &MlvParams, x1_range: (f64, f64), n: usize) -> Result<Curve> {
    if p.a21 == 0.0 {
        return degenerate("a21 = 0: no transcritical curve");
    }
    let (lo, hi) = x1_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || n < 2 {
        return usage("x1 range must be finite and increasing, with at least two samples");
    }
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let arc = |x1: f64| {
        // arclength proxy in (x1, e, b2)
        let e = -(x1 * (p.b1 + p.a11 * x1));
        (x1, e, -(p.a21 * x1))
    };
    let mut points = Vec::new();
    let mut s = 0.0;
    let mut last = arc(xs[0]);
    for (i, &x1) in xs.iter().enumerate() {
        let c = arc(x1);
        s += ((c.0 - last.0).powi(2) + (c.1 - last.1).powi(2) + (c.2 - last.2).powi(2)).sqrt();
        last = c;
        if i > 0 {
            let a = xs[i - 1];
            let ta = tc_tests(p, a);
            let tb = tc_tests(p, x1);
            let mut evs = Vec::new();
            for k in 0..2 {
                if !sign_change(ta[k].1, tb[k].1) {
                    continue;
                }
                let (mut l, mut r, fl) = (a, x1, ta[k].1);
                for _ in 0..200 {
                    let m = 0.5 * (l + r);
                    if m == l || m == r {
                        break;
                    }
                    let g = tc_tests(p, m)[k].1;
                    if g == 0.0 {
                        l = m;
                        r = m;
                        break;
                    }
                    if sign_change(fl, g) {
                        r = m;
                    } else {
                        l = m;
                    }
                }
                let xe = if tc_tests(p, l)[k].1.abs() <= tc_tests(p, r)[k].1.abs() { l } else { r };
                let mut ep = tc_point(p, xe, s);
                ep.event = Some(ta[k].0);
                evs.push((xe, ep));
            }
            evs.sort_by(|u, v| u.0.total_cmp(&v.0));
            points.extend(evs.into_iter().map(|e| e.1));
        }
        points.push(tc_point(p, x1, s));
    }
    let mut curve = Curve {
        kind: CurveKind::Tc,
        model: Model::Mlv(*p),
        free_params: vec!["e".into(), "b2".into()],
        points,
        markers: Vec::new(),
        diagnostics: Vec::new(),
    };
    curve.markers = detect_codim2(&curve);
    Ok(curve)
}

fn spectral(p: &BranchPoint) -> (f64, f64) {
    // eigenvalue of smallest and of largest magnitude
    let v = p.eigen.re_im();
    let mags: Vec<f64> = v.iter().map(|(r, i)| r.hypot(*i)).collect();
    let lo = mags.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mags.iter().copied().fold(0.0, f64::max);
    (lo, hi)
}

/// Spectral scale of a Jacobian at a branch point, from trace and determinant.
fn point_scale(p: &BranchPoint) -> f64 {
    p.tests.trace.abs().max(p.tests.det.abs().sqrt()).max(1.0)
}

/// Threshold below which the second eigenvalue counts as zero.
pub const SECOND_EIG_TOL: f64 = 1e-6;

fn axis_tol(p: &BranchPoint) -> f64 {
    1e-8 * p.state.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

fn marker(curve: &Curve, p: &BranchPoint, kind: Codim2Kind) -> CodimTwoPoint {
    let mut residuals = vec![("residual".to_string(), p.residual), ("det".into(), p.tests.det), ("trace".into(), p.tests.trace)];
    if let Some(x2) = p.tests.x2 {
        residuals.push(("x2".into(), x2));
    }
    if let Some(c) = p.tests.fold_coeff {
        residuals.push(("fold_coeff".into(), c));
    }
    CodimTwoPoint {
        kind,
        param_names: curve.free_params.clone(),
        params: p.params.clone(),
        state: p.state.clone(),
        residuals,
    }
}

fn classify_event(curve: &Curve, p: &BranchPoint, ev: EventKind) -> Option<Codim2Kind> {
    let on_axis = p.tests.x2.map(|x2| x2.abs() <= axis_tol(p)).unwrap_or(false);
    match (curve.kind, ev) {
        (CurveKind::Sn, EventKind::ZeroTrace) | (CurveKind::Hb, EventKind::ZeroDet) => {
            Some(if on_axis { Codim2Kind::St2 } else { Codim2Kind::Bt })
        }
        (CurveKind::Sn, EventKind::AxisContact) => {
            // the fold's own eigenvalue is ≈ 0; the other is the trace
            let second = p.tests.trace.abs();
            Some(if second < SECOND_EIG_TOL * point_scale(p) { Codim2Kind::St2 } else { Codim2Kind::St1 })
        }
        (CurveKind::Sn, EventKind::FoldCoeffZero) => {
            let (_, hi) = spectral(p);
            (p.tests.trace.abs() >= SECOND_EIG_TOL * point_scale(p) || hi == 0.0).then_some(Codim2Kind::Cusp)
        }
        (CurveKind::Tc, EventKind::AxisTangentialZero) => Some(Codim2Kind::St2),
        (CurveKind::Tc, EventKind::TcDegeneracy) => Some(Codim2Kind::St1),
        _ => None,
    }
}

/// Codim-2 points of a curve: localised events are classified directly; sign
/// changes without a localised event are interpolated linearly.
pub fn detect_codim2(curve: &Curve) -> Vec<CodimTwoPoint> {
    let mut out: Vec<CodimTwoPoint> = Vec::new();
    let mut push = |m: CodimTwoPoint| {
        let dup = out.iter().any(|o| {
            o.kind == m.kind && o.params.iter().zip(&m.params).all(|(a, b)| (a - b).abs() <= 1e-7 * a.abs().max(1.0))
        });
        if !dup {
            out.push(m);
        }
    };
    for p in &curve.points {
        if let Some(ev) = p.event {
            if let Some(k) = classify_event(curve, p, ev) {
                push(marker(curve, p, k));
            }
        }
    }
    // fallback for curves assembled without localised events
    let probes: &[EventKind] = match curve.kind {
        CurveKind::Sn => &[EventKind::ZeroTrace, EventKind::AxisContact, EventKind::FoldCoeffZero],
        CurveKind::Hb => &[EventKind::ZeroDet],
        _ => &[],
    };
    let value = |p: &BranchPoint, ev: EventKind| -> Option<f64> {
        match ev {
            EventKind::ZeroTrace => Some(p.tests.trace),
            EventKind::AxisContact => p.tests.x2,
            EventKind::FoldCoeffZero => p.tests.fold_coeff,
            EventKind::ZeroDet => Some(p.tests.det),
            _ => None,
        }
    };
    for &ev in probes {
        for w in curve.points.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.event == Some(ev) || b.event == Some(ev) {
                continue;
            }
            let (Some(ga), Some(gb)) = (value(a, ev), value(b, ev)) else { continue };
            if !sign_change(ga, gb) {
                continue;
            }
            let th = ga / (ga - gb);
            let lerp = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x + th * (y - x)).collect::<Vec<_>>();
            let mut q = a.clone();
            q.params = lerp(&a.params, &b.params);
            q.state = lerp(&a.state, &b.state);
            q.tests.trace = a.tests.trace + th * (b.tests.trace - a.tests.trace);
            q.tests.det = a.tests.det + th * (b.tests.det - a.tests.det);
            q.tests.x2 = a.tests.x2.zip(b.tests.x2).map(|(x, y)| x + th * (y - x));
            if let Some(k) = classify_event(curve, &q, ev) {
                push(marker(curve, &q, k));
            }
        }
    }
    // the fold coefficient vanishes identically at a saddle-node–transcritical
    // point (triple equilibrium), so a coincident cusp zero is not a separate point
    let st: Vec<Vec<f64>> =
        out.iter().filter(|m| matches!(m.kind, Codim2Kind::St1 | Codim2Kind::St2)).map(|m| m.params.clone()).collect();
    out.retain(|m| {
        m.kind != Codim2Kind::Cusp
            || !st.iter().any(|q| q.iter().zip(&m.params).all(|(a, b)| (a - b).abs() <= CUSP_MERGE_TOL * a.abs().max(1.0)))
    });
    out
}

/// Relative parameter distance under which a cusp zero merges with an ST point.
pub const CUSP_MERGE_TOL: f64 = 1e-4;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{St1Params, St2Params};

    #[test]
    fn tc_curve_is_exact() {
        let p = MlvParams::saddle_case(0.0, 0.0);
        let c = tc_curve_mlv(&p, (-2.0, 6.0)).unwrap();
        for q in &c.points {
            assert_eq!(q.residual, 0.0);
            assert_eq!(q.tests.transverse, Some(0.0));
        }
        let st1 = c.markers.iter().find(|m| m.kind == Codim2Kind::St1).unwrap();
        assert!((st1.params[0] - 14.0625).abs() < 1e-12 && (st1.params[1] + 7.5).abs() < 1e-12);
        let st2 = c.markers.iter().find(|m| m.kind == Codim2Kind::St2).unwrap();
        assert!((st2.params[0] + 11.25).abs() < 1e-12 && (st2.params[1] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn st1_min_branch_events() {
        let m = Model::St1Min(St1Params { a: -1.0, b: 2.0, eps: 1.0 });
        let opts = ContOpts { param_bounds: vec![(-1.5, 1.5)], ..Default::default() };
        let c = continue_equilibrium_branch(&m, "a", &[0.0], &opts).unwrap();
        let br: Vec<_> = c.points.iter().filter(|p| p.event == Some(EventKind::Branch)).collect();
        assert_eq!(br.len(), 1);
        assert!(br[0].params[0].abs() < 1e-9);
        // nontrivial branch z = −1 at a = 1 − ... : start at a = 0.75, z = −0.5 (z² + 2z + 0.75 = 0)
        let m = Model::St1Min(St1Params { a: 0.75, b: 2.0, eps: 1.0 });
        let c = continue_equilibrium_branch(&m, "a", &[-0.5], &opts).unwrap();
        let f: Vec<_> = c.points.iter().filter(|p| p.event == Some(EventKind::Fold)).collect();
        assert_eq!(f.len(), 1);
        assert!((f[0].params[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn st2_min_hopf_line() {
        let k = (10f64.sqrt() / 2.0, 8.0 / 10f64.sqrt(), 10f64.sqrt() / 15.0);
        let m = Model::St2Min(St2Params::new(-0.5, 0.0, k.0, k.1, k.2, 1.0));
        let opts = ContOpts { param_bounds: vec![(-1.0, 0.5), (-0.5, 0.5)], h_max: 0.05, ..Default::default() };
        let c = continue_hopf_curve(("a", "b"), &CodimOnePoint { model: m, state: vec![0.0, 0.0] }, &opts).unwrap();
        for p in &c.points {
            assert!(p.params[1].abs() < 1e-9);
            assert_eq!(p.neutral_saddle, p.params[0] > 0.0);
        }
        assert!(c.markers.iter().any(|m| m.kind == Codim2Kind::Bt && m.params[0].abs() < 1e-9));
    }

    fn mlv_opts() -> ContOpts {
        ContOpts { param_bounds: vec![(-40.0, 40.0), (-20.0, 10.0)], h_max: 0.2, ..Default::default() }
    }

    #[test]
    fn mlv_saddle_codim2() {
        let p = MlvParams::saddle_case(0.0, 0.0);
        let sn = continue_fold_curve(("e", "b2"), &mlv_interior_fold_seed(&p, -5.0).unwrap(), &mlv_opts()).unwrap();
        let kinds: Vec<_> = sn.markers.iter().map(|m| (m.kind, m.params.clone())).collect();
        let st1 = sn.markers.iter().find(|m| m.kind == Codim2Kind::St1).expect("ST1");
        assert!((st1.params[0] - 14.0625).abs() < 1e-6 && (st1.params[1] + 7.5).abs() < 1e-6, "{kinds:?}");
        let bt = sn.markers.iter().find(|m| m.kind == Codim2Kind::Bt).expect("BT");
        assert!((bt.params[1] + 60.0 / 11.0).abs() < 1e-6, "{kinds:?}");
        let ax = continue_fold_curve(("e", "b2"), &mlv_axis_fold_seed(&p, 0.0).unwrap(), &mlv_opts()).unwrap();
        let st2 = ax.markers.iter().find(|m| m.kind == Codim2Kind::St2).expect("ST2");
        assert!((st2.params[0] + 11.25).abs() < 1e-6 && (st2.params[1] + 3.0).abs() < 1e-6);
        for q in &sn.points {
            assert!(q.tests.det.abs() < 1e-8 && q.residual < 1e-10 * 15.0);
        }
        let hb = continue_hopf_curve(("e", "b2"), &mlv_hopf_seed(&p, 2.0).unwrap(), &mlv_opts()).unwrap();
        let k: Vec<_> = hb.markers.iter().map(|m| (m.kind, m.params.clone())).collect();
        assert!(hb.markers.iter().any(|m| m.kind == Codim2Kind::Bt && (m.params[1] + 60.0 / 11.0).abs() < 1e-6), "{k:?}");
        assert!(hb.markers.iter().any(|m| m.kind == Codim2Kind::St2 && (m.params[0] + 11.25).abs() < 1e-6), "{k:?}");
    }

    #[test]
    fn mlv_elliptic_st2() {
        let p = MlvParams::elliptic_case(0.0, 0.0);
        let ax = continue_fold_curve(("e", "b2"), &mlv_axis_fold_seed(&p, 0.0).unwrap(), &mlv_opts()).unwrap();
        let st2 = ax.markers.iter().find(|m| m.kind == Codim2Kind::St2).expect("ST2");
        assert!((st2.params[0] - 225.0 / 28.0).abs() < 1e-6 && (st2.params[1] - 15.0 / 7.0).abs() < 1e-6);
    }
}
