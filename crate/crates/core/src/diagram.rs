//! Two-parameter bifurcation diagrams: automatic seeding of every curve kind,
//! codimension-two points, saddle-node loop segments, region samples, and
//! CSV/JSON/SVG serialisation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::continuation::{
    continue_fold_curve, continue_hopf_curve, mlv_axis_fold_seed, mlv_hopf_seed, mlv_interior_fold_seed, tc_curve_mlv,
    BranchPoint, Codim2Kind, CodimOnePoint, CodimTwoPoint, ContOpts, Curve, CurveKind, TestValues,
};
use crate::equilibria::{find_equilibria, Classification, EigenData, Equilibrium};
use crate::error::{usage, Error, Result};
use crate::global::{
    classify_sn_segment, find_connection, find_connection_with, splitting, ConnectionSpec, SaddleSelector, SectionSpec,
    SnKind, SnOpts, TraceBudget,
};
use crate::models::{MlvParams, Model, ModelId, St2Params};
use crate::normalform::{min2_sn_curve, st1_point, st2_point};
use crate::walk::st2_het_spec;

/// What to compute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramSpec {
    pub model: ModelId,
    /// Fixed parameter values overriding the model template.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// The two active parameters (horizontal, vertical).
    pub active: [String; 2],
    /// Plot window per active parameter; derived from the codim-2 points when absent.
    #[serde(default)]
    pub ranges: Option<[[f64; 2]; 2]>,
    #[serde(default = "all_kinds")]
    pub curves: Vec<CurveKind>,
    #[serde(default = "yes")]
    pub codim2: bool,
    /// Region samples on an n×n grid (0 disables).
    #[serde(default = "default_region_grid")]
    pub region_grid: usize,
    #[serde(default)]
    pub options: DiagramOpts,
}

fn all_kinds() -> Vec<CurveKind> {
    vec![CurveKind::Sn, CurveKind::Tc, CurveKind::Hb, CurveKind::Het, CurveKind::Hom]
}

fn yes() -> bool {
    true
}

fn default_region_grid() -> usize {
    6
}

/// Numerical knobs of diagram assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagramOpts {
    /// Smallest distance from the codim-2 point reached by connection scans.
    pub connection_s_min: f64,
    /// Number of geometric levels in a connection scan.
    pub connection_levels: usize,
    /// Fold points classified per saddle-node curve.
    pub sn_samples: usize,
    /// Saddle-node loop ball radius relative to the diagram scale.
    pub sn_ball: f64,
    pub sn_budget: f64,
    /// Margin added around the codim-2 points when deriving the window.
    pub margin: f64,
}

impl Default for DiagramOpts {
    fn default() -> Self {
        DiagramOpts { connection_s_min: 1e-5, connection_levels: 28, sn_samples: 24, sn_ball: 1e-3, sn_budget: 1e4, margin: 0.2 }
    }
}

/// Kind of a consecutive run of classified fold points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnSegment {
    pub curve_id: usize,
    pub kind: SnKind,
    /// Active-parameter values of the first and last classified point.
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub samples: usize,
}

/// Where a connection curve ends as the scan approaches its organising point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub curve_id: usize,
    pub kind: CurveKind,
    pub endpoint: [f64; 2],
    /// Distance in the active-parameter plane to the nearest codim-2 point of each kind.
    pub distance_to: BTreeMap<String, f64>,
    /// Distance to the nearest saddle-node curve point away from codim-2 points.
    pub distance_to_sn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSample {
    pub params: [f64; 2],
    /// Classification counts, e.g. "saddle" → 2.
    pub census: BTreeMap<String, usize>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagram {
    pub model: Model,
    pub active: [String; 2],
    pub window: [[f64; 2]; 2],
    pub curves: Vec<Curve>,
    pub points: Vec<CodimTwoPoint>,
    pub sn_segments: Vec<SnSegment>,
    pub terminations: Vec<Termination>,
    pub regions: Vec<RegionSample>,
    /// Requested curve kinds that could not be seeded.
    pub not_found: Vec<String>,
    pub diagnostics: Vec<String>,
}

impl Diagram {
    pub fn curves_of(&self, kind: CurveKind) -> impl Iterator<Item = (usize, &Curve)> {
        self.curves.iter().enumerate().filter(move |(_, c)| c.kind == kind)
    }

    pub fn points_of(&self, kind: Codim2Kind) -> impl Iterator<Item = &CodimTwoPoint> {
        self.points.iter().filter(move |p| p.kind == kind)
    }

    /// Point `p` of a curve in (active[0], active[1]) order.
    pub fn active_coords(&self, curve: &Curve, p: &BranchPoint) -> [f64; 2] {
        let get = |name: &str| {
            curve.free_params.iter().position(|n| n == name).map(|i| p.params[i]).unwrap_or(f64::NAN)
        };
        [get(&self.active[0]), get(&self.active[1])]
    }

    fn codim2_coords(&self, c: &CodimTwoPoint) -> [f64; 2] {
        let get = |name: &str| c.param_names.iter().position(|n| n == name).map(|i| c.params[i]).unwrap_or(f64::NAN);
        [get(&self.active[0]), get(&self.active[1])]
    }
}

fn model_from_spec(spec: &DiagramSpec) -> Result<Model> {
    if spec.active[0] == spec.active[1] {
        return usage("active parameters must be distinct");
    }
    let m = Model::from_values(spec.model, spec.params.iter().map(|(k, v)| (k.as_str(), *v)))?;
    for a in &spec.active {
        m.get(a)?;
    }
    if let Some(r) = spec.ranges {
        for (i, w) in r.iter().enumerate() {
            if !(w[0].is_finite() && w[1].is_finite() && w[0] < w[1]) {
                return usage(format!("range of '{}' must be finite and increasing", spec.active[i]));
            }
        }
    }
    Ok(m)
}

/// Assembles the diagram described by `spec`.
pub fn build_diagram(spec: &DiagramSpec) -> Result<Diagram> {
    let model = model_from_spec(spec)?;
    match model {
        Model::Mlv(p) => {
            let mut names = spec.active.clone();
            names.sort();
            if names != ["b2".to_string(), "e".to_string()] {
                return usage("MLV diagrams use the active parameters e and b2");
            }
            build_mlv(spec, p)
        }
        Model::St2Min(p) => {
            let mut names = spec.active.clone();
            names.sort();
            if names != ["a".to_string(), "b".to_string()] {
                return usage("ST2_MIN diagrams use the active parameters a and b");
            }
            build_st2(spec, p)
        }
        _ => usage(format!("diagrams are available for MLV and ST2_MIN, not {}", model.id().name())),
    }
}

type Bounds = [[f64; 2]; 2];

fn bounds_in(spec: &DiagramSpec, b: Bounds, names: [&str; 2]) -> Bounds {
    if spec.active[0] == names[0] {
        b
    } else {
        [b[1], b[0]]
    }
}

fn cont_opts(b: Bounds) -> ContOpts {
    let diag = ((b[0][1] - b[0][0]).powi(2) + (b[1][1] - b[1][0]).powi(2)).sqrt();
    ContOpts {
        h0: 1e-3 * diag,
        h_max: 0.01 * diag,
        param_bounds: vec![(b[0][0], b[0][1]), (b[1][0], b[1][1])],
        ..ContOpts::default()
    }
}

fn box_around(pts: &[[f64; 2]], grow: f64, min_span: f64) -> Bounds {
    let mut b = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
    for p in pts {
        for k in 0..2 {
            b[k][0] = b[k][0].min(p[k]);
            b[k][1] = b[k][1].max(p[k]);
        }
    }
    for r in b.iter_mut() {
        let span = (r[1] - r[0]).max(min_span);
        let c = 0.5 * (r[0] + r[1]);
        r[0] = c - 0.5 * span - grow * span;
        r[1] = c + 0.5 * span + grow * span;
    }
    b
}

fn inside(b: &Bounds, p: [f64; 2]) -> bool {
    let tol = 1e-9;
    (0..2).all(|k| {
        let s = (b[k][1] - b[k][0]).abs() * tol;
        p[k] >= b[k][0] - s && p[k] <= b[k][1] + s
    })
}

fn eig_point(model: &Model, state: [f64; 2], params: Vec<f64>, s: f64) -> BranchPoint {
    let j = model.jac(state);
    let f = model.f(state);
    BranchPoint {
        state: state.to_vec(),
        params,
        eigen: EigenData::Planar(crate::algebra::eigen2(&j)),
        tests: TestValues { det: j.det(), trace: j.trace(), x2: None, transverse: None, fold_coeff: None },
        null_vector: None,
        left_null_vector: None,
        arclength: s,
        residual: f[0].abs().max(f[1].abs()),
        neutral_saddle: false,
        event: None,
    }
}

/// Splits a curve at the window boundary into pieces lying inside it.
fn clip(curve: Curve, win: &Bounds, order: [&str; 2]) -> Vec<Curve> {
    let idx: Vec<usize> = order
        .iter()
        .map(|n| curve.free_params.iter().position(|f| f == n).unwrap_or(0))
        .collect();
    let mut pieces = Vec::new();
    let mut cur: Vec<BranchPoint> = Vec::new();
    let flush = |cur: &mut Vec<BranchPoint>, pieces: &mut Vec<Vec<BranchPoint>>| {
        if cur.len() >= 2 {
            pieces.push(std::mem::take(cur));
        } else {
            cur.clear();
        }
    };
    for p in curve.points.iter() {
        if inside(win, [p.params[idx[0]], p.params[idx[1]]]) {
            cur.push(p.clone());
        } else {
            flush(&mut cur, &mut pieces);
        }
    }
    flush(&mut cur, &mut pieces);
    pieces
        .into_iter()
        .map(|pts| {
            let mut c = Curve { points: pts, markers: Vec::new(), ..curve.clone() };
            c.markers = curve
                .markers
                .iter()
                .filter(|m| {
                    let v: Vec<f64> = order
                        .iter()
                        .map(|n| m.param_names.iter().position(|f| f == n).map(|i| m.params[i]).unwrap_or(f64::NAN))
                        .collect();
                    inside(win, [v[0], v[1]])
                })
                .cloned()
                .collect();
            c
        })
        .collect()
}

fn dedupe_points(all: Vec<CodimTwoPoint>, scale: f64) -> Vec<CodimTwoPoint> {
    let mut out: Vec<CodimTwoPoint> = Vec::new();
    for p in all {
        let dup = out.iter().any(|q| {
            q.kind == p.kind
                && q.param_names == p.param_names
                && q.params.iter().zip(&p.params).all(|(a, b)| (a - b).abs() <= 1e-6 * scale)
        });
        if !dup {
            out.push(p);
        }
    }
    out
}

struct Assembly {
    curves: Vec<Curve>,
    diagnostics: Vec<String>,
}

impl Assembly {
    fn add(&mut self, label: &str, r: Result<Curve>) {
        match r {
            Ok(c) if c.points.len() >= 2 => {
                self.diagnostics.extend(c.diagnostics.iter().map(|d| format!("{label}: {d}")));
                self.curves.push(c);
            }
            Ok(_) => self.diagnostics.push(format!("{label}: curve has fewer than two points")),
            Err(e) => self.diagnostics.push(format!("{label}: {e}")),
        }
    }
}

fn mlv_hb_e(p: &MlvParams, b2: f64) -> Option<(f64, [f64; 2])> {
    // on the Hopf set b2 is affine in x1
    let g = p.a12 + p.a22;
    if g == 0.0 {
        return None;
    }
    let alpha = -p.a21 + 2.0 * p.a11 * p.a22 / g;
    let beta = p.a22 * p.b1 / g;
    if alpha == 0.0 {
        return None;
    }
    let x1 = (b2 - beta) / alpha;
    let s = mlv_hopf_seed(p, x1).ok()?;
    Some((s.model.get("e").ok()?, [s.state[0], s.state[1]]))
}

fn build_mlv(spec: &DiagramSpec, p: MlvParams) -> Result<Diagram> {
    let names = ["e", "b2"];
    let st1 = st1_point(&p).ok();
    let st2 = st2_point(&p).ok();
    let mut anchors = Vec::new();
    if let Some(d) = &st1 {
        anchors.push([d.e_star, d.b2_star]);
    }
    if let Some(d) = &st2 {
        anchors.push([d.e_star, d.b2_star]);
    }
    // (e, b2) search box
    let search: Bounds = match spec.ranges {
        Some(r) => bounds_in(spec, r, names),
        None if !anchors.is_empty() => box_around(&anchors, 2.0, 1.0),
        None => return usage("ranges are required when no closed-form codim-2 point exists"),
    };
    let opts = cont_opts(search);
    let b2_mid = 0.5 * (search[1][0] + search[1][1]);
    let mut asm = Assembly { curves: Vec::new(), diagnostics: Vec::new() };
    let want = |k: CurveKind| spec.curves.contains(&k);

    if want(CurveKind::Sn) {
        let e_axis = p.b1 * p.b1 / (4.0 * p.a11);
        if e_axis >= search[0][0] && e_axis <= search[0][1] {
            asm.add("axis SN", mlv_axis_fold_seed(&p, b2_mid).and_then(|s| continue_fold_curve(("e", "b2"), &s, &opts)));
        }
        // interior fold: first level in the box whose closed-form fold lies inside
        let seed = (0..=8)
            .map(|k| search[1][0] + (search[1][1] - search[1][0]) * (0.5 + (k as f64 - 4.0) / 9.0))
            .filter_map(|b2| mlv_interior_fold_seed(&p, b2).ok())
            .find(|s| {
                let e = s.model.get("e").unwrap_or(f64::NAN);
                e >= search[0][0] && e <= search[0][1]
            });
        match seed {
            Some(s) => asm.add("interior SN", continue_fold_curve(("e", "b2"), &s, &opts)),
            None => asm.diagnostics.push("interior SN: no fold inside the search box".into()),
        }
    }
    if want(CurveKind::Tc) && p.a21 != 0.0 {
        let xa = -search[1][0] / p.a21;
        let xb = -search[1][1] / p.a21;
        asm.add("TC", tc_curve_mlv(&p, (xa.min(xb), xa.max(xb))));
    }
    if want(CurveKind::Hb) {
        let seed = (0..=16)
            .map(|k| search[1][0] + (search[1][1] - search[1][0]) * (k as f64 + 0.5) / 17.0)
            .filter_map(|b2| mlv_hb_e(&p, b2).map(|(e, x)| (b2, e, x)))
            .filter(|(_, e, _)| *e >= search[0][0] && *e <= search[0][1])
            .map(|(b2, e, x)| {
                let m = Model::Mlv(MlvParams { e, b2, ..p });
                (m.jac(x).det(), CodimOnePoint { model: m, state: x.to_vec() })
            })
            .max_by(|a, b| a.0.total_cmp(&b.0));
        match seed {
            Some((_, s)) => asm.add("HB", continue_hopf_curve(("e", "b2"), &s, &opts)),
            None => asm.diagnostics.push("HB: no trace-zero equilibrium inside the search box".into()),
        }
    }

    let scale = p.max_abs();
    let mut points: Vec<CodimTwoPoint> = if spec.codim2 {
        dedupe_points(asm.curves.iter().flat_map(|c| c.markers.clone()).collect(), scale)
    } else {
        Vec::new()
    };
    points.retain(|c| {
        let v = [c.params[0], c.params[1]];
        inside(&search, v)
    });

    // connection curves organised by the triple-equilibrium point
    if let Some(d) = &st2 {
        if want(CurveKind::Het) || want(CurveKind::Hom) {
            let (het, hom, diag) = mlv_connections(spec, &p, d.e_star, d.b2_star, &search);
            asm.diagnostics.extend(diag);
            if want(CurveKind::Het) {
                asm.curves.extend(het);
            }
            if want(CurveKind::Hom) {
                asm.curves.extend(hom);
            }
        }
    }

    let window_eb: Bounds = match spec.ranges {
        Some(r) => bounds_in(spec, r, names),
        None => {
            let pts: Vec<[f64; 2]> = points.iter().map(|c| [c.params[0], c.params[1]]).collect();
            if pts.is_empty() {
                search
            } else {
                box_around(&pts, spec.options.margin, 1e-3 * scale)
            }
        }
    };
    finish(spec, Model::Mlv(p), asm, points, window_eb, names)
}

fn mlv_connections(
    spec: &DiagramSpec,
    p: &MlvParams,
    e_star: f64,
    b2_star: f64,
    search: &Bounds,
) -> (Vec<Curve>, Vec<Curve>, Vec<String>) {
    let mut diag = Vec::new();
    // side of the organising point on which the Hopf set has det J > 0
    let side = [1.0, -1.0].into_iter().find(|&sg| {
        let b2 = b2_star + sg * 1e-3 * (search[1][1] - search[1][0]);
        mlv_hb_e(p, b2).map(|(e, x)| Model::Mlv(MlvParams { e, b2, ..*p }).jac(x).det() > 0.0).unwrap_or(false)
    });
    let Some(side) = side else {
        diag.push("connections: no Hopf points next to the triple-equilibrium point".into());
        return (Vec::new(), Vec::new(), diag);
    };
    let reach = if side > 0.0 { search[1][1] - b2_star } else { b2_star - search[1][0] };
    let s0 = 0.5 * reach;
    let n = spec.options.connection_levels.max(2);
    let q = (spec.options.connection_s_min / s0).powf(1.0 / (n - 1) as f64);
    let mut het_pts = Vec::new();
    let mut hom_pts = Vec::new();
    let base = Model::Mlv(*p);
    for k in 0..n {
        let s = s0 * q.powi(k as i32);
        let b2 = b2_star + side * s;
        let Some((e_hb, _)) = mlv_hb_e(p, b2) else { continue };
        let d = e_hb - e_star;
        let t_max = 10.0 * 1e3f64.max(100.0 / d.abs().sqrt());
        let budget = TraceBudget { t_max, arclength_max: 1e3, state_bound: 1e3, tol: 1e-12 };
        let m = match base.with("b2", b2) {
            Ok(m) => m,
            Err(_) => continue,
        };
        // heteroclinic between the two axis saddles, beyond the Hopf curve
        let het = ConnectionSpec {
            source: SaddleSelector::AxisRight,
            target: SaddleSelector::AxisLeft,
            unstable_side: 1.0,
            stable_side: 1.0,
            section: SectionSpec::Bisector,
            delta: 1e-6,
            budget,
        };
        if let Ok(sol) = find_connection(&m, "e", (e_hb + 1e-3 * d, e_hb + 0.5 * d), &het) {
            if let Ok(mm) = m.with("e", sol.param) {
                if let Ok(r) = splitting(&mm, &het) {
                    het_pts.push((s, eig_point(&mm, r.source, vec![sol.param, b2], 0.0)));
                }
            }
        }
        // homoclinic loop of an interior saddle, between the fold line and the Hopf curve
        let mid = match m.with("e", e_hb - 0.5 * d) {
            Ok(mm) => mm,
            Err(_) => continue,
        };
        let interior_saddle = find_equilibria(&mid)
            .ok()
            .and_then(|eqs| eqs.into_iter().find(|q| q.classification == Classification::Saddle && !q.on_axis));
        if let Some(sd) = interior_saddle {
            let hom = ConnectionSpec {
                source: SaddleSelector::Nearest(sd.xy()),
                target: SaddleSelector::Nearest(sd.xy()),
                unstable_side: 1.0,
                stable_side: 1.0,
                section: SectionSpec::OppositeSide,
                delta: 1e-8f64.max(1e-6 * s.sqrt()),
                budget: TraceBudget { t_max: 1e5, tol: 1e-10, ..TraceBudget::default() },
            };
            let lo = e_hb - 0.5 * d;
            let hi = e_hb - 1e-3 * d;
            if let Ok(sol) = find_connection_with(&m, "e", (lo, hi), 1e-11 * d.abs().max(1e-12), |mm| {
                splitting(mm, &hom).map(|r| r.splitting)
            }) {
                if let Ok(mm) = m.with("e", sol.param) {
                    if let Ok(r) = splitting(&mm, &hom) {
                        hom_pts.push((s, eig_point(&mm, r.source, vec![sol.param, b2], 0.0)));
                    }
                }
            }
        }
    }
    let mk = |kind: CurveKind, pts: Vec<(f64, BranchPoint)>| -> Vec<Curve> {
        if pts.len() < 2 {
            return Vec::new();
        }
        let mut s_acc = 0.0;
        let mut prev: Option<[f64; 2]> = None;
        let points = pts
            .into_iter()
            .map(|(_, mut bp)| {
                let c = [bp.params[0], bp.params[1]];
                if let Some(q) = prev {
                    s_acc += ((c[0] - q[0]).powi(2) + (c[1] - q[1]).powi(2)).sqrt();
                }
                prev = Some(c);
                bp.arclength = s_acc;
                bp
            })
            .collect();
        vec![Curve {
            kind,
            model: Model::Mlv(*p),
            free_params: vec!["e".into(), "b2".into()],
            points,
            markers: Vec::new(),
            diagnostics: Vec::new(),
        }]
    };
    if het_pts.len() < 2 {
        diag.push("Het: fewer than two connection points found".into());
    }
    if hom_pts.len() < 2 {
        diag.push("Hom: fewer than two connection points found".into());
    }
    (mk(CurveKind::Het, het_pts), mk(CurveKind::Hom, hom_pts), diag)
}

fn build_st2(spec: &DiagramSpec, p: St2Params) -> Result<Diagram> {
    let names = ["a", "b"];
    let search: Bounds = match spec.ranges {
        Some(r) => bounds_in(spec, r, names),
        None => [[-0.1, 0.1], [-0.1, 0.1]],
    };
    let opts = cont_opts(search);
    let mut asm = Assembly { curves: Vec::new(), diagnostics: Vec::new() };
    let want = |k: CurveKind| spec.curves.contains(&k);
    let model = Model::St2Min(p);
    if want(CurveKind::Sn) {
        // a single fold curve passes through the origin
        let b = 0.3 * search[1][1].abs().max(search[1][0].abs());
        match min2_sn_curve(b, p.eps, p.k3, Some(p.k1)) {
            Ok((a, Some(x))) => {
                let seed = CodimOnePoint { model: Model::St2Min(St2Params { a, b, ..p }), state: vec![x, 0.0] };
                asm.add("SN", continue_fold_curve(("a", "b"), &seed, &opts));
            }
            _ => asm.diagnostics.push(format!("SN: no closed-form fold at b = {b}")),
        }
    }
    if want(CurveKind::Tc) {
        let n = 201;
        let points = (0..n)
            .map(|i| {
                let b = search[1][0] + (search[1][1] - search[1][0]) * i as f64 / (n - 1) as f64;
                let m = Model::St2Min(St2Params { a: 0.0, b, ..p });
                let mut bp = eig_point(&m, [0.0, 0.0], vec![0.0, b], b - search[1][0]);
                bp.tests.transverse = Some(0.0);
                bp
            })
            .collect();
        asm.curves.push(Curve {
            kind: CurveKind::Tc,
            model,
            free_params: vec!["a".into(), "b".into()],
            points,
            markers: Vec::new(),
            diagnostics: Vec::new(),
        });
    }
    if want(CurveKind::Hb) {
        let a = 0.5 * search[0][0].min(-1e-6);
        let seed = CodimOnePoint { model: Model::St2Min(St2Params { a, b: 0.0, ..p }), state: vec![0.0, 0.0] };
        asm.add("HB", continue_hopf_curve(("a", "b"), &seed, &opts));
    }
    let mut points = if spec.codim2 {
        dedupe_points(asm.curves.iter().flat_map(|c| c.markers.clone()).collect(), 1.0)
    } else {
        Vec::new()
    };
    points.retain(|c| inside(&search, [c.params[0], c.params[1]]));
    if spec.codim2 {
        // the origin is the double-zero point in closed form; detections on
        // curves passing through it are replaced by the exact marker
        let near = 1e-3 * (search[0][1] - search[0][0]).hypot(search[1][1] - search[1][0]);
        points.retain(|c| c.params[0].hypot(c.params[1]) > near);
        points.insert(
            0,
            CodimTwoPoint {
                kind: Codim2Kind::St2,
                param_names: vec!["a".into(), "b".into()],
                params: vec![0.0, 0.0],
                state: vec![0.0, 0.0],
                residuals: vec![("residual".into(), 0.0)],
            },
        );
    }
    if want(CurveKind::Het) && p.eps > 0.0 {
        let mut pts = Vec::new();
        let n = spec.options.connection_levels.max(2);
        for k in 0..n {
            let a = search[0][0] * (k as f64 + 1.0) / n as f64;
            let m = Model::St2Min(St2Params { a, ..p });
            // cycle side of the Hopf line lies where k1·b < 0 for a positive Lyapunov coefficient
            let bmax = search[1][1].abs().max(search[1][0].abs());
            for upper in [true, false] {
                let f = |mm: &Model| {
                    st2_het_spec(mm, upper)
                        .ok_or_else(|| Error::NotFound("no saddle pair".into()))
                        .and_then(|s| splitting(mm, &s).map(|r| r.splitting))
                };
                for sg in [-1.0, 1.0] {
                    if let Ok(sol) = find_connection_with(&m, "b", (sg * 1e-6 * bmax, sg * bmax), 1e-10, f) {
                        if let Ok(mm) = m.with("b", sol.param) {
                            if let Some(spec2) = st2_het_spec(&mm, upper) {
                                if let Ok(r) = splitting(&mm, &spec2) {
                                    pts.push(eig_point(&mm, r.source, vec![a, sol.param], 0.0));
                                }
                            }
                        }
                    }
                }
            }
        }
        if pts.len() >= 2 {
            pts.sort_by(|x, y| x.params[0].total_cmp(&y.params[0]));
            asm.curves.push(Curve {
                kind: CurveKind::Het,
                model,
                free_params: vec!["a".into(), "b".into()],
                points: pts,
                markers: Vec::new(),
                diagnostics: Vec::new(),
            });
        } else {
            asm.diagnostics.push("Het: fewer than two connection points found".into());
        }
    }
    let window: Bounds = search;
    finish(spec, model, asm, points, window, names)
}

fn fold_state(p: &BranchPoint) -> [f64; 2] {
    [p.state[0], p.state[1]]
}

fn finish(
    spec: &DiagramSpec,
    model: Model,
    asm: Assembly,
    points: Vec<CodimTwoPoint>,
    window_native: Bounds,
    names: [&str; 2],
) -> Result<Diagram> {
    let window = bounds_in(spec, window_native, names);
    let mut curves = Vec::new();
    for c in asm.curves {
        curves.extend(clip(c, &window_native, names));
    }
    let points: Vec<CodimTwoPoint> = points.into_iter().filter(|c| inside(&window_native, [c.params[0], c.params[1]])).collect();
    let mut d = Diagram {
        model,
        active: spec.active.clone(),
        window,
        curves,
        points,
        sn_segments: Vec::new(),
        terminations: Vec::new(),
        regions: Vec::new(),
        not_found: Vec::new(),
        diagnostics: asm.diagnostics,
    };
    for k in &spec.curves {
        if d.curves_of(*k).next().is_none() {
            d.not_found.push(k.label().to_string());
        }
    }
    let scale = (window[0][1] - window[0][0]).hypot(window[1][1] - window[1][0]);
    classify_sn_curves(&mut d, spec, scale);
    terminations(&mut d);
    if spec.region_grid > 0 {
        d.regions = region_samples(&d, spec.region_grid)?;
    }
    Ok(d)
}

fn classify_sn_curves(d: &mut Diagram, spec: &DiagramSpec, scale: f64) {
    let opts = SnOpts { r: spec.options.sn_ball * scale, t_budget: spec.options.sn_budget, ..SnOpts::for_scale(scale) };
    let mut segs = Vec::new();
    for (id, c) in d.curves.iter().enumerate().filter(|(_, c)| c.kind == CurveKind::Sn) {
        let n = spec.options.sn_samples.max(2).min(c.points.len());
        let mut run: Option<SnSegment> = None;
        for k in 0..n {
            let i = if n == 1 { 0 } else { k * (c.points.len() - 1) / (n - 1) };
            let bp = &c.points[i];
            let Ok(m) = c.model_at(i) else { continue };
            let Ok(cl) = classify_sn_segment(&m, fold_state(bp), &opts) else { continue };
            let at = d.active_coords(c, bp);
            match &mut run {
                Some(r) if r.kind == cl.kind => {
                    r.to = at;
                    r.samples += 1;
                }
                _ => {
                    if let Some(r) = run.take() {
                        segs.push(r);
                    }
                    run = Some(SnSegment { curve_id: id, kind: cl.kind, from: at, to: at, samples: 1 });
                }
            }
        }
        segs.extend(run);
    }
    d.sn_segments = segs;
}

fn terminations(d: &mut Diagram) {
    let mut out = Vec::new();
    for (id, c) in d.curves.iter().enumerate() {
        if !matches!(c.kind, CurveKind::Het | CurveKind::Hom) {
            continue;
        }
        let Some(last) = c.points.last() else { continue };
        let end = d.active_coords(c, last);
        let mut distance_to = BTreeMap::new();
        for p in &d.points {
            let q = d.codim2_coords(p);
            let dist = (q[0] - end[0]).hypot(q[1] - end[1]);
            let e = distance_to.entry(p.kind.label().to_string()).or_insert(f64::INFINITY);
            *e = f64::min(*e, dist);
        }
        // nearest saddle-node point that is not itself a codim-2 point
        let mut dsn = f64::INFINITY;
        for s in d.curves.iter().filter(|s| s.kind == CurveKind::Sn) {
            for w in s.points.windows(2) {
                let a = d.active_coords(s, &w[0]);
                let b = d.active_coords(s, &w[1]);
                dsn = dsn.min(segment_distance(end, a, b));
            }
        }
        out.push(Termination { curve_id: id, kind: c.kind, endpoint: end, distance_to, distance_to_sn: dsn });
    }
    d.terminations = out;
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 > 0.0 { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * ab[0]).hypot(p[1] - a[1] - t * ab[1])
}

fn class_name(c: Classification) -> &'static str {
    match c {
        Classification::Sink => "sink",
        Classification::Source => "source",
        Classification::Saddle => "saddle",
        Classification::NonhyperbolicFoldType => "fold",
        Classification::NonhyperbolicHopfType => "hopf",
        Classification::DoubleZero => "double-zero",
        Classification::Degenerate => "degenerate",
    }
}

fn census(eqs: &[Equilibrium]) -> (BTreeMap<String, usize>, String) {
    let mut m = BTreeMap::new();
    for e in eqs {
        *m.entry(class_name(e.classification).to_string()).or_insert(0) += 1;
    }
    let label = if m.is_empty() {
        "no equilibria".to_string()
    } else {
        m.iter().map(|(k, v)| format!("{v} {k}")).collect::<Vec<_>>().join(", ")
    };
    (m, label)
}

fn region_samples(d: &Diagram, n: usize) -> Result<Vec<RegionSample>> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let u = [
                d.window[0][0] + (d.window[0][1] - d.window[0][0]) * (i as f64 + 0.5) / n as f64,
                d.window[1][0] + (d.window[1][1] - d.window[1][0]) * (j as f64 + 0.5) / n as f64,
            ];
            let m = d.model.with(&d.active[0], u[0])?.with(&d.active[1], u[1])?;
            let eqs = find_equilibria(&m)?;
            let (census, label) = census(&eqs);
            out.push(RegionSample { params: u, census, label });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- output

pub const CSV_HEADER: &str =
    "curve_id,kind,param1_name,param1,param2_name,param2,x1,x2,eig_re1,eig_im1,eig_re2,eig_im2";

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "nan".into()
    }
}

/// One row per curve point; HB curves report their neutral-saddle points as NS.
pub fn curves_csv(d: &Diagram) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for (id, c) in d.curves.iter().enumerate() {
        for p in &c.points {
            let kind = if p.neutral_saddle { CurveKind::Ns } else { c.kind };
            let a = d.active_coords(c, p);
            let ev = p.eigen.re_im();
            let e2 = ev.get(1).copied().unwrap_or((f64::NAN, f64::NAN));
            let x2 = p.state.get(1).copied().unwrap_or(0.0);
            let _ = writeln!(
                s,
                "{id},{},{},{},{},{},{},{},{},{},{},{}",
                kind.label(),
                d.active[0],
                num(a[0]),
                d.active[1],
                num(a[1]),
                num(p.state[0]),
                num(x2),
                num(ev[0].0),
                num(ev[0].1),
                num(e2.0),
                num(e2.1)
            );
        }
    }
    s
}

/// A parsed row of `curves.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub curve_id: usize,
    pub kind: String,
    pub param1_name: String,
    pub param1: f64,
    pub param2_name: String,
    pub param2: f64,
    pub x1: f64,
    pub x2: f64,
    pub eig: [f64; 4],
}

pub fn parse_curves_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return usage("curves.csv header mismatch");
    }
    let f = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|_| Error::Usage(format!("bad number '{s}'"))) };
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != 12 {
                return usage(format!("expected 12 columns, got {}", c.len()));
            }
            Ok(CsvRow {
                curve_id: c[0].parse().map_err(|_| Error::Usage(format!("bad curve id '{}'", c[0])))?,
                kind: c[1].into(),
                param1_name: c[2].into(),
                param1: f(c[3])?,
                param2_name: c[4].into(),
                param2: f(c[5])?,
                x1: f(c[6])?,
                x2: f(c[7])?,
                eig: [f(c[8])?, f(c[9])?, f(c[10])?, f(c[11])?],
            })
        })
        .collect()
}

#[derive(Serialize)]
struct PointsJson<'a> {
    model: &'a Model,
    active: &'a [String; 2],
    window: &'a [[f64; 2]; 2],
    codim2: Vec<PointJson<'a>>,
    curves: Vec<CurveSummary>,
    sn_segments: &'a [SnSegment],
    terminations: &'a [Termination],
    regions: &'a [RegionSample],
    not_found: &'a [String],
    diagnostics: &'a [String],
}

#[derive(Serialize)]
struct PointJson<'a> {
    kind: &'static str,
    params: BTreeMap<&'a str, f64>,
    state: &'a [f64],
    residuals: &'a [(String, f64)],
}

#[derive(Serialize)]
struct CurveSummary {
    id: usize,
    kind: &'static str,
    points: usize,
    segments: Vec<(&'static str, usize, usize)>,
}

pub fn points_json(d: &Diagram) -> serde_json::Value {
    let codim2 = d
        .points
        .iter()
        .map(|p| PointJson {
            kind: p.kind.label(),
            params: p.param_names.iter().map(|s| s.as_str()).zip(p.params.iter().copied()).collect(),
            state: &p.state,
            residuals: &p.residuals,
        })
        .collect();
    let curves = d
        .curves
        .iter()
        .enumerate()
        .map(|(id, c)| CurveSummary {
            id,
            kind: c.kind.label(),
            points: c.points.len(),
            segments: c.segments().into_iter().map(|(k, r)| (k.label(), r.start, r.end)).collect(),
        })
        .collect();
    serde_json::to_value(PointsJson {
        model: &d.model,
        active: &d.active,
        window: &d.window,
        codim2,
        curves,
        sn_segments: &d.sn_segments,
        terminations: &d.terminations,
        regions: &d.regions,
        not_found: &d.not_found,
        diagnostics: &d.diagnostics,
    })
    .unwrap_or(serde_json::Value::Null)
}

fn colour(kind: CurveKind) -> &'static str {
    match kind {
        CurveKind::Sn => "#1f4e9c",
        CurveKind::Tc => "#2a8a3a",
        CurveKind::Hb => "#c0392b",
        CurveKind::Ns => "#c0392b",
        CurveKind::Het => "#8e44ad",
        CurveKind::Hom => "#d35400",
        CurveKind::Eq => "#555555",
    }
}

/// Flat SVG: axes, one polyline per curve segment, markers and labels.
pub fn render_svg(d: &Diagram) -> String {
    let (w, h, m) = (800.0, 600.0, 60.0);
    let [[x0, x1], [y0, y1]] = d.window;
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r##"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="#000000" stroke-width="1"/>"##,
        w - 2.0 * m,
        h - 2.0 * m
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{:.4}</text>"#, sx(xv), h - m + 16.0, xv);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{:.4}</text>"#, m - 6.0, sy(yv) + 4.0, yv);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, d.active[0]);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        d.active[1]
    );
    for c in &d.curves {
        for (kind, r) in c.segments() {
            let pts: Vec<String> = c.points[r.clone()]
                .iter()
                .map(|p| {
                    let a = d.active_coords(c, p);
                    format!("{:.2},{:.2}", sx(a[0]), sy(a[1]))
                })
                .collect();
            let dash = if kind == CurveKind::Ns { r#" stroke-dasharray="4 3""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                colour(kind),
                pts.join(" ")
            );
            if let Some(p) = c.points.get(r.start + (r.end - r.start) / 2) {
                let a = d.active_coords(c, p);
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{}">{}</text>"#,
                    sx(a[0]) + 4.0,
                    sy(a[1]) - 4.0,
                    colour(kind),
                    kind.label()
                );
            }
        }
    }
    for seg in d.sn_segments.iter().filter(|g| g.kind == SnKind::Sn0) {
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000" stroke-width="3"/>"##,
            sx(seg.from[0]),
            sy(seg.from[1]),
            sx(seg.to[0]),
            sy(seg.to[1])
        );
    }
    for p in &d.points {
        let a = d.codim2_coords(p);
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#000000"/>"##, sx(a[0]), sy(a[1]));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" font-weight="bold">{}</text>"#,
            sx(a[0]) + 6.0,
            sy(a[1]) + 14.0,
            p.kind.label()
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes curves.csv, points.json and diagram.svg into `dir`.
pub fn write_diagram(d: &Diagram, dir: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("curves.csv"), curves_csv(d))?;
    let json = serde_json::to_string_pretty(&points_json(d)).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("points.json"), json + "\n")?;
    std::fs::write(dir.join("diagram.svg"), render_svg(d))?;
    Ok(())
}
