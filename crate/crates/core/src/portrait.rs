//! Phase portraits: a bundle of trajectories, saddle separatrices, cycles and
//! saddle-to-saddle splittings at one parameter point.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::equilibria::{find_equilibria, Classification, Equilibrium};
use crate::error::{usage, Result};
use crate::global::{
    scan_cycles, splitting, trace_manifold, ConnectionSpec, CycleOpts, CycleRecord, SaddleSelector, Section,
    SectionSpec, TraceBudget, Which,
};
use crate::integrate::{integrate, solve, Flow, IntegOpts, TrajStatus, Trajectory};
use crate::models::{Model, ModelId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortraitSpec {
    pub model: ModelId,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Initial states; a grid over the window is used when empty.
    #[serde(default)]
    pub seeds: Vec<[f64; 2]>,
    /// Plot window [[x1min, x1max], [x2min, x2max]]; derived from the equilibria when absent.
    #[serde(default)]
    pub window: Option<[[f64; 2]; 2]>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Seeds are integrated forwards and backwards.
    #[serde(default = "yes")]
    pub both_directions: bool,
    #[serde(default = "yes")]
    pub manifolds: bool,
    #[serde(default = "yes")]
    pub cycles: bool,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_t_max() -> f64 {
    20.0
}

fn default_tol() -> f64 {
    1e-9
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortraitTrajectory {
    /// "seed", "seed-backward", "unstable", "stable" or "cycle".
    pub kind: String,
    pub status: String,
    pub t: Vec<f64>,
    pub x: Vec<[f64; 2]>,
}

/// Splitting between the separatrices of two saddles on one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleLink {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub side: f64,
    pub splitting: Option<f64>,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portrait {
    pub model: Model,
    pub window: [[f64; 2]; 2],
    pub equilibria: Vec<Equilibrium>,
    pub trajectories: Vec<PortraitTrajectory>,
    pub cycles: Vec<CycleRecord>,
    pub links: Vec<SaddleLink>,
    pub diagnostics: Vec<String>,
}

impl Portrait {
    /// Links whose splitting is below `tol` (saddle connections).
    pub fn connections(&self, tol: f64) -> impl Iterator<Item = &SaddleLink> {
        self.links.iter().filter(move |l| l.splitting.map(|s| s.abs() < tol).unwrap_or(false))
    }
}

fn status_name(s: &TrajStatus) -> &'static str {
    match s {
        TrajStatus::Completed => "completed",
        TrajStatus::Stopped => "stopped",
        TrajStatus::StepUnderflow => "step-underflow",
        TrajStatus::MaxSteps => "max-steps",
        TrajStatus::NonFinite => "non-finite",
    }
}

fn default_window(eqs: &[Equilibrium]) -> [[f64; 2]; 2] {
    if eqs.is_empty() {
        return [[-1.0, 1.0], [-1.0, 1.0]];
    }
    let mut w = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
    for e in eqs {
        for k in 0..2 {
            w[k][0] = w[k][0].min(e.state[k]);
            w[k][1] = w[k][1].max(e.state[k]);
        }
    }
    let span = (w[0][1] - w[0][0]).max(w[1][1] - w[1][0]).max(0.1);
    for r in w.iter_mut() {
        let c = 0.5 * (r[0] + r[1]);
        r[0] = c - span;
        r[1] = c + span;
    }
    w
}

fn clipped(tr: &Trajectory, win: &[[f64; 2]; 2], kind: &str) -> PortraitTrajectory {
    // keep the samples up to the first one far outside the window
    let (dx, dy) = (win[0][1] - win[0][0], win[1][1] - win[1][0]);
    let far = |y: &[f64; 2]| {
        y[0] < win[0][0] - dx || y[0] > win[0][1] + dx || y[1] < win[1][0] - dy || y[1] > win[1][1] + dy
    };
    let n = tr.y.iter().position(far).map(|i| i + 1).unwrap_or(tr.y.len());
    PortraitTrajectory { kind: kind.into(), status: status_name(&tr.status).into(), t: tr.t[..n].to_vec(), x: tr.y[..n].to_vec() }
}

/// Integration stopped once the state is a full window width outside the window.
fn bounded(model: &Model, x0: &[f64; 2], t1: f64, tol: f64, win: &[[f64; 2]; 2]) -> Result<Trajectory> {
    if !(x0[0].is_finite() && x0[1].is_finite()) {
        return usage("seed states must be finite");
    }
    let (dx, dy) = (win[0][1] - win[0][0], win[1][1] - win[1][0]);
    let m = *model;
    let w = *win;
    Ok(solve(move |y| m.f(*y), *x0, 0.0, t1, &IntegOpts::new(tol, 2), move |st| {
        let y = st.y1();
        if y[0] < w[0][0] - dx || y[0] > w[0][1] + dx || y[1] < w[1][0] - dy || y[1] > w[1][1] + dy {
            Flow::Stop
        } else {
            Flow::Continue
        }
    }))
}

pub fn build_portrait(spec: &PortraitSpec) -> Result<Portrait> {
    if !(spec.t_max > 0.0 && spec.tol > 0.0) {
        return usage("t_max and tol must be positive");
    }
    let model = Model::from_values(spec.model, spec.params.iter().map(|(k, v)| (k.as_str(), *v)))?;
    if model.dim() != 2 {
        return usage("portraits need a planar model");
    }
    let eqs = find_equilibria(&model)?;
    let window = match spec.window {
        Some(w) if w[0][0] < w[0][1] && w[1][0] < w[1][1] => w,
        Some(_) => return usage("window ranges must be increasing"),
        None => default_window(&eqs),
    };
    let mut trajectories = Vec::new();
    let mut diagnostics = Vec::new();
    let seeds: Vec<[f64; 2]> = if spec.seeds.is_empty() {
        let n = 5;
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| {
                [
                    window[0][0] + (window[0][1] - window[0][0]) * (i as f64 + 0.5) / n as f64,
                    window[1][0] + (window[1][1] - window[1][0]) * (j as f64 + 0.5) / n as f64,
                ]
            })
            .collect()
    } else {
        spec.seeds.clone()
    };
    for s in &seeds {
        let mut dirs = vec![(spec.t_max, "seed")];
        if spec.both_directions {
            dirs.push((-spec.t_max, "seed-backward"));
        }
        for (t1, kind) in dirs {
            match bounded(&model, s, t1, spec.tol, &window) {
                Ok(tr) => {
                    if !matches!(tr.status, TrajStatus::Completed | TrajStatus::Stopped) {
                        diagnostics.push(format!("{kind} from {s:?}: {}", status_name(&tr.status)));
                    }
                    trajectories.push(clipped(&tr, &window, kind));
                }
                Err(e) => diagnostics.push(format!("{kind} from {s:?}: {e}")),
            }
        }
    }
    let saddles: Vec<&Equilibrium> = eqs.iter().filter(|e| e.classification == Classification::Saddle).collect();
    if spec.manifolds {
        let budget = TraceBudget { t_max: spec.t_max.max(50.0), tol: spec.tol, ..TraceBudget::default() };
        for sd in &saddles {
            for which in [Which::Unstable, Which::Stable] {
                for side in [1.0, -1.0] {
                    match trace_manifold(&model, sd, which, side, 1e-6, &budget, None) {
                        Ok(m) => {
                            let kind = if which == Which::Unstable { "unstable" } else { "stable" };
                            trajectories.push(clipped(&m.trajectory, &window, kind));
                        }
                        Err(e) => diagnostics.push(format!("manifold of {:?}: {e}", sd.xy())),
                    }
                }
            }
        }
    }
    let mut cycles = Vec::new();
    if spec.cycles {
        let copts = CycleOpts { t_max: 50.0 * spec.t_max.max(20.0), ..CycleOpts::default() };
        for e in eqs.iter().filter(|e| matches!(e.eigen, crate::equilibria::EigenData::Planar(ref g) if !g.is_real())) {
            let p = e.xy();
            let reach = eqs
                .iter()
                .filter(|q| q.xy() != p)
                .map(|q| (q.state[0] - p[0]).hypot(q.state[1] - p[1]))
                .fold((window[0][1] - window[0][0]).max(window[1][1] - window[1][0]), f64::min);
            let sec = Section::ray(p, [1.0, 0.0])?;
            match scan_cycles(&model, &sec, (1e-4 * reach, 0.95 * reach), 40, &copts) {
                Ok(c) => cycles.extend(c),
                Err(err) => diagnostics.push(format!("cycle scan around {p:?}: {err}")),
            }
        }
        for c in &cycles {
            if let Ok(tr) = integrate(&model, &c.point, (0.0, c.period), spec.tol) {
                trajectories.push(clipped(&tr, &window, "cycle"));
            }
        }
    }
    let mut links = Vec::new();
    for a in &saddles {
        for b in &saddles {
            if a.xy() == b.xy() {
                continue;
            }
            for side in [1.0, -1.0] {
                let cs = ConnectionSpec {
                    source: SaddleSelector::Nearest(a.xy()),
                    target: SaddleSelector::Nearest(b.xy()),
                    unstable_side: side,
                    stable_side: side,
                    section: SectionSpec::Bisector,
                    delta: 1e-7,
                    budget: TraceBudget { t_max: 1e3, tol: 1e-11, ..TraceBudget::default() },
                };
                let (splitting, detail) = match splitting(&model, &cs) {
                    Ok(r) => (Some(r.splitting), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                links.push(SaddleLink { from: a.xy(), to: b.xy(), side, splitting, detail });
            }
        }
    }
    Ok(Portrait { model, window, equilibria: eqs, trajectories, cycles, links, diagnostics })
}

pub const TRAJ_HEADER: &str = "traj_id,kind,status,t,x1,x2";

pub fn trajectories_csv(p: &Portrait) -> String {
    let mut s = String::from(TRAJ_HEADER);
    s.push('\n');
    for (id, tr) in p.trajectories.iter().enumerate() {
        for (t, x) in tr.t.iter().zip(&tr.x) {
            let _ = writeln!(s, "{id},{},{},{t:.16e},{:.16e},{:.16e}", tr.kind, tr.status, x[0], x[1]);
        }
    }
    s
}

fn colour(kind: &str) -> &'static str {
    match kind {
        "unstable" => "#c0392b",
        "stable" => "#1f4e9c",
        "cycle" => "#2a8a3a",
        _ => "#999999",
    }
}

pub fn render_portrait_svg(p: &Portrait) -> String {
    let (w, h, m) = (600.0, 600.0, 50.0);
    let [[x0, x1], [y0, y1]] = p.window;
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
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">x1</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.2}" font-size="14">x2</text>"#, h / 2.0);
    for tr in &p.trajectories {
        let pts: Vec<String> = tr
            .x
            .iter()
            .filter(|x| x[0] >= x0 && x[0] <= x1 && x[1] >= y0 && x[1] <= y1)
            .map(|x| format!("{:.2},{:.2}", sx(x[0]), sy(x[1])))
            .collect();
        if pts.len() >= 2 {
            let width = if tr.kind.starts_with("seed") { 0.8 } else { 1.6 };
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="{width}" points="{}"/>"#,
                colour(&tr.kind),
                pts.join(" ")
            );
        }
    }
    for e in &p.equilibria {
        let fill = match e.classification {
            Classification::Sink => "#000000",
            Classification::Saddle => "#ffffff",
            _ => "#888888",
        };
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{fill}" stroke="#000000" stroke-width="1"/>"##,
            sx(e.state[0]),
            sy(e.state[1])
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_portrait(p: &Portrait, dir: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("trajectories.csv"), trajectories_csv(p))?;
    std::fs::write(dir.join("portrait.svg"), render_portrait_svg(p))?;
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "model": p.model,
        "window": p.window,
        "equilibria": p.equilibria,
        "cycles": p.cycles,
        "links": p.links,
        "diagnostics": p.diagnostics,
    }))
    .map_err(std::io::Error::other)?;
    std::fs::write(dir.join("portrait.json"), json + "\n")
}
