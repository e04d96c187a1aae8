//! Event census along a closed walk around the codimension-two point of the
//! minimal model with a double zero eigenvalue.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::equilibria::{find_equilibria, Classification};
use crate::error::{usage, Result};
use crate::global::{
    classify_sn_segment, scan_cycles, splitting, ConnectionSpec, CycleOpts, CycleRecord, SaddleSelector, Section,
    SectionSpec, SnKind, SnOpts, TraceBudget,
};
use crate::models::{Model, St2Params};
use crate::normalform::{first_lyapunov, min2_sn_curve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WalkEventKind {
    #[serde(rename = "HB")]
    Hb,
    #[serde(rename = "Het")]
    Het,
    #[serde(rename = "TC")]
    Tc,
    #[serde(rename = "SN")]
    Sn,
    #[serde(rename = "SN0")]
    Sn0,
}

impl WalkEventKind {
    pub fn label(self) -> &'static str {
        match self {
            WalkEventKind::Hb => "HB",
            WalkEventKind::Het => "Het",
            WalkEventKind::Tc => "TC",
            WalkEventKind::Sn => "SN",
            WalkEventKind::Sn0 => "SN0",
        }
    }
}

/// Event order from region 1 for the saddle case (the walk closes with a second TC).
pub const SADDLE_ORDER: [&str; 5] = ["HB", "Het", "TC", "SN", "SN"];
/// Event order from region 1 for the elliptic case.
pub const ELLIPTIC_ORDER: [&str; 5] = ["HB", "SN0", "TC", "TC", "SN"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkEvent {
    pub kind: WalkEventKind,
    /// Walk angle in turns from the start, in [0, 1).
    pub progress: f64,
    pub a: f64,
    pub b: f64,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCensus {
    pub index: usize,
    pub a: f64,
    pub b: f64,
    /// Equilibria near the origin: (x, classification).
    pub equilibria: Vec<(f64, Classification)>,
    pub cycles: Vec<CycleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkReport {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub eps: f64,
    pub radius: f64,
    pub events: Vec<WalkEvent>,
    pub regions: Vec<RegionCensus>,
}

impl WalkReport {
    pub fn labels(&self) -> Vec<&'static str> {
        self.events.iter().map(|e| e.kind.label()).collect()
    }

    /// The walk from region 1 starts with the `expected` events in order.
    pub fn starts_with(&self, expected: &[&str]) -> bool {
        let l = self.labels();
        l.len() >= expected.len() && l[..expected.len()] == *expected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkOpts {
    pub radius: f64,
    pub samples: usize,
    /// Radial cycle-scan grid size per region.
    pub cycle_grid: usize,
}

impl Default for WalkOpts {
    fn default() -> Self {
        WalkOpts { radius: 0.05, samples: 720, cycle_grid: 40 }
    }
}

struct Walk {
    k: (f64, f64, f64),
    eps: f64,
    radius: f64,
    theta0: f64,
    dir: f64,
}

impl Walk {
    fn ab(&self, u: f64) -> (f64, f64) {
        let th = self.theta0 + self.dir * 2.0 * PI * u;
        (self.radius * th.cos(), self.radius * th.sin())
    }

    fn model(&self, u: f64) -> Model {
        let (a, b) = self.ab(u);
        Model::St2Min(St2Params::new(a, b, self.k.0, self.k.1, self.k.2, self.eps))
    }

    fn sn_gap(&self, u: f64) -> f64 {
        let (a, b) = self.ab(u);
        match min2_sn_curve(b, self.eps, self.k.2, None) {
            Ok((asn, _)) => a - asn,
            Err(_) => f64::NAN,
        }
    }

    fn het_split(&self, u: f64, upper: bool) -> Option<f64> {
        let m = self.model(u);
        let spec = st2_het_spec(&m, upper)?;
        splitting(&m, &spec).ok().map(|r| r.splitting)
    }
}

/// Equilibria of the planar minimal model other than the far root near −ε/k3.
pub fn local_equilibria(m: &Model) -> Result<Vec<(f64, Classification)>> {
    let Model::St2Min(p) = m else {
        return usage("local equilibria are defined for ST2_MIN");
    };
    let cut = 0.5 / p.k3.abs();
    Ok(find_equilibria(m)?
        .into_iter()
        .filter(|e| e.state[0].abs() < cut)
        .map(|e| (e.state[0], e.classification))
        .collect())
}

/// Connection between the two small saddles of the planar minimal model on
/// opposite sides of the origin, passing above (`upper`) or below the axis.
pub fn st2_het_spec(m: &Model, upper: bool) -> Option<ConnectionSpec> {
    let eq = local_equilibria(m).ok()?;
    let saddles: Vec<f64> = eq.iter().filter(|e| e.1 == Classification::Saddle).map(|e| e.0).collect();
    if saddles.len() != 2 || saddles[0].signum() == saddles[1].signum() {
        return None;
    }
    let (l, r) = (saddles[0].min(saddles[1]), saddles[0].max(saddles[1]));
    // the flow runs rightwards above the axis and leftwards below it
    let (src, dst, side) = if upper { (l, r, 1.0) } else { (r, l, -1.0) };
    Some(ConnectionSpec {
        source: SaddleSelector::Nearest([src, 0.0]),
        target: SaddleSelector::Nearest([dst, 0.0]),
        unstable_side: side,
        stable_side: side,
        section: SectionSpec::Bisector,
        delta: 1e-7,
        budget: TraceBudget { t_max: 1e4, tol: 1e-11, ..TraceBudget::default() },
    })
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..60 {
        let m = 0.5 * (lo + hi);
        let fm = f(m);
        if !fm.is_finite() {
            break;
        }
        if fm.signum() == flo.signum() {
            lo = m;
            flo = fm;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

/// Walks a circle of the given radius around a = b = 0 starting in region 1
/// (just before the Hopf line, on the side without a small cycle) and heading
/// through the Hopf line into the side where the cycle exists.
pub fn walk_minimal(k1: f64, k2: f64, k3: f64, eps: f64, opts: &WalkOpts) -> Result<WalkReport> {
    if !(opts.radius > 0.0) || opts.samples < 16 {
        return usage("walk needs a positive radius and at least 16 samples");
    }
    Model::St2Min(St2Params::new(0.0, 0.0, k1, k2, k3, eps)).validate()?;
    // cycle side of the Hopf line: origin stable for l1 > 0
    let probe = Model::St2Min(St2Params::new(-opts.radius, 0.0, k1, k2, k3, eps));
    let origin = find_equilibria(&probe)?
        .into_iter()
        .find(|e| e.state[0] == 0.0)
        .ok_or_else(|| crate::Error::Numerical("origin not returned as an equilibrium".into()))?;
    let l1 = first_lyapunov(&probe, &origin)?;
    let cycle_b_sign = -(k1 * l1).signum();
    let delta = 1e-3;
    let (theta0, dir) = if cycle_b_sign < 0.0 { (PI - delta, 1.0) } else { (PI + delta, -1.0) };
    let w = Walk { k: (k1, k2, k3), eps, radius: opts.radius, theta0, dir };

    let n = opts.samples;
    let us: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let det0 = |u: f64| -w.ab(u).0;
    let tr0 = |u: f64| k1 * w.ab(u).1;
    let counts: Vec<usize> = us.iter().map(|&u| local_equilibria(&w.model(u)).map(|v| v.len()).unwrap_or(0)).collect();
    let mut events = Vec::new();
    let mut push = |kind, u: f64, detail: Option<String>| {
        let (a, b) = w.ab(u);
        events.push(WalkEvent { kind, progress: u, a, b, detail });
    };
    let mut het_prev: [Option<f64>; 2] = [w.het_split(0.0, true), w.het_split(0.0, false)];
    for i in 0..n {
        let (u0, u1) = (us[i], us[i + 1]);
        if det0(u0).signum() != det0(u1).signum() {
            push(WalkEventKind::Tc, bisect(det0, u0, u1), None);
        }
        if tr0(u0).signum() != tr0(u1).signum() && det0(u0) > 0.0 {
            push(WalkEventKind::Hb, bisect(tr0, u0, u1), None);
        }
        if counts[i] != counts[i + 1] {
            let u = bisect(|u| w.sn_gap(u), u0, u1);
            let (a, b) = w.ab(u);
            let m = Model::St2Min(St2Params::new(a, b, k1, k2, k3, eps));
            let (_, xsn) = min2_sn_curve(b, eps, k3, Some(k1))?;
            let xsn = xsn.unwrap_or(0.0);
            let (kind, detail) = match classify_sn_segment(&m, [xsn, 0.0], &SnOpts::for_scale(opts.radius.sqrt())) {
                Ok(c) if c.kind == SnKind::Sn0 => (WalkEventKind::Sn0, None),
                Ok(c) => (WalkEventKind::Sn, Some(format!("return distance {:.3e}", c.return_distance))),
                Err(e) => (WalkEventKind::Sn, Some(format!("unclassified: {e}"))),
            };
            push(kind, u, detail);
        }
        for (slot, upper) in [(0, true), (1, false)] {
            let cur = w.het_split(u1, upper);
            if let (Some(p), Some(c)) = (het_prev[slot], cur) {
                let floor = 1e-8 * opts.radius;
                if p.abs() > floor && c.abs() > floor && p.signum() != c.signum() {
                    let u = bisect(|u| w.het_split(u, upper).unwrap_or(f64::NAN), u0, u1);
                    push(WalkEventKind::Het, u, Some(if upper { "upper".into() } else { "lower".into() }));
                }
            }
            het_prev[slot] = cur;
        }
    }
    events.sort_by(|x, y| x.progress.total_cmp(&y.progress));

    // census at the midpoint of every region between consecutive events
    let mut cuts: Vec<f64> = vec![0.0];
    cuts.extend(events.iter().map(|e| e.progress));
    cuts.push(1.0);
    let mut regions = Vec::new();
    let copts = CycleOpts { t_max: 2e3, ..CycleOpts::default() };
    for (idx, win) in cuts.windows(2).enumerate() {
        let u = 0.5 * (win[0] + win[1]);
        let m = w.model(u);
        let (a, b) = w.ab(u);
        let eqs = local_equilibria(&m)?;
        let right = eqs.iter().map(|e| e.0).filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
        let reach = if right.is_finite() { right } else { 4.0 * opts.radius.sqrt() };
        let sec = Section::ray([0.0, 0.0], [1.0, 0.0])?;
        let cycles = scan_cycles(&m, &sec, (1e-3 * reach, 0.98 * reach), opts.cycle_grid, &copts)?;
        regions.push(RegionCensus { index: idx + 1, a, b, equilibria: eqs, cycles });
    }
    Ok(WalkReport { k1, k2, k3, eps, radius: opts.radius, events, regions })
}
