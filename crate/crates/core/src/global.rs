//! Global objects: saddle manifolds, heteroclinic/homoclinic splitting,
//! connection location, limit cycles and saddle-node loop classification.

use serde::{Deserialize, Serialize};

use crate::algebra::{eigen2, EigPair};
use crate::equilibria::{find_equilibria, Classification, Equilibrium};
use crate::error::{usage, Error, Result};
use crate::integrate::{locate_in_step, solve, DenseStep, Flow, IntegOpts, State, TrajStatus, Trajectory};
use crate::models::Model;

pub use crate::integrate::integrate;

fn dot(a: State, b: State) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: State, b: State) -> State {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: State) -> f64 {
    a[0].hypot(a[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossDir {
    /// n·(y − anchor) goes from negative to non-negative along the integration.
    Plus,
    Minus,
    Both,
}

/// Straight section {anchor + s·τ : s ∈ range}, τ = n rotated by +90°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub anchor: State,
    pub normal: State,
    pub dir: CrossDir,
    pub range: (f64, f64),
}

impl Section {
    pub fn new(anchor: State, normal: State, dir: CrossDir) -> Result<Self> {
        let n = norm(normal);
        if !(n > 0.0) || !n.is_finite() || !anchor.iter().all(|v| v.is_finite()) {
            return usage("section needs a finite anchor and a nonzero normal");
        }
        Ok(Section { anchor, normal: [normal[0] / n, normal[1] / n], dir, range: (f64::NEG_INFINITY, f64::INFINITY) })
    }

    /// Half-line from `anchor` along `direction`, crossed either way.
    pub fn ray(anchor: State, direction: State) -> Result<Self> {
        let mut s = Section::new(anchor, [direction[1], -direction[0]], CrossDir::Both)?;
        s.range = (0.0, f64::INFINITY);
        Ok(s)
    }

    pub fn with_half_length(mut self, h: f64) -> Self {
        self.range = (-h, h);
        self
    }

    pub fn contains_coord(&self, c: f64) -> bool {
        c >= self.range.0 && c <= self.range.1
    }

    pub fn g(&self, y: &State) -> f64 {
        dot(self.normal, sub(*y, self.anchor))
    }

    pub fn tangent(&self) -> State {
        [-self.normal[1], self.normal[0]]
    }

    /// Coordinate of a point along the section.
    pub fn coord(&self, y: &State) -> f64 {
        dot(self.tangent(), sub(*y, self.anchor))
    }

    pub fn point(&self, s: f64) -> State {
        let t = self.tangent();
        [self.anchor[0] + s * t[0], self.anchor[1] + s * t[1]]
    }

    fn crossed(&self, g0: f64, g1: f64) -> bool {
        let up = g0 < 0.0 && g1 >= 0.0;
        let down = g0 > 0.0 && g1 <= 0.0;
        match self.dir {
            CrossDir::Plus => up,
            CrossDir::Minus => down,
            CrossDir::Both => up || down,
        }
    }

    /// Perpendicular bisector of the segment a→b, crossed from a's side to b's side.
    pub fn bisector(a: State, b: State) -> Result<Self> {
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        Section::new(mid, sub(b, a), CrossDir::Plus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    pub point: State,
    pub coord: f64,
}

/// First crossing of a section inside one dense step.
pub fn section_crossing(step: &DenseStep, sec: &Section) -> Option<Crossing> {
    let (g0, g1) = (sec.g(&step.y0()), sec.g(&step.y1()));
    if !sec.crossed(g0, g1) {
        return None;
    }
    let (t, p) = locate_in_step(step, |y| sec.g(y));
    let c = sec.coord(&p);
    sec.contains_coord(c).then_some(Crossing { t, point: p, coord: c })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceBudget {
    pub t_max: f64,
    pub arclength_max: f64,
    /// Stop when |state| exceeds this.
    pub state_bound: f64,
    pub tol: f64,
}

impl Default for TraceBudget {
    fn default() -> Self {
        TraceBudget { t_max: 1e3, arclength_max: 1e3, state_bound: 1e3, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceStop {
    Section,
    TimeBudget,
    ArclengthBudget,
    LeftBox,
    Integrator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldTrace {
    pub trajectory: Trajectory,
    pub crossing: Option<Crossing>,
    pub stop: TraceStop,
    pub arclength: f64,
    /// Seed direction (unit eigenvector times side).
    pub direction: State,
}

/// Unit eigenvector of a real eigenvalue, oriented with positive second
/// component (positive first component if the second vanishes).
pub fn oriented_eigvec(j: &crate::algebra::Matrix2, lambda: f64) -> State {
    let mut v = j.eigvec(lambda);
    if v[1] < 0.0 || (v[1] == 0.0 && v[0] < 0.0) {
        v = [-v[0], -v[1]];
    }
    v
}

/// Saddle eigenvalues (λs < 0 < λu).
pub fn saddle_eigs(model: &Model, saddle: &Equilibrium) -> Result<(f64, f64)> {
    if model.dim() != 2 || saddle.classification != Classification::Saddle {
        return usage(format!("manifold tracing needs a planar saddle, got {:?}", saddle.classification));
    }
    match eigen2(&model.jac(saddle.xy())).pair {
        EigPair::Real(ls, lu) if ls < 0.0 && lu > 0.0 => Ok((ls, lu)),
        _ => usage("equilibrium is not a saddle at these parameters"),
    }
}

/// Default seeding distance for manifold traces.
pub const DEFAULT_DELTA: f64 = 1e-6;

/// Integrates from saddle + side·delta·(eigenvector), forward for the unstable
/// and backward for the stable manifold, until the budget or a section crossing.
pub fn trace_manifold(
    model: &Model,
    saddle: &Equilibrium,
    which: Which,
    side: f64,
    delta: f64,
    budget: &TraceBudget,
    section: Option<&Section>,
) -> Result<ManifoldTrace> {
    if !(1e-8..=1e-4).contains(&delta) {
        return usage(format!("delta must lie in [1e-8, 1e-4], got {delta}"));
    }
    if side != 1.0 && side != -1.0 {
        return usage("side must be +1 or -1");
    }
    let (ls, lu) = saddle_eigs(model, saddle)?;
    let j = model.jac(saddle.xy());
    let lam = if which == Which::Unstable { lu } else { ls };
    let v = oriented_eigvec(&j, lam);
    let dir = [side * v[0], side * v[1]];
    let x = saddle.xy();
    let y0 = [x[0] + delta * dir[0], x[1] + delta * dir[1]];
    let t1 = if which == Which::Unstable { budget.t_max } else { -budget.t_max };
    let m = *model;
    let mut arclength = 0.0;
    let mut crossing = None;
    let mut stop = TraceStop::TimeBudget;
    let trajectory = solve(move |y| m.f(*y), y0, 0.0, t1, &IntegOpts::new(budget.tol, 2), |st| {
        arclength += norm(sub(st.y1(), st.y0()));
        if let Some(sec) = section {
            if let Some(c) = section_crossing(st, sec) {
                crossing = Some(c);
                stop = TraceStop::Section;
                return Flow::Stop;
            }
        }
        if arclength > budget.arclength_max {
            stop = TraceStop::ArclengthBudget;
            return Flow::Stop;
        }
        if norm(st.y1()) > budget.state_bound {
            stop = TraceStop::LeftBox;
            return Flow::Stop;
        }
        Flow::Continue
    });
    if matches!(trajectory.status, TrajStatus::StepUnderflow | TrajStatus::NonFinite | TrajStatus::MaxSteps) {
        stop = TraceStop::Integrator;
    }
    Ok(ManifoldTrace { trajectory, crossing, stop, arclength, direction: dir })
}

/// How a saddle is picked among the equilibria at given parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaddleSelector {
    /// Saddle on the invariant axis with the smallest x1.
    AxisLeft,
    AxisRight,
    /// Among all saddles, by first coordinate.
    Leftmost,
    Rightmost,
    Nearest(State),
}

impl SaddleSelector {
    pub fn select(&self, eqs: &[Equilibrium]) -> Option<Equilibrium> {
        let saddles = eqs.iter().filter(|e| e.classification == Classification::Saddle);
        let by_x = |a: &&Equilibrium, b: &&Equilibrium| a.state[0].total_cmp(&b.state[0]);
        match self {
            SaddleSelector::AxisLeft => saddles.filter(|e| e.on_axis).min_by(by_x),
            SaddleSelector::AxisRight => saddles.filter(|e| e.on_axis).max_by(by_x),
            SaddleSelector::Leftmost => saddles.min_by(by_x),
            SaddleSelector::Rightmost => saddles.max_by(by_x),
            SaddleSelector::Nearest(p) => saddles.min_by(|a, b| norm(sub(a.xy(), *p)).total_cmp(&norm(sub(b.xy(), *p)))),
        }
        .cloned()
    }
}

/// Where the splitting is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectionSpec {
    /// Perpendicular bisector of the two saddles (heteroclinic).
    Bisector,
    /// Ray from the nearest non-saddle equilibrium pointing away from the saddle (homoclinic).
    OppositeSide,
    Fixed(Section),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSpec {
    /// Saddle whose unstable manifold is traced.
    pub source: SaddleSelector,
    /// Saddle whose stable manifold is traced (same as source for homoclinics).
    pub target: SaddleSelector,
    pub unstable_side: f64,
    pub stable_side: f64,
    pub section: SectionSpec,
    pub delta: f64,
    pub budget: TraceBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionResult {
    /// coord(unstable crossing) − coord(stable crossing) along the section.
    pub splitting: f64,
    pub coord_unstable: f64,
    pub coord_stable: f64,
    pub section: Section,
    pub source: State,
    pub target: State,
    pub time_unstable: f64,
    pub time_stable: f64,
    pub arclength_unstable: f64,
    pub arclength_stable: f64,
}

fn homoclinic_section(eqs: &[Equilibrium], saddle: &Equilibrium) -> Result<Section> {
    let s = saddle.xy();
    let centre = eqs
        .iter()
        .filter(|e| e.classification != Classification::Saddle && e.state.len() == 2)
        .min_by(|a, b| norm(sub(a.xy(), s)).total_cmp(&norm(sub(b.xy(), s))))
        .ok_or_else(|| Error::NotFound("no equilibrium for a homoclinic section".into()))?;
    let c = centre.xy();
    let away = sub(c, s);
    if norm(away) == 0.0 {
        return usage("saddle and centre coincide");
    }
    Section::ray(c, away)
}

/// Signed splitting between the unstable manifold of `source` and the stable
/// manifold of `target` on the configured section.
pub fn splitting(model: &Model, spec: &ConnectionSpec) -> Result<ConnectionResult> {
    let eqs = find_equilibria(model)?;
    let a = spec.source.select(&eqs).ok_or_else(|| Error::NotFound("source saddle absent".into()))?;
    let b = spec.target.select(&eqs).ok_or_else(|| Error::NotFound("target saddle absent".into()))?;
    let (sec_u, sec_s) = match spec.section {
        SectionSpec::Bisector => {
            if a.xy() == b.xy() {
                return usage("bisector section needs two distinct saddles");
            }
            let s = Section::bisector(a.xy(), b.xy())?;
            // backward-time stable trace crosses in the opposite direction
            (s, Section { dir: CrossDir::Minus, ..s })
        }
        SectionSpec::OppositeSide => {
            let s = homoclinic_section(&eqs, &a)?;
            (s, s)
        }
        SectionSpec::Fixed(s) => (s, s),
    };
    let tu = trace_manifold(model, &a, Which::Unstable, spec.unstable_side, spec.delta, &spec.budget, Some(&sec_u))?;
    let ts = trace_manifold(model, &b, Which::Stable, spec.stable_side, spec.delta, &spec.budget, Some(&sec_s))?;
    let cu = ray_crossing(&tu)?;
    let cs = ray_crossing(&ts)?;
    Ok(ConnectionResult {
        splitting: cu.coord - cs.coord,
        coord_unstable: cu.coord,
        coord_stable: cs.coord,
        section: sec_u,
        source: a.xy(),
        target: b.xy(),
        time_unstable: cu.t,
        time_stable: cs.t,
        arclength_unstable: tu.arclength,
        arclength_stable: ts.arclength,
    })
}

fn ray_crossing(tr: &ManifoldTrace) -> Result<Crossing> {
    tr.crossing.ok_or_else(|| Error::NotFound(format!("manifold trace stopped ({:?}) before reaching the section", tr.stop)))
}

/// Swaps the roles of the two manifolds: the stable manifold of the source
/// against the unstable manifold of the target.
pub fn splitting_swapped(r: &ConnectionResult) -> f64 {
    r.coord_stable - r.coord_unstable
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSolution {
    pub param: f64,
    pub splitting_lo: f64,
    pub splitting_hi: f64,
    pub iterations: usize,
    pub bracket_width: f64,
}

/// Bisection then safeguarded secant on the splitting function to |Δparam| < `xtol`.
pub fn find_connection_with<F>(model: &Model, free_param: &str, bracket: (f64, f64), xtol: f64, split: F) -> Result<ConnectionSolution>
where
    F: Fn(&Model) -> Result<f64>,
{
    let (mut lo, mut hi) = bracket;
    if !(lo.is_finite() && hi.is_finite()) || lo == hi {
        return usage("bracket must be two distinct finite values");
    }
    let eval = |p: f64| -> Result<f64> { split(&model.with(free_param, p)?) };
    let (mut flo, mut fhi) = (eval(lo)?, eval(hi)?);
    let (s_lo, s_hi) = (flo, fhi);
    if flo == 0.0 {
        return Ok(ConnectionSolution { param: lo, splitting_lo: s_lo, splitting_hi: s_hi, iterations: 0, bracket_width: 0.0 });
    }
    if fhi == 0.0 {
        return Ok(ConnectionSolution { param: hi, splitting_lo: s_lo, splitting_hi: s_hi, iterations: 0, bracket_width: 0.0 });
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NotFound(format!("splitting has no sign change on [{lo}, {hi}]")));
    }
    let mut it = 0;
    // bisection phase
    while it < 12 && (hi - lo).abs() > xtol {
        let m = 0.5 * (lo + hi);
        let fm = eval(m)?;
        it += 1;
        if fm == 0.0 {
            return Ok(ConnectionSolution { param: m, splitting_lo: s_lo, splitting_hi: s_hi, iterations: it, bracket_width: 0.0 });
        }
        if fm.signum() == flo.signum() {
            lo = m;
            flo = fm;
        } else {
            hi = m;
            fhi = fm;
        }
    }
    // Illinois secant phase
    let mut side = 0;
    while (hi - lo).abs() > xtol && it < 200 {
        let mut x = (lo * fhi - hi * flo) / (fhi - flo);
        let w = hi - lo;
        if !(x - lo.min(hi) > 0.0 && lo.max(hi) - x > 0.0) {
            x = 0.5 * (lo + hi);
        }
        // keep progress when the secant hugs one end
        let pad = 0.5 * xtol;
        if (x - lo).abs() < pad {
            x = lo + pad * w.signum();
        } else if (hi - x).abs() < pad {
            x = hi - pad * w.signum();
        }
        let fx = eval(x)?;
        it += 1;
        if fx == 0.0 {
            lo = x;
            hi = x;
            break;
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    let param = if flo.abs() <= fhi.abs() { lo } else { hi };
    Ok(ConnectionSolution { param, splitting_lo: s_lo, splitting_hi: s_hi, iterations: it, bracket_width: (hi - lo).abs() })
}

/// Connection parameter in `bracket` for the given manifold pair.
pub fn find_connection(model: &Model, free_param: &str, bracket: (f64, f64), spec: &ConnectionSpec) -> Result<ConnectionSolution> {
    find_connection_with(model, free_param, bracket, 1e-9, |m| splitting(m, spec).map(|r| r.splitting))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub point: State,
    pub period: f64,
    /// Nontrivial Floquet multiplier exp(∮ tr J dt).
    pub multiplier: f64,
    pub stable: bool,
    /// Half the x1-extent of the orbit.
    pub amplitude: f64,
    pub return_residual: f64,
    pub section: Section,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleOpts {
    pub tol: f64,
    pub t_max: f64,
    pub max_newton: usize,
    /// Shooting tolerance on |P(s) − s|.
    pub shoot_tol: f64,
}

impl Default for CycleOpts {
    fn default() -> Self {
        CycleOpts { tol: 1e-11, t_max: 1e4, max_newton: 30, shoot_tol: 1e-9 }
    }
}

struct Return {
    s: f64,
    period: f64,
    trace_integral: f64,
    xmin: f64,
    xmax: f64,
}

fn first_return(model: &Model, sec: &Section, s: f64, opts: &CycleOpts) -> Result<Return> {
    let y0 = sec.point(s);
    let m = *model;
    let mut hit: Option<Crossing> = None;
    let mut integral = 0.0;
    let (mut xmin, mut xmax) = (y0[0], y0[0]);
    let tr = solve(move |y| m.f(*y), y0, 0.0, opts.t_max, &IntegOpts::new(opts.tol, 2), |st| {
        let tr_at = |t: f64| m.jac(st.eval(t)).trace();
        if let Some(c) = section_crossing(st, sec) {
            let tm = 0.5 * (st.t0 + c.t);
            integral += (c.t - st.t0) / 6.0 * (tr_at(st.t0) + 4.0 * tr_at(tm) + tr_at(c.t));
            hit = Some(c);
            return Flow::Stop;
        }
        let tm = 0.5 * (st.t0 + st.t1);
        integral += (st.t1 - st.t0) / 6.0 * (tr_at(st.t0) + 4.0 * tr_at(tm) + tr_at(st.t1));
        for th in [0.25, 0.5, 0.75, 1.0] {
            let x = st.eval(st.t0 + th * (st.t1 - st.t0))[0];
            xmin = xmin.min(x);
            xmax = xmax.max(x);
        }
        Flow::Continue
    });
    match hit {
        Some(c) => Ok(Return { s: c.coord, period: c.t, trace_integral: integral, xmin, xmax }),
        None => Err(Error::NotFound(format!(
            "no return to the section within t = {} ({:?})",
            opts.t_max, tr.status
        ))),
    }
}

/// Newton shooting on the first-return map of a section through `guess`
/// (normal along the flow unless a section is given).
pub fn find_limit_cycle(model: &Model, section: Option<Section>, guess: State, opts: &CycleOpts) -> Result<CycleRecord> {
    if model.dim() != 2 {
        return usage("limit cycles need a planar model");
    }
    let sec = match section {
        Some(s) => s,
        None => Section::new(guess, model.f(guess), CrossDir::Plus)?,
    };
    let scale = norm(guess).max(1.0);
    let mut s = sec.coord(&guess);
    for _ in 0..opts.max_newton {
        if !sec.contains_coord(s) {
            return Err(Error::NotFound("shooting left the section (cycle collapsed onto an equilibrium?)".into()));
        }
        let r = first_return(model, &sec, s, opts)?;
        let res = r.s - s;
        if res.abs() <= opts.shoot_tol * scale {
            if r.s - sec.range.0 < 1e-6 * scale {
                return Err(Error::NotFound("shooting converged onto the section endpoint (equilibrium)".into()));
            }
            return Ok(cycle_record(&sec, &r, s));
        }
        // planar return map: P'(s) equals the multiplier up to the ratio of
        // normal velocities, so a finite difference is adequate for Newton
        let h = 1e-6 * scale;
        let r2 = first_return(model, &sec, s + h, opts)?;
        let dp = (r2.s - r.s) / h;
        if (dp - 1.0).abs() < 1e-12 {
            return Err(Error::Numerical("return map derivative is 1; Newton step undefined".into()));
        }
        let mut ds = -res / (dp - 1.0);
        let cap = 0.25 * scale.max(res.abs());
        if ds.abs() > cap {
            ds = cap * ds.signum();
        }
        s += ds;
    }
    Err(Error::Numerical(format!("cycle Newton did not converge in {} iterations", opts.max_newton)))
}

fn cycle_record(sec: &Section, r: &Return, s: f64) -> CycleRecord {
    let multiplier = r.trace_integral.exp();
    CycleRecord {
        point: sec.point(r.s),
        period: r.period,
        multiplier,
        stable: multiplier < 1.0,
        amplitude: 0.5 * (r.xmax - r.xmin),
        return_residual: (r.s - s).abs(),
        section: *sec,
    }
}

/// All cycles crossing `sec` at coordinates in `range`: sign changes of the
/// return-map displacement on an `n`-point grid, refined by bracketing.
pub fn scan_cycles(model: &Model, sec: &Section, range: (f64, f64), n: usize, opts: &CycleOpts) -> Result<Vec<CycleRecord>> {
    if model.dim() != 2 {
        return usage("limit cycles need a planar model");
    }
    if n < 2 || !(range.1 > range.0) {
        return usage("cycle scan needs n >= 2 and a nonempty range");
    }
    let disp = |s: f64| first_return(model, sec, s, opts).ok().map(|r| r.s - s);
    let grid: Vec<f64> = (0..n).map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64).collect();
    let vals: Vec<Option<f64>> = grid.iter().map(|&s| disp(s)).collect();
    let mut out = Vec::new();
    for i in 0..n - 1 {
        let (Some(f0), Some(f1)) = (vals[i], vals[i + 1]) else { continue };
        if f0.signum() == f1.signum() && f0 != 0.0 {
            continue;
        }
        let (mut lo, mut hi, mut flo) = (grid[i], grid[i + 1], f0);
        let tol = opts.shoot_tol * (range.1 - range.0).abs().max(1e-300);
        let mut ok = true;
        for _ in 0..200 {
            if (hi - lo).abs() <= tol {
                break;
            }
            let m = 0.5 * (lo + hi);
            let Some(fm) = disp(m) else {
                ok = false;
                break;
            };
            if fm == 0.0 {
                lo = m;
                hi = m;
                break;
            }
            if fm.signum() == flo.signum() {
                lo = m;
                flo = fm;
            } else {
                hi = m;
            }
        }
        if !ok {
            continue;
        }
        let s = 0.5 * (lo + hi);
        let r = first_return(model, sec, s, opts)?;
        out.push(cycle_record(sec, &r, s));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnKind {
    #[serde(rename = "SN")]
    Sn,
    #[serde(rename = "SN0")]
    Sn0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnOpts {
    /// Ball radius around the fold point.
    pub r: f64,
    pub t_budget: f64,
    pub tol: f64,
    pub state_bound: f64,
}

impl SnOpts {
    /// Defaults relative to a diagram scale.
    pub fn for_scale(scale: f64) -> Self {
        SnOpts { r: 1e-3 * scale, t_budget: 1e4, tol: 1e-10, state_bound: 1e3 * scale.max(1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnClassification {
    pub kind: SnKind,
    /// Closest approach to the fold point after the first excursion beyond 10r
    /// (infinite if the excursion never happened).
    pub return_distance: f64,
    /// return_distance − r.
    pub margin: f64,
    /// The classification does not hinge on the time budget.
    pub decided: bool,
    pub max_excursion: f64,
    pub time_reversed: bool,
    pub diagnostic: Option<String>,
}

/// Follows the one-sided centre-manifold departure of a saddle-node and
/// reports whether it returns into the r-ball (homoclinic to the saddle-node).
pub fn classify_sn_segment(model: &Model, fold_point: State, opts: &SnOpts) -> Result<SnClassification> {
    if model.dim() != 2 {
        return usage("saddle-node loop classification needs a planar model");
    }
    if !(opts.r > 0.0 && opts.t_budget > 0.0) {
        return usage("ball radius and time budget must be positive");
    }
    let j = model.jac(fold_point);
    let lh = j.trace();
    let scale = j.max_abs().max(1.0);
    if j.det().abs() > 1e-6 * scale * scale || lh.abs() < 1e-8 * scale {
        return usage("point is not a saddle-node (need det J = 0, tr J != 0)");
    }
    let v = oriented_eigvec(&j, 0.0);
    // left null vector normalised so ⟨w, v⟩ = 1
    let wl = oriented_eigvec(&j.transpose(), 0.0);
    let wv = dot(wl, v);
    if wv.abs() < 1e-12 {
        return usage("left and right null vectors are orthogonal (double zero)");
    }
    let w = [wl[0] / wv, wl[1] / wv];
    let d2 = model.d2(fold_point);
    let mut bvv = [0.0; 2];
    for (i, b) in bvv.iter_mut().enumerate() {
        for a in 0..2 {
            for c in 0..2 {
                *b += d2[i][a][c] * v[a] * v[c];
            }
        }
    }
    let c = 0.5 * dot(w, bvv);
    if c == 0.0 {
        return usage("fold coefficient vanishes (cusp)");
    }
    let sigma = if lh < 0.0 { 1.0 } else { -1.0 };
    let z0 = opts.r * sigma * c.signum();
    let y0 = [fold_point[0] + z0 * v[0], fold_point[1] + z0 * v[1]];
    let m = *model;
    let mut max_exc: f64 = 0.0;
    let mut left = false;
    let mut ret = f64::INFINITY;
    let mut reentered = false;
    let mut escaped = false;
    let mut stalled = false;
    let t1 = sigma * opts.t_budget;
    let tr = solve(move |y| m.f(*y), y0, 0.0, t1, &IntegOpts::new(opts.tol, 2), |st| {
        for th in [0.25, 0.5, 0.75, 1.0] {
            let p = st.eval(st.t0 + th * (st.t1 - st.t0));
            let d = norm(sub(p, fold_point));
            max_exc = max_exc.max(d);
            if d >= 10.0 * opts.r {
                left = true;
            }
            if left {
                ret = ret.min(d);
                if d <= opts.r {
                    reentered = true;
                    return Flow::Stop;
                }
            }
            if norm(p) > opts.state_bound {
                escaped = true;
                return Flow::Stop;
            }
        }
        // settled at another equilibrium
        let y = st.y1();
        let f = m.f(y);
        if left && norm(f) < 1e-12 * scale * norm(y).max(1.0) {
            stalled = true;
            return Flow::Stop;
        }
        Flow::Continue
    });
    let kind = if reentered { SnKind::Sn0 } else { SnKind::Sn };
    let margin = ret - opts.r;
    let integrator_failed = matches!(tr.status, TrajStatus::StepUnderflow | TrajStatus::NonFinite | TrajStatus::MaxSteps);
    let decided = reentered || escaped || stalled || (left && margin > 10.0 * opts.r);
    let diagnostic = if integrator_failed {
        Some(format!("integration stopped early: {:?}", tr.diagnostic))
    } else if !left {
        Some("departure never exceeded 10r within the time budget".into())
    } else {
        None
    };
    if integrator_failed && !reentered && !escaped {
        return Err(Error::Numerical(diagnostic.unwrap_or_default()));
    }
    Ok(SnClassification { kind, return_distance: ret, margin, decided, max_excursion: max_exc, time_reversed: sigma < 0.0, diagnostic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::find_equilibria_mlv;
    use crate::models::{MlvParams, St2Params};

    fn k_saddle() -> (f64, f64, f64) {
        (10f64.sqrt() / 2.0, 8.0 / 10f64.sqrt(), 10f64.sqrt() / 15.0)
    }

    #[test]
    fn axis_manifold_stays_on_axis() {
        let p = MlvParams::saddle_case(0.0, -3.0);
        let m = Model::Mlv(p);
        let eqs = find_equilibria_mlv(&p).unwrap();
        let a = SaddleSelector::AxisRight.select(&eqs).expect("two axis saddles");
        let b = SaddleSelector::AxisLeft.select(&eqs).unwrap();
        assert_ne!(a.xy(), b.xy());
        let sec = Section::bisector(a.xy(), b.xy()).unwrap();
        // on-axis stable branch of the right saddle points towards the left one
        let side = if b.state[0] < a.state[0] { -1.0 } else { 1.0 };
        let j = m.jac(a.xy());
        let (ls, _) = saddle_eigs(&m, &a).unwrap();
        assert_eq!(oriented_eigvec(&j, ls)[1], 0.0);
        let t = trace_manifold(&m, &a, Which::Stable, side, 1e-6, &TraceBudget::default(), None).unwrap();
        assert!(t.trajectory.y.iter().all(|y| y[1].abs() < 1e-12));
        let _ = sec;
    }

    #[test]
    fn cycle_near_hopf_min_model() {
        let k = k_saddle();
        // l1 > 0: the cycle surrounds the stable focus (b < 0) and repels
        let m = Model::St2Min(St2Params::new(-1.0, -0.004, k.0, k.1, k.2, 1.0));
        let c = find_limit_cycle(&m, None, [0.1, 0.0], &CycleOpts::default());
        let c = c.unwrap();
        assert!(c.period > 0.0 && c.return_residual < 1e-8);
        assert!(c.amplitude > 0.01 && c.amplitude < 1.0);
        assert!(!c.stable && c.multiplier > 1.0);
    }
}
