//! Dormand–Prince 5(4) with PI step-size control and the 4th-order
//! continuous extension used for event location.

use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::models::Model;

pub type State = [f64; 2];

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegOpts {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step magnitude (0 = unlimited).
    pub h_max: f64,
    pub max_steps: usize,
    /// Number of meaningful state components (1 or 2).
    pub dim: usize,
}

impl IntegOpts {
    pub fn new(tol: f64, dim: usize) -> Self {
        IntegOpts { rtol: tol, atol: tol, h_max: 0.0, max_steps: 2_000_000, dim }
    }

    pub fn with_h_max(mut self, h: f64) -> Self {
        self.h_max = h;
        self
    }
}

/// Dense-output coefficients of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseStep {
    pub t0: f64,
    pub t1: f64,
    pub rc: [State; 5],
}

impl DenseStep {
    pub fn y0(&self) -> State {
        self.rc[0]
    }

    pub fn y1(&self) -> State {
        [self.rc[0][0] + self.rc[1][0], self.rc[0][1] + self.rc[1][1]]
    }

    /// State at time t ∈ [t0, t1] (either orientation).
    pub fn eval(&self, t: f64) -> State {
        let th = (t - self.t0) / (self.t1 - self.t0);
        let th1 = 1.0 - th;
        let r = &self.rc;
        let mut y = [0.0; 2];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajStatus {
    /// Reached the final time.
    Completed,
    /// The observer asked to stop.
    Stopped,
    /// Step size collapsed (stiffness or blow-up).
    StepUnderflow,
    MaxSteps,
    NonFinite,
}

/// Samples at accepted steps plus the dense output between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<State>,
    pub dense: Vec<DenseStep>,
    pub status: TrajStatus,
    pub diagnostic: Option<String>,
}

impl Trajectory {
    pub fn last(&self) -> State {
        *self.y.last().expect("trajectory has at least the initial point")
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().expect("trajectory has at least the initial point")
    }

    /// Dense evaluation at any time inside the integrated span.
    pub fn at(&self, t: f64) -> Option<State> {
        self.dense
            .iter()
            .find(|s| (t - s.t0) * (t - s.t1) <= 0.0)
            .map(|s| s.eval(t))
    }
}

/// Decision returned by the per-step observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut r = *y;
    for i in 0..2 {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        r[i] += h * s;
    }
    r
}

/// Integrates ẏ = f(y) from t0 towards t1 (t1 < t0 integrates backward).
/// The observer sees every accepted step and may stop the run.
pub fn solve<F, O>(f: F, y0: State, t0: f64, t1: f64, opts: &IntegOpts, mut observer: O) -> Trajectory
where
    F: Fn(&State) -> State,
    O: FnMut(&DenseStep) -> Flow,
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let n = opts.dim.clamp(1, 2);
    let mut traj = Trajectory {
        t: vec![t0],
        y: vec![y0],
        dense: Vec::new(),
        status: TrajStatus::Completed,
        diagnostic: None,
    };
    if t1 == t0 {
        return traj;
    }
    let span = (t1 - t0).abs();
    let h_max = if opts.h_max > 0.0 { opts.h_max.min(span) } else { span };
    let norm = |e: &State, ya: &State, yb: &State| {
        let mut s = 0.0;
        for i in 0..n {
            let sc = opts.atol + opts.rtol * ya[i].abs().max(yb[i].abs());
            s += (e[i] / sc).powi(2);
        }
        (s / n as f64).sqrt()
    };
    let mut y = y0;
    let mut t = t0;
    let mut k1 = f(&y);
    // initial step (Hairer's heuristic)
    let d0 = norm(&y, &[0.0; 2], &[0.0; 2]).max(1e-300);
    let d1 = norm(&k1, &[0.0; 2], &[0.0; 2]);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(h_max);
    {
        let y1 = axpy(&y, dir * h, &[(1.0, &k1)]);
        let f1 = f(&y1);
        let d2 = norm(&[f1[0] - k1[0], f1[1] - k1[1]], &[0.0; 2], &[0.0; 2]) / h;
        let h1 = if d1.max(d2) <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        h = (100.0 * h).min(h1).min(h_max);
    }
    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let mut facold: f64 = 1e-4;
    let mut reject = false;
    let mut steps = 0usize;
    loop {
        if steps >= opts.max_steps {
            traj.status = TrajStatus::MaxSteps;
            traj.diagnostic = Some(format!("step budget {} exhausted at t = {t}", opts.max_steps));
            break;
        }
        let remaining = (t1 - t).abs();
        if remaining <= 1e-14 * t.abs().max(1.0) {
            break;
        }
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            traj.status = TrajStatus::StepUnderflow;
            traj.diagnostic = Some(format!("step size underflow at t = {t}"));
            break;
        }
        let hs = dir * h;
        let k2 = f(&axpy(&y, hs, &[(A21, &k1)]));
        let k3 = f(&axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(&axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(&axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(&axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y1 = axpy(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(&y1);
        steps += 1;
        let mut e = [0.0; 2];
        for i in 0..2 {
            e[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err = norm(&e, &y, &y1);
        if !err.is_finite() || !y1[0].is_finite() || !y1[1].is_finite() {
            h *= 0.1;
            reject = true;
            if h < 1e-14 * t.abs().max(1.0) {
                traj.status = TrajStatus::NonFinite;
                traj.diagnostic = Some(format!("non-finite state near t = {t}"));
                break;
            }
            continue;
        }
        let fac11 = err.powf(expo1);
        let mut fac = fac11 / facold.powf(beta);
        fac = (fac / 0.9).clamp(1.0 / 10.0, 1.0 / 0.2);
        let hnew = h / fac;
        if err <= 1.0 {
            facold = err.max(1e-4);
            let mut rc = [[0.0; 2]; 5];
            for i in 0..2 {
                let ydiff = y1[i] - y[i];
                let bspl = hs * k1[i] - ydiff;
                rc[0][i] = y[i];
                rc[1][i] = ydiff;
                rc[2][i] = bspl;
                rc[3][i] = ydiff - hs * k7[i] - bspl;
                rc[4][i] = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let tn = if last { t1 } else { t + hs };
            let step = DenseStep { t0: t, t1: tn, rc };
            t = tn;
            y = y1;
            k1 = k7;
            traj.t.push(t);
            traj.y.push(y);
            traj.dense.push(step);
            if observer(&step) == Flow::Stop {
                traj.status = TrajStatus::Stopped;
                break;
            }
            if last {
                break;
            }
            h = if reject { hnew.min(h) } else { hnew };
            h = h.min(h_max);
            reject = false;
        } else {
            h /= (fac11 / 0.9).min(1.0 / 0.2);
            reject = true;
        }
    }
    traj
}

/// Integrates a model over `t_span` with rtol = atol = `tol`.
pub fn integrate(model: &Model, x0: &[f64], t_span: (f64, f64), tol: f64) -> Result<Trajectory> {
    if !(tol > 0.0) {
        return usage("integration tolerance must be positive");
    }
    if x0.len() != model.dim() || x0.iter().any(|v| !v.is_finite()) {
        return usage("initial state must be finite and match the model dimension");
    }
    let y0 = [x0[0], if x0.len() > 1 { x0[1] } else { 0.0 }];
    let m = *model;
    Ok(solve(move |y| m.f(*y), y0, t_span.0, t_span.1, &IntegOpts::new(tol, model.dim()), |_| Flow::Continue))
}

/// Finds the time inside a dense step where `g` changes sign (g(t0)·g(t1) ≤ 0 assumed).
pub fn locate_in_step<G: Fn(&State) -> f64>(step: &DenseStep, g: G) -> (f64, State) {
    let (mut a, mut b) = (step.t0, step.t1);
    let mut ga = g(&step.eval(a));
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let gm = g(&step.eval(m));
        if (gm <= 0.0) == (ga <= 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    let t = 0.5 * (a + b);
    (t, step.eval(t))
}
