//! Named invariant suites with per-check residuals.

use serde::{Deserialize, Serialize};

use crate::continuation::{continue_fold_curve, continue_hopf_curve, Codim2Kind, CodimOnePoint, ContOpts, CurveKind};
use crate::diagram::{build_diagram, Diagram, DiagramOpts, DiagramSpec};
use crate::equilibria::find_equilibria;
use crate::error::{usage, Error, Result};
use crate::global::{scan_cycles, splitting, CycleOpts, Section};
use crate::integrate::integrate;
use crate::models::{MlvParams, Model, ModelId, St2Params};
use crate::normalform::{
    conditions_residual, cusp_discriminant, cusp_map, cusp_map_jacobian_det, dbt_map, dbt_surfaces,
    equilibria_on_curve_residual, first_lyapunov, gamma_curves, invariant_manifold_check, min2_sn_curve,
    sn_residual_slope_along_s, st1_nondegeneracy, st2_point, verify_st1_centre_manifold, TOL,
};
use crate::walk::{st2_het_spec, walk_minimal, WalkOpts, ELLIPTIC_ORDER, SADDLE_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Normalform,
    Continuation,
    Global,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Suite> {
        match s {
            "all" => Ok(Suite::All),
            "normalform" => Ok(Suite::Normalform),
            "continuation" => Ok(Suite::Continuation),
            "global" => Ok(Suite::Global),
            _ => usage(format!("unknown suite '{s}' (all, normalform, continuation, global)")),
        }
    }
}

/// Fault injection for exercising the failure path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOpts {
    /// Added to k3 before the normal-form identities are checked.
    pub k3_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub suite: String,
    pub case: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Sink<'a> {
    suite: &'a str,
    out: Vec<Check>,
}

impl Sink<'_> {
    /// Records `residual < tolerance`; errors become failed checks.
    fn le(&mut self, name: &str, case: &str, r: Result<f64>, tolerance: f64) {
        let (residual, detail) = match r {
            Ok(v) => (v, None),
            Err(e) => (f64::INFINITY, Some(e.to_string())),
        };
        self.out.push(Check {
            name: name.into(),
            suite: self.suite.into(),
            case: case.into(),
            passed: residual.is_finite() && residual < tolerance,
            residual,
            tolerance,
            detail,
        });
    }

    fn flag(&mut self, name: &str, case: &str, r: Result<(bool, String)>) {
        let (passed, detail) = match r {
            Ok((p, d)) => (p, d),
            Err(e) => (false, e.to_string()),
        };
        self.out.push(Check {
            name: name.into(),
            suite: self.suite.into(),
            case: case.into(),
            passed,
            residual: if passed { 0.0 } else { 1.0 },
            tolerance: 0.5,
            detail: Some(detail),
        });
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOpts) -> VerifyReport {
    let mut checks = Vec::new();
    if matches!(suite, Suite::All | Suite::Normalform) {
        checks.extend(normalform_checks(opts));
    }
    if matches!(suite, Suite::All | Suite::Continuation) {
        checks.extend(continuation_checks());
    }
    if matches!(suite, Suite::All | Suite::Global) {
        checks.extend(global_checks());
    }
    let passed = checks.iter().all(|c| c.passed);
    VerifyReport { suite, passed, checks }
}

fn cases() -> [(&'static str, MlvParams); 2] {
    [("saddle", MlvParams::saddle_case(0.0, 0.0)), ("elliptic", MlvParams::elliptic_case(0.0, 0.0))]
}

fn normalform_checks(opts: &VerifyOpts) -> Vec<Check> {
    let mut s = Sink { suite: "normalform", out: Vec::new() };
    for (case, p) in cases() {
        let d = match st2_point(&p) {
            Ok(d) => d,
            Err(e) => {
                s.le("st2_point", case, Err(e), 0.0);
                continue;
            }
        };
        let k3 = d.k3 + opts.k3_offset;
        let scale = d.k1.abs().max(d.k2.abs()).max(k3.abs());
        let thr = TOL.identity_threshold(scale * scale);
        let (r1, r2) = conditions_residual(d.k1, d.k2, k3, d.eps);
        s.le("conditions_residual", case, Ok(r1.abs().max(r2.abs())), thr);
        s.le(
            "invariant_manifold",
            case,
            invariant_manifold_check(d.k1, d.k2, k3, d.eps).map(|r| r.max_abs_coeff()),
            TOL.identity_threshold(scale * scale * scale),
        );
        s.le(
            "equilibria_on_invariant_curve",
            case,
            equilibria_on_curve_residual(d.k1, d.k2, k3, d.eps).map(|r| r.max_abs_coeff()),
            TOL.identity_threshold(scale * scale),
        );
        let cm = verify_st1_centre_manifold(&p);
        s.le(
            "centre_manifold",
            case,
            cm.as_ref().map(|c| c.residual.max_abs_coeff_upto(2)).map_err(Clone::clone),
            TOL.identity_threshold(p.max_abs()),
        );
        s.le(
            "centre_manifold_reduced_linear",
            case,
            cm.map(|c| {
                let r = &c.reduced;
                (r.coeff(&[0, 1, 0, 1]) - 1.0).abs().max((r.coeff(&[0, 1, 1, 0]) - p.a21).abs())
            }),
            TOL.identity_threshold(p.max_abs()),
        );
        // DBT embedding with this case's coefficients
        s.le(
            "dbt_s_surface",
            case,
            grid(-0.5, 0.5, 21)
                .flat_map(|a| grid(-0.5, 0.5, 21).map(move |b| (a, b)))
                .map(|(a, b)| dbt_map(a, b, d.eps, d.k1, d.k2).map(|m| m.s_residual.abs()))
                .try_fold(0.0_f64, |m, r| r.map(|v| m.max(v))),
            TOL.surface,
        );
        let gam = |tc: bool| -> Result<f64> {
            let mut worst = 0.0_f64;
            for nu in grid(-0.5, 0.5, 41) {
                let (sn, tcp) = gamma_curves(nu, d.eps, d.k1, d.k2)?;
                let (m1, m2) = if tc { tcp } else { sn };
                let (rs, rsn) = dbt_surfaces(m1, m2, nu, d.eps, d.k1, d.k2)?;
                worst = worst.max(rs.abs()).max(rsn.abs());
                if tc && nu != 0.0 {
                    worst = worst.max(sn_residual_slope_along_s(m1, m2, nu, d.eps, d.k1, d.k2, 1e-4)? * 1e-4);
                }
            }
            Ok(worst)
        };
        s.le("dbt_gamma_sn", case, gam(false), TOL.surface);
        s.le("dbt_gamma_tc_tangency", case, gam(true), 1e-6);
    }
    // scalar minimal model of the one-zero point
    let cusp = || -> f64 {
        let mut worst = 0.0_f64;
        for b in grid(-2.0, 2.0, 81) {
            for a in [b * b / 4.0, 0.0] {
                let (mu, nu) = cusp_map(a, b);
                worst = worst.max(cusp_discriminant(mu, nu).abs());
            }
        }
        worst
    };
    s.le("cusp_discriminant", "scalar", Ok(cusp()), TOL.identity);
    let jac = grid(-2.0, 2.0, 81)
        .map(|b| (cusp_map_jacobian_det(b * b / 4.0, b) - b * b / 12.0).abs().max(cusp_map_jacobian_det(0.0, b).abs()))
        .fold(0.0_f64, f64::max);
    s.le("cusp_jacobian", "scalar", Ok(jac), TOL.identity);
    s.le("st1_nondegeneracy", "scalar", st1_nondegeneracy(2.0).map(|n| n.fd_discrepancy), 1e-6);
    let d = st2_point(&MlvParams::saddle_case(0.0, 0.0));
    s.flag(
        "lyapunov_positive",
        "saddle",
        d.and_then(|d| {
            let m = Model::St2Min(St2Params::new(-1.0, 0.0, d.k1, d.k2, d.k3, d.eps));
            let o = origin(&m)?;
            let l1 = first_lyapunov(&m, &o)?;
            Ok((l1 > 0.0, format!("l1 = {l1:.6e}")))
        }),
    );
    s.out
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

fn origin(m: &Model) -> Result<crate::equilibria::Equilibrium> {
    find_equilibria(m)?
        .into_iter()
        .find(|e| e.state[0] == 0.0 && e.state[1] == 0.0)
        .ok_or_else(|| Error::Numerical("origin not found among equilibria".into()))
}

/// Inventory diagram (SN, TC, HB and codim-2 markers) of a harvested parameter set.
pub fn mlv_inventory(p: &MlvParams, curves: Vec<CurveKind>) -> Result<Diagram> {
    let params = [("b1", p.b1), ("a11", p.a11), ("a12", p.a12), ("a21", p.a21), ("a22", p.a22)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    build_diagram(&DiagramSpec {
        model: ModelId::Mlv,
        params,
        active: ["e".into(), "b2".into()],
        ranges: None,
        curves,
        codim2: true,
        region_grid: 0,
        options: DiagramOpts::default(),
    })
}

fn point_error(d: &Diagram, kind: Codim2Kind, want: [f64; 2]) -> Result<f64> {
    d.points_of(kind)
        .map(|c| (c.params[0] - want[0]).abs().max((c.params[1] - want[1]).abs()))
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::NotFound(format!("no {} marker detected", kind.label())))
}

fn saddle_k() -> (f64, f64, f64, f64) {
    let r10 = 10f64.sqrt();
    (r10 / 2.0, 8.0 / r10, r10 / 15.0, 1.0)
}

fn continuation_checks() -> Vec<Check> {
    let mut s = Sink { suite: "continuation", out: Vec::new() };
    for (case, p) in cases() {
        let inv = mlv_inventory(&p, vec![CurveKind::Sn, CurveKind::Tc, CurveKind::Hb]);
        let (st1, st2) = match (crate::normalform::st1_point(&p), st2_point(&p)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => continue,
        };
        match &inv {
            Ok(d) => {
                s.le("codim2_st1", case, point_error(d, Codim2Kind::St1, [st1.e_star, st1.b2_star]), 1e-6);
                s.le("codim2_st2", case, point_error(d, Codim2Kind::St2, [st2.e_star, st2.b2_star]), 1e-6);
                if case == "saddle" {
                    // Bogdanov–Takens point on the interior fold line: b2 = −60/11
                    s.le(
                        "codim2_bt",
                        case,
                        d.points_of(Codim2Kind::Bt).map(|c| (c.params[1] + 60.0 / 11.0).abs()).min_by(f64::total_cmp).ok_or_else(|| Error::NotFound("no BT".into())),
                        1e-6,
                    );
                }
            }
            Err(e) => s.le("codim2_inventory", case, Err(e.clone()), 0.0),
        }
    }
    let (k1, k2, k3, eps) = saddle_k();
    let fold = || -> Result<f64> {
        let (a0, x0) = min2_sn_curve(0.1, eps, k3, Some(k1))?;
        let seed = CodimOnePoint {
            model: Model::St2Min(St2Params::new(a0, 0.1, k1, k2, k3, eps)),
            state: vec![x0.unwrap_or(0.0), 0.0],
        };
        let opts = ContOpts { h0: 1e-3, h_max: 1e-2, param_bounds: vec![(-1.0, 1.0), (-0.31, 0.31)], ..ContOpts::default() };
        let c = continue_fold_curve(("a", "b"), &seed, &opts)?;
        let inside: Vec<_> = c.points.iter().filter(|p| p.params[1].abs() <= 0.3).collect();
        if inside.len() < 50 {
            return Err(Error::Numerical(format!("only {} fold points in b ∈ [−0.3, 0.3]", inside.len())));
        }
        let mut worst = 0.0_f64;
        for i in 0..50 {
            let p = inside[i * (inside.len() - 1) / 49];
            let (a, _) = min2_sn_curve(p.params[1], eps, k3, None)?;
            worst = worst.max((p.params[0] - a).abs());
        }
        Ok(worst)
    };
    s.le("fold_curve_oracle", "st2_min", fold(), 1e-8);
    let hopf = || -> Result<f64> {
        let seed = CodimOnePoint { model: Model::St2Min(St2Params::new(-0.05, 0.0, k1, k2, k3, eps)), state: vec![0.0, 0.0] };
        let opts = ContOpts { h0: 1e-3, h_max: 1e-2, param_bounds: vec![(-0.2, 0.2), (-0.2, 0.2)], ..ContOpts::default() };
        let c = continue_hopf_curve(("a", "b"), &seed, &opts)?;
        Ok(c.points.iter().filter(|p| !p.neutral_saddle).map(|p| p.params[1].abs()).fold(0.0, f64::max))
    };
    s.le("hopf_curve_on_b_zero", "st2_min", hopf(), 1e-10);
    s.out
}

/// Cycle amplitudes near the Hopf line of the minimal saddle model at a fixed `a`.
pub fn hopf_amplitudes(a: f64, bs: &[f64]) -> Result<Vec<(f64, f64, bool)>> {
    let (k1, k2, k3, eps) = saddle_k();
    let mut out = Vec::new();
    for &b in bs {
        let m = Model::St2Min(St2Params::new(a, b, k1, k2, k3, eps));
        let right = find_equilibria(&m)?
            .into_iter()
            .filter(|e| e.state[0] > 1e-9 && e.state[0] < 0.5 / k3)
            .map(|e| e.state[0])
            .fold(f64::INFINITY, f64::min);
        let reach = if right.is_finite() { right } else { 1.0 };
        let sec = Section::ray([0.0, 0.0], [1.0, 0.0])?;
        let cyc = scan_cycles(&m, &sec, (1e-4 * reach, 0.95 * reach), 60, &CycleOpts { t_max: 2e3, ..CycleOpts::default() })?;
        let c = cyc
            .into_iter()
            .min_by(|x, y| x.amplitude.total_cmp(&y.amplitude))
            .ok_or_else(|| Error::NotFound(format!("no cycle at b = {b}")))?;
        out.push((b, c.amplitude, c.stable));
    }
    Ok(out)
}

/// Least-squares slope of log amplitude against log |b|.
pub fn amplitude_exponent(samples: &[(f64, f64, bool)]) -> f64 {
    let pts: Vec<(f64, f64)> = samples.iter().map(|(b, a, _)| (b.abs().ln(), a.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Side of b = 0 on which the small Hopf cycle of the minimal saddle model exists.
pub fn saddle_cycle_side(a: f64) -> Result<f64> {
    let (k1, k2, k3, eps) = saddle_k();
    let m = Model::St2Min(St2Params::new(a, 0.0, k1, k2, k3, eps));
    let l1 = first_lyapunov(&m, &origin(&m)?)?;
    Ok(-(k1 * l1).signum())
}

fn global_checks() -> Vec<Check> {
    let mut s = Sink { suite: "global", out: Vec::new() };
    // axis invariance of the harvested model
    let axis = || -> Result<f64> {
        let m = Model::Mlv(MlvParams::saddle_case(-10.0, -3.0));
        let mut worst = 0.0_f64;
        for x0 in [0.5, 1.5, 2.5] {
            let tr = integrate(&m, &[x0, 0.0], (0.0, 100.0), 1e-10)?;
            worst = worst.max(tr.y.iter().map(|y| y[1].abs()).fold(0.0, f64::max));
        }
        Ok(worst)
    };
    s.le("axis_invariance", "saddle", axis(), 1e-12);

    // minimal saddle model at a = −0.04: Hopf, growing cycle, heteroclinic cycle
    let a = -0.04;
    let het = || -> Result<(bool, String)> {
        let side = saddle_cycle_side(a)?;
        let (k1, k2, k3, eps) = saddle_k();
        let m = Model::St2Min(St2Params::new(a, 0.0, k1, k2, k3, eps));
        let f = |mm: &Model| {
            let sp = st2_het_spec(mm, side < 0.0).ok_or_else(|| Error::NotFound("no saddle pair".into()))?;
            splitting(mm, &sp).map(|r| r.splitting)
        };
        let sol = crate::global::find_connection_with(&m, "b", (side * 1e-5, side * 0.05), 1e-12, f)?;
        let b_het = sol.param;
        let cyc_mid = hopf_amplitudes(a, &[0.5 * b_het]).is_ok();
        let cyc_beyond = hopf_amplitudes(a, &[1.5 * b_het]).is_ok();
        let cyc_other = hopf_amplitudes(a, &[-0.5 * b_het]).is_ok();
        Ok((
            b_het * side > 0.0 && cyc_mid && !cyc_beyond && !cyc_other,
            format!("b_het = {b_het:.6e}; cycle between HB and Het: {cyc_mid}, beyond Het: {cyc_beyond}, before HB: {cyc_other}"),
        ))
    };
    s.flag("min2_het_region_sequence", "saddle", het());

    let amp = || -> Result<f64> {
        let side = saddle_cycle_side(a)?;
        let bs: Vec<f64> = [1e-4, 2e-4, 4e-4, 8e-4, 1.6e-3].iter().map(|b| side * b).collect();
        let am = hopf_amplitudes(a, &bs)?;
        Ok((amplitude_exponent(&am) - 0.5).abs())
    };
    s.le("hopf_amplitude_exponent", "saddle", amp(), 0.1);
    let stab = || -> Result<(bool, String)> {
        let side = saddle_cycle_side(a)?;
        let (k1, k2, k3, eps) = saddle_k();
        let m = Model::St2Min(St2Params::new(a, 0.0, k1, k2, k3, eps));
        let l1 = first_lyapunov(&m, &origin(&m)?)?;
        let c = hopf_amplitudes(a, &[side * 4e-4])?;
        // a positive coefficient means the small cycle is repelling
        Ok(((l1 > 0.0) == !c[0].2, format!("l1 = {l1:.4e}, cycle stable = {}", c[0].2)))
    };
    s.flag("lyapunov_vs_simulation", "saddle", stab());

    // circle walks around the double-zero point
    let walks = |elliptic: bool| -> Result<(bool, String)> {
        let p = if elliptic { MlvParams::elliptic_case(0.0, 0.0) } else { MlvParams::saddle_case(0.0, 0.0) };
        let d = st2_point(&p)?;
        let (k1, k2, k3) = if d.k3 < 0.0 { (-d.k1, -d.k2, -d.k3) } else { (d.k1, d.k2, d.k3) };
        let r = walk_minimal(k1, k2, k3, d.eps, &WalkOpts::default())?;
        let want: &[&str] = if elliptic { &ELLIPTIC_ORDER } else { &SADDLE_ORDER };
        Ok((r.starts_with(want), format!("events {:?}", r.labels())))
    };
    s.flag("walk_order", "saddle", walks(false));
    s.flag("walk_order", "elliptic", walks(true));

    // connection curves of the harvested diagrams
    for (case, p) in cases() {
        let kind = if case == "saddle" { CurveKind::Het } else { CurveKind::Hom };
        let r = mlv_inventory(&p, vec![CurveKind::Sn, CurveKind::Tc, CurveKind::Hb, kind]);
        match r {
            Ok(d) => {
                let t = d.terminations.iter().find(|t| t.kind == kind);
                let st2 = t.and_then(|t| t.distance_to.get("ST2").copied()).unwrap_or(f64::INFINITY);
                if case == "saddle" {
                    s.le("het_terminates_at_st2", case, Ok(st2), 1e-4);
                } else {
                    s.flag(
                        "hom_terminates_on_sn_not_st2",
                        case,
                        Ok((t.is_some() && st2 > 1e-4 && t.map(|t| t.distance_to_sn < 1e-4).unwrap_or(false), format!("end distance to ST2 {st2:.3e}"))),
                    );
                    let n0 = d.sn_segments.iter().filter(|g| g.kind == crate::global::SnKind::Sn0).count();
                    s.flag("sn0_segment", case, Ok((n0 > 0, format!("{n0} SN0 segments among {}", d.sn_segments.len()))));
                }
            }
            Err(e) => s.le("connection_curve", case, Err(e), 0.0),
        }
    }
    s.out
}
