//! Diagram assembly, file formats and phase portraits.

use std::sync::OnceLock;

use sntbif_core::continuation::{Codim2Kind, CurveKind};
use sntbif_core::diagram::{build_diagram, curves_csv, parse_curves_csv, points_json, render_svg, Diagram, DiagramSpec};
use sntbif_core::equilibria::Classification;
use sntbif_core::models::MlvParams;
use sntbif_core::normalform::{st1_point, st2_point};
use sntbif_core::portrait::{build_portrait, render_portrait_svg, trajectories_csv, PortraitSpec, TRAJ_HEADER};
use sntbif_core::Error;

fn spec(json: serde_json::Value) -> DiagramSpec {
    serde_json::from_value(json).expect("valid spec")
}

fn mlv_spec(a11: f64, curves: serde_json::Value) -> DiagramSpec {
    spec(serde_json::json!({
        "model": "MLV",
        "params": { "b1": 15.0, "a11": a11, "a12": -3.0, "a21": 2.0, "a22": 1.0 },
        "active": ["e", "b2"],
        "curves": curves,
        "region_grid": 0
    }))
}

fn saddle() -> &'static Diagram {
    static D: OnceLock<Diagram> = OnceLock::new();
    D.get_or_init(|| build_diagram(&mlv_spec(-5.0, serde_json::json!(["SN", "TC", "HB", "HET"]))).unwrap())
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let d = saddle();
    let rows = parse_curves_csv(&curves_csv(d)).unwrap();
    let mut k = 0;
    for (id, c) in d.curves.iter().enumerate() {
        for p in &c.points {
            let r = &rows[k];
            let a = d.active_coords(c, p);
            assert_eq!(r.curve_id, id);
            assert_eq!((r.param1.to_bits(), r.param2.to_bits()), (a[0].to_bits(), a[1].to_bits()));
            assert_eq!(r.x1.to_bits(), p.state[0].to_bits());
            assert_eq!(r.x2.to_bits(), p.state[1].to_bits());
            assert_eq!((r.param1_name.as_str(), r.param2_name.as_str()), ("e", "b2"));
            k += 1;
        }
    }
    assert_eq!(k, rows.len());
    assert!(rows.iter().any(|r| r.kind == "NS"), "neutral saddles are labelled");
}

#[test]
fn svg_is_deterministic() {
    let a = render_svg(saddle());
    let again = build_diagram(&mlv_spec(-5.0, serde_json::json!(["SN", "TC", "HB", "HET"]))).unwrap();
    assert_eq!(a, render_svg(&again));
    assert!(a.starts_with("<svg") || a.starts_with("<?xml"));
    assert!(!a.contains("<script"));
}

#[test]
fn empty_curve_list_gives_axes_only() {
    let mut s = mlv_spec(-5.0, serde_json::json!([]));
    s.codim2 = false;
    let d = build_diagram(&s).unwrap();
    assert!(d.curves.is_empty());
    let svg = render_svg(&d);
    assert!(svg.contains("<rect") && svg.contains(">e<") && svg.contains(">b2<"));
    assert!(!svg.contains("<polyline") && !svg.contains("<circle") && !svg.contains("<line"));
}

#[test]
fn bad_specs_are_usage_errors() {
    let mut s = mlv_spec(-5.0, serde_json::json!(["SN"]));
    s.active = ["e".into(), "b1".into()];
    assert!(matches!(build_diagram(&s), Err(Error::Usage(_))));
    let unknown = serde_json::from_value::<DiagramSpec>(serde_json::json!({ "model": "MLV", "active": ["e", "b2"], "colour": 1 }));
    assert!(unknown.is_err());
    let cusp = spec(serde_json::json!({ "model": "CUSP_UNF", "active": ["mu", "nu"] }));
    assert!(matches!(build_diagram(&cusp), Err(Error::Usage(_))));
}

fn codim2_from_json(v: &serde_json::Value, kind: &str) -> Vec<[f64; 2]> {
    v["codim2"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["kind"] == kind)
        .map(|p| [p["params"]["e"].as_f64().unwrap(), p["params"]["b2"].as_f64().unwrap()])
        .collect()
}

fn nearest(pts: &[[f64; 2]], want: [f64; 2]) -> f64 {
    pts.iter().map(|p| (p[0] - want[0]).abs().max((p[1] - want[1]).abs())).fold(f64::INFINITY, f64::min)
}

#[test]
fn points_json_matches_closed_forms() {
    let v = points_json(saddle());
    let p = MlvParams::saddle_case(0.0, 0.0);
    let (s1, s2) = (st1_point(&p).unwrap(), st2_point(&p).unwrap());
    assert!(nearest(&codim2_from_json(&v, "ST1"), [s1.e_star, s1.b2_star]) < 1e-6);
    assert!(nearest(&codim2_from_json(&v, "ST2"), [s2.e_star, s2.b2_star]) < 1e-6);
    assert!(nearest(&codim2_from_json(&v, "ST1"), [14.0625, -7.5]) < 1e-6);
    assert!(nearest(&codim2_from_json(&v, "ST2"), [-11.25, -3.0]) < 1e-6);

    let e = build_diagram(&mlv_spec(7.0, serde_json::json!(["SN", "TC", "HB"]))).unwrap();
    let v = points_json(&e);
    assert!(nearest(&codim2_from_json(&v, "ST2"), [225.0 / 28.0, 15.0 / 7.0]) < 1e-6);
}

#[test]
fn saddle_inventory() {
    let d = saddle();
    assert!(d.curves_of(CurveKind::Sn).count() >= 2);
    for k in [CurveKind::Tc, CurveKind::Hb, CurveKind::Het] {
        assert!(d.curves_of(k).count() > 0, "{k:?} missing");
    }
    for k in [Codim2Kind::St1, Codim2Kind::St2, Codim2Kind::Bt] {
        assert!(d.points_of(k).count() > 0, "{k:?} missing");
    }
    assert!(nearest(&d.points_of(Codim2Kind::Bt).map(|p| [p.params[0], p.params[1]]).collect::<Vec<_>>(), [p_bt_e(), -60.0 / 11.0]) < 1e-6);
}

/// e of the Bogdanov–Takens point, from the interior fold line at b2 = −60/11.
fn p_bt_e() -> f64 {
    let p = MlvParams::saddle_case(0.0, 0.0);
    let b2 = -60.0 / 11.0;
    let d1 = p.a11 * p.a22 - p.a12 * p.a21;
    let c = p.b1 * p.a22 - p.a12 * b2;
    c * c / (4.0 * d1 * p.a22)
}

#[test]
fn minimal_model_diagram_has_origin_marker() {
    let d = build_diagram(&spec(serde_json::json!({
        "model": "ST2_MIN",
        "params": { "k1": 1.5811388300841898, "k2": 2.5298221281347035, "k3": 0.21081851067789195, "eps": 1.0 },
        "active": ["a", "b"],
        "ranges": [[-0.06, 0.06], [-0.06, 0.06]],
        "region_grid": 0
    })))
    .unwrap();
    let st2: Vec<_> = d.points_of(Codim2Kind::St2).collect();
    assert_eq!(st2.len(), 1);
    assert_eq!((st2[0].params[0], st2[0].params[1]), (0.0, 0.0));
    assert!(d.curves_of(CurveKind::Het).count() > 0);
}

fn portrait(json: serde_json::Value) -> sntbif_core::portrait::Portrait {
    build_portrait(&serde_json::from_value::<PortraitSpec>(json).unwrap()).unwrap()
}

fn st2_params(b: f64) -> serde_json::Value {
    serde_json::json!({ "a": -0.04, "b": b, "k1": 1.5811388300841898, "k2": 2.5298221281347035, "k3": 0.21081851067789195, "eps": 1.0 })
}

#[test]
fn region_one_portrait() {
    let p = portrait(serde_json::json!({
        "model": "ST2_MIN", "params": st2_params(0.002), "window": [[-0.4, 0.4], [-0.4, 0.4]], "cycles": false
    }));
    let o = p.equilibria.iter().find(|e| e.state == vec![0.0, 0.0]).unwrap();
    assert_eq!(o.classification, Classification::Source);
    assert!(o.eigen.re_im().iter().all(|(_, im)| *im != 0.0), "focus");
    let saddles = p.equilibria.iter().filter(|e| e.classification == Classification::Saddle && e.state[0].abs() < 0.4).count();
    assert_eq!(saddles, 2);
    assert!(p.connections(1e-8).count() >= 1, "links {:?}", p.links);
    let csv = trajectories_csv(&p);
    assert!(csv.starts_with(TRAJ_HEADER));
    assert_eq!(render_portrait_svg(&p), render_portrait_svg(&p));
}

#[test]
fn portrait_between_hopf_and_heteroclinic_has_cycle() {
    let p = portrait(serde_json::json!({
        "model": "ST2_MIN", "params": st2_params(-0.001), "window": [[-0.4, 0.4], [-0.4, 0.4]], "manifolds": false
    }));
    assert!(!p.cycles.is_empty(), "{:?}", p.diagnostics);
}

#[test]
fn axis_seeds_stay_on_axis() {
    let p = portrait(serde_json::json!({
        "model": "MLV",
        "params": { "b1": 15.0, "a11": -5.0, "a12": -3.0, "a21": 2.0, "a22": 1.0, "e": -10.0, "b2": -3.0 },
        "seeds": [[0.5, 0.0], [1.5, 0.0], [2.5, 0.0]],
        "window": [[0.0, 3.0], [-0.5, 2.0]],
        "manifolds": false,
        "cycles": false
    }));
    let seeded: Vec<_> = p.trajectories.iter().filter(|t| t.kind.starts_with("seed")).collect();
    assert_eq!(seeded.len(), 6);
    assert!(seeded.iter().all(|t| t.x.iter().all(|x| x[1] == 0.0)));
}

#[test]
fn portrait_rejects_non_planar_model() {
    let r = build_portrait(&serde_json::from_value::<PortraitSpec>(serde_json::json!({ "model": "ST1_MIN", "params": { "a": 0.1, "b": 1.0 } })).unwrap());
    assert!(matches!(r, Err(Error::Usage(_))));
}
