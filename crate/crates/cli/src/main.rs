use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use sntbif_core::diagram::{build_diagram, write_diagram, DiagramSpec};
use sntbif_core::equilibria::find_equilibria;
use sntbif_core::models::{Model, ModelId};
use sntbif_core::portrait::{build_portrait, write_portrait, PortraitSpec};
use sntbif_core::verify::{run_suite, Suite, VerifyOpts};
use sntbif_core::Error;

#[derive(Parser)]
#[command(name = "sntbif", version, about = "Bifurcation analysis of the harvested Lotka-Volterra model and its minimal models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override a configuration value, e.g. `e=-10` or `k3_offset=1e-3` (repeatable).
    #[arg(long = "seed-override", value_name = "K=V")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Equilibria with eigenvalues and classification at one parameter point.
    Equilibria(Common),
    /// Two-parameter diagram: curves.csv, points.json, diagram.svg.
    Diagram(Common),
    /// Phase portrait: trajectories.csv, portrait.svg, portrait.json.
    Portrait(Common),
    /// Invariant suites; exit status 1 if any check fails.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

/// Failure with its exit status.
struct Fail(u8, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Usage(_) | Error::Degenerate(_) | Error::OutOfDomain(_) => 2,
            Error::Numerical(_) | Error::NotFound(_) => 3,
        };
        Fail(code, e.to_string())
    }
}

fn config_error(msg: impl Into<String>) -> Fail {
    Fail(2, msg.into())
}

fn parse_overrides(list: &[String]) -> Result<Vec<(String, f64)>, Fail> {
    list.iter()
        .map(|s| {
            let (k, v) = s.split_once('=').ok_or_else(|| config_error(format!("override '{s}' is not of the form k=v")))?;
            let v: f64 = v.trim().parse().map_err(|_| config_error(format!("override '{s}': value is not a number")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

/// Reads the config, applies parameter overrides, and deserialises it.
fn load<T: serde::de::DeserializeOwned>(c: &Common) -> Result<T, Fail> {
    let path = c.config.as_ref().ok_or_else(|| config_error("--config PATH is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let ov = parse_overrides(&c.overrides)?;
    if !ov.is_empty() {
        let obj = v.as_object_mut().ok_or_else(|| config_error("config must be a JSON object"))?;
        let params = obj.entry("params").or_insert_with(|| Value::Object(Default::default()));
        let params = params.as_object_mut().ok_or_else(|| config_error("'params' must be an object"))?;
        for (k, x) in ov {
            params.insert(k, x.into());
        }
    }
    serde_json::from_value(v).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn out_dir(c: &Common) -> Result<&Path, Fail> {
    c.out_dir.as_deref().ok_or_else(|| config_error("--out-dir PATH is required"))
}

fn io(e: std::io::Error) -> Fail {
    Fail(3, format!("writing output: {e}"))
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct PointConfig {
    model: ModelId,
    #[serde(default)]
    params: std::collections::BTreeMap<String, f64>,
}

fn run(cli: Cli) -> Result<u8, Fail> {
    match cli.cmd {
        Cmd::Equilibria(c) => {
            let cfg: PointConfig = load(&c)?;
            let m = Model::from_values(cfg.model, cfg.params.iter().map(|(k, v)| (k.as_str(), *v)))?;
            let eqs = find_equilibria(&m)?;
            let report = serde_json::json!({ "model": m, "equilibria": eqs });
            let text = serde_json::to_string_pretty(&report).map_err(|e| Fail(3, e.to_string()))?;
            if let Some(dir) = &c.out_dir {
                std::fs::create_dir_all(dir).map_err(io)?;
                std::fs::write(dir.join("equilibria.json"), format!("{text}\n")).map_err(io)?;
            }
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(0)
        }
        Cmd::Diagram(c) => {
            let spec: DiagramSpec = load(&c)?;
            let dir = out_dir(&c)?;
            let d = build_diagram(&spec)?;
            write_diagram(&d, dir).map_err(io)?;
            eprintln!(
                "{} curves, {} codim-2 points written to {}{}",
                d.curves.len(),
                d.points.len(),
                dir.display(),
                if d.not_found.is_empty() { String::new() } else { format!(" (not found: {})", d.not_found.join(", ")) }
            );
            Ok(0)
        }
        Cmd::Portrait(c) => {
            let spec: PortraitSpec = load(&c)?;
            let dir = out_dir(&c)?;
            let p = build_portrait(&spec)?;
            write_portrait(&p, dir).map_err(io)?;
            for d in &p.diagnostics {
                eprintln!("diagnostic: {d}");
            }
            Ok(0)
        }
        Cmd::Verify { common, suite } => {
            let suite = Suite::parse(&suite)?;
            let mut opts = VerifyOpts::default();
            for (k, v) in parse_overrides(&common.overrides)? {
                match k.as_str() {
                    "k3_offset" => opts.k3_offset = v,
                    _ => return Err(config_error(format!("verify accepts only the override k3_offset, not '{k}'"))),
                }
            }
            let report = run_suite(suite, &opts);
            let text = serde_json::to_string_pretty(&report).map_err(|e| Fail(3, e.to_string()))?;
            if let Some(dir) = &common.out_dir {
                std::fs::create_dir_all(dir).map_err(io)?;
                std::fs::write(dir.join("verify.json"), format!("{text}\n")).map_err(io)?;
            }
            let _ = writeln!(std::io::stdout(), "{text}");
            for c in report.failed() {
                eprintln!("FAIL {} [{}] residual {:.3e} (tolerance {:.1e})", c.name, c.case, c.residual, c.tolerance);
            }
            Ok(if report.passed { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
