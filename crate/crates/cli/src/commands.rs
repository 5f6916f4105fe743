use std::fs;
use std::io::Read;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde_json::{json, Value};
use steerlab_core::criterion::{evaluate_criterion, CriterionOptions, MeasurementDirection, Verdict};
use steerlab_core::family::{povm_chsh_threshold, scan_grid, write_scan_csv, ScanSpec};
use steerlab_core::io::{matrix_to_json, parse_state_json};
use steerlab_core::joint_measurability::{jm_family_sampler, JmVerdict, PovmFamily};
use steerlab_core::{
    canonicalize, convex_witness, lhs_model, CanonicalizationRecord, Result, SteerError, TwoQubitState,
};

use crate::CriterionFlags;

fn read_source(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| SteerError::Input(format!("cannot read stdin: {e}")))?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| SteerError::Input(format!("cannot read {}: {e}", path.display())))
    }
}

fn load_state(path: &Path) -> Result<TwoQubitState> {
    parse_state_json(&read_source(path)?)
}

impl CriterionFlags {
    fn options(&self) -> CriterionOptions {
        CriterionOptions {
            grid_n: self.grid_n,
            refine_iters: self.refine_iters,
            tolerance: self.tolerance,
            force_grid: self.force_grid,
            ..CriterionOptions::default()
        }
    }
}

fn to_input_frame(rec: &CanonicalizationRecord, x: &[f64; 3]) -> [f64; 3] {
    (rec.alice_rotation.transpose() * Vector3::from(*x)).into()
}

fn matrix3_json(m: &Matrix3<f64>) -> Value {
    json!((0..3)
        .map(|i| (0..3).map(|j| m[(i, j)]).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn canonical_json(rec: &CanonicalizationRecord) -> Value {
    let c = &rec.canonical;
    json!({
        "a": [c.a.x, c.a.y, c.a.z],
        "t": [c.t.x, c.t.y, c.t.z],
        "alice_rotation": matrix3_json(&rec.alice_rotation),
        "bob_rotation": matrix3_json(&rec.bob_rotation),
        "whitening_applied": rec.whitening_applied,
    })
}

pub fn check(path: &Path, flags: &CriterionFlags) -> Result<(Value, u8)> {
    let rho = load_state(path)?;
    let rec = canonicalize(&rho)?;
    let report = evaluate_criterion(&rec.canonical, &flags.options())?;
    let code = match report.verdict {
        Verdict::CertifiedUnsteerable => 0,
        Verdict::CriterionViolated => 1,
        Verdict::Inconclusive => 2,
    };
    let mut out = json!({
        "command": "check",
        "state": path.display().to_string(),
        "flags": flags,
        "canonical": canonical_json(&rec),
        "argmax_input_frame": to_input_frame(&rec, &report.argmax.to_array()),
        "report": report,
    });
    if code == 2 {
        let hint = format!(
            "the certified bound exceeds 1 but no violation was found; try a larger --grid-n than {}",
            flags.grid_n
        );
        eprintln!("note: {hint}");
        out["hint"] = json!(hint);
    }
    Ok((out, code))
}

fn parse_directions(path: &Path) -> Result<Vec<MeasurementDirection>> {
    let raw: Vec<[f64; 3]> = serde_json::from_str(&read_source(path)?)
        .map_err(|e| SteerError::Input(format!("malformed JSON in directions file: {e}")))?;
    if raw.is_empty() {
        return Err(SteerError::Input("directions file is empty".into()));
    }
    raw.into_iter()
        .map(|v| MeasurementDirection::new(Vector3::from(v)).map_err(|e| SteerError::Input(e.to_string())))
        .collect()
}

pub fn simulate(
    path: &Path,
    directions_file: Option<&Path>,
    fibonacci: Option<usize>,
    samples: usize,
    seed: u64,
    force: bool,
) -> Result<(Value, u8)> {
    if samples < lhs_model::MIN_SAMPLES {
        return Err(SteerError::OutOfRange(format!(
            "--samples must be at least {}, got {samples}",
            lhs_model::MIN_SAMPLES
        )));
    }
    let directions = match (directions_file, fibonacci) {
        (Some(f), _) => parse_directions(f)?,
        (None, Some(0)) => return Err(SteerError::Input("--fibonacci needs at least one direction".into())),
        (None, Some(n)) => MeasurementDirection::fibonacci(n),
        (None, None) => MeasurementDirection::axes(),
    };
    let rho = load_state(path)?;
    let rec = canonicalize(&rho)?;
    let verdict = evaluate_criterion(&rec.canonical, &CriterionOptions::default())?.verdict;
    if verdict != Verdict::CertifiedUnsteerable && !force {
        return Err(SteerError::Precondition(format!(
            "state is not certified unsteerable ({verdict:?}); pass --force to simulate anyway"
        )));
    }
    let canonical_dirs: Vec<MeasurementDirection> = directions
        .iter()
        .map(|d| MeasurementDirection::new(rec.alice_rotation * d.vector()).expect("unit"))
        .collect();
    let mut report =
        lhs_model::simulate_assemblage(&rec.canonical, &canonical_dirs, samples, seed).map_err(|e| match e {
            SteerError::NotReproducible {
                alpha,
                beta,
                direction: Some(d),
            } => SteerError::NotReproducible {
                alpha,
                beta,
                direction: Some(to_input_frame(&rec, &d)),
            },
            other => other,
        })?;
    for (r, d) in report.directions.iter_mut().zip(&directions) {
        r.direction = d.to_array();
    }
    let out = json!({
        "command": "simulate",
        "state": path.display().to_string(),
        "flags": {
            "directions_file": directions_file.map(|p| p.display().to_string()),
            "fibonacci": fibonacci,
            "samples": samples,
            "seed": seed,
            "force": force,
        },
        "criterion_verdict": verdict,
        "canonical": canonical_json(&rec),
        "report": report,
    });
    Ok((out, 0))
}

pub fn scan_family(
    p_steps: usize,
    chi_steps: usize,
    out: Option<&Path>,
    flags: &CriterionFlags,
) -> Result<(Value, u8)> {
    let rows = scan_grid(&ScanSpec::full(p_steps, chi_steps), &flags.options())?;
    match out {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| SteerError::Input(format!("cannot create {}: {e}", path.display())))?;
            write_scan_csv(&rows, file)?;
            let summary = json!({
                "command": "scan-family",
                "flags": {"p_steps": p_steps, "chi_steps": chi_steps, "out": path.display().to_string(), "criterion": flags},
                "rows": rows.len(),
            });
            Ok((summary, 0))
        }
        None => {
            write_scan_csv(&rows, std::io::stdout().lock())?;
            Ok((Value::Null, 0))
        }
    }
}

pub fn threshold(tol: f64) -> Result<(Value, u8)> {
    let p = povm_chsh_threshold(tol)?;
    Ok((
        json!({"command": "threshold", "flags": {"tol": tol}, "threshold": p}),
        0,
    ))
}

pub fn jm(arg: &str, grid_n: usize) -> Result<(Value, u8)> {
    let trimmed = arg.trim_start();
    let text = if trimmed.starts_with('{') || trimmed.starts_with('[') {
        arg.to_string()
    } else {
        read_source(Path::new(arg))?
    };
    let family = PovmFamily::from_json(&text)?;
    let report = jm_family_sampler(&family, grid_n)?;
    let code = match report.verdict {
        JmVerdict::CertifiedJointlyMeasurable => 0,
        JmVerdict::NotCertified => 1,
        JmVerdict::SampledOnly => 2,
    };
    let out = json!({
        "command": "jm",
        "flags": {"grid_n": grid_n},
        "family": family,
        "certified": report.verdict == JmVerdict::CertifiedJointlyMeasurable,
        "report": report,
    });
    Ok((out, code))
}

pub fn strengthen(path: &Path, budget: usize, seed: u64) -> Result<(Value, u8)> {
    let rho = load_state(path)?;
    let flags = json!({"budget": budget, "seed": seed});
    match convex_witness::strengthen(&rho, budget, seed) {
        Some(dec) => {
            let check = convex_witness::verify_decomposition(&rho, &dec)?;
            let out = json!({
                "command": "strengthen",
                "state": path.display().to_string(),
                "flags": flags,
                "found": true,
                "decomposition": dec,
                "verification": check,
            });
            Ok((out, 0))
        }
        None => {
            let out = json!({
                "command": "strengthen",
                "state": path.display().to_string(),
                "flags": flags,
                "found": false,
            });
            Ok((out, 2))
        }
    }
}

pub fn canonicalize_cmd(path: &Path) -> Result<(Value, u8)> {
    let rho = load_state(path)?;
    let rec = canonicalize(&rho)?;
    let out = json!({
        "command": "canonicalize",
        "state": path.display().to_string(),
        "canonical": canonical_json(&rec),
        "matrix": matrix_to_json(&rec.canonical.matrix()),
    });
    Ok((out, 0))
}
