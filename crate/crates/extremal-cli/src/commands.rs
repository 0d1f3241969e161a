//! Subcommand drivers; each returns a process exit code
//! (0 success, 1 configuration error, 2 continuation stall).

use std::path::Path;

use anyhow::Result;
use extremal_core::continuation::{
    dimension_sweep, find_lambda_star, solution_at, trace_branch, write_branch_csv, Branch,
    LambdaStarKind, Segment,
};
use extremal_core::estimates::{energy, verify_all, write_reports_json};
use extremal_core::spectrum::lambda_star_bounds;
use extremal_core::Error as CoreError;

use crate::config::RunConfig;
use crate::jsonfmt::JsonObject;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_STALL: i32 = 2;

fn trace_from_config(cfg: &RunConfig) -> Result<Branch, CoreError> {
    let spec = cfg.problem().map_err(|e| CoreError::Parameter(e.to_string()))?;
    let grid = cfg.grid(&spec).map_err(|e| CoreError::Parameter(e.to_string()))?;
    let settings = cfg
        .settings(&spec)
        .map_err(|e| CoreError::Parameter(e.to_string()))?;
    trace_branch(&spec, &grid, &settings)
}

fn write_summary(branch: &Branch, seed: u64, out: &Path) -> Result<()> {
    let mut obj = JsonObject::new();
    obj.int("seed", seed as i64);
    match branch.lambda_star {
        Some(star) => {
            obj.num("lambda_star", star.value)
                .num("lambda_star_half_width", star.half_width)
                .str(
                    "lambda_star_kind",
                    match star.kind {
                        LambdaStarKind::Fold => "fold",
                        LambdaStarKind::SingularAsymptote => "singular-asymptote",
                    },
                );
        }
        None => {
            obj.null("lambda_star")
                .null("lambda_star_half_width")
                .null("lambda_star_kind");
        }
    }
    match branch.fold_index {
        Some(k) => {
            obj.int("fold_index", k as i64)
                .num("fold_lambda", branch.points[k].lambda)
                .num("fold_u0", branch.points[k].u0)
                .num("fold_mu1", branch.points[k].mu1);
        }
        None => {
            obj.null("fold_index")
                .null("fold_lambda")
                .null("fold_u0")
                .null("fold_mu1");
        }
    }
    obj.str("termination", &branch.termination.to_string())
        .int("points", branch.points.len() as i64)
        .num("lambda_1", branch.lambda1);
    std::fs::write(out.join("summary.json"), obj.finish())?;
    Ok(())
}

pub fn cmd_branch(cfg: &RunConfig, out: &Path) -> i32 {
    let dump_points = match cfg.bool_or("output.points", false) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut branch = match trace_from_config(cfg) {
        Ok(b) => b,
        Err(CoreError::ContinuationStalled) => {
            eprintln!("error: {}", CoreError::ContinuationStalled);
            return EXIT_STALL;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match find_lambda_star(&mut branch) {
        Ok(star) => log::info!(
            "lambda* = {:.12} +/- {:.2e} ({:?})",
            star.value,
            star.half_width,
            star.kind
        ),
        Err(e) => {
            // traced but too short to locate the extremal parameter
            eprintln!("error: {e}");
            let _ = write_branch_csv(&branch, out, dump_points);
            let _ = write_summary(&branch, cfg.seed, out);
            return EXIT_STALL;
        }
    }
    if let Err(e) = write_branch_csv(&branch, out, dump_points) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    if let Err(e) = write_summary(&branch, cfg.seed, out) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    EXIT_OK
}

pub fn cmd_bounds(cfg: &RunConfig, out: &Path) -> i32 {
    let spec = match cfg.problem() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let grid = match cfg.grid(&spec) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let (lower, upper) = match lambda_star_bounds(&spec, &grid) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    // the computed extremal parameter is reported when a branch is available
    let star = trace_from_config(cfg)
        .ok()
        .and_then(|mut b| find_lambda_star(&mut b).ok())
        .map(|s| s.value);
    let mut obj = JsonObject::new();
    obj.num("lower", lower).num("upper", upper);
    obj.opt_num("lambda_star", star);
    match star {
        Some(s) => obj.bool("sandwich_ok", lower <= s && s <= upper),
        None => obj.null("sandwich_ok"),
    };
    if let Err(e) = std::fs::write(out.join("bounds.json"), obj.finish()) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    EXIT_OK
}

pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> i32 {
    let t_samples = match parse_samples(cfg, "verify.t_samples", &[0.5, 1.0, 2.0]) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let p_samples = match parse_samples(cfg, "verify.p_samples", &[2.0]) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let lam_min = cfg.f64_or("verify.lambda_min", 0.0).unwrap_or(0.0);
    let lam_max = cfg.f64_or("verify.lambda_max", f64::INFINITY).unwrap_or(f64::INFINITY);
    let mut branch = match trace_from_config(cfg) {
        Ok(b) => b,
        Err(CoreError::ContinuationStalled) => {
            eprintln!("error: {}", CoreError::ContinuationStalled);
            return EXIT_STALL;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let _ = find_lambda_star(&mut branch);
    // restrict to the requested lambda window by masking points
    branch.points.retain(|p| p.lambda >= lam_min && p.lambda <= lam_max || p.u0 == 0.0);
    let semistable = branch.points.iter().filter(|p| p.stable && p.u0 > 0.0).count();
    let reports = verify_all(&branch, &t_samples, &p_samples);
    if semistable == 0 || reports.is_empty() {
        log::warn!("no semi-stable points in the requested lambda window; empty report");
    }
    if let Err(e) = write_reports_json(&reports, &out.join("estimates.json")) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let all_ok = reports
        .iter()
        .filter(|r| !r.params.iter().any(|(k, _)| *k == "dv"))
        .all(|r| r.satisfied);
    if all_ok {
        EXIT_OK
    } else {
        eprintln!("error: estimate checks failed; see estimates.json");
        EXIT_CONFIG
    }
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path, dims: &[u32]) -> i32 {
    if dims.is_empty() {
        eprintln!("error: empty dimension list for sweep");
        return EXIT_CONFIG;
    }
    let spec = match cfg.problem() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let grid_m = match cfg.usize_or("grid.points", 1024) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let grading = match cfg.grading(&spec) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let settings = match cfg.settings(&spec) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let rows = dimension_sweep(&spec, dims, grid_m, grading, &settings);
    let mut csv = String::from("N,lambda_star,sup_u_star,classification\n");
    for row in &rows {
        if let Some(err) = &row.error {
            log::warn!("N = {}: {err}", row.dimension);
        }
        csv.push_str(&format!(
            "{},{:.16e},{:.16e},{}\n",
            row.dimension, row.lambda_star, row.sup_u_star, row.classification
        ));
    }
    if let Err(e) = std::fs::write(out.join("sweep.csv"), csv) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    EXIT_OK
}

pub fn cmd_energy(cfg: &RunConfig, out: &Path) -> i32 {
    let factor = cfg.f64_or("energy.lambda_factor", 0.97).unwrap_or(0.97);
    let eps = cfg.f64_or("energy.eps", 0.25).unwrap_or(0.25);
    let p = cfg.f64_or("energy.p", 2.0).unwrap_or(2.0);
    let mut branch = match trace_from_config(cfg) {
        Ok(b) => b,
        Err(CoreError::ContinuationStalled) => {
            eprintln!("error: {}", CoreError::ContinuationStalled);
            return EXIT_STALL;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let star = match find_lambda_star(&mut branch) {
        Ok(s) => s.value,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_STALL;
        }
    };
    let lambda = factor * star;
    let run = (|| -> extremal_core::Result<(f64, f64)> {
        let umin = solution_at(&branch, lambda, Segment::Minimal)?;
        let usec = solution_at(&branch, lambda, Segment::Second)?;
        let jmin = energy(&branch.spec, &branch.grid, &umin.u, eps, p, lambda)?;
        let jsec = energy(&branch.spec, &branch.grid, &usec.u, eps, p, lambda)?;
        Ok((jmin, jsec))
    })();
    let (jmin, jsec) = match run {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut obj = JsonObject::new();
    obj.num("lambda", lambda)
        .num("lambda_star", star)
        .num("eps", eps)
        .num("p", p)
        .num("j_minimal", jmin)
        .num("j_second", jsec)
        .num("delta", jsec - jmin)
        .bool("ordering_ok", jsec > jmin);
    if let Err(e) = std::fs::write(out.join("energy.json"), obj.finish()) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    EXIT_OK
}

fn parse_samples(cfg: &RunConfig, key: &str, default: &[f64]) -> Result<Vec<f64>> {
    match cfg.raw(key) {
        None => Ok(default.to_vec()),
        Some(text) => {
            let mut out = Vec::new();
            for part in text.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                out.push(part.parse::<f64>().map_err(|_| {
                    anyhow::anyhow!("config key {key}: bad number `{part}`")
                })?);
            }
            Ok(out)
        }
    }
}
