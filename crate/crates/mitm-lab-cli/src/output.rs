//! Result serialization (CSV + JSON) and the trajectory dump format.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mitm_lab::attacker::AttackedTrajectory;
use mitm_lab::harness::ExperimentResult;
use mitm_lab::lti::NominalTrajectory;
use nalgebra::{DMatrix, DVector};

/// Floats in CSV cells carry 12 significant digits.
pub fn fmt_sig12(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    format!("{v:.11e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig12).unwrap_or_default()
}

/// Fixed column order: cell keys, the standard metric block, then any
/// experiment-specific extras (alphabetical).
pub fn result_to_csv(result: &ExperimentResult) -> String {
    let mut cell_keys: BTreeSet<&str> = BTreeSet::new();
    let mut extra_keys: BTreeSet<&str> = BTreeSet::new();
    for cell in &result.cells {
        cell_keys.extend(cell.cell.keys().map(String::as_str));
        extra_keys.extend(cell.extra.keys().map(String::as_str));
    }

    let mut header: Vec<String> = cell_keys.iter().map(|k| k.to_string()).collect();
    header.extend(
        [
            "rate",
            "ci_lo",
            "ci_hi",
            "t_hat",
            "c_hat_at_n0",
            "n0",
            "thm1_lower",
            "thm2_upper",
            "censored_frac",
            "diverged",
            "trials",
        ]
        .map(String::from),
    );
    header.extend(extra_keys.iter().map(|k| k.to_string()));

    let mut out = header.join(",");
    out.push('\n');
    for cell in &result.cells {
        let mut row: Vec<String> = cell_keys
            .iter()
            .map(|k| cell.cell.get(*k).cloned().unwrap_or_default())
            .collect();
        row.push(opt(cell.rate));
        row.push(opt(cell.ci_lo));
        row.push(opt(cell.ci_hi));
        row.push(opt(cell.t_hat));
        row.push(opt(cell.c_hat_at_n0));
        row.push(cell.n0.clone().unwrap_or_default());
        row.push(opt(cell.thm1_lower));
        row.push(opt(cell.thm2_upper));
        row.push(opt(cell.censored_frac));
        row.push(cell.diverged.to_string());
        row.push(cell.trials.to_string());
        for k in &extra_keys {
            row.push(cell.extra.get(*k).copied().map(fmt_sig12).unwrap_or_default());
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Emit `result.csv` / `result.json` (or one of them) into `out_dir`.
pub fn emit_results(
    result: &ExperimentResult,
    format: Option<&str>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let mut written = Vec::new();
    let want = |f: &str| format.is_none() || format == Some(f);
    if want("csv") {
        let path = out_dir.join("result.csv");
        fs::write(&path, result_to_csv(result))?;
        written.push(path);
    }
    if want("json") {
        let path = out_dir.join("result.json");
        let mut text = serde_json::to_string_pretty(result)?;
        text.push('\n');
        fs::write(&path, text)?;
        written.push(path);
        // each cost curve also lands in its own file for `bounds`
        for (label, curve) in &result.curves {
            let sanitized: String = label
                .chars()
                .map(|c| if c.is_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
                .collect();
            let path = out_dir.join(format!("curve_{sanitized}.json"));
            let mut text = serde_json::to_string_pretty(curve)?;
            text.push('\n');
            fs::write(&path, text)?;
            written.push(path);
        }
    }
    if written.is_empty() {
        bail!("unknown format `{}` (expected csv or json)", format.unwrap_or(""));
    }
    Ok(written)
}

fn header_columns(dim: usize) -> Vec<String> {
    let mut cols = vec!["step".to_string(), "theta".to_string()];
    for prefix in ["x", "v", "y", "u"] {
        for i in 0..dim {
            cols.push(format!("{prefix}_{i}"));
        }
    }
    for i in 0..dim * dim {
        cols.push(format!("a_hat_{i}"));
    }
    cols
}

fn push_vec(row: &mut Vec<String>, v: Option<&DVector<f64>>, dim: usize) {
    match v {
        Some(v) => row.extend(v.iter().map(|x| fmt_sig12(*x))),
        None => row.extend(std::iter::repeat_n(String::new(), dim)),
    }
}

/// Dump an attacked trajectory: one row per step with the true state, the
/// fictitious state, the feedback, the controller input and the attacker's
/// estimate (row-major). The final step has no input columns.
pub fn dump_attacked(traj: &AttackedTrajectory) -> String {
    let dim = traj.states[0].len();
    let mut out = header_columns(dim).join(",");
    out.push('\n');
    for k in 0..traj.states.len() {
        let mut row = vec![k.to_string(), traj.theta_at(k).to_string()];
        push_vec(&mut row, Some(&traj.states[k]), dim);
        push_vec(&mut row, Some(&traj.fictitious[k]), dim);
        push_vec(&mut row, Some(&traj.feedback[k]), dim);
        push_vec(&mut row, traj.inputs.get(k), dim);
        row.extend(traj.estimates[k].iter().map(|x| fmt_sig12(*x)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Dump a nominal trajectory in the same schema (`v = y = x`, `theta = 0`,
/// zero estimate).
pub fn dump_nominal(traj: &NominalTrajectory) -> String {
    let dim = traj.states[0].len();
    let mut out = header_columns(dim).join(",");
    out.push('\n');
    let zeros = vec!["0".to_string(); dim * dim]
        .join(",");
    for k in 0..traj.states.len() {
        let mut row = vec![k.to_string(), "0".to_string()];
        push_vec(&mut row, Some(&traj.states[k]), dim);
        push_vec(&mut row, Some(&traj.states[k]), dim);
        push_vec(&mut row, Some(&traj.states[k]), dim);
        push_vec(&mut row, traj.inputs.get(k), dim);
        row.push(zeros.clone());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use mitm_lab::harness::presets;

    #[test]
    fn empty_result_yields_header_only_csv() {
        let config = presets::scalar_fig2a();
        let result = mitm_lab::harness::ExperimentResult::new(&config, "success_vs_l");
        let csv = result_to_csv(&result);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1);
        assert!(lines[0].starts_with("rate,ci_lo,ci_hi,t_hat"));
    }

    #[test]
    fn sig12_formatting_is_stable() {
        assert_eq!(fmt_sig12(0.375), "3.75000000000e-1");
        assert_eq!(fmt_sig12(-1.5), "-1.50000000000e0");
    }
}

/// The parts of a dump the detectors need.
pub struct DumpedTrajectory {
    pub dim: usize,
    pub feedback: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub estimates: Vec<DMatrix<f64>>,
    pub theta: Vec<u8>,
}

/// Parse a trajectory dump produced by `simulate` or `attack`.
pub fn read_dump(text: &str) -> Result<DumpedTrajectory> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| anyhow!("empty trajectory dump"))?
        .split(',')
        .collect();
    let dim = header.iter().filter(|c| c.starts_with("x_")).count();
    if dim == 0 {
        bail!("trajectory dump has no state columns");
    }
    let expected = header_columns(dim);
    if header != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        bail!("trajectory dump header does not match the expected schema");
    }
    let y_base = 2 + 2 * dim;
    let u_base = 2 + 3 * dim;
    let a_base = 2 + 4 * dim;

    let mut feedback = Vec::new();
    let mut inputs = Vec::new();
    let mut estimates = Vec::new();
    let mut theta = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != expected.len() {
            bail!("row {} has {} columns, expected {}", ln + 2, cells.len(), expected.len());
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| anyhow!("row {}: bad {what} value `{s}`", ln + 2))
        };
        theta.push(
            cells[1]
                .parse::<u8>()
                .map_err(|_| anyhow!("row {}: bad theta `{}`", ln + 2, cells[1]))?,
        );
        feedback.push(DVector::from_fn(dim, |i, _| {
            parse(cells[y_base + i], "feedback").unwrap_or(f64::NAN)
        }));
        if !cells[u_base].is_empty() {
            inputs.push(DVector::from_fn(dim, |i, _| {
                parse(cells[u_base + i], "input").unwrap_or(f64::NAN)
            }));
        }
        estimates.push(DMatrix::from_fn(dim, dim, |r, c| {
            parse(cells[a_base + r * dim + c], "estimate").unwrap_or(f64::NAN)
        }));
    }
    if feedback.iter().any(|v| v.iter().any(|x| x.is_nan())) {
        bail!("trajectory dump contains unparseable feedback values");
    }
    Ok(DumpedTrajectory {
        dim,
        feedback,
        inputs,
        estimates,
        theta,
    })
}
