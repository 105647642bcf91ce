//! Cross-route comparison: per-checkpoint trace-norm distances between two
//! state-series artifacts, judged against a tolerance.

use std::path::Path;

use serde_json::json;
use sqpulse::hilbert::trace_norm_distance;

use crate::artifacts::read_state_series;

/// Mean-count comparison between two run summaries.
pub fn compare_counts(a: &Path, b: &Path, tolerance: f64) -> Result<(f64, f64, bool), String> {
    let read_mean = |path: &Path| -> Result<f64, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        doc["data"]["mean_counts"]
            .as_f64()
            .ok_or_else(|| format!("{}: no mean_counts field", path.display()))
    };
    let ma = read_mean(a)?;
    let mb = read_mean(b)?;
    Ok((ma, mb, (ma - mb).abs() <= tolerance))
}

pub struct CompareReport {
    pub rows: Vec<(f64, f64)>,
    pub worst: f64,
    pub pass: bool,
    pub json: serde_json::Value,
}

pub fn compare_states(a: &Path, b: &Path, tolerance: f64) -> Result<CompareReport, String> {
    let (meta_a, series_a) =
        read_state_series(a).map_err(|e| format!("{}: {e}", a.display()))?;
    let (meta_b, series_b) =
        read_state_series(b).map_err(|e| format!("{}: {e}", b.display()))?;
    if series_a.checkpoints.len() != series_b.checkpoints.len() {
        return Err(format!(
            "checkpoint grids differ: {} vs {} points",
            series_a.checkpoints.len(),
            series_b.checkpoints.len()
        ));
    }
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (ca, cb) in series_a.checkpoints.iter().zip(&series_b.checkpoints) {
        if (ca.t - cb.t).abs() > 1e-6 {
            return Err(format!("checkpoint times differ: {} vs {}", ca.t, cb.t));
        }
        let d = trace_norm_distance(&ca.rho.to_operator(), &cb.rho.to_operator())
            .map_err(|e| e.to_string())?;
        worst = worst.max(d);
        rows.push((ca.t, d));
    }
    let pass = worst <= tolerance;
    let json = json!({
        "a": { "path": a.display().to_string(), "meta": meta_a },
        "b": { "path": b.display().to_string(), "meta": meta_b },
        "tolerance": tolerance,
        "distances": rows.iter().map(|(t, d)| json!({"t": t, "trace_norm": d})).collect::<Vec<_>>(),
        "worst": worst,
        "pass": pass,
    });
    Ok(CompareReport {
        rows,
        worst,
        pass,
        json,
    })
}
