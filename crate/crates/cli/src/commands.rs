//! `run` and `sweep` verbs: execute the protocol and write outputs.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_atomic, write_json, QUARANTINE};
use crate::protocol::{execute, FitOutcome, ReferenceCache, RunFailure, RunOutput, RunRecord, VERSION};
use crate::table::{format_csv, number, SpectrumTable};

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Vacuum reference simulations actually executed.
    pub reference_runs: usize,
    pub runs: Vec<RunRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resonance: Option<FitOutcome>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<PointSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointSummary {
    pub index: usize,
    pub value: f64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub directory: String,
    pub runs: Vec<RunRecord>,
}

fn rel(base: &Path, path: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}

fn write_table(table: &SpectrumTable, cfg: &RunConfig, dir: &Path, base: &Path) -> CliResult<Vec<String>> {
    let mut written = Vec::new();
    for format in &cfg.output.formats {
        let (path, text) = match format {
            Format::Csv => (dir.join("spectrum.csv"), table.to_csv()),
            Format::Json => (dir.join("spectrum.json"), table.to_json() + "\n"),
        };
        write_atomic(&path, text.as_bytes())?;
        written.push(rel(base, &path));
    }
    Ok(written)
}

fn quarantine(failure: &RunFailure, dir: &Path, base: &Path) -> CliResult<Vec<String>> {
    let q = dir.join(QUARANTINE);
    let error_path = q.join("error.json");
    write_json(
        &error_path,
        &serde_json::json!({
            "error": failure.error.to_string(),
            "runs": failure.runs,
        }),
    )?;
    let mut written = vec![rel(base, &error_path)];
    if !failure.spectra.is_empty() {
        let path = q.join("partial_spectra.json");
        write_json(&path, &failure.spectra)?;
        written.push(rel(base, &path));
    }
    Ok(written)
}

/// Runs one configuration and writes its table and manifest under `out`.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    cfg.validate()?;
    let mut cache = ReferenceCache::default();
    let result = execute(cfg, &mut cache);
    let mut manifest = Manifest {
        version: VERSION.into(),
        command: "run".into(),
        config_sha256: cfg.hash(),
        status: "ok".into(),
        error: None,
        reference_runs: 0,
        runs: Vec::new(),
        resonance: None,
        outputs: Vec::new(),
        points: Vec::new(),
    };
    let outcome = match result {
        Ok(RunOutput {
            table, runs, resonance, ..
        }) => {
            manifest.outputs = write_table(&table, cfg, out, out)?;
            manifest.runs = runs;
            manifest.resonance = resonance;
            Ok(())
        }
        Err(failure) => {
            manifest.status = "failed".into();
            manifest.error = Some(failure.error.to_string());
            manifest.outputs = quarantine(&failure, out, out)?;
            manifest.runs = failure.runs;
            Err(failure.error)
        }
    };
    manifest.reference_runs = cache.simulated();
    write_json(&out.join("manifest.json"), &manifest)?;
    outcome.map(|_| manifest)
}

pub const AGGREGATE_COLUMNS: [&str; 9] = [
    "sweep_value",
    "gamma_ij_at_peak",
    "omega_at_peak",
    "gamma_ij_at_center",
    "gamma_AA_at_center",
    "delta_ij_max_abs",
    "omega_c",
    "Q",
    "status",
];

/// Linear interpolation of a table column at `w`; NaN outside.
fn column_at(table: &SpectrumTable, name: &str, w: f64) -> f64 {
    let x = table.column("omega");
    let y = table.column(name);
    let Some(i) = x.windows(2).position(|p| p[0] <= w && w <= p[1]) else {
        return f64::NAN;
    };
    let t = (w - x[i]) / (x[i + 1] - x[i]);
    y[i] * (1.0 - t) + y[i + 1] * t
}

fn aggregate_row(value: f64, center: f64, output: Option<&RunOutput>) -> Vec<String> {
    let Some(out) = output else {
        let mut row = vec![number(value)];
        row.extend(std::iter::repeat_n(number(f64::NAN), 7));
        row.push("failed".into());
        return row;
    };
    let t = &out.table;
    let g = t.column("gamma_ij");
    let w = t.column("omega");
    let peak = (0..g.len()).fold(0, |best, i| if g[i].abs() > g[best].abs() { i } else { best });
    let dmax = t.column("delta_ij").iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
    let (wc, q, status) = match &out.resonance {
        Some(FitOutcome::Fit(f)) if f.q_lower_bound => (f.omega_c, f.q_factor, "ok-q-lower-bound"),
        Some(FitOutcome::Fit(f)) => (f.omega_c, f.q_factor, "ok"),
        Some(FitOutcome::Failed { .. }) => (f64::NAN, f64::NAN, "ok-no-fit"),
        None => (f64::NAN, f64::NAN, "ok"),
    };
    let status = if out.truncated && status == "ok" { "ok-truncated" } else { status };
    vec![
        number(value),
        number(g[peak]),
        number(w[peak]),
        number(column_at(t, "gamma_ij", center)),
        number(column_at(t, "gamma_AA", center)),
        number(dmax),
        number(wc),
        number(q),
        status.to_string(),
    ]
}

/// Runs every sweep point in order. Failed points are recorded and the
/// sweep continues; any failure ends in [`CliError::PartialSweep`] after
/// the aggregate and manifest are written.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::config("sweep command needs a [sweep] section"))?;
    cfg.validate()?;
    // every point must be a valid configuration before anything runs
    let points: Vec<RunConfig> = sweep
        .values
        .iter()
        .map(|&v| {
            let mut p = cfg.with_override(&sweep.parameter, v)?;
            p.sweep = None;
            p.validate()?;
            Ok(p)
        })
        .collect::<CliResult<_>>()?;

    let mut cache = ReferenceCache::default();
    let mut manifest = Manifest {
        version: VERSION.into(),
        command: "sweep".into(),
        config_sha256: cfg.hash(),
        status: "ok".into(),
        error: None,
        reference_runs: 0,
        runs: Vec::new(),
        resonance: None,
        outputs: Vec::new(),
        points: Vec::new(),
    };
    let mut rows = Vec::new();
    let mut failed = 0;
    for (index, (point, &value)) in points.iter().zip(&sweep.values).enumerate() {
        let dir: PathBuf = out.join(format!("point_{index:03}"));
        let summary = match execute(point, &mut cache) {
            Ok(result) => {
                let files = write_table(&result.table, point, &dir, out)?;
                manifest.outputs.extend(files);
                rows.push(aggregate_row(value, point.source.center_frequency, Some(&result)));
                PointSummary {
                    index,
                    value,
                    status: "ok".into(),
                    error: None,
                    directory: rel(out, &dir),
                    runs: result.runs,
                }
            }
            Err(failure) => {
                failed += 1;
                manifest.outputs.extend(quarantine(&failure, &dir, out)?);
                rows.push(aggregate_row(value, point.source.center_frequency, None));
                PointSummary {
                    index,
                    value,
                    status: "failed".into(),
                    error: Some(failure.error.to_string()),
                    directory: rel(out, &dir),
                    runs: failure.runs,
                }
            }
        };
        manifest.points.push(summary);
    }
    let metadata = vec![
        ("format".to_string(), "coopfdtd-sweep-v1".to_string()),
        ("version".to_string(), VERSION.to_string()),
        ("config_sha256".to_string(), cfg.hash()),
        ("parameter".to_string(), sweep.parameter.clone()),
    ];
    let aggregate = out.join("aggregate.csv");
    write_atomic(&aggregate, format_csv(&metadata, &AGGREGATE_COLUMNS, &rows).as_bytes())?;
    manifest.outputs.push(rel(out, &aggregate));
    manifest.reference_runs = cache.simulated();
    if failed > 0 {
        manifest.status = "partial".into();
        manifest.error = Some(format!("{failed} of {} points failed", points.len()));
    }
    write_json(&out.join("manifest.json"), &manifest)?;
    if failed > 0 {
        return Err(CliError::PartialSweep {
            failed,
            total: points.len(),
        });
    }
    Ok(manifest)
}

/// Reads an aggregate table back as (header, rows of strings).
pub fn read_aggregate(path: &Path) -> CliResult<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap_or_default();
    if header != AGGREGATE_COLUMNS.join(",") {
        return Err(CliError::Table {
            path: path.display().to_string(),
            row: 0,
            column: "-".into(),
            message: format!("unexpected aggregate header {header:?}"),
        });
    }
    Ok(lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}
