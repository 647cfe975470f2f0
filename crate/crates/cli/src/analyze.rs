//! `analyze` verb: resonance fit, pole search or amplitude traces from a
//! written spectrum table.

use std::path::Path;

use coopfdtd::dynamics::{
    amplitudes, coupling_w, find_poles, markov_poles, CouplingFunction, PairCoupling, SearchBox,
};
use coopfdtd::hilbert::{kramers_kronig, BandWindow};
use coopfdtd::radiometry::{AtomSpec, GammaSpectrum, PowerSpectrum};
use coopfdtd::resonance::fit_resonance;
use coopfdtd::scene::DipoleLabel;
use num_complex::Complex64;
use serde_json::json;

use crate::config::{CouplingMode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_atomic, write_json};
use crate::table::{format_csv, number, SpectrumTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Resonance,
    Poles,
    Dynamics,
}

impl std::str::FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "resonance" => Ok(Mode::Resonance),
            "poles" => Ok(Mode::Poles),
            "dynamics" => Ok(Mode::Dynamics),
            other => Err(CliError::stage("analyze")(coopfdtd::Error::InvalidArgument(format!(
                "unknown mode {other:?} (expected resonance, poles or dynamics)"
            )))),
        }
    }
}

fn spectrum(table: &SpectrumTable, column: &str, scale: f64, pair: (DipoleLabel, DipoleLabel)) -> GammaSpectrum {
    GammaSpectrum {
        frequencies: table.column("omega"),
        gamma: table.column(column).iter().map(|g| scale * g).collect(),
        pair,
    }
}

/// Frequency-dependent coupling built from the table, in physical units of
/// the configured atoms. The local shifts come from the transform of
/// `Γ_ii − α_i ω`, the free-space part being absorbed into `ω_i`.
pub fn coupling_from_table(
    table: &SpectrumTable,
    cfg: &RunConfig,
    atoms: (&AtomSpec, &AtomSpec),
) -> CliResult<CouplingFunction> {
    let freqs = table.column("omega");
    let window = cfg.kk_window(&freqs)?;
    let (a, b) = atoms;
    let stage = CliError::stage;
    let pair = |column: &str, scale: f64, labels, vacuum: f64| -> CliResult<PairCoupling> {
        let g = spectrum(table, column, scale, labels);
        let mut env = g.clone();
        env.gamma.iter_mut().zip(&freqs).for_each(|(v, w)| *v -= vacuum * w);
        let d = kramers_kronig(&env, &window).map_err(stage("hilbert"))?;
        let w = coupling_w(&d, &g).map_err(stage("dynamics"))?;
        PairCoupling::from_samples(w.frequencies().to_vec(), w.gamma().to_vec(), w.delta().to_vec(), cfg.analysis.branch)
            .map_err(stage("dynamics"))
    };
    let (la, lb) = (DipoleLabel::A, DipoleLabel::B);
    let cross = (a.alpha * b.alpha).sqrt();
    let aa = pair("gamma_AA", a.alpha, (la, la), a.alpha)?;
    let bb = pair("gamma_BB", b.alpha, (lb, lb), b.alpha)?;
    let ab = pair("gamma_ij", cross, (la, lb), 0.0)?;
    let ba = PairCoupling::from_samples(
        ab.frequencies().to_vec(),
        ab.gamma().to_vec(),
        ab.delta().to_vec(),
        cfg.analysis.branch,
    )
    .map_err(stage("dynamics"))?;
    let spectral = CouplingFunction::new(aa, ab, ba, bb).map_err(stage("dynamics"))?;
    match cfg.analysis.coupling {
        CouplingMode::Spectral => Ok(spectral),
        CouplingMode::Markov => {
            let (lo, hi) = spectral.band();
            let at = |p: &PairCoupling, w: f64| p.eval(w).map_err(stage("dynamics"));
            let (wa, wb) = (a.transition_frequency, b.transition_frequency);
            let mean = 0.5 * (wa + wb);
            let constant = |w: Complex64| PairCoupling::constant(lo, hi, w).map_err(stage("dynamics"));
            CouplingFunction::new(
                constant(at(&spectral.aa, wa)?)?,
                constant(at(&spectral.ab, mean)?)?,
                constant(at(&spectral.ba, mean)?)?,
                constant(at(&spectral.bb, wb)?)?,
            )
            .map_err(stage("dynamics"))
        }
    }
}

fn require(cfg: Option<&RunConfig>, mode: &str) -> CliResult<RunConfig> {
    cfg.cloned()
        .ok_or_else(|| CliError::config(format!("analyze mode {mode} needs --config for the atoms")))
}

/// Runs one analysis, writes `analysis_<mode>.json` (and `amplitudes.csv`
/// for dynamics) under `out` and returns the JSON report.
pub fn cmd_analyze(table_path: &Path, mode: &str, cfg: Option<&RunConfig>, out: &Path) -> CliResult<serde_json::Value> {
    let mode: Mode = mode.parse()?;
    let table = SpectrumTable::load(table_path)?;
    if let Some(c) = cfg {
        c.validate()?;
    }
    let freqs = table.column("omega");
    let report = match mode {
        Mode::Resonance => {
            let window = cfg
                .and_then(|c| c.resonance_window())
                .unwrap_or(BandWindow::new(freqs[0], freqs[freqs.len() - 1]));
            let decay_ratio = table.meta("decay_ratio").and_then(|v| v.parse().ok());
            let power = PowerSpectrum {
                frequencies: freqs.clone(),
                power: table.column("gamma_AA"),
                decay_ratio,
            };
            let mut fit = fit_resonance(&power, &window).map_err(CliError::stage("resonance"))?;
            fit.q_lower_bound |= table.meta("truncated") == Some("true");
            json!({ "mode": "resonance", "column": "gamma_AA", "window": window, "fit": fit })
        }
        Mode::Poles => {
            let cfg = require(cfg, "poles")?;
            let (a, b) = cfg.atoms()?;
            let w = coupling_from_table(&table, &cfg, (&a, &b))?;
            let search = SearchBox::around((&a, &b), &w).map_err(CliError::stage("dynamics"))?;
            let poles = find_poles((&a, &b), &w, search).map_err(CliError::stage("dynamics"))?;
            let mut report = json!({
                "mode": "poles",
                "coupling": cfg.analysis.coupling,
                "atoms": [a, b],
                "search_box": search,
                "poles": poles,
            });
            if a.transition_frequency == b.transition_frequency && cfg.analysis.coupling == CouplingMode::Markov {
                let w0 = a.transition_frequency;
                let (waa, wab) = (
                    w.aa.eval(w0).map_err(CliError::stage("dynamics"))?,
                    w.ab.eval(w0).map_err(CliError::stage("dynamics"))?,
                );
                // W = Δ − iΓ/2
                report["closed_form"] = json!(markov_poles(w0, -2.0 * waa.im, -2.0 * wab.im, waa.re, wab.re));
            }
            report
        }
        Mode::Dynamics => {
            let cfg = require(cfg, "dynamics")?;
            let (a, b) = cfg.atoms()?;
            let w = coupling_from_table(&table, &cfg, (&a, &b))?;
            let t_max = match cfg.analysis.t_max {
                Some(t) => t,
                None => {
                    let g = -2.0 * w.aa.eval(a.transition_frequency).map_err(CliError::stage("dynamics"))?.im;
                    if !(g > 0.0) {
                        return Err(CliError::config("set analysis.t_max: local decay rate is not positive"));
                    }
                    10.0 / g
                }
            };
            let n = cfg.analysis.t_count;
            let times: Vec<f64> = (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect();
            let trace = amplitudes((&a, &b), &w, &times).map_err(CliError::stage("dynamics"))?;
            let pop = trace.population();
            let rows: Vec<Vec<String>> = (0..n)
                .map(|i| {
                    [trace.times[i], trace.a[i].re, trace.a[i].im, trace.b[i].re, trace.b[i].im, pop[i]]
                        .iter()
                        .map(|v| number(*v))
                        .collect()
                })
                .collect();
            let meta = vec![
                ("format".to_string(), "coopfdtd-amplitudes-v1".to_string()),
                ("table".to_string(), table_path.display().to_string()),
                ("coverage_deviation".to_string(), number(trace.coverage_deviation)),
            ];
            let csv = format_csv(&meta, &["t", "re_a", "im_a", "re_b", "im_b", "population"], &rows);
            write_atomic(&out.join("amplitudes.csv"), csv.as_bytes())?;
            json!({
                "mode": "dynamics",
                "coupling": cfg.analysis.coupling,
                "t_max": t_max,
                "coverage_deviation": trace.coverage_deviation,
                "final_population": pop[n - 1],
                "trace": "amplitudes.csv",
            })
        }
    };
    let name = match mode {
        Mode::Resonance => "analysis_resonance.json",
        Mode::Poles => "analysis_poles.json",
        Mode::Dynamics => "analysis_dynamics.json",
    };
    write_json(&out.join(name), &report)?;
    Ok(report)
}
