//! The four-run protocol: vacuum reference, A alone, B alone, both.

use std::collections::{BTreeMap, HashMap};

use coopfdtd::fdtd::{self, DftRecord, StopCriterion};
use coopfdtd::hilbert::{kramers_kronig, BandWindow, DeltaSpectrum};
use coopfdtd::radiometry::{self, AtomSpec, GammaSpectrum, PowerSpectrum};
use coopfdtd::resonance::{fit_resonance, ResonanceFit};
use coopfdtd::scene::{self, DipoleLabel, DipoleSpec, Scene, Vec3};
use coopfdtd::Real;
use serde::Serialize;

use crate::config::{Precision, RunConfig};
use crate::error::{CliError, CliResult};
use crate::table::SpectrumTable;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One executed (or reused) simulation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub stage: String,
    pub scene_hash: String,
    pub steps: usize,
    pub decay_ratio: f64,
    pub truncated: bool,
    /// Served from the reference cache instead of simulated.
    pub reused: bool,
}

impl RunRecord {
    fn from(stage: &str, rec: &DftRecord, reused: bool) -> Self {
        RunRecord {
            stage: stage.into(),
            scene_hash: rec.metadata.scene_hash.clone(),
            steps: rec.metadata.steps,
            decay_ratio: rec.metadata.decay_ratio,
            truncated: rec.metadata.truncated,
            reused,
        }
    }
}

/// Vacuum reference powers keyed by everything they depend on.
#[derive(Default)]
pub struct ReferenceCache {
    entries: HashMap<String, (PowerSpectrum, RunRecord)>,
    simulated: usize,
}

impl ReferenceCache {
    /// Number of reference simulations actually run.
    pub fn simulated(&self) -> usize {
        self.simulated
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum FitOutcome {
    Fit(ResonanceFit),
    Failed { error: String },
}

pub struct RunOutput {
    pub table: SpectrumTable,
    pub runs: Vec<RunRecord>,
    pub resonance: Option<FitOutcome>,
    pub truncated: bool,
}

/// A failed run with whatever was computed before the failure.
pub struct RunFailure {
    pub error: CliError,
    pub runs: Vec<RunRecord>,
    pub spectra: BTreeMap<String, PowerSpectrum>,
}

impl From<CliError> for RunFailure {
    fn from(error: CliError) -> Self {
        RunFailure {
            error,
            runs: Vec::new(),
            spectra: BTreeMap::new(),
        }
    }
}

/// Box edge of the reference scene: one wavelength at the source centre.
fn reference_scene(cfg: &RunConfig, orientation: Vec3) -> CliResult<Scene> {
    let side = 1.0 / cfg.source.center_frequency;
    let side = side.max(8.0 / cfg.grid.resolution as f64);
    let base = scene::build_vacuum([side; 3]).map_err(CliError::stage("vacuum-reference"))?;
    let dipole = DipoleSpec::new(DipoleLabel::A, [0.0; 3], orientation).map_err(CliError::stage("vacuum-reference"))?;
    scene::place_dipoles(&base, &[dipole]).map_err(CliError::stage("vacuum-reference"))
}

fn simulate<T: Real>(
    cfg: &RunConfig,
    scenes: &[&Scene],
    freqs: &[f64],
    stop: StopCriterion,
) -> coopfdtd::Result<Vec<DftRecord>> {
    let grid = cfg.grid.params();
    fdtd::run_common_length::<T>(scenes, &grid, &cfg.source, freqs, stop, cfg.analysis.stop.accept_truncated)
}

fn simulate_any(
    cfg: &RunConfig,
    scenes: &[&Scene],
    freqs: &[f64],
    stop: StopCriterion,
) -> coopfdtd::Result<Vec<DftRecord>> {
    match cfg.grid.precision {
        Precision::F64 => simulate::<f64>(cfg, scenes, freqs, stop),
        Precision::F32 => simulate::<f32>(cfg, scenes, freqs, stop),
    }
}

fn reference(
    cfg: &RunConfig,
    cache: &mut ReferenceCache,
    orientation: Vec3,
    freqs: &[f64],
    runs: &mut Vec<RunRecord>,
) -> Result<PowerSpectrum, RunFailure> {
    let scene = reference_scene(cfg, orientation)?;
    let key = serde_json::to_string(&(
        &scene,
        cfg.grid.params(),
        cfg.grid.precision,
        &cfg.source,
        freqs,
        cfg.analysis.stop,
    ))
    .expect("key serializes");
    if let Some((p, rec)) = cache.entries.get(&key) {
        runs.push(RunRecord { reused: true, ..rec.clone() });
        return Ok(p.clone());
    }
    let fail = |error: CliError, runs: &Vec<RunRecord>| RunFailure {
        error,
        runs: runs.clone(),
        spectra: BTreeMap::new(),
    };
    let records = simulate_any(cfg, &[&scene], freqs, cfg.stop())
        .map_err(|e| fail(CliError::stage("vacuum-reference")(e), runs))?;
    let rec = &records[0];
    let p = radiometry::emission_power(rec, DipoleLabel::A)
        .map_err(|e| fail(CliError::stage("vacuum-reference")(e), runs))?;
    let record = RunRecord::from("vacuum-reference", rec, false);
    cache.simulated += 1;
    runs.push(record.clone());
    cache.entries.insert(key, (p.clone(), record));
    Ok(p)
}

/// Geometric mean of two reference spectra on the same grid.
fn mean_reference(a: &PowerSpectrum, b: &PowerSpectrum) -> PowerSpectrum {
    PowerSpectrum {
        frequencies: a.frequencies.clone(),
        power: a.power.iter().zip(&b.power).map(|(x, y)| (x * y).sqrt()).collect(),
        decay_ratio: None,
    }
}

/// Transform values on the sample grid: interpolated between midpoints,
/// extrapolated by half a step at the window ends, NaN outside.
fn delta_on_grid(delta: &DeltaSpectrum, freqs: &[f64], window: &BandWindow) -> Vec<f64> {
    let mid = &delta.frequencies;
    let d = &delta.delta;
    freqs
        .iter()
        .map(|&w| {
            let h = if mid.len() > 1 { mid[1] - mid[0] } else { 0.0 };
            if w < window.lo - 1e-9 * h || w > window.hi + 1e-9 * h {
                return f64::NAN;
            }
            if let Some(v) = delta.at(w) {
                return v;
            }
            if mid.len() < 2 {
                return d.first().copied().unwrap_or(f64::NAN);
            }
            let n = mid.len();
            let (i, j) = if w < mid[0] { (0, 1) } else { (n - 2, n - 1) };
            d[i] + (d[j] - d[i]) * (w - mid[i]) / (mid[j] - mid[i])
        })
        .collect()
}

/// Γ spectrum viewed as a power spectrum for the resonance fitter.
pub fn as_power(g: &GammaSpectrum, decay_ratio: Option<f64>) -> PowerSpectrum {
    PowerSpectrum {
        frequencies: g.frequencies.clone(),
        power: g.gamma.clone(),
        decay_ratio,
    }
}

/// Runs the protocol for one configuration. Γ and Δ are tabulated in units
/// of `alpha_ij` times the frequency unit.
pub fn execute(cfg: &RunConfig, cache: &mut ReferenceCache) -> Result<RunOutput, RunFailure> {
    cfg.validate()?;
    let scene = cfg.scene()?;
    let freqs = cfg.frequencies()?;
    let window = cfg.kk_window(&freqs)?;
    let mut runs = Vec::new();

    let da = *scene.dipole(DipoleLabel::A).expect("validated");
    let db = *scene.dipole(DipoleLabel::B).expect("validated");
    let ref_a = reference(cfg, cache, da.orientation, &freqs, &mut runs)?;
    let ref_b = if db.orientation == da.orientation {
        ref_a.clone()
    } else {
        reference(cfg, cache, db.orientation, &freqs, &mut runs)?
    };

    let only_a = scene.with_only(DipoleLabel::A).map_err(CliError::stage("A"))?;
    let only_b = scene.with_only(DipoleLabel::B).map_err(CliError::stage("B"))?;
    let mut spectra = BTreeMap::new();
    spectra.insert("P0_A".to_string(), ref_a.clone());
    spectra.insert("P0_B".to_string(), ref_b.clone());
    let records = match simulate_any(cfg, &[&only_a, &only_b, &scene], &freqs, cfg.stop()) {
        Ok(r) => r,
        Err(coopfdtd::Error::Timeout {
            steps,
            decay_ratio,
            partial,
        }) => {
            let stage = match partial.labels.as_slice() {
                [DipoleLabel::A] => "A",
                [DipoleLabel::B] => "B",
                _ => "AB",
            };
            if let Ok(p) = radiometry::total_power(&partial) {
                spectra.insert(format!("P_{stage}_partial"), p);
            }
            runs.push(RunRecord::from(stage, &partial, false));
            return Err(RunFailure {
                error: CliError::stage(stage)(coopfdtd::Error::Timeout {
                    steps,
                    decay_ratio,
                    partial,
                }),
                runs,
                spectra,
            });
        }
        Err(e) => {
            return Err(RunFailure {
                error: CliError::stage("A/B/AB")(e),
                runs,
                spectra,
            })
        }
    };
    for (stage, rec) in ["A", "B", "AB"].iter().zip(&records) {
        runs.push(RunRecord::from(stage, rec, false));
    }
    let truncated = records.iter().any(|r| r.metadata.truncated);

    let post = |stage: &'static str| CliError::stage(stage);
    let mut go = || -> CliResult<(SpectrumTable, Option<FitOutcome>)> {
        let p_a = radiometry::emission_power(&records[0], DipoleLabel::A).map_err(post("radiometry"))?;
        let p_b = radiometry::emission_power(&records[1], DipoleLabel::B).map_err(post("radiometry"))?;
        let p_ab = radiometry::total_power(&records[2]).map_err(post("radiometry"))?;
        spectra.insert("P_A".into(), p_a.clone());
        spectra.insert("P_B".into(), p_b.clone());
        spectra.insert("P_AB".into(), p_ab.clone());
        let p_co = radiometry::cooperative_power(&p_ab, &p_a, &p_b).map_err(post("radiometry"))?;
        let p0 = mean_reference(&ref_a, &ref_b);
        let eta = radiometry::eta(&p_co, &p0).map_err(post("radiometry"))?;
        let unit = AtomSpec::unit(cfg.source.center_frequency);
        let g_ab = radiometry::gamma_ij(&eta, (&unit, &unit));
        let g_aa = radiometry::gamma_local(&p_a, &ref_a, &unit, DipoleLabel::A).map_err(post("radiometry"))?;
        let g_bb = radiometry::gamma_local(&p_b, &ref_b, &unit, DipoleLabel::B).map_err(post("radiometry"))?;
        let delta = kramers_kronig(&g_ab, &window).map_err(post("hilbert"))?;
        let d_grid = delta_on_grid(&delta, &freqs, &window);

        let rows = (0..freqs.len())
            .map(|n| {
                [
                    freqs[n],
                    p_a.power[n],
                    p_b.power[n],
                    p_ab.power[n],
                    p_co.power[n],
                    eta.eta[n],
                    g_ab.gamma[n],
                    g_aa.gamma[n],
                    g_bb.gamma[n],
                    d_grid[n],
                ]
            })
            .collect();
        let resonance = cfg.resonance_window().map(|w| {
            match fit_resonance(&as_power(&g_aa, p_a.decay_ratio), &w) {
                // a capped run has not decayed whatever its ratio says
                Ok(fit) => FitOutcome::Fit(ResonanceFit {
                    q_lower_bound: fit.q_lower_bound || truncated,
                    ..fit
                }),
                Err(e) => FitOutcome::Failed { error: e.to_string() },
            }
        });
        let steps = records[2].metadata.steps;
        let metadata = vec![
            ("version".to_string(), VERSION.to_string()),
            ("config_sha256".to_string(), cfg.hash()),
            ("scene_sha256".to_string(), scene.content_hash()),
            (
                "units".to_string(),
                "omega in 2pi c/L; P per unit drive; gamma and delta in alpha_ij 2pi c/L".to_string(),
            ),
            (
                "kk_window".to_string(),
                format!(
                    "{:e} {:e} margin {:e} baseline {}",
                    window.lo, window.hi, window.margin, window.subtract_baseline
                ),
            ),
            ("steps".to_string(), steps.to_string()),
            ("decay_ratio".to_string(), format!("{:e}", records[0].metadata.decay_ratio)),
            ("truncated".to_string(), truncated.to_string()),
        ];
        Ok((SpectrumTable::new(metadata, rows)?, resonance))
    };
    match go() {
        Ok((table, resonance)) => Ok(RunOutput {
            table,
            runs,
            resonance,
            truncated,
        }),
        Err(error) => Err(RunFailure { error, runs, spectra }),
    }
}
