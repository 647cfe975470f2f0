//! Yee-lattice Maxwell solver with CPML boundaries, soft dipole sources and
//! running-DFT monitors at the dipole sites.

mod dft;
mod grid;
mod kernel;
mod pml;
mod source;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use grid::{discretize, ComponentTap, GridParams, SimulationState, SnappedDipole, MIN_CELLS_FROM_ABSORBER, MIN_CELLS_PER_FEATURE};
pub use pml::PmlProfile;
pub use source::{SourceWaveform, CONDITIONING_FLOOR};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::scene::{DipoleLabel, Scene};

/// Full-array finiteness is checked at this step interval.
const FULL_CHECK_INTERVAL: usize = 64;

/// Multiple of the pulse duration used as the default step cap.
pub const DEFAULT_MAX_DURATIONS: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    FixedSteps(usize),
    /// Stop once the squared projected dipole fields have stayed below
    /// `threshold` of their peak for one period of the centre frequency.
    /// `max_steps = None` caps the run at 20 pulse durations; the run never
    /// stops before `min_steps`.
    Decay {
        threshold: f64,
        max_steps: Option<usize>,
        #[serde(default)]
        min_steps: usize,
    },
}

impl Default for StopCriterion {
    fn default() -> Self {
        StopCriterion::Decay {
            threshold: 1e-5,
            max_steps: None,
            min_steps: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub scene_hash: String,
    pub grid: GridParams,
    pub waveform: SourceWaveform,
    pub steps: usize,
    pub dt: f64,
    pub dx: f64,
    /// Window maximum of the monitored signal over its global peak at the end.
    pub decay_ratio: f64,
    /// True when the record comes from a run that hit its step cap.
    pub truncated: bool,
    pub snap_distances: Vec<f64>,
}

/// Spectra recorded at the dipole sites during one run.
#[derive(Clone, Debug, PartialEq)]
pub struct DftRecord {
    /// Ordinary frequencies in units of `c / reference_length`.
    pub frequencies: Vec<f64>,
    pub labels: Vec<DipoleLabel>,
    /// Orientation-projected E per dipole (same order as `labels`).
    pub fields: Vec<Vec<Complex64>>,
    /// Spectrum of the dipole moment rate `s(t)`.
    pub source_spectrum: Vec<Complex64>,
    pub metadata: RunMetadata,
}

impl DftRecord {
    pub fn field(&self, label: DipoleLabel) -> Option<&[Complex64]> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .map(|i| self.fields[i].as_slice())
    }
}

/// `count` evenly spaced frequencies covering `[lo, hi]`.
pub fn frequency_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!(
            "frequency grid needs lo < hi and at least two points (got [{lo}, {hi}] x {count})"
        )));
    }
    let df = (hi - lo) / (count - 1) as f64;
    Ok((0..count).map(|n| lo + n as f64 * df).collect())
}

/// Advances the fields by one time step (H then E, each with its CPML terms).
pub fn step<T: Real>(state: &mut SimulationState<T>) -> Result<()> {
    kernel::update_h(state);
    kernel::update_e(state);
    state.step_index += 1;
    let monitors_ok = state
        .dipoles
        .iter()
        .all(|d| d.taps.iter().all(|t| state.e[t.axis][t.index].is_finite()));
    if !monitors_ok || (state.step_index % FULL_CHECK_INTERVAL == 0 && !state.all_finite()) {
        return Err(Error::NumericalInstability {
            step: state.step_index,
        });
    }
    Ok(())
}

/// Adds the current of every snapped dipole at time `t`, all driven in phase.
pub fn inject_dipole_current<T: Real>(state: &mut SimulationState<T>, waveform: &SourceWaveform, t: f64) {
    let s = waveform.value(t);
    if s == 0.0 {
        return;
    }
    let dipoles = std::mem::take(&mut state.dipoles);
    for d in &dipoles {
        kernel::inject(state, d, s);
    }
    state.dipoles = dipoles;
}

/// Adds the current of one dipole only, leaving the others passive.
pub fn inject_dipole<T: Real>(
    state: &mut SimulationState<T>,
    label: DipoleLabel,
    waveform: &SourceWaveform,
    t: f64,
) -> Result<()> {
    let d = state
        .dipole_index(label)
        .ok_or_else(|| Error::invalid(format!("state has no dipole {label}")))?;
    let s = waveform.value(t);
    if s != 0.0 {
        let dipole = state.dipoles[d].clone();
        kernel::inject(state, &dipole, s);
    }
    Ok(())
}

/// Runs one simulation and returns the spectra at the dipole sites.
pub fn run<T: Real>(
    scene: &Scene,
    grid: &GridParams,
    waveform: &SourceWaveform,
    frequencies: &[f64],
    stop: StopCriterion,
) -> Result<DftRecord> {
    waveform.validate()?;
    if scene.dipoles.is_empty() {
        return Err(Error::invalid("scene has no dipoles to drive"));
    }
    if frequencies.windows(2).any(|w| !(w[0] < w[1])) || frequencies.is_empty() {
        return Err(Error::invalid("frequency grid must be non-empty and strictly increasing"));
    }
    let (lo, hi) = waveform.valid_band();
    if let Some(&f) = frequencies.iter().find(|&&f| f < lo || f > hi) {
        return Err(Error::OutOfBand { frequency: f, lo, hi });
    }
    let mut state = discretize::<T>(scene, grid)?;
    let dt = state.dt;
    let drive_steps = (waveform.duration() / dt).ceil() as usize + 1;
    let (max_steps, min_steps, threshold) = match stop {
        StopCriterion::FixedSteps(n) => (n, n, None),
        StopCriterion::Decay {
            threshold,
            max_steps,
            min_steps,
        } => {
            if !(threshold > 0.0 && threshold < 1.0) {
                return Err(Error::invalid(format!("decay threshold {threshold} outside (0, 1)")));
            }
            let cap = max_steps.unwrap_or((DEFAULT_MAX_DURATIONS * waveform.duration() / dt).ceil() as usize);
            (cap.max(min_steps), min_steps, Some(threshold))
        }
    };
    let window = ((1.0 / waveform.center_frequency) / dt).ceil() as usize + 1;

    let n_dip = state.dipoles.len();
    let mut dft = dft::RunningDft::new(frequencies, n_dip + 1, dt);
    let mut peak: f64 = 0.0;
    let mut recent: std::collections::VecDeque<f64> = std::collections::VecDeque::with_capacity(window + 1);
    let mut decay_ratio = 1.0;
    let mut converged = threshold.is_none();

    while state.step_index < max_steps {
        let n = state.step_index;
        let t_src = (n as f64 + 0.5) * dt;
        step(&mut state)?;
        inject_dipole_current(&mut state, waveform, t_src);
        dft.add(n_dip, t_src, waveform.value(t_src));
        let t = state.time();
        let mut signal = 0.0;
        for d in 0..n_dip {
            let v = state.projected_field(d);
            if !v.is_finite() {
                return Err(Error::NumericalInstability { step: state.step_index });
            }
            dft.add(d, t, v);
            signal += v * v;
        }
        peak = peak.max(signal);
        recent.push_back(signal);
        if recent.len() > window {
            recent.pop_front();
        }
        if let Some(th) = threshold {
            if state.step_index > drive_steps.max(min_steps) && recent.len() == window {
                let wmax = recent.iter().cloned().fold(0.0, f64::max);
                decay_ratio = if peak > 0.0 { wmax / peak } else { 0.0 };
                if decay_ratio < th {
                    converged = true;
                    break;
                }
            }
        }
    }
    if threshold.is_none() && peak > 0.0 {
        let wmax = recent.iter().cloned().fold(0.0, f64::max);
        decay_ratio = wmax / peak;
    } else if peak == 0.0 {
        decay_ratio = 0.0;
        converged = true;
    }

    let source_spectrum = dft.sums.pop().expect("source accumulator");
    let record = DftRecord {
        frequencies: frequencies.to_vec(),
        labels: state.dipoles.iter().map(|d| d.label).collect(),
        fields: dft.sums,
        source_spectrum,
        metadata: RunMetadata {
            scene_hash: scene.content_hash(),
            grid: *grid,
            waveform: *waveform,
            steps: state.step_index,
            dt,
            dx: state.dx,
            decay_ratio,
            truncated: !converged,
            snap_distances: state.dipoles.iter().map(|d| d.snap_distance).collect(),
        },
    };
    if !converged {
        return Err(Error::Timeout {
            steps: state.step_index,
            decay_ratio,
            partial: Box::new(record),
        });
    }
    Ok(record)
}

/// Runs several scenes on the same grid for one common number of steps.
///
/// Spectra that are later subtracted from each other must share their time
/// window; otherwise slowly ringing features leave unmatched truncation
/// residue. Each scene runs until it decays and is no shorter than the
/// previous ones; scenes that stopped early are then rerun to the common
/// length. With `accept_truncated`, a run that hits its cap makes every
/// record end at the cap, flagged as truncated; otherwise the timeout is
/// returned.
pub fn run_common_length<T: Real>(
    scenes: &[&Scene],
    grid: &GridParams,
    waveform: &SourceWaveform,
    frequencies: &[f64],
    stop: StopCriterion,
    accept_truncated: bool,
) -> Result<Vec<DftRecord>> {
    let (threshold, max_steps) = match stop {
        StopCriterion::FixedSteps(_) => {
            return scenes
                .iter()
                .map(|s| run::<T>(s, grid, waveform, frequencies, stop))
                .collect();
        }
        StopCriterion::Decay {
            threshold, max_steps, ..
        } => (threshold, max_steps),
    };
    let mut records: Vec<DftRecord> = Vec::with_capacity(scenes.len());
    let mut longest = 0;
    let mut capped = false;
    for scene in scenes {
        let rec = if capped {
            run::<T>(scene, grid, waveform, frequencies, StopCriterion::FixedSteps(longest))?
        } else {
            let criterion = StopCriterion::Decay {
                threshold,
                max_steps,
                min_steps: longest,
            };
            match run::<T>(scene, grid, waveform, frequencies, criterion) {
                Ok(r) => r,
                Err(Error::Timeout { partial, .. }) if accept_truncated => {
                    capped = true;
                    *partial
                }
                Err(e) => return Err(e),
            }
        };
        longest = longest.max(rec.metadata.steps);
        records.push(rec);
    }
    for (scene, rec) in scenes.iter().zip(records.iter_mut()) {
        if rec.metadata.steps < longest {
            *rec = run::<T>(scene, grid, waveform, frequencies, StopCriterion::FixedSteps(longest))?;
        }
        if capped {
            rec.metadata.truncated = true;
        }
    }
    Ok(records)
}

/// Unwraps a timeout into its truncated record; other errors pass through.
pub fn accept_truncated(result: Result<DftRecord>) -> Result<DftRecord> {
    match result {
        Err(Error::Timeout { partial, .. }) => Ok(*partial),
        other => other,
    }
}
