//! TOML run configuration.
//!
//! Every section rejects unknown keys. A configuration is checked against
//! the library preconditions by [`RunConfig::validate`] before anything runs.

use std::path::{Path, PathBuf};

use coopfdtd::dynamics::Branch;
use coopfdtd::fdtd::{frequency_grid, GridParams, PmlProfile, SourceWaveform, StopCriterion};
use coopfdtd::hilbert::BandWindow;
use coopfdtd::radiometry::AtomSpec;
use coopfdtd::scene::{self, DipoleLabel, DipoleSpec, LatticeSpec, Scene, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const DEFAULT_FREQUENCY_COUNT: usize = 401;

/// Envelope level bounding the default frequency grid, relative to the peak.
/// Sits above the conditioning floor so sampled spectra clear it.
pub const DEFAULT_BAND_LEVEL: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub source: SourceWaveform,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub atoms: AtomsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Vacuum,
    Planar,
    Phc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub kind: SceneKind,
    /// Vacuum box size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plate_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lateral_extent: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
    pub dipoles: Vec<DipoleEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleEntry {
    pub label: DipoleLabel,
    pub position: Vec3,
    pub orientation: Vec3,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub resolution: usize,
    pub courant_factor: f64,
    pub pml_cells: usize,
    pub pml: PmlProfile,
    pub subpixel_samples: usize,
    pub precision: Precision,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridParams::default();
        GridSection {
            resolution: g.resolution,
            courant_factor: g.courant_factor,
            pml_cells: g.pml_cells,
            pml: g.pml,
            subpixel_samples: g.subpixel_samples,
            precision: Precision::F64,
        }
    }
}

impl GridSection {
    pub fn params(&self) -> GridParams {
        GridParams {
            resolution: self.resolution,
            courant_factor: self.courant_factor,
            pml_cells: self.pml_cells,
            pml: self.pml,
            subpixel_samples: self.subpixel_samples,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopSection {
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    /// Keep runs that hit the step cap, flagged as truncated.
    pub accept_truncated: bool,
}

impl Default for StopSection {
    fn default() -> Self {
        StopSection {
            threshold: 1e-5,
            max_steps: None,
            accept_truncated: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingMode {
    /// Frequency-dependent W from the tabulated spectra.
    #[default]
    Spectral,
    /// Constant W taken at the atomic frequencies.
    Markov,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency_max: Option<f64>,
    pub frequency_count: usize,
    /// Defaults to the whole frequency grid with a straight baseline removed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kk_window: Option<BandWindow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resonance_window: Option<Interval>,
    pub stop: StopSection,
    pub coupling: CouplingMode,
    pub branch: Branch,
    /// End of the time grid for amplitude traces; defaults to 10 / Γ_AA.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    pub t_count: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            frequency_min: None,
            frequency_max: None,
            frequency_count: DEFAULT_FREQUENCY_COUNT,
            kk_window: None,
            resonance_window: None,
            stop: StopSection::default(),
            coupling: CouplingMode::Spectral,
            branch: Branch::Retarded,
            t_max: None,
            t_count: 201,
        }
    }
}

/// Atomic parameters. Frequencies default to the source centre and dipole
/// magnitudes to the value giving `alpha = 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtomsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_b: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dot path to a numeric leaf, array elements by index,
    /// e.g. `scene.dipoles.1.position.1`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring the output section.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            output: OutputSection::default(),
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy with the numeric leaf at `path` replaced by `value`.
    pub fn with_override(&self, path: &str, value: f64) -> CliResult<Self> {
        let mut tree = toml::Value::try_from(self).map_err(|e| CliError::config(e.to_string()))?;
        let mut node = &mut tree;
        for key in path.split('.') {
            node = match node {
                toml::Value::Table(t) => t.get_mut(key),
                toml::Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| CliError::config(format!("sweep parameter {path}: no key {key:?}")))?;
        }
        *node = match node {
            toml::Value::Float(_) => toml::Value::Float(value),
            toml::Value::Integer(_) if value.fract() == 0.0 && value.abs() < 2f64.powi(53) => {
                toml::Value::Integer(value as i64)
            }
            toml::Value::Integer(_) => {
                return Err(CliError::config(format!("sweep parameter {path} is an integer, got {value}")))
            }
            _ => return Err(CliError::config(format!("sweep parameter {path} is not a scalar number"))),
        };
        tree.try_into().map_err(|e: toml::de::Error| CliError::config(e.to_string()))
    }

    /// Builds the scene with both dipoles placed.
    pub fn scene(&self) -> CliResult<Scene> {
        let s = &self.scene;
        let unexpected = |key: &str| CliError::config(format!("scene key {key} does not apply to kind {:?}", s.kind));
        let base = match s.kind {
            SceneKind::Vacuum => {
                for (set, key) in [
                    (s.plate_gap.is_some(), "plate_gap"),
                    (s.lateral_extent.is_some(), "lateral_extent"),
                    (s.lattice.is_some(), "lattice"),
                ] {
                    if set {
                        return Err(unexpected(key));
                    }
                }
                let extent = s.extent.ok_or_else(|| CliError::config("vacuum scene needs extent"))?;
                scene::build_vacuum(extent)
            }
            SceneKind::Planar => {
                if s.extent.is_some() {
                    return Err(unexpected("extent"));
                }
                if s.lattice.is_some() {
                    return Err(unexpected("lattice"));
                }
                let gap = s.plate_gap.ok_or_else(|| CliError::config("planar scene needs plate_gap"))?;
                let lateral = s
                    .lateral_extent
                    .ok_or_else(|| CliError::config("planar scene needs lateral_extent"))?;
                scene::build_planar_cavity(gap, lateral)
            }
            SceneKind::Phc => {
                for (set, key) in [
                    (s.extent.is_some(), "extent"),
                    (s.plate_gap.is_some(), "plate_gap"),
                    (s.lateral_extent.is_some(), "lateral_extent"),
                ] {
                    if set {
                        return Err(unexpected(key));
                    }
                }
                scene::build_phc_cavity(s.lattice.unwrap_or_default())
            }
        }
        .map_err(CliError::stage("scene"))?;
        if s.dipoles.len() != 2 {
            return Err(CliError::config(format!(
                "scene needs dipoles A and B, got {} entries",
                s.dipoles.len()
            )));
        }
        let specs = s
            .dipoles
            .iter()
            .map(|d| DipoleSpec::new(d.label, d.position, d.orientation))
            .collect::<coopfdtd::Result<Vec<_>>>()
            .map_err(CliError::stage("scene"))?;
        scene::place_dipoles(&base, &specs).map_err(CliError::stage("scene"))
    }

    /// Band where the source envelope stays above [`DEFAULT_BAND_LEVEL`].
    pub fn default_band(&self) -> (f64, f64) {
        let f0 = self.source.center_frequency;
        let half = self.source.spectral_sigma() * (2.0 * (1.0 / DEFAULT_BAND_LEVEL).ln()).sqrt();
        ((f0 - half).max(0.05 * f0), f0 + half)
    }

    pub fn frequencies(&self) -> CliResult<Vec<f64>> {
        let (lo, hi) = self.source.valid_band();
        let (d_lo, d_hi) = self.default_band();
        let a = &self.analysis;
        let (f_lo, f_hi) = (a.frequency_min.unwrap_or(d_lo), a.frequency_max.unwrap_or(d_hi));
        if f_lo < lo || f_hi > hi {
            return Err(CliError::config(format!(
                "frequency grid [{f_lo}, {f_hi}] leaves the usable source band [{lo:.6}, {hi:.6}]"
            )));
        }
        if f_lo <= 0.0 {
            return Err(CliError::config("frequency grid must start above zero"));
        }
        frequency_grid(f_lo, f_hi, a.frequency_count).map_err(CliError::stage("validate"))
    }

    pub fn kk_window(&self, frequencies: &[f64]) -> CliResult<BandWindow> {
        let (lo, hi) = (frequencies[0], frequencies[frequencies.len() - 1]);
        let window = self.analysis.kk_window.unwrap_or(BandWindow {
            lo,
            hi,
            margin: 0.0,
            subtract_baseline: true,
        });
        window.validate().map_err(CliError::stage("validate"))?;
        if window.lo < lo || window.hi > hi {
            return Err(CliError::config(format!(
                "kk_window [{}, {}] exceeds the frequency grid [{lo}, {hi}]",
                window.lo, window.hi
            )));
        }
        Ok(window)
    }

    pub fn resonance_window(&self) -> Option<BandWindow> {
        self.analysis.resonance_window.map(|w| BandWindow::new(w.lo, w.hi))
    }

    pub fn stop(&self) -> StopCriterion {
        StopCriterion::Decay {
            threshold: self.analysis.stop.threshold,
            max_steps: self.analysis.stop.max_steps,
            min_steps: 0,
        }
    }

    pub fn atoms(&self) -> CliResult<(AtomSpec, AtomSpec)> {
        let f0 = self.source.center_frequency;
        let make = |omega: Option<f64>, u: Option<f64>| {
            let omega = omega.unwrap_or(f0);
            match u {
                Some(u) => AtomSpec::new(omega, u),
                None if omega > 0.0 && omega.is_finite() => Ok(AtomSpec::unit(omega)),
                None => AtomSpec::new(omega, 1.0),
            }
        };
        let a = &self.atoms;
        Ok((
            make(a.omega_a, a.u_a).map_err(CliError::stage("validate"))?,
            make(a.omega_b, a.u_b).map_err(CliError::stage("validate"))?,
        ))
    }

    /// Checks every precondition that can be checked without running.
    pub fn validate(&self) -> CliResult<()> {
        self.source.validate().map_err(CliError::stage("validate"))?;
        self.grid.params().validate().map_err(CliError::stage("validate"))?;
        self.scene()?;
        let freqs = self.frequencies()?;
        self.kk_window(&freqs)?;
        if let Some(w) = self.resonance_window() {
            w.validate().map_err(CliError::stage("validate"))?;
        }
        let stop = &self.analysis.stop;
        if !(stop.threshold > 0.0 && stop.threshold < 1.0) {
            return Err(CliError::config("stop threshold must lie in (0, 1)"));
        }
        self.atoms()?;
        if let Some(t) = self.analysis.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::config("t_max must be positive"));
            }
        }
        if self.analysis.t_count < 2 {
            return Err(CliError::config("t_count must be at least 2"));
        }
        if self.output.formats.is_empty() {
            return Err(CliError::config("output formats must not be empty"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(CliError::stage("sweep")(coopfdtd::Error::InvalidArgument(
                    "sweep values list is empty".into(),
                )));
            }
            if sweep.values.iter().any(|v| !v.is_finite()) {
                return Err(CliError::config("sweep values must be finite"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const VACUUM: &str = r#"
[scene]
kind = "vacuum"
extent = [1.5, 1.0, 1.0]
[[scene.dipoles]]
label = "A"
position = [-0.25, 0.0, 0.0]
orientation = [0.0, 0.0, 1.0]
[[scene.dipoles]]
label = "B"
position = [0.25, 0.0, 0.0]
orientation = [0.0, 0.0, 1.0]

[sweep]
parameter = "scene.dipoles.1.position.0"
values = [0.3, 0.4]
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = RunConfig::parse(VACUUM).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.grid.resolution, 20);
        assert_eq!(cfg.frequencies().unwrap().len(), DEFAULT_FREQUENCY_COUNT);
        let scene = cfg.scene().unwrap();
        assert_eq!(scene.dipoles.len(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = VACUUM.replace("kind = \"vacuum\"", "kind = \"vacuum\"\ncolour = 3");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
        let text = format!("{VACUUM}\n[grid]\nresolutoin = 20\n");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn kind_specific_keys_checked() {
        let text = VACUUM.replace("extent = [1.5, 1.0, 1.0]", "extent = [1.5, 1.0, 1.0]\nplate_gap = 0.7");
        let cfg = RunConfig::parse(&text).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn override_sets_leaf() {
        let cfg = RunConfig::parse(VACUUM).unwrap();
        let moved = cfg.with_override("scene.dipoles.1.position.0", 0.4).unwrap();
        assert_eq!(moved.scene.dipoles[1].position[0], 0.4);
        assert_eq!(moved.scene.dipoles[0], cfg.scene.dipoles[0]);
        let res = cfg.with_override("grid.resolution", 30.0).unwrap();
        assert_eq!(res.grid.resolution, 30);
        assert!(cfg.with_override("grid.resolution", 30.5).is_err());
        assert!(cfg.with_override("scene.dipoles.7.position.0", 1.0).is_err());
        assert!(cfg.with_override("scene.kind", 1.0).is_err());
        assert_ne!(moved.hash(), cfg.hash());
    }

    #[test]
    fn hash_is_stable() {
        let a = RunConfig::parse(VACUUM).unwrap();
        let b = RunConfig::parse(&VACUUM.replace("extent", "\n\nextent")).unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn frequency_grid_outside_source_band_rejected() {
        let text = format!("{VACUUM}\n[analysis]\nfrequency_min = 0.01\n");
        let cfg = RunConfig::parse(&text).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn empty_sweep_is_invalid_argument() {
        let text = VACUUM.replace("values = [0.3, 0.4]", "values = []");
        let cfg = RunConfig::parse(&text).unwrap();
        match cfg.validate() {
            Err(CliError::Config(msg)) => assert!(msg.contains("invalid argument"), "{msg}"),
            other => panic!("expected invalid argument, got {other:?}"),
        }
    }

    #[test]
    fn readme_example_is_valid() {
        let readme = include_str!("../../../README.md");
        let start = readme.find("```toml\n").expect("toml block") + 8;
        let end = start + readme[start..].find("```").unwrap();
        let cfg = RunConfig::parse(&readme[start..end]).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.sweep.unwrap().values.len(), 3);
    }
}
