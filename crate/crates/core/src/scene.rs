//! Immutable simulation scenes: geometry, materials, boundaries and dipoles.
//!
//! Lengths are expressed in units of the scene's reference length (the
//! lattice constant for the slab cavity, the vacuum wavelength otherwise),
//! with `c = 1`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Absorbing,
    PerfectConductor,
}

/// Boundary kind per face, indexed `[axis][0 = low, 1 = high]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Boundaries(pub [[BoundaryKind; 2]; 3]);

impl Boundaries {
    pub fn uniform(kind: BoundaryKind) -> Self {
        Boundaries([[kind; 2]; 3])
    }

    pub fn face(&self, axis: usize, high: bool) -> BoundaryKind {
        self.0[axis][usize::from(high)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DipoleLabel {
    A,
    B,
}

impl std::fmt::Display for DipoleLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DipoleLabel::A => f.write_str("A"),
            DipoleLabel::B => f.write_str("B"),
        }
    }
}

/// A classical point dipole: position, unit orientation and label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleSpec {
    pub label: DipoleLabel,
    pub position: Vec3,
    pub orientation: Vec3,
}

impl DipoleSpec {
    /// Validates that `orientation` is a unit vector to within 1e-12.
    pub fn new(label: DipoleLabel, position: Vec3, orientation: Vec3) -> Result<Self> {
        let norm = orientation.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm - 1.0).abs().le(&1e-12) {
            return Err(Error::invalid(format!(
                "dipole {label} orientation has norm {norm}, expected 1"
            )));
        }
        if position.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("dipole {label} position is not finite")));
        }
        Ok(DipoleSpec {
            label,
            position,
            orientation,
        })
    }

    /// Dipole oriented along a coordinate axis (0 = x, 1 = y, 2 = z).
    pub fn along_axis(label: DipoleLabel, position: Vec3, axis: usize) -> Self {
        let mut orientation = [0.0; 3];
        orientation[axis] = 1.0;
        DipoleSpec {
            label,
            position,
            orientation,
        }
    }
}

/// Triangular-lattice air-hole slab with a filled central hole.
///
/// Rows of holes run along x with pitch `a`; successive rows are offset by
/// `a/2` in x and `a*sqrt(3)/2` in y. The central hole is filled with
/// `defect_index` material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSpec {
    pub lattice_constant: f64,
    pub hole_radius: f64,
    pub slab_thickness: f64,
    pub slab_index: f64,
    pub defect_index: f64,
    /// Rows of holes on each side of the defect, in x and in y.
    pub periods: usize,
    /// Air between the slab edge and the absorbing layer, on every face.
    pub air_margin: f64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec {
            lattice_constant: 1.0,
            hole_radius: 0.3,
            slab_thickness: 0.6,
            slab_index: 3.4,
            defect_index: 2.4,
            periods: 6,
            air_margin: 1.0,
        }
    }
}

impl LatticeSpec {
    pub fn validate(&self) -> Result<()> {
        let a = self.lattice_constant;
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::invalid("lattice constant must be positive"));
        }
        if !(self.hole_radius > 0.0 && self.hole_radius < 0.5 * a) {
            return Err(Error::invalid(format!(
                "hole radius {} must lie in (0, a/2)",
                self.hole_radius
            )));
        }
        if !(self.slab_thickness > 0.0) {
            return Err(Error::invalid("slab thickness must be positive"));
        }
        if !(self.slab_index >= 1.0 && self.defect_index >= 1.0) {
            return Err(Error::invalid("refractive indices must be >= 1"));
        }
        if self.periods < 3 {
            return Err(Error::invalid(format!(
                "periods = {} < 3 leaves the cavity unconfined",
                self.periods
            )));
        }
        if !(self.air_margin >= 0.0) {
            return Err(Error::invalid("air margin must be non-negative"));
        }
        Ok(())
    }

    fn row_pitch(&self) -> f64 {
        self.lattice_constant * 3f64.sqrt() / 2.0
    }

    /// Half extents of the patterned slab in x and y.
    fn slab_half_extent(&self) -> (f64, f64) {
        let a = self.lattice_constant;
        let p = self.periods as f64;
        (p * a + 0.5 * a, p * self.row_pitch() + 0.5 * a)
    }

    fn permittivity(&self, p: Vec3) -> f64 {
        let [x, y, z] = p;
        let (hx, hy) = self.slab_half_extent();
        if z.abs() > 0.5 * self.slab_thickness || x.abs() > hx || y.abs() > hy {
            return 1.0;
        }
        let a = self.lattice_constant;
        let pitch = self.row_pitch();
        let r2 = self.hole_radius * self.hole_radius;
        let limit = self.periods as i64;
        let row0 = (y / pitch).round() as i64;
        for row in row0 - 1..=row0 + 1 {
            if row.abs() > limit {
                continue;
            }
            let shift = 0.5 * row as f64;
            let yc = row as f64 * pitch;
            let col0 = (x / a - shift).round() as i64;
            for col in col0 - 1..=col0 + 1 {
                let xc = (col as f64 + shift) * a;
                if xc.abs() > limit as f64 * a + 1e-9 * a {
                    continue;
                }
                let d2 = (x - xc) * (x - xc) + (y - yc) * (y - yc);
                if d2 < r2 {
                    return if row == 0 && col == 0 {
                        self.defect_index * self.defect_index
                    } else {
                        1.0
                    };
                }
            }
        }
        self.slab_index * self.slab_index
    }
}

/// Material layout of a scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Geometry {
    Uniform { permittivity: f64 },
    PhcSlab(LatticeSpec),
}

/// Smallest geometric feature a discretization must resolve.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub name: &'static str,
    pub size: f64,
}

/// Immutable description of one simulation setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// Lower corner of the interior (non-absorbing) box.
    pub min: Vec3,
    /// Upper corner of the interior box.
    pub max: Vec3,
    pub geometry: Geometry,
    pub boundaries: Boundaries,
    /// Sorted by label.
    pub dipoles: Vec<DipoleSpec>,
    pub reference_length: f64,
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| *v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {values:?}")))
    }
}

/// Uniform vacuum box of the given extent centred on the origin, absorbing on all faces.
pub fn build_vacuum(extent: Vec3) -> Result<Scene> {
    check_positive("vacuum extent", &extent)?;
    Ok(Scene {
        min: extent.map(|e| -0.5 * e),
        max: extent.map(|e| 0.5 * e),
        geometry: Geometry::Uniform { permittivity: 1.0 },
        boundaries: Boundaries::uniform(BoundaryKind::Absorbing),
        dipoles: Vec::new(),
        reference_length: 1.0,
    })
}

/// Empty parallel-plate cavity: conductors at `z = 0` and `z = plate_gap`,
/// absorbing lateral faces, laterally centred on the origin.
pub fn build_planar_cavity(plate_gap: f64, lateral_extent: [f64; 2]) -> Result<Scene> {
    check_positive("plate gap", &[plate_gap])?;
    check_positive("lateral extent", &lateral_extent)?;
    let mut boundaries = Boundaries::uniform(BoundaryKind::Absorbing);
    boundaries.0[2] = [BoundaryKind::PerfectConductor; 2];
    Ok(Scene {
        min: [-0.5 * lateral_extent[0], -0.5 * lateral_extent[1], 0.0],
        max: [0.5 * lateral_extent[0], 0.5 * lateral_extent[1], plate_gap],
        geometry: Geometry::Uniform { permittivity: 1.0 },
        boundaries,
        dipoles: Vec::new(),
        reference_length: 1.0,
    })
}

/// Photonic-crystal slab nanocavity centred on the defect, absorbing on all faces.
pub fn build_phc_cavity(lattice: LatticeSpec) -> Result<Scene> {
    lattice.validate()?;
    let (hx, hy) = lattice.slab_half_extent();
    let m = lattice.air_margin;
    let hz = 0.5 * lattice.slab_thickness;
    Ok(Scene {
        min: [-(hx + m), -(hy + m), -(hz + m)],
        max: [hx + m, hy + m, hz + m],
        geometry: Geometry::PhcSlab(lattice),
        boundaries: Boundaries::uniform(BoundaryKind::Absorbing),
        dipoles: Vec::new(),
        reference_length: lattice.lattice_constant,
    })
}

/// Returns a copy of `scene` carrying exactly the given dipoles.
pub fn place_dipoles(scene: &Scene, specs: &[DipoleSpec]) -> Result<Scene> {
    if specs.is_empty() || specs.len() > 2 {
        return Err(Error::invalid(format!(
            "expected one or two dipoles, got {}",
            specs.len()
        )));
    }
    if specs.len() == 2 && specs[0].label == specs[1].label {
        return Err(Error::invalid(format!(
            "duplicate dipole label {}",
            specs[0].label
        )));
    }
    for spec in specs {
        // re-validate: fields are public
        DipoleSpec::new(spec.label, spec.position, spec.orientation)?;
        if !scene.contains_strictly(spec.position) {
            return Err(Error::invalid(format!(
                "dipole {} at {:?} is outside the interior box {:?}..{:?}",
                spec.label, spec.position, scene.min, scene.max
            )));
        }
    }
    let mut dipoles = specs.to_vec();
    dipoles.sort_by_key(|d| d.label);
    Ok(Scene {
        dipoles,
        ..scene.clone()
    })
}

impl Scene {
    pub fn extent(&self) -> Vec3 {
        [0, 1, 2].map(|a| self.max[a] - self.min[a])
    }

    pub fn contains_strictly(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] > self.min[a] && p[a] < self.max[a])
    }

    /// Relative permittivity at `p`. Points outside the box take the value
    /// at the nearest interior point, so materials extend into absorbers.
    pub fn permittivity(&self, p: Vec3) -> f64 {
        let q = [0, 1, 2].map(|a| p[a].clamp(self.min[a], self.max[a]));
        match &self.geometry {
            Geometry::Uniform { permittivity } => *permittivity,
            Geometry::PhcSlab(lattice) => lattice.permittivity(q),
        }
    }

    pub fn max_permittivity(&self) -> f64 {
        match &self.geometry {
            Geometry::Uniform { permittivity } => *permittivity,
            Geometry::PhcSlab(l) => (l.slab_index * l.slab_index).max(l.defect_index * l.defect_index),
        }
    }

    /// Geometric features that must be resolved by the grid.
    pub fn features(&self) -> Vec<Feature> {
        let mut out = Vec::new();
        if let Geometry::PhcSlab(l) = &self.geometry {
            out.push(Feature {
                name: "hole radius",
                size: l.hole_radius,
            });
            out.push(Feature {
                name: "slab thickness",
                size: l.slab_thickness,
            });
        }
        for axis in 0..3 {
            let conductors = self.boundaries.0[axis]
                .iter()
                .all(|k| *k == BoundaryKind::PerfectConductor);
            if conductors {
                out.push(Feature {
                    name: "plate gap",
                    size: self.max[axis] - self.min[axis],
                });
            }
        }
        out
    }

    pub fn dipole(&self, label: DipoleLabel) -> Option<&DipoleSpec> {
        self.dipoles.iter().find(|d| d.label == label)
    }

    /// Same scene keeping only the labelled dipole.
    pub fn with_only(&self, label: DipoleLabel) -> Result<Scene> {
        let d = self
            .dipole(label)
            .ok_or_else(|| Error::invalid(format!("scene has no dipole {label}")))?;
        place_dipoles(self, &[*d])
    }

    /// Stable content hash (hex SHA-256 of the canonical JSON form).
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scene serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
