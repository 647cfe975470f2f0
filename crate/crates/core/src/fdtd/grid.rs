//! Discretization of a [`Scene`] onto a staggered Yee lattice.
//!
//! Nodes sit at integer multiples of `dx` in scene coordinates, so the scene
//! origin is always a grid node. Component placement in a cell `(i, j, k)`:
//! `Ex (i+½, j, k)`, `Ey (i, j+½, k)`, `Ez (i, j, k+½)`,
//! `Hx (i, j+½, k+½)`, `Hy (i+½, j, k+½)`, `Hz (i+½, j+½, k)`.

use serde::{Deserialize, Serialize};

use super::pml::{PmlProfile, PmlSlab};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::scene::{BoundaryKind, DipoleLabel, Scene, Vec3};

/// Minimum number of cells across the smallest geometric feature.
pub const MIN_CELLS_PER_FEATURE: f64 = 3.0;

/// Minimum distance, in cells, between a dipole and an absorbing layer.
pub const MIN_CELLS_FROM_ABSORBER: i64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Cells per reference length.
    pub resolution: usize,
    /// Fraction of the 3D Courant limit, in (0, 1].
    pub courant_factor: f64,
    pub pml_cells: usize,
    pub pml: PmlProfile,
    /// Samples per axis used to average permittivity over interface cells.
    pub subpixel_samples: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            resolution: 20,
            courant_factor: 0.5,
            pml_cells: 12,
            pml: PmlProfile::default(),
            subpixel_samples: 8,
        }
    }
}

impl GridParams {
    pub fn with_resolution(resolution: usize) -> Self {
        GridParams {
            resolution,
            ..GridParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 10 {
            return Err(Error::invalid(format!(
                "resolution {} below the minimum of 10 cells per unit length",
                self.resolution
            )));
        }
        if !(self.courant_factor > 0.0 && self.courant_factor <= 1.0) {
            return Err(Error::invalid(format!(
                "courant factor {} outside (0, 1]",
                self.courant_factor
            )));
        }
        if self.pml_cells < 8 {
            return Err(Error::invalid(format!(
                "pml_cells = {} below the minimum of 8",
                self.pml_cells
            )));
        }
        if self.subpixel_samples == 0 {
            return Err(Error::invalid("subpixel_samples must be >= 1"));
        }
        self.pml.validate()
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn dt(&self) -> f64 {
        self.courant_factor * self.dx() / 3f64.sqrt()
    }
}

/// One driven/monitored field component of a snapped dipole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentTap {
    pub axis: usize,
    pub index: usize,
    /// Orientation projection onto this component.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnappedDipole {
    pub label: DipoleLabel,
    pub taps: Vec<ComponentTap>,
    /// Largest distance between the requested position and a tap node.
    pub snap_distance: f64,
}

/// Yee-lattice field and coefficient storage plus CPML state for one run.
pub struct SimulationState<T: Real> {
    pub(crate) dims: [usize; 3],
    pub(crate) dx: f64,
    pub(crate) dt: f64,
    /// Scene coordinate of node (0, 0, 0).
    pub(crate) origin: Vec3,
    pub(crate) e: [Vec<T>; 3],
    pub(crate) h: [Vec<T>; 3],
    /// `dt / (eps dx)` at each E node.
    pub(crate) ce: [Vec<T>; 3],
    /// `dt / dx` (unit permeability).
    pub(crate) ch: T,
    /// `1/kappa` at integer (E-derivative) and half-integer (H-derivative) positions.
    pub(crate) inv_kappa_e: [Vec<T>; 3],
    pub(crate) inv_kappa_h: [Vec<T>; 3],
    pub(crate) slabs: Vec<PmlSlab<T>>,
    pub(crate) dipoles: Vec<SnappedDipole>,
    pub(crate) step_index: usize,
}

impl<T: Real> SimulationState<T> {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Scene coordinate of node (0, 0, 0).
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    /// Array index of the node nearest to `p` (component offsets ignored).
    pub fn nearest_node(&self, p: Vec3) -> Option<usize> {
        let mut ijk = [0usize; 3];
        for a in 0..3 {
            let n = ((p[a] - self.origin[a]) / self.dx).round();
            if !(n >= 0.0 && n <= self.dims[a] as f64) {
                return None;
            }
            ijk[a] = n as usize;
        }
        Some(self.node_index(ijk[0], ijk[1], ijk[2]))
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn dipoles(&self) -> &[SnappedDipole] {
        &self.dipoles
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    #[inline]
    pub(crate) fn strides(&self) -> [usize; 3] {
        let [_, ny, nz] = self.dims;
        [(ny + 1) * (nz + 1), nz + 1, 1]
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        let s = self.strides();
        i * s[0] + j * s[1] + k * s[2]
    }

    pub fn node_count(&self) -> usize {
        let [nx, ny, nz] = self.dims;
        (nx + 1) * (ny + 1) * (nz + 1)
    }

    pub fn e_field(&self, axis: usize) -> &[T] {
        &self.e[axis]
    }

    pub fn h_field(&self, axis: usize) -> &[T] {
        &self.h[axis]
    }

    pub fn e_field_mut(&mut self, axis: usize) -> &mut [T] {
        &mut self.e[axis]
    }

    /// Relative permittivity baked into the E-node coefficient.
    pub fn permittivity_at(&self, axis: usize, index: usize) -> f64 {
        self.dt / (self.dx * self.ce[axis][index].as_f64())
    }

    /// Scene-coordinate position of a field component node.
    pub fn component_position(&self, axis: usize, index: usize, magnetic: bool) -> Vec3 {
        let s = self.strides();
        let ijk = [index / s[0], (index % s[0]) / s[1], index % s[1]];
        let mut p = [0.0; 3];
        for a in 0..3 {
            let half = if magnetic { a != axis } else { a == axis };
            p[a] = self.origin[a] + (ijk[a] as f64 + if half { 0.5 } else { 0.0 }) * self.dx;
        }
        p
    }

    /// Electromagnetic energy density summed over the lattice (cell volume units).
    pub fn field_energy(&self) -> f64 {
        let mut total = 0.0;
        for axis in 0..3 {
            for (idx, v) in self.e[axis].iter().enumerate() {
                let v = v.as_f64();
                if v != 0.0 {
                    total += 0.5 * self.permittivity_at(axis, idx) * v * v;
                }
            }
            total += self.h[axis]
                .iter()
                .map(|v| 0.5 * v.as_f64() * v.as_f64())
                .sum::<f64>();
        }
        total
    }

    pub fn all_finite(&self) -> bool {
        self.e
            .iter()
            .chain(self.h.iter())
            .all(|f| f.iter().all(|v| v.is_finite()))
    }

    pub fn dipole_index(&self, label: DipoleLabel) -> Option<usize> {
        self.dipoles.iter().position(|d| d.label == label)
    }

    /// Orientation-projected E at a dipole's taps.
    pub fn projected_field(&self, dipole: usize) -> f64 {
        self.dipoles[dipole]
            .taps
            .iter()
            .map(|t| t.weight * self.e[t.axis][t.index].as_f64())
            .sum()
    }
}

/// Integer node range covering the scene along one axis.
struct AxisLayout {
    /// Scene node number (coordinate / dx) of array index 0.
    first_node: i64,
    cells: usize,
    /// Cells of absorber on the low and high side.
    pml: [usize; 2],
}

fn layout_axis(scene: &Scene, grid: &GridParams, axis: usize) -> Result<AxisLayout> {
    let dx = grid.dx();
    let lo = scene.min[axis] / dx;
    let hi = scene.max[axis] / dx;
    let mut bounds = [0i64; 2];
    let outward = |v: f64, up: bool| {
        if (v - v.round()).abs() < 1e-6 {
            v.round()
        } else if up {
            v.ceil()
        } else {
            v.floor()
        }
    };
    for (side, (value, outward)) in [(lo, outward(lo, false)), (hi, outward(hi, true))]
        .into_iter()
        .enumerate()
    {
        let kind = scene.boundaries.face(axis, side == 1);
        bounds[side] = if kind == BoundaryKind::PerfectConductor {
            let nearest = value.round();
            if (value - nearest).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "conductor face on axis {axis} at {} is not commensurate with dx = {dx}",
                    value * dx
                )));
            }
            nearest as i64
        } else {
            outward as i64
        };
    }
    let pml = [0, 1].map(|side| match scene.boundaries.face(axis, side == 1) {
        BoundaryKind::Absorbing => grid.pml_cells,
        BoundaryKind::PerfectConductor => 0,
    });
    let interior = (bounds[1] - bounds[0]) as usize;
    Ok(AxisLayout {
        first_node: bounds[0] - pml[0] as i64,
        cells: interior + pml[0] + pml[1],
        pml,
    })
}

fn check_resolution(scene: &Scene, grid: &GridParams) -> Result<()> {
    let dx = grid.dx();
    for feature in scene.features() {
        let cells = feature.size / dx;
        if cells < MIN_CELLS_PER_FEATURE - 1e-9 {
            return Err(Error::invalid(format!(
                "{} of {} spans only {cells:.2} cells at resolution {} (need >= {MIN_CELLS_PER_FEATURE})",
                feature.name, feature.size, grid.resolution
            )));
        }
    }
    Ok(())
}

/// Mean permittivity over the cube of side `dx` centred on `p`.
fn cell_average(scene: &Scene, p: Vec3, dx: f64, samples: usize) -> f64 {
    // Probe corners, face centres and centre first; uniform cells skip the full average.
    let first = scene.permittivity(p);
    let mut uniform = true;
    'probe: for a in [-0.5, 0.0, 0.5] {
        for b in [-0.5, 0.0, 0.5] {
            for c in [-0.5, 0.0, 0.5] {
                let q = [p[0] + a * dx, p[1] + b * dx, p[2] + c * dx];
                if scene.permittivity(q) != first {
                    uniform = false;
                    break 'probe;
                }
            }
        }
    }
    if uniform || samples == 1 {
        return first;
    }
    let n = samples as f64;
    let offsets: Vec<f64> = (0..samples).map(|s| ((s as f64 + 0.5) / n - 0.5) * dx).collect();
    let mut sum = 0.0;
    for &a in &offsets {
        for &b in &offsets {
            for &c in &offsets {
                sum += scene.permittivity([p[0] + a, p[1] + b, p[2] + c]);
            }
        }
    }
    sum / (n * n * n)
}

/// Bakes `scene` onto a Yee lattice with zero initial fields.
pub fn discretize<T: Real>(scene: &Scene, grid: &GridParams) -> Result<SimulationState<T>> {
    grid.validate()?;
    check_resolution(scene, grid)?;
    let dx = grid.dx();
    let dt = grid.dt();
    let layouts = [0, 1, 2]
        .map(|a| layout_axis(scene, grid, a))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let dims = [layouts[0].cells, layouts[1].cells, layouts[2].cells];
    if dims.iter().any(|&n| n < 2) {
        return Err(Error::invalid("scene spans fewer than two cells"));
    }
    let origin = [0, 1, 2].map(|a| layouts[a].first_node as f64 * dx);
    let [nx, ny, nz] = dims;
    let n_nodes = (nx + 1) * (ny + 1) * (nz + 1);
    let strides = [(ny + 1) * (nz + 1), nz + 1, 1];

    let mut ce: [Vec<T>; 3] = [vec![T::zero(); n_nodes], vec![T::zero(); n_nodes], vec![T::zero(); n_nodes]];
    let uniform_eps = match scene.geometry {
        crate::scene::Geometry::Uniform { permittivity } => Some(permittivity),
        _ => None,
    };
    for (axis, coeff) in ce.iter_mut().enumerate() {
        for i in 0..=nx {
            for j in 0..=ny {
                for k in 0..=nz {
                    let idx = i * strides[0] + j * strides[1] + k * strides[2];
                    let eps = match uniform_eps {
                        Some(e) => e,
                        None => {
                            let ijk = [i, j, k];
                            let p = [0, 1, 2].map(|a| {
                                origin[a] + (ijk[a] as f64 + if a == axis { 0.5 } else { 0.0 }) * dx
                            });
                            cell_average(scene, p, dx, grid.subpixel_samples)
                        }
                    };
                    coeff[idx] = T::of(dt / (eps * dx));
                }
            }
        }
    }

    let mut inv_kappa_e = [vec![], vec![], vec![]];
    let mut inv_kappa_h = [vec![], vec![], vec![]];
    let mut slabs = Vec::new();
    for axis in 0..3 {
        let n = dims[axis];
        let profile = grid.pml.axis_profile(n, layouts[axis].pml, dx, dt);
        inv_kappa_e[axis] = profile.e.iter().map(|p| T::of(1.0 / p.kappa)).collect();
        inv_kappa_h[axis] = profile.h.iter().map(|p| T::of(1.0 / p.kappa)).collect();
        for side in 0..2 {
            let cells = layouts[axis].pml[side];
            if cells > 0 {
                slabs.push(PmlSlab::new(axis, side == 1, cells, dims, &profile));
            }
        }
    }

    let dipoles = scene
        .dipoles
        .iter()
        .map(|d| snap_dipole(d, &layouts, dims, strides, dx))
        .collect::<Result<Vec<_>>>()?;

    Ok(SimulationState {
        dims,
        dx,
        dt,
        origin,
        e: [vec![T::zero(); n_nodes], vec![T::zero(); n_nodes], vec![T::zero(); n_nodes]],
        h: [vec![T::zero(); n_nodes], vec![T::zero(); n_nodes], vec![T::zero(); n_nodes]],
        ce,
        ch: T::of(dt / dx),
        inv_kappa_e,
        inv_kappa_h,
        slabs,
        dipoles,
        step_index: 0,
    })
}

fn snap_dipole(
    d: &crate::scene::DipoleSpec,
    layouts: &[AxisLayout],
    dims: [usize; 3],
    strides: [usize; 3],
    dx: f64,
) -> Result<SnappedDipole> {
    let mut taps = Vec::new();
    let mut snap_distance: f64 = 0.0;
    for (axis, &weight) in d.orientation.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let mut index = 0usize;
        let mut dist2 = 0.0;
        for a in 0..3 {
            let half = if a == axis { 0.5 } else { 0.0 };
            // f64::round breaks ties away from zero, so mirrored inputs snap symmetrically.
            let node = (d.position[a] / dx - half).round() as i64;
            let local = node - layouts[a].first_node;
            let half_axis = a == axis;
            let lo = layouts[a].pml[0] as i64;
            let hi = (dims[a] - layouts[a].pml[1]) as i64;
            let min_ok = if layouts[a].pml[0] > 0 {
                lo + MIN_CELLS_FROM_ABSORBER
            } else if half_axis {
                0
            } else {
                1
            };
            let max_ok = if layouts[a].pml[1] > 0 {
                hi - MIN_CELLS_FROM_ABSORBER - i64::from(half_axis)
            } else {
                dims[a] as i64 - 1
            };
            if local < min_ok || local > max_ok {
                return Err(Error::invalid(format!(
                    "dipole {} component {axis} is too close to the domain boundary on axis {a}",
                    d.label
                )));
            }
            let snapped = (node as f64 + half) * dx;
            dist2 += (snapped - d.position[a]).powi(2);
            index += local as usize * strides[a];
        }
        snap_distance = snap_distance.max(dist2.sqrt());
        taps.push(ComponentTap {
            axis,
            index,
            weight,
        });
    }
    Ok(SnappedDipole {
        label: d.label,
        taps,
        snap_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_phc_cavity, build_planar_cavity, build_vacuum, place_dipoles, DipoleSpec, LatticeSpec};

    #[test]
    fn vacuum_coefficients_uniform() {
        let scene = build_vacuum([1.0, 1.0, 1.0]).unwrap();
        let grid = GridParams::with_resolution(20);
        let st = discretize::<f64>(&scene, &grid).unwrap();
        assert_eq!(st.dims(), [20 + 24, 20 + 24, 20 + 24]);
        let expected = 0.5 * (1.0 / 20.0) / 3f64.sqrt();
        assert!((st.dt() - expected).abs() < 1e-15);
        for axis in 0..3 {
            assert!(st.ce[axis].iter().all(|&c| (c - st.dt / st.dx).abs() < 1e-15));
        }
        // scene origin is a node
        let s = st.strides();
        let centre = (22 * s[0] + 22 * s[1] + 22 * s[2], [0.0, 0.0, 0.0]);
        let p = st.component_position(2, centre.0, false);
        assert!(p[0].abs() < 1e-12 && p[1].abs() < 1e-12 && (p[2] - 0.025).abs() < 1e-12);
    }

    #[test]
    fn under_resolved_phc_rejected() {
        let scene = build_phc_cavity(LatticeSpec::default()).unwrap();
        let mut grid = GridParams::with_resolution(4);
        assert!(discretize::<f32>(&scene, &grid).is_err());
        // below the feature check but above the global floor
        let fine = LatticeSpec {
            hole_radius: 0.05,
            ..LatticeSpec::default()
        };
        grid.resolution = 20;
        let err = discretize::<f32>(&build_phc_cavity(fine).unwrap(), &grid).err().unwrap();
        assert!(err.to_string().contains("hole radius"), "{err}");
    }

    #[test]
    fn planar_gap_must_be_commensurate() {
        let scene = build_planar_cavity(0.7, [1.0, 1.0]).unwrap();
        assert!(discretize::<f64>(&scene, &GridParams::with_resolution(30)).is_ok());
        assert!(discretize::<f64>(&scene, &GridParams::with_resolution(11)).is_err());
    }

    #[test]
    fn snapping_reports_offset() {
        let scene = build_vacuum([1.0, 1.0, 1.0]).unwrap();
        let d = DipoleSpec::along_axis(DipoleLabel::A, [0.0, 0.0, 0.1], 0);
        let scene = place_dipoles(&scene, &[d]).unwrap();
        let st = discretize::<f64>(&scene, &GridParams::with_resolution(20)).unwrap();
        let snapped = &st.dipoles()[0];
        assert_eq!(snapped.taps.len(), 1);
        assert!((snapped.snap_distance - 0.025).abs() < 1e-12);
        let p = st.component_position(0, snapped.taps[0].index, false);
        assert!((p[0] + 0.025).abs() < 1e-12 && p[1].abs() < 1e-12 && (p[2] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn dipole_near_absorber_rejected() {
        let scene = build_vacuum([1.0, 1.0, 1.0]).unwrap();
        let d = DipoleSpec::along_axis(DipoleLabel::A, [0.0, 0.0, 0.49], 0);
        let scene = place_dipoles(&scene, &[d]).unwrap();
        assert!(discretize::<f64>(&scene, &GridParams::with_resolution(20)).is_err());
    }

    /// Area fraction of a disc inside an axis-aligned square by fine midpoint sampling.
    fn disc_fraction(cx: f64, cy: f64, r: f64, x0: f64, y0: f64, side: f64) -> f64 {
        let n = 2000;
        let h = side / n as f64;
        let mut inside = 0usize;
        for a in 0..n {
            for b in 0..n {
                let x = x0 + (a as f64 + 0.5) * h;
                let y = y0 + (b as f64 + 0.5) * h;
                if (x - cx).powi(2) + (y - cy).powi(2) < r * r {
                    inside += 1;
                }
            }
        }
        inside as f64 / (n * n) as f64
    }

    #[test]
    fn defect_edge_cell_matches_volume_fraction() {
        let scene = build_phc_cavity(LatticeSpec::default()).unwrap();
        let grid = GridParams::with_resolution(15);
        let st = discretize::<f64>(&scene, &grid).unwrap();
        let dx = grid.dx();
        // Ez node at scene (4dx, 1dx, 0.5dx): its cell straddles the defect rim (r = 4.5 dx)
        let node = [4i64, 1, 0];
        let first = [0, 1, 2].map(|a| (st.origin[a] / dx).round() as i64);
        let idx = st.node_index(
            (node[0] - first[0]) as usize,
            (node[1] - first[1]) as usize,
            (node[2] - first[2]) as usize,
        );
        let eps = st.permittivity_at(2, idx);
        let p = st.component_position(2, idx, false);
        assert!((p[0] - 4.0 * dx).abs() < 1e-12 && (p[2] - 0.5 * dx).abs() < 1e-12);
        let frac = disc_fraction(0.0, 0.0, 0.3, p[0] - 0.5 * dx, p[1] - 0.5 * dx, dx);
        let oracle = frac * 5.76 + (1.0 - frac) * 11.56;
        assert!(eps > 1.0 && eps < 11.56);
        assert!(frac > 0.05 && frac < 0.95, "cell must straddle the rim, got {frac}");
        assert!((eps - oracle).abs() < 0.02 * (11.56 - 5.76), "eps {eps} vs oracle {oracle}");
    }
}
