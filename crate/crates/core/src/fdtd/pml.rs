//! Convolutional PML (complex frequency-shifted stretched coordinates).
//!
//! Each absorbing face owns a slab of auxiliary `psi` variables, one per
//! (field component, derivative direction) pair that the face stretches.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use super::kernel::{ConstF, Factor, RowF, RowFactor};
use crate::num::Real;

/// Grading of the absorber parameters with depth `rho` in `[0, 1]`.
///
/// `sigma = sigma_max rho^order`, `kappa = 1 + (kappa_max - 1) rho^order`,
/// `alpha = alpha_max (1 - rho)`, with `sigma_max = sigma_scale (order + 1) / dx`
/// in units where `eps0 = mu0 = c = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmlProfile {
    pub order: f64,
    pub sigma_scale: f64,
    pub kappa_max: f64,
    pub alpha_max: f64,
}

impl Default for PmlProfile {
    fn default() -> Self {
        PmlProfile {
            order: 3.0,
            sigma_scale: 0.8,
            kappa_max: 1.0,
            alpha_max: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct PmlCoeff {
    pub b: f64,
    pub c: f64,
    pub kappa: f64,
}

impl PmlCoeff {
    const INTERIOR: PmlCoeff = PmlCoeff {
        b: 1.0,
        c: 0.0,
        kappa: 1.0,
    };
}

/// Coefficients along one axis at integer (`e`) and half-integer (`h`) positions.
pub(crate) struct AxisProfile {
    pub e: Vec<PmlCoeff>,
    pub h: Vec<PmlCoeff>,
}

impl PmlProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.order >= 1.0 && self.sigma_scale > 0.0 && self.kappa_max >= 1.0 && self.alpha_max >= 0.0) {
            return Err(Error::invalid(format!("invalid PML profile {self:?}")));
        }
        Ok(())
    }

    fn coeff(&self, rho: f64, dx: f64, dt: f64) -> PmlCoeff {
        if rho <= 0.0 {
            return PmlCoeff::INTERIOR;
        }
        let graded = rho.powf(self.order);
        let sigma = self.sigma_scale * (self.order + 1.0) / dx * graded;
        let kappa = 1.0 + (self.kappa_max - 1.0) * graded;
        let alpha = self.alpha_max * (1.0 - rho);
        let b = (-(sigma / kappa + alpha) * dt).exp();
        let c = if sigma > 0.0 {
            sigma * (b - 1.0) / (kappa * (sigma + kappa * alpha))
        } else {
            0.0
        };
        PmlCoeff { b, c, kappa }
    }

    pub(crate) fn axis_profile(&self, cells: usize, pml: [usize; 2], dx: f64, dt: f64) -> AxisProfile {
        let depth = |x: f64| -> f64 {
            let mut rho: f64 = 0.0;
            if pml[0] > 0 {
                rho = rho.max((pml[0] as f64 - x) / pml[0] as f64);
            }
            if pml[1] > 0 {
                let start = (cells - pml[1]) as f64;
                rho = rho.max((x - start) / pml[1] as f64);
            }
            rho.min(1.0)
        };
        AxisProfile {
            e: (0..=cells).map(|i| self.coeff(depth(i as f64), dx, dt)).collect(),
            h: (0..=cells).map(|i| self.coeff(depth(i as f64 + 0.5), dx, dt)).collect(),
        }
    }
}

/// Auxiliary state of one absorbing face.
pub(crate) struct PmlSlab<T: Real> {
    axis: usize,
    /// First lattice index covered along `axis`.
    start: usize,
    len: usize,
    /// psi sizes; equal to lattice sizes except along `axis`.
    sizes: [usize; 3],
    be: Vec<T>,
    ce: Vec<T>,
    bh: Vec<T>,
    chh: Vec<T>,
    /// psi for E components `(axis+1)%3` and `(axis+2)%3`.
    psi_e: [Vec<T>; 2],
    psi_h: [Vec<T>; 2],
}

/// Index ranges (half-open) of the updated nodes of each component.
pub(crate) fn e_ranges(dims: [usize; 3], comp: usize) -> [(usize, usize); 3] {
    [0, 1, 2].map(|a| if a == comp { (0, dims[a]) } else { (1, dims[a]) })
}

pub(crate) fn h_ranges(dims: [usize; 3], comp: usize) -> [(usize, usize); 3] {
    [0, 1, 2].map(|a| if a == comp { (0, dims[a] + 1) } else { (0, dims[a]) })
}

impl<T: Real> PmlSlab<T> {
    pub(crate) fn new(axis: usize, high: bool, cells: usize, dims: [usize; 3], profile: &AxisProfile) -> Self {
        let start = if high { dims[axis] - cells } else { 0 };
        let mut sizes = dims.map(|n| n + 1);
        sizes[axis] = cells;
        let volume = sizes.iter().product();
        let pick = |v: &[PmlCoeff], f: fn(&PmlCoeff) -> f64| -> Vec<T> {
            v[start..start + cells].iter().map(|c| T::of(f(c))).collect()
        };
        PmlSlab {
            axis,
            start,
            len: cells,
            sizes,
            be: pick(&profile.e, |c| c.b),
            ce: pick(&profile.e, |c| c.c),
            bh: pick(&profile.h, |c| c.b),
            chh: pick(&profile.h, |c| c.c),
            psi_e: [vec![T::zero(); volume], vec![T::zero(); volume]],
            psi_h: [vec![T::zero(); volume], vec![T::zero(); volume]],
        }
    }

    /// Adds the stretched-coordinate memory terms to E after the main curl update.
    pub(crate) fn apply_e(&mut self, e: &mut [Vec<T>; 3], h: &[Vec<T>; 3], ce: &[Vec<T>; 3], dims: [usize; 3]) {
        let a = self.axis;
        let (c1, c2) = ((a + 1) % 3, (a + 2) % 3);
        // dE_c1/dt ∝ -∂H_c2/∂a, dE_c2/dt ∝ +∂H_c1/∂a
        for (slot, target, source, sign) in [(0, c1, c2, -1.0), (1, c2, c1, 1.0)] {
            let sweep = Sweep {
                axis: a,
                start: self.start,
                len: self.len,
                sizes: self.sizes,
                strides: strides(dims),
                ranges: e_ranges(dims, target),
                b: &self.be,
                c: &self.ce,
                forward: false,
                scale: Factor::Row(&ce[target]),
                sign: T::of(sign),
            };
            sweep.run(&mut self.psi_e[slot], &mut e[target], &h[source]);
        }
    }

    /// Adds the stretched-coordinate memory terms to H after the main curl update.
    pub(crate) fn apply_h(&mut self, h: &mut [Vec<T>; 3], e: &[Vec<T>; 3], ch: T, dims: [usize; 3]) {
        let a = self.axis;
        let (c1, c2) = ((a + 1) % 3, (a + 2) % 3);
        // dH_c1/dt ∝ +∂E_c2/∂a, dH_c2/dt ∝ -∂E_c1/∂a
        for (slot, target, source, sign) in [(0, c1, c2, 1.0), (1, c2, c1, -1.0)] {
            let sweep = Sweep {
                axis: a,
                start: self.start,
                len: self.len,
                sizes: self.sizes,
                strides: strides(dims),
                ranges: h_ranges(dims, target),
                b: &self.bh,
                c: &self.chh,
                forward: true,
                scale: Factor::Const(ch),
                sign: T::of(sign),
            };
            sweep.run(&mut self.psi_h[slot], &mut h[target], &e[source]);
        }
    }
}

pub(crate) fn strides(dims: [usize; 3]) -> [usize; 3] {
    [(dims[1] + 1) * (dims[2] + 1), dims[2] + 1, 1]
}

/// One psi recursion plus field correction over a slab.
struct Sweep<'a, T> {
    axis: usize,
    start: usize,
    len: usize,
    sizes: [usize; 3],
    strides: [usize; 3],
    ranges: [(usize, usize); 3],
    b: &'a [T],
    c: &'a [T],
    /// `src[n+1] - src[n]` (H updates) instead of `src[n] - src[n-1]` (E updates).
    forward: bool,
    scale: Factor<'a, T>,
    sign: T,
}

impl<T: Real> Sweep<'_, T> {
    fn run(&self, psi: &mut [T], field: &mut [T], src: &[T]) {
        let mut r = self.ranges;
        let a = self.axis;
        r[a].0 = r[a].0.max(self.start);
        r[a].1 = r[a].1.min(self.start + self.len);
        if r.iter().any(|(lo, hi)| lo >= hi) {
            return;
        }
        let offset = [0, 1, 2].map(|d| if d == a { self.start } else { 0 });
        let ps = [self.sizes[1] * self.sizes[2], self.sizes[2], 1];
        let s = self.strides;
        let step = s[a];
        let count = r[0].1 - r[0].0;
        let (k0, k1) = r[2];
        field
            .par_chunks_mut(s[0])
            .skip(r[0].0)
            .take(count)
            .zip(psi.par_chunks_mut(ps[0]).skip(r[0].0 - offset[0]).take(count))
            .enumerate()
            .for_each(|(n, (plane, psi_plane))| {
                let i = r[0].0 + n;
                for j in r[1].0..r[1].1 {
                    let row = j * s[1];
                    let g = i * s[0] + row;
                    let (hi, lo) = if self.forward { (g + step, g) } else { (g, g - step) };
                    let p0 = (j - offset[1]) * ps[1] + k0 - offset[2];
                    let ijk = [i, j, 0];
                    let (b, c) = if a == 2 {
                        let l = k0 - self.start..k1 - self.start;
                        (Factor::Row(&self.b[l.clone()]), Factor::Row(&self.c[l]))
                    } else {
                        let l = ijk[a] - self.start;
                        (Factor::Const(self.b[l]), Factor::Const(self.c[l]))
                    };
                    let scale = match self.scale {
                        Factor::Const(v) => Factor::Const(v * self.sign),
                        Factor::Row(coef) => Factor::Row(&coef[g + k0..g + k1]),
                    };
                    let row = PsiRow {
                        psi: &mut psi_plane[p0..p0 + (k1 - k0)],
                        out: &mut plane[row + k0..row + k1],
                        hi: &src[hi + k0..hi + k1],
                        lo: &src[lo + k0..lo + k1],
                        sign: self.sign,
                    };
                    row.dispatch(b, c, scale);
                }
            });
    }
}

struct PsiRow<'a, T> {
    psi: &'a mut [T],
    out: &'a mut [T],
    hi: &'a [T],
    lo: &'a [T],
    sign: T,
}

impl<T: Real> PsiRow<'_, T> {
    #[inline]
    fn dispatch(self, b: Factor<'_, T>, c: Factor<'_, T>, scale: Factor<'_, T>) {
        match (b, c, scale) {
            (Factor::Const(b), Factor::Const(c), Factor::Const(s)) => self.run(ConstF(b), ConstF(c), ConstF(s), false),
            (Factor::Const(b), Factor::Const(c), Factor::Row(s)) => self.run(ConstF(b), ConstF(c), RowF(s), true),
            (Factor::Row(b), Factor::Row(c), Factor::Const(s)) => self.run(RowF(b), RowF(c), ConstF(s), false),
            (Factor::Row(b), Factor::Row(c), Factor::Row(s)) => self.run(RowF(b), RowF(c), RowF(s), true),
            _ => unreachable!("b and c always share a kind"),
        }
    }

    /// `psi = b psi + c (hi - lo)`, `out += scale psi` (per-node scales take the sign here).
    #[inline(always)]
    fn run<B: RowFactor<T>, C: RowFactor<T>, S: RowFactor<T>>(self, b: B, c: C, scale: S, signed: bool) {
        let n = self.out.len();
        let (psi, hi, lo) = (&mut self.psi[..n], &self.hi[..n], &self.lo[..n]);
        let sign = if signed { self.sign } else { T::one() };
        for k in 0..n {
            let p = b.at(k) * psi[k] + c.at(k) * (hi[k] - lo[k]);
            psi[k] = p;
            self.out[k] += sign * scale.at(k) * p;
        }
    }
}
