//! Leapfrog curl updates.
//!
//! Work is split over x-planes of the target component, so each worker
//! writes a disjoint slice and the result does not depend on thread count.

use rayon::prelude::*;

use super::grid::{SimulationState, SnappedDipole};
use super::pml::{e_ranges, h_ranges};
use crate::num::Real;

pub(crate) fn update_h<T: Real>(st: &mut SimulationState<T>) {
    let dims = st.dims;
    let s = st.strides();
    let ch = st.ch;
    let SimulationState {
        e,
        h,
        inv_kappa_h: ik,
        slabs,
        ..
    } = st;
    for c in 0..3 {
        let (c1, c2) = ((c + 1) % 3, (c + 2) % 3);
        let r = h_ranges(dims, c);
        // H_c -= dt/dx (∂_c1 E_c2 - ∂_c2 E_c1)
        let (ea, eb) = (&e[c2], &e[c1]);
        let (oa, ob) = (s[c1], s[c2]);
        let (ika, ikb) = (&ik[c1], &ik[c2]);
        h[c].par_chunks_mut(s[0])
            .enumerate()
            .skip(r[0].0)
            .take(r[0].1 - r[0].0)
            .for_each(|(i, plane)| {
                let (k0, k1) = r[2];
                for j in r[1].0..r[1].1 {
                    let row = j * s[1];
                    let g = i * s[0] + row;
                    let ijk = [i, j, 0];
                    let fa = Factor::along(ika, c1, ijk, k0, k1);
                    let fb = Factor::along(ikb, c2, ijk, k0, k1);
                    let rows = Rows {
                        a_hi: &ea[g + oa + k0..g + oa + k1],
                        a_lo: &ea[g + k0..g + k1],
                        b_hi: &eb[g + ob + k0..g + ob + k1],
                        b_lo: &eb[g + k0..g + k1],
                    };
                    let out = &mut plane[row + k0..row + k1];
                    rows.apply(out, fa, fb, Factor::Const(-ch));
                }
            });
    }
    for slab in slabs.iter_mut() {
        slab.apply_h(h, e, ch, dims);
    }
}

pub(crate) fn update_e<T: Real>(st: &mut SimulationState<T>) {
    let dims = st.dims;
    let s = st.strides();
    let SimulationState {
        e,
        h,
        ce,
        inv_kappa_e: ik,
        slabs,
        ..
    } = st;
    for c in 0..3 {
        let (c1, c2) = ((c + 1) % 3, (c + 2) % 3);
        let r = e_ranges(dims, c);
        // E_c += dt/(eps dx) (∂_c1 H_c2 - ∂_c2 H_c1)
        let (ha, hb) = (&h[c2], &h[c1]);
        let (oa, ob) = (s[c1], s[c2]);
        let (ika, ikb) = (&ik[c1], &ik[c2]);
        let coef = &ce[c];
        e[c].par_chunks_mut(s[0])
            .enumerate()
            .skip(r[0].0)
            .take(r[0].1 - r[0].0)
            .for_each(|(i, plane)| {
                let (k0, k1) = r[2];
                for j in r[1].0..r[1].1 {
                    let row = j * s[1];
                    let g = i * s[0] + row;
                    let ijk = [i, j, 0];
                    let fa = Factor::along(ika, c1, ijk, k0, k1);
                    let fb = Factor::along(ikb, c2, ijk, k0, k1);
                    let rows = Rows {
                        a_hi: &ha[g + k0..g + k1],
                        a_lo: &ha[g - oa + k0..g - oa + k1],
                        b_hi: &hb[g + k0..g + k1],
                        b_lo: &hb[g - ob + k0..g - ob + k1],
                    };
                    let out = &mut plane[row + k0..row + k1];
                    rows.apply(out, fa, fb, Factor::Row(&coef[g + k0..g + k1]));
                }
            });
    }
    for slab in slabs.iter_mut() {
        slab.apply_e(e, h, ce, dims);
    }
}

/// Inverse stretching factor along a row: constant, or varying with `k`.
#[derive(Clone, Copy)]
pub(crate) enum Factor<'a, T> {
    Const(T),
    Row(&'a [T]),
}

impl<'a, T: Real> Factor<'a, T> {
    fn along(ik: &'a [T], axis: usize, ijk: [usize; 3], k0: usize, k1: usize) -> Self {
        if axis == 2 {
            Factor::Row(&ik[k0..k1])
        } else {
            Factor::Const(ik[ijk[axis]])
        }
    }
}

pub(crate) trait RowFactor<T>: Copy {
    fn at(&self, k: usize) -> T;
}

#[derive(Clone, Copy)]
pub(crate) struct ConstF<T>(pub T);

#[derive(Clone, Copy)]
pub(crate) struct RowF<'a, T>(pub &'a [T]);

impl<T: Real> RowFactor<T> for ConstF<T> {
    #[inline(always)]
    fn at(&self, _: usize) -> T {
        self.0
    }
}

impl<T: Real> RowFactor<T> for RowF<'_, T> {
    #[inline(always)]
    fn at(&self, k: usize) -> T {
        self.0[k]
    }
}

/// Difference operands of one lattice row.
struct Rows<'a, T> {
    a_hi: &'a [T],
    a_lo: &'a [T],
    b_hi: &'a [T],
    b_lo: &'a [T],
}

impl<T: Real> Rows<'_, T> {
    /// `out += coef * (fa ∂a - fb ∂b)` with each factor constant or per-node.
    #[inline]
    fn apply(&self, out: &mut [T], fa: Factor<'_, T>, fb: Factor<'_, T>, coef: Factor<'_, T>) {
        match coef {
            Factor::Const(c) => self.with_coef(out, fa, fb, ConstF(c)),
            Factor::Row(c) => self.with_coef(out, fa, fb, RowF(c)),
        }
    }

    #[inline(always)]
    fn with_coef<C: RowFactor<T>>(&self, out: &mut [T], fa: Factor<'_, T>, fb: Factor<'_, T>, coef: C) {
        match (fa, fb) {
            (Factor::Const(a), Factor::Const(b)) => self.run(out, ConstF(a), ConstF(b), coef),
            (Factor::Row(a), Factor::Const(b)) => self.run(out, RowF(a), ConstF(b), coef),
            (Factor::Const(a), Factor::Row(b)) => self.run(out, ConstF(a), RowF(b), coef),
            (Factor::Row(a), Factor::Row(b)) => self.run(out, RowF(a), RowF(b), coef),
        }
    }

    #[inline(always)]
    fn run<A: RowFactor<T>, B: RowFactor<T>, C: RowFactor<T>>(&self, out: &mut [T], fa: A, fb: B, coef: C) {
        let n = out.len();
        let (a_hi, a_lo, b_hi, b_lo) = (&self.a_hi[..n], &self.a_lo[..n], &self.b_hi[..n], &self.b_lo[..n]);
        for k in 0..n {
            let curl = (a_hi[k] - a_lo[k]) * fa.at(k) - (b_hi[k] - b_lo[k]) * fb.at(k);
            out[k] += coef.at(k) * curl;
        }
    }
}

/// Soft point-current injection: the dipole moment rate `s` spread over one cell.
pub(crate) fn inject<T: Real>(st: &mut SimulationState<T>, dipole: &SnappedDipole, s: f64) {
    let scale = s / (st.dx * st.dx);
    for tap in &dipole.taps {
        let c = st.ce[tap.axis][tap.index];
        st.e[tap.axis][tap.index] -= c * T::of(tap.weight * scale);
    }
}
