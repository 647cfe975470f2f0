//! Two-atom resolvent dynamics: the coupling matrix `W_ij(ω)`, complex roots
//! of the secular function `Ξ(z)` and amplitude evolution by Fourier
//! inversion of the resolvent.
//!
//! Couplings are tabulated on the real axis. Off the axis `W(z)` is taken as
//! `W(Re z)`, so `Ξ` is smooth but not holomorphic; roots are found with a
//! two-dimensional Newton iteration and counted through the winding number of
//! `Ξ` around the search box.

mod spline;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{uniform_spacing, DeltaSpectrum};
use crate::radiometry::{AtomSpec, GammaSpectrum};
use spline::CubicSpline;

const NEWTON_ITERATIONS: usize = 100;
/// Residual tolerance relative to `ω_A²`.
pub const ROOT_TOLERANCE: f64 = 1e-10;
/// Maximum tolerated `|a(0) - 1|` before normalization.
pub const COVERAGE_LIMIT: f64 = 1e-3;
/// Quadrature points across the narrowest pole width.
const POINTS_PER_WIDTH: f64 = 20.0;

/// Sign of the damping term: `W = Δ ∓ iΓ/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    #[default]
    Retarded,
    Advanced,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Retarded => -1.0,
            Branch::Advanced => 1.0,
        }
    }
}

/// One tabulated coupling `W(ω) = Δ(ω) ∓ iΓ(ω)/2` with cubic interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct PairCoupling {
    frequencies: Vec<f64>,
    gamma: Vec<f64>,
    delta: Vec<f64>,
    branch: Branch,
    re: CubicSpline,
    im: CubicSpline,
}

impl PairCoupling {
    /// Builds a coupling from samples on a uniform grid.
    pub fn from_samples(frequencies: Vec<f64>, gamma: Vec<f64>, delta: Vec<f64>, branch: Branch) -> Result<Self> {
        if gamma.len() != frequencies.len() || delta.len() != frequencies.len() {
            return Err(Error::invalid("coupling samples do not match the frequency grid"));
        }
        let h = uniform_spacing(&frequencies)?;
        if gamma.iter().chain(&delta).any(|v| !v.is_finite()) {
            return Err(Error::invalid("coupling samples must be finite (crop NaN padding first)"));
        }
        let s = branch.sign();
        let re = CubicSpline::new(frequencies[0], h, delta.clone());
        let im = CubicSpline::new(frequencies[0], h, gamma.iter().map(|g| s * g / 2.0).collect());
        Ok(PairCoupling {
            frequencies,
            gamma,
            delta,
            branch,
            re,
            im,
        })
    }

    /// Frequency-independent coupling `w` over `[lo, hi]` (retarded branch).
    pub fn constant(lo: f64, hi: f64, w: Complex64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid("constant coupling needs lo < hi"));
        }
        let f = vec![lo, 0.5 * (lo + hi), hi];
        PairCoupling::from_samples(f, vec![-2.0 * w.im; 3], vec![w.re; 3], Branch::Retarded)
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn band(&self) -> (f64, f64) {
        (self.re.lo(), self.re.hi())
    }

    fn check(&self, omega: f64) -> Result<()> {
        let (lo, hi) = self.band();
        if !(omega >= lo && omega <= hi) {
            return Err(Error::OutOfBand { frequency: omega, lo, hi });
        }
        Ok(())
    }

    /// Interpolated `W(ω)`.
    pub fn eval(&self, omega: f64) -> Result<Complex64> {
        self.check(omega)?;
        Ok(Complex64::new(self.re.eval(omega).0, self.im.eval(omega).0))
    }

    /// `W(ω)` and `dW/dω`.
    pub fn eval_with_slope(&self, omega: f64) -> Result<(Complex64, Complex64)> {
        self.check(omega)?;
        let (r, dr) = self.re.eval(omega);
        let (i, di) = self.im.eval(omega);
        Ok((Complex64::new(r, i), Complex64::new(dr, di)))
    }
}

/// Combines a decay spectrum and its transform into a tabulated coupling.
///
/// `delta` must come from [`crate::hilbert::kramers_kronig`] applied to the
/// samples of `gamma`; the coupling is tabulated at those midpoints.
pub fn coupling_w(delta: &DeltaSpectrum, gamma: &GammaSpectrum) -> Result<PairCoupling> {
    if delta.pair != gamma.pair {
        return Err(Error::invalid(format!(
            "pair mismatch: delta {:?}, gamma {:?}",
            delta.pair, gamma.pair
        )));
    }
    let n = delta.frequencies.len();
    let f = &gamma.frequencies;
    let first = delta.first_sample;
    if n < 2 || first + n >= f.len() {
        return Err(Error::invalid("frequency grid mismatch between delta and gamma"));
    }
    let h = uniform_spacing(f)?;
    let mut g = Vec::with_capacity(n);
    for (k, &m) in delta.frequencies.iter().enumerate() {
        let (lo, hi) = (f[first + k], f[first + k + 1]);
        if (m - 0.5 * (lo + hi)).abs() > 1e-9 * h {
            return Err(Error::invalid("frequency grid mismatch between delta and gamma"));
        }
        g.push(0.5 * (gamma.gamma[first + k] + gamma.gamma[first + k + 1]));
    }
    PairCoupling::from_samples(delta.frequencies.clone(), g, delta.delta.clone(), Branch::Retarded)
}

/// The four couplings `W_AA, W_AB, W_BA, W_BB`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingFunction {
    pub aa: PairCoupling,
    pub ab: PairCoupling,
    pub ba: PairCoupling,
    pub bb: PairCoupling,
}

impl CouplingFunction {
    pub fn new(aa: PairCoupling, ab: PairCoupling, ba: PairCoupling, bb: PairCoupling) -> Result<Self> {
        let w = CouplingFunction { aa, ab, ba, bb };
        let branch = w.aa.branch;
        if [&w.ab, &w.ba, &w.bb].iter().any(|p| p.branch != branch) {
            return Err(Error::invalid("couplings mix retarded and advanced branches"));
        }
        for p in [&w.aa, &w.bb] {
            let scale = p.gamma.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if p.gamma.iter().any(|&g| g < -1e-9 * scale) {
                return Err(Error::invalid("local decay spectrum must be non-negative"));
            }
        }
        let (lo, hi) = w.band();
        if !(lo < hi) {
            return Err(Error::invalid("coupling tables share no frequency band"));
        }
        Ok(w)
    }

    /// Symmetric pair with frequency-independent entries.
    pub fn constant(lo: f64, hi: f64, w_ii: Complex64, w_ij: Complex64) -> Result<Self> {
        let local = PairCoupling::constant(lo, hi, w_ii)?;
        let cross = PairCoupling::constant(lo, hi, w_ij)?;
        CouplingFunction::new(local.clone(), cross.clone(), cross, local)
    }

    /// Common band of the four tables.
    pub fn band(&self) -> (f64, f64) {
        [&self.aa, &self.ab, &self.ba, &self.bb]
            .iter()
            .map(|p| p.band())
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), (l, h)| (lo.max(l), hi.min(h)))
    }

    /// Exchanges the roles of the two atoms.
    pub fn swapped(&self) -> Self {
        CouplingFunction {
            aa: self.bb.clone(),
            ab: self.ba.clone(),
            ba: self.ab.clone(),
            bb: self.aa.clone(),
        }
    }

    fn check(&self, omega: f64) -> Result<()> {
        let (lo, hi) = self.band();
        if !(omega >= lo && omega <= hi) {
            return Err(Error::OutOfBand { frequency: omega, lo, hi });
        }
        Ok(())
    }

    /// Atomic energies plus edge-averaged couplings.
    fn edge_matrix(&self, atoms: (&AtomSpec, &AtomSpec)) -> Result<[Complex64; 4]> {
        let (lo, hi) = self.band();
        let mean = |p: &PairCoupling| -> Result<Complex64> { Ok(0.5 * (p.eval(lo)? + p.eval(hi)?)) };
        Ok([
            atoms.0.transition_frequency + mean(&self.aa)?,
            mean(&self.ab)?,
            mean(&self.ba)?,
            atoms.1.transition_frequency + mean(&self.bb)?,
        ])
    }

    /// Values and slopes of all four entries at `ω`.
    fn at(&self, omega: f64) -> Result<[(Complex64, Complex64); 4]> {
        self.check(omega)?;
        Ok([
            self.aa.eval_with_slope(omega)?,
            self.ab.eval_with_slope(omega)?,
            self.ba.eval_with_slope(omega)?,
            self.bb.eval_with_slope(omega)?,
        ])
    }

    /// Markov matrix: local terms at each atom's frequency, cross terms at the mean.
    fn markov_matrix(&self, atoms: (&AtomSpec, &AtomSpec)) -> Result<[Complex64; 4]> {
        let (wa, wb) = (atoms.0.transition_frequency, atoms.1.transition_frequency);
        let mid = 0.5 * (wa + wb);
        self.check(wa)?;
        self.check(wb)?;
        Ok([
            wa + self.aa.eval(wa)?,
            self.ab.eval(mid)?,
            self.ba.eval(mid)?,
            wb + self.bb.eval(wb)?,
        ])
    }
}

/// `Ξ(z) = [z - ω_A - W_AA][z - ω_B - W_BB] - W_AB W_BA`, with `W` at `Re z`.
pub fn xi(z: Complex64, atoms: (&AtomSpec, &AtomSpec), w: &CouplingFunction) -> Result<Complex64> {
    Ok(xi_with_gradient(z, atoms, w)?.0)
}

/// `Ξ` with its partial derivatives along `Re z` and `Im z`.
fn xi_with_gradient(
    z: Complex64,
    atoms: (&AtomSpec, &AtomSpec),
    w: &CouplingFunction,
) -> Result<(Complex64, Complex64, Complex64)> {
    let [(waa, daa), (wab, dab), (wba, dba), (wbb, dbb)] = w.at(z.re)?;
    let a = z - atoms.0.transition_frequency - waa;
    let b = z - atoms.1.transition_frequency - wbb;
    let value = a * b - wab * wba;
    let d_re = (1.0 - daa) * b + a * (1.0 - dbb) - (dab * wba + wab * dba);
    let d_im = Complex64::i() * (a + b);
    Ok((value, d_re, d_im))
}

/// Rectangle in the complex energy plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl SearchBox {
    /// Box around the Markov estimates, clipped to the tabulated band. It
    /// reaches above the real axis so that undamped roots lie inside.
    pub fn around(atoms: (&AtomSpec, &AtomSpec), w: &CouplingFunction) -> Result<Self> {
        let seeds = eigenvalues(w.markov_matrix(atoms)?);
        let (wa, wb) = (atoms.0.transition_frequency, atoms.1.transition_frequency);
        let spread = seeds
            .iter()
            .map(|z| (z.re - wa).abs().max((z.re - wb).abs()).max(z.im.abs()))
            .fold((wa - wb).abs(), f64::max)
            .max(1e-6 * wa.abs().max(wb.abs()));
        let re_lo = seeds.iter().map(|z| z.re).fold(wa.min(wb), f64::min) - 4.0 * spread;
        let re_hi = seeds.iter().map(|z| z.re).fold(wa.max(wb), f64::max) + 4.0 * spread;
        let im_lo = seeds.iter().map(|z| z.im).fold(0.0, f64::min) - 4.0 * spread;
        let (lo, hi) = w.band();
        Ok(SearchBox {
            re_min: re_lo.max(lo),
            re_max: re_hi.min(hi),
            im_min: im_lo,
            im_max: spread,
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = self.re_min < self.re_max
            && self.im_min < self.im_max
            && [self.re_min, self.re_max, self.im_min, self.im_max]
                .iter()
                .all(|v| v.is_finite());
        if !ok {
            return Err(Error::invalid(format!("degenerate search box {self:?}")));
        }
        Ok(())
    }

    fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }

    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }
}

/// Collective-state label of a root for identical transition frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleBranch {
    Symmetric,
    Antisymmetric,
    Unclassified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub re: f64,
    pub im: f64,
    pub branch: PoleBranch,
    /// `|Ξ(z)|` at the reported root; zero for closed-form poles.
    pub residual: f64,
}

impl Pole {
    pub fn z(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Roots of `Ξ`, listed with multiplicity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleSet {
    pub poles: Vec<Pole>,
}

impl PoleSet {
    pub fn roots(&self) -> Vec<Complex64> {
        self.poles.iter().map(Pole::z).collect()
    }

    pub fn get(&self, branch: PoleBranch) -> Option<&Pole> {
        self.poles.iter().find(|p| p.branch == branch)
    }
}

/// Closed-form roots for identical atoms with frequency-independent couplings.
pub fn markov_poles(omega0: f64, gamma_ii: f64, gamma_ij: f64, delta_ii: f64, delta_ij: f64) -> PoleSet {
    let pole = |s: f64, branch| Pole {
        re: omega0 + delta_ii + s * delta_ij,
        im: -(gamma_ii + s * gamma_ij) / 2.0,
        branch,
        residual: 0.0,
    };
    let (plus, minus) = if gamma_ij == 0.0 && delta_ij == 0.0 {
        (PoleBranch::Unclassified, PoleBranch::Unclassified)
    } else {
        (PoleBranch::Symmetric, PoleBranch::Antisymmetric)
    };
    PoleSet {
        poles: vec![pole(1.0, plus), pole(-1.0, minus)],
    }
}

/// Eigenvalues of the 2x2 matrix `[[m0, m1], [m2, m3]]`.
fn eigenvalues(m: [Complex64; 4]) -> [Complex64; 2] {
    let mean = 0.5 * (m[0] + m[3]);
    let half = 0.5 * (m[0] - m[3]);
    let root = (half * half + m[1] * m[2]).sqrt();
    [mean + root, mean - root]
}

struct Newton {
    root: Complex64,
    residual: f64,
}

fn newton(
    seed: Complex64,
    atoms: (&AtomSpec, &AtomSpec),
    w: &CouplingFunction,
    tol: f64,
) -> Result<Newton> {
    let mut z = seed;
    let (mut f, mut fx, mut fy) = xi_with_gradient(z, atoms, w)?;
    let mut converged_at = None;
    for it in 0..NEWTON_ITERATIONS {
        // real 2x2 Jacobian of (Re Ξ, Im Ξ) over (Re z, Im z)
        let (j00, j01, j10, j11) = (fx.re, fy.re, fx.im, fy.im);
        let det = j00 * j11 - j01 * j10;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = (j11 * f.re - j01 * f.im) / det;
        let dy = (-j10 * f.re + j00 * f.im) / det;
        let step = Complex64::new(dx, dy);
        let mut lambda = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let cand = z - lambda * step;
            if let Ok(g) = xi_with_gradient(cand, atoms, w) {
                if g.0.norm() < f.norm() || f.norm() <= tol {
                    next = Some((cand, g));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((cand, g)) = next else { break };
        let moved = (cand - z).norm();
        z = cand;
        (f, fx, fy) = g;
        if f.norm() <= tol {
            // polish until the update stalls at rounding level
            let done = converged_at.get_or_insert(it);
            if moved <= 4.0 * f64::EPSILON * z.norm() || it >= *done + 3 {
                return Ok(Newton { root: z, residual: f.norm() });
            }
        }
    }
    if f.norm() <= tol {
        return Ok(Newton { root: z, residual: f.norm() });
    }
    Err(Error::ConvergenceFailure {
        iterations: NEWTON_ITERATIONS,
        re: z.re,
        im: z.im,
        residual: f.norm(),
    })
}

/// Winding number of `Ξ` along a closed polygon.
fn winding(path: &[Complex64], atoms: (&AtomSpec, &AtomSpec), w: &CouplingFunction, floor: f64) -> Result<i64> {
    let eval = |z: Complex64| -> Result<Complex64> {
        let v = xi(z, atoms, w)?;
        if v.norm() <= floor {
            return Err(Error::invalid(format!(
                "secular function vanishes on the search contour near {z}; widen the box"
            )));
        }
        Ok(v)
    };
    let mut total = 0.0;
    for k in 0..path.len() {
        let (p, q) = (path[k], path[(k + 1) % path.len()]);
        let mut stack = vec![(p, q, eval(p)?, eval(q)?, 0u32)];
        while let Some((p, q, fp, fq, depth)) = stack.pop() {
            let turn = (fq / fp).arg();
            if turn.abs() < std::f64::consts::FRAC_PI_8 || depth >= 40 {
                total += turn;
            } else {
                let m = 0.5 * (p + q);
                let fm = eval(m)?;
                stack.push((m, q, fm, fq, depth + 1));
                stack.push((p, m, fp, fm, depth + 1));
            }
        }
    }
    Ok((total / std::f64::consts::TAU).round() as i64)
}

fn edge_path(corners: &[Complex64], per_edge: usize) -> Vec<Complex64> {
    let mut path = Vec::with_capacity(corners.len() * per_edge);
    for k in 0..corners.len() {
        let (p, q) = (corners[k], corners[(k + 1) % corners.len()]);
        for s in 0..per_edge {
            path.push(p + (q - p) * (s as f64 / per_edge as f64));
        }
    }
    path
}

fn circle(center: Complex64, radius: f64, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| center + Complex64::from_polar(radius, std::f64::consts::TAU * k as f64 / n as f64))
        .collect()
}

/// All roots of `Ξ` inside `search_box`.
///
/// Newton iterations start from the Markov estimates and then from a lattice
/// of points in the box until the number of distinct roots, counted with
/// their local winding, equals the winding number around the box.
pub fn find_poles(atoms: (&AtomSpec, &AtomSpec), w: &CouplingFunction, search_box: SearchBox) -> Result<PoleSet> {
    search_box.validate()?;
    let (lo, hi) = w.band();
    if search_box.re_min < lo || search_box.re_max > hi {
        let bad = if search_box.re_min < lo { search_box.re_min } else { search_box.re_max };
        return Err(Error::OutOfBand { frequency: bad, lo, hi });
    }
    let wa = atoms.0.transition_frequency;
    let scale2 = wa * wa;
    let tol = ROOT_TOLERANCE * scale2;
    let floor = 1e-14 * scale2;
    let expected = winding(&edge_path(&search_box.corners(), 32), atoms, w, floor)?;

    let size = (search_box.re_max - search_box.re_min).max(search_box.im_max - search_box.im_min);
    let same = 1e-7 * size;
    let mut seeds: Vec<Complex64> = eigenvalues(w.markov_matrix(atoms)?).to_vec();
    let grid = 6;
    for i in 0..grid {
        for j in 0..grid {
            let fx = (i as f64 + 0.5) / grid as f64;
            let fy = (j as f64 + 0.5) / grid as f64;
            seeds.push(Complex64::new(
                search_box.re_min + fx * (search_box.re_max - search_box.re_min),
                search_box.im_min + fy * (search_box.im_max - search_box.im_min),
            ));
        }
    }

    let mut roots: Vec<Newton> = Vec::new();
    let mut first_failure = None;
    for (k, seed) in seeds.iter().enumerate() {
        if roots.len() as i64 >= expected && k >= 2 {
            break;
        }
        let n = match newton(*seed, atoms, w, tol) {
            Ok(n) => n,
            Err(e @ Error::ConvergenceFailure { .. }) => {
                first_failure.get_or_insert(e);
                continue;
            }
            Err(Error::OutOfBand { .. }) => continue,
            Err(e) => return Err(e),
        };
        if search_box.contains(n.root) && roots.iter().all(|f| (f.root - n.root).norm() > same) {
            roots.push(n);
        }
    }
    // multiplicities from small circles clear of the other roots
    let mut found: Vec<(Newton, i64)> = Vec::new();
    let shortfall = (roots.len() as i64) < expected;
    for (i, n) in roots.iter().enumerate() {
        let mut mult = 1;
        if shortfall {
            let gap = roots
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, f)| (f.root - n.root).norm())
                .fold(1e-3 * size, f64::min);
            mult = winding(&circle(n.root, 0.25 * gap, 16), atoms, w, 0.0).unwrap_or(1).max(1);
        }
        found.push((Newton { root: n.root, residual: n.residual }, mult));
    }
    let counted: i64 = found.iter().map(|(_, m)| *m).sum();
    if counted != expected {
        if counted < expected {
            if let Some(e) = first_failure {
                return Err(e);
            }
        }
        return Err(Error::MissedRoot {
            expected,
            found: counted.max(0) as usize,
        });
    }

    let identical = (atoms.0.transition_frequency - atoms.1.transition_frequency).abs() <= 1e-12 * wa.abs();
    let mut poles = Vec::new();
    for (n, mult) in &found {
        let branch = if identical && *mult == 1 {
            classify(n.root, atoms, w)?
        } else {
            PoleBranch::Unclassified
        };
        for _ in 0..*mult {
            poles.push(Pole {
                re: n.root.re,
                im: n.root.im,
                branch,
                residual: n.residual,
            });
        }
    }
    poles.sort_by(|a, b| (a.branch as u8, a.re, a.im).partial_cmp(&(b.branch as u8, b.re, b.im)).unwrap());
    Ok(PoleSet { poles })
}

/// Sign of the amplitude ratio `b/a` of the null vector at the root.
fn classify(z: Complex64, atoms: (&AtomSpec, &AtomSpec), w: &CouplingFunction) -> Result<PoleBranch> {
    let waa = w.aa.eval(z.re)?;
    let wab = w.ab.eval(z.re)?;
    if wab.norm() == 0.0 {
        return Ok(PoleBranch::Unclassified);
    }
    let ratio = (z - atoms.0.transition_frequency - waa) / wab;
    Ok(if ratio.re > 0.0 {
        PoleBranch::Symmetric
    } else if ratio.re < 0.0 {
        PoleBranch::Antisymmetric
    } else {
        PoleBranch::Unclassified
    })
}

/// Atomic amplitudes with atom A excited at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeTrace {
    /// Times in units of the inverse frequency unit.
    pub times: Vec<f64>,
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
    /// `|a(0) - 1|` before normalization.
    pub coverage_deviation: f64,
}

impl AmplitudeTrace {
    pub fn population(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect()
    }
}

/// `(e^{-i z1 t} - e^{-i z2 t}) / (z1 - z2)`, stable for close arguments.
fn divided_exp(z1: Complex64, z2: Complex64, t: f64) -> Complex64 {
    let mean = 0.5 * (z1 + z2);
    let u = 0.5 * (z1 - z2) * t;
    let sinc = if u.norm() < 1e-3 {
        1.0 - u * u / 6.0 + u * u * u * u / 120.0
    } else {
        u.sin() / u
    };
    -Complex64::i() * t * (-Complex64::i() * mean * t).exp() * sinc
}

/// Time evolution from the excited state of atom A.
///
/// The resolvent is inverted along the line `ω + iη` above the real axis.
/// The two-pole resolvent of a constant coupling, equal to the mean of the
/// table values at the two band edges, is subtracted from the integrand and
/// added back in closed form. Only the remainder, which vanishes at the band
/// edges, is integrated numerically, so the result amounts to continuing
/// each coupling beyond the band at its edge value.
pub fn amplitudes(atoms: (&AtomSpec, &AtomSpec), w: &CouplingFunction, t_grid: &[f64]) -> Result<AmplitudeTrace> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::invalid("time grid must be non-empty and non-negative"));
    }
    let m = w.edge_matrix(atoms)?;
    let (p, q) = (m[0], m[3]);
    let cross = m[2];
    let [z1, z2] = eigenvalues(m);
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max);
    let (lo, hi) = w.band();
    let width = (-z1.im).max(0.0).min((-z2.im).max(0.0));
    // small enough for a first-order continuation of W, large enough that
    // e^{ηt} stays near 1
    let eta = if t_max > 0.0 { 0.1 / t_max } else { (hi - lo) * 1e-3 };
    let eta = eta.max(1e-6 * (hi - lo));
    let n = (((hi - lo) * POINTS_PER_WIDTH / (width + eta)).ceil() as usize).clamp(64, 4_000_000);
    let h = (hi - lo) / n as f64;
    let taper_len = 0.05 * (hi - lo);

    // integrand samples G - G_ref at ω + iη
    let mut da = Vec::with_capacity(n + 1);
    let mut db = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let omega = lo + k as f64 * h;
        let z = Complex64::new(omega, eta);
        // first-order continuation of the tables to ω + iη
        let lift = |p: &PairCoupling| -> Result<Complex64> {
            let (v, d) = p.eval_with_slope(omega)?;
            Ok(v + Complex64::i() * eta * d)
        };
        let (waa, wab, wba, wbb) = (lift(&w.aa)?, lift(&w.ab)?, lift(&w.ba)?, lift(&w.bb)?);
        let xa = z - atoms.0.transition_frequency - waa;
        let xb = z - atoms.1.transition_frequency - wbb;
        let det = xa * xb - wab * wba;
        let ref_det = (z - p) * (z - q) - m[1] * m[2];
        let g_aa = xb / det - (z - q) / ref_det;
        let g_ba = wba / det - cross / ref_det;
        let edge = (omega - lo).min(hi - omega);
        let taper = if edge >= taper_len {
            1.0
        } else {
            0.5 - 0.5 * (std::f64::consts::PI * edge / taper_len).cos()
        };
        let wq = if k == 0 || k == n { 0.5 } else { 1.0 };
        da.push(g_aa * (taper * wq * h));
        db.push(g_ba * (taper * wq * h));
    }

    let mut a = Vec::with_capacity(t_grid.len());
    let mut b = Vec::with_capacity(t_grid.len());
    let c = Complex64::i() / std::f64::consts::TAU;
    for &t in t_grid {
        // e^{-iωt} by recurrence from the band edge
        let rot = Complex64::from_polar(1.0, -h * t);
        let mut phase = Complex64::from_polar(1.0, -lo * t);
        let (mut sa, mut sb) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for k in 0..=n {
            if k % 256 == 0 {
                phase = Complex64::from_polar(1.0, -(lo + k as f64 * h) * t);
            }
            sa += da[k] * phase;
            sb += db[k] * phase;
            phase *= rot;
        }
        let grow = (eta * t).exp();
        let dd = divided_exp(z1, z2, t);
        let e1 = (-Complex64::i() * z1 * t).exp();
        let e2 = (-Complex64::i() * z2 * t).exp();
        let a_ref = (0.5 * (z1 + z2) - q) * dd + 0.5 * (e1 + e2);
        let b_ref = cross * dd;
        a.push(a_ref + c * grow * sa);
        b.push(b_ref + c * grow * sb);
    }

    // a(0) from the same quadrature
    let a0 = Complex64::new(1.0, 0.0) + c * da.iter().sum::<Complex64>();
    let deviation = (a0 - 1.0).norm();
    if deviation > COVERAGE_LIMIT {
        return Err(Error::BandCoverage { deviation });
    }
    a.iter_mut().chain(b.iter_mut()).for_each(|v| *v /= a0);
    Ok(AmplitudeTrace {
        times: t_grid.to_vec(),
        a,
        b,
        coverage_deviation: deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{kramers_kronig, BandWindow};
    use crate::oracles::lorentzian_pair;
    use crate::scene::DipoleLabel;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pair() -> (AtomSpec, AtomSpec) {
        (AtomSpec::unit(1.0), AtomSpec::unit(1.0))
    }

    #[test]
    fn constant_gamma_gives_pure_damping() {
        let p = PairCoupling::from_samples(vec![0.5, 1.0, 1.5], vec![0.2; 3], vec![0.0; 3], Branch::Retarded).unwrap();
        for om in [0.5, 0.77, 1.5] {
            assert_eq!(p.eval(om).unwrap(), c(0.0, -0.1));
        }
        assert!(matches!(p.eval(1.6), Err(Error::OutOfBand { .. })));
        let adv = PairCoupling::from_samples(vec![0.5, 1.0], vec![0.2; 2], vec![0.0; 2], Branch::Advanced).unwrap();
        assert_eq!(adv.eval(0.7).unwrap(), c(0.0, 0.1));
    }

    #[test]
    fn lorentzian_coupling_phase() {
        let (w0, g, amp) = (10.0, 0.2, 1.0);
        let freqs: Vec<f64> = (0..=2000).map(|k| 0.01 * k as f64).collect();
        let gamma = GammaSpectrum {
            gamma: freqs.iter().map(|&w| lorentzian_pair(w0, g, amp, w).0).collect(),
            frequencies: freqs,
            pair: (DipoleLabel::A, DipoleLabel::B),
        };
        let window = BandWindow::new(0.0, 20.0);
        let delta = kramers_kronig(&gamma, &window).unwrap();
        let p = coupling_w(&delta, &gamma).unwrap();
        let peak = p
            .frequencies()
            .iter()
            .map(|&w| (w, p.eval(w).unwrap().norm()))
            .fold((0.0, 0.0), |m, v| if v.1 > m.1 { v } else { m });
        assert!((peak.0 - w0).abs() < 0.011, "{peak:?}");
        let arg = |w: f64| p.eval(w).unwrap().arg();
        assert!((arg(w0) + std::f64::consts::FRAC_PI_2).abs() < 0.05);
        assert!(arg(w0 - 2.0) < -std::f64::consts::FRAC_PI_2 && arg(w0 + 2.0) > -std::f64::consts::FRAC_PI_2);
        let mut other = gamma.clone();
        other.frequencies[3] += 1e-3;
        assert!(coupling_w(&delta, &other).is_err());
    }

    #[test]
    fn xi_special_cases() {
        let (a, b) = (AtomSpec::unit(1.0), AtomSpec::unit(1.2));
        let zero = CouplingFunction::constant(0.5, 2.0, c(0.0, 0.0), c(0.0, 0.0)).unwrap();
        let z = c(1.1, -0.3);
        let v = xi(z, (&a, &b), &zero).unwrap();
        assert!((v - (z - 1.0) * (z - 1.2)).norm() < 1e-15);
        let local = c(0.01, -0.02);
        let w = CouplingFunction::constant(0.5, 2.0, local, c(0.0, 0.0)).unwrap();
        assert!(xi(1.0 + local, (&a, &b), &w).unwrap().norm() < 1e-15);
        assert!(matches!(xi(c(2.5, 0.0), (&a, &b), &w), Err(Error::OutOfBand { .. })));
    }

    #[test]
    fn markov_degenerate_and_dark() {
        let d = markov_poles(1.0, 0.1, 0.0, 0.0, 0.0);
        assert_eq!(d.roots(), vec![c(1.0, -0.05), c(1.0, -0.05)]);
        let dark = markov_poles(1.0, 0.1, 0.1, 0.0, 0.0);
        assert_eq!(dark.get(PoleBranch::Symmetric).unwrap().z(), c(1.0, -0.1));
        assert_eq!(dark.get(PoleBranch::Antisymmetric).unwrap().z(), c(1.0, 0.0));
    }

    #[test]
    fn uncoupled_roots_are_bare_energies() {
        let (a, b) = (AtomSpec::unit(1.0), AtomSpec::unit(1.1));
        let w = CouplingFunction::constant(0.5, 2.0, c(0.0, -0.01), c(0.0, 0.0)).unwrap();
        let bx = SearchBox::around((&a, &b), &w).unwrap();
        let poles = find_poles((&a, &b), &w, bx).unwrap();
        let mut r = poles.roots();
        r.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        assert!((r[0] - c(1.0, -0.01)).norm() < 1e-12 && (r[1] - c(1.1, -0.01)).norm() < 1e-12);
    }

    #[test]
    fn double_root_reported_twice() {
        let (a, b) = pair();
        let w = CouplingFunction::constant(0.5, 2.0, c(0.002, -0.01), c(0.0, 0.0)).unwrap();
        let bx = SearchBox::around((&a, &b), &w).unwrap();
        let poles = find_poles((&a, &b), &w, bx).unwrap();
        assert_eq!(poles.poles.len(), 2);
        for z in poles.roots() {
            assert!((z - c(1.002, -0.01)).norm() < 1e-6, "{z}");
        }
    }

    #[test]
    fn dark_state_root_on_axis() {
        let (a, b) = pair();
        let w = CouplingFunction::constant(0.5, 2.0, c(0.0, -0.05), c(0.0, -0.05)).unwrap();
        let bx = SearchBox::around((&a, &b), &w).unwrap();
        let poles = find_poles((&a, &b), &w, bx).unwrap();
        let dark = poles.get(PoleBranch::Antisymmetric).unwrap();
        assert!(dark.im.abs() < 1e-12 && (dark.re - 1.0).abs() < 1e-12);
        let bright = poles.get(PoleBranch::Symmetric).unwrap();
        assert!((bright.z() - c(1.0, -0.1)).norm() < 1e-12);
    }

    #[test]
    fn newton_failure_and_bad_box() {
        let (a, b) = pair();
        let w = CouplingFunction::constant(0.5, 2.0, c(0.0, -0.05), c(0.01, -0.02)).unwrap();
        let outside = SearchBox {
            re_min: 0.4,
            re_max: 1.5,
            im_min: -1.0,
            im_max: 0.1,
        };
        assert!(matches!(find_poles((&a, &b), &w, outside), Err(Error::OutOfBand { .. })));
        // box that excludes both roots: nothing expected, nothing reported
        let empty = SearchBox {
            re_min: 1.5,
            re_max: 1.9,
            im_min: -0.2,
            im_max: 0.1,
        };
        assert!(find_poles((&a, &b), &w, empty).unwrap().poles.is_empty());
    }

    #[test]
    fn free_evolution() {
        let (a, b) = (AtomSpec::unit(1.0), AtomSpec::unit(1.3));
        let w = CouplingFunction::constant(0.2, 2.0, c(0.0, 0.0), c(0.0, 0.0)).unwrap();
        let t: Vec<f64> = (0..50).map(|k| 0.7 * k as f64).collect();
        let tr = amplitudes((&a, &b), &w, &t).unwrap();
        for (k, &tk) in t.iter().enumerate() {
            assert!((tr.a[k] - Complex64::from_polar(1.0, -tk)).norm() < 1e-12);
            assert_eq!(tr.b[k].norm(), 0.0);
        }
    }

    #[test]
    fn markov_two_pole_inversion() {
        let (a, b) = pair();
        let (wii, wij) = (c(0.003, -0.01), c(0.004, -0.006));
        let w = CouplingFunction::constant(0.5, 1.5, wii, wij).unwrap();
        let t: Vec<f64> = (0..200).map(|k| 2.0 * k as f64).collect();
        let tr = amplitudes((&a, &b), &w, &t).unwrap();
        let (zp, zm) = (1.0 + wii + wij, 1.0 + wii - wij);
        for (k, &tk) in t.iter().enumerate() {
            let ep = (-Complex64::i() * zp * tk).exp();
            let em = (-Complex64::i() * zm * tk).exp();
            assert!((tr.a[k] - 0.5 * (ep + em)).norm() < 1e-6);
            assert!((tr.b[k] - 0.5 * (ep - em)).norm() < 1e-6);
        }
    }

    /// Single atom coupled to one lossy mode: `W(z) = g²/(z - ω_c + iκ/2)`
    /// makes the exact resolvent a two-pole function.
    #[test]
    fn lossy_mode_vacuum_rabi() {
        let (wc, kappa, g) = (1.0, 0.02, 0.01);
        let freqs: Vec<f64> = (0..=4000).map(|k| 0.5 + 2.5e-4 * k as f64).collect();
        let wl = |om: f64| g * g / c(om - wc, kappa / 2.0);
        let gamma: Vec<f64> = freqs.iter().map(|&om| -2.0 * wl(om).im).collect();
        let delta: Vec<f64> = freqs.iter().map(|&om| wl(om).re).collect();
        let local = PairCoupling::from_samples(freqs.clone(), gamma, delta, Branch::Retarded).unwrap();
        let none = PairCoupling::from_samples(freqs.clone(), vec![0.0; freqs.len()], vec![0.0; freqs.len()], Branch::Retarded).unwrap();
        let w = CouplingFunction::new(local, none.clone(), none.clone(), none).unwrap();
        let (a, b) = (AtomSpec::unit(wc), AtomSpec::unit(1.2));
        let t: Vec<f64> = (0..60).map(|k| 10.0 * k as f64).collect();
        let tr = amplitudes((&a, &b), &w, &t).unwrap();
        // (z - ωa)(z - ωc + iκ/2) = g²
        let [r1, r2] = eigenvalues([c(wc, 0.0), c(g, 0.0), c(g, 0.0), c(wc, -kappa / 2.0)]);
        for (k, &tk) in t.iter().enumerate() {
            let e = |r: Complex64| (-Complex64::i() * r * tk).exp();
            let exact = ((r1 - wc + c(0.0, kappa / 2.0)) * e(r1) - (r2 - wc + c(0.0, kappa / 2.0)) * e(r2)) / (r1 - r2);
            assert!((tr.a[k] - exact).norm() < 5e-4, "t={tk} {} {}", tr.a[k], exact);
        }
        let pop = tr.population();
        assert!(pop.windows(2).any(|p| p[1] > p[0] + 1e-3), "expected revivals");
    }

    #[test]
    fn narrow_band_rejected() {
        let (a, b) = pair();
        let freqs: Vec<f64> = (0..=100).map(|k| 0.99 + 2e-4 * k as f64).collect();
        let wl = |om: f64| 1e-3 / c(om - 1.0, 0.01);
        let local = PairCoupling::from_samples(
            freqs.clone(),
            freqs.iter().map(|&om| -2.0 * wl(om).im).collect(),
            freqs.iter().map(|&om| wl(om).re).collect(),
            Branch::Retarded,
        )
        .unwrap();
        let none = PairCoupling::constant(0.99, 1.01, c(0.0, 0.0)).unwrap();
        let w = CouplingFunction::new(local.clone(), none.clone(), none, local).unwrap();
        let t = [0.0, 10.0];
        assert!(matches!(amplitudes((&a, &b), &w, &t), Err(Error::BandCoverage { .. })));
    }
}
