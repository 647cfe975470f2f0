//! Cavity resonance frequency and quality factor from a power spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::BandWindow;
use crate::radiometry::PowerSpectrum;

/// Largest accepted relative RMS residual.
pub const MAX_RESIDUAL: f64 = 0.1;
/// Decay ratio above which the fitted Q is only a lower bound.
pub const TRUNCATION_FLAG: f64 = 1e-3;
/// Minimum prominence of a counted peak, relative to the window's range.
const PROMINENCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFit {
    pub omega_c: f64,
    pub q_factor: f64,
    pub peak_power: f64,
    pub background: f64,
    /// RMS residual over the peak height.
    pub fit_residual: f64,
    /// Set when the run stopped before the field decayed.
    pub q_lower_bound: bool,
}

/// `bg + pk / (1 + 4Q²(ω/ωc - 1)²)`.
fn model(p: &[f64; 4], w: f64) -> f64 {
    let u = 2.0 * p[3] * (w / p[2] - 1.0);
    p[0] + p[1] / (1.0 + u * u)
}

fn jacobian(p: &[f64; 4], w: f64) -> [f64; 4] {
    let (pk, wc, q) = (p[1], p[2], p[3]);
    let x = w / wc - 1.0;
    let u = 2.0 * q * x;
    let d = 1.0 + u * u;
    let g = -pk / (d * d) * 2.0 * u;
    [1.0, 1.0 / d, g * 2.0 * q * (-w / (wc * wc)), g * 2.0 * x]
}

/// Local maxima whose prominence exceeds `PROMINENCE` of the data range.
fn count_peaks(y: &[f64]) -> usize {
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    if !(range > 1e-12 * hi.abs().max(lo.abs())) {
        return 0;
    }
    let n = y.len();
    let mut count = 0;
    for i in 0..n {
        let left_ok = i == 0 || y[i] > y[i - 1];
        let right_ok = i == n - 1 || y[i] >= y[i + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        // lowest point on each side before higher ground
        let mut left_min = y[i];
        for &v in y[..i].iter().rev() {
            if v > y[i] {
                break;
            }
            left_min = left_min.min(v);
        }
        let mut right_min = y[i];
        for &v in &y[i + 1..] {
            if v > y[i] {
                break;
            }
            right_min = right_min.min(v);
        }
        // an edge sample counts only if the signal rises into it
        let base = match (i == 0, i == n - 1) {
            (true, _) => right_min,
            (_, true) => left_min,
            _ => left_min.max(right_min),
        };
        if y[i] - base >= PROMINENCE * range {
            count += 1;
        }
    }
    count
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for c in 0..4 {
        let p = (c..4).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())?;
        if a[p][c] == 0.0 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 4];
    for c in (0..4).rev() {
        let s: f64 = (c + 1..4).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    Some(x)
}

fn cost(p: &[f64; 4], w: &[f64], y: &[f64]) -> f64 {
    w.iter().zip(y).map(|(&wi, &yi)| (model(p, wi) - yi).powi(2)).sum()
}

/// Levenberg-Marquardt with multiplicative diagonal damping.
fn levenberg_marquardt(mut p: [f64; 4], w: &[f64], y: &[f64]) -> [f64; 4] {
    let mut lambda = 1e-3;
    let mut c = cost(&p, w, y);
    for _ in 0..200 {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&wi, &yi) in w.iter().zip(y) {
            let j = jacobian(&p, wi);
            let r = yi - model(&p, wi);
            for a in 0..4 {
                jtr[a] += j[a] * r;
                for b in 0..4 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(f64::MIN_POSITIVE);
            }
            let Some(d) = solve4(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + d[0], p[1] + d[1], p[2] + d[2], p[3] + d[3]];
            let tc = if trial[2] > 0.0 && trial[3] > 0.0 {
                cost(&trial, w, y)
            } else {
                f64::INFINITY
            };
            if tc < c {
                let rel = (c - tc) / c.max(f64::MIN_POSITIVE);
                p = trial;
                c = tc;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

/// Fits one Lorentzian plus a constant background inside `window`.
pub fn fit_resonance(power: &PowerSpectrum, window: &BandWindow) -> Result<ResonanceFit> {
    window.validate()?;
    if power.frequencies.len() != power.power.len() {
        return Err(Error::invalid("power spectrum arrays differ in length"));
    }
    let (w, y): (Vec<f64>, Vec<f64>) = power
        .frequencies
        .iter()
        .zip(&power.power)
        .filter(|(f, _)| **f >= window.lo && **f <= window.hi)
        .map(|(f, p)| (*f, *p))
        .unzip();
    if w.len() < 5 {
        return Err(Error::invalid(format!(
            "resonance window [{}, {}] holds {} samples; need at least 5",
            window.lo,
            window.hi,
            w.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("power spectrum has non-finite samples"));
    }
    let count = count_peaks(&y);
    if count != 1 {
        return Err(Error::AmbiguousPeak { count });
    }

    // starting point from the sampled peak and its half-maximum width
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("non-empty");
    let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let half = 0.5 * (ymax + ymin);
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if y[i] < half {
                let t = (y[prev] - half) / (y[prev] - y[i]);
                return Some(w[prev] + t * (w[i] - w[prev]));
            }
            prev = i;
        }
        None
    };
    let left = cross(&mut (0..imax).rev());
    let right = cross(&mut (imax + 1..w.len()));
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (w[imax] - l),
        (None, Some(r)) => 2.0 * (r - w[imax]),
        (None, None) => w[w.len() - 1] - w[0],
    };
    let h = (w[w.len() - 1] - w[0]) / (w.len() - 1) as f64;
    let q0 = w[imax] / fwhm.max(h);
    let p = levenberg_marquardt([ymin, ymax - ymin, w[imax], q0], &w, &y);

    let rms = (cost(&p, &w, &y) / w.len() as f64).sqrt();
    let residual = rms / p[1].abs().max(f64::MIN_POSITIVE);
    if !(residual <= MAX_RESIDUAL) || !(p[2] >= window.lo && p[2] <= window.hi) || !(p[1] > 0.0) {
        return Err(Error::PoorFit {
            residual,
            omega_c: p[2],
            q_factor: p[3],
        });
    }
    Ok(ResonanceFit {
        omega_c: p[2],
        q_factor: p[3],
        peak_power: p[1],
        background: p[0],
        fit_residual: residual,
        q_lower_bound: power.decay_ratio.is_some_and(|r| r > TRUNCATION_FLAG),
    })
}
