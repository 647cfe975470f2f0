//! Principal-value transform `Δ(ω) = (1/2π) PV∫ Γ(z) / (ω - z) dz` of a
//! sampled, band-limited decay spectrum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radiometry::GammaSpectrum;
use crate::scene::DipoleLabel;

/// Largest edge value allowed, relative to the in-band peak.
pub const EDGE_LIMIT: f64 = 0.01;

/// Integration band. Samples outside `[lo, hi]` are ignored; beyond each
/// edge the spectrum is continued by a straight line reaching zero after
/// `margin`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandWindow {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub margin: f64,
    /// Remove the straight line through the two edge values first.
    #[serde(default)]
    pub subtract_baseline: bool,
}

impl BandWindow {
    pub fn new(lo: f64, hi: f64) -> Self {
        BandWindow {
            lo,
            hi,
            margin: 0.0,
            subtract_baseline: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi && self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::invalid(format!("window [{}, {}] is empty", self.lo, self.hi)));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::invalid("window margin must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaSpectrum {
    /// Midpoints between consecutive input samples inside the window.
    pub frequencies: Vec<f64>,
    pub delta: Vec<f64>,
    pub pair: (DipoleLabel, DipoleLabel),
    pub window: BandWindow,
    /// First input sample used, so the midpoints can be mapped back.
    pub first_sample: usize,
}

impl DeltaSpectrum {
    /// Linear interpolation between midpoints; `None` outside their span.
    pub fn at(&self, omega: f64) -> Option<f64> {
        let f = &self.frequencies;
        if f.is_empty() || omega < f[0] || omega > f[f.len() - 1] {
            return None;
        }
        if f.len() == 1 {
            return Some(self.delta[0]);
        }
        let h = (f[f.len() - 1] - f[0]) / (f.len() - 1) as f64;
        let pos = ((omega - f[0]) / h).min((f.len() - 1) as f64);
        let i = (pos.floor() as usize).min(f.len() - 2);
        let t = pos - i as f64;
        Some(self.delta[i] * (1.0 - t) + self.delta[i + 1] * t)
    }
}

/// Checks that `freqs` is uniformly spaced and returns the spacing.
pub(crate) fn uniform_spacing(freqs: &[f64]) -> Result<f64> {
    if freqs.len() < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let h = (freqs[freqs.len() - 1] - freqs[0]) / (freqs.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(Error::invalid("frequency grid must be increasing"));
    }
    for (n, f) in freqs.iter().enumerate() {
        if (f - (freqs[0] + n as f64 * h)).abs() > 1e-9 * h.max(f.abs() * 1e-3) {
            return Err(Error::invalid(format!("frequency grid is not uniform at sample {n}")));
        }
    }
    Ok(h)
}

pub fn kramers_kronig(gamma: &GammaSpectrum, window: &BandWindow) -> Result<DeltaSpectrum> {
    window.validate()?;
    let h = uniform_spacing(&gamma.frequencies)?;
    let first = gamma.frequencies.iter().position(|&f| f >= window.lo - 1e-9 * h);
    let last = gamma.frequencies.iter().rposition(|&f| f <= window.hi + 1e-9 * h);
    let (first, last) = match (first, last) {
        (Some(a), Some(b)) if b >= a + 2 => (a, b),
        _ => return Err(Error::invalid("window holds fewer than three samples")),
    };
    if gamma.gamma[first..=last].iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("decay spectrum has non-finite samples in the window"));
    }
    let w = &gamma.frequencies[first..=last];
    let mut g: Vec<f64> = gamma.gamma[first..=last].to_vec();
    if window.subtract_baseline {
        let (g0, g1) = (g[0], g[g.len() - 1]);
        let span = w[w.len() - 1] - w[0];
        for (v, f) in g.iter_mut().zip(w) {
            *v -= g0 + (g1 - g0) * (f - w[0]) / span;
        }
    }
    let peak = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let out_freqs: Vec<f64> = w.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    if peak == 0.0 {
        return Ok(DeltaSpectrum {
            delta: vec![0.0; out_freqs.len()],
            frequencies: out_freqs,
            pair: gamma.pair,
            window: *window,
            first_sample: first,
        });
    }
    let (low, high) = (g[0].abs() / peak, g[g.len() - 1].abs() / peak);
    if low > EDGE_LIMIT || high > EDGE_LIMIT {
        return Err(Error::NonBandlimited {
            low,
            high,
            limit: EDGE_LIMIT,
        });
    }

    // linear tails to zero over the margin, on the same grid
    let tail = (window.margin / h).round() as usize;
    let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(g.len() + 2 * tail);
    for m in (1..=tail).rev() {
        let frac = 1.0 - m as f64 / (tail + 1) as f64;
        nodes.push((w[0] - m as f64 * h, g[0] * frac));
    }
    nodes.extend(w.iter().cloned().zip(g.iter().cloned()));
    let n_last = g.len() - 1;
    for m in 1..=tail {
        let frac = 1.0 - m as f64 / (tail + 1) as f64;
        nodes.push((w[n_last] + m as f64 * h, g[n_last] * frac));
    }

    let scale = h / (2.0 * std::f64::consts::PI);
    let delta = out_freqs
        .par_iter()
        .map(|&x| {
            // fixed summation order per row
            let s: f64 = nodes.iter().map(|&(z, v)| v / (x - z)).sum();
            scale * s
        })
        .collect();
    Ok(DeltaSpectrum {
        frequencies: out_freqs,
        delta,
        pair: gamma.pair,
        window: *window,
        first_sample: first,
    })
}
