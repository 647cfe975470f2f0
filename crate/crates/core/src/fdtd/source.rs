use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spectral amplitude ratio that bounds the usable band of a waveform.
pub const CONDITIONING_FLOOR: f64 = 1e-3;

// FWHM of a Gaussian amplitude spectrum in units of its standard deviation.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

// Pulse centre offset in units of the temporal width.
const DELAY_WIDTHS: f64 = 6.0;

/// Gaussian-modulated sine pulse driving every dipole in phase.
///
/// `fractional_bandwidth` is the FWHM of the amplitude spectrum divided by
/// the centre frequency. Frequencies are cycles per unit time (`2πc/L`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceWaveform {
    pub center_frequency: f64,
    pub fractional_bandwidth: f64,
    pub amplitude: f64,
}

impl Default for SourceWaveform {
    fn default() -> Self {
        SourceWaveform {
            center_frequency: 1.0,
            fractional_bandwidth: 0.5,
            amplitude: 1.0,
        }
    }
}

impl SourceWaveform {
    pub fn new(center_frequency: f64, fractional_bandwidth: f64) -> Self {
        SourceWaveform {
            center_frequency,
            fractional_bandwidth,
            amplitude: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_frequency > 0.0 && self.center_frequency.is_finite()) {
            return Err(Error::invalid("source centre frequency must be positive"));
        }
        if !(self.fractional_bandwidth > 0.0 && self.fractional_bandwidth <= 2.0) {
            return Err(Error::invalid("fractional bandwidth must lie in (0, 2]"));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::invalid("source amplitude must be finite"));
        }
        Ok(())
    }

    /// Standard deviation of the amplitude spectrum.
    pub fn spectral_sigma(&self) -> f64 {
        self.fractional_bandwidth * self.center_frequency / FWHM_PER_SIGMA
    }

    /// Temporal width of the Gaussian envelope.
    pub fn temporal_width(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.spectral_sigma())
    }

    pub fn delay(&self) -> f64 {
        DELAY_WIDTHS * self.temporal_width()
    }

    /// Time after which the drive is switched off.
    pub fn duration(&self) -> f64 {
        2.0 * self.delay()
    }

    /// Instantaneous dipole moment rate `s(t)`.
    pub fn value(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.duration() {
            return 0.0;
        }
        let tau = self.temporal_width();
        let u = t - self.delay();
        self.amplitude
            * (-0.5 * u * u / (tau * tau)).exp()
            * (2.0 * std::f64::consts::PI * self.center_frequency * u).sin()
    }

    /// Band where the positive-frequency lobe stays above `CONDITIONING_FLOOR`
    /// of its peak.
    pub fn valid_band(&self) -> (f64, f64) {
        let half = self.spectral_sigma() * (2.0 * (1.0 / CONDITIONING_FLOOR).ln()).sqrt();
        let lo = (self.center_frequency - half).max(0.0);
        (lo, self.center_frequency + half)
    }

    /// Analytic spectral envelope relative to its peak, ignoring the
    /// negative-frequency image.
    pub fn relative_envelope(&self, f: f64) -> f64 {
        let s = self.spectral_sigma();
        let d = f - self.center_frequency;
        (-0.5 * d * d / (s * s)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_is_odd_about_delay() {
        let w = SourceWaveform::new(1.0, 0.5);
        let t0 = w.delay();
        for dt in [0.01, 0.3, 1.1, 2.0] {
            assert!((w.value(t0 + dt) + w.value(t0 - dt)).abs() < 1e-12);
        }
        assert_eq!(w.value(-1.0), 0.0);
        assert_eq!(w.value(w.duration() + 1.0), 0.0);
        assert!(w.value(0.0).abs() < 1e-7);
    }

    #[test]
    fn valid_band_edges_hit_floor() {
        let w = SourceWaveform::new(0.3133, 0.5);
        let (lo, hi) = w.valid_band();
        assert!(lo < 0.3133 && hi > 0.3133);
        assert!((w.relative_envelope(lo) - CONDITIONING_FLOOR).abs() < 1e-9);
        assert!((w.relative_envelope(hi) - CONDITIONING_FLOOR).abs() < 1e-9);
        // FWHM matches the fractional bandwidth
        let half = 0.25 * 0.3133;
        assert!((w.relative_envelope(0.3133 + half) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SourceWaveform::new(0.0, 0.5).validate().is_err());
        assert!(SourceWaveform::new(1.0, 0.0).validate().is_err());
        assert!(SourceWaveform::new(1.0, 0.5).validate().is_ok());
    }
}
