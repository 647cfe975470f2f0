//! Emission powers, cooperative power and normalized decay spectra from
//! recorded dipole-site spectra.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::{DftRecord, CONDITIONING_FLOOR};
use crate::scene::DipoleLabel;

/// Drive-normalized power on a frequency grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    /// End-of-run decay ratio of the producing run, when known.
    pub decay_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaSpectrum {
    pub frequencies: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Decay spectrum in units of `sqrt(alpha_i alpha_j)` times the frequency unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSpectrum {
    pub frequencies: Vec<f64>,
    pub gamma: Vec<f64>,
    pub pair: (DipoleLabel, DipoleLabel),
}

/// Two-level atom. `alpha = u² ω² / (3π)` in natural units, so the vacuum
/// decay rate at frequency `ω` is `alpha ω`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub transition_frequency: f64,
    pub dipole_magnitude: f64,
    pub alpha: f64,
}

impl AtomSpec {
    pub fn new(transition_frequency: f64, dipole_magnitude: f64) -> Result<Self> {
        if !(transition_frequency > 0.0 && transition_frequency.is_finite()) {
            return Err(Error::invalid("atomic transition frequency must be positive"));
        }
        if !(dipole_magnitude > 0.0 && dipole_magnitude.is_finite()) {
            return Err(Error::invalid("atomic dipole magnitude must be positive"));
        }
        Ok(AtomSpec {
            transition_frequency,
            dipole_magnitude,
            alpha: alpha_of(transition_frequency, dipole_magnitude),
        })
    }

    /// Atom whose `alpha` is 1, so spectra come out in units of `alpha`.
    pub fn unit(transition_frequency: f64) -> Self {
        let u = (3.0 * std::f64::consts::PI).sqrt() / transition_frequency;
        AtomSpec {
            transition_frequency,
            dipole_magnitude: u,
            alpha: 1.0,
        }
    }

    /// Checks `alpha` against its definition.
    pub fn validate(&self) -> Result<()> {
        let expected = alpha_of(self.transition_frequency, self.dipole_magnitude);
        if !(self.alpha > 0.0) || ((self.alpha - expected) / expected).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "atom alpha {} inconsistent with u and omega (expected {expected})",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Vacuum decay rate at frequency `omega`.
    pub fn vacuum_rate(&self, omega: f64) -> f64 {
        self.alpha * omega
    }
}

fn alpha_of(omega: f64, u: f64) -> f64 {
    u * u * omega * omega / (3.0 * std::f64::consts::PI)
}

fn check_grids(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("frequency grid mismatch in {what}")));
    }
    Ok(())
}

/// Power delivered by one dipole, `-½ Re[E J*] / |J|²`.
pub fn emission_power(record: &DftRecord, label: DipoleLabel) -> Result<PowerSpectrum> {
    let field = record
        .field(label)
        .ok_or_else(|| Error::invalid(format!("record has no dipole {label}")))?;
    let w = &record.metadata.waveform;
    let decay_ratio = Some(record.metadata.decay_ratio);
    if w.amplitude == 0.0 {
        return Ok(PowerSpectrum {
            frequencies: record.frequencies.clone(),
            power: vec![0.0; record.frequencies.len()],
            decay_ratio,
        });
    }
    // peak of the analytic pulse spectrum
    let peak = w.amplitude.abs() * w.temporal_width() * (2.0 * std::f64::consts::PI).sqrt() / 2.0;
    let bad: Vec<f64> = record
        .frequencies
        .iter()
        .zip(&record.source_spectrum)
        .filter(|(_, s)| !(s.norm() >= CONDITIONING_FLOOR * peak))
        .map(|(&f, _)| f)
        .collect();
    if !bad.is_empty() {
        return Err(Error::IllConditionedBand { frequencies: bad });
    }
    let power = field
        .iter()
        .zip(&record.source_spectrum)
        .map(|(e, s)| -0.5 * (e * s.conj()).re / s.norm_sqr())
        .collect();
    Ok(PowerSpectrum {
        frequencies: record.frequencies.clone(),
        power,
        decay_ratio,
    })
}

/// Sum of the partial powers of every dipole in the record.
pub fn total_power(record: &DftRecord) -> Result<PowerSpectrum> {
    let mut total: Option<PowerSpectrum> = None;
    for &label in &record.labels {
        let p = emission_power(record, label)?;
        total = Some(match total {
            None => p,
            Some(mut acc) => {
                acc.power.iter_mut().zip(&p.power).for_each(|(a, b)| *a += b);
                acc
            }
        });
    }
    total.ok_or_else(|| Error::invalid("record has no dipoles"))
}

/// `P_co = P_AB - P_A - P_B`.
pub fn cooperative_power(p_ab: &PowerSpectrum, p_a: &PowerSpectrum, p_b: &PowerSpectrum) -> Result<PowerSpectrum> {
    check_grids(&p_ab.frequencies, &p_a.frequencies, "cooperative power")?;
    check_grids(&p_ab.frequencies, &p_b.frequencies, "cooperative power")?;
    let power = p_ab
        .power
        .iter()
        .zip(&p_a.power)
        .zip(&p_b.power)
        .map(|((ab, a), b)| ab - a - b)
        .collect();
    let decay_ratio = [p_ab.decay_ratio, p_a.decay_ratio, p_b.decay_ratio]
        .into_iter()
        .flatten()
        .reduce(f64::max);
    Ok(PowerSpectrum {
        frequencies: p_ab.frequencies.clone(),
        power,
        decay_ratio,
    })
}

fn check_reference(p0: &PowerSpectrum) -> Result<()> {
    let bad: Vec<f64> = p0
        .frequencies
        .iter()
        .zip(&p0.power)
        .filter(|(_, p)| !(**p > 0.0))
        .map(|(&f, _)| f)
        .collect();
    if !bad.is_empty() {
        return Err(Error::InvalidReference { frequencies: bad });
    }
    Ok(())
}

/// `eta = P_co / (2 P0_vac)`.
pub fn eta(p_co: &PowerSpectrum, p0_vac: &PowerSpectrum) -> Result<EtaSpectrum> {
    check_grids(&p_co.frequencies, &p0_vac.frequencies, "eta")?;
    check_reference(p0_vac)?;
    Ok(EtaSpectrum {
        frequencies: p_co.frequencies.clone(),
        eta: p_co
            .power
            .iter()
            .zip(&p0_vac.power)
            .map(|(c, v)| c / (2.0 * v))
            .collect(),
    })
}

/// `Γ_ij(ω) = sqrt(α_i α_j) η(ω) ω`.
pub fn gamma_ij(eta: &EtaSpectrum, atoms: (&AtomSpec, &AtomSpec)) -> GammaSpectrum {
    let scale = atoms.0.alpha.sqrt() * atoms.1.alpha.sqrt();
    GammaSpectrum {
        frequencies: eta.frequencies.clone(),
        gamma: eta
            .frequencies
            .iter()
            .zip(&eta.eta)
            .map(|(w, e)| scale * e * w)
            .collect(),
        pair: (DipoleLabel::A, DipoleLabel::B),
    }
}

/// `Γ_ii(ω) = α_i ω P_i(ω) / P0_vac(ω)`.
pub fn gamma_local(
    p_i: &PowerSpectrum,
    p0_vac: &PowerSpectrum,
    atom: &AtomSpec,
    label: DipoleLabel,
) -> Result<GammaSpectrum> {
    check_grids(&p_i.frequencies, &p0_vac.frequencies, "local gamma")?;
    check_reference(p0_vac)?;
    Ok(GammaSpectrum {
        frequencies: p_i.frequencies.clone(),
        gamma: p_i
            .frequencies
            .iter()
            .zip(p_i.power.iter().zip(&p0_vac.power))
            .map(|(w, (p, v))| atom.alpha * w * p / v)
            .collect(),
        pair: (label, label),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(power: Vec<f64>) -> PowerSpectrum {
        PowerSpectrum {
            frequencies: (0..power.len()).map(|i| 1.0 + 0.1 * i as f64).collect(),
            power,
            decay_ratio: None,
        }
    }

    #[test]
    fn atom_alpha_roundtrip() {
        let a = AtomSpec::new(0.3133, 2.5).unwrap();
        a.validate().unwrap();
        assert!((a.alpha - 2.5f64.powi(2) * 0.3133f64.powi(2) / (3.0 * std::f64::consts::PI)).abs() < 1e-15);
        let u = AtomSpec::unit(0.7);
        u.validate().unwrap();
        assert!(AtomSpec::new(0.0, 1.0).is_err());
        let broken = AtomSpec { alpha: 2.0, ..a };
        assert!(broken.validate().is_err());
    }

    #[test]
    fn coincident_doubling_gives_unit_eta() {
        let p_a = spectrum(vec![1.0, 2.0, 3.0]);
        let p_ab = spectrum(vec![4.0, 8.0, 12.0]);
        let co = cooperative_power(&p_ab, &p_a, &p_a).unwrap();
        assert_eq!(co.power, vec![2.0, 4.0, 6.0]);
        let e = eta(&co, &p_a).unwrap();
        assert!(e.eta.iter().all(|&v| v == 1.0));
        let g = gamma_ij(&e, (&AtomSpec::unit(1.0), &AtomSpec::unit(1.0)));
        assert_eq!(g.gamma, e.frequencies);
    }

    #[test]
    fn grid_mismatch_and_bad_reference() {
        let p = spectrum(vec![1.0, 2.0]);
        let mut q = spectrum(vec![1.0, 2.0]);
        q.frequencies[1] += 1e-9;
        assert!(matches!(cooperative_power(&p, &q, &p), Err(Error::InvalidArgument(_))));
        let zero = spectrum(vec![1.0, 0.0]);
        match eta(&p, &zero) {
            Err(Error::InvalidReference { frequencies }) => assert_eq!(frequencies, vec![1.1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn null_eta_null_gamma() {
        let e = EtaSpectrum {
            frequencies: vec![0.5, 1.0],
            eta: vec![0.0, 0.0],
        };
        let g = gamma_ij(&e, (&AtomSpec::unit(1.0), &AtomSpec::new(1.0, 3.0).unwrap()));
        assert!(g.gamma.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn local_gamma_vacuum_law() {
        let p = spectrum(vec![0.3, 0.7, 1.1]);
        let atom = AtomSpec::unit(1.0);
        let g = gamma_local(&p, &p, &atom, DipoleLabel::A).unwrap();
        for (w, v) in g.frequencies.iter().zip(&g.gamma) {
            assert!((v - w).abs() < 1e-15);
        }
    }
}
