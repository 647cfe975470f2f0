//! Closed-form cooperative decay rates for free space and an ideal
//! parallel-plate cavity, and an analytic Lorentzian dispersion pair.
//!
//! Frequencies are ordinary frequencies in units of `c / length`, so the
//! wavelength is `1 / omega` and the phase `x = 2π omega R`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bessel function of the first kind, order zero.
///
/// Miller backward recurrence normalized by `J0 + 2 Σ J_2k = 1`; accurate to
/// a few ulps of the largest term for the arguments used here.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        return 1.0;
    }
    if x < 1e-4 {
        return 1.0 - 0.25 * x * x;
    }
    let mut start = (x + 25.0 + 12.0 * x.cbrt()) as usize;
    start += start % 2;
    let (mut next, mut cur) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    let mut j0 = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        // cur now holds J_{k-1}
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * cur;
        }
        if k == 1 {
            j0 = cur;
        }
        if cur.abs() > 1e250 {
            next *= 1e-250;
            cur *= 1e-250;
            norm *= 1e-250;
        }
    }
    j0 / (norm + j0)
}

// Below this the closed form loses digits to cancellation.
const SERIES_BELOW: f64 = 0.1;

/// Bracket `sin x/x + cos x/x² - sin x/x³`, with its series near zero.
fn vacuum_bracket(x: f64) -> f64 {
    if x.abs() < SERIES_BELOW {
        let x2 = x * x;
        return 2.0 / 3.0 - x2 * (2.0 / 15.0 - x2 * (1.0 / 140.0 - x2 * (1.0 / 5670.0 - x2 / 399_168.0)));
    }
    let (s, c) = x.sin_cos();
    s / x + c / (x * x) - s / (x * x * x)
}

/// Free-space cooperative decay rate of two parallel dipoles at distance `r`
/// perpendicular to their axis.
///
/// `gamma0` is the single-atom vacuum rate at `omega`; the result equals it at `r = 0`.
pub fn vacuum_gamma(r: f64, omega: f64, gamma0: f64) -> f64 {
    1.5 * gamma0 * vacuum_bracket(2.0 * PI * omega * r)
}

/// Two dipoles perpendicular to ideal conducting plates at `z = 0` and `z = L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarConfig {
    pub plate_gap: f64,
    pub z1: f64,
    pub z2: f64,
    /// In-plane separation.
    pub separation: f64,
    pub wavelength: f64,
}

impl PlanarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) {
            return Err(Error::invalid("wavelength must be positive"));
        }
        if !(self.plate_gap > 0.0) {
            return Err(Error::invalid("plate gap must be positive"));
        }
        let inside = |z: f64| z > 0.0 && z < self.plate_gap;
        if !inside(self.z1) || !inside(self.z2) {
            return Err(Error::invalid("dipole heights must lie strictly between the plates"));
        }
        if !(self.separation >= 0.0) {
            return Err(Error::invalid("separation must be non-negative"));
        }
        Ok(())
    }

    /// Number of guided TM orders above cutoff, `⌊2L/λ⌋`.
    fn orders(&self) -> usize {
        (2.0 * self.plate_gap / self.wavelength).floor() as usize
    }
}

/// Cooperative decay rate between the plates, `gamma0` being the free-space rate.
pub fn planar_gamma(cfg: &PlanarConfig, gamma0: f64) -> Result<f64> {
    cfg.validate()?;
    let (l, lam, r) = (cfg.plate_gap, cfg.wavelength, cfg.separation);
    let mut sum = bessel_j0(2.0 * PI * r / lam);
    for n in 1..=cfg.orders() {
        let nf = n as f64;
        let q = nf * lam / (2.0 * l);
        let weight = 2.0 * (1.0 - q * q) * (nf * PI * cfg.z1 / l).cos() * (nf * PI * cfg.z2 / l).cos();
        let kr = (1.0 / (lam * lam) - (nf / (2.0 * l)).powi(2)).max(0.0).sqrt();
        sum += weight * bessel_j0(2.0 * PI * r * kr);
    }
    Ok(gamma0 * 3.0 * lam / (8.0 * PI * l) * 2.0 * PI * sum)
}

/// Decay rate of one dipole on the midplane, perpendicular to the plates.
pub fn planar_gamma_z(plate_gap: f64, wavelength: f64, gamma0: f64) -> f64 {
    let orders = (2.0 * plate_gap / wavelength).floor() as usize;
    let mut sum = 1.0;
    for n in 1..=orders {
        let q = n as f64 * wavelength / (2.0 * plate_gap);
        sum += 2.0 * (1.0 - q * q) * (n as f64 * PI / 2.0).cos().powi(2);
    }
    gamma0 * 3.0 * wavelength / (4.0 * plate_gap) * sum
}

/// Lorentzian `Γ(ω) = A γ² / ((ω-ω0)² + γ²)` and its transform
/// `Δ(ω) = (1/2π) PV∫ Γ(z) / (ω - z) dz` over the whole line.
pub fn lorentzian_pair(center: f64, halfwidth: f64, peak: f64, omega: f64) -> (f64, f64) {
    let d = omega - center;
    let den = d * d + halfwidth * halfwidth;
    (
        peak * halfwidth * halfwidth / den,
        0.5 * peak * halfwidth * d / den,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn j0_quadrature(x: f64) -> f64 {
        // trapezoid on a periodic integrand converges geometrically
        let n = 4096;
        (0..n)
            .map(|k| (x * (2.0 * PI * k as f64 / n as f64).cos()).cos())
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn j0_reference_values() {
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j0(10.0) + 0.245_935_764_451_348_3).abs() < 1e-14);
        assert_eq!(bessel_j0(0.0), 1.0);
        assert!((bessel_j0(2.404_825_557_695_773) ).abs() < 1e-14);
    }

    #[test]
    fn j0_matches_angular_quadrature() {
        for i in 0..200 {
            let x = 0.05 * i as f64 + 1e-3;
            assert!((bessel_j0(x) - j0_quadrature(x)).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn vacuum_spot_values() {
        assert!((vacuum_gamma(0.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((vacuum_gamma(0.5, 1.0, 1.0) + 3.0 / (2.0 * PI * PI)).abs() < 1e-12);
        assert!((vacuum_gamma(0.5, 1.0, 1.0) + 0.15198).abs() < 1e-5);
        assert!((vacuum_gamma(1.0, 1.0, 1.0) - 3.0 / (8.0 * PI * PI)).abs() < 1e-12);
        assert!((vacuum_gamma(1.0, 1.0, 1.0) - 0.03799).abs() < 1e-5);
    }

    #[test]
    fn vacuum_series_is_continuous() {
        // closed form at R = 1e-6 λ evaluated with 60 significant digits
        let reference = 0.666_666_666_661_402_877_652_763_5;
        let series = vacuum_bracket(2.0 * PI * 1e-6);
        assert!(((series - reference) / reference).abs() < 1e-8);
        // both branches agree where they meet, in value and slope
        let (a, b) = (SERIES_BELOW * (1.0 - 1e-13), SERIES_BELOW * (1.0 + 1e-13));
        assert!((vacuum_bracket(a) - vacuum_bracket(b)).abs() < 1e-12);
        let slope = |x: f64| (vacuum_bracket(x + 1e-3) - vacuum_bracket(x - 1e-3)) / 2e-3;
        let exact = |x: f64| -4.0 * x / 15.0 + 4.0 * x.powi(3) / 140.0;
        for x in [0.09, 0.11] {
            assert!((slope(x) - exact(x)).abs() < 1e-7);
        }
    }

    #[test]
    fn gamma_z_spot_values() {
        assert!((planar_gamma_z(0.7, 1.0, 1.0) - 15.0 / 14.0).abs() < 1e-12);
        assert!((planar_gamma_z(1.2, 1.0, 1.0) - 0.625 * (1.0 + 11.0 / 18.0)).abs() < 1e-12);
        assert!((planar_gamma_z(1.2, 1.0, 1.0) - 1.0069).abs() < 1e-4);
        assert!((planar_gamma_z(0.4, 1.0, 1.0) - 1.875).abs() < 1e-12);
    }

    #[test]
    fn planar_rejects_bad_config() {
        let cfg = PlanarConfig {
            plate_gap: 0.7,
            z1: 0.35,
            z2: 0.35,
            separation: 0.1,
            wavelength: 0.0,
        };
        assert!(planar_gamma(&cfg, 1.0).is_err());
        let cfg = PlanarConfig {
            wavelength: 1.0,
            z1: 0.7,
            ..cfg
        };
        assert!(planar_gamma(&cfg, 1.0).is_err());
    }

    #[test]
    fn midplane_odd_orders_vanish() {
        // L = 0.7: only n = 1 guided, and it drops out at the midplane
        let base = PlanarConfig {
            plate_gap: 0.7,
            z1: 0.35,
            z2: 0.35,
            separation: 0.3,
            wavelength: 1.0,
        };
        let only_tem = 3.0 / (8.0 * PI * 0.7) * 2.0 * PI * bessel_j0(2.0 * PI * 0.3);
        assert!((planar_gamma(&base, 1.0).unwrap() - only_tem).abs() < 1e-14);
    }

    #[test]
    fn wide_plates_decay_like_free_space() {
        // envelope of |Γ| over R in [3, 6] shrinks as the rate saturates toward free space
        let env = |l: f64| {
            (0..300)
                .map(|i| {
                    let cfg = PlanarConfig {
                        plate_gap: l,
                        z1: l / 2.0,
                        z2: l / 2.0,
                        separation: 3.0 + 0.01 * i as f64,
                        wavelength: 1.0,
                    };
                    planar_gamma(&cfg, 1.0).unwrap().abs()
                })
                .fold(0.0, f64::max)
        };
        let (a, b, c) = (env(0.7), env(2.7), env(6.7));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn lorentzian_spot_values() {
        let (g, d) = lorentzian_pair(10.0, 0.5, 2.0, 10.0);
        assert_eq!((g, d), (2.0, 0.0));
        let (_, d) = lorentzian_pair(10.0, 0.5, 2.0, 10.5);
        assert!((d - 0.5).abs() < 1e-15);
        let (_, d) = lorentzian_pair(10.0, 0.5, 2.0, 9.5);
        assert!((d + 0.5).abs() < 1e-15);
    }

    #[test]
    fn lorentzian_transform_by_quadrature() {
        // PV∫ Γ(z)/(ω-z) dz = ∫_0^∞ [Γ(ω-u) - Γ(ω+u)]/u du, with u = γ tan φ
        let (w0, g, a) = (3.0, 0.2, 1.5);
        let omega = w0 + g;
        let n = 200_000;
        let h = (PI / 2.0) / n as f64;
        let mut sum = 0.0;
        for k in 0..n {
            let phi = (k as f64 + 0.5) * h;
            let u = g * phi.tan();
            let du = g / phi.cos().powi(2);
            let diff = lorentzian_pair(w0, g, a, omega - u).0 - lorentzian_pair(w0, g, a, omega + u).0;
            sum += diff / u * du * h;
        }
        let delta = sum / (2.0 * PI);
        assert!((delta - a / 4.0).abs() < 1e-8, "{delta}");
    }

    proptest! {
        #[test]
        fn planar_reduces_to_gamma_z(l in 0.2f64..4.0, lam in 0.3f64..2.0) {
            let cfg = PlanarConfig { plate_gap: l, z1: l / 2.0, z2: l / 2.0, separation: 0.0, wavelength: lam };
            let full = planar_gamma(&cfg, 1.0).unwrap();
            let z = planar_gamma_z(l, lam, 1.0);
            prop_assert!(((full - z) / z).abs() < 1e-10);
        }

        #[test]
        fn vacuum_even_in_separation(r in 0.0f64..5.0, w in 0.1f64..3.0) {
            prop_assert_eq!(vacuum_gamma(r, w, 1.0), vacuum_gamma(-r, w, 1.0));
        }
    }
}
