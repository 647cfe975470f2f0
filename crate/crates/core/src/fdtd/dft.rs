use num_complex::Complex64;

/// Running DFT `X(f) = Σ x(t_n) e^{+i2πf t_n} dt` of several real signals.
pub(crate) struct RunningDft {
    omegas: Vec<f64>,
    dt: f64,
    pub(crate) sums: Vec<Vec<Complex64>>,
}

impl RunningDft {
    pub(crate) fn new(frequencies: &[f64], signals: usize, dt: f64) -> Self {
        RunningDft {
            omegas: frequencies.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect(),
            dt,
            sums: vec![vec![Complex64::new(0.0, 0.0); frequencies.len()]; signals],
        }
    }

    /// Adds one sample of signal `which` taken at time `t`.
    pub(crate) fn add(&mut self, which: usize, t: f64, value: f64) {
        if value == 0.0 {
            return;
        }
        let w = value * self.dt;
        for (acc, &om) in self.sums[which].iter_mut().zip(&self.omegas) {
            let (s, c) = (om * t).sin_cos();
            acc.re += w * c;
            acc.im += w * s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_gaussian_transform() {
        // x(t) = exp(-t²/2), X(f) = √(2π) exp(-(2πf)²/2)
        let freqs = [0.0, 0.1, 0.25];
        let dt = 0.01;
        let mut dft = RunningDft::new(&freqs, 1, dt);
        for n in -2000..=2000 {
            let t = n as f64 * dt;
            dft.add(0, t, (-0.5 * t * t).exp());
        }
        for (f, x) in freqs.iter().zip(&dft.sums[0]) {
            let w = 2.0 * std::f64::consts::PI * f;
            let exact = (2.0 * std::f64::consts::PI).sqrt() * (-0.5 * w * w).exp();
            assert!((x.re - exact).abs() < 1e-10 && x.im.abs() < 1e-10);
        }
    }
}
