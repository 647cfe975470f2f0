//! Natural cubic spline on a uniform grid.

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct CubicSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    /// `y` sampled at `x0 + n h`; at least two knots.
    pub(crate) fn new(x0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        assert!(n >= 2 && h > 0.0);
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system (1, 4, 1) m = 6 Δ²y / h², natural ends
            let k = n - 2;
            let mut diag = vec![4.0; k];
            let mut rhs: Vec<f64> = (1..n - 1)
                .map(|i| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h))
                .collect();
            for i in 1..k {
                let w = 1.0 / diag[i - 1];
                diag[i] -= w;
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - m[i + 2]) / diag[i];
            }
        }
        CubicSpline { x0, h, y, m }
    }

    pub(crate) fn lo(&self) -> f64 {
        self.x0
    }

    pub(crate) fn hi(&self) -> f64 {
        self.x0 + self.h * (self.y.len() - 1) as f64
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let pos = ((x - self.x0) / self.h).clamp(0.0, (self.y.len() - 1) as f64);
        let i = (pos.floor() as usize).min(self.y.len() - 2);
        (i, pos - i as f64)
    }

    /// Value and first derivative; arguments are clamped to the knot span.
    pub(crate) fn eval(&self, x: f64) -> (f64, f64) {
        let (i, t) = self.locate(x);
        let h = self.h;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        let u = 1.0 - t;
        let value = u * y0 + t * y1 + h * h / 6.0 * ((u * u * u - u) * m0 + (t * t * t - t) * m1);
        let slope = (y1 - y0) / h + h / 6.0 * ((1.0 - 3.0 * u * u) * m0 + (3.0 * t * t - 1.0) * m1);
        (value, slope)
    }
}
