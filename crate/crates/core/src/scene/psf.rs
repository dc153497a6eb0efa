//! Taylor-weighted point spread function.
//!
//! The 1-D PSF is the inverse transform of a Taylor window spanning a band
//! of `B` cycles/m. Written in the spatial domain it is a short sum of
//! shifted sincs, `psf(t) = Σ_m F_|m| sinc(B·t − m)`, with `F_0 = 1`, so the
//! peak value is exactly 1 whatever the weighting.

use std::f64::consts::PI;

/// Continuous Taylor window on the normalized band `ξ ∈ [-1/2, 1/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorWindow {
    coeffs: Vec<f64>,
}

impl TaylorWindow {
    /// `sidelobe_db` is the peak sidelobe level; its sign is ignored.
    pub fn new(sidelobe_db: f64, nbar: u32) -> Self {
        if nbar < 2 {
            return Self { coeffs: Vec::new() };
        }
        let a = 10f64.powf(sidelobe_db.abs() / 20.0).acosh() / PI;
        let nb = nbar as f64;
        let sigma2 = nb * nb / (a * a + (nb - 0.5).powi(2));
        let coeffs = (1..nbar)
            .map(|m| {
                let m2 = (m * m) as f64;
                let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
                let num: f64 = (1..nbar)
                    .map(|n| 1.0 - m2 / (sigma2 * (a * a + (n as f64 - 0.5).powi(2))))
                    .product();
                let den: f64 = (1..nbar)
                    .filter(|&n| n != m)
                    .map(|n| 1.0 - m2 / (n * n) as f64)
                    .product();
                sign * num / (2.0 * den)
            })
            .collect();
        Self { coeffs }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Window weight at normalized frequency `xi`; zero outside the band.
    pub fn weight(&self, xi: f64) -> f64 {
        if xi.abs() > 0.5 {
            return 0.0;
        }
        1.0 + 2.0
            * self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, f)| f * (2.0 * PI * (i + 1) as f64 * xi).cos())
                .sum::<f64>()
    }

    /// Unit-band PSF value at `u` (in units of 1/B).
    pub fn psf_unit(&self, u: f64) -> f64 {
        let mut acc = sinc(u);
        for (i, f) in self.coeffs.iter().enumerate() {
            let m = (i + 1) as f64;
            acc += f * (sinc(u - m) + sinc(u + m));
        }
        acc
    }

    /// Full −3 dB width of the unit-band PSF.
    pub fn width_factor(&self) -> f64 {
        let target = std::f64::consts::FRAC_1_SQRT_2;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.psf_unit(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo + hi
    }
}

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-9 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// PSF along one image axis for a given −3 dB resolution.
#[derive(Debug, Clone)]
pub struct AxisPsf {
    window: TaylorWindow,
    band: f64,
}

impl AxisPsf {
    pub fn new(resolution_m: f64, window: TaylorWindow) -> Self {
        let band = window.width_factor() / resolution_m;
        Self { window, band }
    }

    /// Occupied band in cycles per meter.
    pub fn band(&self) -> f64 {
        self.band
    }

    pub fn eval(&self, offset_m: f64) -> f64 {
        self.window.psf_unit(self.band * offset_m)
    }

    pub fn window(&self) -> &TaylorWindow {
        &self.window
    }
}
