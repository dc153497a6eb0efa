use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

use crate::error::{ensure, Result};
use crate::scene::psf::TaylorWindow;
use crate::scene::SensorModel;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
}

fn plans(n: usize) -> (Arc<dyn Fft<f32>>, Arc<dyn Fft<f32>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Spectral weights that swap the native Taylor band for a narrower one,
/// including the `1/n` of the inverse transform.
fn band_filter(window: &TaylorWindow, n: usize, spacing: f64, native_res: f64, target_res: f64) -> Vec<f32> {
    let kappa = window.width_factor();
    let (b_nat, b_new) = (kappa / native_res, kappa / target_res);
    let df = 1.0 / (n as f64 * spacing);
    (0..n)
        .map(|k| {
            let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let f = signed * df;
            let w_nat = window.weight(f / b_nat);
            let ratio = if w_nat > 1e-12 { window.weight(f / b_new) / w_nat } else { 0.0 };
            (ratio / n as f64) as f32
        })
        .collect()
}

fn filter_rows(data: &mut [Complex32], width: usize, filter: &[f32]) {
    let (fwd, inv) = plans(width);
    let mut scratch = vec![Complex32::default(); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
    for row in data.chunks_exact_mut(width) {
        fwd.process_with_scratch(row, &mut scratch);
        for (z, &g) in row.iter_mut().zip(filter) {
            *z *= g;
        }
        inv.process_with_scratch(row, &mut scratch);
    }
}

fn transpose(data: &[Complex32], rows: usize, cols: usize) -> Vec<Complex32> {
    let mut out = vec![Complex32::default(); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Degrades the resolution of a coherent image rendered by `sensor` by
/// replacing its Taylor band with the band of the coarser target
/// resolution. Pixel spacing is unchanged. An axis whose target equals the
/// native resolution is left untouched.
pub fn resample_resolution(
    image: &[Complex32],
    sensor: &SensorModel,
    to_range_res: f64,
    to_cross_res: f64,
) -> Result<Vec<Complex32>> {
    let (h, w) = (sensor.image_height, sensor.image_width);
    ensure!(image.len() == h * w, "image has {} pixels, sensor expects {}", image.len(), h * w);
    ensure!(
        to_range_res.is_finite() && to_cross_res.is_finite(),
        "target resolution must be finite"
    );
    ensure!(
        to_range_res >= sensor.range_resolution && to_cross_res >= sensor.cross_range_resolution,
        "target resolution ({to_range_res}, {to_cross_res}) finer than native ({}, {})",
        sensor.range_resolution,
        sensor.cross_range_resolution
    );
    let window = sensor.taylor();
    let mut out = image.to_vec();
    if to_cross_res > sensor.cross_range_resolution {
        let g = band_filter(&window, w, sensor.cross_range_spacing, sensor.cross_range_resolution, to_cross_res);
        filter_rows(&mut out, w, &g);
    }
    if to_range_res > sensor.range_resolution {
        let g = band_filter(&window, h, sensor.range_spacing, sensor.range_resolution, to_range_res);
        let mut t = transpose(&out, h, w);
        filter_rows(&mut t, h, &g);
        out = transpose(&t, w, h);
    }
    Ok(out)
}
