use num_complex::{Complex32, Complex64};

use super::{compute_shadow_mask, ScattererTarget, SensorModel, TargetSignature, ViewGeometry};
use crate::error::Result;

/// Renders a target's complex signature and shadow mask.
///
/// `image(u, v) = Σ_k a_k e^{iφ_k} psf_r(y_u − y_k) psf_c(x_v − x_k)` with
/// positions taken after the azimuth rotation.
pub fn render_signature(
    target: &ScattererTarget,
    sensor: &SensorModel,
    geometry: &ViewGeometry,
) -> Result<TargetSignature> {
    target.validate()?;
    sensor.validate()?;
    geometry.validate()?;

    let (h, w) = (sensor.image_height, sensor.image_width);
    let range_psf = sensor.range_psf();
    let cross_psf = sensor.cross_range_psf();
    let rows: Vec<f64> = (0..h).map(|u| sensor.row_position(u)).collect();
    let cols: Vec<f64> = (0..w).map(|v| sensor.col_position(v)).collect();

    let mut acc = vec![Complex64::new(0.0, 0.0); h * w];
    let mut row_resp = vec![0.0f64; h];
    let mut col_resp = vec![Complex64::new(0.0, 0.0); w];
    for s in &target.scatterers {
        if s.amplitude == 0.0 {
            continue;
        }
        let (x, y) = geometry.project(s.x, s.y);
        let coef = Complex64::from_polar(s.amplitude, s.phase);
        for (r, &yu) in row_resp.iter_mut().zip(&rows) {
            *r = range_psf.eval(yu - y);
        }
        for (c, &xv) in col_resp.iter_mut().zip(&cols) {
            *c = coef * cross_psf.eval(xv - x);
        }
        for (u, &r) in row_resp.iter().enumerate() {
            let line = &mut acc[u * w..(u + 1) * w];
            for (px, c) in line.iter_mut().zip(&col_resp) {
                *px += c * r;
            }
        }
    }

    let image = acc
        .into_iter()
        .map(|z| Complex32::new(z.re as f32, z.im as f32))
        .collect();
    let shadow_mask = compute_shadow_mask(target, sensor, geometry, target.height_m)?;
    Ok(TargetSignature {
        image,
        shadow_mask,
        sensor: sensor.clone(),
        geometry: *geometry,
        class_label: target.class_label,
    })
}
