/// Quarter-power-magnitude display scaling to 8 bits:
/// `round(255 · (p / p_max)^{1/4})`, rounding halves up.
pub fn qpm_scale(magnitude: &[f32]) -> Vec<u8> {
    let peak = magnitude.iter().fold(0.0f32, |m, &v| m.max(v)) as f64;
    if !(peak > 0.0) {
        return vec![0; magnitude.len()];
    }
    magnitude
        .iter()
        .map(|&m| {
            // (p / p_max)^{1/4} == sqrt(m / m_max)
            let ratio = (m.max(0.0) as f64 / peak).min(1.0);
            (255.0 * ratio.sqrt() + 0.5).floor() as u8
        })
        .collect()
}
