use super::{ScattererTarget, SensorModel, ViewGeometry};
use crate::error::{ensure, Result};

/// Shadow length in range pixels for a target of `height_m` seen at
/// `depression_deg`: `ceil(height / tan(depression) / range_spacing)`.
pub fn shadow_length_px(height_m: f64, depression_deg: f64, range_spacing: f64) -> usize {
    if height_m <= 0.0 || depression_deg >= 90.0 {
        return 0;
    }
    let (s, c) = depression_deg.to_radians().sin_cos();
    let len = height_m * c / s / range_spacing;
    // absorb rounding in exact multiples
    (len - 1e-9).ceil().max(0.0) as usize
}

/// Geometric shadow: in each image column touched by the target's convex
/// footprint, the `shadow_length_px` rows immediately down-range of the last
/// occupied row. A row is occupied when it lies in the footprint or within
/// one resolution cell of a scatterer, so the shadow never covers pixels near
/// a scatterer.
pub fn compute_shadow_mask(
    target: &ScattererTarget,
    sensor: &SensorModel,
    geometry: &ViewGeometry,
    target_height: f64,
) -> Result<Vec<bool>> {
    sensor.validate()?;
    geometry.validate()?;
    ensure!(
        target_height.is_finite() && target_height >= 0.0,
        "target height must be finite and non-negative"
    );
    let (h, w) = (sensor.image_height, sensor.image_width);
    let mut mask = vec![false; h * w];
    let len = shadow_length_px(target_height, geometry.depression_deg, sensor.range_spacing);
    if target.scatterers.is_empty() || len == 0 {
        return Ok(mask);
    }

    let points: Vec<(f64, f64)> = target
        .scatterers
        .iter()
        .map(|s| {
            let (x, y) = geometry.project(s.x, s.y);
            sensor.to_pixel(x, y)
        })
        .collect();

    // last occupied row per column, if the column is part of the footprint
    let mut footprint_end: Vec<Option<usize>> = vec![None; w];
    let mark = |u: usize, v: usize, end: &mut Vec<Option<usize>>| {
        end[v] = Some(end[v].map_or(u, |e| e.max(u)));
    };

    for &(r, c) in &points {
        let (u, v) = (r.round(), c.round());
        if u >= 0.0 && v >= 0.0 && (u as usize) < h && (v as usize) < w {
            mark(u as usize, v as usize, &mut footprint_end);
        }
    }
    let hull = convex_hull(&points);
    if hull.len() >= 3 {
        for u in 0..h {
            for v in 0..w {
                if inside_convex(&hull, u as f64, v as f64) {
                    mark(u, v, &mut footprint_end);
                }
            }
        }
    }

    // extend each footprint column past the scatterers' resolution cells
    let cell_r = sensor.range_resolution / sensor.range_spacing;
    let cell_c = sensor.cross_range_resolution / sensor.cross_range_spacing;
    let mut occupied_end = footprint_end.clone();
    for &(r, c) in &points {
        let v_lo = (c - cell_c).ceil().max(0.0) as usize;
        let v_hi = (c + cell_c).floor();
        if v_hi < 0.0 {
            continue;
        }
        for v in v_lo..=(v_hi as usize).min(w - 1) {
            let Some(end) = occupied_end[v] else { continue };
            let dc = (v as f64 - c) / cell_c;
            let reach = (1.0 - dc * dc).max(0.0).sqrt() * cell_r;
            let u_hi = (r + reach).floor();
            if u_hi >= 0.0 {
                occupied_end[v] = Some(end.max(u_hi as usize));
            }
        }
    }

    for v in 0..w {
        if let Some(end) = occupied_end[v] {
            for u in (end + 1)..(end + 1 + len).min(h) {
                mask[u * w + v] = true;
            }
        }
    }
    Ok(mask)
}

/// Andrew's monotone chain over (row, col) points, counter-clockwise.
fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside_convex(hull: &[(f64, f64)], r: f64, c: f64) -> bool {
    let n = hull.len();
    (0..n).all(|i| {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        (b.0 - a.0) * (c - a.1) - (b.1 - a.1) * (r - a.0) >= -1e-9
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Scatterer;

    fn target(points: &[(f64, f64)], height: f64) -> ScattererTarget {
        ScattererTarget {
            scatterers: points
                .iter()
                .map(|&(x, y)| Scatterer {
                    x,
                    y,
                    amplitude: 1.0,
                    phase: 0.0,
                })
                .collect(),
            class_label: 0,
            substructures: vec![],
            height_m: height,
        }
    }

    fn sensor() -> SensorModel {
        SensorModel {
            range_resolution: 0.3,
            cross_range_resolution: 0.3,
            range_spacing: 0.2,
            cross_range_spacing: 0.2,
            image_height: 96,
            image_width: 64,
            ..SensorModel::default()
        }
    }

    #[test]
    fn empty_footprint_gives_empty_mask() {
        let t = target(&[], 2.0);
        let m = compute_shadow_mask(&t, &sensor(), &ViewGeometry::new(15.0, 0.0), 2.0).unwrap();
        assert!(m.iter().all(|&b| !b));
    }

    #[test]
    fn overhead_view_casts_no_shadow() {
        let t = target(&[(0.0, 0.0), (1.0, 1.0), (-1.0, 0.5)], 2.0);
        let m = compute_shadow_mask(&t, &sensor(), &ViewGeometry::new(90.0, 0.0), 2.0).unwrap();
        assert!(m.iter().all(|&b| !b));
        assert_eq!(shadow_length_px(2.0, 90.0, 0.2), 0);
    }

    #[test]
    fn shadow_length_formula() {
        // 2 / tan(15°) / 0.2 = 37.32
        assert_eq!(shadow_length_px(2.0, 15.0, 0.2), 38);
    }

    #[test]
    fn shadow_extends_length_rows_per_column() {
        let t = target(&[(-0.6, -1.0), (0.6, -1.0), (0.6, 1.0), (-0.6, 1.0)], 2.0);
        let s = sensor();
        let m = compute_shadow_mask(&t, &s, &ViewGeometry::new(15.0, 0.0), 2.0).unwrap();
        let centre_col = s.image_width / 2;
        let count = (0..s.image_height)
            .filter(|&u| m[u * s.image_width + centre_col])
            .count();
        assert_eq!(count, 38);
        // shadow lies down-range of the target
        let first = (0..s.image_height)
            .find(|&u| m[u * s.image_width + centre_col])
            .unwrap();
        assert!(s.row_position(first) > 1.0);
    }
}
