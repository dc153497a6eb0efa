use num_complex::Complex32;
use rand::seq::index::sample;
use rand::Rng;

/// Zeroes a uniformly chosen `floor(drop_fraction · |B|)` of the bright
/// pixels `B = { |s| > threshold_ratio · max|s| }`. All other pixels are left
/// bit-identical. Returns the number of zeroed pixels.
pub fn brightpoint_dropout<R: Rng + ?Sized>(
    image: &mut [Complex32],
    drop_fraction: f64,
    threshold_ratio: f64,
    rng: &mut R,
) -> usize {
    let peak = image.iter().map(|z| z.norm()).fold(0.0f32, f32::max);
    let threshold = threshold_ratio as f32 * peak;
    let bright: Vec<usize> = image
        .iter()
        .enumerate()
        .filter(|(_, z)| z.norm() > threshold)
        .map(|(i, _)| i)
        .collect();
    let n_drop = (drop_fraction * bright.len() as f64).floor() as usize;
    if n_drop == 0 {
        return 0;
    }
    for k in sample(rng, bright.len(), n_drop.min(bright.len())) {
        image[bright[k]] = Complex32::new(0.0, 0.0);
    }
    n_drop
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn four_bright_points_lose_two() {
        let mut img = vec![Complex32::new(0.1, 0.0); 16];
        for (i, v) in [(1, 1.0), (5, 0.9), (9, 0.8), (13, 0.6)] {
            img[i] = Complex32::new(v, 0.0);
        }
        let before = img.clone();
        let dropped = brightpoint_dropout(&mut img, 0.5, 0.5, &mut seed::stream(4));
        assert_eq!(dropped, 2);
        let zeroed: Vec<usize> = (0..16).filter(|&i| img[i] != before[i]).collect();
        assert_eq!(zeroed.len(), 2);
        for i in zeroed {
            assert!(before[i].norm() > 0.5);
            assert_eq!(img[i], Complex32::new(0.0, 0.0));
        }
    }

    #[test]
    fn black_image_and_single_bright_point_unchanged() {
        let mut img = vec![Complex32::new(0.0, 0.0); 9];
        assert_eq!(brightpoint_dropout(&mut img, 0.5, 0.5, &mut seed::stream(0)), 0);
        let mut img = vec![Complex32::new(0.1, 0.0); 9];
        img[4] = Complex32::new(2.0, 0.0);
        let before = img.clone();
        assert_eq!(brightpoint_dropout(&mut img, 0.5, 0.5, &mut seed::stream(0)), 0);
        assert_eq!(img, before);
    }
}
