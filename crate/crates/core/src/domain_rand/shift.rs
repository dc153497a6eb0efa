/// Toroidal shift of a row-major `height×width` image: the pixel at
/// `(row, col)` moves to `((row + dy) mod H, (col + dx) mod W)`.
pub fn circular_shift<T: Copy>(image: &[T], height: usize, width: usize, dx: i32, dy: i32) -> Vec<T> {
    assert_eq!(image.len(), height * width, "image size does not match dimensions");
    let sx = (dx as i64).rem_euclid(width as i64) as usize;
    let sy = (dy as i64).rem_euclid(height as i64) as usize;
    if sx == 0 && sy == 0 {
        return image.to_vec();
    }
    let mut out = Vec::with_capacity(image.len());
    for r in 0..height {
        let src = &image[((r + height - sy) % height) * width..][..width];
        out.extend_from_slice(&src[width - sx..]);
        out.extend_from_slice(&src[..width - sx]);
    }
    out
}
