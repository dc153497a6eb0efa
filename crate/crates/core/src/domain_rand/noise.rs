use num_complex::Complex32;
use rand::Rng;
use rand_distr::StandardNormal;

use super::db_to_power;

/// Adds circular complex Gaussian noise of total power `10^(noise_db/10)` per
/// pixel. `None` leaves the image untouched.
pub fn add_thermal_noise<R: Rng + ?Sized>(image: &mut [Complex32], noise_db: Option<f64>, rng: &mut R) {
    let Some(db) = noise_db else { return };
    let sigma = (db_to_power(db) / 2.0).sqrt() as f32;
    for z in image.iter_mut() {
        let re: f32 = rng.sample(StandardNormal);
        let im: f32 = rng.sample(StandardNormal);
        z.re += sigma * re;
        z.im += sigma * im;
    }
}
