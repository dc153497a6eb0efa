//! Statistical criteria shared by the integration tests and the acceptance
//! runner. Each returns a one-line detail on success and the reason on
//! failure.

use num_complex::Complex32;
use rand::Rng;
use statrs::distribution::Uniform;
use statrs::stats_tests::chisquare::chisquare;
use statrs::stats_tests::ks_test::{ks_onesample, KSOneSampleAlternativeMethod};
use statrs::stats_tests::NaNPolicy;

use robustatr::domain_rand::{brightpoint_dropout, generate_clutter, sample_params, RandomizationConfig};
use robustatr::seed;

pub type Verdict = Result<String, String>;

pub const SIGNIFICANCE: f64 = 0.01;

fn ks_uniform(name: &str, data: Vec<f64>, [lo, hi]: [f64; 2]) -> Result<f64, String> {
    let u = Uniform::new(lo, hi).map_err(|e| format!("{name}: {e}"))?;
    let (d, p) = ks_onesample(data, &u, KSOneSampleAlternativeMethod::TwoSidedAsymptotic, NaNPolicy::Error)
        .map_err(|e| format!("{name}: {e}"))?;
    if p > SIGNIFICANCE {
        Ok(p)
    } else {
        Err(format!("{name}: KS D = {d:.2e}, p = {p:.3e}"))
    }
}

fn chi2_uniform_int(name: &str, data: &[i32], [lo, hi]: [i32; 2]) -> Result<f64, String> {
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for &v in data {
        counts[(v - lo) as usize] += 1;
    }
    let (stat, p) = chisquare(&counts, None, None).map_err(|e| format!("{name}: {e}"))?;
    if p > SIGNIFICANCE {
        Ok(p)
    } else {
        Err(format!("{name}: chi2 = {stat:.2}, p = {p:.3e}"))
    }
}

/// Draws `n` parameter sets from the default ranges; every value must lie in
/// its closed range and each field must pass a uniformity test.
pub fn range_conformance(n: usize, seed_: u64) -> Verdict {
    let cfg = RandomizationConfig::default();
    let rr = cfg.range_resolution_m.unwrap();
    let cr = cfg.cross_range_resolution_m.unwrap();
    let cl = cfg.clutter_level_db.unwrap();
    let gs = cfg.clutter_gamma_shape;
    let tn = cfg.thermal_noise_db.unwrap();
    let sh = cfg.shift_px.unwrap();
    let inside = |v: f64, [lo, hi]: [f64; 2]| lo <= v && v <= hi;

    let mut rng = seed::stream(seed_);
    let mut cols: [Vec<f64>; 5] = Default::default();
    let (mut dx, mut dy) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let p = sample_params(&cfg, &mut rng);
        let (Some(r), Some(c), Some(cd), Some(t)) =
            (p.range_resolution_m, p.cross_range_resolution_m, p.clutter, p.thermal_noise_db)
        else {
            return Err(format!("draw {i}: an enabled knob came back empty"));
        };
        let ok = inside(r, rr)
            && inside(c, cr)
            && inside(cd.level_db, cl)
            && inside(cd.gamma_shape, gs)
            && inside(t, tn)
            && (sh[0]..=sh[1]).contains(&p.dx)
            && (sh[0]..=sh[1]).contains(&p.dy)
            && p.dropout.is_some();
        if !ok {
            return Err(format!("draw {i} out of range: {p:?}"));
        }
        for (col, v) in cols.iter_mut().zip([r, c, cd.level_db, cd.gamma_shape, t]) {
            col.push(v);
        }
        dx.push(p.dx);
        dy.push(p.dy);
    }
    let names = ["range_resolution", "cross_range_resolution", "clutter_level", "gamma_shape", "thermal_noise"];
    let mut min_p = f64::INFINITY;
    for ((name, col), range) in names.iter().zip(cols).zip([rr, cr, cl, gs, tn]) {
        min_p = min_p.min(ks_uniform(name, col, range)?);
    }
    min_p = min_p.min(chi2_uniform_int("dx", &dx, sh)?);
    min_p = min_p.min(chi2_uniform_int("dy", &dy, sh)?);
    Ok(format!("{n} draws in range, smallest uniformity p-value {min_p:.3}"))
}

/// Shift p-values from `seeds` independent runs of `draws` samples must
/// themselves look uniform, so a single small p-value in the conformance
/// check can be told apart from a biased integer sampler.
pub fn shift_pvalue_calibration(seeds: u64, draws: usize) -> Verdict {
    let cfg = RandomizationConfig::default();
    let [lo, hi] = cfg.shift_px.unwrap();
    let mut ps = [Vec::new(), Vec::new()];
    for s in 0..seeds {
        let mut rng = seed::stream(seed::derive_tagged(s, "calibration", 0));
        let mut counts = [vec![0usize; (hi - lo + 1) as usize], vec![0usize; (hi - lo + 1) as usize]];
        for _ in 0..draws {
            let p = sample_params(&cfg, &mut rng);
            counts[0][(p.dx - lo) as usize] += 1;
            counts[1][(p.dy - lo) as usize] += 1;
        }
        for (c, p) in counts.iter().zip(ps.iter_mut()) {
            p.push(chisquare(c, None, None).map_err(|e| e.to_string())?.1);
        }
    }
    let [px, py] = ps;
    let kx = ks_uniform("dx p-values", px, [0.0, 1.0])?;
    let ky = ks_uniform("dy p-values", py, [0.0, 1.0])?;
    Ok(format!("{seeds} runs per field, KS p = {kx:.3} (dx), {ky:.3} (dy)"))
}

/// Mean power and method-of-moments shape of a `side×side` clutter field.
pub fn clutter_moments(side: usize, level_db: f64, shape: f64, seed_: u64) -> (f64, f64) {
    let field = generate_clutter(side, side, level_db, shape, &mut seed::stream(seed_)).unwrap();
    let n = field.len() as f64;
    let powers: Vec<f64> = field.iter().map(|z| z.norm_sqr() as f64).collect();
    let mean = powers.iter().sum::<f64>() / n;
    let var = powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, mean * mean / var)
}

pub fn clutter_statistics(seed_: u64) -> Verdict {
    let (mean, shape) = clutter_moments(1000, -10.0, 4.0, seed_);
    let mean_err_db = (10.0 * mean.log10() + 10.0).abs();
    let shape_err = (shape - 4.0).abs() / 4.0;
    let detail = format!("mean {mean:.5} ({mean_err_db:.4} dB off), shape {shape:.4} ({:.2}% off)", shape_err * 100.0);
    if mean_err_db <= 0.1 && shape_err <= 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// An `n_pixels` image with exactly `bright` pixels above half the peak
/// (random positions and phases) and the rest strictly at or below it.
pub fn image_with_bright_points<R: Rng>(n_pixels: usize, bright: usize, rng: &mut R) -> Vec<Complex32> {
    let polar = |m: f32, rng: &mut R| Complex32::from_polar(m, rng.random_range(0.0..std::f32::consts::TAU));
    if bright == 0 {
        return vec![Complex32::new(0.0, 0.0); n_pixels];
    }
    let positions = rand::seq::index::sample(rng, n_pixels, bright).into_vec();
    let mut img: Vec<Complex32> = (0..n_pixels).map(|_| polar(rng.random_range(0.0..0.45), rng)).collect();
    for (k, &i) in positions.iter().enumerate() {
        // the first one sets the peak at 1
        let m = if k == 0 { 1.0 } else { rng.random_range(0.55..1.0) };
        img[i] = polar(m, rng);
    }
    img
}

/// Every |B| in 0..=9, many placements each: exactly floor(|B|/2) bright
/// pixels zeroed, every other pixel bit-identical.
pub fn dropout_contract(trials_per_count: usize, seed_: u64) -> Verdict {
    let mut rng = seed::stream(seed_);
    for bright in 0..=9usize {
        for t in 0..trials_per_count {
            let img = image_with_bright_points(64, bright, &mut rng);
            let peak = img.iter().map(|z| z.norm()).fold(0.0f32, f32::max);
            let is_bright: Vec<bool> = img.iter().map(|z| z.norm() > 0.5 * peak).collect();
            let actual_b = is_bright.iter().filter(|&&b| b).count();
            if actual_b != bright {
                return Err(format!("construction gave {actual_b} bright pixels, wanted {bright}"));
            }
            let mut out = img.clone();
            let reported = brightpoint_dropout(&mut out, 0.5, 0.5, &mut seed::stream(seed::derive(seed_, t as u64)));
            let mut zeroed = 0;
            for i in 0..img.len() {
                let (a, b) = (img[i], out[i]);
                let same = a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits();
                if same {
                    continue;
                }
                if !is_bright[i] || b != Complex32::new(0.0, 0.0) {
                    return Err(format!("|B| = {bright}: pixel {i} altered illegally"));
                }
                zeroed += 1;
            }
            if zeroed != bright / 2 || reported != zeroed {
                return Err(format!("|B| = {bright}: zeroed {zeroed} (reported {reported}), wanted {}", bright / 2));
            }
        }
    }
    Ok(format!("|B| = 0..9, {trials_per_count} placements each"))
}
