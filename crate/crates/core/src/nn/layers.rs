//! Layer kernels. Activations are stored channel-major, `C×N×H×W`, so a
//! convolution is one GEMM over the whole batch and batch-norm statistics are
//! contiguous per channel.

use super::{gemm, Real};

/// Spatial geometry of a 3×3, padding-1 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn out_h(&self) -> usize {
        (self.h - 1) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w - 1) / self.stride + 1
    }

    /// Columns of the unfolded input: one per output position.
    pub fn positions(&self) -> usize {
        self.n * self.out_h() * self.out_w()
    }

    pub fn patch(&self) -> usize {
        self.c_in * 9
    }
}

fn for_each_tap(s: &ConvShape, mut f: impl FnMut(usize, usize, usize)) {
    // f(row of the unfolded matrix, column, input offset)
    let (ho, wo) = (s.out_h(), s.out_w());
    let plane = s.h * s.w;
    for c in 0..s.c_in {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 3 + ky) * 3 + kx;
                for b in 0..s.n {
                    let base = (c * s.n + b) * plane;
                    for oy in 0..ho {
                        let iy = (oy * s.stride + ky) as isize - 1;
                        if iy < 0 || iy >= s.h as isize {
                            continue;
                        }
                        for ox in 0..wo {
                            let ix = (ox * s.stride + kx) as isize - 1;
                            if ix < 0 || ix >= s.w as isize {
                                continue;
                            }
                            f(row, (b * ho + oy) * wo + ox, base + iy as usize * s.w + ix as usize);
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn im2col<T: Real>(x: &[T], s: &ConvShape) -> Vec<T> {
    let m = s.positions();
    let mut cols = vec![T::zero(); s.patch() * m];
    for_each_tap(s, |row, col, src| cols[row * m + col] = x[src]);
    cols
}

fn col2im<T: Real>(cols: &[T], s: &ConvShape) -> Vec<T> {
    let m = s.positions();
    let mut x = vec![T::zero(); s.c_in * s.n * s.h * s.w];
    for_each_tap(s, |row, col, dst| x[dst] += cols[row * m + col]);
    x
}

/// Returns the output (`c_out × positions`) and the unfolded input.
pub(crate) fn conv_forward<T: Real>(x: &[T], s: &ConvShape, weight: &[T], bias: Option<&[T]>) -> (Vec<T>, Vec<T>) {
    let cols = im2col(x, s);
    let m = s.positions();
    let mut out = vec![T::zero(); s.c_out * m];
    if let Some(b) = bias {
        for (row, &bv) in out.chunks_exact_mut(m).zip(b) {
            row.fill(bv);
        }
    }
    let beta = if bias.is_some() { T::one() } else { T::zero() };
    gemm(s.c_out, s.patch(), m, weight, false, &cols, false, beta, &mut out);
    (out, cols)
}

/// Accumulates weight/bias gradients; returns the input gradient if asked.
pub(crate) fn conv_backward<T: Real>(
    dout: &[T],
    cols: &[T],
    s: &ConvShape,
    weight: &[T],
    dweight: Option<&mut [T]>,
    dbias: Option<&mut [T]>,
    need_dx: bool,
) -> Option<Vec<T>> {
    let m = s.positions();
    if let Some(dw) = dweight {
        gemm(s.c_out, m, s.patch(), dout, false, cols, true, T::one(), dw);
    }
    if let Some(db) = dbias {
        for (g, row) in db.iter_mut().zip(dout.chunks_exact(m)) {
            *g += row.iter().copied().sum();
        }
    }
    need_dx.then(|| {
        let mut dcols = vec![T::zero(); s.patch() * m];
        gemm(s.patch(), s.c_out, m, weight, true, dout, false, T::zero(), &mut dcols);
        col2im(&dcols, s)
    })
}

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// Saved state of one batch-norm application.
#[derive(Debug, Clone)]
pub(crate) struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    /// Whether batch statistics were used (training) or running averages.
    pub batch_stats: bool,
}

/// Normalizes each contiguous channel row of `x` in place. With
/// `running = None` batch statistics are used and returned as
/// `(mean, unbiased variance)` per channel.
#[allow(clippy::type_complexity)]
pub(crate) fn bn_forward<T: Real>(
    x: &mut [T],
    channels: usize,
    gamma: &[T],
    beta: &[T],
    running: Option<(&[T], &[T])>,
) -> (BnCache<T>, Option<(Vec<T>, Vec<T>)>) {
    let m = x.len() / channels;
    let eps = T::lit(BN_EPS);
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = vec![T::zero(); channels];
    let mut stats = running.is_none().then(|| (vec![T::zero(); channels], vec![T::zero(); channels]));
    for c in 0..channels {
        let row = &mut x[c * m..(c + 1) * m];
        let (mean, var) = match running {
            Some((rm, rv)) => (rm[c], rv[c]),
            None => {
                let mf = T::from_usize(m).unwrap();
                let mean = row.iter().copied().sum::<T>() / mf;
                let ss = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
                if let Some((sm, sv)) = stats.as_mut() {
                    sm[c] = mean;
                    sv[c] = if m > 1 { ss / T::from_usize(m - 1).unwrap() } else { T::zero() };
                }
                (mean, ss / mf)
            }
        };
        let is = T::one() / (var + eps).sqrt();
        inv_std[c] = is;
        let xh = &mut xhat[c * m..(c + 1) * m];
        for (v, h) in row.iter_mut().zip(xh.iter_mut()) {
            *h = (*v - mean) * is;
            *v = gamma[c] * *h + beta[c];
        }
    }
    (BnCache { xhat, inv_std, batch_stats: running.is_none() }, stats)
}

/// In-place: `dy` becomes the input gradient. Parameter gradients are
/// accumulated.
pub(crate) fn bn_backward<T: Real>(dy: &mut [T], cache: &BnCache<T>, gamma: &[T], dgamma: &mut [T], dbeta: &mut [T]) {
    let channels = gamma.len();
    let m = dy.len() / channels;
    let mf = T::from_usize(m).unwrap();
    for c in 0..channels {
        let row = &mut dy[c * m..(c + 1) * m];
        let xh = &cache.xhat[c * m..(c + 1) * m];
        let sum_dy: T = row.iter().copied().sum();
        let sum_dy_xh: T = row.iter().zip(xh).map(|(&d, &h)| d * h).sum();
        dgamma[c] += sum_dy_xh;
        dbeta[c] += sum_dy;
        let g = gamma[c] * cache.inv_std[c];
        if cache.batch_stats {
            let (mean_dy, mean_dy_xh) = (sum_dy / mf, sum_dy_xh / mf);
            for (d, &h) in row.iter_mut().zip(xh) {
                *d = g * (*d - mean_dy - h * mean_dy_xh);
            }
        } else {
            for d in row.iter_mut() {
                *d = g * *d;
            }
        }
    }
}

pub(crate) fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `dy` wherever the ReLU output was not positive.
pub(crate) fn relu_backward<T: Real>(dy: &mut [T], out: &[T]) {
    for (d, &o) in dy.iter_mut().zip(out) {
        if o <= T::zero() {
            *d = T::zero();
        }
    }
}

/// `C×N×P` → `N×C` means.
pub(crate) fn global_avg_pool<T: Real>(x: &[T], c: usize, n: usize) -> Vec<T> {
    let p = x.len() / (c * n);
    let pf = T::from_usize(p).unwrap();
    let mut out = vec![T::zero(); n * c];
    for ch in 0..c {
        for b in 0..n {
            let s: T = x[(ch * n + b) * p..][..p].iter().copied().sum();
            out[b * c + ch] = s / pf;
        }
    }
    out
}

pub(crate) fn global_avg_pool_backward<T: Real>(dfeat: &[T], c: usize, n: usize, p: usize) -> Vec<T> {
    let pf = T::from_usize(p).unwrap();
    let mut dx = vec![T::zero(); c * n * p];
    for ch in 0..c {
        for b in 0..n {
            let g = dfeat[b * c + ch] / pf;
            dx[(ch * n + b) * p..][..p].fill(g);
        }
    }
    dx
}
