use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Normalised `k × k` Gaussian kernel (row-major), σ in pixels.
pub fn gaussian_kernel(kernel_size: usize, sigma: f64) -> Result<Vec<f64>> {
    if kernel_size % 2 == 0 {
        return Err(Error::config(format!("smoothing kernel size {kernel_size} must be odd")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config("smoothing sigma must be positive"));
    }
    let r = (kernel_size / 2) as isize;
    let mut k = Vec::with_capacity(kernel_size * kernel_size);
    for i in -r..=r {
        for j in -r..=r {
            k.push((-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = k.iter().sum();
    Ok(k.into_iter().map(|v| v / total).collect())
}

/// Convolves each channel of a `[C, H, W]` (or `[H, W]`) gradient with a
/// normalised Gaussian, same-size output. Borders replicate the edge.
pub fn tim_smooth_gradient(grad: &Tensor, kernel_size: usize, sigma: f64) -> Result<Tensor> {
    let kernel = gaussian_kernel(kernel_size, sigma)?;
    if kernel_size == 1 {
        return Ok(grad.clone());
    }
    let s = grad.shape();
    let (c, h, w) = match s.len() {
        2 => (1, s[0], s[1]),
        3 => (s[0], s[1], s[2]),
        _ => return Err(Error::config(format!("smoothing expects [H,W] or [C,H,W], got {s:?}"))),
    };
    let r = (kernel_size / 2) as isize;
    let src = grad.data();
    let mut out = vec![0.0; src.len()];
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                let mut t = 0;
                for di in -r..=r {
                    let y = clamp(i as isize + di, h);
                    for dj in -r..=r {
                        let x = clamp(j as isize + dj, w);
                        acc += kernel[t] * src[base + y * w + x];
                        t += 1;
                    }
                }
                out[base + i * w + j] = acc;
            }
        }
    }
    Tensor::new(s.to_vec(), out)
}
