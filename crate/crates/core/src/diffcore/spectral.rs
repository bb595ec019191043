//! Orthonormal 2D type-II DCT and its inverse on `[C, H, W]` images.
//!
//! The transform is `Y = C_H · X · C_Wᵀ` per channel with orthonormal basis
//! matrices, so the inverse is `X = C_Hᵀ · Y · C_W` and the adjoint of the
//! forward map equals the inverse.

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Precomputed basis for one image size.
#[derive(Debug, Clone)]
pub struct SpectralPlan {
    height: usize,
    width: usize,
    basis_h: Vec<f64>,
    basis_w: Vec<f64>,
}

fn dct_basis(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            m[k * n + i] =
                s * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * nf)).cos();
        }
    }
    m
}

impl SpectralPlan {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::config("spectral plan extents must be positive"));
        }
        Ok(SpectralPlan { height, width, basis_h: dct_basis(height), basis_w: dct_basis(width) })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn check(&self, image: &Tensor) -> Result<usize> {
        let s = image.shape();
        let (c, h, w) = match s.len() {
            2 => (1, s[0], s[1]),
            3 => (s[0], s[1], s[2]),
            _ => return Err(Error::config(format!("dct expects [H,W] or [C,H,W], got {s:?}"))),
        };
        if h != self.height || w != self.width {
            return Err(Error::config(format!(
                "image {h}x{w} does not match plan {}x{}",
                self.height, self.width
            )));
        }
        Ok(c)
    }

    pub fn dct2(&self, image: &Tensor) -> Result<Tensor> {
        let c = self.check(image)?;
        let mut out = Tensor::zeros(image.shape());
        self.apply(image.data(), out.data_mut(), c, false);
        Ok(out)
    }

    pub fn idct2(&self, coeffs: &Tensor) -> Result<Tensor> {
        let c = self.check(coeffs)?;
        let mut out = Tensor::zeros(coeffs.shape());
        self.apply(coeffs.data(), out.data_mut(), c, true);
        Ok(out)
    }

    /// Raw per-channel transform over contiguous `[C, H, W]` buffers.
    pub(crate) fn apply(&self, src: &[f64], dst: &mut [f64], channels: usize, inverse: bool) {
        let (h, w) = (self.height, self.width);
        let mut tmp = vec![0.0; h * w];
        for ch in 0..channels {
            let x = &src[ch * h * w..(ch + 1) * h * w];
            let y = &mut dst[ch * h * w..(ch + 1) * h * w];
            // rows: tmp = X · B_Wᵀ (forward) or X · B_W (inverse)
            for i in 0..h {
                for k in 0..w {
                    let mut acc = 0.0;
                    for j in 0..w {
                        let b = if inverse { self.basis_w[j * w + k] } else { self.basis_w[k * w + j] };
                        acc += x[i * w + j] * b;
                    }
                    tmp[i * w + k] = acc;
                }
            }
            // columns: Y = B_H · tmp (forward) or B_Hᵀ · tmp (inverse)
            for u in 0..h {
                for k in 0..w {
                    let mut acc = 0.0;
                    for i in 0..h {
                        let b = if inverse { self.basis_h[i * h + u] } else { self.basis_h[u * h + i] };
                        acc += b * tmp[i * w + k];
                    }
                    y[u * w + k] = acc;
                }
            }
        }
    }
}
