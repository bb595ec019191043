//! Sparse linear resampling maps (resize, pad, warp) on `[C, H, W]` images.
//!
//! The same spatial map is applied to every channel. Because each map is
//! linear its adjoint is the transpose, which is how gradients are pulled
//! back to input coordinates.

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// CSR matrix from input pixels to output pixels of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMap {
    in_hw: (usize, usize),
    out_hw: (usize, usize),
    row_start: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

/// Bilinear taps for a continuous source coordinate. Taps falling outside
/// the source grid are dropped (zero fill).
fn bilinear_taps(y: f64, x: f64, h: usize, w: usize, out: &mut Vec<(usize, f64)>) {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let (y0, x0) = (y0 as isize, x0 as isize);
    for (dy, wy) in [(0isize, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0isize, 1.0 - fx), (1, fx)] {
            let wt = wy * wx;
            if wt == 0.0 {
                continue;
            }
            let yy = y0 + dy;
            let xx = x0 + dx;
            if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                out.push((yy as usize * w + xx as usize, wt));
            }
        }
    }
}

impl SparseMap {
    fn from_rows(in_hw: (usize, usize), out_hw: (usize, usize), rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_start = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        row_start.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, w) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += w,
                    _ => merged.push((c, w)),
                }
            }
            for (c, w) in merged {
                if w != 0.0 {
                    cols.push(c as u32);
                    weights.push(w);
                }
            }
            row_start.push(cols.len());
        }
        SparseMap { in_hw, out_hw, row_start, cols, weights }
    }

    /// Identity on an `h × w` grid.
    pub fn identity(h: usize, w: usize) -> Self {
        let rows = (0..h * w).map(|i| vec![(i, 1.0)]).collect();
        Self::from_rows((h, w), (h, w), rows)
    }

    /// Inverse-mapping warp: output pixel `(i, j)` samples the source at the
    /// continuous coordinate returned by `source_of(i, j)` with bilinear
    /// interpolation and zero fill outside.
    pub fn warp(
        in_hw: (usize, usize),
        out_hw: (usize, usize),
        source_of: impl Fn(usize, usize) -> (f64, f64),
    ) -> Self {
        let mut rows = Vec::with_capacity(out_hw.0 * out_hw.1);
        for i in 0..out_hw.0 {
            for j in 0..out_hw.1 {
                let (sy, sx) = source_of(i, j);
                let mut taps = Vec::with_capacity(4);
                bilinear_taps(sy, sx, in_hw.0, in_hw.1, &mut taps);
                rows.push(taps);
            }
        }
        Self::from_rows(in_hw, out_hw, rows)
    }

    /// Bilinear resize with half-pixel centres and edge clamping.
    pub fn resize(in_hw: (usize, usize), out_hw: (usize, usize)) -> Self {
        let sy = in_hw.0 as f64 / out_hw.0 as f64;
        let sx = in_hw.1 as f64 / out_hw.1 as f64;
        let clamp = |v: f64, n: usize| v.max(0.0).min((n - 1) as f64);
        Self::warp(in_hw, out_hw, |i, j| {
            (
                clamp((i as f64 + 0.5) * sy - 0.5, in_hw.0),
                clamp((j as f64 + 0.5) * sx - 0.5, in_hw.1),
            )
        })
    }

    /// Places the source at offset `(top, left)` inside a zero canvas.
    pub fn pad(in_hw: (usize, usize), out_hw: (usize, usize), top: usize, left: usize) -> Self {
        let mut rows = Vec::with_capacity(out_hw.0 * out_hw.1);
        for i in 0..out_hw.0 {
            for j in 0..out_hw.1 {
                let inside = i >= top && j >= left && i - top < in_hw.0 && j - left < in_hw.1;
                rows.push(if inside { vec![((i - top) * in_hw.1 + (j - left), 1.0)] } else { Vec::new() });
            }
        }
        Self::from_rows(in_hw, out_hw, rows)
    }

    /// `next ∘ self`: apply `self` first, then `next`.
    pub fn then(&self, next: &SparseMap) -> Result<SparseMap> {
        if next.in_hw != self.out_hw {
            return Err(Error::config("resample maps do not compose"));
        }
        let mut rows = Vec::with_capacity(next.out_hw.0 * next.out_hw.1);
        for r in 0..next.out_hw.0 * next.out_hw.1 {
            let mut row = Vec::new();
            for k in next.row_start[r]..next.row_start[r + 1] {
                let mid = next.cols[k] as usize;
                let w2 = next.weights[k];
                for q in self.row_start[mid]..self.row_start[mid + 1] {
                    row.push((self.cols[q] as usize, w2 * self.weights[q]));
                }
            }
            rows.push(row);
        }
        Ok(Self::from_rows(self.in_hw, next.out_hw, rows))
    }

    pub fn in_hw(&self) -> (usize, usize) {
        self.in_hw
    }

    pub fn out_hw(&self) -> (usize, usize) {
        self.out_hw
    }

    fn channels_of(&self, x: &Tensor) -> Result<usize> {
        let s = x.shape();
        if s.len() != 3 || (s[1], s[2]) != self.in_hw {
            return Err(Error::config(format!(
                "resample expects [C,{},{}], got {s:?}",
                self.in_hw.0, self.in_hw.1
            )));
        }
        Ok(s[0])
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let c = self.channels_of(x)?;
        let mut out = Tensor::zeros(&[c, self.out_hw.0, self.out_hw.1]);
        self.apply_raw(x.data(), out.data_mut(), c);
        Ok(out)
    }

    pub(crate) fn apply_raw(&self, src: &[f64], dst: &mut [f64], channels: usize) {
        let ni = self.in_hw.0 * self.in_hw.1;
        let no = self.out_hw.0 * self.out_hw.1;
        for ch in 0..channels {
            let s = &src[ch * ni..(ch + 1) * ni];
            let d = &mut dst[ch * no..(ch + 1) * no];
            for (r, out) in d.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in self.row_start[r]..self.row_start[r + 1] {
                    acc += self.weights[k] * s[self.cols[k] as usize];
                }
                *out = acc;
            }
        }
    }

    /// Transpose application: accumulates `Mᵀ · g` into `dst`.
    pub(crate) fn adjoint_raw(&self, g: &[f64], dst: &mut [f64], channels: usize) {
        let ni = self.in_hw.0 * self.in_hw.1;
        let no = self.out_hw.0 * self.out_hw.1;
        for ch in 0..channels {
            let gs = &g[ch * no..(ch + 1) * no];
            let d = &mut dst[ch * ni..(ch + 1) * ni];
            for (r, &gv) in gs.iter().enumerate() {
                if gv == 0.0 {
                    continue;
                }
                for k in self.row_start[r]..self.row_start[r + 1] {
                    d[self.cols[k] as usize] += self.weights[k] * gv;
                }
            }
        }
    }

    pub fn adjoint(&self, g: &Tensor) -> Result<Tensor> {
        let s = g.shape();
        if s.len() != 3 || (s[1], s[2]) != self.out_hw {
            return Err(Error::config("adjoint input has wrong extents"));
        }
        let mut out = Tensor::zeros(&[s[0], self.in_hw.0, self.in_hw.1]);
        self.adjoint_raw(g.data(), out.data_mut(), s[0]);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_same_size_is_identity() {
        let m = SparseMap::resize((5, 7), (5, 7));
        assert_eq!(m, SparseMap::identity(5, 7));
    }

    #[test]
    fn adjoint_is_transpose() {
        let m = SparseMap::resize((4, 4), (7, 5)).then(&SparseMap::pad((7, 5), (9, 9), 1, 2)).unwrap();
        let x = Tensor::new(vec![1, 4, 4], (0..16).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let g = Tensor::new(vec![1, 9, 9], (0..81).map(|v| (v as f64 * 0.11).cos()).collect()).unwrap();
        let lhs = m.apply(&x).unwrap().dot(&g);
        let rhs = x.dot(&m.adjoint(&g).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pad_places_source() {
        let m = SparseMap::pad((1, 1), (3, 3), 1, 1);
        let y = m.apply(&Tensor::full(&[1, 1, 1], 2.0)).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
