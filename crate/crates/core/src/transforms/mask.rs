use crate::error::{Error, Result};

/// Selected DCT coefficients of an `H × W` spectrum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyMask {
    pub height: usize,
    pub width: usize,
    /// Row-major over `(u, v)`.
    pub selected: Vec<bool>,
}

impl FrequencyMask {
    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.selected[u * self.width + v]
    }

    /// Flat indices of the selected coefficients in ranking order.
    pub fn ranked_indices(&self) -> Vec<usize> {
        ranking(self.height, self.width).into_iter().filter(|&i| self.selected[i]).collect()
    }
}

/// All coefficients, highest frequency first: `u + v` descending, then `u`
/// descending, then `v` descending.
fn ranking(h: usize, w: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..h * w).collect();
    idx.sort_by(|&a, &b| {
        let (ua, va) = (a / w, a % w);
        let (ub, vb) = (b / w, b % w);
        (ub + vb, ub, vb).cmp(&(ua + va, ua, va))
    });
    idx
}

/// Number of coefficients a ratio selects: `ceil(rho · n)`, at least one.
/// A 1e-9 slack absorbs representation error in products like `0.3 · 10`.
pub fn selected_count(rho: f64, n: usize) -> usize {
    ((rho * n as f64 - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// The top `ceil(rho·H·W)` high-frequency coefficients.
pub fn highfreq_mask(height: usize, width: usize, rho: f64) -> Result<FrequencyMask> {
    if height == 0 || width == 0 {
        return Err(Error::config("mask extents must be positive"));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::config(format!("high-frequency ratio {rho} outside (0, 1]")));
    }
    let n = height * width;
    let k = selected_count(rho, n);
    let mut selected = vec![false; n];
    for &i in &ranking(height, width)[..k] {
        selected[i] = true;
    }
    Ok(FrequencyMask { height, width, selected })
}
