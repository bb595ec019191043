//! Procedural glyph dataset and the `TADS1` file format.
//!
//! Layout (integers little-endian `u32`, pixels little-endian `f64`):
//!
//! ```text
//! "TADS1" | version:u8 | n | H | W | C | classes | seed
//! then n·H·W·C pixels (image-major, H·W·C interleaved) | n labels
//! ```

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 5] = b"TADS1";
pub const DATASET_VERSION: u8 = 1;

/// Generator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetParams {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
    pub seed: u32,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
    /// Mean stroke intensity above the background; each image draws its
    /// ink from `[2/3, 4/3]` of this.
    pub contrast: f64,
    /// Class-independent distractor strokes per image.
    pub clutter: usize,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams { n: 4000, height: 16, width: 16, channels: 1, classes: 8, seed: 0, noise: 0.08, contrast: 0.35, clutter: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
    pub seed: u32,
    /// `[C, H, W]` images in `[0, 1]`.
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    /// Indices held out from training (`i ≡ every − 1 mod every`).
    pub fn holdout_indices(&self, every: usize) -> Vec<usize> {
        (0..self.len()).filter(|i| every >= 2 && i % every == every - 1).collect()
    }

    /// Indices used for training (the complement of the holdout).
    pub fn train_indices(&self, every: usize) -> Vec<usize> {
        (0..self.len()).filter(|i| every < 2 || i % every != every - 1).collect()
    }
}

type Segment = ((f64, f64), (f64, f64));

/// Stroke template of a class in unit coordinates `(y, x)`.
fn template(class: usize) -> Vec<Segment> {
    let box_ = vec![
        ((0.25, 0.25), (0.25, 0.75)),
        ((0.25, 0.75), (0.75, 0.75)),
        ((0.75, 0.75), (0.75, 0.25)),
        ((0.75, 0.25), (0.25, 0.25)),
    ];
    match class {
        0 => vec![((0.5, 0.15), (0.5, 0.85))],
        1 => vec![((0.15, 0.5), (0.85, 0.5))],
        2 => vec![((0.2, 0.2), (0.8, 0.8))],
        3 => vec![((0.2, 0.8), (0.8, 0.2))],
        4 => vec![((0.5, 0.2), (0.5, 0.8)), ((0.2, 0.5), (0.8, 0.5))],
        5 => vec![((0.2, 0.2), (0.8, 0.8)), ((0.2, 0.8), (0.8, 0.2))],
        6 => box_,
        7 => vec![((0.2, 0.5), (0.8, 0.2)), ((0.8, 0.2), (0.8, 0.8)), ((0.8, 0.8), (0.2, 0.5))],
        _ => {
            // further classes get random three-stroke glyphs
            let mut r = ChaCha8Rng::seed_from_u64(0x5EED_0000 + class as u64);
            let pt = |r: &mut ChaCha8Rng| (r.random_range(0.15..0.85), r.random_range(0.15..0.85));
            let a = pt(&mut r);
            let b = pt(&mut r);
            let c = pt(&mut r);
            let d = pt(&mut r);
            vec![(a, b), (b, c), (c, d)]
        }
    }
}

fn segment_distance(p: (f64, f64), s: &Segment) -> f64 {
    let ((ay, ax), (by, bx)) = *s;
    let (dy, dx) = (by - ay, bx - ax);
    let len2 = dy * dy + dx * dx;
    let t = if len2 > 0.0 { (((p.0 - ay) * dy + (p.1 - ax) * dx) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qy, qx) = (ay + t * dy, ax + t * dx);
    ((p.0 - qy).powi(2) + (p.1 - qx).powi(2)).sqrt()
}

/// Renders one jittered glyph of `class` as a `[C, H, W]` image.
fn render(p: &DatasetParams, class: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let (h, w, c) = (p.height, p.width, p.channels);
    let angle = rng.random_range(-12.0f64..12.0) * PI / 180.0;
    let scale = rng.random_range(0.85..1.15);
    let (oy, ox) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    let thick = rng.random_range(0.6..1.1);
    let ink = p.contrast * rng.random_range(2.0 / 3.0..4.0 / 3.0);
    let bg = rng.random_range(0.25..0.55);
    let tint: Vec<f64> = (0..c).map(|_| if c == 1 { 1.0 } else { rng.random_range(0.5..1.0) }).collect();
    let (sn, cs) = angle.sin_cos();
    let mut strokes: Vec<(Segment, f64)> = template(class)
        .into_iter()
        .map(|(a, b)| {
            let f = |(y, x): (f64, f64)| {
                let (y, x) = ((y - 0.5) * scale, (x - 0.5) * scale);
                (0.5 + oy + cs * y - sn * x, 0.5 + ox + sn * y + cs * x)
            };
            ((f(a), f(b)), 1.0)
        })
        .collect();
    for _ in 0..p.clutter {
        let a = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let len = rng.random_range(0.15..0.35);
        let th = rng.random_range(0.0..PI);
        let b = (a.0 + len * th.sin(), a.1 + len * th.cos());
        strokes.push(((a, b), rng.random_range(0.4..0.8)));
    }
    let noise = Normal::new(0.0, p.noise.max(0.0)).expect("finite noise scale");
    let unit = 1.0 / h.max(w) as f64;
    let mut img = Tensor::zeros(&[c, h, w]);
    for i in 0..h {
        for j in 0..w {
            let q = ((i as f64 + 0.5) / h as f64, (j as f64 + 0.5) / w as f64);
            let v = strokes
                .iter()
                .map(|(s, a)| a * (-(segment_distance(q, s) / unit / thick).powi(2)).exp())
                .fold(0.0, f64::max);
            for ch in 0..c {
                let px = bg + ink * tint[ch] * v + noise.sample(rng);
                img.data_mut()[(ch * h + i) * w + j] = px.clamp(0.0, 1.0);
            }
        }
    }
    img
}

/// Balanced dataset: image `i` has label `i mod classes`.
pub fn generate_dataset(p: &DatasetParams) -> Result<Dataset> {
    if p.n == 0 || p.height == 0 || p.width == 0 || p.channels == 0 {
        return Err(Error::config("dataset extents must be positive"));
    }
    if p.classes < 2 {
        return Err(Error::config("a dataset needs at least two classes"));
    }
    if !(p.noise >= 0.0 && p.noise.is_finite()) {
        return Err(Error::config("noise must be finite and nonnegative"));
    }
    if !(p.contrast > 0.0 && p.contrast <= 0.75) {
        return Err(Error::config("contrast must lie in (0, 0.75]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed as u64);
    let mut images = Vec::with_capacity(p.n);
    let mut labels = Vec::with_capacity(p.n);
    for i in 0..p.n {
        let y = i % p.classes;
        images.push(render(p, y, &mut rng));
        labels.push(y);
    }
    Ok(Dataset {
        height: p.height,
        width: p.width,
        channels: p.channels,
        classes: p.classes,
        seed: p.seed,
        images,
        labels,
    })
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::config(format!("{v} does not fit a 32-bit header field")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let (h, w, c) = (ds.height, ds.width, ds.channels);
    let mut buf = Vec::with_capacity(30 + ds.len() * (h * w * c * 8 + 4));
    buf.extend_from_slice(DATASET_MAGIC);
    buf.push(DATASET_VERSION);
    for v in [ds.len(), h, w, c, ds.classes, ds.seed as usize] {
        put_u32(&mut buf, v)?;
    }
    for img in &ds.images {
        let d = img.data();
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    buf.extend_from_slice(&d[(ch * h + i) * w + j].to_le_bytes());
                }
            }
        }
    }
    for &y in &ds.labels {
        put_u32(&mut buf, y)?;
    }
    Ok(buf)
}

pub fn decode_dataset(buf: &[u8]) -> Result<Dataset> {
    let mut pos = 0usize;
    let mut take = |n: usize, what: &str| -> Result<(usize, &[u8])> {
        if buf.len() - pos < n {
            return Err(Error::format(pos as u64, format!("truncated while reading {what}")));
        }
        let at = pos;
        pos += n;
        Ok((at, &buf[at..at + n]))
    };
    let (_, magic) = take(5, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::format(0, "bad magic, not a TADS1 dataset"));
    }
    let (at, version) = take(1, "version")?;
    if version[0] != DATASET_VERSION {
        return Err(Error::format(at as u64, format!("unsupported dataset version {}", version[0])));
    }
    let mut header = [0usize; 6];
    for (k, v) in header.iter_mut().enumerate() {
        let (_, b) = take(4, ["n", "height", "width", "channels", "classes", "seed"][k])?;
        *v = u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
    }
    let [n, h, w, c, classes, seed] = header;
    if h == 0 || w == 0 || c == 0 || classes < 2 {
        return Err(Error::format(6, "degenerate dataset header"));
    }
    let per = h * w * c;
    let mut images = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let (at, bytes) = take(per * 8, "pixels")?;
        let mut data = vec![0.0; per];
        for (k, chunk) in bytes.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::format((at + 8 * k) as u64, format!("pixel {v} outside [0, 1]")));
            }
            let (i, rest) = (k / (w * c), k % (w * c));
            let (j, ch) = (rest / c, rest % c);
            data[(ch * h + i) * w + j] = v;
        }
        images.push(Tensor::new(vec![c, h, w], data)?);
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (at, b) = take(4, "labels")?;
        let y = u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
        if y >= classes {
            return Err(Error::format(at as u64, format!("label {y} exceeds class count {classes}")));
        }
        labels.push(y);
    }
    if pos != buf.len() {
        return Err(Error::format(pos as u64, "trailing bytes after labels"));
    }
    Ok(Dataset { height: h, width: w, channels: c, classes, seed: seed as u32, images, labels })
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_dataset(ds)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&std::fs::read(path)?)
}
