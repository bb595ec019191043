use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use translab::diffcore::Tensor;
use translab::harness::{generate_dataset, DatasetParams};
use translab::modelzoo::{build_model, ArchId, ArchSpec, Model};

pub const EPS: f64 = 16.0 / 255.0;

/// Untrained 16×16×1, 8-class models, one per architecture.
pub fn untrained_models() -> Vec<Model> {
    ArchId::ALL
        .iter()
        .enumerate()
        .map(|(i, &a)| build_model(ArchSpec::new(a, 16, 16, 1, 8), 100 + i as u64).unwrap())
        .collect()
}

pub fn model(arch: ArchId, seed: u64) -> Model {
    build_model(ArchSpec::new(arch, 16, 16, 1, 8), seed).unwrap()
}

/// The first `n` glyph images of a small dataset.
pub fn glyphs(n: usize, seed: u32) -> (Vec<Tensor>, Vec<usize>) {
    let ds = generate_dataset(&DatasetParams { n, seed, ..Default::default() }).unwrap();
    (ds.images, ds.labels)
}

pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bitwise equality of two tensors.
pub fn bit_equal(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
}
