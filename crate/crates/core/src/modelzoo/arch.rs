use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Classifier, Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// The four toy architectures of the zoo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchId {
    /// dense → relu → dense
    Mlp2,
    /// two valid 3×3 convolutions, then dense
    CnnA,
    /// 5×5, 3×3, 3×3 valid convolutions, then dense
    CnnB,
    /// same-padded 3×3 convolution, 2×2 average pool, two dense layers
    CnnPool,
}

impl ArchId {
    pub const ALL: [ArchId; 4] = [ArchId::Mlp2, ArchId::CnnA, ArchId::CnnB, ArchId::CnnPool];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchId::Mlp2 => "mlp2",
            ArchId::CnnA => "cnn_a",
            ArchId::CnnB => "cnn_b",
            ArchId::CnnPool => "cnn_pool",
        }
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown arch_id {s:?}")))
    }
}

/// Architecture plus input extents (`H × W × C`) and class count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchSpec {
    pub arch: ArchId,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
}

const MLP_HIDDEN: usize = 64;
const POOL_HIDDEN: usize = 32;

enum Layer {
    Conv { name: &'static str, out: usize, k: usize, pad: usize },
    Dense { name: &'static str, out: usize },
    Relu,
    Pool(usize),
    Flatten,
}

impl ArchSpec {
    pub fn new(arch: ArchId, height: usize, width: usize, channels: usize, classes: usize) -> Self {
        ArchSpec { arch, height, width, channels, classes }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    fn layers(&self) -> Vec<Layer> {
        use Layer::*;
        let classes = self.classes;
        match self.arch {
            ArchId::Mlp2 => vec![
                Flatten,
                Dense { name: "fc1", out: MLP_HIDDEN },
                Relu,
                Dense { name: "fc2", out: classes },
            ],
            ArchId::CnnA => vec![
                Conv { name: "conv1", out: 6, k: 3, pad: 0 },
                Relu,
                Conv { name: "conv2", out: 8, k: 3, pad: 0 },
                Relu,
                Flatten,
                Dense { name: "fc", out: classes },
            ],
            ArchId::CnnB => vec![
                Conv { name: "conv1", out: 6, k: 5, pad: 0 },
                Relu,
                Conv { name: "conv2", out: 8, k: 3, pad: 0 },
                Relu,
                Conv { name: "conv3", out: 8, k: 3, pad: 0 },
                Relu,
                Flatten,
                Dense { name: "fc", out: classes },
            ],
            ArchId::CnnPool => vec![
                Conv { name: "conv1", out: 8, k: 3, pad: 1 },
                Relu,
                Pool(2),
                Flatten,
                Dense { name: "fc1", out: POOL_HIDDEN },
                Relu,
                Dense { name: "fc2", out: classes },
            ],
        }
    }

    /// Parameter names and shapes in layer order, with their fan-in.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>, usize)>> {
        if self.height == 0 || self.width == 0 || self.channels == 0 || self.classes < 2 {
            return Err(Error::config("arch extents must be positive with at least 2 classes"));
        }
        let mut shape = vec![self.channels, self.height, self.width];
        let mut out = Vec::new();
        for layer in self.layers() {
            match layer {
                Layer::Conv { name, out: o, k, pad } => {
                    let (h, w) = (shape[1] + 2 * pad, shape[2] + 2 * pad);
                    if h < k || w < k {
                        return Err(Error::config(format!("{} input too small for {name}", self.arch)));
                    }
                    let fan_in = shape[0] * k * k;
                    out.push((format!("{name}.w"), vec![o, shape[0], k, k], fan_in));
                    out.push((format!("{name}.b"), vec![o], fan_in));
                    shape = vec![o, h - k + 1, w - k + 1];
                }
                Layer::Dense { name, out: o } => {
                    let fan_in = shape.iter().product::<usize>();
                    out.push((format!("{name}.w"), vec![o, fan_in], fan_in));
                    out.push((format!("{name}.b"), vec![o], fan_in));
                    shape = vec![o];
                }
                Layer::Pool(k) => {
                    if shape[1] < k || shape[2] < k {
                        return Err(Error::config("pool larger than feature map"));
                    }
                    shape = vec![shape[0], shape[1] / k, shape[2] / k];
                }
                Layer::Relu => {}
                Layer::Flatten => shape = vec![shape.iter().product()],
            }
        }
        Ok(out)
    }
}

/// A named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// A classifier of the zoo.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ArchSpec,
    pub params: Vec<Param>,
    pub trained: bool,
    pub train_seed: u64,
    input_shape: [usize; 3],
}

impl Model {
    pub(crate) fn from_parts(spec: ArchSpec, params: Vec<Param>, trained: bool, train_seed: u64) -> Result<Self> {
        let expected = spec.param_shapes()?;
        if expected.len() != params.len() {
            return Err(Error::config(format!(
                "{} expects {} parameters, got {}",
                spec.arch,
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape, _), p) in expected.iter().zip(&params) {
            if &p.name != name || p.value.shape() != shape.as_slice() {
                return Err(Error::config(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
            if !p.value.is_finite() {
                return Err(Error::Divergence(format!("parameter {} is not finite", p.name)));
            }
        }
        Ok(Model { spec, params, trained, train_seed, input_shape: spec.input_shape() })
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records the forward pass with the given parameter leaves.
    pub(crate) fn forward_with<'a>(&self, g: &mut Graph<'a>, x: NodeId, leaves: &[NodeId]) -> Result<NodeId> {
        let mut h = x;
        let mut pi = 0;
        for layer in self.spec.layers() {
            h = match layer {
                Layer::Conv { pad, .. } => {
                    let r = g.conv2d(h, leaves[pi], leaves[pi + 1], pad)?;
                    pi += 2;
                    r
                }
                Layer::Dense { .. } => {
                    let r = g.dense(h, leaves[pi], leaves[pi + 1])?;
                    pi += 2;
                    r
                }
                Layer::Relu => g.relu(h)?,
                Layer::Pool(k) => g.avg_pool(h, k)?,
                Layer::Flatten => {
                    let n = g.value(h).len();
                    g.reshape(h, &[n])?
                }
            };
        }
        Ok(h)
    }
}

impl Classifier for Model {
    fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn num_classes(&self) -> usize {
        self.spec.classes
    }

    fn logits<'a>(&'a self, g: &mut Graph<'a>, input: NodeId) -> Result<NodeId> {
        let mut leaves = Vec::with_capacity(self.params.len());
        for p in &self.params {
            leaves.push(g.leaf_ref(&p.value, false)?);
        }
        self.forward_with(g, input, &leaves)
    }
}

/// Seeded, untrained model with He-uniform weights and zero biases.
pub fn build_model(spec: ArchSpec, seed: u64) -> Result<Model> {
    let shapes = spec.param_shapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = shapes
        .into_iter()
        .map(|(name, shape, fan_in)| {
            let value = if name.ends_with(".b") {
                Tensor::zeros(&shape)
            } else {
                let bound = (6.0 / fan_in as f64).sqrt();
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                Tensor::new(shape, data).expect("shape and data agree")
            };
            Param { name, value }
        })
        .collect();
    Model::from_parts(spec, params, false, seed)
}
