use crate::error::{Error, Result};
use crate::harness::dataset::Dataset;
use crate::modelzoo::{build_model, train_model, ArchId, ArchSpec, Model, TrainConfig, TrainReport};
use crate::par::{try_map_indexed, Execution};

/// A model with the name it is reported under.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedModel {
    pub name: String,
    pub model: Model,
}

impl NamedModel {
    pub fn new(name: impl Into<String>, model: Model) -> Self {
        NamedModel { name: name.into(), model }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZooMember {
    pub name: String,
    pub arch: ArchId,
    /// Initialisation and training seed.
    pub seed: u64,
}

impl ZooMember {
    pub fn new(name: &str, arch: ArchId, seed: u64) -> Self {
        ZooMember { name: name.to_string(), arch, seed }
    }
}

/// Which models make up the zoo and how they are trained.
#[derive(Debug, Clone, PartialEq)]
pub struct ZooRecipe {
    pub surrogate: ZooMember,
    pub victims: Vec<ZooMember>,
    /// Surrogates of the ensemble experiments.
    pub ensemble: Vec<ZooMember>,
    pub train: TrainConfig,
}

/// One `cnn_a` surrogate, victims `mlp2`, `cnn_b` and `cnn_pool`, and four
/// ensemble surrogates that share no weights with the victims.
pub fn default_zoo() -> ZooRecipe {
    let surrogate = ZooMember::new("cnn_a", ArchId::CnnA, 11);
    ZooRecipe {
        victims: vec![
            ZooMember::new("mlp2", ArchId::Mlp2, 21),
            ZooMember::new("cnn_b", ArchId::CnnB, 31),
            ZooMember::new("cnn_pool", ArchId::CnnPool, 41),
        ],
        ensemble: vec![
            surrogate.clone(),
            ZooMember::new("cnn_a_2", ArchId::CnnA, 12),
            ZooMember::new("mlp2_2", ArchId::Mlp2, 22),
            ZooMember::new("cnn_pool_2", ArchId::CnnPool, 42),
        ],
        surrogate,
        train: TrainConfig::default(),
    }
}

impl ZooRecipe {
    /// Every distinct member, surrogate first.
    pub fn members(&self) -> Vec<ZooMember> {
        let mut out: Vec<ZooMember> = Vec::new();
        for m in std::iter::once(&self.surrogate).chain(&self.victims).chain(&self.ensemble) {
            if !out.iter().any(|o| o.name == m.name) {
                out.push(m.clone());
            }
        }
        out
    }
}

/// Builds and trains each member on the dataset's training split. Members
/// train concurrently under `exec`, each on a single worker.
pub fn train_members(
    ds: &Dataset,
    members: &[ZooMember],
    train: &TrainConfig,
    exec: Execution,
) -> Result<Vec<(NamedModel, TrainReport)>> {
    if members.is_empty() {
        return Err(Error::config("no zoo members to train"));
    }
    try_map_indexed(exec, members.len(), |i| {
        let m = &members[i];
        let spec = ArchSpec::new(m.arch, ds.height, ds.width, ds.channels, ds.classes);
        let mut model = build_model(spec, m.seed)?;
        let cfg = TrainConfig { seed: m.seed, exec: Execution::Sequential, ..*train };
        let report = train_model(&mut model, &ds.images, &ds.labels, &cfg)?;
        Ok((NamedModel::new(m.name.clone(), model), report))
    })
}
