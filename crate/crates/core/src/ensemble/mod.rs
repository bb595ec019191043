//! Multi-model attacks: lateral output fusion, the longitudinal sequence,
//! gradient alignment, per-model input transforms and model shuffling.

mod ait;
mod align;
mod fusion;
mod oracle;

pub use ait::{assign_async_transforms, instantiate, AitKind};
pub use align::{align_gradients, conflicts, project_out, ConflictRule};
pub use fusion::{
    analytic_fusion_gradient, autodiff_fusion_gradient, exact_fusion_gradient, fuse_nodes, fuse_outputs,
    resolve_weights, FusionMode, FusionView,
};
pub use oracle::{longitude_attack, longitude_attack_observed, model_orders, EnsembleSpec, LateralOracle};
