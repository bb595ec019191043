//! Input transformations averaged over random copies, TIM gradient
//! smoothing and the high-frequency spectral variants.

mod average;
mod draw;
mod mask;
mod spec;
mod tim;

pub use average::{averaged_transformed_gradient, transformed_gradient, TransformedOracle};
pub use draw::{dropout_count, AdmixPool, SpectralOp, TransformDraw, Transformer};
pub use mask::{highfreq_mask, selected_count, FrequencyMask};
pub use spec::{TransformKind, TransformSpec};
pub use tim::{gaussian_kernel, tim_smooth_gradient};
