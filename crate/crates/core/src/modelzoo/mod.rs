//! Toy surrogate and victim classifiers: construction, training and the
//! `TALW1` weight format.

mod arch;
mod train;
mod weights;

pub use arch::{build_model, ArchId, ArchSpec, Model, Param};
pub use train::{accuracy, classify, train_model, TrainConfig, TrainReport};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
