//! Embedded-style runtime and cost analyzer for compact acoustic event
//! detection CNNs: log-mel front end, deterministic conv/pool/dense kernels,
//! the CNN-FC / CNN-C / CNN-CNP presets, a parameter/MAC cost model and the
//! `AEDM` binary16 model container.

pub mod analyzer;
pub mod error;
pub mod frontend;
pub mod graph;
pub mod model_io;
pub mod tensor;

pub use error::{Error, IntegrityError, Result};
pub use frontend::{Frontend, FrontendConfig};
pub use graph::{build_preset, classify, forward, Arch, LayerSpec, ModelWeights, NetworkSpec};
pub use tensor::{Shape3, Tensor};
