//! Neural-network engine: layer kernels with hand-written backward passes,
//! the actor/critic topology, the Gaussian policy head, Adam and
//! checkpoints. Everything is `f64`.

mod adam;
mod checkpoint;
mod gaussian;
mod gemm;
mod init;
mod layers;
mod network;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use gaussian::{log_density, sample_action, sample_raw, PolicyOutput};
pub use gemm::gemm;
pub use layers::{Conv2d, Dense, MaxPool2};
pub use network::{Batch, ForwardCache, Head, Network, ParamBlock, Topology};
