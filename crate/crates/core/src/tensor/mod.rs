//! Dense tensors, a reverse-mode tape, seeded randomness and plain SGD.

mod dense;
mod graph;
mod rng;
mod sgd;

pub use dense::Tensor;
pub use graph::{Gradients, Graph, Var};
pub use rng::{derive_seed, RngState, SeededRng, StreamRole};
pub use sgd::{sgd_step, SgdConfig};

pub(crate) use sgd::apply as apply_sgd;
