//! Reference models and the additive `θ = σ + B·A` weight decomposition.

mod checkpoint;
mod forward;
mod params;
mod spec;

pub use checkpoint::{load_params, read_params, save_params, write_params};
pub use forward::{argmax_rows, evaluate_loss, forward, gradients, loss, predict, train_step, BoundModel};
pub use params::{
    conv_tau_index_map, init_decomposed, layer_ranks, rank_for, reinit_factors, DecomposedParam, LowRank,
    ModelParams, Phase,
};
pub use spec::{Architecture, LayerKind, LayerSpec, ModelSpec};
