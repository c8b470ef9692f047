//! The streaming decoder, its isolated-window CNN baseline, parameter
//! initialization and cost accounting.
//!
//! Two forward implementations exist. [`cell_step`] / [`decode_sequence`] are
//! the literal definition built from the tensor-level ops, one window at a
//! time. [`Model::predict`] and [`Model::loss_and_grad`] run the same math on
//! a whole sequence at once: since consecutive windows overlap, the valid
//! convolution is evaluated once over the sequence span and every window pools
//! its own slice of it. Training and evaluation use the latter.

mod cell;
mod cost;
mod fast;
mod gradcheck;
mod params;
mod window;

pub use cell::{cell_step, cnn_baseline, conv_block, decode_sequence, linear_block, CellState};
pub use cost::{count_macs, count_params, param_count, InputShape};
pub use fast::Scratch;
pub use gradcheck::{parameter_inputs, random_model, SequenceLossOp};
pub use params::{
    init_cnn_params, init_params, CnnParams, GatePath, Head, Model, ModelConfig, ModelKind,
    ParamSet, StreamAadParams, N_CLASSES,
};
pub use window::{DecisionWindow, WindowSequence};
