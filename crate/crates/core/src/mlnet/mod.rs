//! The unrolled reconstruction network: tied-parameter layers initialized
//! from ISTA, hand-written backpropagation, and minibatch training.

mod network;
mod params;
mod train;

pub use network::{
    backward, batch_loss, forward, forward_from, forward_with_report, grad_output_dictionary, loss, loss_gradient,
    sample_gradients, Gradients, LayerTape, LossKind,
};
pub use params::{format_order, parse_order, MlNetParams, ParamKind, PARAMS_FORMAT_VERSION};
pub use train::{dataset_loss, train_mlnet, HistoryRow, TrainConfig, TrainingHistory, TrainingSample, HISTORY_CSV_HEADER};

pub use crate::solvers::{shrink_derivative as shrink_subgradient, shrink_threshold_derivative};

#[cfg(test)]
mod tests;
