//! Minimal differentiable computation substrate: dense tensors, a
//! reverse-mode tape, LSTM cells, optimizers, checkpoints, and a
//! finite-difference gradient oracle.

mod checkpoint;
mod fdcheck;
mod lstm;
mod optim;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use fdcheck::finite_diff_check;
pub use lstm::{bilstm, lstm_cell, LstmWeights};
pub use optim::{Optimizer, OptimizerKind, ParameterSet};
pub use tensor::{BoundParams, Gradients, Tape, Tensor, Var};
