//! Dense layers with hand-written reverse-mode gradients, losses, and the
//! Adam optimizer.

pub mod loss;
pub mod lstm;
pub mod ops;
pub mod optim;
mod stack;

pub use loss::{class_weights, softmax_ce_loss, weighted_bce_loss};
pub use lstm::{lstm_backward, lstm_forward, LstmParams, LstmTrace};
pub use ops::{
    affine_backward, affine_forward, mean_pool_backward, mean_pool_forward, temporal_conv_backward,
    temporal_conv_forward,
};
pub use optim::{lr_schedule, Adam};
pub use stack::{Layer, LayerStack, Mode, StackTrace};
