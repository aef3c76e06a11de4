//! Scalar reverse-mode tape, the conductivity network and its optimizer.

mod adam;
mod net;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use net::{
    sigmanet_spatial_grad, NetEval, Real, SigmaNet, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, DEPTH, HIDDEN, LAYERS,
    PARAM_COUNT, SIGMA_FLOOR,
};
pub use tape::{dot, sigmoid, softplus, sum, Gradients, Node, Op, Tape, Var};
