//! Physics-informed inverse network: loss assembly and training.

mod config;
mod loss;
mod train;

pub use config::{parse_kv, InverseConfig};
pub use loss::{
    assemble_inverse_loss, boundary_sigma_residual, hinge_value, inverse_loss, loss_and_gradient, loss_from_outputs,
    neumann_residual, pde_residual, top_t_indices, tv_value, GridTerms, InverseProblem, LossAdjoints, LossBreakdown,
};
pub use train::{initial_net, rasterize_net, train_inverse, train_inverse_with, InverseResult};
