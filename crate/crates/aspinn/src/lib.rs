//! Meshless PDE solver built on sums of Gaussian kernels with trainable
//! anisotropic zones of influence.
//!
//! Each node of the ansatz u(x) = Σᵢ Uᵢ φ(‖Σᵢ⁻¹(x − Xᵢ)‖) carries a
//! center Xᵢ, a weight Uᵢ, and an SPD matrix Σᵢ parametrized by an
//! unconstrained log-Cholesky factor. Training minimizes a collocation
//! residual loss with a penalty-weighted boundary term using Adam, and
//! the trained Σᵢ eigen-structure is directly interpretable as an
//! ellipsoidal zone of influence per node.
//!
//! Modules:
//! - [`model`]: the ansatz, its spatial derivatives, and the SPD assembly
//! - [`gradients`]: the discretized loss and its exact parameter gradient
//! - [`problems`]: benchmark PDEs (elliptic and hyperbolic, spacetime)
//! - [`sampling`]: collocation sets, initial node layout, batching
//! - [`trainer`]: Adam loop, metrics, reporting
//! - [`reference`]: finite-difference and finite-volume ground truths

pub mod gradients;
pub mod model;
pub mod problems;
pub mod reference;
pub mod sampling;
pub mod scalar;
pub mod trainer;

pub use gradients::{fd_grad_oracle, loss_and_grad, loss_only, FlatGradient, LossGrad};
pub use model::{
    assemble_l, eval, eval_derivs, sigma, whiten, zone_of_influence, Ellipse, Kernel,
    LogCholeskyFactor, ModelParams, Node,
};
pub use problems::{by_name, DomainSpec, PdeProblem};
pub use reference::{fd_poisson_slit, godunov_burgers, resample, GridSolution};
pub use sampling::{batches, generate_samples, init_nodes, BatchPlan, BatchSize, SampleSet};
pub use trainer::{adam_step, l2_error, train, AdamState, TrainConfig, TrainReport};
