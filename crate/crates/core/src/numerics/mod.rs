//! Small from-scratch MLP engine: forward pass, exact backpropagation,
//! Hessian-vector products and the SGD/Adam optimizers.

mod maml;
mod mlp;
mod optim;
mod scalar;

pub use maml::{
    grad_through_inner_step, hessian_vector_product, inner_outer, ClassifierLoss, GradOrder,
    InnerOuter, LabeledExample, Objective,
};
pub use mlp::{
    activation_vjp, backward, ce_generic, ce_logit_grad, cross_entropy_loss, forward_trace,
    mlp_backward, mlp_forward, mlp_init, softmax_in_place, softmax_vjp, Activation, LayerSpec,
    MlpLayout, MlpParams, Trace, PROB_FLOOR,
};
pub use optim::{opt_step, OptimizerKind, OptimizerState};
pub use scalar::{Dual, Scalar};
