//! Dense 2-D tensors, activations, the weighted BCE loss, Adam, and a
//! central-difference gradient checker.

mod activation;
mod adam;
mod gradcheck;
mod loss;
mod tensor;

pub use activation::{activation, relu, sigmoid, Activation};
pub use adam::{adam_step, AdamConfig, Param};
pub use gradcheck::finite_diff_gradcheck;
pub use loss::{bce_logit_grad, bce_loss, bce_term, BCE_EPS};
pub use tensor::{
    add, add_row_bias, hcat, hsplit, matmul, matmul_acc, matmul_nt_acc, matmul_tn_acc, Tensor2D,
};
