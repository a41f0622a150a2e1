//! Special functions: Gamma family and the two-parameter Mittag-Leffler function.

pub mod gamma;
pub mod mittag_leffler;

pub use gamma::{beta, digamma, gamma, ln_gamma_abs, rgamma};
pub use mittag_leffler::{evaluator, ml, ml_param_grad, ml_t_derivative, Branches, MittagLeffler, MlEvalPolicy, Route};
