//! Marginal likelihood, maximum-likelihood fitting, numerical Hessian and
//! parametric draws of the parameter vector.

mod fit;
mod likelihood;
mod optim;

pub use fit::{default_init, draw_theta, fit_mle, FitOptions, FitResult};
pub use likelihood::{log_likelihood, LikelihoodEvaluator};
pub use optim::{bfgs, fd_step, numerical_gradient, numerical_hessian, OptimOptions, OptimOutcome, StepRule};
