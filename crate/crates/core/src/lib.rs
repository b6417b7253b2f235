//! Bounds on the deviation tail `P(r(θ̂, θ₀) > v)` of maximum likelihood
//! estimators via chaining over the log-likelihood ratio field, together with
//! the Monte Carlo machinery to check them.

pub mod phi;
pub mod quad;
pub mod family;
pub mod chaining;
pub mod bounds;
pub mod simulate;
