//! Restaking networks under slashing.
//!
//! The crate models services secured by restaked operator stake, evaluates
//! attacks on them, implements marginal and multiplicative slashing rules,
//! studies Sybil incentives through best responses, and measures attack
//! success on random stochastic-block-model networks both analytically and by
//! simulation.
//!
//! Mechanism code is generic over [`Scalar`]: use [`Rational`] for exact
//! results and `f64` for speed. The random-network layers work in `f64`.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph;
pub mod lp;
pub mod marginal;
pub mod montecarlo;
pub mod multislash;
pub mod randnet;
pub mod scalar;
pub mod scenarios;
pub mod strategy;
pub mod worked_examples;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;

pub type ExactGraph = graph::RestakingGraph<Rational>;
pub type FloatGraph = graph::RestakingGraph<f64>;
pub type ExactAttack = graph::AttackSpec<Rational>;
pub type FloatAttack = graph::AttackSpec<f64>;
pub type ExactMarginalOutcome = marginal::MarginalSlashOutcome<Rational>;
pub type ExactMultOutcome = multislash::MultSlashOutcome<Rational>;
