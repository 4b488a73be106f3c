//! Decentralized stochastic gradient methods driven by Markov-chain sampling,
//! with tools to measure their algorithmic stability and to evaluate the
//! matching analytic bounds.

pub mod bounds;
pub mod chain;
pub mod engine;
pub mod linalg;
pub mod problems;
pub mod seed;
pub mod stability;
pub mod topology;
