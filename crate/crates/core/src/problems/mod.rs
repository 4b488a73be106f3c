//! Loss families with certified constants, synthetic data, projections and
//! reference solvers.

mod data;
mod erm;
mod loss;
mod saddle;

pub use data::{
    draw_dataset, synth_dataset, Dataset, Distribution, DistributionSpec, Sample, SampleSource,
};
pub use erm::erm_reference;
pub(crate) use loss::{empirical_risk_unchecked, project_in_place};
pub use loss::{
    empirical_risk, population_risk, project, LossKind, LossSpec, PopulationRisk,
    DEFAULT_POPULATION_DRAWS,
};
pub use saddle::{
    inner_sup, mean_sample, primal_minimum, primal_value, weak_pd_gap, MinimaxKind,
    MinimaxLossSpec, SaddleDistribution, SaddleSample, SaddleSpec,
};

use thiserror::Error;

/// Slack allowed when checking that a point lies in a projection ball.
pub const BALL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid problem parameter: {0}")]
    Parameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("solver did not converge: residual {residual:e} after {iterations} iterations")]
    Convergence { residual: f64, iterations: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub(crate) fn check_ball(x: &[f64], radius: f64, what: &str) -> Result<(), ProblemError> {
    let nx = crate::linalg::norm(x);
    if nx > radius * (1.0 + BALL_TOL) + BALL_TOL {
        return Err(ProblemError::Precondition(format!(
            "{what} has norm {nx} outside the ball of radius {radius}"
        )));
    }
    Ok(())
}
