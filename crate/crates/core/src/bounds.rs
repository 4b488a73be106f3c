//! Closed-form stability, generalization and optimization-error bounds as
//! pure functions of the problem constants.
//!
//! Notation: `S_t = Σ_{q=1}^{t} η_q λ^{t−q}` (main convention) and
//! `A_t = Σ_{q=1}^{t−1} η_q λ^{t−q−1}` (appendix convention, `A_t = S_{t−1}`).
//! `0⁰` is taken as 1, so at `λ = 0` the sums keep their last term.

use crate::linalg::pairwise_sum;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, SQRT_2};
use thiserror::Error;

const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("invalid bound input: {0}")]
    Input(String),
    #[error("stepsize condition violated: {0}")]
    Stepsize(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexConvention {
    Main,
    Appendix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    Decreasing,
}

/// Form of the non-smooth constant-step bound: `Main` carries `1/√(1−λ)`,
/// `Appendix` carries `1/(1−λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Main,
    Appendix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// `η_1, …, η_T`
    pub etas: Vec<f64>,
    /// Gossip consensus rate.
    pub lambda: f64,
    pub lipschitz: f64,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub m: usize,
    pub n: usize,
    /// Chain mixing parameter `λ(H) ∈ [1/2, 1)`.
    pub lambda_h: f64,
    pub k_h: usize,
    pub c_h: f64,
    /// `‖w_S*‖`
    pub d0: f64,
    /// `sup_Z f(0; Z)`
    pub sup_f0: f64,
    /// Replaces the analytic trajectory diameter (non-analytic diagnostic).
    pub diameter_override: Option<f64>,
}

impl BoundInputs {
    /// Inputs for a symmetric chain with `λ(H) = 1/2`, `K_H = 0`,
    /// `C_H = n^{3/2}`.
    pub fn new(etas: Vec<f64>, lambda: f64, lipschitz: f64, m: usize, n: usize) -> Self {
        Self {
            etas,
            lambda,
            lipschitz,
            beta: None,
            rho: None,
            m,
            n,
            lambda_h: 0.5,
            k_h: 0,
            c_h: (n as f64).powf(1.5),
            d0: 0.0,
            sup_f0: 0.0,
            diameter_override: None,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
        self
    }

    pub fn horizon(&self) -> usize {
        self.etas.len()
    }

    fn mn(&self) -> f64 {
        (self.m * self.n) as f64
    }

    fn eta_sum(&self) -> f64 {
        pairwise_sum(&self.etas)
    }

    fn validate(&self) -> Result<(), BoundError> {
        let bad = |msg: String| Err(BoundError::Input(msg));
        if !(0.0..1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0,1), got {}", self.lambda));
        }
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return bad(format!("L must be nonnegative, got {}", self.lipschitz));
        }
        if self.m == 0 || self.n == 0 {
            return bad("m and n must be positive".into());
        }
        if self.etas.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return bad("stepsizes must be nonnegative".into());
        }
        if let Some(b) = self.beta {
            if !(b >= 0.0 && b.is_finite()) {
                return bad(format!("beta must be nonnegative, got {b}"));
            }
        }
        if let Some(r) = self.rho {
            if !(r >= 0.0) {
                return bad(format!("rho must be nonnegative, got {r}"));
            }
        }
        Ok(())
    }

    fn smooth_beta(&self) -> Result<f64, BoundError> {
        let beta = self
            .beta
            .ok_or_else(|| BoundError::Unsupported("smooth bound needs beta".into()))?;
        if beta > 0.0 {
            let cap = 2.0 / beta;
            if let Some(e) = self.etas.iter().find(|e| **e > cap * (1.0 + STEP_TOL)) {
                return Err(BoundError::Stepsize(format!("eta = {e} exceeds 2/beta = {cap}")));
            }
        }
        Ok(beta)
    }

    fn sgda_beta(&self) -> Result<f64, BoundError> {
        let beta = self
            .beta
            .ok_or_else(|| BoundError::Unsupported("smooth bound needs beta".into()))?;
        let cap = 1.0 / (2.0 * beta);
        let total = self.eta_sum();
        if total > cap * (1.0 + STEP_TOL) {
            return Err(BoundError::Stepsize(format!(
                "stepsize sum {total} exceeds 1/(2 beta) = {cap}"
            )));
        }
        Ok(beta)
    }

    /// The common step if the schedule is constant and nonempty.
    fn constant_eta(&self) -> Option<f64> {
        let first = *self.etas.first()?;
        self.etas.iter().all(|e| *e == first).then_some(first)
    }

    fn require_constant(&self) -> Result<f64, BoundError> {
        self.constant_eta()
            .ok_or_else(|| BoundError::Unsupported("bound needs a constant stepsize schedule".into()))
    }
}

/// `S_t` (main) or `A_t` (appendix) for `t = 1..=T`, by direct recursion.
pub fn consensus_sums(etas: &[f64], lambda: f64, convention: IndexConvention) -> Vec<f64> {
    let mut main = 0.0;
    etas.iter()
        .map(|eta| {
            let previous = main;
            main = lambda * main + eta;
            match convention {
                IndexConvention::Main => main,
                IndexConvention::Appendix => previous,
            }
        })
        .collect()
}

/// `Σ_t η_t S_t` (or `Σ_t η_t A_t`). Constant schedules use the geometric
/// closed form.
pub fn weighted_consensus_sum(etas: &[f64], lambda: f64, convention: IndexConvention) -> f64 {
    let t = etas.len();
    if t == 0 {
        return 0.0;
    }
    let first = etas[0];
    if etas.iter().all(|e| *e == first) {
        // Σ_{t=1}^{T} (1 − λ^t)/(1 − λ) = T/(1−λ) − λ(1 − λ^T)/(1−λ)²
        let tf = t as f64;
        let main_sum = if lambda == 0.0 {
            tf
        } else {
            let g = 1.0 - lambda;
            tf / g - lambda * (1.0 - lambda.powi(t as i32)) / (g * g)
        };
        let total = match convention {
            IndexConvention::Main => main_sum,
            // A_t = S_{t−1}: drop the last main term.
            IndexConvention::Appendix => {
                main_sum - if lambda == 0.0 { 1.0 } else { (1.0 - lambda.powi(t as i32)) / (1.0 - lambda) }
            }
        };
        return first * first * total;
    }
    let sums = consensus_sums(etas, lambda, convention);
    let terms: Vec<f64> = etas.iter().zip(&sums).map(|(e, s)| e * s).collect();
    pairwise_sum(&terms)
}

/// `C_λ = (1/(λ ln(1/λ)))·(8/(e² ln(1/λ)) + 2)` for `λ ∈ (0,1)`; at `λ = 0`
/// the weighted sum equals `1/t`, so `C_0 = 1`.
pub fn c_lambda(lambda: f64) -> Result<f64, BoundError> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(BoundError::Domain(format!("C_lambda needs lambda in [0,1), got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    let l = (1.0 / lambda).ln();
    Ok((8.0 / (E * E * l) + 2.0) / (lambda * l))
}

/// `Σ_{q=1}^{t−1} λ^{t−1−q}/(q+1)`, the sum bounded by `C_λ/t`.
pub fn c_lambda_sum(lambda: f64, t: usize) -> f64 {
    let mut acc = 0.0;
    for q in 1..t {
        acc = lambda * acc + 1.0 / (q as f64 + 1.0);
    }
    acc
}

/// On-average stability of DMc-SGD (CtG).
///
/// Smooth: `4βL Σ η_t S_t + (2L/mn) Σ η_t`.
/// Non-smooth: `2L√(Σ η_t²) + 4L√(Σ η_t S_t) + (4L/mn) Σ η_t`.
pub fn stability_bound_sgd(
    inputs: &BoundInputs,
    smooth: bool,
    convention: IndexConvention,
) -> Result<f64, BoundError> {
    inputs.validate()?;
    let l = inputs.lipschitz;
    let cons = weighted_consensus_sum(&inputs.etas, inputs.lambda, convention);
    let eta_sum = inputs.eta_sum();
    if smooth {
        let beta = inputs.smooth_beta()?;
        Ok(4.0 * beta * l * cons + 2.0 * l * eta_sum / inputs.mn())
    } else {
        let sq: Vec<f64> = inputs.etas.iter().map(|e| e * e).collect();
        Ok(2.0 * l * pairwise_sum(&sq).sqrt() + 4.0 * l * cons.sqrt() + 4.0 * l * eta_sum / inputs.mn())
    }
}

fn check_decreasing(inputs: &BoundInputs) -> Result<(), BoundError> {
    let ok = inputs
        .etas
        .iter()
        .enumerate()
        .all(|(i, e)| (e - 1.0 / (i as f64 + 2.0)).abs() <= 1e-15);
    if !ok || inputs.etas.is_empty() {
        return Err(BoundError::Unsupported(
            "decreasing form needs eta_t = 1/(t+1)".into(),
        ));
    }
    Ok(())
}

/// Closed-form stability bounds for constant and `1/(t+1)` schedules.
pub fn corollary_bound(
    inputs: &BoundInputs,
    smooth: bool,
    schedule: ScheduleKind,
    variant: Variant,
) -> Result<f64, BoundError> {
    inputs.validate()?;
    let l = inputs.lipschitz;
    let t = inputs.horizon() as f64;
    let mn = inputs.mn();
    let gap = 1.0 - inputs.lambda;
    match (smooth, schedule) {
        (true, ScheduleKind::Constant) => {
            let eta = inputs.require_constant()?;
            let beta = inputs.smooth_beta()?;
            Ok(4.0 * eta * eta * beta * l * t / gap + 2.0 * eta * l * t / mn)
        }
        (true, ScheduleKind::Decreasing) => {
            check_decreasing(inputs)?;
            let beta = inputs.smooth_beta()?;
            let c = c_lambda(inputs.lambda)?;
            Ok(4.0 * beta * l * c * t / (t + 1.0) + 2.0 * l * (t + 1.0).ln() / mn)
        }
        (false, ScheduleKind::Constant) => {
            let eta = inputs.require_constant()?;
            Ok(nonsmooth_constant(eta, l, t, inputs.lambda, mn, variant))
        }
        (false, ScheduleKind::Decreasing) => {
            check_decreasing(inputs)?;
            let c = c_lambda(inputs.lambda)?;
            Ok(2.0 * l + 4.0 * l * c.sqrt() + 2.0 * l * t.ln() / mn)
        }
    }
}

fn nonsmooth_constant(eta: f64, l: f64, t: f64, lambda: f64, mn: f64, variant: Variant) -> f64 {
    let gap = 1.0 - lambda;
    let denom = match variant {
        Variant::Main => gap.sqrt(),
        Variant::Appendix => gap,
    };
    2.0 * l * eta * t.sqrt() + 4.0 * eta * l * t.sqrt() / denom + 4.0 * eta * l * t / mn
}

/// Generalization of the step-weighted averaged iterate (constant step).
///
/// Smooth: `2η²βLT/(1−λ) + ηLT/(mn)`. Non-smooth: as the constant-step
/// non-smooth stability bound.
pub fn generalization_bound_avg(
    inputs: &BoundInputs,
    smooth: bool,
    variant: Variant,
) -> Result<f64, BoundError> {
    inputs.validate()?;
    let eta = inputs.require_constant()?;
    let l = inputs.lipschitz;
    let t = inputs.horizon() as f64;
    if smooth {
        let beta = inputs.smooth_beta()?;
        Ok(2.0 * eta * eta * beta * l * t / (1.0 - inputs.lambda) + eta * l * t / inputs.mn())
    } else {
        Ok(nonsmooth_constant(eta, l, t, inputs.lambda, inputs.mn(), variant))
    }
}

/// `2√m L Σ_{q=1}^{t} η_q λ^{t−q}`, an upper bound on the consensus error at
/// step `t`.
pub fn consensus_bound(inputs: &BoundInputs, t: usize) -> Result<f64, BoundError> {
    inputs.validate()?;
    if t > inputs.horizon() {
        return Err(BoundError::Input(format!("t = {t} exceeds T = {}", inputs.horizon())));
    }
    if t == 0 {
        return Ok(0.0);
    }
    let s = consensus_sums(&inputs.etas[..t], inputs.lambda, IndexConvention::Main)[t - 1];
    Ok(2.0 * (inputs.m as f64).sqrt() * inputs.lipschitz * s)
}

/// All consensus bounds for `t = 0..=T`.
pub fn consensus_bounds(inputs: &BoundInputs) -> Result<Vec<f64>, BoundError> {
    inputs.validate()?;
    let scale = 2.0 * (inputs.m as f64).sqrt() * inputs.lipschitz;
    let mut out = vec![0.0];
    out.extend(
        consensus_sums(&inputs.etas, inputs.lambda, IndexConvention::Main)
            .into_iter()
            .map(|s| scale * s),
    );
    Ok(out)
}

/// GtC stability: `(2L/mn) Σ η_t`, with no consensus term.
pub fn gtc_stability_bound(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    Ok(2.0 * inputs.lipschitz * inputs.eta_sum() / inputs.mn())
}

/// DMc-SGDA stability (sum over both blocks).
///
/// Smooth: `8√2 βL Σ η_t A_t + (4√2 L/mn) Σ η_t`, requiring
/// `Σ η_t ≤ 1/(2β)`. Non-smooth is an order-level expression with unit
/// constants: `√(Σ η_t²) + √(Σ η_t A_t) + Σ η_t/(mn)`.
pub fn sgda_stability_bound(inputs: &BoundInputs, smooth: bool) -> Result<f64, BoundError> {
    inputs.validate()?;
    let cons = weighted_consensus_sum(&inputs.etas, inputs.lambda, IndexConvention::Appendix);
    let eta_sum = inputs.eta_sum();
    if smooth {
        let beta = inputs.sgda_beta()?;
        let l = inputs.lipschitz;
        Ok(8.0 * SQRT_2 * beta * l * cons + 4.0 * SQRT_2 * l * eta_sum / inputs.mn())
    } else {
        let sq: Vec<f64> = inputs.etas.iter().map(|e| e * e).collect();
        Ok(pairwise_sum(&sq).sqrt() + cons.sqrt() + eta_sum / inputs.mn())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SgdaGeneralization {
    pub weak_pd: f64,
    /// Present only when `ρ > 0`.
    pub primal: Option<f64>,
}

/// Weak primal-dual and primal generalization bounds for DMc-SGDA with a
/// constant step.
pub fn sgda_generalization_bounds(inputs: &BoundInputs, smooth: bool) -> Result<SgdaGeneralization, BoundError> {
    inputs.validate()?;
    let eta = inputs.require_constant()?;
    let l2 = inputs.lipschitz * inputs.lipschitz;
    let t = inputs.horizon() as f64;
    let mn = inputs.mn();
    let gap = 1.0 - inputs.lambda;
    let factor = match (inputs.rho, inputs.beta) {
        (Some(rho), Some(beta)) if rho > 0.0 => Some(1.0 + beta / rho),
        _ => None,
    };
    if smooth {
        let beta = inputs.sgda_beta()?;
        let weak_pd = 4.0 * SQRT_2 * eta * eta * beta * l2 * t / gap + 2.0 * SQRT_2 * eta * l2 * t / mn;
        let primal = factor.map(|f| 2.0 * SQRT_2 * l2 * f * (2.0 * eta * eta * beta * t / gap + eta * t / mn));
        Ok(SgdaGeneralization { weak_pd, primal })
    } else {
        let rt = t.sqrt();
        let weak_pd = 2.0 * SQRT_2 * l2 * eta * rt + 4.0 * eta * l2 * rt / gap.sqrt()
            + 4.0 * SQRT_2 * eta * l2 * t / mn;
        let primal = factor.map(|f| {
            2.0 * SQRT_2 * l2 * f * (eta * rt + eta * (2.0 * t).sqrt() / gap.sqrt() + 2.0 * eta * t / mn)
        });
        Ok(SgdaGeneralization { weak_pd, primal })
    }
}

/// The primal bound alone; needs `ρ > 0` and `β`.
pub fn sgda_primal_bound(inputs: &BoundInputs, smooth: bool) -> Result<f64, BoundError> {
    sgda_generalization_bounds(inputs, smooth)?
        .primal
        .ok_or_else(|| BoundError::Unsupported("primal bound needs rho > 0 and beta".into()))
}

/// `D = [Σ_s η_s (L² + 2L² A_s + 2 sup f(0,Z))]^{1/2} + ‖w_S*‖`.
pub fn trajectory_diameter(inputs: &BoundInputs) -> f64 {
    let l2 = inputs.lipschitz * inputs.lipschitz;
    let a = consensus_sums(&inputs.etas, inputs.lambda, IndexConvention::Appendix);
    let terms: Vec<f64> = inputs
        .etas
        .iter()
        .zip(&a)
        .map(|(e, a_s)| e * (l2 + 2.0 * l2 * a_s + 2.0 * inputs.sup_f0))
        .collect();
    pairwise_sum(&terms).sqrt() + inputs.d0
}

/// `T_t = min{max{⌈ln(2 C_H D n t)/ln(1/λ(H))⌉, K_H}, t}`.
pub fn truncation_window(t: usize, inputs: &BoundInputs, diameter: f64) -> Result<usize, BoundError> {
    let lh = inputs.lambda_h;
    if !(lh < 1.0) {
        return Err(BoundError::Domain(format!("lambda(H) = {lh} must be below 1")));
    }
    if !(lh > 0.0) {
        return Err(BoundError::Domain(format!("lambda(H) = {lh} must be positive")));
    }
    let arg = 2.0 * inputs.c_h * diameter * inputs.n as f64 * t as f64;
    let raw = if arg > 0.0 {
        (arg.ln() / (1.0 / lh).ln()).ceil()
    } else {
        f64::NEG_INFINITY
    };
    let lower = raw.max(inputs.k_h as f64);
    Ok(lower.min(t as f64).max(0.0) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizationBound {
    pub total: f64,
    /// `L² Σ η_t (Σ_{q=t−T_t+1}^{t} η_q + Σ_{q=t−T_t+1}^{t−1} η_q) / Σ η`
    pub window: f64,
    /// `(‖w_S*‖² + 4LD Σ_{t=1}^{K_H−1} η_t) / (2 Σ η)`
    pub initial: f64,
    /// `2DβL Σ η_t A_t / Σ η` (smooth) or `2DL Σ η_t / Σ η` (non-smooth)
    pub consensus: f64,
    /// `Σ_{t=max(K_H,1)}^{T} Lη_t/(2t) / Σ η`
    pub mixing: f64,
    /// `L² Σ η_t² / (2 Σ η)`
    pub variance: f64,
    pub diameter: f64,
    /// False when `diameter_override` replaced the analytic `D`.
    pub diameter_analytic: bool,
}

/// Optimization-error bound for convex losses under Markov sampling with a
/// symmetric chain, term by term.
pub fn optimization_bound_convex(inputs: &BoundInputs, smooth: bool) -> Result<OptimizationBound, BoundError> {
    inputs.validate()?;
    let eta_sum = inputs.eta_sum();
    if !(eta_sum > 0.0) {
        return Err(BoundError::Unsupported("all stepsizes are zero: bound is 0/0".into()));
    }
    let l = inputs.lipschitz;
    let etas = &inputs.etas;
    let horizon = etas.len();
    let beta = if smooth {
        Some(inputs.smooth_beta()?)
    } else {
        if l > 0.0 {
            if let Some(e) = etas.iter().find(|e| **e > 2.0 / l * (1.0 + STEP_TOL)) {
                return Err(BoundError::Stepsize(format!("eta = {e} exceeds 2/L")));
            }
        }
        None
    };
    let (diameter, diameter_analytic) = match inputs.diameter_override {
        Some(d) => (d, false),
        None => (trajectory_diameter(inputs), true),
    };

    // prefix[k] = η_1 + … + η_k
    let mut prefix = vec![0.0; horizon + 1];
    for (k, e) in etas.iter().enumerate() {
        prefix[k + 1] = prefix[k] + e;
    }
    let mut window_terms = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let tt = truncation_window(t, inputs, diameter)?;
        let lo = t - tt; // first included index is lo + 1
        let through_t = prefix[t] - prefix[lo];
        let through_prev = if tt >= 1 { prefix[t - 1] - prefix[lo] } else { 0.0 };
        window_terms.push(etas[t - 1] * (through_t + through_prev));
    }
    let window = l * l * pairwise_sum(&window_terms) / eta_sum;

    let burn_in = prefix[inputs.k_h.saturating_sub(1).min(horizon)];
    let initial = (inputs.d0 * inputs.d0 + 4.0 * l * diameter * burn_in) / (2.0 * eta_sum);

    let consensus = match beta {
        Some(b) => {
            2.0 * diameter * b * l
                * weighted_consensus_sum(etas, inputs.lambda, IndexConvention::Appendix)
                / eta_sum
        }
        None => 2.0 * diameter * l * eta_sum / eta_sum,
    };

    let tail: Vec<f64> = (inputs.k_h.max(1)..=horizon)
        .map(|t| l * etas[t - 1] / (2.0 * t as f64))
        .collect();
    let mixing = pairwise_sum(&tail) / eta_sum;

    let sq: Vec<f64> = etas.iter().map(|e| e * e).collect();
    let variance = l * l * pairwise_sum(&sq) / (2.0 * eta_sum);

    Ok(OptimizationBound {
        total: window + initial + consensus + mixing + variance,
        window,
        initial,
        consensus,
        mixing,
        variance,
        diameter,
        diameter_analytic,
    })
}
