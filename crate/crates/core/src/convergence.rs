//! Optimality-gap bound for gradient descent with a noisy, interfered
//! over-the-air aggregate.
//!
//! With step size `1/M` and contraction `κ = α(2−α)μ/M`, the gap after `T`
//! rounds is bounded by
//!
//! ```text
//! (1−κ)^T G₁
//!   + α²/(2M B²) Σ_t (1−κ)^(T−t) ‖(α/B) I_t‖²
//!   + d/(2M B²)  Σ_t (1−κ)^(T−t) Σ_k m_{k,t}²
//! ```

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::Loss;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceParams {
    /// M
    pub smoothness: f64,
    /// μ
    pub strong_convexity: f64,
    /// G₁ = F(w₁) − F*
    pub initial_gap: f64,
    pub alpha: f64,
    /// Total number of training samples B.
    pub batch_total: f64,
    /// Model dimension d.
    pub dim: usize,
}

impl ConvergenceParams {
    pub fn contraction(&self) -> f64 {
        self.alpha * (2.0 - self.alpha) * self.strong_convexity / self.smoothness
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.strong_convexity > 0.0 && self.strong_convexity <= self.smoothness) {
            return bad(format!("need 0 < mu <= M, got mu = {}, M = {}", self.strong_convexity, self.smoothness));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        if !(self.initial_gap >= 0.0) || !(self.batch_total > 0.0) || self.dim == 0 {
            return bad("initial gap, batch total and dimension must be nonnegative/positive".into());
        }
        let k = self.contraction();
        if !(k > 0.0 && k <= 1.0) {
            return bad(format!("contraction {k} outside (0, 1]"));
        }
        Ok(())
    }
}

/// Gap bound after `T = interference_norms.len()` rounds.
///
/// `interference_norms[t]` is ‖I_t‖ and `noise_powers[t]` is Σ_k m_{k,t}².
pub fn optimality_gap_bound(params: &ConvergenceParams, interference_norms: &[f64], noise_powers: &[f64]) -> Result<f64> {
    Ok(*bound_trace(params, interference_norms, noise_powers)?.last().expect("non-empty"))
}

/// The bound after each of rounds 1..=T.
pub fn bound_trace(params: &ConvergenceParams, interference_norms: &[f64], noise_powers: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    if interference_norms.len() != noise_powers.len() {
        return Err(Error::InvalidArgument("interference and noise sequences differ in length".into()));
    }
    if interference_norms.is_empty() {
        return Err(Error::InvalidArgument("at least one round is required".into()));
    }
    let rho = 1.0 - params.contraction();
    let (a, m, b) = (params.alpha, params.smoothness, params.batch_total);
    let c_int = a * a / (2.0 * m * b * b) * (a / b).powi(2);
    let c_noise = params.dim as f64 / (2.0 * m * b * b);
    let mut out = Vec::with_capacity(noise_powers.len());
    let mut contracted = params.initial_gap;
    let mut acc = 0.0;
    for (i_norm, noise) in interference_norms.iter().zip(noise_powers) {
        contracted *= rho;
        acc = rho * acc + c_int * i_norm * i_norm + c_noise * noise;
        out.push(contracted + acc);
    }
    Ok(out)
}

/// μ and M from the Hessian of the empirical loss, `(1/B) XᵀX` for
/// features `X` (one sample per row). Other fields are placeholders
/// (G₁ = 0, α = 1) to be filled by the caller.
pub fn estimate_constants(loss: Loss, features: &DMatrix<f64>) -> Result<ConvergenceParams> {
    if loss != Loss::Quadratic {
        return Err(Error::Unsupported(format!("curvature constants need a quadratic loss, got {loss:?}")));
    }
    let n = features.nrows();
    if n == 0 || features.ncols() == 0 {
        return Err(Error::InvalidArgument("empty feature matrix".into()));
    }
    let hessian = features.transpose() * features / n as f64;
    let eig = SymmetricEigen::new(hessian);
    let mu = eig.eigenvalues.min();
    let big_m = eig.eigenvalues.max();
    Ok(ConvergenceParams {
        smoothness: big_m,
        strong_convexity: mu,
        initial_gap: 0.0,
        alpha: 1.0,
        batch_total: n as f64,
        dim: features.ncols(),
    })
}

/// CSV with columns `t,empirical_gap,bound`.
pub fn trace_to_csv(gaps: &[f64], bounds: &[f64]) -> String {
    let mut out = String::from("t,empirical_gap,bound\n");
    for (t, (g, b)) in gaps.iter().zip(bounds).enumerate() {
        out.push_str(&format!("{},{g:e},{b:e}\n", t + 1));
    }
    out
}
