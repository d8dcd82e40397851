//! Input–output Jacobian spectrum statistics.
//!
//! With piecewise slope-{0,1} activations, every moment of the squared
//! activation derivative equals the same number
//! `μ = P(φ' = 1) = E[φ'(√q* Z)^{2k}]`, independent of `k`. The first two
//! moments of the spectrum of `J Jᵀ` for a depth-`L` stack follow
//!
//! ```text
//! m₁ = (σ_w² μ)^L,
//! m₂ = (σ_w² μ)^{2L} · L · (1/μ + 1/L - 1 - s₁),
//! σ²  = m₂ - m₁² = (σ_w² μ)^{2L} · L · (1/μ - 1 - s₁),
//! ```
//!
//! where `s₁` is the first moment of the S-transform of the weight
//! ensemble: -1 for i.i.d. Gaussian, 0 for orthogonal. On the EoC
//! (`σ_w² μ = 1`) the spectrum variance grows linearly in depth —
//! `L/(1-s)` for the unclipped kinds with Gaussian weights, `L·s/(1-s)`
//! with orthogonal weights — so dynamical isometry is out of reach for
//! every kind here.
//!
//! The moment generating function of `D²` is `M(z) = 1/(σ_w²·(1-z))` at
//! the EoC; it has no downstream consumer and is not exposed as an
//! operation.

use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::error::{Error, Result};
use crate::meanfield::MeanFieldParams;
use crate::special::std_normal_cdf;

/// Weight ensemble, encoded by the first moment of its S-transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightEnsemble {
    Gaussian,
    Orthogonal,
}

impl WeightEnsemble {
    /// First S-transform moment `s₁`.
    pub fn s1(self) -> f64 {
        match self {
            Self::Gaussian => -1.0,
            Self::Orthogonal => 0.0,
        }
    }
}

impl std::str::FromStr for WeightEnsemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "orthogonal" => Ok(Self::Orthogonal),
            other => Err(Error::Domain(format!("unknown weight ensemble '{other}'"))),
        }
    }
}

/// Spectrum summary for `J Jᵀ` of a depth-`L` network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Common value of all derivative moments `μ_k`.
    pub mu: f64,
    /// First spectrum moment `(σ_w² μ)^L`.
    pub m1: f64,
    /// Second spectrum moment.
    pub m2: f64,
    /// Spectrum variance `m₂ - m₁²`.
    pub variance: f64,
    /// S-transform first moment of the weight ensemble.
    pub s1: f64,
    pub depth: usize,
}

/// The common derivative moment `μ = E[φ'(√q* Z)^{2k}]` (independent of
/// `k` because the derivative only takes values 0 and 1). Equals one minus
/// the expected sparsity for the unclipped kinds.
pub fn mu(spec: &ActivationSpec, q_star: f64) -> Result<f64> {
    if !(q_star > 0.0) {
        return Err(Error::Domain(format!("q* must be > 0, got {q_star}")));
    }
    let a = spec.tau / q_star.sqrt();
    let relu_part = match spec.m {
        None => std_normal_cdf(-a),
        Some(m) => std_normal_cdf((spec.tau + m) / q_star.sqrt()) - std_normal_cdf(a),
    };
    Ok(if spec.kind.is_relu_family() {
        relu_part
    } else {
        2.0 * relu_part
    })
}

/// Spectrum moments of `J Jᵀ` for a depth-`L` stack at pre-activation
/// variance `q_star`.
pub fn jacobian_moments(
    spec: &ActivationSpec,
    params: &MeanFieldParams,
    q_star: f64,
    depth: usize,
    ensemble: WeightEnsemble,
) -> Result<SpectrumReport> {
    if depth < 1 {
        return Err(Error::Domain("depth must be >= 1".into()));
    }
    let mu = mu(spec, q_star)?;
    let s1 = ensemble.s1();
    let chi = params.sigma_w2 * mu;
    let l = depth as f64;
    let m1 = chi.powi(depth as i32);
    let growth = chi.powi(2 * depth as i32);
    let variance = growth * l * (1.0 / mu - 1.0 - s1);
    let m2 = growth * l * (1.0 / mu + 1.0 / l - 1.0 - s1);
    Ok(SpectrumReport {
        mu,
        m1,
        m2,
        variance,
        s1,
        depth,
    })
}

/// Backward gradient-magnitude recurrence: the second moment of the error
/// vector obeys `q̃^l = q̃^{l+1}·(N_{l+1}/N_l)·χ₁`. Given the widths
/// `[N_1, …, N_L]` and the value at the last layer, returns the predicted
/// profile `[q̃^1, …, q̃^L]`.
pub fn predicted_grad_profile(chi1: f64, widths: &[usize], q_tilde_last: f64) -> Vec<f64> {
    let l = widths.len();
    let mut profile = vec![0.0; l];
    if l == 0 {
        return profile;
    }
    profile[l - 1] = q_tilde_last;
    for i in (0..l - 1).rev() {
        profile[i] = profile[i + 1] * (widths[i + 1] as f64 / widths[i] as f64) * chi1;
    }
    profile
}
