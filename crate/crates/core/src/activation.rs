//! Sparsifying activation families.
//!
//! Four families, all piecewise linear with slopes in {0, 1}:
//!
//! - `ShiftedRelu`: `max(0, x - τ)` — zero below the threshold;
//! - `SoftThreshold`: odd variant, `sign(x)·max(0, |x| - τ)`;
//! - `ClippedRelu`: shifted ReLU with output clipped to `[0, m]`;
//! - `ClippedSoftThreshold`: soft threshold clipped to `[-m, m]`.
//!
//! A standard-normal pre-activation of variance `q` lands in the zero set
//! with probability `Φ(τ/√q)` (ReLU family) or `erf(τ/√(2q))` (soft
//! threshold family); thresholds for a target sparsity invert those maps.
//! Clipping changes nonzero values only, so it never affects sparsity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// The four activation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    #[serde(alias = "relu")]
    ShiftedRelu,
    #[serde(alias = "st")]
    SoftThreshold,
    #[serde(alias = "crelu")]
    ClippedRelu,
    #[serde(alias = "cst")]
    ClippedSoftThreshold,
}

impl ActivationKind {
    /// ReLU family (one-sided zero set) vs soft-threshold family (odd).
    pub fn is_relu_family(self) -> bool {
        matches!(self, Self::ShiftedRelu | Self::ClippedRelu)
    }

    pub fn is_clipped(self) -> bool {
        matches!(self, Self::ClippedRelu | Self::ClippedSoftThreshold)
    }

    /// Unclipped counterpart (identity for unclipped kinds).
    pub fn unclipped(self) -> Self {
        match self {
            Self::ClippedRelu => Self::ShiftedRelu,
            Self::ClippedSoftThreshold => Self::SoftThreshold,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ShiftedRelu => "shifted-relu",
            Self::SoftThreshold => "soft-threshold",
            Self::ClippedRelu => "clipped-relu",
            Self::ClippedSoftThreshold => "clipped-soft-threshold",
        }
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shifted-relu" | "shifted_relu" | "relu" => Ok(Self::ShiftedRelu),
            "soft-threshold" | "soft_threshold" | "st" => Ok(Self::SoftThreshold),
            "clipped-relu" | "clipped_relu" | "crelu" => Ok(Self::ClippedRelu),
            "clipped-soft-threshold" | "clipped_soft_threshold" | "cst" => {
                Ok(Self::ClippedSoftThreshold)
            }
            other => Err(Error::Domain(format!("unknown activation kind '{other}'"))),
        }
    }
}

/// An activation with its threshold `τ ≥ 0` and, for clipped kinds, the
/// clip magnitude `m > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub tau: f64,
    pub m: Option<f64>,
}

impl ActivationSpec {
    pub fn new(kind: ActivationKind, tau: f64, m: Option<f64>) -> Result<Self> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::Domain(format!(
                "threshold tau must be finite and >= 0, got {tau}"
            )));
        }
        match (kind.is_clipped(), m) {
            (true, Some(m)) if m > 0.0 && m.is_finite() => {}
            (true, bad) => {
                return Err(Error::Domain(format!(
                    "clipped kinds require a finite clip magnitude m > 0, got {bad:?}"
                )))
            }
            (false, None) => {}
            (false, Some(_)) => {
                return Err(Error::Domain(
                    "unclipped kinds must not carry a clip magnitude".into(),
                ))
            }
        }
        Ok(Self { kind, tau, m })
    }

    pub fn shifted_relu(tau: f64) -> Result<Self> {
        Self::new(ActivationKind::ShiftedRelu, tau, None)
    }

    pub fn soft_threshold(tau: f64) -> Result<Self> {
        Self::new(ActivationKind::SoftThreshold, tau, None)
    }

    pub fn clipped_relu(tau: f64, m: f64) -> Result<Self> {
        Self::new(ActivationKind::ClippedRelu, tau, Some(m))
    }

    pub fn clipped_soft_threshold(tau: f64, m: f64) -> Result<Self> {
        Self::new(ActivationKind::ClippedSoftThreshold, tau, Some(m))
    }

    /// Pointwise evaluation. Soft-threshold kinds are exactly odd (built
    /// from `|x|` and `copysign`).
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::ShiftedRelu => (x - self.tau).max(0.0),
            ActivationKind::SoftThreshold => ((x.abs() - self.tau).max(0.0)).copysign(x),
            ActivationKind::ClippedRelu => (x - self.tau).clamp(0.0, self.m.unwrap()),
            ActivationKind::ClippedSoftThreshold => {
                ((x.abs() - self.tau).clamp(0.0, self.m.unwrap())).copysign(x)
            }
        }
    }

    /// Almost-everywhere derivative, in {0, 1}. At a kink the right limit
    /// is returned, so the slope is 1 at the start of a linear segment and
    /// 0 where the clip begins.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let t = self.tau;
        let on = match self.kind {
            ActivationKind::ShiftedRelu => x >= t,
            ActivationKind::SoftThreshold => x >= t || x < -t,
            ActivationKind::ClippedRelu => {
                let top = t + self.m.unwrap();
                x >= t && x < top
            }
            ActivationKind::ClippedSoftThreshold => {
                let top = t + self.m.unwrap();
                (x >= t && x < top) || (x >= -top && x < -t)
            }
        };
        if on {
            1.0
        } else {
            0.0
        }
    }

    /// Kink locations in the input, for piecewise quadrature.
    pub fn kinks(&self) -> Vec<f64> {
        let t = self.tau;
        match self.kind {
            ActivationKind::ShiftedRelu => vec![t],
            ActivationKind::SoftThreshold => vec![-t, t],
            ActivationKind::ClippedRelu => {
                let m = self.m.unwrap();
                vec![t, t + m]
            }
            ActivationKind::ClippedSoftThreshold => {
                let m = self.m.unwrap();
                vec![-(t + m), -t, t, t + m]
            }
        }
    }
}

/// Threshold achieving expected sparsity `s` under a Gaussian
/// pre-activation of variance `q_star`.
///
/// ReLU family: `√q*·Φ⁻¹(s)` — defined for `s ≥ 1/2`, since the zero set
/// is one-sided and a nonnegative threshold cannot reach below it.
/// Soft-threshold family: `√(2q*)·erf⁻¹(s)` for any `s` in (0, 1).
pub fn tau_for_sparsity(kind: ActivationKind, s: f64, q_star: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!(
            "target sparsity must be in (0, 1), got {s}"
        )));
    }
    if !(q_star > 0.0) {
        return Err(Error::Domain(format!("q* must be > 0, got {q_star}")));
    }
    if kind.is_relu_family() {
        if s < 0.5 {
            return Err(Error::Domain(format!(
                "sparsity {s} < 0.5 is unreachable for the ReLU family with a nonnegative threshold"
            )));
        }
        let tau = q_star.sqrt() * special::std_normal_quantile(s)?;
        // s = 0.5 maps to a threshold of exactly zero; guard rounding.
        Ok(tau.max(0.0))
    } else {
        Ok((2.0 * q_star).sqrt() * special::erf_inv(s)?)
    }
}

/// Probability that the activation output is exactly zero for a Gaussian
/// pre-activation of variance `q`. Clipping alters nonzero values only,
/// so the clipped kinds share their unclipped counterpart's sparsity.
pub fn expected_sparsity(spec: &ActivationSpec, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::Domain(format!("variance q must be > 0, got {q}")));
    }
    let r = spec.tau / q.sqrt();
    if spec.kind.is_relu_family() {
        Ok(special::std_normal_cdf(r))
    } else {
        Ok(special::erf(r * std::f64::consts::FRAC_1_SQRT_2))
    }
}
