//! Closed-form variance maps, correlation maps, and edge-of-chaos solving.
//!
//! In the large-width limit the pre-activation variance evolves through
//! the variance map
//!
//! ```text
//! V(q) = σ_w² · E[φ(√q Z)²] + σ_b²,   Z ~ N(0, 1),
//! ```
//!
//! and the correlation between two inputs through the correlation map
//! `R(ρ)`, whose slope at `ρ = 1` is `χ₁ = σ_w² · E[φ'(√q* Z)²]`. The edge
//! of chaos (EoC) is the hyperparameter set with `V(q*) = q*` and
//! `χ₁ = 1`.
//!
//! For the piecewise-linear activation families here everything reduces to
//! truncated Gaussian moments, so `V`, `V'`, `V''`, and `χ₁` all have
//! closed forms:
//!
//! - unclipped kinds force `V'(q*) = χ₁`, so EoC implies `V'(q*) = 1` with
//!   `V''(q*) > 0` — a fixed point stable only from the left;
//! - clipping opens a gap `χ₁ - V'(q*) = σ_w²·m·pdf((τ+m)/√q*)/√q*`
//!   (doubled for the odd family), which buys `V'(q*) < 1` on the EoC.
//!
//! The soft-threshold family is the odd double of the ReLU family:
//! `V_ST = 2·V_ReLU - σ_b²` and `χ₁_ST = 2·χ₁_ReLU` at equal parameters.

use serde::{Deserialize, Serialize};

use crate::activation::{self, ActivationKind, ActivationSpec};
use crate::error::{Error, Result};
use crate::special::{self, std_normal_cdf, std_normal_pdf};

/// Weight and bias variances of an i.i.d. Gaussian initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldParams {
    /// Weight variance σ_w² (weights are drawn with variance σ_w²/fan-in).
    pub sigma_w2: f64,
    /// Bias variance σ_b².
    pub sigma_b2: f64,
}

impl MeanFieldParams {
    pub fn new(sigma_w2: f64, sigma_b2: f64) -> Result<Self> {
        if !(sigma_w2 > 0.0) || !sigma_w2.is_finite() {
            return Err(Error::Domain(format!(
                "sigma_w^2 must be finite and > 0, got {sigma_w2}"
            )));
        }
        if !(sigma_b2 >= 0.0) || !sigma_b2.is_finite() {
            return Err(Error::Domain(format!(
                "sigma_b^2 must be finite and >= 0, got {sigma_b2}"
            )));
        }
        Ok(Self { sigma_w2, sigma_b2 })
    }
}

/// Stability class of a variance-map fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

/// Tolerance around `V'(q*) = 1` inside which a fixed point is classified
/// as marginal. Distinguishes the EoC-forced slope-one fixed points of the
/// unclipped kinds from nearby clipped solutions.
pub const MARGINAL_TOL: f64 = 1e-6;

/// A solution of `V(q) = q` with local derivatives and stability class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub q: f64,
    pub vprime: f64,
    pub vsecond: f64,
    pub stability: Stability,
}

/// Result of a fixed-point scan.
///
/// `continuum` flags the degenerate standard-ReLU case `τ = 0`,
/// `σ_w² = 2`, `σ_b² = 0`, where `V(q) = q` identically and every point is
/// a (marginal) fixed point; `points` is empty in that case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointScan {
    pub points: Vec<FixedPoint>,
    pub continuum: bool,
}

/// An edge-of-chaos initialization for a given activation family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EocSolution {
    pub spec: ActivationSpec,
    pub params: MeanFieldParams,
    pub sparsity: f64,
    pub tau: f64,
    pub q_star: f64,
    pub chi1: f64,
    pub vprime_at_qstar: f64,
    pub vsecond_at_qstar: f64,
}

/// A variance (or correlation) trajectory under repeated application of
/// the map. Truncated with `diverged = true` at the first value exceeding
/// the overflow threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub diverged: bool,
}

/// Trajectory overflow threshold.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::Domain(format!("variance q must be > 0, got {q}")));
    }
    Ok(())
}

// Bare second moment E[φ(√q Z)²] (no σ_w², no σ_b²) from truncated
// Gaussian moments. With a = τ/√q and b = (τ+m)/√q:
//   ReLU family:  (q+τ²)Φ(-a) - √q·τ·pdf(a)            (unclipped)
//                 (q+τ²)(Φ(b)-Φ(a)) - √q·τ·pdf(a)
//                   - √q·(m-τ)·pdf(b) + m²·Φ(-b)       (clipped)
// and the soft-threshold family doubles these.
fn bare_second_moment(spec: &ActivationSpec, q: f64) -> f64 {
    let tau = spec.tau;
    let sq = q.sqrt();
    let a = tau / sq;
    let relu_part = match spec.m {
        None => (q + tau * tau) * std_normal_cdf(-a) - sq * tau * std_normal_pdf(a),
        Some(m) => {
            let b = (tau + m) / sq;
            (q + tau * tau) * (std_normal_cdf(b) - std_normal_cdf(a))
                - sq * tau * std_normal_pdf(a)
                - sq * (m - tau) * std_normal_pdf(b)
                + m * m * std_normal_cdf(-b)
        }
    };
    if spec.kind.is_relu_family() {
        relu_part
    } else {
        2.0 * relu_part
    }
}

// d/dq of the bare second moment.
fn bare_second_moment_d1(spec: &ActivationSpec, q: f64) -> f64 {
    let a = spec.tau / q.sqrt();
    let relu_part = match spec.m {
        None => std_normal_cdf(-a),
        Some(m) => {
            let b = (spec.tau + m) / q.sqrt();
            std_normal_cdf(b) - std_normal_cdf(a) - m / q.sqrt() * std_normal_pdf(b)
        }
    };
    if spec.kind.is_relu_family() {
        relu_part
    } else {
        2.0 * relu_part
    }
}

// d²/dq² of the bare second moment.
fn bare_second_moment_d2(spec: &ActivationSpec, q: f64) -> f64 {
    let tau = spec.tau;
    let a = tau / q.sqrt();
    let scale = 0.5 / q.powf(1.5);
    let relu_part = match spec.m {
        None => scale * tau * std_normal_pdf(a),
        Some(m) => {
            let tm = tau + m;
            let b = tm / q.sqrt();
            scale * (tau * std_normal_pdf(a) - (tau + m * tm * tm / q) * std_normal_pdf(b))
        }
    };
    if spec.kind.is_relu_family() {
        relu_part
    } else {
        2.0 * relu_part
    }
}

/// Variance map `V(q) = σ_w²·E[φ(√q Z)²] + σ_b²` in closed form.
pub fn variance_map(spec: &ActivationSpec, params: &MeanFieldParams, q: f64) -> Result<f64> {
    check_q(q)?;
    Ok(params.sigma_w2 * bare_second_moment(spec, q) + params.sigma_b2)
}

/// First derivative `V'(q)` in closed form.
pub fn variance_map_d1(spec: &ActivationSpec, params: &MeanFieldParams, q: f64) -> Result<f64> {
    check_q(q)?;
    Ok(params.sigma_w2 * bare_second_moment_d1(spec, q))
}

/// Second derivative `V''(q)` in closed form. Strictly positive for the
/// unclipped kinds whenever `τ > 0`.
pub fn variance_map_d2(spec: &ActivationSpec, params: &MeanFieldParams, q: f64) -> Result<f64> {
    check_q(q)?;
    Ok(params.sigma_w2 * bare_second_moment_d2(spec, q))
}

/// Variance map evaluated by quadrature instead of the closed form; the
/// independent oracle for the algebra above.
pub fn variance_map_quadrature(
    spec: &ActivationSpec,
    params: &MeanFieldParams,
    q: f64,
) -> Result<f64> {
    check_q(q)?;
    let second =
        special::gaussian_expectation_piecewise(|u| spec.apply(u).powi(2), q, &spec.kinks())?;
    Ok(params.sigma_w2 * second + params.sigma_b2)
}

/// Correlation-map slope at `ρ = 1`:
/// `χ₁ = σ_w²·E[φ'(√q* Z)²]` in closed form.
///
/// Equals `V'(q*)` for the unclipped kinds; for the clipped kinds it
/// exceeds `V'(q*)` by [`chi1_gap`].
pub fn chi1(spec: &ActivationSpec, params: &MeanFieldParams, q_star: f64) -> Result<f64> {
    check_q(q_star)?;
    let a = spec.tau / q_star.sqrt();
    let relu_part = match spec.m {
        None => std_normal_cdf(-a),
        Some(m) => {
            let b = (spec.tau + m) / q_star.sqrt();
            std_normal_cdf(b) - std_normal_cdf(a)
        }
    };
    let mu = if spec.kind.is_relu_family() {
        relu_part
    } else {
        2.0 * relu_part
    };
    Ok(params.sigma_w2 * mu)
}

/// Closed-form gap `χ₁ - V'(q*)` of the clipped kinds:
/// `σ_w²·m·pdf((τ+m)/√q*)/√q*`, doubled for the odd family. Zero for
/// unclipped kinds.
pub fn chi1_gap(spec: &ActivationSpec, params: &MeanFieldParams, q_star: f64) -> Result<f64> {
    check_q(q_star)?;
    match spec.m {
        None => Ok(0.0),
        Some(m) => {
            let b = (spec.tau + m) / q_star.sqrt();
            let gap = params.sigma_w2 * m * std_normal_pdf(b) / q_star.sqrt();
            Ok(if spec.kind.is_relu_family() {
                gap
            } else {
                2.0 * gap
            })
        }
    }
}

// Relative residual tolerance for "q* is a fixed point" preconditions.
const FIXED_POINT_PRECOND_TOL: f64 = 1e-6;

fn require_fixed_point(spec: &ActivationSpec, params: &MeanFieldParams, q_star: f64) -> Result<()> {
    let residual = (variance_map(spec, params, q_star)? - q_star).abs();
    if residual > FIXED_POINT_PRECOND_TOL * q_star.max(1e-300) {
        return Err(Error::NotFixedPoint { q: q_star, residual });
    }
    Ok(())
}

/// Correlation map `R(ρ)` at the variance fixed point `q*`, evaluated by
/// kink-aware nested quadrature (no closed form exists at general `ρ`).
///
/// At `ρ = ±1` the double integral collapses exactly to a single one.
pub fn correlation_map(
    spec: &ActivationSpec,
    params: &MeanFieldParams,
    q_star: f64,
    rho: f64,
) -> Result<f64> {
    check_q(q_star)?;
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!(
            "correlation must be in [-1, 1], got {rho}"
        )));
    }
    require_fixed_point(spec, params, q_star)?;
    let kinks = spec.kinks();
    let pair = if rho == 1.0 || rho == -1.0 {
        let sign = rho;
        special::gaussian_expectation_piecewise(
            |u| spec.apply(u) * spec.apply(sign * u),
            q_star,
            &kinks,
        )?
    } else {
        let c = (1.0 - rho * rho).sqrt();
        // Outer integrand: φ(u₁)·E_{z₂}[φ(√q*(ρ z₁ + c z₂))]. The inner
        // expectation is smooth in z₁ but steepens near the image points
        // u₁ = k/ρ as ρ → ±1; cutting there keeps those features on panel
        // boundaries where the adaptive rule cannot miss them.
        let mut outer_kinks = kinks.clone();
        outer_kinks.extend(kinks.iter().map(|k| k / rho));
        special::gaussian_expectation_piecewise(
            |u1| {
                let shift = rho * u1; // = √q*·ρ·z₁
                let inner_kinks: Vec<f64> = kinks.iter().map(|k| (k - shift) / c).collect();
                let inner = special::gaussian_expectation_piecewise(
                    |u2c| spec.apply(shift + c * u2c),
                    q_star,
                    &inner_kinks,
                )
                .expect("inner q equals outer q > 0");
                spec.apply(u1) * inner
            },
            q_star,
            &outer_kinks,
        )?
    };
    Ok((params.sigma_w2 * pair + params.sigma_b2) / q_star)
}

/// Solve for the EoC initialization at sparsity `s` and fixed point
/// `q_star`. `m` is required for the clipped kinds.
///
/// Follows the standard procedure: pick `q*`; solve `χ₁ = 1` for `σ_w²`
/// (unclipped kinds: `1/(1-s)` independent of `q*`; clipped kinds: the
/// reciprocal of the erf-difference mean-square derivative); then solve
/// `V(q*) = q*` for `σ_b²`. A negative `σ_b²` means no EoC initialization
/// exists for this `(s, m, q*)`.
pub fn eoc_solve(kind: ActivationKind, s: f64, m: Option<f64>, q_star: f64) -> Result<EocSolution> {
    check_q(q_star)?;
    if kind.is_clipped() && m.is_none() {
        return Err(Error::Domain(format!(
            "kind {kind:?} requires a clip magnitude m"
        )));
    }
    let tau = activation::tau_for_sparsity(kind, s, q_star)?;
    let spec = ActivationSpec::new(kind, tau, m)?;

    let sigma_w2 = match m {
        None => 1.0 / (1.0 - s),
        Some(m) => {
            let sq2 = (2.0 * q_star).sqrt();
            let d = special::erf((m + tau) / sq2) - special::erf(tau / sq2);
            if d <= 0.0 {
                return Err(Error::NoSolution(format!(
                    "mean-square derivative vanished for m = {m}, s = {s}, q* = {q_star}"
                )));
            }
            if kind.is_relu_family() {
                2.0 / d
            } else {
                1.0 / d
            }
        }
    };

    let second = bare_second_moment(&spec, q_star);
    let mut sigma_b2 = q_star - sigma_w2 * second;
    // Forgive rounding at the feasibility boundary, reject real violations.
    if sigma_b2 < 0.0 {
        if sigma_b2 > -1e-12 * q_star.max(1.0) {
            sigma_b2 = 0.0;
        } else {
            return Err(Error::Infeasible {
                kind,
                s,
                m,
                q_star,
                sigma_b2,
            });
        }
    }
    let params = MeanFieldParams::new(sigma_w2, sigma_b2)?;
    Ok(EocSolution {
        spec,
        sparsity: s,
        tau,
        q_star,
        chi1: chi1(&spec, &params, q_star)?,
        vprime_at_qstar: variance_map_d1(&spec, &params, q_star)?,
        vsecond_at_qstar: variance_map_d2(&spec, &params, q_star)?,
        params,
    })
}

/// Find the clip magnitude `m` at which the EoC solution for `(kind, s,
/// q_star)` has `V'(q*) = target_vprime`, by bisection over
/// `[1e-4, 100]`. `V'(q*)` increases monotonically from 0 toward 1 as `m`
/// grows, so any target in (0, 1) reachable in the bracket is found.
pub fn solve_m_for_vprime(
    kind: ActivationKind,
    s: f64,
    q_star: f64,
    target_vprime: f64,
) -> Result<f64> {
    if !kind.is_clipped() {
        return Err(Error::Domain(format!(
            "kind {kind:?} has no clip magnitude; V'(q*) is pinned to chi1"
        )));
    }
    if !(target_vprime > 0.0 && target_vprime < 1.0) {
        return Err(Error::Domain(format!(
            "target V'(q*) must be in (0, 1), got {target_vprime}"
        )));
    }
    check_q(q_star)?;
    let tau = activation::tau_for_sparsity(kind, s, q_star)?;

    // V'(q*) on the EoC as a function of m; σ_b² plays no role.
    let vprime_of = |m: f64| -> Result<f64> {
        let spec = ActivationSpec::new(kind, tau, Some(m))?;
        let sq2 = (2.0 * q_star).sqrt();
        let d = special::erf((m + tau) / sq2) - special::erf(tau / sq2);
        let sigma_w2 = if kind.is_relu_family() { 2.0 / d } else { 1.0 / d };
        let params = MeanFieldParams::new(sigma_w2, 0.0)?;
        variance_map_d1(&spec, &params, q_star)
    };

    let (mut lo, mut hi) = (1e-4, 100.0);
    let f_lo = vprime_of(lo)? - target_vprime;
    let f_hi = vprime_of(hi)? - target_vprime;
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::NoSolution(format!(
            "V'(q*) = {target_vprime} unreachable for {kind:?}, s = {s}, q* = {q_star} \
             within m in [1e-4, 100] (range [{:.6}, {:.6}])",
            f_lo + target_vprime,
            f_hi + target_vprime
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if vprime_of(mid)? < target_vprime {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Scan `[q_lo, q_hi]` on a geometric grid of `grid_n` points for sign
/// changes of `V(q) - q`, refining each bracket by bisection. Points come
/// back sorted ascending with derivatives and stability class attached.
pub fn find_fixed_points(
    spec: &ActivationSpec,
    params: &MeanFieldParams,
    q_range: (f64, f64),
    grid_n: usize,
) -> Result<FixedPointScan> {
    let (q_lo, q_hi) = q_range;
    if !(q_lo > 0.0 && q_hi > q_lo) {
        return Err(Error::Domain(format!(
            "need 0 < q_lo < q_hi, got [{q_lo}, {q_hi}]"
        )));
    }
    if grid_n < 16 {
        return Err(Error::Domain(format!("grid_n must be >= 16, got {grid_n}")));
    }
    let resid = |q: f64| -> Result<f64> { Ok(variance_map(spec, params, q)? - q) };
    let ratio = (q_hi / q_lo).powf(1.0 / (grid_n - 1) as f64);
    let grid: Vec<f64> = (0..grid_n)
        .map(|i| (q_lo * ratio.powi(i as i32)).min(q_hi))
        .collect();
    let tol_at = |q: f64| 1e-10 * q.max(1.0);

    let residuals: Vec<f64> = grid.iter().map(|&q| resid(q)).collect::<Result<_>>()?;
    // Degenerate slope-one case: the whole grid sits on the identity.
    if residuals
        .iter()
        .zip(&grid)
        .all(|(r, &q)| r.abs() <= tol_at(q))
    {
        return Ok(FixedPointScan {
            points: Vec::new(),
            continuum: true,
        });
    }

    let mut points = Vec::new();
    let mut push_point = |q: f64| -> Result<()> {
        let vprime = variance_map_d1(spec, params, q)?;
        let vsecond = variance_map_d2(spec, params, q)?;
        let stability = if vprime < 1.0 - MARGINAL_TOL {
            Stability::Stable
        } else if vprime > 1.0 + MARGINAL_TOL {
            Stability::Unstable
        } else {
            Stability::Marginal
        };
        points.push(FixedPoint {
            q,
            vprime,
            vsecond,
            stability,
        });
        Ok(())
    };

    for i in 0..grid_n - 1 {
        let (mut a, mut b) = (grid[i], grid[i + 1]);
        let (mut fa, fb) = (residuals[i], residuals[i + 1]);
        // Exact hits on grid points count once, at the left end.
        if fa.abs() <= tol_at(a) {
            push_point(a)?;
            continue;
        }
        if fb.abs() <= tol_at(b) {
            continue;
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            let fm = resid(mid)?;
            if fm.abs() <= tol_at(mid) || 0.5 * (b - a) < f64::EPSILON * mid {
                break;
            }
            if fm.signum() == fa.signum() {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        push_point(0.5 * (a + b))?;
    }
    Ok(FixedPointScan {
        points,
        continuum: false,
    })
}

/// Iterate the variance recursion for `depth` layers from input variance
/// `q0`. The first step applies the affine input rule
/// `q¹ = σ_w²·q⁰ + σ_b²` (the input itself has not passed through an
/// activation); subsequent steps apply the variance map. Returns
/// `[q¹, …, q^L]`, truncated with a divergence flag past 1e12.
pub fn iterate_variance(
    spec: &ActivationSpec,
    params: &MeanFieldParams,
    q0: f64,
    depth: usize,
) -> Result<Trajectory> {
    check_q(q0)?;
    if depth < 1 {
        return Err(Error::Domain("depth must be >= 1".into()));
    }
    let mut values = Vec::with_capacity(depth);
    let mut q = params.sigma_w2 * q0 + params.sigma_b2;
    for l in 0..depth {
        if l > 0 {
            q = variance_map(spec, params, q)?;
        }
        values.push(q);
        if !q.is_finite() || q > DIVERGENCE_THRESHOLD {
            return Ok(Trajectory {
                values,
                diverged: true,
            });
        }
    }
    Ok(Trajectory {
        values,
        diverged: false,
    })
}

/// Iterate the correlation map from `rho0` for `depth` layers at the
/// variance fixed point `q_star`. Values are clamped to `[-1, 1]`.
pub fn iterate_correlation(
    spec: &ActivationSpec,
    params: &MeanFieldParams,
    q_star: f64,
    rho0: f64,
    depth: usize,
) -> Result<Trajectory> {
    if !(-1.0..=1.0).contains(&rho0) {
        return Err(Error::Domain(format!(
            "correlation must be in [-1, 1], got {rho0}"
        )));
    }
    if depth < 1 {
        return Err(Error::Domain("depth must be >= 1".into()));
    }
    require_fixed_point(spec, params, q_star)?;
    let mut values = Vec::with_capacity(depth);
    let mut rho = rho0;
    for _ in 0..depth {
        rho = correlation_map(spec, params, q_star, rho)?.clamp(-1.0, 1.0);
        values.push(rho);
    }
    Ok(Trajectory {
        values,
        diverged: false,
    })
}
