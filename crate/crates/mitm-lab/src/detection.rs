//! The controller's detectors.
//!
//! All detectors consume only what the controller can see: the feedback
//! `Y`, its own inputs `U`, the known gain `A`, and the noise law. They
//! never read the true state or the hijack indicator.
//!
//! * Variance test (scalar): alarm unless the empirical residual variance
//!   over the window `[0, τ]` stays inside `(σ² - γ, σ² + γ)`.
//! * Covariance test (vector): alarm when the operator norm of
//!   `Δ = Σ - (1/τ) Σ_{k=1}^{τ} r_k r_kᵀ` exceeds `γ`.
//! * SPRT: accumulate the Gaussian log-likelihood ratio between the
//!   hijacked and nominal conditional laws and stop at `±log(1/ε)`. The
//!   hijacked hypothesis needs the attacker's `Â`, which a real controller
//!   cannot know: the SPRT here is the genie-aided reference detector used
//!   to validate the deception-time bounds, not a practical test.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::lti::{operator_norm, NORM_TOL};
use crate::Result;

/// Detector selection with its parameters.
#[derive(Debug, Clone)]
pub enum DetectorConfig {
    VarianceTest { gamma: f64 },
    CovarianceTest { gamma: f64, sigma: DMatrix<f64> },
    Sprt { epsilon: f64, reference: DMatrix<f64> },
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            DetectorConfig::VarianceTest { gamma } => {
                if !(*gamma > 0.0) {
                    return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
                }
            }
            DetectorConfig::CovarianceTest { gamma, sigma } => {
                if !(*gamma > 0.0) {
                    return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
                }
                if sigma.nrows() != sigma.ncols() {
                    return Err(Error::DimensionMismatch {
                        context: "covariance test Sigma",
                        expected: sigma.nrows(),
                        got: sigma.ncols(),
                    });
                }
                let sym = (sigma - sigma.transpose()).norm();
                if sym > 1e-9 * sigma.norm().max(1.0) {
                    return Err(Error::invalid("Sigma must be symmetric"));
                }
                let min_eig = sigma
                    .clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                if !(min_eig > 0.0) {
                    return Err(Error::invalid("Sigma must be positive definite"));
                }
            }
            DetectorConfig::Sprt { epsilon, .. } => {
                if !(*epsilon > 0.0 && *epsilon < 1.0) {
                    return Err(Error::invalid(format!(
                        "epsilon must lie in (0,1), got {epsilon}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A detector's verdict: decision time, decision, the statistic trajectory,
/// and whether the horizon ran out first.
#[derive(Debug, Clone)]
pub struct DecisionRecord {
    pub tau: usize,
    pub theta_hat: u8,
    pub statistic_path: Vec<f64>,
    pub censored: bool,
}

/// One-step residual `y_next - A y_k - u_k`. Under no attack this is the
/// plant noise; under a frozen-estimate attack it is
/// `W̃_k + (Â_L - A) V_k`.
pub fn residual(
    y_next: &DVector<f64>,
    y_k: &DVector<f64>,
    u_k: &DVector<f64>,
    a: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let dim = a.nrows();
    if a.ncols() != dim || y_next.len() != dim || y_k.len() != dim || u_k.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "residual",
            expected: dim,
            got: y_k.len(),
        });
    }
    Ok(y_next - a * y_k - u_k)
}

/// Scalar variance test over the window `[0, τ]`:
/// `θ̂ = 0` iff `(1/τ) Σ_{k=0}^{τ} r_k² ∈ (σ² - γ, σ² + γ)`.
///
/// The `k = 0` residual is exactly zero under the `U_0 = W_0 = 0`
/// convention, which is why the sum of `τ + 1` terms is divided by `τ`.
pub fn variance_test(
    y: &[DVector<f64>],
    u: &[DVector<f64>],
    a: &DMatrix<f64>,
    gamma: f64,
    tau: usize,
    sigma2: f64,
) -> Result<u8> {
    if a.nrows() != 1 || a.ncols() != 1 {
        return Err(Error::invalid(
            "variance test applies to scalar systems; use covariance_test",
        ));
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if tau < 1 {
        return Err(Error::invalid("tau must be at least 1"));
    }
    if y.len() < tau + 2 || u.len() < tau + 1 {
        return Err(Error::invalid(format!(
            "window [0, {tau}] needs {} feedback samples, got {}",
            tau + 2,
            y.len()
        )));
    }
    let mut sum = 0.0;
    for k in 0..=tau {
        let r = residual(&y[k + 1], &y[k], &u[k], a)?;
        sum += r[0] * r[0];
    }
    let stat = sum / tau as f64;
    Ok(u8::from(!(stat > sigma2 - gamma && stat < sigma2 + gamma)))
}

/// First window size `τ ∈ [tau_min, tau_max]` at which the variance test
/// alarms, or `None` if it never does. Used for detection-delay trends.
pub fn variance_first_alarm(
    y: &[DVector<f64>],
    u: &[DVector<f64>],
    a: &DMatrix<f64>,
    gamma: f64,
    sigma2: f64,
    tau_min: usize,
    tau_max: usize,
) -> Result<Option<usize>> {
    if a.nrows() != 1 || a.ncols() != 1 {
        return Err(Error::invalid(
            "variance test applies to scalar systems; use covariance_test",
        ));
    }
    if tau_min < 1 || tau_max < tau_min {
        return Err(Error::invalid("need 1 <= tau_min <= tau_max"));
    }
    if y.len() < tau_max + 2 || u.len() < tau_max + 1 {
        return Err(Error::invalid("trajectory shorter than tau_max window"));
    }
    let mut sum = 0.0;
    for k in 0..=tau_max {
        let r = residual(&y[k + 1], &y[k], &u[k], a)?;
        sum += r[0] * r[0];
        if k >= tau_min {
            let stat = sum / k as f64;
            if !(stat > sigma2 - gamma && stat < sigma2 + gamma) {
                return Ok(Some(k));
            }
        }
    }
    Ok(None)
}

/// Chebyshev bound on the variance test's false-alarm rate: `3σ⁴ / (γ² τ)`.
pub fn chebyshev_fa_bound(sigma2: f64, gamma: f64, tau: usize) -> f64 {
    3.0 * sigma2 * sigma2 / (gamma * gamma * tau as f64)
}

/// Vector covariance test: `θ̂ = 0` iff
/// `‖Σ - (1/τ) Σ_{k=1}^{τ} r_k r_kᵀ‖_op ≤ γ`.
pub fn covariance_test(
    y: &[DVector<f64>],
    u: &[DVector<f64>],
    a: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    gamma: f64,
    tau: usize,
) -> Result<u8> {
    if tau < 1 {
        return Err(Error::invalid("tau must be at least 1"));
    }
    if y.len() < tau + 2 || u.len() < tau + 1 {
        return Err(Error::invalid(format!(
            "window [1, {tau}] needs {} feedback samples, got {}",
            tau + 2,
            y.len()
        )));
    }
    let dim = a.nrows();
    if sigma.nrows() != dim || sigma.ncols() != dim {
        return Err(Error::DimensionMismatch {
            context: "covariance test Sigma",
            expected: dim,
            got: sigma.nrows(),
        });
    }
    let mut acc = DMatrix::<f64>::zeros(dim, dim);
    for k in 1..=tau {
        let r = residual(&y[k + 1], &y[k], &u[k], a)?;
        acc.ger(1.0, &r, &r, 1.0);
    }
    let delta = sigma - acc.unscale(tau as f64);
    Ok(u8::from(operator_norm(&delta, NORM_TOL)? > gamma))
}

/// Per-step log-likelihood ratio between the hijacked law
/// `N(Â y_prev + u_prev, σ² I)` and the nominal law
/// `N(A y_prev + u_prev, σ² I)` for the observation `y_k`:
///
/// ```text
///   ( ‖y_k - A y_prev - u_prev‖² - ‖y_k - Â y_prev - u_prev‖² ) / (2σ²)
/// ```
pub fn sprt_increment(
    y_k: &DVector<f64>,
    y_prev: &DVector<f64>,
    u_prev: &DVector<f64>,
    a: &DMatrix<f64>,
    a_hat: &DMatrix<f64>,
    sigma2: f64,
) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    let r0 = residual(y_k, y_prev, u_prev, a)?;
    let r1 = residual(y_k, y_prev, u_prev, a_hat)?;
    Ok((r0.norm_squared() - r1.norm_squared()) / (2.0 * sigma2))
}

/// Run the SPRT on a feedback record.
///
/// The hypothesis pair is "hijacked from step `attack_start + 1`" versus
/// "never hijacked"; their conditional laws coincide through step
/// `attack_start`, so increments accumulate only after it. Decides
/// `θ̂ = 1` at the first `n` with `Sⁿ ≥ log(1/ε)` and `θ̂ = 0` at the first
/// `n` with `-Sⁿ ≥ log(1/ε)`; censored records carry the sign of the final
/// statistic.
#[allow(clippy::too_many_arguments)]
pub fn sprt_run(
    y: &[DVector<f64>],
    u: &[DVector<f64>],
    a: &DMatrix<f64>,
    a_hat: &DMatrix<f64>,
    sigma2: f64,
    attack_start: usize,
    epsilon: f64,
    max_horizon: usize,
) -> Result<DecisionRecord> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    let threshold = (1.0 / epsilon).ln();
    let last = max_horizon.min(y.len().saturating_sub(1));
    let mut path = Vec::with_capacity(last + 1);
    let mut s = 0.0;
    path.push(0.0);
    for n in 1..=last {
        if n > attack_start {
            s += sprt_increment(&y[n], &y[n - 1], &u[n - 1], a, a_hat, sigma2)?;
        }
        path.push(s);
        if s >= threshold {
            return Ok(DecisionRecord {
                tau: n,
                theta_hat: 1,
                statistic_path: path,
                censored: false,
            });
        }
        if -s >= threshold {
            return Ok(DecisionRecord {
                tau: n,
                theta_hat: 0,
                statistic_path: path,
                censored: false,
            });
        }
    }
    Ok(DecisionRecord {
        tau: last,
        theta_hat: u8::from(s > 0.0),
        statistic_path: path,
        censored: true,
    })
}
