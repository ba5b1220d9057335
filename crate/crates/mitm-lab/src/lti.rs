//! Plant dynamics, control policies, and small dense matrix utilities.
//!
//! The plant is the discrete-time LTI loop
//!
//! ```text
//!   X_{k+1} = A X_k + U_k + W_k,     W_k ~ iid N(0, σ² I_M),
//! ```
//!
//! with the convention `U_0 = W_0 = 0`. Matrices here are small (M ≤ 10),
//! so the norm routines favour robustness over speed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

use crate::error::Error;
use crate::rng::{gaussian_vector, TrialStreams};
use crate::Result;

/// Trajectories whose state 2-norm exceeds this are flagged diverged.
pub const OVERFLOW_GUARD: f64 = 1e9;

/// Default tolerance for the norm routines.
pub const NORM_TOL: f64 = 1e-10;

/// Plant description: open-loop gain `A`, per-coordinate noise variance
/// `σ²`, and state dimension `M`.
///
/// `σ² = 0` is accepted as the degenerate noiseless case; it is useful for
/// identifiability checks even though live systems have `σ² > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    a: DMatrix<f64>,
    sigma2: f64,
    dim: usize,
}

impl SystemModel {
    pub fn new(a: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                context: "SystemModel gain",
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        if a.nrows() == 0 {
            return Err(Error::invalid("state dimension must be at least 1"));
        }
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid(format!(
                "sigma2 must be finite and non-negative, got {sigma2}"
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("SystemModel gain"));
        }
        let dim = a.nrows();
        Ok(SystemModel { a, sigma2, dim })
    }

    /// Scalar plant (M = 1).
    pub fn scalar(a: f64, sigma2: f64) -> Result<Self> {
        SystemModel::new(DMatrix::from_element(1, 1, a), sigma2)
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Default initial state: the all-ones vector.
    pub fn default_x0(&self) -> DVector<f64> {
        DVector::from_element(self.dim, 1.0)
    }
}

/// The controller's input rule, applied to the feedback `Y_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlPolicy {
    /// `U_k = -K̄ Y_k`.
    LinearGain { gain: DMatrix<f64> },
    /// `U_k = -A_ref Y_k + Γ_k`, `Γ_k ~ iid N(0, dither_var · I)`.
    CancelPlusDither {
        a_ref: DMatrix<f64>,
        dither_var: f64,
    },
    /// `U_k = -scale · A_ref Y_k`.
    ScaledCancel { a_ref: DMatrix<f64>, scale: f64 },
}

impl ControlPolicy {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let m = self.matrix();
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch {
                context: "ControlPolicy matrix",
                expected: dim,
                got: m.nrows(),
            });
        }
        if let ControlPolicy::CancelPlusDither { dither_var, .. } = self {
            if !(*dither_var >= 0.0) {
                return Err(Error::invalid(format!(
                    "dither_var must be non-negative, got {dither_var}"
                )));
            }
        }
        Ok(())
    }

    fn matrix(&self) -> &DMatrix<f64> {
        match self {
            ControlPolicy::LinearGain { gain } => gain,
            ControlPolicy::CancelPlusDither { a_ref, .. } => a_ref,
            ControlPolicy::ScaledCancel { a_ref, .. } => a_ref,
        }
    }

    /// Closed-loop matrix of the nominal loop under this policy.
    pub fn closed_loop(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            ControlPolicy::LinearGain { gain } => a - gain,
            ControlPolicy::CancelPlusDither { a_ref, .. } => a - a_ref,
            ControlPolicy::ScaledCancel { a_ref, scale } => a - a_ref.scale(*scale),
        }
    }
}

/// A simulated nominal (attack-free) trajectory.
///
/// `states[k]` is `X_k`; `inputs[k]` and `noises[k]` are `U_k` and `W_k`
/// for `k = 0..states.len()-1`, with `U_0 = W_0 = 0` enforced exactly.
#[derive(Debug, Clone)]
pub struct NominalTrajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub noises: Vec<DVector<f64>>,
    /// Step index at which the overflow guard tripped, if any; the
    /// simulation halts there.
    pub diverged_at: Option<usize>,
}

impl NominalTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn check_dim(v: &DVector<f64>, dim: usize, context: &'static str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            context,
            expected: dim,
            got: v.len(),
        });
    }
    Ok(())
}

/// One plant step: `A x + u + w`.
pub fn step_plant(
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    model: &SystemModel,
) -> Result<DVector<f64>> {
    check_dim(x, model.dim, "step_plant state")?;
    check_dim(u, model.dim, "step_plant input")?;
    check_dim(w, model.dim, "step_plant noise")?;
    Ok(model.a.clone() * x + u + w)
}

/// One sample of `N(0, σ² I_M)` from the given stream.
pub fn draw_noise<R: Rng>(rng: &mut R, model: &SystemModel) -> DVector<f64> {
    gaussian_vector(rng, model.dim, model.sigma2)
}

/// Apply a control policy to feedback `y`; dither, if any, is drawn from
/// the supplied stream so trials stay reproducible.
pub fn apply_policy<R: Rng>(
    policy: &ControlPolicy,
    y: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let dim = y.len();
    policy.validate(dim)?;
    Ok(match policy {
        ControlPolicy::LinearGain { gain } => -(gain * y),
        ControlPolicy::CancelPlusDither { a_ref, dither_var } => {
            let mut u = -(a_ref * y);
            u += gaussian_vector(rng, dim, *dither_var);
            u
        }
        ControlPolicy::ScaledCancel { a_ref, scale } => -(a_ref * y).scale(*scale),
    })
}

/// Simulate the nominal closed loop for `horizon` transitions starting from
/// the model's default `X_0` (all ones). Deterministic given `seed`.
pub fn simulate_nominal(
    model: &SystemModel,
    policy: &ControlPolicy,
    horizon: usize,
    seed: u64,
) -> Result<NominalTrajectory> {
    simulate_nominal_from(model, policy, horizon, seed, model.default_x0())
}

/// As [`simulate_nominal`] with an explicit initial state.
pub fn simulate_nominal_from(
    model: &SystemModel,
    policy: &ControlPolicy,
    horizon: usize,
    seed: u64,
    x0: DVector<f64>,
) -> Result<NominalTrajectory> {
    if horizon < 1 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    check_dim(&x0, model.dim, "simulate_nominal x0")?;
    policy.validate(model.dim)?;

    let mut streams = TrialStreams::new(seed);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut noises = Vec::with_capacity(horizon);
    let mut diverged_at = None;

    states.push(x0);
    for k in 0..horizon {
        let (u, w) = if k == 0 {
            // U_0 = W_0 = 0 by convention.
            (DVector::zeros(model.dim), DVector::zeros(model.dim))
        } else {
            (
                apply_policy(policy, &states[k], &mut streams.dither)?,
                draw_noise(&mut streams.plant, model),
            )
        };
        let next = step_plant(&states[k], &u, &w, model)?;
        inputs.push(u);
        noises.push(w);
        let overflow = next.norm() > OVERFLOW_GUARD;
        states.push(next);
        if overflow {
            diverged_at = Some(k + 1);
            break;
        }
    }

    Ok(NominalTrajectory {
        states,
        inputs,
        noises,
        diverged_at,
    })
}

/// Operator norm (largest singular value) by power iteration on `MᵀM`.
///
/// Fixed random unit start, one restart on stagnation. The stopping rule is
/// the residual bound `‖Bv - λv‖ ≤ tol·λ`, which both bounds the eigenvalue
/// error and is scale-equivariant, so `‖cM‖ = |c|·‖M‖` holds to rounding.
/// Matrices whose top eigenvalues are too close for the iteration budget
/// fall back to an exact symmetric eigensolve.
pub fn operator_norm(m: &DMatrix<f64>, tol: f64) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "operator_norm",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("operator_norm"));
    }
    let n = m.nrows();
    if m.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    let b = m.transpose() * m;
    let max_iter = 10_000;

    for attempt in 0..2u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed ^ attempt);
        let mut v = gaussian_vector(&mut rng, n, 1.0);
        if v.norm() == 0.0 {
            v = DVector::from_element(n, 1.0);
        }
        v /= v.norm();
        for _ in 0..max_iter {
            let w = &b * &v;
            let lambda = v.dot(&w);
            let residual = (&w - v.scale(lambda)).norm();
            if lambda > 0.0 && residual <= tol * lambda {
                return Ok(lambda.sqrt());
            }
            let norm_w = w.norm();
            if norm_w == 0.0 {
                // v landed in the null space; try the restart.
                break;
            }
            v = w / norm_w;
        }
    }

    // near-degenerate dominant pair: finish with the exact eigensolve
    let top = b
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    Ok(top.max(0.0).sqrt())
}

/// Spectral radius: largest eigenvalue modulus. Small dense matrices only.
pub fn spectral_radius(m: &DMatrix<f64>, _tol: f64) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "spectral_radius",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("spectral_radius"));
    }
    let eigs = m.complex_eigenvalues();
    Ok(eigs.iter().map(|c| c.norm()).fold(0.0, f64::max))
}

/// `ρ(M) ≤ 1 + tol`: the closed-loop condition for the vector LS tail bound.
pub fn is_marginally_stable(m: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(spectral_radius(m, tol)? <= 1.0 + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn step_plant_scalar_zero_input() {
        let model = SystemModel::scalar(1.1, 1.0).unwrap();
        let x = DVector::from_vec(vec![1.0]);
        let z = DVector::zeros(1);
        let next = step_plant(&x, &z, &z, &model).unwrap();
        assert_eq!(next[0], 1.1);
    }

    #[test]
    fn step_plant_vector_product() {
        let model = SystemModel::new(mat2(1.0, 2.0, 3.0, 4.0), 1.0).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let z = DVector::zeros(2);
        let next = step_plant(&x, &z, &z, &model).unwrap();
        assert_eq!(next, DVector::from_vec(vec![3.0, 7.0]));
    }

    #[test]
    fn step_plant_cancellation_plus_noise() {
        let model = SystemModel::scalar(1.1, 1.0).unwrap();
        let x = DVector::from_vec(vec![1.0]);
        let u = DVector::from_vec(vec![-1.1]);
        let w = DVector::from_vec(vec![0.5]);
        let next = step_plant(&x, &u, &w, &model).unwrap();
        assert_relative_eq!(next[0], 0.5, max_relative = 1e-15);
    }

    #[test]
    fn step_plant_dimension_mismatch() {
        let model = SystemModel::scalar(1.1, 1.0).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let z = DVector::zeros(1);
        assert!(matches!(
            step_plant(&x, &z, &z, &model),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn draw_noise_law_of_large_numbers() {
        let model = SystemModel::scalar(1.1, 1.0).unwrap();
        let mut rng = crate::rng::stream(7, crate::rng::StreamKind::Plant);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| draw_noise(&mut rng, &model)[0]).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn draw_noise_same_seed_same_stream() {
        let model = SystemModel::scalar(1.1, 1.0).unwrap();
        let mut r1 = crate::rng::stream(3, crate::rng::StreamKind::Plant);
        let mut r2 = crate::rng::stream(3, crate::rng::StreamKind::Plant);
        for _ in 0..100 {
            assert_eq!(draw_noise(&mut r1, &model), draw_noise(&mut r2, &model));
        }
    }

    #[test]
    fn apply_policy_examples() {
        let mut rng = crate::rng::stream(1, crate::rng::StreamKind::Dither);
        let gain = ControlPolicy::LinearGain {
            gain: DMatrix::from_element(1, 1, 1.1),
        };
        let u = apply_policy(&gain, &DVector::from_vec(vec![2.0]), &mut rng).unwrap();
        assert_relative_eq!(u[0], -2.2, max_relative = 1e-15);

        let cancel = ControlPolicy::CancelPlusDither {
            a_ref: DMatrix::from_element(1, 1, 1.1),
            dither_var: 0.0,
        };
        let u = apply_policy(&cancel, &DVector::from_vec(vec![3.0]), &mut rng).unwrap();
        assert_relative_eq!(u[0], -3.3, max_relative = 1e-15);

        let scaled = ControlPolicy::ScaledCancel {
            a_ref: mat2(1.0, 2.0, 3.0, 4.0),
            scale: 0.9,
        };
        let u = apply_policy(&scaled, &DVector::from_vec(vec![1.0, 0.0]), &mut rng).unwrap();
        assert_relative_eq!(u[0], -0.9, max_relative = 1e-14);
        assert_relative_eq!(u[1], -2.7, max_relative = 1e-14);
    }

    #[test]
    fn nominal_perfect_cancellation() {
        let model = SystemModel::scalar(1.1, 0.0).unwrap();
        let policy = ControlPolicy::LinearGain {
            gain: DMatrix::from_element(1, 1, 1.1),
        };
        let traj = simulate_nominal(&model, &policy, 2, 0).unwrap();
        // U_0 = 0 so X_1 = a·x_0; step 1 cancels exactly: X_2 = a·X_1 - a·X_1 = 0.
        assert_relative_eq!(traj.states[1][0], 1.1, max_relative = 1e-15);
        assert_eq!(traj.states[2][0], 0.0);
    }

    #[test]
    fn nominal_residual_identity() {
        let model = SystemModel::scalar(1.1, 1.0).unwrap();
        let policy = ControlPolicy::CancelPlusDither {
            a_ref: DMatrix::from_element(1, 1, 1.1),
            dither_var: 0.0,
        };
        let traj = simulate_nominal(&model, &policy, 800, 11).unwrap();
        assert!(traj.diverged_at.is_none());
        for k in 0..800 {
            let r = &traj.states[k + 1] - model.gain() * &traj.states[k] - &traj.inputs[k];
            let w = &traj.noises[k];
            assert!((r - w).norm() <= 1e-12, "residual mismatch at step {k}");
        }
    }

    #[test]
    fn nominal_vector_loop_stays_bounded() {
        let a = mat2(1.0, 2.0, 3.0, 4.0);
        let model = SystemModel::new(a.clone(), 1.0).unwrap();
        let policy = ControlPolicy::ScaledCancel { a_ref: a.clone(), scale: 0.9 };
        // eigenvalue oracle for 0.1·A: roots of λ² - 0.5λ - 0.02.
        let disc = (0.5_f64 * 0.5 + 4.0 * 0.02).sqrt();
        let rho = ((0.5 + disc) / 2.0).abs();
        assert!((spectral_radius(&policy.closed_loop(&a), NORM_TOL).unwrap() - rho).abs() < 1e-12);
        assert!(rho < 1.0);
        let traj = simulate_nominal(&model, &policy, 200, 5).unwrap();
        assert!(traj.diverged_at.is_none());
        assert_eq!(traj.states.len(), 201);
    }

    #[test]
    fn nominal_determinism() {
        let model = SystemModel::new(mat2(1.0, 2.0, 3.0, 4.0), 1.0).unwrap();
        let policy = ControlPolicy::ScaledCancel {
            a_ref: model.gain().clone(),
            scale: 0.9,
        };
        let t1 = simulate_nominal(&model, &policy, 100, 99).unwrap();
        let t2 = simulate_nominal(&model, &policy, 100, 99).unwrap();
        assert_eq!(t1.states, t2.states);
        assert_eq!(t1.inputs, t2.inputs);
        assert_eq!(t1.noises, t2.noises);
    }

    #[test]
    fn nominal_overflow_guard() {
        let model = SystemModel::scalar(2.0, 0.0).unwrap();
        // No feedback: the open loop doubles each step.
        let policy = ControlPolicy::LinearGain {
            gain: DMatrix::from_element(1, 1, 0.0),
        };
        let traj = simulate_nominal(&model, &policy, 100, 0).unwrap();
        let k = traj.diverged_at.expect("must diverge");
        assert!(traj.states[k].norm() > OVERFLOW_GUARD);
        assert_eq!(traj.states.len(), k + 1);
    }

    #[test]
    fn operator_norm_examples() {
        assert_relative_eq!(
            operator_norm(&DMatrix::identity(2, 2), NORM_TOL).unwrap(),
            1.0,
            epsilon = 1e-10
        );
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0]));
        assert_relative_eq!(operator_norm(&d, NORM_TOL).unwrap(), 4.0, epsilon = 1e-9);

        // closed-form 2x2 oracle: dominant eigenvalue of MᵀM.
        let m = mat2(1.0, 2.0, 3.0, 4.0);
        let (t, det) = (30.0_f64, 4.0_f64); // trace and det of MᵀM
        let lam = (t + (t * t - 4.0 * det).sqrt()) / 2.0;
        assert!((operator_norm(&m, NORM_TOL).unwrap() - lam.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn operator_norm_rejects_non_finite() {
        let m = mat2(1.0, f64::NAN, 0.0, 1.0);
        assert!(matches!(
            operator_norm(&m, NORM_TOL),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn spectral_radius_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.9]));
        assert_relative_eq!(spectral_radius(&d, NORM_TOL).unwrap(), 0.9, epsilon = 1e-12);
        assert!(is_marginally_stable(&d, NORM_TOL).unwrap());

        // characteristic-polynomial oracle: λ² - 5λ - 2 = 0.
        let m = mat2(1.0, 2.0, 3.0, 4.0);
        let rho = (5.0 + 33.0_f64.sqrt()) / 2.0;
        assert_relative_eq!(spectral_radius(&m, NORM_TOL).unwrap(), rho, epsilon = 1e-9);
        assert!(!is_marginally_stable(&m, NORM_TOL).unwrap());

        let id = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(spectral_radius(&id, NORM_TOL).unwrap(), 1.0, epsilon = 1e-12);
        assert!(is_marginally_stable(&id, NORM_TOL).unwrap());
    }
}
