//! The two-phase learning-based attacker.
//!
//! Phase 1 (exploration, steps `k ≤ L`): the attacker passively eavesdrops
//! on `(X_k, U_k)` and fits a least-squares estimate of the open-loop gain,
//!
//! ```text
//!   Â_k = [ Σ_{j=1}^{k-1} (X_{j+1} - U_j) X_jᵀ ] · G_{k-1}⁻¹,
//!   G_τ = Σ_{j=1}^{τ} X_j X_jᵀ        (zero matrix while G is singular).
//! ```
//!
//! Phase 2 (exploitation, steps `k ≥ L+1`): the attacker overrides the
//! actuation with a malicious input and feeds the controller the fictitious
//! state `V_{k+1} = Â_k V_k + U_k + W̃_k` seeded at `V_L = X_L`.
//!
//! The index conventions follow the estimator above: the transition at
//! `k = 0` is excluded (it is deterministic under the `U_0 = W_0 = 0`
//! convention and would let a scalar attacker read off the gain exactly),
//! so the estimate at time `k` uses transitions `1..k-1`.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::lti::{
    apply_policy, draw_noise, operator_norm, step_plant, ControlPolicy, SystemModel, NORM_TOL,
    OVERFLOW_GUARD,
};
use crate::rng::TrialStreams;
use crate::stats::wilson_interval;
use crate::Result;

/// Relative floor for the Gram matrix eigenvalues: below
/// `GRAM_EIG_FLOOR · trace(G)` the Gram matrix is treated as singular.
/// A determinant test would be numerically fragile.
pub const GRAM_EIG_FLOOR: f64 = 1e-10;

/// Running least-squares sufficient statistics and the current estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    estimate: DMatrix<f64>,
    count: usize,
}

impl EstimatorState {
    pub fn new(dim: usize) -> Self {
        EstimatorState {
            gram: DMatrix::zeros(dim, dim),
            cross: DMatrix::zeros(dim, dim),
            estimate: DMatrix::zeros(dim, dim),
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    /// Current estimate `Â = cross · gram⁻¹`, or the zero matrix while the
    /// Gram matrix is singular.
    pub fn estimate(&self) -> &DMatrix<f64> {
        &self.estimate
    }

    /// Absorb one observed transition `(x_k, u_k) → x_next`.
    ///
    /// `gram += x_k x_kᵀ`, `cross += (x_next - u_k) x_kᵀ`, and the estimate
    /// is recomputed by solving the M×M system (M is small; no incremental
    /// inverse is maintained).
    pub fn update(
        &mut self,
        x_k: &DVector<f64>,
        x_next: &DVector<f64>,
        u_k: &DVector<f64>,
    ) -> Result<()> {
        let dim = self.dim();
        for (v, what) in [
            (x_k, "ls_update state"),
            (x_next, "ls_update next state"),
            (u_k, "ls_update input"),
        ] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: what,
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        self.gram.ger(1.0, x_k, x_k, 1.0);
        let resid = x_next - u_k;
        self.cross.ger(1.0, &resid, x_k, 1.0);
        self.count += 1;
        self.estimate = ls_estimate(&self.gram, &self.cross);
        Ok(())
    }
}

/// `cross · gram⁻¹` when the Gram matrix passes the eigenvalue floor,
/// otherwise the zero matrix.
pub fn ls_estimate(gram: &DMatrix<f64>, cross: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = gram.nrows();
    let trace = gram.trace();
    if !(trace > 0.0) {
        return DMatrix::zeros(dim, dim);
    }
    let eig = gram.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_eig > GRAM_EIG_FLOOR * trace) {
        return DMatrix::zeros(dim, dim);
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    cross * inv
}

/// One fictitious-feedback step: `Â v + u + w̃`.
pub fn fictitious_step(
    a_hat: &DMatrix<f64>,
    v: &DVector<f64>,
    u: &DVector<f64>,
    wtilde: &DVector<f64>,
) -> Result<DVector<f64>> {
    let dim = a_hat.nrows();
    if a_hat.ncols() != dim || v.len() != dim || u.len() != dim || wtilde.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "fictitious_step",
            expected: dim,
            got: v.len(),
        });
    }
    Ok(a_hat * v + u + wtilde)
}

/// Estimation error in operator norm, `‖Â - A‖_op`.
pub fn estimation_error(a_hat: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<f64> {
    if a_hat.shape() != a.shape() {
        return Err(Error::DimensionMismatch {
            context: "estimation_error",
            expected: a.nrows(),
            got: a_hat.nrows(),
        });
    }
    operator_norm(&(a_hat - a), NORM_TOL)
}

/// How the attacker's estimate evolves after the hijack.
#[derive(Debug, Clone, PartialEq)]
pub enum LearningMode {
    /// Learning stops at the end of exploration: `Â_k = Â_L` for `k > L`
    /// (the attack called R* in the analysis).
    ExplorationOnly,
    /// Keep refining from the plant-side triples `(X_k, Ũ_k, X_{k+1})`,
    /// which the attacker observes on the actuation channel. The paper
    /// leaves the data source of continued learning open; this is the
    /// physically consistent reading for an attacker on both channels.
    Continual,
    /// Use a fixed matrix throughout; no learning. Genie/calibration use.
    Forced(DMatrix<f64>),
}

/// The malicious actuation rule during exploitation. The detectors never see
/// the true state, so this choice does not affect detection statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum MaliciousInput {
    /// `Ũ_k = +‖Â_L‖_op · X_k`: a destabilizing push along the current state.
    DestabilizingPush,
    /// `Ũ_k = 0`.
    Zero,
    /// `Ũ_k = g · X_k`.
    StateGain(f64),
}

/// An attack in the class A(L): exploration length, learning mode during
/// exploitation, and the malicious actuation rule.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackStrategy {
    pub exploration_len: usize,
    pub learning: LearningMode,
    pub malicious: MaliciousInput,
}

impl AttackStrategy {
    /// The R* attack: learn for `l` steps, freeze, push to destabilize.
    pub fn freeze_after(l: usize) -> Self {
        AttackStrategy {
            exploration_len: l,
            learning: LearningMode::ExplorationOnly,
            malicious: MaliciousInput::DestabilizingPush,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.exploration_len < 1 {
            return Err(Error::invalid("exploration length must be at least 1"));
        }
        Ok(())
    }
}

/// Per-step record of an attacked run.
///
/// With `n` simulated transitions: `states[k] = X_k` and
/// `feedback[k] = Y_k` for `k = 0..=n`; `inputs[k] = U_k`,
/// `noises[k] = W_k` for `k = 0..n`. `fictitious[k] = V_k` is meaningful
/// for `k ≥ L` (zero before), `fictitious_noises[k] = W̃_k` for `k ≥ L`,
/// and `attacker_inputs[k] = Ũ_k` for `k ≥ L+1`. `theta[i]` is the hijack
/// indicator at step `i + 1`, so it reads `[0, .., 0, 1, .., 1]` with the
/// first `L` entries zero. `estimates[k] = Â_k`.
#[derive(Debug, Clone)]
pub struct AttackedTrajectory {
    pub l_steps: usize,
    pub states: Vec<DVector<f64>>,
    pub fictitious: Vec<DVector<f64>>,
    pub feedback: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub attacker_inputs: Vec<DVector<f64>>,
    pub noises: Vec<DVector<f64>>,
    pub fictitious_noises: Vec<DVector<f64>>,
    pub theta: Vec<u8>,
    pub estimates: Vec<DMatrix<f64>>,
    /// Overflow of a signal the statistics depend on (true state before the
    /// hijack, fictitious state after); the run halts there and should be
    /// excluded from aggregates.
    pub diverged_at: Option<usize>,
    /// Overflow of the hijacked physical plant. Expected under a
    /// destabilizing `Ũ`; the state freezes there but the run stays valid
    /// because no statistic reads the true state after the hijack.
    pub plant_overflow_at: Option<usize>,
}

impl AttackedTrajectory {
    /// Number of simulated transitions.
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    /// Hijack indicator at step `k`.
    pub fn theta_at(&self, k: usize) -> u8 {
        u8::from(k > self.l_steps)
    }

    /// The estimate the attacker holds when the hijack starts.
    pub fn estimate_at_hijack(&self) -> &DMatrix<f64> {
        &self.estimates[self.l_steps]
    }
}

/// Run one attacked trial from the default `X_0` (all ones).
pub fn run_attack(
    model: &SystemModel,
    policy: &ControlPolicy,
    strategy: &AttackStrategy,
    horizon: usize,
    seed: u64,
) -> Result<AttackedTrajectory> {
    run_attack_from(model, policy, strategy, horizon, seed, model.default_x0())
}

/// As [`run_attack`] with an explicit initial state.
pub fn run_attack_from(
    model: &SystemModel,
    policy: &ControlPolicy,
    strategy: &AttackStrategy,
    horizon: usize,
    seed: u64,
    x0: DVector<f64>,
) -> Result<AttackedTrajectory> {
    strategy.validate()?;
    policy.validate(model.dim())?;
    let l = strategy.exploration_len;
    if horizon <= l {
        return Err(Error::invalid(format!(
            "horizon ({horizon}) must exceed the exploration length ({l})"
        )));
    }
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "run_attack x0",
            expected: model.dim(),
            got: x0.len(),
        });
    }

    let dim = model.dim();
    let mut streams = TrialStreams::new(seed);
    let mut est = EstimatorState::new(dim);
    let effective = |est: &EstimatorState| -> DMatrix<f64> {
        match &strategy.learning {
            LearningMode::Forced(m) => m.clone(),
            _ => est.estimate().clone(),
        }
    };

    let mut states = Vec::with_capacity(horizon + 1);
    let mut fictitious = vec![DVector::zeros(dim)];
    let mut feedback = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut attacker_inputs = Vec::with_capacity(horizon);
    let mut noises = Vec::with_capacity(horizon);
    let mut fictitious_noises = Vec::with_capacity(horizon);
    let mut theta = Vec::with_capacity(horizon);
    let mut estimates = Vec::with_capacity(horizon + 1);
    let mut diverged_at = None;
    let mut plant_overflow_at: Option<usize> = None;
    let mut push_gain: Option<f64> = None;

    feedback.push(x0.clone());
    states.push(x0);
    estimates.push(effective(&est));

    for k in 0..horizon {
        let a_hat_k = estimates[k].clone();

        // Controller input from its feedback; U_0 = W_0 = 0 by convention.
        let (u_k, w_k) = if k == 0 {
            (DVector::zeros(dim), DVector::zeros(dim))
        } else {
            (
                apply_policy(policy, &feedback[k], &mut streams.dither)?,
                draw_noise(&mut streams.plant, model),
            )
        };

        // Physical plant: legitimate input through step L, malicious after.
        let frozen = plant_overflow_at.is_some();
        let utilde_k = if k >= l + 1 && !frozen {
            match &strategy.malicious {
                MaliciousInput::DestabilizingPush => {
                    let g = match push_gain {
                        Some(g) => g,
                        None => {
                            let g = operator_norm(&estimates[l], NORM_TOL)?;
                            push_gain = Some(g);
                            g
                        }
                    };
                    states[k].scale(g)
                }
                MaliciousInput::Zero => DVector::zeros(dim),
                MaliciousInput::StateGain(g) => states[k].scale(*g),
            }
        } else {
            DVector::zeros(dim)
        };
        let x_next = if frozen {
            states[k].clone()
        } else {
            let plant_in = if k >= l + 1 { &utilde_k } else { &u_k };
            step_plant(&states[k], plant_in, &w_k, model)?
        };

        // Fictitious chain from V_L = X_L onward; feedback switches at L+1.
        let (wtilde_k, y_next, v_next) = if k >= l {
            let wtilde = draw_noise(&mut streams.attacker, model);
            let v_k = if k == l { &states[l] } else { &fictitious[k] };
            let v = fictitious_step(&a_hat_k, v_k, &u_k, &wtilde)?;
            (wtilde, v.clone(), v)
        } else {
            (DVector::zeros(dim), x_next.clone(), DVector::zeros(dim))
        };

        // Guards on the signals the statistics consume.
        let statistical_overflow = if k < l {
            x_next.norm() > OVERFLOW_GUARD
        } else {
            v_next.norm() > OVERFLOW_GUARD
        };
        if k >= l + 1 && !frozen && x_next.norm() > OVERFLOW_GUARD {
            plant_overflow_at = Some(k + 1);
        }

        // Learning: exploration transitions 1..L-1; continual mode adds the
        // plant-side triples while the plant is alive.
        if k >= 1 && k < l {
            est.update(&states[k], &x_next, &u_k)?;
        } else if matches!(strategy.learning, LearningMode::Continual)
            && k >= l + 1
            && !frozen
            && plant_overflow_at != Some(k + 1)
        {
            est.update(&states[k], &x_next, &utilde_k)?;
        }

        inputs.push(u_k);
        noises.push(w_k);
        attacker_inputs.push(utilde_k);
        fictitious_noises.push(wtilde_k);
        theta.push(u8::from(k + 1 > l));
        states.push(x_next);
        fictitious.push(v_next);
        feedback.push(y_next);
        estimates.push(effective(&est));

        if statistical_overflow {
            diverged_at = Some(k + 1);
            break;
        }
    }

    // Keep V_L = X_L visible in the aligned storage.
    if fictitious.len() > l {
        fictitious[l] = states[l].clone();
    }

    Ok(AttackedTrajectory {
        l_steps: l,
        states,
        fictitious,
        feedback,
        inputs,
        attacker_inputs,
        noises,
        fictitious_noises,
        theta,
        estimates,
        diverged_at,
        plant_overflow_at,
    })
}

/// Simulate the nominal loop while an eavesdropper fits the estimator over
/// the first `l_steps` steps (transitions `1..l_steps-1`). Used for matched
/// false-alarm ensembles: the genie detector needs the estimate the attacker
/// would have held.
pub fn eavesdrop_nominal(
    model: &SystemModel,
    policy: &ControlPolicy,
    l_steps: usize,
    horizon: usize,
    seed: u64,
) -> Result<(crate::lti::NominalTrajectory, EstimatorState)> {
    eavesdrop_nominal_from(model, policy, l_steps, horizon, seed, model.default_x0())
}

/// As [`eavesdrop_nominal`] with an explicit initial state.
pub fn eavesdrop_nominal_from(
    model: &SystemModel,
    policy: &ControlPolicy,
    l_steps: usize,
    horizon: usize,
    seed: u64,
    x0: DVector<f64>,
) -> Result<(crate::lti::NominalTrajectory, EstimatorState)> {
    let traj = crate::lti::simulate_nominal_from(model, policy, horizon, seed, x0)?;
    let mut est = EstimatorState::new(model.dim());
    let last = l_steps.min(traj.states.len().saturating_sub(1));
    for k in 1..last {
        est.update(&traj.states[k], &traj.states[k + 1], &traj.inputs[k])?;
    }
    Ok((traj, est))
}

/// One row of a Monte-Carlo tail table for `P(‖Â_k - A‖_op > η)`.
#[derive(Debug, Clone)]
pub struct TailRow {
    pub k: usize,
    pub eta: f64,
    pub exceed: usize,
    pub trials: usize,
    pub p_hat: f64,
    pub ci: (f64, f64),
    /// Scalar LS bound `2 / (1 + η²)^{k/2}`.
    pub scalar_bound: f64,
}

/// Tail table plus the smallest `c₁` for which the exponential form
/// `c₁ e^{-η² k}` dominates every grid point.
#[derive(Debug, Clone)]
pub struct TailTable {
    pub rows: Vec<TailRow>,
    pub c1_min: f64,
}

/// Monte-Carlo estimate of the estimation-error tail over a `(k, η)` grid.
/// The attacker eavesdrops on a nominal trajectory; `Â_k` is snapshotted at
/// each grid time.
pub fn empirical_tail(
    model: &SystemModel,
    policy: &ControlPolicy,
    k_grid: &[usize],
    eta_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<TailTable> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if k_grid.is_empty() || eta_grid.is_empty() {
        return Err(Error::invalid("empty tail grid"));
    }
    let max_k = *k_grid.iter().max().unwrap();
    let mut exceed = vec![0usize; k_grid.len() * eta_grid.len()];

    for t in 0..trials {
        let trial_seed = crate::rng::trial_seed(seed, 0, t as u64);
        let traj = crate::lti::simulate_nominal(model, policy, max_k, trial_seed)?;
        if traj.diverged_at.is_some() {
            continue;
        }
        let mut est = EstimatorState::new(model.dim());
        let mut errors = vec![f64::NAN; k_grid.len()];
        for (i, &k) in k_grid.iter().enumerate() {
            if k <= 1 {
                errors[i] = estimation_error(est.estimate(), model.gain())?;
            }
        }
        for j in 1..max_k {
            est.update(&traj.states[j], &traj.states[j + 1], &traj.inputs[j])?;
            for (i, &k) in k_grid.iter().enumerate() {
                if k == j + 1 {
                    errors[i] = estimation_error(est.estimate(), model.gain())?;
                }
            }
        }
        for (i, err) in errors.iter().enumerate() {
            for (j, &eta) in eta_grid.iter().enumerate() {
                if *err > eta {
                    exceed[i * eta_grid.len() + j] += 1;
                }
            }
        }
    }

    let mut rows = Vec::new();
    let mut c1_min: f64 = 0.0;
    for (i, &k) in k_grid.iter().enumerate() {
        for (j, &eta) in eta_grid.iter().enumerate() {
            let count = exceed[i * eta_grid.len() + j];
            let p_hat = count as f64 / trials as f64;
            let ci = wilson_interval(count, trials);
            let scalar_bound = 2.0 / (1.0 + eta * eta).powf(k as f64 / 2.0);
            c1_min = c1_min.max(p_hat * (eta * eta * k as f64).exp());
            rows.push(TailRow {
                k,
                eta,
                exceed: count,
                trials,
                p_hat,
                ci,
                scalar_bound,
            });
        }
    }
    Ok(TailTable { rows, c1_min })
}
