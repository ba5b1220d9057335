//! Reproducible Monte-Carlo experiment runner.
//!
//! Trials are the unit of parallelism. Trial `i` of a cell draws every
//! random number from streams seeded by
//! `hash(master_seed, cell_id, i, stream_tag)`, so results do not depend on
//! scheduling; aggregation folds fixed-size blocks of trials in index order,
//! so they do not depend on the worker count either.

pub mod experiments;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacker::{
    run_attack_from, AttackStrategy, AttackedTrajectory, LearningMode, MaliciousInput,
};
use crate::error::Error;
use crate::lti::{ControlPolicy, SystemModel};
use crate::metrics::DeceptionCostCurve;
use crate::rng::{derive_seed, hash_label};
use crate::Result;

/// Trials per reduction block; fixed so aggregates are identical under any
/// degree of parallelism.
pub const TRIAL_BLOCK: usize = 64;

/// Fully resolved experiment description. Flat keys; matrices are nested
/// row-major arrays. Unknown keys are rejected at parse time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of `success_vs_l`, `success_vs_window`, `bound_suite`,
    /// `sprt_calibration`, `chebyshev_fa`, `ls_tail`, `exploration_length`,
    /// `energy_tradeoff`.
    pub experiment: Option<String>,
    /// Preset name this config was expanded from, if any.
    pub preset: Option<String>,

    // plant
    pub a: Vec<Vec<f64>>,
    pub sigma2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,

    // controller policy
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_gain: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_a_ref: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dither_var: Option<f64>,

    // attack strategy
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exploration_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forced_estimate: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub malicious: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub malicious_gain: Option<f64>,

    // detectors
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_cov: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sprt_reference: Option<Vec<Vec<f64>>>,

    // grids
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dither_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_grid: Option<Vec<f64>>,

    // bound-suite knobs
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_offset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot_exploration_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sprt_trials: Option<usize>,

    // run control
    pub trials: usize,
    pub horizon: usize,
    pub master_seed: u64,
    /// Worker count is an execution knob, not part of the experiment
    /// identity: results are invariant to it, so it never enters the
    /// config echo or its hash.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
}

/// Build a square matrix from config-style nested rows, naming `key` in
/// any error.
pub fn to_matrix(key: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::config(key, "matrix must be non-empty"));
    }
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::config(key, "matrix must be square (nested rows)"));
    }
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::config(key, "matrix entries must be finite"));
            }
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

impl ExperimentConfig {
    pub fn model(&self) -> Result<SystemModel> {
        let a = to_matrix("a", &self.a)?;
        if !(self.sigma2 >= 0.0) {
            return Err(Error::config("sigma2", "must be non-negative"));
        }
        SystemModel::new(a, self.sigma2)
    }

    pub fn x0(&self, model: &SystemModel) -> Result<DVector<f64>> {
        match &self.x0 {
            None => Ok(model.default_x0()),
            Some(v) => {
                if v.len() != model.dim() {
                    return Err(Error::config("x0", "length must match the state dimension"));
                }
                Ok(DVector::from_vec(v.clone()))
            }
        }
    }

    /// Controller policy; `dither_override` substitutes the dither variance
    /// when sweeping a dither grid.
    pub fn control_policy(&self, dither_override: Option<f64>) -> Result<ControlPolicy> {
        let a = to_matrix("a", &self.a)?;
        let a_ref = match &self.policy_a_ref {
            Some(m) => to_matrix("policy_a_ref", m)?,
            None => a.clone(),
        };
        match self.policy.as_str() {
            "linear_gain" => {
                let gain = self
                    .policy_gain
                    .as_ref()
                    .ok_or_else(|| Error::config("policy_gain", "required for linear_gain"))?;
                Ok(ControlPolicy::LinearGain {
                    gain: to_matrix("policy_gain", gain)?,
                })
            }
            "cancel_plus_dither" => {
                let dither_var = dither_override.or(self.dither_var).unwrap_or(0.0);
                if !(dither_var >= 0.0) {
                    return Err(Error::config("dither_var", "must be non-negative"));
                }
                Ok(ControlPolicy::CancelPlusDither { a_ref, dither_var })
            }
            "scaled_cancel" => {
                let scale = self
                    .policy_scale
                    .ok_or_else(|| Error::config("policy_scale", "required for scaled_cancel"))?;
                Ok(ControlPolicy::ScaledCancel { a_ref, scale })
            }
            other => Err(Error::config(
                "policy",
                format!("unknown policy `{other}` (expected linear_gain, cancel_plus_dither or scaled_cancel)"),
            )),
        }
    }

    pub fn strategy(&self, l: usize) -> Result<AttackStrategy> {
        let learning = match self.learning.as_deref().unwrap_or("exploration_only") {
            "exploration_only" => LearningMode::ExplorationOnly,
            "continual" => LearningMode::Continual,
            "forced" => {
                let m = self
                    .forced_estimate
                    .as_ref()
                    .ok_or_else(|| Error::config("forced_estimate", "required for forced learning"))?;
                LearningMode::Forced(to_matrix("forced_estimate", m)?)
            }
            other => {
                return Err(Error::config(
                    "learning",
                    format!("unknown learning mode `{other}`"),
                ))
            }
        };
        let malicious = match self.malicious.as_deref().unwrap_or("destabilizing_push") {
            "destabilizing_push" => MaliciousInput::DestabilizingPush,
            "zero" => MaliciousInput::Zero,
            "state_gain" => MaliciousInput::StateGain(
                self.malicious_gain
                    .ok_or_else(|| Error::config("malicious_gain", "required for state_gain"))?,
            ),
            other => {
                return Err(Error::config(
                    "malicious",
                    format!("unknown malicious input `{other}`"),
                ))
            }
        };
        Ok(AttackStrategy {
            exploration_len: l,
            learning,
            malicious,
        })
    }

    /// Covariance-test Σ; defaults to `σ² I`.
    pub fn noise_covariance(&self, model: &SystemModel) -> Result<DMatrix<f64>> {
        match &self.noise_cov {
            Some(m) => to_matrix("noise_cov", m),
            None => Ok(DMatrix::identity(model.dim(), model.dim()).scale(model.sigma2())),
        }
    }

    /// Canonical JSON of the resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json().as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A cell of the experiment grid: which attack/policy variation the trials
/// use, plus the label that anchors their seeds.
#[derive(Debug, Clone)]
pub struct CellParams {
    pub label: String,
    pub exploration_len: usize,
    pub dither_override: Option<f64>,
    pub horizon: usize,
    pub trials: usize,
}

impl CellParams {
    pub fn id(&self) -> u64 {
        hash_label(&self.label)
    }
}

/// Seed of one trial of one cell.
pub fn cell_trial_seed(master_seed: u64, cell_label: &str, trial: usize) -> u64 {
    derive_seed(master_seed, &[hash_label(cell_label), trial as u64])
}

/// Materialize an ensemble of attacked trajectories for one cell. Intended
/// for small runs and tests; the experiment drivers stream instead.
pub fn run_trials(config: &ExperimentConfig, cell: &CellParams) -> Result<Vec<AttackedTrajectory>> {
    let model = config.model()?;
    let policy = config.control_policy(cell.dither_override)?;
    let strategy = config.strategy(cell.exploration_len)?;
    let x0 = config.x0(&model)?;
    (0..cell.trials)
        .map(|t| {
            run_attack_from(
                &model,
                &policy,
                &strategy,
                cell.horizon,
                cell_trial_seed(config.master_seed, &cell.label, t),
                x0.clone(),
            )
        })
        .collect()
}

/// Per-cell trial bookkeeping shared by every experiment.
#[derive(Debug, Clone, Default)]
pub struct CellCounts {
    pub trials: usize,
    pub positives: usize,
    pub censored: usize,
    pub diverged: usize,
}

impl CellCounts {
    pub fn used(&self) -> usize {
        self.trials - self.diverged
    }

    pub fn merge(&mut self, other: &CellCounts) {
        self.trials += other.trials;
        self.positives += other.positives;
        self.censored += other.censored;
        self.diverged += other.diverged;
    }
}

/// Deterministic blocked fold over trial indices. `make` creates an empty
/// accumulator, `fold` absorbs one trial, `merge` combines two accumulators
/// produced from adjacent index blocks (applied in block order).
pub fn run_blocked<A, FM, FF, FG>(
    trials: usize,
    workers: Option<usize>,
    make: FM,
    fold: FF,
    merge: FG,
) -> Result<A>
where
    A: Send,
    FM: Fn() -> A + Sync,
    FF: Fn(usize, &mut A) -> Result<()> + Sync,
    FG: Fn(&mut A, A) + Sync,
{
    use rayon::prelude::*;

    let body = || -> Result<A> {
        let n_blocks = trials.div_ceil(TRIAL_BLOCK).max(1);
        let blocks: Vec<Result<A>> = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = make();
                let lo = b * TRIAL_BLOCK;
                let hi = ((b + 1) * TRIAL_BLOCK).min(trials);
                for t in lo..hi {
                    fold(t, &mut acc)?;
                }
                Ok(acc)
            })
            .collect();
        let mut iter = blocks.into_iter();
        let mut first = iter.next().expect("at least one block")?;
        for block in iter {
            merge(&mut first, block?);
        }
        Ok(first)
    };

    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
            pool.install(body)
        }
        None => body(),
    }
}

/// One row of an experiment's output grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    /// Cell coordinates in display form, e.g. `{"L": "100", "dither_var": "9"}`.
    pub cell: BTreeMap<String, String>,
    pub trials: usize,
    pub diverged: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_hat_at_n0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n0: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thm1_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thm2_upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censored_frac: Option<f64>,
    /// Experiment-specific scalars (`p_fa`, `kl_z`, `r_hat`, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl CellResult {
    pub fn new(cell: BTreeMap<String, String>, trials: usize, diverged: usize) -> Self {
        CellResult {
            cell,
            trials,
            diverged,
            rate: None,
            ci_lo: None,
            ci_hi: None,
            t_hat: None,
            c_hat_at_n0: None,
            n0: None,
            thm1_lower: None,
            thm2_upper: None,
            censored_frac: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_rate(mut self, positives: usize, used: usize) -> Self {
        let rate = if used == 0 {
            f64::NAN
        } else {
            positives as f64 / used as f64
        };
        let (lo, hi) = crate::stats::wilson_interval(positives, used);
        self.rate = Some(rate);
        self.ci_lo = Some(lo);
        self.ci_hi = Some(hi);
        self
    }
}

/// Reproducibility block embedded in every result file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub experiment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
}

/// Aggregated output of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    /// Deception-cost curves produced along the way, keyed by cell label;
    /// consumed by the `bounds` subcommand.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub curves: BTreeMap<String, DeceptionCostCurve>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExperimentResult {
    pub fn new(config: &ExperimentConfig, experiment: &str) -> Self {
        ExperimentResult {
            provenance: Provenance {
                experiment: experiment.to_string(),
                preset: config.preset.clone(),
                config_hash: config.config_hash(),
                master_seed: config.master_seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            config: config.clone(),
            cells: Vec::new(),
            curves: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    /// Flag cells whose diverged-trial share exceeds 1%.
    pub fn warn_on_divergence(&mut self) {
        for cell in &self.cells {
            if cell.trials > 0 && cell.diverged as f64 > 0.01 * cell.trials as f64 {
                self.warnings.push(format!(
                    "cell {:?}: {} of {} trials diverged (> 1%)",
                    cell.cell, cell.diverged, cell.trials
                ));
            }
        }
    }
}

/// Static pre-run checks; returns a list of human-readable failures
/// (empty means the config is runnable).
pub fn validate_config(config: &ExperimentConfig) -> Vec<String> {
    let mut failures = Vec::new();

    let model = match config.model() {
        Ok(m) => Some(m),
        Err(e) => {
            failures.push(e.to_string());
            None
        }
    };

    if config.trials < 1 {
        failures.push("trials: must be at least 1".into());
    }
    if let Some(g) = config.gamma {
        if !(g > 0.0) {
            failures.push(format!("gamma: must be positive, got {g}"));
        }
    }
    if let Some(gs) = &config.gamma_grid {
        for g in gs {
            if !(*g > 0.0) {
                failures.push(format!("gamma_grid: must be positive, got {g}"));
            }
        }
    }
    if let Some(eps) = &config.epsilon_grid {
        if eps.is_empty() {
            failures.push("epsilon_grid: must be non-empty".into());
        }
        for e in eps {
            if !(*e > 0.0 && *e < 1.0) {
                failures.push(format!("epsilon_grid: epsilon must lie in (0,1), got {e}"));
            }
        }
    }
    if let Some(ls) = &config.l_grid {
        if ls.is_empty() {
            failures.push("l_grid: must be non-empty".into());
        }
        for l in ls {
            if *l >= config.horizon {
                failures.push(format!(
                    "horizon: must exceed every exploration length (L = {l}, horizon = {})",
                    config.horizon
                ));
            }
        }
    }
    if let Some(l) = config.exploration_len {
        if l >= config.horizon {
            failures.push(format!(
                "horizon: must exceed the exploration length (L = {l}, horizon = {})",
                config.horizon
            ));
        }
    }
    if let Some(d) = config.delta {
        if !(d > 0.0 && d < 1.0) {
            failures.push(format!("delta: must lie in (0,1), got {d}"));
        }
    }

    if let (Some(model), Ok(policy)) = (
        model.as_ref(),
        config.control_policy(config.dither_grid.as_ref().and_then(|g| g.first().copied())),
    ) {
        // the exploration-length recipe assumes a marginally stable closed
        // loop; enforce it for that experiment
        if config.experiment.as_deref() == Some("exploration_length") {
            let cl = policy.closed_loop(model.gain());
            match crate::lti::spectral_radius(&cl, crate::lti::NORM_TOL) {
                Ok(rho) if rho > 1.0 + 1e-9 => failures.push(format!(
                    "policy: closed-loop spectral radius {rho:.3} violates marginal stability \
                     required by the exploration-length recipe"
                )),
                Err(e) => failures.push(format!("policy: {e}")),
                _ => {}
            }
        }
    } else if model.is_some() {
        if let Err(e) = config.control_policy(None) {
            failures.push(e.to_string());
        }
    }

    failures
}

/// Compiled-in experiment presets. The versioned constants behind
/// `experiment <preset>`.
pub mod presets {
    use super::ExperimentConfig;

    pub const PRESET_NAMES: &[&str] = &[
        "scalar-fig2a",
        "vector-fig2b",
        "scalar-bounds",
        "sprt-calibration",
        "chebyshev-fa",
        "ls-tail",
        "exploration-length",
        "energy-tradeoff",
    ];

    fn base(experiment: &str, preset: &str) -> ExperimentConfig {
        ExperimentConfig {
            experiment: Some(experiment.to_string()),
            preset: Some(preset.to_string()),
            a: vec![vec![1.1]],
            sigma2: 1.0,
            x0: None,
            policy: "cancel_plus_dither".to_string(),
            policy_gain: None,
            policy_a_ref: None,
            policy_scale: None,
            dither_var: Some(0.0),
            exploration_len: None,
            learning: None,
            forced_estimate: None,
            malicious: None,
            malicious_gain: None,
            gamma: None,
            tau: None,
            noise_cov: None,
            sprt_reference: None,
            l_grid: None,
            dither_grid: None,
            epsilon_grid: None,
            tau_grid: None,
            gamma_grid: None,
            d_grid: None,
            k_grid: None,
            eta_grid: None,
            n_max: None,
            kl_offset: None,
            c1: None,
            delta: None,
            alpha: None,
            pilot_exploration_len: None,
            sprt_trials: None,
            trials: 10_000,
            horizon: 801,
            master_seed: 1,
            workers: None,
        }
    }

    /// Scalar success-vs-exploration-length sweep: a = 1.1, σ² = 1,
    /// variance test with γ = 0.1 at τ = 800, dither grid {0, 9, 16}.
    pub fn scalar_fig2a() -> ExperimentConfig {
        let mut c = base("success_vs_l", "scalar-fig2a");
        c.gamma = Some(0.1);
        c.tau = Some(800);
        c.dither_grid = Some(vec![0.0, 9.0, 16.0]);
        c.l_grid = Some(vec![10, 20, 40, 80, 160, 320]);
        c.horizon = 801;
        c
    }

    /// Vector success-vs-window sweep: A = [1 2; 3 4], Σ = I,
    /// U = -0.9·A·Y, covariance test with γ = 0.1 over τ ∈ {200, 800, 3200}.
    pub fn vector_fig2b() -> ExperimentConfig {
        let mut c = base("success_vs_window", "vector-fig2b");
        c.a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        c.policy = "scaled_cancel".to_string();
        c.policy_scale = Some(0.9);
        c.dither_var = None;
        c.gamma = Some(0.1);
        c.tau_grid = Some(vec![200, 800, 3200]);
        c.l_grid = Some(vec![50, 150, 400]);
        c.horizon = 3201;
        c
    }

    /// Scalar deception-time bound suite: per (L, dither, ε) the cost curve,
    /// n₀, the Theorem 1/2 pair, genie-SPRT deception times, error rates,
    /// and the KL identity check at n = L + 50.
    pub fn scalar_bounds() -> ExperimentConfig {
        let mut c = base("bound_suite", "scalar-bounds");
        c.l_grid = Some(vec![50, 100]);
        c.dither_grid = Some(vec![0.0, 9.0]);
        c.epsilon_grid = Some(vec![0.05, 0.01, 0.001]);
        c.kl_offset = Some(50);
        c.n_max = Some(1700);
        c.horizon = 3000;
        c.trials = 10_000;
        c
    }

    /// SPRT error-probability calibration with a fixed genie reference
    /// Â = 1.3 against a = 1.1.
    pub fn sprt_calibration() -> ExperimentConfig {
        let mut c = base("sprt_calibration", "sprt-calibration");
        c.epsilon_grid = Some(vec![0.1, 0.05, 0.01]);
        c.exploration_len = Some(100);
        c.sprt_reference = Some(vec![vec![1.3]]);
        c.horizon = 4_000;
        c.trials = 10_000;
        c
    }

    /// Variance-test false alarms against the Chebyshev bound on a
    /// (γ, τ) grid.
    pub fn chebyshev_fa() -> ExperimentConfig {
        let mut c = base("chebyshev_fa", "chebyshev-fa");
        c.gamma_grid = Some(vec![0.1, 0.2]);
        c.tau_grid = Some(vec![100, 800]);
        c.horizon = 801;
        c
    }

    /// Scalar LS estimation-error tail versus `2/(1+η²)^{k/2}`.
    pub fn ls_tail() -> ExperimentConfig {
        let mut c = base("ls_tail", "ls-tail");
        c.k_grid = Some(vec![20, 50, 100]);
        c.eta_grid = Some(vec![0.25, 0.5, 1.0]);
        c.horizon = 100;
        c
    }

    /// Exploration-length recipe check: pilot curve → L(D), fresh runs at
    /// L(D), plus deception-time monotonicity in L.
    pub fn exploration_length() -> ExperimentConfig {
        let mut c = base("exploration_length", "exploration-length");
        c.d_grid = Some(vec![20.0, 50.0]);
        c.l_grid = Some(vec![10, 25, 50, 100]);
        c.epsilon_grid = Some(vec![0.05, 0.01, 0.001]);
        c.c1 = Some(2.0);
        c.delta = Some(0.1);
        c.pilot_exploration_len = Some(50);
        c.n_max = Some(1100);
        c.horizon = 6_000;
        c.trials = 2_000;
        c
    }

    /// Control-energy / detection-delay trade-off over dither {0, 9, 16}.
    pub fn energy_tradeoff() -> ExperimentConfig {
        let mut c = base("energy_tradeoff", "energy-tradeoff");
        c.dither_grid = Some(vec![0.0, 9.0, 16.0]);
        c.exploration_len = Some(10);
        c.gamma = Some(0.1);
        c.epsilon_grid = Some(vec![0.01]);
        c.n_max = Some(1200);
        c.horizon = 2_000;
        c
    }

    pub fn by_name(name: &str) -> Option<ExperimentConfig> {
        match name {
            "scalar-fig2a" => Some(scalar_fig2a()),
            "vector-fig2b" => Some(vector_fig2b()),
            "scalar-bounds" => Some(scalar_bounds()),
            "sprt-calibration" => Some(sprt_calibration()),
            "chebyshev-fa" => Some(chebyshev_fa()),
            "ls-tail" => Some(ls_tail()),
            "exploration-length" => Some(exploration_length()),
            "energy-tradeoff" => Some(energy_tradeoff()),
            _ => None,
        }
    }
}

/// Dispatch an experiment by its `experiment` tag.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let name = config
        .experiment
        .as_deref()
        .ok_or_else(|| Error::config("experiment", "missing experiment tag"))?;
    match name {
        "success_vs_l" => experiments::success_vs_l(config),
        "success_vs_window" => experiments::success_vs_window(config),
        "bound_suite" => experiments::bound_suite(config),
        "sprt_calibration" => experiments::sprt_calibration(config),
        "chebyshev_fa" => experiments::chebyshev_fa(config),
        "ls_tail" => experiments::ls_tail(config),
        "exploration_length" => experiments::exploration_length(config),
        "energy_tradeoff" => experiments::energy_tradeoff(config),
        other => Err(Error::config(
            "experiment",
            format!("unknown experiment `{other}`"),
        )),
    }
}
