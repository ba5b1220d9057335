//! The experiment drivers behind `experiment <preset|config>`.
//!
//! Each driver sweeps its grid cell by cell, runs the trials through the
//! blocked deterministic fold, and emits one `CellResult` row per cell.

use std::collections::BTreeMap;

use super::{
    cell_trial_seed, run_blocked, CellCounts, CellResult, ExperimentConfig, ExperimentResult,
};
use crate::attacker::{
    eavesdrop_nominal_from, run_attack_from, LearningMode, MaliciousInput,
};
use crate::detection::{covariance_test, sprt_run, variance_first_alarm, variance_test};
use crate::error::Error;
use crate::lti::simulate_nominal_from;
use crate::metrics::{
    compute_n0, deception_time_bounds, CostCurveAccumulator, CriticalHorizon,
};
use crate::stats::{mean_se_from_moments, normal_ci};
use crate::Result;

fn cell_of(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn require<T: Copy>(opt: Option<T>, key: &str) -> Result<T> {
    opt.ok_or_else(|| Error::config(key, "required for this experiment"))
}

fn require_grid<'a, T>(opt: &'a Option<Vec<T>>, key: &str) -> Result<&'a [T]> {
    match opt {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::config(key, "non-empty grid required")),
    }
}

/// Mean/variance accumulator with deterministic merge.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    sum: f64,
    sumsq: f64,
    n: usize,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sumsq += x * x;
        self.n += 1;
    }

    fn merge(&mut self, other: &Moments) {
        self.sum += other.sum;
        self.sumsq += other.sumsq;
        self.n += other.n;
    }

    fn mean_se(&self) -> (f64, f64) {
        mean_se_from_moments(self.sum, self.sumsq, self.n)
    }
}

/// Per-epsilon SPRT bookkeeping.
#[derive(Debug, Clone, Default)]
struct SprtTally {
    alarms: usize,
    clears: usize,
    censored: usize,
    t: Moments,
}

impl SprtTally {
    fn absorb(&mut self, rec: &crate::detection::DecisionRecord, l: usize) {
        if rec.censored {
            self.censored += 1;
        } else {
            if rec.theta_hat == 1 {
                self.alarms += 1;
            } else {
                self.clears += 1;
            }
            self.t.push(rec.tau as f64 - l as f64 - 1.0);
        }
    }

    fn merge(&mut self, other: &SprtTally) {
        self.alarms += other.alarms;
        self.clears += other.clears;
        self.censored += other.censored;
        self.t.merge(&other.t);
    }

    fn total(&self) -> usize {
        self.alarms + self.clears + self.censored
    }

    fn censored_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.censored as f64 / self.total() as f64
        }
    }
}

/// Attacker success rate against the scalar variance test as the
/// exploration length grows, per dither level.
pub fn success_vs_l(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = config.model()?;
    if model.dim() != 1 {
        return Err(Error::config("a", "success_vs_l is a scalar experiment"));
    }
    let gamma = require(config.gamma, "gamma")?;
    let tau = require(config.tau, "tau")?;
    if config.horizon < tau + 1 {
        return Err(Error::config("horizon", "must be at least tau + 1"));
    }
    let l_grid = require_grid(&config.l_grid, "l_grid")?;
    let dither_grid = require_grid(&config.dither_grid, "dither_grid")?;
    let x0 = config.x0(&model)?;

    let mut result = ExperimentResult::new(config, "success_vs_l");
    for &dv in dither_grid {
        let policy = config.control_policy(Some(dv))?;
        for &l in l_grid {
            if l >= tau {
                return Err(Error::config("l_grid", "exploration length must stay below tau"));
            }
            let strategy = config.strategy(l)?;
            let label = format!("fig2a/dither={}/L={}", fmt_num(dv), l);
            let counts = run_blocked(
                config.trials,
                config.workers,
                CellCounts::default,
                |t, acc: &mut CellCounts| {
                    acc.trials += 1;
                    let traj = run_attack_from(
                        &model,
                        &policy,
                        &strategy,
                        config.horizon,
                        cell_trial_seed(config.master_seed, &label, t),
                        x0.clone(),
                    )?;
                    if traj.diverged_at.is_some() {
                        acc.diverged += 1;
                        return Ok(());
                    }
                    let theta = variance_test(
                        &traj.feedback,
                        &traj.inputs,
                        model.gain(),
                        gamma,
                        tau,
                        model.sigma2(),
                    )?;
                    if theta == 0 {
                        acc.positives += 1;
                    }
                    Ok(())
                },
                |a, b| a.merge(&b),
            )?;
            result.cells.push(
                CellResult::new(
                    cell_of(&[("L", l.to_string()), ("dither_var", fmt_num(dv))]),
                    counts.trials,
                    counts.diverged,
                )
                .with_rate(counts.positives, counts.used()),
            );
        }
    }
    result.warn_on_divergence();
    Ok(result)
}

/// Vector covariance test: attacker success per (τ, L) plus the nominal
/// false-alarm rate per τ.
pub fn success_vs_window(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = config.model()?;
    let gamma = require(config.gamma, "gamma")?;
    let sigma = config.noise_covariance(&model)?;
    let tau_grid = require_grid(&config.tau_grid, "tau_grid")?;
    let l_grid = require_grid(&config.l_grid, "l_grid")?;
    let policy = config.control_policy(None)?;
    let x0 = config.x0(&model)?;

    let mut result = ExperimentResult::new(config, "success_vs_window");

    for &tau in tau_grid {
        let horizon = tau + 1;
        if horizon > config.horizon {
            return Err(Error::config("horizon", "must cover tau + 1 for every tau"));
        }
        let label = format!("fig2b/nominal/tau={tau}");
        let counts = run_blocked(
            config.trials,
            config.workers,
            CellCounts::default,
            |t, acc: &mut CellCounts| {
                acc.trials += 1;
                let traj = simulate_nominal_from(
                    &model,
                    &policy,
                    horizon,
                    cell_trial_seed(config.master_seed, &label, t),
                    x0.clone(),
                )?;
                if traj.diverged_at.is_some() {
                    acc.diverged += 1;
                    return Ok(());
                }
                let theta =
                    covariance_test(&traj.states, &traj.inputs, model.gain(), &sigma, gamma, tau)?;
                if theta == 1 {
                    acc.positives += 1;
                }
                Ok(())
            },
            |a, b| a.merge(&b),
        )?;
        result.cells.push(
            CellResult::new(
                cell_of(&[("kind", "nominal".into()), ("tau", tau.to_string())]),
                counts.trials,
                counts.diverged,
            )
            .with_rate(counts.positives, counts.used()),
        );
    }

    for &tau in tau_grid {
        let horizon = tau + 1;
        for &l in l_grid {
            if l + 1 >= horizon {
                continue; // cell impossible: exploration does not fit the window
            }
            let strategy = config.strategy(l)?;
            let label = format!("fig2b/attack/tau={tau}/L={l}");
            let counts = run_blocked(
                config.trials,
                config.workers,
                CellCounts::default,
                |t, acc: &mut CellCounts| {
                    acc.trials += 1;
                    let traj = run_attack_from(
                        &model,
                        &policy,
                        &strategy,
                        horizon,
                        cell_trial_seed(config.master_seed, &label, t),
                        x0.clone(),
                    )?;
                    if traj.diverged_at.is_some() {
                        acc.diverged += 1;
                        return Ok(());
                    }
                    let theta = covariance_test(
                        &traj.feedback,
                        &traj.inputs,
                        model.gain(),
                        &sigma,
                        gamma,
                        tau,
                    )?;
                    if theta == 0 {
                        acc.positives += 1;
                    }
                    Ok(())
                },
                |a, b| a.merge(&b),
            )?;
            result.cells.push(
                CellResult::new(
                    cell_of(&[
                        ("kind", "attack".into()),
                        ("tau", tau.to_string()),
                        ("L", l.to_string()),
                    ]),
                    counts.trials,
                    counts.diverged,
                )
                .with_rate(counts.positives, counts.used()),
            );
        }
    }
    result.warn_on_divergence();
    Ok(result)
}

#[derive(Clone)]
struct BoundAcc {
    curve: CostCurveAccumulator,
    kl_lhs: Moments,
    kl_rhs: Moments,
    sprt: Vec<SprtTally>,
    trials: usize,
    diverged: usize,
}

/// Scalar bound suite: cost curve, n₀, the Theorem 1/2 deception-time pair,
/// genie-SPRT empirical deception times and error rates, and the KL
/// identity check, per (L, dither, ε).
pub fn bound_suite(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = config.model()?;
    if model.dim() != 1 {
        return Err(Error::config("a", "bound_suite is a scalar experiment"));
    }
    let l_grid = require_grid(&config.l_grid, "l_grid")?;
    let dither_grid = require_grid(&config.dither_grid, "dither_grid")?;
    let eps_grid = require_grid(&config.epsilon_grid, "epsilon_grid")?;
    let n_max = require(config.n_max, "n_max")?;
    let kl_offset = require(config.kl_offset, "kl_offset")?;
    if n_max >= config.horizon {
        return Err(Error::config("n_max", "must stay below the horizon"));
    }
    let sprt_limit = config.sprt_trials.unwrap_or(config.trials).min(config.trials);
    let x0 = config.x0(&model)?;

    let mut result = ExperimentResult::new(config, "bound_suite");

    for &dv in dither_grid {
        let policy = config.control_policy(Some(dv))?;
        for &l in l_grid {
            let strategy = config.strategy(l)?;
            let n_kl = l + kl_offset;
            if n_kl > n_max {
                return Err(Error::config("kl_offset", "L + kl_offset must stay within n_max"));
            }
            let label = format!("bounds/dither={}/L={}", fmt_num(dv), l);

            // attacked pass: curve, KL sums, genie SPRT per epsilon
            let make = || -> Result<BoundAcc> {
                Ok(BoundAcc {
                    curve: CostCurveAccumulator::new(
                        model.gain().clone(),
                        model.sigma2(),
                        l,
                        n_max,
                    )?,
                    kl_lhs: Moments::default(),
                    kl_rhs: Moments::default(),
                    sprt: vec![SprtTally::default(); eps_grid.len()],
                    trials: 0,
                    diverged: 0,
                })
            };
            let acc = run_blocked(
                config.trials,
                config.workers,
                || make().expect("accumulator"),
                |t, acc: &mut BoundAcc| {
                    acc.trials += 1;
                    let traj = run_attack_from(
                        &model,
                        &policy,
                        &strategy,
                        config.horizon,
                        cell_trial_seed(config.master_seed, &label, t),
                        x0.clone(),
                    )?;
                    if traj.diverged_at.is_some() {
                        acc.diverged += 1;
                        return Ok(());
                    }
                    acc.curve.absorb(&traj)?;

                    // KL identity sums at n = L + kl_offset
                    let mut s = 0.0;
                    let mut q = 0.0;
                    for k in l + 1..=n_kl {
                        s += crate::detection::sprt_increment(
                            &traj.feedback[k],
                            &traj.feedback[k - 1],
                            &traj.inputs[k - 1],
                            model.gain(),
                            &traj.estimates[k - 1],
                            model.sigma2(),
                        )?;
                        let e = (&traj.estimates[k - 1] - model.gain()) * &traj.fictitious[k - 1];
                        q += e.norm_squared() / (2.0 * model.sigma2());
                    }
                    acc.kl_lhs.push(s);
                    acc.kl_rhs.push(q);

                    if t < sprt_limit {
                        let a_hat = traj.estimate_at_hijack().clone();
                        for (i, &eps) in eps_grid.iter().enumerate() {
                            let rec = sprt_run(
                                &traj.feedback,
                                &traj.inputs,
                                model.gain(),
                                &a_hat,
                                model.sigma2(),
                                l,
                                eps,
                                config.horizon,
                            )?;
                            acc.sprt[i].absorb(&rec, l);
                        }
                    }
                    Ok(())
                },
                |a, b| {
                    a.curve.merge(&b.curve);
                    a.kl_lhs.merge(&b.kl_lhs);
                    a.kl_rhs.merge(&b.kl_rhs);
                    for (x, y) in a.sprt.iter_mut().zip(b.sprt.iter()) {
                        x.merge(y);
                    }
                    a.trials += b.trials;
                    a.diverged += b.diverged;
                },
            )?;

            // matched nominal pass for the false-alarm side
            let fa_label = format!("{label}/nominal");
            let fa = run_blocked(
                sprt_limit,
                config.workers,
                || vec![SprtTally::default(); eps_grid.len()],
                |t, tallies: &mut Vec<SprtTally>| {
                    let (traj, est) = eavesdrop_nominal_from(
                        &model,
                        &policy,
                        l,
                        config.horizon,
                        cell_trial_seed(config.master_seed, &fa_label, t),
                        x0.clone(),
                    )?;
                    if traj.diverged_at.is_some() {
                        return Ok(());
                    }
                    for (i, &eps) in eps_grid.iter().enumerate() {
                        let rec = sprt_run(
                            &traj.states,
                            &traj.inputs,
                            model.gain(),
                            est.estimate(),
                            model.sigma2(),
                            l,
                            eps,
                            config.horizon,
                        )?;
                        tallies[i].absorb(&rec, l);
                    }
                    Ok(())
                },
                |a, b| {
                    for (x, y) in a.iter_mut().zip(b.iter()) {
                        x.merge(y);
                    }
                },
            )?;

            let curve = acc.curve.finalize()?;

            // one KL row per (L, dither)
            let (kl_lhs, kl_lhs_se) = acc.kl_lhs.mean_se();
            let (kl_rhs, kl_rhs_se) = acc.kl_rhs.mean_se();
            let kl_denom = (kl_lhs_se * kl_lhs_se + kl_rhs_se * kl_rhs_se).sqrt();
            let kl_z = if (kl_lhs - kl_rhs).abs() == 0.0 {
                0.0
            } else {
                (kl_lhs - kl_rhs).abs() / kl_denom
            };
            let mut kl_cell = CellResult::new(
                cell_of(&[
                    ("kind", "kl".into()),
                    ("L", l.to_string()),
                    ("dither_var", fmt_num(dv)),
                ]),
                acc.trials,
                acc.diverged,
            );
            kl_cell.extra.insert("kl_lhs".into(), kl_lhs);
            kl_cell.extra.insert("kl_rhs".into(), kl_rhs);
            kl_cell.extra.insert("kl_z".into(), kl_z);
            kl_cell.extra.insert("kl_n".into(), n_kl as f64);
            result.cells.push(kl_cell);

            // one SPRT/bounds row per epsilon
            for (i, &eps) in eps_grid.iter().enumerate() {
                let tally = &acc.sprt[i];
                let fa_tally = &fa[i];
                let mut cell = CellResult::new(
                    cell_of(&[
                        ("kind", "sprt".into()),
                        ("L", l.to_string()),
                        ("dither_var", fmt_num(dv)),
                        ("epsilon", fmt_num(eps)),
                    ]),
                    acc.trials,
                    acc.diverged,
                );
                let n0 = compute_n0(&curve, eps)?;
                cell.n0 = Some(match n0 {
                    CriticalHorizon::Finite(n) => n.to_string(),
                    CriticalHorizon::UnboundedWithinHorizon(n) => format!("unbounded({n})"),
                    CriticalHorizon::Degenerate => "degenerate".into(),
                    CriticalHorizon::Infinite => "infinite".into(),
                });
                if let CriticalHorizon::Finite(n) = n0 {
                    cell.c_hat_at_n0 = curve.c_at(n);
                    if let Ok(bounds) = deception_time_bounds(&curve, eps) {
                        cell.thm1_lower = Some(bounds.lower);
                        cell.thm2_upper = Some(bounds.upper);
                    }
                }
                let (t_hat, t_se) = tally.t.mean_se();
                if tally.t.n > 0 {
                    cell.t_hat = Some(t_hat);
                    let (lo, hi) = normal_ci(t_hat, t_se);
                    cell.extra.insert("t_ci_lo".into(), lo);
                    cell.extra.insert("t_ci_hi".into(), hi);
                    if let Some(lower) = cell.thm1_lower {
                        cell.extra.insert("ratio".into(), t_hat / lower);
                    }
                }
                cell.censored_frac = Some(tally.censored_fraction());
                let dec_total = tally.total();
                if dec_total > 0 {
                    cell.extra
                        .insert("p_dec".into(), tally.clears as f64 / dec_total as f64);
                }
                let fa_total = fa_tally.total();
                if fa_total > 0 {
                    cell.extra
                        .insert("p_fa".into(), fa_tally.alarms as f64 / fa_total as f64);
                    cell.extra
                        .insert("fa_censored_frac".into(), fa_tally.censored_fraction());
                }
                result.cells.push(cell);
            }

            result.curves.insert(label.clone(), curve);
        }
    }
    result.warn_on_divergence();
    Ok(result)
}

/// SPRT error-probability calibration with a fixed genie reference.
pub fn sprt_calibration(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = config.model()?;
    let l = require(config.exploration_len, "exploration_len")?;
    let eps_grid = require_grid(&config.epsilon_grid, "epsilon_grid")?;
    let reference = config
        .sprt_reference
        .as_ref()
        .ok_or_else(|| Error::config("sprt_reference", "required for sprt_calibration"))?;
    let reference = super::to_matrix("sprt_reference", reference)?;
    let policy = config.control_policy(None)?;
    let x0 = config.x0(&model)?;
    if l >= config.horizon {
        return Err(Error::config("horizon", "must exceed exploration_len"));
    }

    let mut result = ExperimentResult::new(config, "sprt_calibration");

    // false-alarm side: nominal data
    let label = "calibration/nominal".to_string();
    let nominal = run_blocked(
        config.trials,
        config.workers,
        || vec![SprtTally::default(); eps_grid.len()],
        |t, tallies: &mut Vec<SprtTally>| {
            let traj = simulate_nominal_from(
                &model,
                &policy,
                config.horizon,
                cell_trial_seed(config.master_seed, &label, t),
                x0.clone(),
            )?;
            if traj.diverged_at.is_some() {
                return Ok(());
            }
            for (i, &eps) in eps_grid.iter().enumerate() {
                let rec = sprt_run(
                    &traj.states,
                    &traj.inputs,
                    model.gain(),
                    &reference,
                    model.sigma2(),
                    l,
                    eps,
                    config.horizon,
                )?;
                tallies[i].absorb(&rec, l);
            }
            Ok(())
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                x.merge(y);
            }
        },
    )?;

    // deception side: attack forced to the reference matrix
    let strategy = crate::attacker::AttackStrategy {
        exploration_len: l,
        learning: LearningMode::Forced(reference.clone()),
        malicious: MaliciousInput::Zero,
    };
    let label = "calibration/attack".to_string();
    let attacked = run_blocked(
        config.trials,
        config.workers,
        || vec![SprtTally::default(); eps_grid.len()],
        |t, tallies: &mut Vec<SprtTally>| {
            let traj = run_attack_from(
                &model,
                &policy,
                &strategy,
                config.horizon,
                cell_trial_seed(config.master_seed, &label, t),
                x0.clone(),
            )?;
            if traj.diverged_at.is_some() {
                return Ok(());
            }
            for (i, &eps) in eps_grid.iter().enumerate() {
                let rec = sprt_run(
                    &traj.feedback,
                    &traj.inputs,
                    model.gain(),
                    &reference,
                    model.sigma2(),
                    l,
                    eps,
                    config.horizon,
                )?;
                tallies[i].absorb(&rec, l);
            }
            Ok(())
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                x.merge(y);
            }
        },
    )?;

    for (i, &eps) in eps_grid.iter().enumerate() {
        let fa = &nominal[i];
        let mut cell = CellResult::new(
            cell_of(&[("epsilon", fmt_num(eps)), ("kind", "nominal".into())]),
            fa.total(),
            0,
        )
        .with_rate(fa.alarms, fa.total());
        cell.censored_frac = Some(fa.censored_fraction());
        cell.extra.insert("bound_2eps".into(), 2.0 * eps);
        result.cells.push(cell);

        let dec = &attacked[i];
        let mut cell = CellResult::new(
            cell_of(&[("epsilon", fmt_num(eps)), ("kind", "attack".into())]),
            dec.total(),
            0,
        )
        .with_rate(dec.clears, dec.total());
        cell.censored_frac = Some(dec.censored_fraction());
        cell.extra.insert("bound_2eps".into(), 2.0 * eps);
        result.cells.push(cell);
    }
    Ok(result)
}

/// Variance-test false alarms against the Chebyshev bound `3σ⁴/(γ²τ)` on a
/// (γ, τ) grid; one nominal ensemble evaluated at every grid point.
pub fn chebyshev_fa(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = config.model()?;
    if model.dim() != 1 {
        return Err(Error::config("a", "chebyshev_fa is a scalar experiment"));
    }
    let gamma_grid = require_grid(&config.gamma_grid, "gamma_grid")?;
    let tau_grid = require_grid(&config.tau_grid, "tau_grid")?;
    let max_tau = *tau_grid.iter().max().unwrap();
    if config.horizon < max_tau + 1 {
        return Err(Error::config("horizon", "must be at least max(tau) + 1"));
    }
    let policy = config.control_policy(None)?;
    let x0 = config.x0(&model)?;
    let n_cells = gamma_grid.len() * tau_grid.len();
    let label = "chebyshev/nominal".to_string();

    let counts = run_blocked(
        config.trials,
        config.workers,
        || vec![CellCounts::default(); n_cells],
        |t, cells: &mut Vec<CellCounts>| {
            let traj = simulate_nominal_from(
                &model,
                &policy,
                max_tau + 1,
                cell_trial_seed(config.master_seed, &label, t),
                x0.clone(),
            )?;
            let diverged = traj.diverged_at.is_some();
            // cumulative squared residuals over k = 0..tau
            let mut cum = vec![0.0; max_tau + 1];
            if !diverged {
                let mut acc = 0.0;
                for k in 0..=max_tau {
                    let r = traj.states[k + 1][0]
                        - model.gain()[(0, 0)] * traj.states[k][0]
                        - traj.inputs[k][0];
                    acc += r * r;
                    cum[k] = acc;
                }
            }
            for (gi, &gamma) in gamma_grid.iter().enumerate() {
                for (ti, &tau) in tau_grid.iter().enumerate() {
                    let cell = &mut cells[gi * tau_grid.len() + ti];
                    cell.trials += 1;
                    if diverged {
                        cell.diverged += 1;
                        continue;
                    }
                    let stat = cum[tau] / tau as f64;
                    let alarm = !(stat > model.sigma2() - gamma && stat < model.sigma2() + gamma);
                    if alarm {
                        cell.positives += 1;
                    }
                }
            }
            Ok(())
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                x.merge(y);
            }
        },
    )?;

    let mut result = ExperimentResult::new(config, "chebyshev_fa");
    for (gi, &gamma) in gamma_grid.iter().enumerate() {
        for (ti, &tau) in tau_grid.iter().enumerate() {
            let c = &counts[gi * tau_grid.len() + ti];
            let mut cell = CellResult::new(
                cell_of(&[("gamma", fmt_num(gamma)), ("tau", tau.to_string())]),
                c.trials,
                c.diverged,
            )
            .with_rate(c.positives, c.used());
            cell.extra.insert(
                "cheb_bound".into(),
                crate::detection::chebyshev_fa_bound(model.sigma2(), gamma, tau),
            );
            result.cells.push(cell);
        }
    }
    result.warn_on_divergence();
    Ok(result)
}

/// Scalar LS estimation-error tail versus the `2/(1+η²)^{k/2}` bound.
pub fn ls_tail(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = config.model()?;
    let k_grid = require_grid(&config.k_grid, "k_grid")?;
    let eta_grid = require_grid(&config.eta_grid, "eta_grid")?;
    let policy = config.control_policy(None)?;
    let seed = crate::rng::derive_seed(config.master_seed, &[crate::rng::hash_label("ls_tail")]);
    let table =
        crate::attacker::empirical_tail(&model, &policy, k_grid, eta_grid, config.trials, seed)?;

    let mut result = ExperimentResult::new(config, "ls_tail");
    for row in &table.rows {
        let mut cell = CellResult::new(
            cell_of(&[("k", row.k.to_string()), ("eta", fmt_num(row.eta))]),
            row.trials,
            0,
        );
        cell.rate = Some(row.p_hat);
        cell.ci_lo = Some(row.ci.0);
        cell.ci_hi = Some(row.ci.1);
        cell.extra.insert("scalar_bound".into(), row.scalar_bound);
        result.cells.push(cell);
    }
    let mut fit = CellResult::new(cell_of(&[("kind", "c1_fit".into())]), config.trials, 0);
    fit.extra.insert("c1_min".into(), table.c1_min);
    result.cells.push(fit);
    Ok(result)
}

#[derive(Clone, Default)]
struct SweepAcc {
    tally: SprtTally,
    trials: usize,
    diverged: usize,
}

fn deception_time_sweep(
    config: &ExperimentConfig,
    label: &str,
    l: usize,
    epsilon: f64,
) -> Result<SweepAcc> {
    let model = config.model()?;
    let policy = config.control_policy(None)?;
    let strategy = config.strategy(l)?;
    let x0 = config.x0(&model)?;
    run_blocked(
        config.trials,
        config.workers,
        SweepAcc::default,
        |t, acc: &mut SweepAcc| {
            acc.trials += 1;
            let traj = run_attack_from(
                &model,
                &policy,
                &strategy,
                config.horizon,
                cell_trial_seed(config.master_seed, label, t),
                x0.clone(),
            )?;
            if traj.diverged_at.is_some() {
                acc.diverged += 1;
                return Ok(());
            }
            let rec = sprt_run(
                &traj.feedback,
                &traj.inputs,
                model.gain(),
                traj.estimate_at_hijack(),
                model.sigma2(),
                l,
                epsilon,
                config.horizon,
            )?;
            acc.tally.absorb(&rec, l);
            Ok(())
        },
        |a, b| {
            a.tally.merge(&b.tally);
            a.trials += b.trials;
            a.diverged += b.diverged;
        },
    )
}

/// Exploration-length recipe check: a pilot curve fixes `C̃(n₀)`, the
/// recipe maps a target deception time `D` to an exploration length, and
/// fresh runs verify the achieved deception time; plus monotonicity of the
/// deception time in `L`.
pub fn exploration_length(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = config.model()?;
    if model.dim() != 1 {
        return Err(Error::config("a", "exploration_length is a scalar experiment"));
    }
    let d_grid = require_grid(&config.d_grid, "d_grid")?;
    let l_grid = require_grid(&config.l_grid, "l_grid")?;
    let eps_grid = require_grid(&config.epsilon_grid, "epsilon_grid")?;
    let eps_min = eps_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let n_max = require(config.n_max, "n_max")?;
    let pilot_l = require(config.pilot_exploration_len, "pilot_exploration_len")?;
    let c1 = config.c1.unwrap_or(2.0);
    let delta = config.delta.unwrap_or(0.1);
    let policy = config.control_policy(None)?;
    let pilot_strategy = config.strategy(pilot_l)?;
    let x0 = config.x0(&model)?;

    // pilot ensemble for the C̃ curve
    let pilot_label = format!("explore/pilot/L={pilot_l}");
    let pilot = run_blocked(
        config.trials,
        config.workers,
        || CostCurveAccumulator::new(model.gain().clone(), model.sigma2(), pilot_l, n_max)
            .expect("pilot accumulator"),
        |t, acc: &mut CostCurveAccumulator| {
            let traj = run_attack_from(
                &model,
                &policy,
                &pilot_strategy,
                n_max,
                cell_trial_seed(config.master_seed, &pilot_label, t),
                x0.clone(),
            )?;
            if traj.diverged_at.is_none() {
                acc.absorb(&traj)?;
            }
            Ok(())
        },
        |a, b| a.merge(&b),
    )?;
    let curve = pilot.finalize()?;

    let mut result = ExperimentResult::new(config, "exploration_length");
    result.curves.insert(pilot_label.clone(), curve.clone());

    for &d in d_grid {
        let l_recipe = crate::metrics::exploration_length_recipe(d, &curve, eps_min, c1, delta)?;
        let l = (l_recipe.ceil() as usize).max(2);
        let label = format!("explore/recipe/D={}", fmt_num(d));
        let sweep = deception_time_sweep(config, &label, l, eps_min)?;
        let (t_hat, t_se) = sweep.tally.t.mean_se();
        let mut cell = CellResult::new(
            cell_of(&[("kind", "recipe".into()), ("D", fmt_num(d))]),
            sweep.trials,
            sweep.diverged,
        );
        if sweep.tally.t.n > 0 {
            cell.t_hat = Some(t_hat);
            let (lo, hi) = normal_ci(t_hat, t_se);
            cell.extra.insert("t_ci_lo".into(), lo);
            cell.extra.insert("t_ci_hi".into(), hi);
        }
        cell.censored_frac = Some(sweep.tally.censored_fraction());
        cell.extra.insert("l_recipe".into(), l as f64);
        cell.extra.insert("epsilon".into(), eps_min);
        cell.extra.insert("t_target".into(), 0.5 * d);
        result.cells.push(cell);
    }

    for &l in l_grid {
        let label = format!("explore/sweep/L={l}");
        let sweep = deception_time_sweep(config, &label, l, eps_min)?;
        let (t_hat, t_se) = sweep.tally.t.mean_se();
        let mut cell = CellResult::new(
            cell_of(&[("kind", "L-sweep".into()), ("L", l.to_string())]),
            sweep.trials,
            sweep.diverged,
        );
        if sweep.tally.t.n > 0 {
            cell.t_hat = Some(t_hat);
            let (lo, hi) = normal_ci(t_hat, t_se);
            cell.extra.insert("t_ci_lo".into(), lo);
            cell.extra.insert("t_ci_hi".into(), hi);
        }
        cell.censored_frac = Some(sweep.tally.censored_fraction());
        cell.extra.insert("epsilon".into(), eps_min);
        result.cells.push(cell);
    }
    result.warn_on_divergence();
    Ok(result)
}

#[derive(Clone)]
struct EnergyAcc {
    curve: CostCurveAccumulator,
    /// prefix input energy Σ_{k=L}^{n-1} ‖U_{k-1}‖² per n ∈ (L, n_max]
    energy_sum: Vec<f64>,
    energy_sumsq: Vec<f64>,
    delay: Moments,
    alarmed: usize,
    missed: usize,
    trials: usize,
    diverged: usize,
}

/// Control-energy versus detection-delay trade-off over a dither grid.
pub fn energy_tradeoff(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = config.model()?;
    if model.dim() != 1 {
        return Err(Error::config("a", "energy_tradeoff is a scalar experiment"));
    }
    let dither_grid = require_grid(&config.dither_grid, "dither_grid")?;
    let l = require(config.exploration_len, "exploration_len")?;
    let gamma = require(config.gamma, "gamma")?;
    let eps_grid = require_grid(&config.epsilon_grid, "epsilon_grid")?;
    let eps = eps_grid[0];
    let n_max = require(config.n_max, "n_max")?;
    if n_max >= config.horizon {
        return Err(Error::config("n_max", "must stay below the horizon"));
    }
    let x0 = config.x0(&model)?;
    // Smallest window at which the Chebyshev false-alarm bound is
    // non-vacuous; earlier windows alarm on noise alone.
    let tau_min = ((3.0 * model.sigma2() * model.sigma2() / (gamma * gamma)).ceil() as usize)
        .max(l + 1)
        .min(config.horizon - 1);

    let mut result = ExperimentResult::new(config, "energy_tradeoff");
    for &dv in dither_grid {
        let policy = config.control_policy(Some(dv))?;
        let strategy = config.strategy(l)?;
        let label = format!("energy/dither={}", fmt_num(dv));
        let len = n_max - l;
        let acc = run_blocked(
            config.trials,
            config.workers,
            || EnergyAcc {
                curve: CostCurveAccumulator::new(model.gain().clone(), model.sigma2(), l, n_max)
                    .expect("energy accumulator"),
                energy_sum: vec![0.0; len],
                energy_sumsq: vec![0.0; len],
                delay: Moments::default(),
                alarmed: 0,
                missed: 0,
                trials: 0,
                diverged: 0,
            },
            |t, acc: &mut EnergyAcc| {
                acc.trials += 1;
                let traj = run_attack_from(
                    &model,
                    &policy,
                    &strategy,
                    config.horizon,
                    cell_trial_seed(config.master_seed, &label, t),
                    x0.clone(),
                )?;
                if traj.diverged_at.is_some() {
                    acc.diverged += 1;
                    return Ok(());
                }
                acc.curve.absorb(&traj)?;
                let mut prefix = 0.0;
                for (i, n) in (l + 1..=n_max).enumerate() {
                    // R(n) sums U_{k-1} for k = L..n-1
                    prefix += traj.inputs[n - 2].norm_squared();
                    acc.energy_sum[i] += prefix;
                    acc.energy_sumsq[i] += prefix * prefix;
                }
                match variance_first_alarm(
                    &traj.feedback,
                    &traj.inputs,
                    model.gain(),
                    gamma,
                    model.sigma2(),
                    tau_min,
                    config.horizon - 1,
                )? {
                    Some(tau) => {
                        acc.alarmed += 1;
                        acc.delay.push(tau as f64 - l as f64);
                    }
                    None => acc.missed += 1,
                }
                Ok(())
            },
            |a, b| {
                a.curve.merge(&b.curve);
                for i in 0..a.energy_sum.len() {
                    a.energy_sum[i] += b.energy_sum[i];
                    a.energy_sumsq[i] += b.energy_sumsq[i];
                }
                a.delay.merge(&b.delay);
                a.alarmed += b.alarmed;
                a.missed += b.missed;
                a.trials += b.trials;
                a.diverged += b.diverged;
            },
        )?;

        let curve = acc.curve.finalize()?;
        let mut cell = CellResult::new(
            cell_of(&[("dither_var", fmt_num(dv))]),
            acc.trials,
            acc.diverged,
        );
        match compute_n0(&curve, eps)? {
            CriticalHorizon::Finite(n0) => {
                cell.n0 = Some(n0.to_string());
                cell.c_hat_at_n0 = curve.c_at(n0);
                let i = n0 - (l + 1);
                let (mean, se) =
                    mean_se_from_moments(acc.energy_sum[i], acc.energy_sumsq[i], acc.curve.trials());
                cell.extra.insert("r_hat".into(), mean / n0 as f64);
                cell.extra.insert("r_se".into(), se / n0 as f64);
            }
            other => {
                cell.n0 = Some(format!("{other:?}"));
            }
        }
        let (delay_mean, delay_se) = acc.delay.mean_se();
        if acc.delay.n > 0 {
            cell.extra.insert("delay_mean".into(), delay_mean);
            cell.extra.insert("delay_se".into(), delay_se);
        }
        let observed = acc.alarmed + acc.missed;
        if observed > 0 {
            cell.extra.insert(
                "delay_censored_frac".into(),
                acc.missed as f64 / observed as f64,
            );
        }
        cell.censored_frac = Some(if observed == 0 {
            0.0
        } else {
            acc.missed as f64 / observed as f64
        });
        result.cells.push(cell);
        result.curves.insert(label, curve);
    }
    result.warn_on_divergence();
    Ok(result)
}
