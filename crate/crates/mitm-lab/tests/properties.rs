//! Property tests for the structural invariants.

mod common;

use mitm_lab::attacker::{run_attack, AttackStrategy, EstimatorState, LearningMode, MaliciousInput};
use mitm_lab::detection::sprt_increment;
use mitm_lab::lti::{
    operator_norm, simulate_nominal, spectral_radius, ControlPolicy, SystemModel, NORM_TOL,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn small_matrix(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-5.0..5.0f64, dim * dim)
        .prop_map(move |v| DMatrix::from_row_slice(dim, dim, &v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_norm_dominates_spectral_radius(m in small_matrix(3)) {
        let op = operator_norm(&m, NORM_TOL).unwrap();
        let rho = spectral_radius(&m, NORM_TOL).unwrap();
        prop_assert!(op + 1e-8 >= rho, "op={op} rho={rho}");
    }

    #[test]
    fn operator_norm_equals_radius_on_symmetric(m in small_matrix(3)) {
        let sym = (&m + m.transpose()).scale(0.5);
        let op = operator_norm(&sym, NORM_TOL).unwrap();
        let rho = spectral_radius(&sym, NORM_TOL).unwrap();
        prop_assert!((op - rho).abs() <= 1e-9 * op.max(1.0), "op={op} rho={rho}");
    }

    #[test]
    fn operator_norm_is_absolutely_homogeneous(m in small_matrix(2), c in -3.0..3.0f64) {
        let op = operator_norm(&m, NORM_TOL).unwrap();
        let scaled = operator_norm(&m.scale(c), NORM_TOL).unwrap();
        prop_assert!((scaled - c.abs() * op).abs() <= 1e-12 * (1.0 + op), "c={c}");
    }

    #[test]
    fn nominal_residuals_reconstruct_noise(
        a in 0.2..1.5f64,
        dither in 0.0..4.0f64,
        seed in 0u64..1000,
    ) {
        let model = SystemModel::scalar(a, 1.0).unwrap();
        let policy = ControlPolicy::CancelPlusDither {
            a_ref: DMatrix::from_element(1, 1, a),
            dither_var: dither,
        };
        let traj = simulate_nominal(&model, &policy, 50, seed).unwrap();
        for k in 0..50 {
            let r = traj.states[k + 1][0] - a * traj.states[k][0] - traj.inputs[k][0];
            prop_assert!((r - traj.noises[k][0]).abs() <= 1e-11);
        }
    }

    #[test]
    fn trajectories_are_seed_deterministic(seed in 0u64..500) {
        let model = SystemModel::scalar(1.1, 1.0).unwrap();
        let policy = ControlPolicy::CancelPlusDither {
            a_ref: DMatrix::from_element(1, 1, 1.1),
            dither_var: 9.0,
        };
        let strategy = AttackStrategy::freeze_after(10);
        let t1 = run_attack(&model, &policy, &strategy, 40, seed).unwrap();
        let t2 = run_attack(&model, &policy, &strategy, 40, seed).unwrap();
        prop_assert_eq!(t1.states, t2.states);
        prop_assert_eq!(t1.feedback, t2.feedback);
        prop_assert_eq!(t1.inputs, t2.inputs);
    }

    #[test]
    fn sprt_increment_antisymmetry(
        yk in -5.0..5.0f64,
        yp in -5.0..5.0f64,
        up in -5.0..5.0f64,
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        sigma2 in 0.1..4.0f64,
    ) {
        let ma = DMatrix::from_element(1, 1, a);
        let mb = DMatrix::from_element(1, 1, b);
        let y_k = DVector::from_vec(vec![yk]);
        let y_p = DVector::from_vec(vec![yp]);
        let u_p = DVector::from_vec(vec![up]);
        let fwd = sprt_increment(&y_k, &y_p, &u_p, &ma, &mb, sigma2).unwrap();
        let rev = sprt_increment(&y_k, &y_p, &u_p, &mb, &ma, sigma2).unwrap();
        prop_assert_eq!(fwd, -rev);
    }

    #[test]
    fn phase_boundary_is_exact(l in 1usize..20, seed in 0u64..200) {
        let model = SystemModel::scalar(1.1, 1.0).unwrap();
        let policy = ControlPolicy::CancelPlusDither {
            a_ref: DMatrix::from_element(1, 1, 1.1),
            dither_var: 4.0,
        };
        let strategy = AttackStrategy {
            exploration_len: l,
            learning: LearningMode::ExplorationOnly,
            malicious: MaliciousInput::Zero,
        };
        let horizon = l + 15;
        let traj = run_attack(&model, &policy, &strategy, horizon, seed).unwrap();
        for k in 0..=l {
            prop_assert_eq!(&traj.feedback[k], &traj.states[k]);
        }
        for k in l + 1..=horizon {
            prop_assert_eq!(&traj.feedback[k], &traj.fictitious[k]);
        }
        let expected: Vec<u8> = (1..=horizon).map(|k| u8::from(k > l)).collect();
        prop_assert_eq!(&traj.theta, &expected);
    }

    #[test]
    fn recursive_ls_matches_batch(seed in 0u64..200, n_steps in 5usize..60) {
        let model = SystemModel::scalar(1.1, 1.0).unwrap();
        let policy = ControlPolicy::CancelPlusDither {
            a_ref: DMatrix::from_element(1, 1, 1.1),
            dither_var: 9.0,
        };
        let traj = simulate_nominal(&model, &policy, n_steps, seed).unwrap();
        let mut est = EstimatorState::new(1);
        let mut transitions = Vec::new();
        for k in 1..n_steps {
            est.update(&traj.states[k], &traj.states[k + 1], &traj.inputs[k]).unwrap();
            transitions.push((
                traj.states[k].clone(),
                traj.inputs[k].clone(),
                traj.states[k + 1].clone(),
            ));
        }
        let batch = common::batch_ls(&transitions);
        let diff = (est.estimate() - &batch).norm();
        let scale = batch.norm().max(1.0);
        prop_assert!(diff <= 1e-9 * scale, "diff={diff}");
    }

    #[test]
    fn exploration_only_history_is_frozen(l in 2usize..15, seed in 0u64..100) {
        let model = SystemModel::scalar(1.1, 1.0).unwrap();
        let policy = ControlPolicy::CancelPlusDither {
            a_ref: DMatrix::from_element(1, 1, 1.1),
            dither_var: 1.0,
        };
        let strategy = AttackStrategy::freeze_after(l);
        let traj = run_attack(&model, &policy, &strategy, l + 20, seed).unwrap();
        for k in l..=l + 20 {
            prop_assert_eq!(&traj.estimates[k], &traj.estimates[l]);
        }
    }
}

#[test]
fn noiseless_identifiability_scalar_and_vector() {
    // scalar
    let model = SystemModel::scalar(1.1, 0.0).unwrap();
    let policy = ControlPolicy::ScaledCancel {
        a_ref: DMatrix::from_element(1, 1, 1.1),
        scale: 0.7,
    };
    let traj = simulate_nominal(&model, &policy, 10, 0).unwrap();
    let mut est = EstimatorState::new(1);
    est.update(&traj.states[1], &traj.states[2], &traj.inputs[1])
        .unwrap();
    assert!((est.estimate()[(0, 0)] - 1.1).abs() < 1e-8);

    // vector: states must span the plane before the estimate resolves
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let mut est = EstimatorState::new(2);
    let xs = [
        DVector::from_vec(vec![1.0, 0.0]),
        DVector::from_vec(vec![0.0, 1.0]),
    ];
    for x in &xs {
        let u = DVector::from_vec(vec![0.3, -0.2]);
        let x_next = &a * x + &u;
        est.update(x, &x_next, &u).unwrap();
    }
    assert!((est.estimate() - &a).norm() < 1e-8);
}
