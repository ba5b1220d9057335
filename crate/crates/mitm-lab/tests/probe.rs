// Scratch probes for calibrating the experiment presets. Not part of the
// final suite; run with `cargo test --test probe -- --ignored --nocapture`.

use mitm_lab::harness::{presets, run_experiment};

#[test]
#[ignore]
fn probe_bound_suite_small() {
    let mut config = presets::scalar_bounds();
    config.trials = 2_000;
    config.sprt_trials = Some(1_000);
    config.l_grid = Some(vec![100]);
    config.dither_grid = Some(vec![0.0]);
    let result = run_experiment(&config).unwrap();
    for cell in &result.cells {
        println!(
            "{:?} n0={:?} c={:?} thm1={:?} thm2={:?} t_hat={:?} cens={:?} extra={:?}",
            cell.cell, cell.n0, cell.c_hat_at_n0, cell.thm1_lower, cell.thm2_upper, cell.t_hat,
            cell.censored_frac, cell.extra
        );
    }
    println!("warnings: {:?}", result.warnings);
}

#[test]
#[ignore]
fn probe_fig2a_small() {
    let mut config = presets::scalar_fig2a();
    config.trials = 2_000;
    let result = run_experiment(&config).unwrap();
    for cell in &result.cells {
        println!(
            "{:?} rate={:?} ci=({:?},{:?}) div={}",
            cell.cell, cell.rate, cell.ci_lo, cell.ci_hi, cell.diverged
        );
    }
    println!("warnings: {:?}", result.warnings);
}

#[test]
#[ignore]
fn probe_fig2b_small() {
    let mut config = presets::vector_fig2b();
    config.trials = 1_000;
    let result = run_experiment(&config).unwrap();
    for cell in &result.cells {
        println!(
            "{:?} rate={:?} div={}",
            cell.cell, cell.rate, cell.diverged
        );
    }
    println!("warnings: {:?}", result.warnings);
}

#[test]
#[ignore]
fn probe_calibration_small() {
    let mut config = presets::sprt_calibration();
    config.trials = 2_000;
    let result = run_experiment(&config).unwrap();
    for cell in &result.cells {
        println!(
            "{:?} rate={:?} censored={:?} extra={:?}",
            cell.cell, cell.rate, cell.censored_frac, cell.extra
        );
    }
}

#[test]
#[ignore]
fn probe_exploration_small() {
    let mut config = presets::exploration_length();
    config.trials = 500;
    let result = run_experiment(&config).unwrap();
    for cell in &result.cells {
        println!(
            "{:?} t_hat={:?} censored={:?} extra={:?}",
            cell.cell, cell.t_hat, cell.censored_frac, cell.extra
        );
    }
}

#[test]
#[ignore]
fn probe_energy_small() {
    let mut config = presets::energy_tradeoff();
    config.trials = 2_000;
    let result = run_experiment(&config).unwrap();
    for cell in &result.cells {
        println!(
            "{:?} n0={:?} extra={:?}",
            cell.cell, cell.n0, cell.extra
        );
    }
}

#[test]
#[ignore]
fn probe_chebyshev_and_tail() {
    let mut config = presets::chebyshev_fa();
    config.trials = 2_000;
    let result = run_experiment(&config).unwrap();
    for cell in &result.cells {
        println!("{:?} rate={:?} extra={:?}", cell.cell, cell.rate, cell.extra);
    }
    let mut config = presets::ls_tail();
    config.trials = 2_000;
    let result = run_experiment(&config).unwrap();
    for cell in &result.cells {
        println!("{:?} rate={:?} extra={:?}", cell.cell, cell.rate, cell.extra);
    }
}
