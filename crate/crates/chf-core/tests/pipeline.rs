//! End-to-end flows that cross module boundaries: a certified controller
//! tracking a real plant, Hebbian updates tuning a detuned loop, and a
//! two-level stack feeding its top analysis unit.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chf_core::control::{
    check_uniform_pd, theorem_pairs, track_speed_field, AffineIdModel, SdsController,
    TrackOptions,
};
use chf_core::domain::AxisBox;
use chf_core::hierarchy::{build_hierarchy, HierarchyLevel};
use chf_core::learning::{hebbian_update_q, synth};
use chf_core::plant::{families, SpeedField};
use chf_core::recon::ReconNet;

/// The tracking guarantee is a property of the plant/model matrix products,
/// checked over the domain before any trajectory is run. The loop itself
/// must then deliver what the certificate promises: a state-dependent arm
/// driven toward a target point with the error norm settling at zero.
#[test]
fn certificate_predicts_tracking_and_the_loop_delivers_it() {
    let domain = AxisBox::centred(2, 3.0);
    let plant = families::mass_varying_arm(2.0, 0.4, 0.3, 0.5, domain.clone()).unwrap();
    let controller = SdsController::new(
        AffineIdModel::exact(&plant),
        AffineIdModel::exact(&plant),
        6.0,
    )
    .unwrap();

    // Certificate first: all nine matrix products stay uniformly positive
    // definite over a grid plus random interior points.
    let pairs = theorem_pairs(&plant, &controller);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let report = check_uniform_pd(&pairs, &domain, 5, 200, 1e-6, &mut rng).unwrap();
    assert!(
        report.is_uniformly_pd(),
        "certificate failed: worst pair {} at eigenvalue {}",
        report.worst_pair,
        report.min_eigenvalue
    );

    // Then the loop: drive the arm from rest to a target inside the domain.
    let target = DVector::from_vec(vec![1.2, -0.8]);
    let field = SpeedField::to_target(target.clone(), 1.0);
    let record = track_speed_field(
        &plant,
        &controller,
        &field,
        DVector::from_vec(vec![-1.0, 1.5]),
        &TrackOptions::new(12.0, 1e-3),
    )
    .unwrap();

    let final_x = record.x.last().unwrap();
    assert!(
        (final_x - &target).norm() < 0.02,
        "arm ended at {final_x} instead of the target"
    );
    assert!(record.asymptotic_error() < 0.02);
    assert!(record.time_to_reach(0.05).is_some());
}

/// A loop whose top-down weights start scaled down reconstructs poorly and
/// mislocates the generative code. Running budgeted relaxations with the
/// Hebbian top-down update on mixed samples must shrink the tuning distance
/// and bring the relaxed hidden state back onto the planted source.
#[test]
fn hebbian_updates_tune_a_detuned_loop() {
    let mixing = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.3, 1.1]);
    let w = mixing.clone().try_inverse().unwrap();
    let mut net = ReconNet::simple(w, mixing.clone() * 0.55).unwrap();

    let probe_s = DVector::from_vec(vec![0.7, -0.4]);
    let probe_x = &mixing * &probe_s;
    let relaxed = |net: &ReconNet, x: &DVector<f64>| {
        let run = net.relax_simple(x, 0.05, 400).unwrap();
        run.trajectory.last().unwrap().clone()
    };

    let distance_before = net.is_tuned(f64::INFINITY).1;
    let code_error_before = (relaxed(&net, &probe_x) - &probe_s).norm();
    assert!(
        code_error_before > 0.3,
        "detuned loop should misplace the code, error was {code_error_before}"
    );

    // Short relaxation budgets leave a residual error for the update to
    // consume: after k sweeps the error scales with the k-th power of the
    // tuning gap, so a long budget starves the update and at full
    // convergence it stalls for any invertible top-down matrix.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sources = synth::uniform_sources(&mut rng, 2, 1200);
    let v = DVector::zeros(net.v_dim());
    for s in &sources {
        let x = &mixing * s;
        net.reset();
        for _ in 0..2 {
            net.step_extended(&x, &v, 1.0).unwrap();
        }
        let e = &x - net.reconstruction();
        let h = net.h.clone();
        hebbian_update_q(&mut net, &e, &h, 0.15, false).unwrap();
    }

    let distance_after = net.is_tuned(f64::INFINITY).1;
    let code_error_after = (relaxed(&net, &probe_x) - &probe_s).norm();
    assert!(
        distance_after < 0.5 * distance_before,
        "tuning distance went {distance_before} -> {distance_after}"
    );
    assert!(
        code_error_after < 0.1,
        "trained loop should recover the source, error was {code_error_after}"
    );
}

/// Two stacked loops with an integral controller between them, plus the
/// analysis unit derived from the top level's matrices: the sweep must stay
/// finite, the controller must actually act, a tuned bottom level must pass
/// the one-sweep check, and the derived unit must agree with the matrices
/// it came from and invert its own forward model.
#[test]
fn stacked_loops_feed_a_consistent_top_analysis_unit() {
    // Identity loop that accepts a 2-dimensional control injection from the
    // level above; gating disabled.
    let eye = DMatrix::<f64>::identity(2, 2);
    let bottom = ReconNet::extended(
        eye.clone(),
        eye.clone(),
        eye.clone(),
        DMatrix::zeros(2, 2),
        DMatrix::zeros(2, 2),
        eye.clone(),
        0.0,
        0.0,
    )
    .unwrap();
    // Symmetric product with distinct eigenvalues: diagonalizable with an
    // orthogonal basis, so the coordinate change inverts exactly.
    let w_top = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let top_net = ReconNet::simple(w_top.clone(), DMatrix::identity(2, 2)).unwrap();
    let controller = SdsController::feedback_only(
        AffineIdModel::constant(DMatrix::identity(2, 2), DVector::zeros(2)),
        2.0,
    )
    .unwrap();

    let levels = vec![
        HierarchyLevel::bottom(bottom),
        HierarchyLevel::stacked(top_net, Some(controller), -eye.clone(), eye),
    ];
    let mut stack = build_hierarchy(levels, false).unwrap();

    let x = DVector::from_vec(vec![0.6, -0.2]);
    let mut saw_control = false;
    for _ in 0..300 {
        let snapshots = stack.step(&x, 0.01).unwrap();
        assert_eq!(snapshots.len(), 2);
        for snap in &snapshots {
            assert!(snap.h.iter().all(|c| c.is_finite()));
            assert!(snap.e.iter().all(|c| c.is_finite()));
        }
        if stack.pending_control(0).norm() > 1e-9 {
            saw_control = true;
        }
    }
    assert_eq!(stack.steps(), 300);
    assert!(saw_control, "the stacked controller never produced a drive");

    // The identity bottom level is tuned by construction and must pass the
    // one-sweep feedforward check.
    let reports = stack.verify_feedforward(&[], 1e-9);
    assert!(reports[0].feedforward);

    // The analysis unit reconstructs the product it diagonalized and
    // inverts its own forward model on a smooth signal.
    let mut unit = stack.top_deconv().unwrap();
    let wq = &w_top * DMatrix::identity(2, 2);
    assert!((unit.reconstruct_wq() - &wq).norm() < 1e-9);

    let chi = DVector::from_vec(vec![0.4, -0.9]);
    let back = unit.unmix(&(unit.u() * &chi)).unwrap();
    assert!((back - &chi).norm() < 1e-9);

    let dt = 1e-3;
    let xi: Vec<DVector<f64>> = (0..2000)
        .map(|k| {
            let t = k as f64 * dt;
            DVector::from_vec(vec![
                (2.0 * t).sin() + 0.3 * (5.0 * t).cos(),
                0.8 * (3.0 * t).sin(),
            ])
        })
        .collect();
    let observed = unit.convolve(&xi, dt).unwrap();
    unit.clear_delays();
    let estimates = unit.deconvolve(&observed, dt).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for (est, truth) in estimates.iter().zip(&xi) {
        num += (est - truth).norm_squared();
        den += truth.norm_squared();
    }
    let rel = (num / den).sqrt();
    assert!(rel < 1e-4, "round trip relative error {rel}");
}
