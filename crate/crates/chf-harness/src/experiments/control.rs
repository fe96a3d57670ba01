//! Closed-loop control experiments: gain scaling, stability dichotomy,
//! decay-witness monotonicity, model swaps, and noise placement.

use chf_core::control::{
    track_schedule, track_speed_field, AffineIdModel, NoiseInjection, NoisePlacement,
    ScheduleEntry, SdsController, TrackOptions,
};
use chf_core::domain::AxisBox;
use chf_core::error::CoreError;
use chf_core::learning::synth;
use chf_core::plant::{families, Plant, SpeedField};
use nalgebra::DVector;
use std::sync::Arc;

use crate::error::HarnessResult;
use crate::io;
use crate::rng;
use crate::spec::{ExperimentResult, ExperimentSpec};

fn benchmark_plant() -> HarnessResult<Plant> {
    Ok(families::unit(2, AxisBox::centred(2, 5.0))?)
}

/// A controller whose both models are the plant's inverse dynamics scaled
/// by `factor`; any positive factor is sign-proper.
fn scaled_controller(plant: &Plant, factor: f64, gain: f64) -> HarnessResult<SdsController> {
    let model = AffineIdModel::scaled(plant, factor);
    Ok(SdsController::new(model.clone(), model, gain)?)
}

/// The persistent task all gain studies share: follow a circular orbit.
/// The integrator then chases a moving target forever and its lag sets a
/// nonzero asymptotic error, which is what the gain laws are about. The
/// rotation is slow enough that even the weakest gain in the sweep stays in
/// the linear lag regime (error well below the orbit radius); at higher
/// speeds the weak-gain errors saturate near the radius and flatten the
/// fitted slope.
fn orbit_field() -> SpeedField {
    SpeedField::planar_orbit(0.3, 1.0, 1.0)
}

fn orbit_start() -> DVector<f64> {
    DVector::from_vec(vec![1.0, 0.0])
}

/// Asymptotic tracking error against gain on the orbit task, with a fitted
/// log-log slope. The inverse-gain law predicts a slope near -1.
pub fn gain_sweep(spec: &ExperimentSpec) -> HarnessResult<ExperimentResult> {
    let t_final = spec.f64_param("t_final", 30.0)?;
    let dt = spec.f64_param("dt", 1e-3)?;
    let gains = [1.0, 2.0, 4.0, 8.0, 16.0];

    let plant = benchmark_plant()?;
    let field = orbit_field();
    let opts = TrackOptions::new(t_final, dt);

    let mut rows = Vec::new();
    let mut logs = Vec::new();
    for &gain in &gains {
        let controller = scaled_controller(&plant, 0.5, gain)?;
        let record = track_speed_field(&plant, &controller, &field, orbit_start(), &opts)?;
        let bound = record.asymptotic_error();
        rows.push(vec![gain, bound]);
        logs.push((gain.ln(), bound.ln()));
    }

    // Least-squares slope of ln(error) against ln(gain).
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = logs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    let slope = sxy / sxx;

    let csv = spec.output_dir.join("gain_sweep.csv");
    io::write_csv(&csv, &["gain", "asymptotic_error"], &rows)?;

    let mut result = ExperimentResult::new(spec);
    result.series_files.push(csv);
    result.stat("slope", slope);
    for row in &rows {
        result.stat(format!("error_gain_{}", row[0]), row[1]);
    }
    let passed = (-1.3..=-0.7).contains(&slope);
    result.verdict(
        "gain-scaling-law",
        passed,
        format!("log-log slope {slope:.4}, required within [-1.3, -0.7]"),
    );
    Ok(result)
}

/// Three probes of the tracking theorem: the boundedness/divergence
/// dichotomy, monotonicity of the decay witness above the error bound, and
/// robustness to a mid-run model swap.
pub fn lyapunov_probe(spec: &ExperimentSpec) -> HarnessResult<ExperimentResult> {
    let dt = spec.f64_param("dt", 1e-3)?;
    let mut result = ExperimentResult::new(spec);

    // Dichotomy: every sign-proper configuration runs the full horizon
    // inside the domain; the sign-improper one must raise a divergence.
    let unit = benchmark_plant()?;
    let arm = families::mass_varying_arm(2.0, 0.4, 0.3, 0.5, AxisBox::centred(2, 5.0))?;
    let decay = SpeedField::linear_decay(1.0);
    let start = DVector::from_vec(vec![2.0, -1.0]);
    let proper: [(&str, &Plant, f64, f64); 4] = [
        ("unit-exact", &unit, 1.0, 1.0),
        ("unit-weak-model", &unit, 0.5, 4.0),
        ("unit-strong-model", &unit, 2.0, 16.0),
        ("arm-exact", &arm, 1.0, 4.0),
    ];
    let opts_long = TrackOptions::new(50.0, dt);
    let mut dichotomy_rows = Vec::new();
    let mut all_bounded = true;
    for (label, plant, factor, gain) in proper {
        let controller = scaled_controller(plant, factor, gain)?;
        let (bounded, max_norm) =
            match track_speed_field(plant, &controller, &decay, start.clone(), &opts_long) {
                Ok(record) => (
                    true,
                    record.x.iter().map(|x| x.norm()).fold(0.0_f64, f64::max),
                ),
                Err(_) => (false, f64::NAN),
            };
        all_bounded &= bounded;
        dichotomy_rows.push((
            label.to_string(),
            vec![gain, factor, max_norm, if bounded { 1.0 } else { 0.0 }],
        ));
    }
    let improper = scaled_controller(&unit, -0.5, 4.0)?;
    let opts_short = TrackOptions::new(10.0, dt);
    let improper_outcome =
        track_speed_field(&unit, &improper, &decay, start.clone(), &opts_short);
    let improper_diverged = matches!(
        improper_outcome,
        Err(CoreError::IntegrationDiverged { .. })
            | Err(CoreError::DomainExit { .. })
            | Err(CoreError::ControllerDiverged { .. })
    );
    dichotomy_rows.push((
        "unit-sign-improper".to_string(),
        vec![4.0, -0.5, f64::NAN, 0.0],
    ));
    let dichotomy_csv = spec.output_dir.join("dichotomy.csv");
    io::write_labeled_csv(
        &dichotomy_csv,
        &["config", "gain", "model_factor", "max_state_norm", "bounded"],
        &dichotomy_rows,
    )?;
    result.series_files.push(dichotomy_csv);
    result.verdict(
        "bounded-dichotomy",
        all_bounded && improper_diverged,
        format!(
            "sign-proper bounded over 50 s: {all_bounded}; sign-improper diverged within 10 s: \
             {improper_diverged}"
        ),
    );

    // Decay witness: high gain, overdamped regime. Count the fraction of
    // steps above the measured bound at which L did not increase.
    let witness_ctrl = scaled_controller(&unit, 0.5, 90.0)?;
    let witness_opts = TrackOptions::new(25.0, dt);
    let record = track_speed_field(&unit, &witness_ctrl, &decay, start.clone(), &witness_opts)?;
    let bound = record.asymptotic_error();
    let fraction = record.lyapunov_monotone_fraction(bound);
    let witness_csv = spec.output_dir.join("decay_witness.csv");
    let witness_rows: Vec<Vec<f64>> = record
        .t
        .iter()
        .zip(&record.e_norm)
        .zip(&record.lyapunov)
        .map(|((&t, &e), &l)| vec![t, e, l])
        .collect();
    io::write_csv(&witness_csv, &["t", "e_norm", "lyapunov"], &witness_rows)?;
    result.series_files.push(witness_csv);
    result.stat("monotone_fraction", fraction);
    result.stat("asymptotic_bound", bound);
    result.verdict(
        "lyapunov-monotone",
        fraction >= 0.99,
        format!("witness non-increasing at {:.2}% of above-bound samples", fraction * 100.0),
    );

    // Model swap: the orbit task under a schedule that changes the model
    // mid-run must stay within 5x the single-model bound.
    let field = orbit_field();
    let swap_opts = TrackOptions::new(30.0, dt);
    let single = scaled_controller(&unit, 0.5, 4.0)?;
    let single_record =
        track_speed_field(&unit, &single, &field, orbit_start(), &swap_opts)?;
    let single_bound = single_record.asymptotic_error();
    let schedule = [
        ScheduleEntry {
            from_t: 0.0,
            phi: AffineIdModel::scaled(&unit, 0.5),
            psi: AffineIdModel::scaled(&unit, 0.5),
            gain: 4.0,
        },
        ScheduleEntry {
            from_t: 15.0,
            phi: AffineIdModel::scaled(&unit, 1.5),
            psi: AffineIdModel::scaled(&unit, 1.5),
            gain: 4.0,
        },
    ];
    let swapped = track_schedule(
        &unit,
        &schedule,
        &field,
        orbit_start(),
        DVector::zeros(2),
        &swap_opts,
    )?;
    let swap_bound = swapped.asymptotic_error();
    let swap_csv = spec.output_dir.join("model_swap.csv");
    let swap_rows: Vec<Vec<f64>> = single_record
        .t
        .iter()
        .zip(&single_record.e_norm)
        .zip(&swapped.e_norm)
        .map(|((&t, &a), &b)| vec![t, a, b])
        .collect();
    io::write_csv(&swap_csv, &["t", "e_single", "e_swapped"], &swap_rows)?;
    result.series_files.push(swap_csv);
    result.stat("single_model_bound", single_bound);
    result.stat("swap_bound", swap_bound);
    result.verdict(
        "model-swap-robustness",
        swap_bound <= 5.0 * single_bound,
        format!("swap bound {swap_bound:.5} vs 5x single-model bound {:.5}", 5.0 * single_bound),
    );
    Ok(result)
}

/// Noise with matched power, injected before vs after the feedback
/// integrator, across gains. Pre-integrator noise is gain-amplified and
/// accumulated; post-integrator noise is neither.
pub fn noise_before_integrator(spec: &ExperimentSpec) -> HarnessResult<ExperimentResult> {
    // The horizon is short on purpose. Noise entering before the integrator
    // accumulates as gain * integral(n), which is the linear-in-gain law the
    // probe is after, but the loop's own corner frequency also scales with
    // the gain and re-absorbs the accumulated kick once the run is long
    // against the loop time constant (the growth then falls back to the
    // stationary sqrt-gain law). A tenth of a second keeps all three gains
    // well inside the accumulation regime.
    let t_final = spec.f64_param("t_final", 0.1)?;
    let dt = spec.f64_param("dt", 1e-3)?;
    let sigma = spec.f64_param("sigma", 0.05)?;
    let gains = [1.0, 2.0, 4.0];

    let plant = benchmark_plant()?;
    let field = SpeedField::linear_decay(1.0);
    let start = DVector::from_vec(vec![2.0, -1.0]);
    let steps = (t_final / dt).round() as usize;

    // One noise sequence for every run: identical samples, different entry
    // point, so the comparison isolates the placement.
    let mut noise_rng = rng::stream(spec.seed, 7);
    let samples = Arc::new(
        (0..steps)
            .map(|_| DVector::from_fn(2, |_, _| synth::gaussian(&mut noise_rng) * sigma))
            .collect::<Vec<_>>(),
    );

    let run = |gain: f64, noise: Option<NoiseInjection>| -> HarnessResult<Vec<DVector<f64>>> {
        let controller = scaled_controller(&plant, 1.0, gain)?;
        let mut opts = TrackOptions::new(t_final, dt);
        opts.noise = noise;
        let record = track_speed_field(&plant, &controller, &field, start.clone(), &opts)?;
        Ok(record.x)
    };

    let mut rows = Vec::new();
    let mut before = Vec::new();
    let mut after = Vec::new();
    for &gain in &gains {
        let clean = run(gain, None)?;
        for placement in [NoisePlacement::BeforeIntegrator, NoisePlacement::AfterIntegrator] {
            let noisy = run(
                gain,
                Some(NoiseInjection {
                    placement,
                    samples: Arc::clone(&samples),
                }),
            )?;
            // Final-state perturbation: how far the noise moved the plant
            // state by the end of the run, against the paired clean run.
            let perturbation =
                (clean.last().unwrap() - noisy.last().unwrap()).norm();
            match placement {
                NoisePlacement::BeforeIntegrator => before.push(perturbation),
                NoisePlacement::AfterIntegrator => after.push(perturbation),
            }
            let tag = match placement {
                NoisePlacement::BeforeIntegrator => 0.0,
                NoisePlacement::AfterIntegrator => 1.0,
            };
            rows.push(vec![gain, tag, perturbation]);
        }
    }

    let csv = spec.output_dir.join("noise_placement.csv");
    io::write_csv(&csv, &["gain", "after_integrator", "final_perturbation"], &rows)?;

    let mut result = ExperimentResult::new(spec);
    result.series_files.push(csv);
    for (i, &gain) in gains.iter().enumerate() {
        result.stat(format!("before_gain_{gain}"), before[i]);
        result.stat(format!("after_gain_{gain}"), after[i]);
    }
    // At least linear growth: each gain doubling must come close to doubling
    // the pre-integrator perturbation. The 1.85 bar allows the slight
    // feedback re-absorption present at any finite horizon while still
    // rejecting the stationary sqrt-gain law, whose doubling ratio is 1.41.
    // No trend after the integrator: max/min < 1.5 across the sweep.
    let min_ratio = before
        .windows(2)
        .map(|w| w[1] / w[0])
        .fold(f64::INFINITY, f64::min);
    let after_spread = after.iter().cloned().fold(0.0_f64, f64::max)
        / after.iter().cloned().fold(f64::INFINITY, f64::min);
    result.stat("before_min_doubling_ratio", min_ratio);
    result.stat("after_spread", after_spread);
    result.verdict(
        "noise-placement",
        min_ratio >= 1.85 && after_spread < 1.5,
        format!(
            "pre-integrator doubling ratio >= {min_ratio:.3} (need >= 1.85); post-integrator \
             spread {after_spread:.3} (need < 1.5)"
        ),
    );
    Ok(result)
}
