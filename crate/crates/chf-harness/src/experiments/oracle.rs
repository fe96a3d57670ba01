//! Oracle comparisons: the relaxation integrator against its closed form,
//! the order-reduced oscillator against the analytic solution, and the
//! convolve/deconvolve round trip (which doubles as the determinism probe).

use std::f64::consts::{PI, TAU};
use std::path::Path;

use chf_core::deconv::DeconvUnit;
use chf_core::domain::AxisBox;
use chf_core::integrate::Integrator;
use chf_core::learning::synth;
use chf_core::plant::families;
use chf_core::recon::ReconNet;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, HarnessResult};
use crate::io;
use crate::rng;
use crate::spec::{ExperimentResult, ExperimentSpec};

/// A random loop whose `WQ` is symmetric positive definite: `W` random,
/// `Q = W^T`. Redrawn until comfortably conditioned.
fn random_pd_net(dim: usize, rng: &mut ChaCha8Rng) -> HarnessResult<ReconNet> {
    for _ in 0..64 {
        let w = DMatrix::from_fn(dim, dim, |_, _| synth::gaussian(rng));
        let q = w.transpose();
        let wq = &w * &q;
        let min_eig = wq.symmetric_eigen().eigenvalues.min();
        if min_eig > 1e-3 {
            return Ok(ReconNet::simple(w, q)?);
        }
    }
    Err(HarnessError::param(
        "instances",
        "could not draw a well-conditioned loop in 64 attempts",
    ))
}

/// Criterion 5 and criterion 12 in one experiment: the fixed-step
/// integrator against the matrix-exponential closed form on random loops,
/// and the reduced oscillator against `cos(t)`.
pub fn oracle_match(spec: &ExperimentSpec) -> HarnessResult<ExperimentResult> {
    let instances = spec.usize_param("instances", 20)?;
    let steps = spec.usize_param("steps", 400)?;
    let dt = spec.f64_param("dt", 0.01)?;

    let mut draw_rng = rng::stream(spec.seed, 1);
    let mut rows = Vec::new();
    let mut worst = 0.0_f64;
    for instance in 0..instances {
        let dim = 2 + instance % 3;
        let net = random_pd_net(dim, &mut draw_rng)?;
        let x = DVector::from_fn(dim, |_, _| draw_rng.gen_range(-1.0..1.0));
        let sim = net.relax_simple(&x, dt, steps)?;
        let x_held = x.clone();
        let oracle = net.convolution_oracle_trajectory(
            &move |_t| x_held.clone(),
            dt * steps as f64,
            steps,
        )?;
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in sim.trajectory.iter().zip(&oracle) {
            num += (a - b).norm_squared();
            den += b.norm_squared();
        }
        let rel = (num / den.max(1e-300)).sqrt();
        worst = worst.max(rel);
        rows.push(vec![instance as f64, dim as f64, rel]);
    }
    let relax_csv = spec.output_dir.join("relaxation_oracle.csv");
    io::write_csv(&relax_csv, &["instance", "dim", "rel_l2"], &rows)?;

    // Reduced oscillator, free response from (1, 0): first block is cos(t).
    let plant = families::harmonic_oscillator(1.0, AxisBox::centred(2, 3.0))?;
    let osc_dt = PI / 4000.0;
    let trajectory = plant.simulate(
        DVector::from_vec(vec![1.0, 0.0]),
        |_, _| DVector::zeros(1),
        PI,
        osc_dt,
        Integrator::Rk4,
    )?;
    let osc_rows: Vec<Vec<f64>> = trajectory
        .iter()
        .step_by(40)
        .map(|(t, z)| vec![*t, z[0], t.cos()])
        .collect();
    let (t_end, z_end) = trajectory.last().expect("simulation emits samples");
    let osc_err = (z_end[0] - t_end.cos()).abs();
    let osc_csv = spec.output_dir.join("oscillator_oracle.csv");
    io::write_csv(&osc_csv, &["t", "z1", "cos_t"], &osc_rows)?;

    let mut result = ExperimentResult::new(spec);
    result.series_files.push(relax_csv);
    result.series_files.push(osc_csv);
    result.stat("worst_rel_l2", worst);
    result.stat("oscillator_error_at_pi", osc_err);
    result.verdict(
        "relaxation-oracle",
        worst < 1e-3,
        format!("worst relative L2 over {instances} instances: {worst:.2e} (need < 1e-3)"),
    );
    result.verdict(
        "order-reduction-oracle",
        osc_err < 1e-4,
        format!("|z1(pi) - cos(pi)| = {osc_err:.2e} (need < 1e-4)"),
    );
    Ok(result)
}

/// Band-limited test sources: a few random sinusoids per component.
fn band_limited(
    rng: &mut ChaCha8Rng,
    dim: usize,
    samples: usize,
    dt: f64,
    max_freq: f64,
) -> Vec<DVector<f64>> {
    let mut tones = Vec::new();
    for _ in 0..dim {
        let component: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.gen_range(0.3..1.0),
                    rng.gen_range(0.5..max_freq),
                    rng.gen_range(0.0..TAU),
                )
            })
            .collect();
        tones.push(component);
    }
    (0..samples)
        .map(|k| {
            let t = k as f64 * dt;
            DVector::from_fn(dim, |i, _| {
                tones[i]
                    .iter()
                    .map(|(a, w, p)| a * (w * t + p).sin())
                    .sum()
            })
        })
        .collect()
}

fn roundtrip_once(seed: u64, dir: &Path, dt: f64, t_final: f64, max_freq: f64) -> HarnessResult<(f64, Vec<u8>)> {
    io::ensure_dir(dir)?;
    let mut draw_rng = rng::stream(seed, 2);
    let dim = 3;
    let w = DMatrix::from_fn(dim, dim, |_, _| synth::gaussian(&mut draw_rng));
    let q = w.transpose();
    let mut unit = DeconvUnit::diagonalize(&w, &q)?;

    let samples = (t_final / dt).round() as usize;
    let xi = band_limited(&mut draw_rng, dim, samples, dt, max_freq);
    let chi = unit.convolve(&xi, dt)?;
    let estimates = unit.deconvolve(&chi, dt)?;

    let mut num = 0.0;
    let mut den = 0.0;
    let mut rows = Vec::new();
    for (k, est) in estimates.iter().enumerate() {
        num += (est - &xi[k]).norm_squared();
        den += xi[k].norm_squared();
        if k % 20 == 0 {
            rows.push(vec![k as f64 * dt, xi[k][0], est[0]]);
        }
    }
    let rel = (num / den.max(1e-300)).sqrt();
    let csv = dir.join("roundtrip.csv");
    io::write_csv(&csv, &["t", "source_0", "estimate_0"], &rows)?;
    let bytes = std::fs::read(&csv).map_err(|e| HarnessError::io(&csv, e))?;
    Ok((rel, bytes))
}

/// Criterion 6 (round-trip accuracy) and criterion 13 (determinism): the
/// whole round trip runs twice with the same seed and the artifacts must
/// agree byte for byte.
pub fn deconv_roundtrip(spec: &ExperimentSpec) -> HarnessResult<ExperimentResult> {
    let dt = spec.f64_param("dt", 1e-3)?;
    let t_final = spec.f64_param("t_final", 2.0)?;
    let max_freq = spec.f64_param("max_freq", 5.0)?;

    let (rel_a, bytes_a) = roundtrip_once(
        spec.seed,
        &spec.output_dir.join("pass_a"),
        dt,
        t_final,
        max_freq,
    )?;
    let (rel_b, bytes_b) = roundtrip_once(
        spec.seed,
        &spec.output_dir.join("pass_b"),
        dt,
        t_final,
        max_freq,
    )?;

    let mut result = ExperimentResult::new(spec);
    result
        .series_files
        .push(spec.output_dir.join("pass_a").join("roundtrip.csv"));
    result
        .series_files
        .push(spec.output_dir.join("pass_b").join("roundtrip.csv"));
    result.stat("rel_l2", rel_a);
    result.verdict(
        "deconv-roundtrip",
        rel_a < 1e-3,
        format!("round-trip relative L2 {rel_a:.2e} (need < 1e-3)"),
    );
    let identical = rel_a.to_bits() == rel_b.to_bits() && bytes_a == bytes_b;
    result.verdict(
        "determinism",
        identical,
        if identical {
            "two passes with the same seed produced bit-identical statistics and artifacts".to_string()
        } else {
            format!("passes disagree: rel_l2 {rel_a:.17e} vs {rel_b:.17e}")
        },
    );
    Ok(result)
}
