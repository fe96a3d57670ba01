//! The experiment registry.
//!
//! Every experiment is a pure function of its spec: same name, seed, and
//! parameters produce byte-identical artifacts. Each writes CSV series and
//! a `summary.json` into the spec's output directory and reports verdicts
//! against registered criteria.

mod control;
mod hierarchy;
mod learninglab;
mod oracle;
mod repetition;

use crate::error::{HarnessError, HarnessResult};
use crate::io;
use crate::spec::{ExperimentResult, ExperimentSpec};

type ExperimentFn = fn(&ExperimentSpec) -> HarnessResult<ExperimentResult>;

struct Entry {
    name: &'static str,
    run: ExperimentFn,
    params: &'static [&'static str],
    about: &'static str,
}

const REGISTRY: &[Entry] = &[
    Entry {
        name: "gain-sweep",
        run: control::gain_sweep,
        params: &["t_final", "dt"],
        about: "asymptotic tracking error vs controller gain on the orbit task",
    },
    Entry {
        name: "lyapunov-probe",
        run: control::lyapunov_probe,
        params: &["dt"],
        about: "boundedness dichotomy, decay-witness monotonicity, and model-swap robustness",
    },
    Entry {
        name: "noise-before-integrator",
        run: control::noise_before_integrator,
        params: &["t_final", "dt", "sigma"],
        about: "matched noise injected before vs after the feedback integrator across gains",
    },
    Entry {
        name: "oracle-match",
        run: oracle::oracle_match,
        params: &["instances", "steps", "dt"],
        about: "integrator vs closed-form relaxation, and the order-reduction oracle",
    },
    Entry {
        name: "deconv-roundtrip",
        run: oracle::deconv_roundtrip,
        params: &["dt", "t_final", "max_freq"],
        about: "convolve then deconvolve band-limited sources; doubles as the determinism check",
    },
    Entry {
        name: "ica-bench",
        run: learninglab::ica_bench,
        params: &["eta", "chunk"],
        about: "two-step separation of planted 2- and 3-source uniform mixtures",
    },
    Entry {
        name: "tuning-run",
        run: learninglab::tuning_run,
        params: &["epochs", "samples_per_epoch"],
        about: "end-to-end epoch training toward the self-tuned loop on a planted dictionary",
    },
    Entry {
        name: "learning-order",
        run: learninglab::learning_order,
        params: &["samples"],
        about: "rate-ordering guard and gating of unstructured input",
    },
    Entry {
        name: "priming",
        run: repetition::priming,
        params: &["presentations", "eta_q", "tol"],
        about: "relaxation time across repeated presentations with learning during relaxation",
    },
    Entry {
        name: "repetition-suppression",
        run: repetition::repetition_suppression,
        params: &["presentations", "steps", "eta_q"],
        about: "population activity falls across presentations while one unit breaks through the gate",
    },
    Entry {
        name: "repetition-enhancement",
        run: repetition::repetition_enhancement,
        params: &["presentations", "steps", "eta_q"],
        about: "focused view of the sub-threshold unit crossing the gate under repetition",
    },
    Entry {
        name: "hierarchy-control",
        run: hierarchy::hierarchy_control,
        params: &["steps", "dt", "gain", "kappa_top", "shrink"],
        about: "paired control-on/off runs of a three-level stack with a perturbed middle dictionary",
    },
];

/// Names of all registered experiments, in registry order.
pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|e| e.name).collect()
}

/// One-line description of an experiment.
pub fn about(name: &str) -> Option<&'static str> {
    REGISTRY.iter().find(|e| e.name == name).map(|e| e.about)
}

/// Parameters an experiment accepts.
pub fn allowed_params(name: &str) -> Option<&'static [&'static str]> {
    REGISTRY.iter().find(|e| e.name == name).map(|e| e.params)
}

/// Validate a spec without running it: registered name, known parameters.
pub fn validate(spec: &ExperimentSpec) -> HarnessResult<()> {
    let entry = REGISTRY
        .iter()
        .find(|e| e.name == spec.name)
        .ok_or_else(|| HarnessError::UnknownExperiment(spec.name.clone()))?;
    spec.check_allowed(entry.params)
}

/// Run an experiment: dispatch, write the summary, return the result with
/// verdicts and artifact paths filled in.
pub fn run(spec: &ExperimentSpec) -> HarnessResult<ExperimentResult> {
    let entry = REGISTRY
        .iter()
        .find(|e| e.name == spec.name)
        .ok_or_else(|| HarnessError::UnknownExperiment(spec.name.clone()))?;
    spec.check_allowed(entry.params)?;
    io::ensure_dir(&spec.output_dir)?;
    let result = (entry.run)(spec)?;
    debug_assert!(
        result
            .verdicts
            .iter()
            .all(|v| crate::criteria::lookup(&v.criterion).is_some()),
        "experiment reported an unregistered criterion"
    );
    io::write_summary(&spec.output_dir, &result)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria;

    #[test]
    fn every_acceptance_criterion_is_owned_by_one_registered_experiment() {
        for criterion in criteria::acceptance() {
            assert!(
                names().contains(&criterion.experiment),
                "criterion {} points at unknown experiment {}",
                criterion.id,
                criterion.experiment
            );
        }
        for c in criteria::CRITERIA {
            let owners: Vec<_> = criteria::CRITERIA
                .iter()
                .filter(|d| d.id == c.id)
                .map(|d| d.experiment)
                .collect();
            assert_eq!(owners.len(), 1);
        }
    }

    #[test]
    fn unknown_name_is_rejected() {
        let spec = crate::spec::ExperimentSpec::new("nonexistent", 1, "/tmp/never-used");
        match run(&spec) {
            Err(HarnessError::UnknownExperiment(name)) => assert_eq!(name, "nonexistent"),
            other => panic!("expected an unknown-experiment error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_parameter_is_rejected_before_running() {
        let spec = crate::spec::ExperimentSpec::new("gain-sweep", 1, "/tmp/never-used")
            .with_param("tfinal", serde_json::json!(10.0));
        match run(&spec) {
            Err(HarnessError::InvalidParam { name, .. }) => assert_eq!(name, "tfinal"),
            other => panic!("expected a parameter error, got {other:?}"),
        }
    }
}
