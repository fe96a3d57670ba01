//! The registry of pass/fail criteria experiments may report against.
//!
//! The first thirteen are the acceptance gate; each is owned by exactly
//! one experiment. The rest are supporting checks: mechanisms worth
//! guarding that the gate does not enumerate.

/// A registered criterion.
#[derive(Debug, Clone, Copy)]
pub struct Criterion {
    pub id: &'static str,
    /// Position in the acceptance gate, 0 for supporting checks.
    pub number: usize,
    pub experiment: &'static str,
    pub description: &'static str,
}

pub const CRITERIA: &[Criterion] = &[
    Criterion {
        id: "gain-scaling-law",
        number: 1,
        experiment: "gain-sweep",
        description: "log-log slope of asymptotic tracking error vs gain in [-1.3, -0.7]",
    },
    Criterion {
        id: "bounded-dichotomy",
        number: 2,
        experiment: "lyapunov-probe",
        description: "sign-proper runs stay bounded for 50 s; the sign-improper run diverges within 10 s",
    },
    Criterion {
        id: "lyapunov-monotone",
        number: 3,
        experiment: "lyapunov-probe",
        description: "decay witness non-increasing at >= 99% of samples above the asymptotic bound",
    },
    Criterion {
        id: "model-swap-robustness",
        number: 4,
        experiment: "lyapunov-probe",
        description: "mid-run model swap stays within 5x the single-model asymptotic bound",
    },
    Criterion {
        id: "relaxation-oracle",
        number: 5,
        experiment: "oracle-match",
        description: "integrator matches the closed-form relaxation within 1e-3 relative L2 on 20 random instances",
    },
    Criterion {
        id: "deconv-roundtrip",
        number: 6,
        experiment: "deconv-roundtrip",
        description: "convolve then deconvolve recovers band-limited sources within 1e-3 relative L2",
    },
    Criterion {
        id: "ica-amari",
        number: 7,
        experiment: "ica-bench",
        description: "Amari index below 0.1 on planted 2- and 3-source mixtures within 5e4 updates",
    },
    Criterion {
        id: "tuning-convergence",
        number: 8,
        experiment: "tuning-run",
        description: "learning drives the loop product within 0.05 of the identity and the gate projection within 10% of the encoder",
    },
    Criterion {
        id: "priming-speedup",
        number: 9,
        experiment: "priming",
        description: "relaxation time strictly drops on the second presentation and never rises across five",
    },
    Criterion {
        id: "repetition-joint",
        number: 10,
        experiment: "repetition-suppression",
        description: "population activity falls across presentations while at least one unit's activity grows",
    },
    Criterion {
        id: "noise-placement",
        number: 11,
        experiment: "noise-before-integrator",
        description: "pre-integrator noise amplifies at least linearly with gain; post-integrator noise shows no gain trend",
    },
    Criterion {
        id: "order-reduction-oracle",
        number: 12,
        experiment: "oracle-match",
        description: "reduced harmonic oscillator matches cos(t) within 1e-4 at t = pi",
    },
    Criterion {
        id: "determinism",
        number: 13,
        experiment: "deconv-roundtrip",
        description: "identical spec and seed produce byte-identical summaries",
    },
    Criterion {
        id: "rate-ordering-guard",
        number: 0,
        experiment: "learning-order",
        description: "configs that let slow matrices outpace fast ones are rejected",
    },
    Criterion {
        id: "novelty-gating",
        number: 0,
        experiment: "learning-order",
        description: "unstructured input accumulates an order of magnitude less dictionary drive than structured input",
    },
    Criterion {
        id: "enhancement-breakthrough",
        number: 0,
        experiment: "repetition-enhancement",
        description: "a sub-threshold unit crosses the gate while the population settles",
    },
    Criterion {
        id: "hierarchy-efficacy",
        number: 0,
        experiment: "hierarchy-control",
        description: "upper-level control strictly reduces time-averaged lower-level error on the perturbed stack",
    },
    Criterion {
        id: "hierarchy-feedforward",
        number: 0,
        experiment: "hierarchy-control",
        description: "a tuned stack is one-sweep equivalent to full relaxation at every level",
    },
];

pub fn lookup(id: &str) -> Option<&'static Criterion> {
    CRITERIA.iter().find(|c| c.id == id)
}

/// The acceptance subset, in gate order.
pub fn acceptance() -> Vec<&'static Criterion> {
    let mut list: Vec<&'static Criterion> = CRITERIA.iter().filter(|c| c.number > 0).collect();
    list.sort_by_key(|c| c.number);
    list
}
