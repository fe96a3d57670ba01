//! Building blocks for speed-field tracking control coupled to generative
//! reconstruction networks.
//!
//! The crate is organised around a closed sensorimotor loop studied at desk
//! scale:
//!
//! * [`plant`]: controllable dynamical systems `x' = f(x, u)` with affine
//!   inverse dynamics `u = B(x) x' + b(x)`, speed fields, and order reduction
//!   for higher-order systems.
//! * [`control`]: the static-dynamic-state (SDS) controller, a feedforward
//!   term built from an affine model plus a gain-scaled integral feedback
//!   term, with positive-definiteness checks that delimit its guarantees.
//! * [`recon`]: reconstruction networks `h' = W (x - Q h)` and their gated,
//!   recurrent extension with sparse-code shrinkage.
//! * [`learning`]: adaptation rules for the network matrices. ICA for the
//!   bottom-up and gating transforms, delta-rule Hebbian updates for the
//!   generative and recurrent matrices, plus a two-step whitening/separation
//!   pipeline.
//! * [`deconv`]: diagonalised coordinates in which relaxation becomes a bank
//!   of scalar low-pass filters, and the delay-line deconvolution that
//!   recovers the driving signal.
//! * [`hierarchy`]: stacked reconstruction networks coupled by controllers
//!   that make lower layers track the flow expected by upper layers.
//!
//! All simulation is deterministic: fixed-step integrators, no interior
//! threading, and any randomness is supplied explicitly by the caller.

pub mod control;
pub mod deconv;
pub mod domain;
pub mod error;
pub mod hierarchy;
pub mod integrate;
pub mod learning;
pub mod plant;
pub mod recon;

pub use error::{CoreError, CoreResult};

/// Tolerance used when checking positive definiteness and related
/// "strictly greater than zero" conditions on eigenvalues.
pub const EIG_EPSILON: f64 = 1e-6;

/// State norm above which a simulation is declared divergent.
pub const BLOW_UP_NORM: f64 = 1e6;
