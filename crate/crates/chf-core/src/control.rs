//! Speed-field tracking with a static and dynamic state (SDS) controller.
//!
//! The task is to make a plant's momentum follow a desired speed field:
//! `x' = v(x)`, with no time parametrisation. The controller combines
//!
//! * a feedforward term built from an affine model `Psi(x, x') = A(x) x' + a(x)`
//!   of the inverse dynamics, applied as a difference
//!   `u_ff = Psi(x, v) - Psi(x, x')` so the offset `a` cancels exactly, and
//! * an integral feedback term `w' = gain * (Phi(x, v) - Phi(x, x'))` built
//!   from a second affine model `Phi`, where `gain` scales the integrand
//!   before integration.
//!
//! The control sent to the plant is `u = u_ff + w`.
//!
//! The guarantees are conditional. Writing `A` for the plant's true inverse
//! dynamics matrix (the same matrix that appears in the forward dynamics),
//! `Ahat` for the feedforward model matrix and `Bhat` for the feedback model
//! matrix: if all products `X^T Y` with `X, Y` drawn from `{A, Ahat, Bhat}`
//! are uniformly positive definite over the operating domain, and the fields
//! are bounded with bounded derivatives, then the tracking error
//! `e = v(x) - x'` becomes uniformly bounded, the bound shrinks like
//! `1/gain`, and the time to reach it shrinks proportionally as the gain
//! grows. Models need only be sign-proper in this sense, not accurate.
//! A sign-improper model (for example `Ahat = -A`) produces exponential
//! divergence instead.
//!
//! Monotone progress toward the bound can be audited through the scalar
//! `L = 0.5 * |(A + Ahat) e|^2`, which decreases along trajectories whenever
//! the error is above its asymptotic bound.
//!
//! The models may vary over time (see [`time_varying_track`]): the guarantee
//! survives swaps as long as every scheduled model keeps the
//! positive-definiteness conditions and stays bounded.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::domain::AxisBox;
use crate::error::{CoreError, CoreResult};
use crate::integrate::Integrator;
use crate::plant::{Plant, SpeedField};
use crate::BLOW_UP_NORM;

type MatrixField = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type VectorField = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// An affine model of inverse dynamics: `x, xdot -> M(x) xdot + m(x)`.
#[derive(Clone)]
pub struct AffineIdModel {
    matrix: Arc<MatrixField>,
    offset: Arc<VectorField>,
    rows: usize,
    cols: usize,
}

impl std::fmt::Debug for AffineIdModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineIdModel")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish_non_exhaustive()
    }
}

impl AffineIdModel {
    pub fn new(rows: usize, cols: usize, matrix: Arc<MatrixField>, offset: Arc<VectorField>) -> Self {
        Self {
            matrix,
            offset,
            rows,
            cols,
        }
    }

    /// A state-independent model.
    pub fn constant(matrix: DMatrix<f64>, offset: DVector<f64>) -> Self {
        let rows = matrix.nrows();
        let cols = matrix.ncols();
        Self::new(
            rows,
            cols,
            Arc::new(move |_| matrix.clone()),
            Arc::new(move |_| offset.clone()),
        )
    }

    /// The plant's own inverse dynamics, as a (perfect) model.
    pub fn exact(plant: &Plant) -> Self {
        let p1 = plant.clone();
        let p2 = plant.clone();
        Self::new(
            plant.control_dim(),
            plant.state_dim(),
            Arc::new(move |x| p1.b_matrix(x)),
            Arc::new(move |x| p2.b_offset(x)),
        )
    }

    /// The plant's inverse dynamics with the matrix scaled by `factor`.
    ///
    /// Any positive factor keeps the model sign-proper; a negative factor
    /// makes it sign-improper.
    pub fn scaled(plant: &Plant, factor: f64) -> Self {
        let p1 = plant.clone();
        let p2 = plant.clone();
        Self::new(
            plant.control_dim(),
            plant.state_dim(),
            Arc::new(move |x| p1.b_matrix(x) * factor),
            Arc::new(move |x| p2.b_offset(x)),
        )
    }

    /// The zero model: degenerates the term it feeds to nothing.
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self::new(
            rows,
            cols,
            Arc::new(move |_| DMatrix::zeros(rows, cols)),
            Arc::new(move |_| DVector::zeros(rows)),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn matrix_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.matrix)(x)
    }

    pub fn offset_at(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.offset)(x)
    }

    /// `M(x) xdot + m(x)`.
    pub fn eval(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> DVector<f64> {
        self.matrix_at(x) * xdot + self.offset_at(x)
    }

    /// `eval(x, r) - eval(x, s)`, computed as `M(x) (r - s)` so the offset
    /// cancellation is structural rather than numerical.
    pub fn diff(&self, x: &DVector<f64>, r: &DVector<f64>, s: &DVector<f64>) -> DVector<f64> {
        self.matrix_at(x) * (r - s)
    }
}

/// A momentum/state pair. Desired and experienced quantities are both of
/// this shape; comparisons subtract the momenta evaluated at the shared
/// state and leave the state slot untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub momentum: DVector<f64>,
    pub state: DVector<f64>,
}

/// The subtraction rule behind the controller's comparator: the difference
/// between the desired pair `(v(x), x)` and the experienced pair `(x', x)`
/// is the pair `(v(x) - x', x)`. Requires both pairs to share the state.
pub fn subtract_pairs(desired: &StatePair, experienced: &StatePair) -> CoreResult<StatePair> {
    if desired.state != experienced.state {
        return Err(CoreError::InvalidConfig(
            "desired and experienced pairs must be evaluated at the same state".into(),
        ));
    }
    if desired.momentum.len() != experienced.momentum.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "momenta have lengths {} and {}",
            desired.momentum.len(),
            experienced.momentum.len()
        )));
    }
    Ok(StatePair {
        momentum: &desired.momentum - &experienced.momentum,
        state: desired.state.clone(),
    })
}

/// The SDS controller: feedforward model, feedback-integrand model, gain,
/// and the integrator state `w`.
#[derive(Debug, Clone)]
pub struct SdsController {
    phi: AffineIdModel,
    psi: AffineIdModel,
    gain: f64,
    w: DVector<f64>,
}

impl SdsController {
    pub fn new(phi: AffineIdModel, psi: AffineIdModel, gain: f64) -> CoreResult<Self> {
        if gain <= 0.0 {
            return Err(CoreError::InvalidConfig(format!(
                "gain must be positive, got {gain}"
            )));
        }
        if phi.rows() != psi.rows() || phi.cols() != psi.cols() {
            return Err(CoreError::ShapeMismatch(format!(
                "feedback model is {}x{} but feedforward model is {}x{}",
                phi.rows(),
                phi.cols(),
                psi.rows(),
                psi.cols()
            )));
        }
        let dim = phi.rows();
        Ok(Self {
            phi,
            psi,
            gain,
            w: DVector::zeros(dim),
        })
    }

    /// A controller with no feedforward path: pure integral feedback.
    pub fn feedback_only(phi: AffineIdModel, gain: f64) -> CoreResult<Self> {
        let zero = AffineIdModel::zero(phi.rows(), phi.cols());
        Self::new(phi, zero, gain)
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn reset(&mut self) {
        self.w.fill(0.0);
    }

    pub fn phi(&self) -> &AffineIdModel {
        &self.phi
    }

    pub fn psi(&self) -> &AffineIdModel {
        &self.psi
    }

    /// The feedforward term `Psi(x, v) - Psi(x, xdot)`; the model offset
    /// cancels exactly in the difference.
    pub fn feedforward(
        &self,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        self.psi.diff(x, v, xdot)
    }

    /// One explicit Euler step of the feedback integrator:
    /// `w <- w + dt * gain * (Phi(x, v) - Phi(x, xdot))`.
    ///
    /// The integrator is part of the control law itself, so its update rule
    /// is fixed here rather than delegated to a configurable scheme.
    pub fn feedback_step(
        &mut self,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
        v: &DVector<f64>,
        dt: f64,
    ) -> CoreResult<()> {
        let delta = self.phi.diff(x, v, xdot) * (self.gain * dt);
        self.w += delta;
        if !self.w.iter().all(|c| c.is_finite()) {
            return Err(CoreError::ControllerDiverged {
                t: f64::NAN,
                reason: "integrator state became non-finite".into(),
            });
        }
        Ok(())
    }

    /// The full control output `u = feedforward + w`.
    pub fn control(&self, x: &DVector<f64>, xdot: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.feedforward(x, xdot, v) + &self.w
    }
}

/// `L = 0.5 |(A + Ahat) e|^2`: the decay witness for the tracking error.
pub fn lyapunov_value(e: &DVector<f64>, a: &DMatrix<f64>, a_hat: &DMatrix<f64>) -> f64 {
    0.5 * ((a + a_hat) * e).norm_squared()
}

/// A labelled pair of matrix fields whose product `X(x)^T Y(x)` must stay
/// positive definite over the domain.
#[derive(Clone)]
pub struct PdPair {
    pub label: String,
    pub x_field: Arc<MatrixField>,
    pub y_field: Arc<MatrixField>,
}

impl PdPair {
    pub fn new(
        label: impl Into<String>,
        x_field: Arc<MatrixField>,
        y_field: Arc<MatrixField>,
    ) -> Self {
        Self {
            label: label.into(),
            x_field,
            y_field,
        }
    }
}

/// One point at which a pair failed the positive-definiteness test.
#[derive(Debug, Clone)]
pub struct PdFailure {
    pub pair: String,
    pub point: DVector<f64>,
    pub min_eig: f64,
}

/// Result of sampling the positive-definiteness conditions over a domain.
#[derive(Debug, Clone)]
pub struct PdCheckReport {
    pub epsilon: f64,
    pub sample_count: usize,
    /// Smallest eigenvalue of the symmetrised product seen anywhere.
    pub min_eigenvalue: f64,
    /// Pair achieving `min_eigenvalue`.
    pub worst_pair: String,
    pub failures: Vec<PdFailure>,
}

impl PdCheckReport {
    /// True if every sampled symmetrised product stayed above `epsilon`.
    pub fn is_uniformly_pd(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Samples `min eig( (X^T Y + Y^T X) / 2 )` for every pair over a grid plus
/// Monte Carlo draws from the domain, and reports failures below `epsilon`.
///
/// This is a sampled audit of the sign-properness conditions, not a proof;
/// it is meant to catch misconfigured models before a run, and to document
/// the margin when one passes.
pub fn check_uniform_pd<R: Rng>(
    pairs: &[PdPair],
    domain: &AxisBox,
    grid_per_axis: usize,
    mc_samples: usize,
    epsilon: f64,
    rng: &mut R,
) -> CoreResult<PdCheckReport> {
    if pairs.is_empty() {
        return Err(CoreError::InvalidConfig("no pairs to check".into()));
    }
    let mut points = domain.grid(grid_per_axis);
    points.extend(domain.sample_uniform(mc_samples, rng));

    let mut min_eigenvalue = f64::INFINITY;
    let mut worst_pair = String::new();
    let mut failures = Vec::new();

    for pair in pairs {
        for p in &points {
            let x = (pair.x_field)(p);
            let y = (pair.y_field)(p);
            if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
                return Err(CoreError::ShapeMismatch(format!(
                    "pair {}: fields are {}x{} and {}x{}",
                    pair.label,
                    x.nrows(),
                    x.ncols(),
                    y.nrows(),
                    y.ncols()
                )));
            }
            let prod = x.transpose() * y;
            let sym = (&prod + prod.transpose()) * 0.5;
            let min_eig = sym
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if min_eig < min_eigenvalue {
                min_eigenvalue = min_eig;
                worst_pair = pair.label.clone();
            }
            if min_eig < epsilon {
                failures.push(PdFailure {
                    pair: pair.label.clone(),
                    point: p.clone(),
                    min_eig,
                });
            }
        }
    }

    Ok(PdCheckReport {
        epsilon,
        sample_count: points.len(),
        min_eigenvalue,
        worst_pair,
        failures,
    })
}

/// The nine products `X^T Y` with `X, Y` drawn from the true matrix `A`
/// (taken from the plant), the feedforward model matrix and the feedback
/// model matrix. These are the conditions under which tracking is
/// guaranteed; the pair `A^T Bhat` doubles as the model-swap condition.
pub fn theorem_pairs(plant: &Plant, controller: &SdsController) -> Vec<PdPair> {
    let a: Arc<MatrixField> = {
        let p = plant.clone();
        Arc::new(move |x: &DVector<f64>| p.b_matrix(x))
    };
    let ahat: Arc<MatrixField> = {
        let m = controller.psi.clone();
        Arc::new(move |x: &DVector<f64>| m.matrix_at(x))
    };
    let bhat: Arc<MatrixField> = {
        let m = controller.phi.clone();
        Arc::new(move |x: &DVector<f64>| m.matrix_at(x))
    };
    let fields: [(&str, &Arc<MatrixField>); 3] = [("A", &a), ("Ahat", &ahat), ("Bhat", &bhat)];
    let mut pairs = Vec::with_capacity(9);
    for (lx, fx) in &fields {
        for (ly, fy) in &fields {
            pairs.push(PdPair::new(
                format!("{lx}^T {ly}"),
                Arc::clone(fx),
                Arc::clone(fy),
            ));
        }
    }
    pairs
}

/// Where injected noise enters the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoisePlacement {
    /// Added to the feedback integrand, i.e. inside `w' = gain * (...+ n)`:
    /// the integrator accumulates the gain-amplified noise.
    BeforeIntegrator,
    /// Added to the control output `u = u_ff + w + n`: no amplification, no
    /// accumulation.
    AfterIntegrator,
}

/// A per-step noise sequence, held constant within each step.
#[derive(Clone)]
pub struct NoiseInjection {
    pub placement: NoisePlacement,
    pub samples: Arc<Vec<DVector<f64>>>,
}

impl std::fmt::Debug for NoiseInjection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseInjection")
            .field("placement", &self.placement)
            .field("samples", &self.samples.len())
            .finish()
    }
}

/// Options for closed-loop tracking runs.
#[derive(Debug, Clone)]
pub struct TrackOptions {
    pub t_final: f64,
    pub dt: f64,
    pub integrator: Integrator,
    pub noise: Option<NoiseInjection>,
}

impl TrackOptions {
    pub fn new(t_final: f64, dt: f64) -> Self {
        Self {
            t_final,
            dt,
            integrator: Integrator::Rk4,
            noise: None,
        }
    }
}

/// A sampled closed-loop trajectory.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecord {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub xdot: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub e_norm: Vec<f64>,
    pub lyapunov: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Max `|e|` over the final tenth of the run: the empirical asymptotic
    /// error bound.
    pub fn asymptotic_error(&self) -> f64 {
        self.max_error_after(0.9)
    }

    /// Max `|e|` over samples with index at or past `frac` of the run.
    pub fn max_error_after(&self, frac: f64) -> f64 {
        let start = ((self.len() as f64) * frac).floor() as usize;
        self.e_norm[start.min(self.len().saturating_sub(1))..]
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }

    /// First time at which `|e|` drops below `level` and stays below it.
    pub fn time_to_reach(&self, level: f64) -> Option<f64> {
        let mut candidate = None;
        for (i, &en) in self.e_norm.iter().enumerate() {
            if en <= level {
                if candidate.is_none() {
                    candidate = Some(self.t[i]);
                }
            } else {
                candidate = None;
            }
        }
        candidate
    }

    /// Fraction of consecutive sample pairs with `|e|` above `level` at
    /// which the decay witness `L` did not increase.
    pub fn lyapunov_monotone_fraction(&self, level: f64) -> f64 {
        let mut above = 0usize;
        let mut ok = 0usize;
        for i in 1..self.len() {
            if self.e_norm[i - 1] > level {
                above += 1;
                if self.lyapunov[i] <= self.lyapunov[i - 1] * (1.0 + 1e-9) + 1e-12 {
                    ok += 1;
                }
            }
        }
        if above == 0 {
            1.0
        } else {
            ok as f64 / above as f64
        }
    }
}

/// One entry of a model schedule: from `from_t` onward, use these models and
/// this gain.
#[derive(Debug, Clone)]
pub struct ScheduleEntry {
    pub from_t: f64,
    pub phi: AffineIdModel,
    pub psi: AffineIdModel,
    pub gain: f64,
}

fn active_entry(schedule: &[ScheduleEntry], t: f64) -> &ScheduleEntry {
    let mut current = &schedule[0];
    for entry in schedule {
        if entry.from_t <= t {
            current = entry;
        } else {
            break;
        }
    }
    current
}

/// Closed-loop tracking with a (possibly time-varying) model schedule.
///
/// The momentum is eliminated algebraically each evaluation: substituting
/// the control law into the plant's inverse dynamics gives
///
/// ```text
/// (B(x) + Ahat(x)) x' = Ahat(x) v(x) + w - b(x)
/// ```
///
/// which is solved for `x'`; the integrator state then follows
/// `w' = gain * Bhat(x)(v(x) - x')`. Both states integrate jointly with the
/// selected scheme. A feedforward model with `Ahat(x)` close to `-B(x)`
/// makes the feedthrough singular: the loop is ill-posed there and the run
/// is reported as diverged.
pub fn track_schedule(
    plant: &Plant,
    schedule: &[ScheduleEntry],
    v: &SpeedField,
    x0: DVector<f64>,
    w0: DVector<f64>,
    opts: &TrackOptions,
) -> CoreResult<TrajectoryRecord> {
    if schedule.is_empty() {
        return Err(CoreError::InvalidConfig("empty model schedule".into()));
    }
    if schedule[0].from_t > 0.0 {
        return Err(CoreError::InvalidConfig(
            "schedule must cover t = 0".into(),
        ));
    }
    if schedule.windows(2).any(|w| w[0].from_t >= w[1].from_t) {
        return Err(CoreError::InvalidConfig(
            "schedule switch times must be strictly increasing".into(),
        ));
    }
    let n = plant.state_dim();
    let m = plant.control_dim();
    for entry in schedule {
        if entry.phi.rows() != m || entry.phi.cols() != n || entry.psi.rows() != m
            || entry.psi.cols() != n
        {
            return Err(CoreError::ShapeMismatch(
                "scheduled model shapes must match the plant".into(),
            ));
        }
        if entry.gain <= 0.0 {
            return Err(CoreError::InvalidConfig("gain must be positive".into()));
        }
    }
    if x0.len() != n || w0.len() != m {
        return Err(CoreError::ShapeMismatch(
            "initial state or integrator state has the wrong dimension".into(),
        ));
    }

    let steps = (opts.t_final / opts.dt).round() as usize;
    if let Some(noise) = &opts.noise {
        if noise.samples.len() < steps {
            return Err(CoreError::InvalidConfig(format!(
                "noise sequence has {} samples but the run takes {} steps",
                noise.samples.len(),
                steps
            )));
        }
    }

    // Solves the feedthrough for the momentum at (x, w).
    let momentum = |entry: &ScheduleEntry, x: &DVector<f64>, w: &DVector<f64>, n_after: Option<&DVector<f64>>| -> DVector<f64> {
        let a_psi = entry.psi.matrix_at(x);
        let lhs = plant.b_matrix(x) + &a_psi;
        let mut rhs = a_psi * v.eval(x) + w - plant.b_offset(x);
        if let Some(nv) = n_after {
            rhs += nv;
        }
        lhs.lu()
            .solve(&rhs)
            .unwrap_or_else(|| DVector::from_element(rhs.len(), f64::NAN))
    };

    let mut record = TrajectoryRecord::default();
    let mut y = DVector::zeros(n + m);
    y.rows_mut(0, n).copy_from(&x0);
    y.rows_mut(n, m).copy_from(&w0);
    let mut t = 0.0;

    for k in 0..=steps {
        let entry = active_entry(schedule, t);
        let noise_k = opts.noise.as_ref().map(|inj| {
            let idx = k.min(steps.saturating_sub(1));
            (inj.placement, &inj.samples[idx])
        });
        let n_after = match noise_k {
            Some((NoisePlacement::AfterIntegrator, nv)) => Some(nv),
            _ => None,
        };

        // Record the sample at time t.
        {
            let x = y.rows(0, n).into_owned();
            let w = y.rows(n, m).into_owned();
            let xdot = momentum(entry, &x, &w, n_after);
            let vx = v.eval(&x);
            let e = &vx - &xdot;
            let mut u = entry.psi.matrix_at(&x) * &e + &w;
            if let Some(nv) = n_after {
                u += nv;
            }
            let l = lyapunov_value(&e, &plant.b_matrix(&x), &entry.psi.matrix_at(&x));
            record.t.push(t);
            record.x.push(x);
            record.xdot.push(xdot);
            record.u.push(u);
            record.w.push(w);
            record.e_norm.push(e.norm());
            record.lyapunov.push(l);

            let e_n = record.e_norm.last().copied().unwrap_or(f64::NAN);
            if !e_n.is_finite() || e_n > BLOW_UP_NORM {
                return Err(CoreError::ControllerDiverged {
                    t,
                    reason: format!("tracking error norm {e_n}"),
                });
            }
        }
        if k == steps {
            break;
        }

        let rhs = |_tau: f64, yy: &DVector<f64>| -> DVector<f64> {
            let x = yy.rows(0, n).into_owned();
            let w = yy.rows(n, m).into_owned();
            let xdot = momentum(entry, &x, &w, n_after);
            let vx = v.eval(&x);
            let mut integrand = entry.phi.matrix_at(&x) * (&vx - &xdot);
            if let Some((NoisePlacement::BeforeIntegrator, nv)) = noise_k {
                integrand += nv;
            }
            let mut dy = DVector::zeros(n + m);
            dy.rows_mut(0, n).copy_from(&xdot);
            dy.rows_mut(n, m).copy_from(&(integrand * entry.gain));
            dy
        };

        y = opts.integrator.step(rhs, t, &y, opts.dt);
        t += opts.dt;

        if !y.iter().all(|c| c.is_finite()) {
            return Err(CoreError::ControllerDiverged {
                t,
                reason: "state became non-finite (blow-up or singular feedthrough)".into(),
            });
        }
        let x_now = y.rows(0, n);
        let w_norm = y.rows(n, m).norm();
        if x_now.norm() > BLOW_UP_NORM || w_norm > BLOW_UP_NORM {
            return Err(CoreError::ControllerDiverged {
                t,
                reason: "state norm crossed the blow-up threshold".into(),
            });
        }
        if !plant.domain().within_exit_margin(&x_now.into_owned()) {
            return Err(CoreError::DomainExit { t });
        }
    }

    Ok(record)
}

/// Closed-loop tracking with a fixed controller. The controller's current
/// integrator state seeds the run; the controller itself is not mutated.
pub fn track_speed_field(
    plant: &Plant,
    controller: &SdsController,
    v: &SpeedField,
    x0: DVector<f64>,
    opts: &TrackOptions,
) -> CoreResult<TrajectoryRecord> {
    let schedule = [ScheduleEntry {
        from_t: 0.0,
        phi: controller.phi.clone(),
        psi: controller.psi.clone(),
        gain: controller.gain,
    }];
    track_schedule(plant, &schedule, v, x0, controller.w.clone(), opts)
}

/// Closed-loop tracking under a model schedule, starting from a zero
/// integrator state. With a single-entry schedule this is exactly
/// [`track_speed_field`] for a fresh controller: both run the same loop.
pub fn time_varying_track(
    plant: &Plant,
    schedule: &[ScheduleEntry],
    v: &SpeedField,
    x0: DVector<f64>,
    opts: &TrackOptions,
) -> CoreResult<TrajectoryRecord> {
    let w0 = DVector::zeros(plant.control_dim());
    track_schedule(plant, schedule, v, x0, w0, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::families;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_plant(dim: usize) -> Plant {
        families::unit(dim, AxisBox::centred(dim, 5.0)).unwrap()
    }

    #[test]
    fn feedforward_offset_cancels() {
        // Model with a huge offset: the difference must not see it.
        let model = AffineIdModel::constant(
            DMatrix::identity(2, 2) * 2.0,
            DVector::from_vec(vec![1e9, -1e9]),
        );
        let ctrl = SdsController::new(model.clone(), model, 1.0).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.1]);
        let xdot = DVector::from_vec(vec![1.0, 2.0]);
        let v = DVector::from_vec(vec![2.0, 1.0]);
        let ff = ctrl.feedforward(&x, &xdot, &v);
        assert_relative_eq!(ff[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(ff[1], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn feedback_integrates_constant_difference() {
        let model = AffineIdModel::constant(DMatrix::identity(1, 1), DVector::zeros(1));
        let mut ctrl = SdsController::feedback_only(model, 1.0).unwrap();
        let x = DVector::zeros(1);
        let xdot = DVector::zeros(1);
        let v = DVector::from_element(1, 1.0);
        let dt = 1e-3;
        for _ in 0..1000 {
            ctrl.feedback_step(&x, &xdot, &v, dt).unwrap();
        }
        assert_relative_eq!(ctrl.w()[0], 1.0, epsilon = 1e-3);
    }

    #[test]
    fn subtraction_rule_requires_shared_state() {
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let d = StatePair {
            momentum: DVector::from_vec(vec![1.0, 0.0]),
            state: x.clone(),
        };
        let e = StatePair {
            momentum: DVector::from_vec(vec![0.25, 0.5]),
            state: x.clone(),
        };
        let diff = subtract_pairs(&d, &e).unwrap();
        assert_relative_eq!(diff.momentum[0], 0.75, epsilon = 1e-14);
        assert_eq!(diff.state, x);

        let other = StatePair {
            momentum: DVector::zeros(2),
            state: DVector::zeros(2),
        };
        assert!(subtract_pairs(&d, &other).is_err());
    }

    #[test]
    fn pd_check_rotation_matrix() {
        // X = I, Y = rotation by 45 degrees: symmetrised product has both
        // eigenvalues cos(45 deg) ~ 0.7071.
        let theta: f64 = std::f64::consts::FRAC_PI_4;
        let rot = DMatrix::from_row_slice(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        );
        let pair = PdPair::new(
            "I^T R",
            Arc::new(|_: &DVector<f64>| DMatrix::identity(2, 2)),
            Arc::new(move |_: &DVector<f64>| rot.clone()),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report = check_uniform_pd(
            &[pair],
            &AxisBox::centred(2, 1.0),
            3,
            10,
            1e-6,
            &mut rng,
        )
        .unwrap();
        assert!(report.is_uniformly_pd());
        assert_relative_eq!(
            report.min_eigenvalue,
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pd_check_flags_sign_improper_region() {
        // X = I, Y = diag(1, x_1): negative for x_1 < 0.
        let pair = PdPair::new(
            "I^T D",
            Arc::new(|_: &DVector<f64>| DMatrix::identity(2, 2)),
            Arc::new(|x: &DVector<f64>| {
                DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, x[0]]))
            }),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let report = check_uniform_pd(
            &[pair],
            &AxisBox::centred(2, 1.0),
            3,
            10,
            1e-6,
            &mut rng,
        )
        .unwrap();
        assert!(!report.is_uniformly_pd());
        assert!(report.min_eigenvalue < 0.0);
        assert!(!report.failures.is_empty());
    }

    #[test]
    fn perfect_model_tracks_tightly() {
        let plant = unit_plant(2);
        let ctrl = SdsController::new(
            AffineIdModel::exact(&plant),
            AffineIdModel::exact(&plant),
            5.0,
        )
        .unwrap();
        let v = SpeedField::linear_decay(1.0);
        let rec = track_speed_field(
            &plant,
            &ctrl,
            &v,
            DVector::from_vec(vec![1.0, -1.0]),
            &TrackOptions::new(30.0, 1e-3),
        )
        .unwrap();
        assert!(rec.asymptotic_error() < 1e-6, "got {}", rec.asymptotic_error());
        // The state also settled at the field's fixed point.
        assert!(rec.x.last().unwrap().norm() < 1e-4);
    }

    #[test]
    fn mis_scaled_model_converges_with_bounded_error() {
        let plant = unit_plant(1);
        let ctrl = SdsController::new(
            AffineIdModel::scaled(&plant, 0.5),
            AffineIdModel::scaled(&plant, 0.5),
            4.0,
        )
        .unwrap();
        let v = SpeedField::linear_decay(1.0);
        let rec = track_speed_field(
            &plant,
            &ctrl,
            &v,
            DVector::from_element(1, 1.0),
            &TrackOptions::new(20.0, 1e-3),
        )
        .unwrap();
        // Converges toward the origin; the asymptotic error bound was
        // measured once and frozen here with headroom.
        assert!(rec.x.last().unwrap().norm() < 1e-2);
        assert!(rec.asymptotic_error() < 1e-2, "got {}", rec.asymptotic_error());
    }

    #[test]
    fn sign_improper_model_diverges() {
        let plant = unit_plant(1);
        let ctrl = SdsController::feedback_only(AffineIdModel::scaled(&plant, -1.0), 4.0).unwrap();
        let v = SpeedField::linear_decay(1.0);
        let result = track_speed_field(
            &plant,
            &ctrl,
            &v,
            DVector::from_element(1, 0.5),
            &TrackOptions::new(10.0, 1e-3),
        );
        match result {
            Err(CoreError::ControllerDiverged { t, .. }) => assert!(t < 10.0),
            Err(CoreError::DomainExit { t }) => assert!(t < 10.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn error_bound_shrinks_with_gain() {
        // Persistent circulation so the disturbance term never dies out;
        // doubling the gain should roughly halve the asymptotic error.
        let plant = unit_plant(2);
        let v = SpeedField::planar_orbit(1.0, 1.0, 0.3);
        let mut errs = Vec::new();
        for gain in [2.0, 4.0, 8.0] {
            let ctrl = SdsController::new(
                AffineIdModel::scaled(&plant, 0.5),
                AffineIdModel::scaled(&plant, 0.5),
                gain,
            )
            .unwrap();
            let rec = track_speed_field(
                &plant,
                &ctrl,
                &v,
                DVector::from_vec(vec![1.0, 0.0]),
                &TrackOptions::new(25.0, 1e-3),
            )
            .unwrap();
            errs.push(rec.asymptotic_error());
        }
        for pair in errs.windows(2) {
            let ratio = pair[1] / pair[0];
            assert!(
                ratio > 0.3 && ratio < 0.7,
                "halving ratio {ratio} outside [0.3, 0.7]: {errs:?}"
            );
        }
    }

    #[test]
    fn offset_term_does_not_move_the_error_bound() {
        let domain = AxisBox::centred(2, 5.0);
        let b = DMatrix::identity(2, 2) * 1.5;
        let plain = families::linear(b.clone(), DVector::zeros(2), domain.clone()).unwrap();
        let offset = families::linear(
            b.clone(),
            DVector::from_vec(vec![10.0, -7.0]),
            domain,
        )
        .unwrap();
        let v = SpeedField::planar_orbit(1.0, 1.0, 0.3);
        let run = |plant: &Plant| {
            let ctrl = SdsController::new(
                AffineIdModel::scaled(plant, 0.6),
                AffineIdModel::scaled(plant, 0.6),
                4.0,
            )
            .unwrap();
            track_speed_field(
                plant,
                &ctrl,
                &v,
                DVector::from_vec(vec![1.0, 0.0]),
                &TrackOptions::new(25.0, 1e-3),
            )
            .unwrap()
            .asymptotic_error()
        };
        let e_plain = run(&plain);
        let e_offset = run(&offset);
        assert!(
            (e_offset - e_plain).abs() <= 0.1 * e_plain.max(e_offset),
            "bounds differ: {e_plain} vs {e_offset}"
        );
    }

    #[test]
    fn lyapunov_decays_above_the_bound() {
        // A decay field with a half-strength model and a stiff gain keeps the
        // closed loop overdamped, so the witness only rises during the brief
        // stretch where the error changes sign through zero.
        let plant = unit_plant(2);
        let ctrl = SdsController::new(
            AffineIdModel::scaled(&plant, 0.5),
            AffineIdModel::scaled(&plant, 0.5),
            90.0,
        )
        .unwrap();
        let v = SpeedField::linear_decay(1.0);
        let rec = track_speed_field(
            &plant,
            &ctrl,
            &v,
            DVector::from_vec(vec![1.8, -1.2]),
            &TrackOptions::new(25.0, 1e-3),
        )
        .unwrap();
        let bound = rec.asymptotic_error();
        assert!(bound < 1e-9, "decay field should settle, bound {bound}");
        let frac = rec.lyapunov_monotone_fraction(bound);
        assert!(frac >= 0.99, "monotone fraction {frac}");
    }

    #[test]
    fn degenerate_schedule_matches_fixed_controller_bitwise() {
        let plant = unit_plant(2);
        let phi = AffineIdModel::scaled(&plant, 0.7);
        let psi = AffineIdModel::scaled(&plant, 0.7);
        let ctrl = SdsController::new(phi.clone(), psi.clone(), 3.0).unwrap();
        let v = SpeedField::linear_decay(0.5);
        let x0 = DVector::from_vec(vec![1.0, 0.5]);
        let opts = TrackOptions::new(5.0, 1e-3);

        let a = track_speed_field(&plant, &ctrl, &v, x0.clone(), &opts).unwrap();
        let schedule = [ScheduleEntry {
            from_t: 0.0,
            phi,
            psi,
            gain: 3.0,
        }];
        let b = time_varying_track(&plant, &schedule, &v, x0, &opts).unwrap();
        assert_eq!(a.len(), b.len());
        for i in 0..a.len() {
            assert_eq!(a.x[i], b.x[i], "state mismatch at step {i}");
            assert_eq!(a.w[i], b.w[i], "integrator mismatch at step {i}");
            assert_eq!(a.e_norm[i].to_bits(), b.e_norm[i].to_bits());
        }
    }

    #[test]
    fn model_swap_keeps_error_bounded() {
        let plant = unit_plant(2);
        let v = SpeedField::planar_orbit(1.0, 1.0, 0.3);
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let opts = TrackOptions::new(24.0, 1e-3);

        let single = |factor: f64| {
            let ctrl = SdsController::new(
                AffineIdModel::scaled(&plant, factor),
                AffineIdModel::scaled(&plant, factor),
                4.0,
            )
            .unwrap();
            track_speed_field(&plant, &ctrl, &v, x0.clone(), &opts)
                .unwrap()
                .asymptotic_error()
        };
        let bound = single(0.7).max(single(1.3));

        // Swap between the two sign-proper models every half second.
        let mut schedule = Vec::new();
        let mut t = 0.0;
        let mut flip = false;
        while t < opts.t_final {
            let factor = if flip { 1.3 } else { 0.7 };
            schedule.push(ScheduleEntry {
                from_t: t,
                phi: AffineIdModel::scaled(&plant, factor),
                psi: AffineIdModel::scaled(&plant, factor),
                gain: 4.0,
            });
            flip = !flip;
            t += 0.5;
        }
        let rec = time_varying_track(&plant, &schedule, &v, x0, &opts).unwrap();
        let worst = rec.max_error_after(0.2);
        assert!(
            worst <= 5.0 * bound,
            "swap error {worst} exceeds 5x single-model bound {bound}"
        );
    }

    #[test]
    fn schedule_validation() {
        let plant = unit_plant(1);
        let v = SpeedField::linear_decay(1.0);
        let mk = |from_t: f64| ScheduleEntry {
            from_t,
            phi: AffineIdModel::exact(&plant),
            psi: AffineIdModel::exact(&plant),
            gain: 1.0,
        };
        let opts = TrackOptions::new(1.0, 1e-2);
        assert!(matches!(
            time_varying_track(&plant, &[], &v, DVector::zeros(1), &opts),
            Err(CoreError::InvalidConfig(_))
        ));
        assert!(matches!(
            time_varying_track(&plant, &[mk(0.5)], &v, DVector::zeros(1), &opts),
            Err(CoreError::InvalidConfig(_))
        ));
        assert!(matches!(
            time_varying_track(&plant, &[mk(0.0), mk(0.0)], &v, DVector::zeros(1), &opts),
            Err(CoreError::InvalidConfig(_))
        ));
    }

    #[test]
    fn gain_must_be_positive() {
        let model = AffineIdModel::constant(DMatrix::identity(1, 1), DVector::zeros(1));
        assert!(SdsController::new(model.clone(), model, 0.0).is_err());
    }
}
