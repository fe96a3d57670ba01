//! Generative reconstruction loops.
//!
//! A reconstruction network pairs a bottom-up matrix `W` with a top-down
//! matrix `Q`. The plain loop integrates `ḣ = W(x − Qh)`: the hidden state
//! moves until the reconstruction `Qh` matches the input, and the loop is
//! stable when `WQ` is positive definite. The extended loop adds a gate on
//! the bottom-up pathway, an error-routing matrix `N`, a recurrent matrix
//! `M`, and an additive control channel, stepped explicitly:
//!
//! ```text
//! h ← h + dt · [ N · gate(W e) + M h + B v ]
//! ```
//!
//! `e` is the input/reconstruction mismatch in the orientation selected by
//! [`ErrorSign`], and the gate passes component `i` untouched only while the
//! opening value `(P Qh)_i` clears a threshold; below it the component is
//! scaled by an attenuation factor.
//!
//! The plain loop admits a closed-form solution, a convolution of the input
//! against the matrix-exponential kernel of `WQ`. [`ReconNet::convolution_oracle`]
//! evaluates that integral by quadrature and serves as an independent check
//! on the integrator.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, CoreResult};
use crate::{BLOW_UP_NORM, EIG_EPSILON};

/// Orientation of the bottom-up mismatch term.
///
/// Both orientations appear in descriptions of these loops. `InputFirst`
/// (`e = x − Qh`) makes the plain loop contract toward the input whenever
/// `WQ` is positive definite and is the default everywhere. The flipped
/// `ReconstructionFirst` (`e = Qh − x`) is kept so the literal alternative
/// can be exercised; with it the same loop needs a stabilizing recurrent
/// term to settle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorSign {
    InputFirst,
    ReconstructionFirst,
}

impl ErrorSign {
    fn factor(self) -> f64 {
        match self {
            ErrorSign::InputFirst => 1.0,
            ErrorSign::ReconstructionFirst => -1.0,
        }
    }
}

/// Reconstruction network state and wiring.
///
/// Shapes, with `x_dim` the input size, `h_dim` the hidden size and `v_dim`
/// the control size: `w` is `h_dim × x_dim`, `q` is `x_dim × h_dim`, `n` and
/// `m` are `h_dim × h_dim`, `p` is `h_dim × x_dim`, `b_ctrl` is
/// `h_dim × v_dim`.
#[derive(Debug, Clone)]
pub struct ReconNet {
    pub w: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub b_ctrl: DMatrix<f64>,
    pub h: DVector<f64>,
    /// Gate threshold; components of the opening vector with magnitude below
    /// it have their bottom-up signal attenuated.
    pub theta: f64,
    /// Multiplier applied to gated-out components. Zero closes them fully.
    pub gate_attenuation: f64,
    pub error_sign: ErrorSign,
    steps_taken: usize,
}

/// Result of integrating the plain loop.
#[derive(Debug, Clone)]
pub struct SimpleRelaxation {
    /// `h` at every grid point, including the initial state at index 0.
    pub trajectory: Vec<DVector<f64>>,
    /// Smallest eigenvalue of the symmetric part of `WQ`.
    pub wq_min_eigenvalue: f64,
    /// Whether the positive-definiteness precondition held. Integration runs
    /// either way; an unstable loop surfaces as a divergence error instead.
    pub wq_definite: bool,
}

/// Options for [`ReconNet::relaxation_time`].
#[derive(Debug, Clone)]
pub struct RelaxOptions {
    /// Convergence threshold on the reconstruction error norm.
    pub tol: f64,
    /// Maximum number of steps before the run is marked non-converged.
    pub cap: usize,
    /// Step size for the explicit update. Unit steps treat the loop as a
    /// discrete-time network, which is the regime where a tuned net settles
    /// in a single pass.
    pub dt: f64,
    /// Control input held constant over the run; zero when absent.
    pub v: Option<DVector<f64>>,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            tol: 1e-3,
            cap: 10_000,
            dt: 1.0,
            v: None,
        }
    }
}

/// Trace of one relaxation run, sampled once per step.
#[derive(Debug, Clone)]
pub struct RelaxationRecord {
    /// First step at which the error dropped below tolerance, if any.
    pub steps_to_tolerance: Option<usize>,
    /// `‖x − Qh‖` after each step.
    pub error_trace: Vec<f64>,
    /// L1 norm of the gated bottom-up signal after each step.
    pub bu_activity_trace: Vec<f64>,
    /// `|s_i|` at the last step taken.
    pub per_unit_activity: DVector<f64>,
    /// Largest `|s_i|` seen at any step of the run.
    pub per_unit_peak: DVector<f64>,
}

impl RelaxationRecord {
    pub fn converged(&self) -> bool {
        self.steps_to_tolerance.is_some()
    }
}

/// Gate a bottom-up vector against an opening vector.
///
/// Component `i` of `s` passes unchanged when `|gate_i| ≥ theta`, otherwise
/// it is multiplied by `alpha`. A zero threshold therefore leaves `s` alone,
/// and with `alpha = 0` the operation is idempotent for a fixed gate.
pub fn scs_gate(
    s: &DVector<f64>,
    gate: &DVector<f64>,
    theta: f64,
    alpha: f64,
) -> CoreResult<DVector<f64>> {
    if theta < 0.0 || !theta.is_finite() {
        return Err(CoreError::InvalidThreshold(theta));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(CoreError::InvalidConfig(format!(
            "gate attenuation must be finite and non-negative, got {alpha}"
        )));
    }
    if s.len() != gate.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "gated vector has {} components but the gate has {}",
            s.len(),
            gate.len()
        )));
    }
    let mut out = s.clone();
    for i in 0..s.len() {
        if gate[i].abs() < theta {
            out[i] *= alpha;
        }
    }
    Ok(out)
}

impl ReconNet {
    /// Plain loop: only `W` and `Q` act, the gate is fully open, and there is
    /// no recurrence or control channel.
    pub fn simple(w: DMatrix<f64>, q: DMatrix<f64>) -> CoreResult<Self> {
        let h_dim = w.nrows();
        let x_dim = w.ncols();
        ReconNet::extended(
            w,
            q,
            DMatrix::identity(h_dim, h_dim),
            DMatrix::zeros(h_dim, h_dim),
            DMatrix::zeros(h_dim, x_dim),
            DMatrix::zeros(h_dim, 0),
            0.0,
            0.0,
        )
    }

    /// Full network with every pathway explicit.
    #[allow(clippy::too_many_arguments)]
    pub fn extended(
        w: DMatrix<f64>,
        q: DMatrix<f64>,
        n: DMatrix<f64>,
        m: DMatrix<f64>,
        p: DMatrix<f64>,
        b_ctrl: DMatrix<f64>,
        theta: f64,
        gate_attenuation: f64,
    ) -> CoreResult<Self> {
        let h_dim = w.nrows();
        let x_dim = w.ncols();
        if q.nrows() != x_dim || q.ncols() != h_dim {
            return Err(CoreError::ShapeMismatch(format!(
                "top-down matrix must be {x_dim}x{h_dim}, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        for (label, mat) in [("error-routing", &n), ("recurrent", &m)] {
            if mat.nrows() != h_dim || mat.ncols() != h_dim {
                return Err(CoreError::ShapeMismatch(format!(
                    "{label} matrix must be {h_dim}x{h_dim}, got {}x{}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        if p.nrows() != h_dim || p.ncols() != x_dim {
            return Err(CoreError::ShapeMismatch(format!(
                "gate projection must be {h_dim}x{x_dim}, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if b_ctrl.nrows() != h_dim {
            return Err(CoreError::ShapeMismatch(format!(
                "control matrix must have {h_dim} rows, got {}",
                b_ctrl.nrows()
            )));
        }
        if theta < 0.0 || !theta.is_finite() {
            return Err(CoreError::InvalidThreshold(theta));
        }
        if !(gate_attenuation.is_finite() && gate_attenuation >= 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "gate attenuation must be finite and non-negative, got {gate_attenuation}"
            )));
        }
        Ok(ReconNet {
            h: DVector::zeros(h_dim),
            w,
            q,
            n,
            m,
            p,
            b_ctrl,
            theta,
            gate_attenuation,
            error_sign: ErrorSign::InputFirst,
            steps_taken: 0,
        })
    }

    /// Leaky recurrent matrix: a small negative diagonal that damps the
    /// hidden state without coupling units. The usual default when a run
    /// needs `M` populated but no learned structure exists yet.
    pub fn leaky_m(h_dim: usize, leak: f64) -> DMatrix<f64> {
        DMatrix::identity(h_dim, h_dim) * (-leak)
    }

    pub fn x_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn h_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn v_dim(&self) -> usize {
        self.b_ctrl.ncols()
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// Zero the hidden state and the step counter.
    pub fn reset(&mut self) {
        self.h.fill(0.0);
        self.steps_taken = 0;
    }

    /// Loop matrix `WQ`.
    pub fn wq(&self) -> DMatrix<f64> {
        &self.w * &self.q
    }

    /// Smallest eigenvalue of the symmetric part of `WQ`, with the verdict
    /// of the positive-definiteness check.
    pub fn wq_definiteness(&self) -> (bool, f64) {
        let wq = self.wq();
        let sym = (&wq + wq.transpose()) * 0.5;
        let min_eig = sym
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        (min_eig > EIG_EPSILON, min_eig)
    }

    /// Reconstruction of the input implied by the current hidden state.
    pub fn reconstruction(&self) -> DVector<f64> {
        &self.q * &self.h
    }

    /// Gate opening vector for the current hidden state.
    pub fn gate_opening(&self) -> DVector<f64> {
        &self.p * self.reconstruction()
    }

    fn check_input(&self, x: &DVector<f64>) -> CoreResult<()> {
        if x.len() != self.x_dim() {
            return Err(CoreError::ShapeMismatch(format!(
                "input has {} components, network expects {}",
                x.len(),
                self.x_dim()
            )));
        }
        Ok(())
    }

    /// Integrate the plain loop `ḣ = W(x − Qh)` from the current hidden
    /// state with a fixed-step fourth-order scheme, holding `x` constant.
    ///
    /// The positive-definiteness of `WQ` is checked and reported in the
    /// result rather than enforced; a genuinely unstable loop ends in a
    /// divergence error once `‖h‖` passes the blow-up threshold.
    pub fn relax_simple(
        &self,
        x: &DVector<f64>,
        dt: f64,
        steps: usize,
    ) -> CoreResult<SimpleRelaxation> {
        self.check_input(x)?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "step size must be positive, got {dt}"
            )));
        }
        let (wq_definite, wq_min_eigenvalue) = self.wq_definiteness();
        let rhs = |_t: f64, h: &DVector<f64>| &self.w * (x - &self.q * h);
        let mut trajectory = Vec::with_capacity(steps + 1);
        trajectory.push(self.h.clone());
        let mut h = self.h.clone();
        for k in 0..steps {
            let t = k as f64 * dt;
            h = crate::integrate::rk4_step(rhs, t, &h, dt);
            if !h.iter().all(|c| c.is_finite()) || h.norm() > BLOW_UP_NORM {
                return Err(CoreError::IntegrationDiverged { t: t + dt });
            }
            trajectory.push(h.clone());
        }
        Ok(SimpleRelaxation {
            trajectory,
            wq_min_eigenvalue,
            wq_definite,
        })
    }

    /// Closed-form solution of the plain loop, evaluated on a uniform grid.
    ///
    /// The plain loop is linear in `h`, so its solution is the input signal
    /// convolved with the matrix-exponential kernel of `−WQ`, plus the decay
    /// of the initial state:
    ///
    /// ```text
    /// h(t) = exp(−WQ t) h(0) + ∫₀ᵗ exp(−WQ (t − τ)) W x(τ) dτ
    /// ```
    ///
    /// The integral is accumulated interval by interval with Simpson
    /// weights, propagating between grid points with the exact kernel. This
    /// shares no code with the integrator and is the reference the
    /// relaxation tests compare against.
    ///
    /// Requires `WQ` to be diagonalizable with eigenvalues in the open right
    /// half plane; the check accepts symmetric matrices and matrices with
    /// pairwise-distinct eigenvalues, and reports the oracle unavailable
    /// otherwise.
    pub fn convolution_oracle_trajectory(
        &self,
        x_signal: &dyn Fn(f64) -> DVector<f64>,
        t_final: f64,
        steps: usize,
    ) -> CoreResult<Vec<DVector<f64>>> {
        if !(t_final.is_finite() && t_final > 0.0) || steps == 0 {
            return Err(CoreError::InvalidConfig(format!(
                "oracle needs a positive horizon and at least one step, got t={t_final}, steps={steps}"
            )));
        }
        let wq = self.wq();
        oracle_preconditions(&wq)?;
        let dt = t_final / steps as f64;
        let kernel_full = (-&wq * dt).exp();
        let kernel_half = (-&wq * (dt / 2.0)).exp();
        let drive = |t: f64| -> CoreResult<DVector<f64>> {
            let x = x_signal(t);
            self.check_input(&x)?;
            Ok(&self.w * x)
        };
        let mut h = self.h.clone();
        let mut out = Vec::with_capacity(steps + 1);
        out.push(h.clone());
        let mut g_left = drive(0.0)?;
        for k in 0..steps {
            let t_left = k as f64 * dt;
            let g_mid = drive(t_left + dt / 2.0)?;
            let g_right = drive(t_left + dt)?;
            let increment = (&kernel_full * &g_left + &kernel_half * &g_mid * 4.0 + &g_right)
                * (dt / 6.0);
            h = &kernel_full * h + increment;
            out.push(h.clone());
            g_left = g_right;
        }
        Ok(out)
    }

    /// Closed-form hidden state at a single time. See
    /// [`ReconNet::convolution_oracle_trajectory`].
    pub fn convolution_oracle(
        &self,
        x_signal: &dyn Fn(f64) -> DVector<f64>,
        t: f64,
        steps: usize,
    ) -> CoreResult<DVector<f64>> {
        let traj = self.convolution_oracle_trajectory(x_signal, t, steps)?;
        Ok(traj.last().expect("trajectory is never empty").clone())
    }

    /// Gated bottom-up signal for an input, given the current hidden state.
    pub fn bu_signal(&self, x: &DVector<f64>) -> CoreResult<DVector<f64>> {
        self.check_input(x)?;
        let e = (x - self.reconstruction()) * self.error_sign.factor();
        let raw = &self.w * e;
        scs_gate(&raw, &self.gate_opening(), self.theta, self.gate_attenuation)
    }

    /// One explicit step of the full network.
    ///
    /// ```text
    /// h ← h + dt · [ N · gate(W e) + M h + B v ]
    /// ```
    ///
    /// with `e` oriented by [`ReconNet::error_sign`] and the gate opened by
    /// `P Qh`. Returns the updated hidden state.
    pub fn step_extended(
        &mut self,
        x: &DVector<f64>,
        v: &DVector<f64>,
        dt: f64,
    ) -> CoreResult<DVector<f64>> {
        if v.len() != self.v_dim() {
            return Err(CoreError::ShapeMismatch(format!(
                "control input has {} components, network expects {}",
                v.len(),
                self.v_dim()
            )));
        }
        let s = self.bu_signal(x)?;
        let rate = &self.n * s + &self.m * &self.h + &self.b_ctrl * v;
        self.h += rate * dt;
        self.steps_taken += 1;
        if !self.h.iter().all(|c| c.is_finite()) || self.h.norm() > BLOW_UP_NORM {
            return Err(CoreError::RelaxationDiverged {
                step: self.steps_taken,
            });
        }
        Ok(self.h.clone())
    }

    /// Tuning verdict: distance of `QNW` from the identity, compared to a
    /// tolerance. A tuned net reproduces any input in the column space of
    /// `Q` in a single unit step, which is as fast as a feedforward pass.
    pub fn is_tuned(&self, tol: f64) -> (bool, f64) {
        let prod = &self.q * &self.n * &self.w;
        let dim = prod.nrows();
        let distance = (prod - DMatrix::<f64>::identity(dim, dim)).norm();
        (distance < tol, distance)
    }

    /// Fixed point of the fully open loop (`theta = 0`), found by a direct
    /// linear solve of `0 = ±NW(x − Qh) + Mh + Bv` in the orientation the
    /// net is configured with.
    pub fn solve_equilibrium(
        &self,
        x: &DVector<f64>,
        v: &DVector<f64>,
    ) -> CoreResult<DVector<f64>> {
        self.check_input(x)?;
        if v.len() != self.v_dim() {
            return Err(CoreError::ShapeMismatch(format!(
                "control input has {} components, network expects {}",
                v.len(),
                self.v_dim()
            )));
        }
        if self.theta != 0.0 {
            return Err(CoreError::InvalidConfig(
                "equilibrium solve requires the gate fully open (zero threshold)".into(),
            ));
        }
        let sign = self.error_sign.factor();
        let nw = &self.n * &self.w;
        let lhs = &nw * &self.q * sign - &self.m;
        let rhs = nw * x * sign + &self.b_ctrl * v;
        lhs.lu()
            .solve(&rhs)
            .ok_or_else(|| CoreError::SingularMatrix("equilibrium system is singular".into()))
    }

    /// Run the full network on one input until the reconstruction error
    /// drops below tolerance or a step cap is hit.
    ///
    /// The hidden state is zeroed first: each call measures a fresh
    /// presentation. The error trace always reports `‖x − Qh‖` regardless of
    /// the configured orientation, and the per-unit activity fields record
    /// the magnitude of the gated bottom-up signal, both its final value and
    /// the largest value each unit reached during the run.
    pub fn relaxation_time(
        &mut self,
        x: &DVector<f64>,
        opts: &RelaxOptions,
    ) -> CoreResult<RelaxationRecord> {
        self.check_input(x)?;
        if !(opts.tol.is_finite() && opts.tol > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "relaxation tolerance must be positive, got {}",
                opts.tol
            )));
        }
        if opts.cap == 0 {
            return Err(CoreError::InvalidConfig(
                "relaxation step cap must be at least 1".into(),
            ));
        }
        if !(opts.dt.is_finite() && opts.dt > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "step size must be positive, got {}",
                opts.dt
            )));
        }
        let v = match &opts.v {
            Some(v) => v.clone(),
            None => DVector::zeros(self.v_dim()),
        };
        self.reset();
        let mut error_trace = Vec::new();
        let mut bu_activity_trace = Vec::new();
        let mut per_unit_activity = DVector::zeros(self.h_dim());
        let mut per_unit_peak = DVector::<f64>::zeros(self.h_dim());
        let mut steps_to_tolerance = None;
        for step in 1..=opts.cap {
            self.step_extended(x, &v, opts.dt)?;
            let err = (x - self.reconstruction()).norm();
            let s = self.bu_signal(x)?;
            error_trace.push(err);
            bu_activity_trace.push(s.iter().map(|c| c.abs()).sum());
            for i in 0..s.len() {
                let mag = s[i].abs();
                per_unit_activity[i] = mag;
                if mag > per_unit_peak[i] {
                    per_unit_peak[i] = mag;
                }
            }
            if err < opts.tol {
                steps_to_tolerance = Some(step);
                break;
            }
        }
        Ok(RelaxationRecord {
            steps_to_tolerance,
            error_trace,
            bu_activity_trace,
            per_unit_activity,
            per_unit_peak,
        })
    }
}

/// Check that the loop matrix is safe for the closed-form kernel: every
/// eigenvalue in the open right half plane, and diagonalizability that this
/// check can actually certify (symmetric, or all eigenvalues pairwise
/// distinct). Matrices with repeated eigenvalues and no symmetry may be
/// defective, so they are conservatively rejected.
fn oracle_preconditions(wq: &DMatrix<f64>) -> CoreResult<()> {
    let scale = wq.norm().max(1.0);
    let symmetric = (wq - wq.transpose()).norm() <= 1e-12 * scale;
    let eigs = wq.complex_eigenvalues();
    for eig in eigs.iter() {
        if eig.re <= 0.0 {
            return Err(CoreError::OracleUnavailable(format!(
                "loop matrix has an eigenvalue with non-positive real part ({:.6} + {:.6}i)",
                eig.re, eig.im
            )));
        }
    }
    if !symmetric {
        for i in 0..eigs.len() {
            for j in (i + 1)..eigs.len() {
                if (eigs[i] - eigs[j]).norm() <= 1e-9 * scale {
                    return Err(CoreError::OracleUnavailable(
                        "loop matrix has repeated eigenvalues and may be defective".into(),
                    ));
                }
            }
        }
    }
    Ok(())
}
