//! Adaptation rules for the reconstruction network's matrices.
//!
//! Every matrix has its own local rule: the bottom-up matrix `W` and the
//! gate projection `P` adapt by independent component analysis, the
//! top-down matrix `Q` by the delta rule on the reconstruction error, and
//! the recurrent matrix `M` by a Hebbian product of hidden rate and hidden
//! state. The rates are ordered: `Q` is the slowest, `P` sits in the
//! middle, `W` is the fastest, so bottom-up separation settles first and
//! the top-down dictionary follows.
//!
//! The rule for `P` needs an inverse-matrix term. Three forms are
//! provided: the transposed inverse (the classic maximum-likelihood form),
//! the plain inverse (a literal variant that only typechecks for square
//! `P`), and a noise approximation that estimates the term by driving the
//! hidden layer with noise and reading the top-down response, which avoids
//! inverting anything: at the tuned point `QN` equals `P⁻¹`, so probe
//! vectors `ν` give the term as the average of `ν (QNν)ᵀ` over draws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{CoreError, CoreResult};
use crate::recon::ReconNet;

/// Componentwise nonlinearity used by every independence-seeking rule.
///
/// The stable choice depends on the sign of the source kurtosis: heavy
/// tails want `y + tanh(y)`, light tails (uniform-like sources) want
/// `y − tanh(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcaNonlinearity {
    SuperGaussian,
    SubGaussian,
}

impl IcaNonlinearity {
    pub fn phi(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            IcaNonlinearity::SuperGaussian => y.map(|c| c + c.tanh()),
            IcaNonlinearity::SubGaussian => y.map(|c| c - c.tanh()),
        }
    }
}

/// Which inverse-matrix term the `P` rule adds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseTermMode {
    /// `P⁻ᵀ`, the maximum-likelihood gradient form.
    ExactTransposed,
    /// `P⁻¹` added literally; requires square `P`.
    ExactPlain,
    /// Noise-probe estimate of `(QN)ᵀ`, no inversion involved.
    NoiseApprox,
}

/// Form of the Hebbian rule for the recurrent matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MRuleForm {
    /// `ΔM = η (N ḣ) hᵀ`. The product of rate and state has a systematic
    /// component, so the matrix keeps drifting in the direction of the
    /// one-step predictor instead of settling; useful as the stated rule
    /// but needs a stopping time.
    Literal,
    /// `ΔM = η (N (ḣ − M h)) hᵀ`, the prediction-error form. Settles on the
    /// least-squares one-step predictor of the hidden trajectory.
    Predictive,
}

/// Learning rates and shared knobs for a training run.
#[derive(Debug, Clone)]
pub struct LearningConfig {
    pub eta_w: f64,
    pub eta_p: f64,
    pub eta_q: f64,
    pub eta_m: f64,
    /// Standard deviation of the probe noise for the inverse-term estimate.
    pub noise_std: f64,
    /// Probe vectors averaged per estimate.
    pub noise_draws: usize,
    pub nonlinearity: IcaNonlinearity,
    pub inverse_mode: InverseTermMode,
    pub m_rule: MRuleForm,
    /// Unit-step relaxation sweeps per presented sample inside an epoch.
    /// One sweep keeps the identity the unique stationary point of the
    /// top-down rule; extra sweeps settle the loop deeper (letting the gate
    /// discriminate on the reconstruction) at the cost of widening that
    /// stationary set.
    pub relax_steps: usize,
    /// Clamp the top-down matrix at zero after each update.
    pub nonneg_q: bool,
}

impl LearningConfig {
    /// Build a config with the default knobs and the given rates, enforcing
    /// the rate ordering: the top-down matrix must adapt no faster than the
    /// gate projection, which must adapt no faster than the bottom-up
    /// matrix, strictly so when all three are active.
    pub fn new(eta_w: f64, eta_p: f64, eta_q: f64, eta_m: f64) -> CoreResult<Self> {
        let cfg = LearningConfig {
            eta_w,
            eta_p,
            eta_q,
            eta_m,
            noise_std: 1.0,
            noise_draws: 16,
            nonlinearity: IcaNonlinearity::SubGaussian,
            inverse_mode: InverseTermMode::NoiseApprox,
            m_rule: MRuleForm::Predictive,
            relax_steps: 1,
            nonneg_q: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CoreResult<()> {
        for (label, eta) in [
            ("bottom-up", self.eta_w),
            ("gate projection", self.eta_p),
            ("top-down", self.eta_q),
            ("recurrent", self.eta_m),
        ] {
            if !(eta.is_finite() && eta >= 0.0) {
                return Err(CoreError::InvalidConfig(format!(
                    "{label} rate must be finite and non-negative, got {eta}"
                )));
            }
        }
        // The ordering is enforced pairwise among active rates, so freezing
        // a matrix (rate zero) never invalidates the rest of the schedule.
        let pairs = [
            (self.eta_q, self.eta_p, "top-down", "gate projection"),
            (self.eta_p, self.eta_w, "gate projection", "bottom-up"),
            (self.eta_q, self.eta_w, "top-down", "bottom-up"),
        ];
        for (slow, fast, slow_label, fast_label) in pairs {
            if slow > 0.0 && fast > 0.0 && slow >= fast {
                return Err(CoreError::InvalidConfig(format!(
                    "rate ordering violated: {slow_label} ({slow}) must adapt \
                     strictly slower than {fast_label} ({fast})"
                )));
            }
        }
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "probe noise std must be positive, got {}",
                self.noise_std
            )));
        }
        if self.noise_draws == 0 {
            return Err(CoreError::InvalidConfig(
                "at least one probe draw is required".into(),
            ));
        }
        if self.relax_steps == 0 {
            return Err(CoreError::InvalidConfig(
                "each sample needs at least one relaxation sweep".into(),
            ));
        }
        Ok(())
    }
}

impl Default for LearningConfig {
    /// Rate ratio 10 : 3 : 1 : 1 for W : P : Q : M.
    fn default() -> Self {
        LearningConfig::new(0.01, 0.003, 0.001, 0.001).expect("default rates are ordered")
    }
}

/// What a single `P` update did.
#[derive(Debug, Clone, Copy)]
pub struct PUpdateInfo {
    pub delta_norm: f64,
    /// True when an exact mode hit a singular `P` and the noise estimate
    /// was used instead.
    pub used_noise_fallback: bool,
}

/// One natural-gradient independence step on a square matrix:
/// `S ← S + η (I − φ(y) yᵀ) S`, where `y` is the matrix's output for the
/// current sample.
pub fn natural_gradient_step(
    mat: &mut DMatrix<f64>,
    y: &DVector<f64>,
    eta: f64,
    nonlinearity: IcaNonlinearity,
) -> CoreResult<f64> {
    let dim = mat.nrows();
    if y.len() != dim {
        return Err(CoreError::ShapeMismatch(format!(
            "output has {} components, matrix has {dim} rows",
            y.len()
        )));
    }
    let phi = nonlinearity.phi(y);
    let factor = DMatrix::identity(dim, dim) - phi * y.transpose();
    let delta = factor * &*mat * eta;
    let norm = delta.norm();
    *mat += delta;
    Ok(norm)
}

fn noise_inverse_estimate(
    net: &ReconNet,
    cfg: &LearningConfig,
    rng: &mut impl Rng,
) -> DMatrix<f64> {
    let h_dim = net.h_dim();
    let x_dim = net.x_dim();
    let qn = &net.q * &net.n;
    let mut acc = DMatrix::zeros(h_dim, x_dim);
    for _ in 0..cfg.noise_draws {
        let nu = DVector::from_fn(h_dim, |_, _| synth::gaussian(rng) * cfg.noise_std);
        let response = &qn * &nu;
        acc += nu * response.transpose();
    }
    acc / (cfg.noise_draws as f64 * cfg.noise_std * cfg.noise_std)
}

/// Independence update for the gate projection:
/// `P ← P + η (−φ(s) x̂ᵀ + inverse term)`.
///
/// The nonlinear term enters with the sign that makes the rule ascend the
/// likelihood; at the fixed point the nonlinear output moments match the
/// identity. `s` must be `P`'s own reading of the signal being separated
/// (`P x̂` inside the loop, `P x` on raw mixtures): the nonlinear term only
/// stabilizes the rotational modes that the inverse term excites when it
/// varies with `P` itself, so an externally produced signal lets those
/// modes grow. Exact modes that meet a singular `P` fall back to the noise
/// estimate and say so in the returned info.
pub fn ica_update_p(
    net: &mut ReconNet,
    s: &DVector<f64>,
    x_hat: &DVector<f64>,
    cfg: &LearningConfig,
    rng: &mut impl Rng,
) -> CoreResult<PUpdateInfo> {
    let h_dim = net.h_dim();
    let x_dim = net.x_dim();
    if s.len() != h_dim {
        return Err(CoreError::ShapeMismatch(format!(
            "signal has {} components, gate projection has {h_dim} rows",
            s.len()
        )));
    }
    if x_hat.len() != x_dim {
        return Err(CoreError::ShapeMismatch(format!(
            "reconstruction has {} components, gate projection has {x_dim} columns",
            x_hat.len()
        )));
    }
    if cfg.eta_p == 0.0 {
        return Ok(PUpdateInfo {
            delta_norm: 0.0,
            used_noise_fallback: false,
        });
    }
    let mut used_noise_fallback = false;
    let inv_term = match cfg.inverse_mode {
        InverseTermMode::ExactTransposed => {
            if h_dim != x_dim {
                return Err(CoreError::InvalidConfig(format!(
                    "exact inverse terms need a square gate projection, got {h_dim}x{x_dim}"
                )));
            }
            match net.p.clone().try_inverse() {
                Some(inv) => inv.transpose(),
                None => {
                    used_noise_fallback = true;
                    noise_inverse_estimate(net, cfg, rng)
                }
            }
        }
        InverseTermMode::ExactPlain => {
            if h_dim != x_dim {
                return Err(CoreError::InvalidConfig(format!(
                    "exact inverse terms need a square gate projection, got {h_dim}x{x_dim}"
                )));
            }
            match net.p.clone().try_inverse() {
                Some(inv) => inv,
                None => {
                    used_noise_fallback = true;
                    noise_inverse_estimate(net, cfg, rng)
                }
            }
        }
        InverseTermMode::NoiseApprox => noise_inverse_estimate(net, cfg, rng),
    };
    let phi = cfg.nonlinearity.phi(s);
    let delta = (inv_term - phi * x_hat.transpose()) * cfg.eta_p;
    let delta_norm = delta.norm();
    net.p += delta;
    Ok(PUpdateInfo {
        delta_norm,
        used_noise_fallback,
    })
}

/// Delta-rule update for the top-down matrix: `Q ← Q + η e hᵀ`, which
/// descends the squared reconstruction error for small enough rates. With
/// the nonnegativity flag the result is clamped at zero afterwards.
pub fn hebbian_update_q(
    net: &mut ReconNet,
    e: &DVector<f64>,
    h: &DVector<f64>,
    eta: f64,
    nonneg: bool,
) -> CoreResult<f64> {
    if e.len() != net.x_dim() || h.len() != net.h_dim() {
        return Err(CoreError::ShapeMismatch(format!(
            "error/hidden pair is {}/{}, top-down matrix is {}x{}",
            e.len(),
            h.len(),
            net.x_dim(),
            net.h_dim()
        )));
    }
    let delta = e * h.transpose() * eta;
    let norm = delta.norm();
    net.q += delta;
    if nonneg {
        net.q.apply(|c| *c = c.max(0.0));
    }
    Ok(norm)
}

/// Hebbian update for the recurrent matrix from two consecutive hidden
/// states. The rate is the backward difference `(h − h_prev)/dt` and the
/// state factor is `h_prev`, the state the step departed from.
pub fn hebbian_update_m(
    net: &mut ReconNet,
    h_prev: &DVector<f64>,
    h_curr: &DVector<f64>,
    dt: f64,
    eta: f64,
    form: MRuleForm,
) -> CoreResult<f64> {
    let h_dim = net.h_dim();
    if h_prev.len() != h_dim || h_curr.len() != h_dim {
        return Err(CoreError::ShapeMismatch(format!(
            "hidden states are {}/{}, network is {h_dim}-dimensional",
            h_prev.len(),
            h_curr.len()
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CoreError::InvalidConfig(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let h_dot = (h_curr - h_prev) / dt;
    let rate = match form {
        MRuleForm::Literal => h_dot,
        MRuleForm::Predictive => h_dot - &net.m * h_prev,
    };
    let delta = (&net.n * rate) * h_prev.transpose() * eta;
    let norm = delta.norm();
    net.m += delta;
    Ok(norm)
}

/// Distance of a global mixing-times-unmixing matrix from a scaled
/// permutation, normalized to `[0, 1]`. Zero means every source landed on
/// its own output (up to order, sign and scale).
pub fn amari_index(g: &DMatrix<f64>) -> CoreResult<f64> {
    let n = g.nrows();
    if g.ncols() != n || n < 2 {
        return Err(CoreError::ShapeMismatch(format!(
            "global matrix must be square with at least two rows, got {}x{}",
            n,
            g.ncols()
        )));
    }
    let a = g.map(f64::abs);
    let mut total = 0.0;
    for i in 0..n {
        let row_max = a.row(i).max();
        let col_max = a.column(i).max();
        if row_max == 0.0 || col_max == 0.0 {
            return Err(CoreError::SingularMatrix(
                "global matrix has an all-zero row or column".into(),
            ));
        }
        total += a.row(i).sum() / row_max - 1.0;
        total += a.column(i).sum() / col_max - 1.0;
    }
    Ok(total / (2.0 * n as f64 * (n as f64 - 1.0)))
}

/// Running two-step separator: whitening toward unit output covariance
/// followed by a natural-gradient independence stage on the whitened
/// output.
#[derive(Debug, Clone)]
pub struct IcaState {
    whitening: DMatrix<f64>,
    separation: DMatrix<f64>,
    second_moment: DMatrix<f64>,
    samples_seen: usize,
    degenerate: bool,
}

impl IcaState {
    pub fn new(dim: usize) -> Self {
        IcaState {
            whitening: DMatrix::identity(dim, dim),
            separation: DMatrix::identity(dim, dim),
            second_moment: DMatrix::zeros(dim, dim),
            samples_seen: 0,
            degenerate: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.whitening.nrows()
    }

    pub fn whitening(&self) -> &DMatrix<f64> {
        &self.whitening
    }

    pub fn separation(&self) -> &DMatrix<f64> {
        &self.separation
    }

    /// Combined transform applied to raw inputs.
    pub fn transform(&self) -> DMatrix<f64> {
        &self.separation * &self.whitening
    }

    /// Covariance estimate accumulated so far. Inputs are taken as
    /// zero-mean, so this is the running second moment.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.second_moment
    }

    pub fn samples_seen(&self) -> usize {
        self.samples_seen
    }

    /// Whether the last whitening recompute saw a rank-deficient
    /// covariance. The whitening matrix is left untouched in that case.
    pub fn degenerate_covariance(&self) -> bool {
        self.degenerate
    }

    pub fn output(&self, x: &DVector<f64>) -> CoreResult<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(CoreError::ShapeMismatch(format!(
                "input has {} components, separator expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(&self.separation * (&self.whitening * x))
    }

    /// Fold a batch into the covariance estimate, refresh the whitening to
    /// the inverse square root of the estimate, then take one
    /// natural-gradient step of the separation stage on the whitened batch.
    pub fn whiten_then_separate(
        &mut self,
        batch: &[DVector<f64>],
        eta: f64,
        nonlinearity: IcaNonlinearity,
    ) -> CoreResult<()> {
        if batch.is_empty() {
            return Err(CoreError::InvalidConfig(
                "separator update needs a nonempty batch".into(),
            ));
        }
        let dim = self.dim();
        for x in batch {
            if x.len() != dim {
                return Err(CoreError::ShapeMismatch(format!(
                    "batch vector has {} components, separator expects {dim}",
                    x.len()
                )));
            }
        }
        let old_weight = self.samples_seen as f64;
        let new_weight = old_weight + batch.len() as f64;
        let mut batch_moment = DMatrix::zeros(dim, dim);
        for x in batch {
            batch_moment += x * x.transpose();
        }
        self.second_moment = (&self.second_moment * old_weight + batch_moment) / new_weight;
        self.samples_seen += batch.len();

        let eigen = self.second_moment.clone().symmetric_eigen();
        let max_eig = eigen.eigenvalues.max();
        let min_eig = eigen.eigenvalues.min();
        if min_eig <= 1e-10 * max_eig.max(1.0) {
            self.degenerate = true;
        } else {
            self.degenerate = false;
            let inv_sqrt = DMatrix::from_diagonal(
                &eigen.eigenvalues.map(|l| 1.0 / l.sqrt()),
            );
            self.whitening = &eigen.eigenvectors * inv_sqrt * eigen.eigenvectors.transpose();
        }

        let phi_dim = dim;
        let mut moment = DMatrix::zeros(phi_dim, phi_dim);
        for x in batch {
            let y = &self.separation * (&self.whitening * x);
            moment += nonlinearity.phi(&y) * y.transpose();
        }
        moment /= batch.len() as f64;
        let factor = DMatrix::identity(phi_dim, phi_dim) - moment;
        let delta = factor * &self.separation * eta;
        self.separation += delta;
        Ok(())
    }
}

/// Per-sample change norms and tuning distance over a training run.
#[derive(Debug, Clone, Default)]
pub struct LearningTrace {
    pub dw: Vec<f64>,
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
    pub dm: Vec<f64>,
    pub qnw_dist: Vec<f64>,
}

impl LearningTrace {
    pub fn len(&self) -> usize {
        self.dw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dw.is_empty()
    }

    /// Total change norm per matrix over the run, in (W, P, Q, M) order.
    pub fn cumulative(&self) -> (f64, f64, f64, f64) {
        let sum = |v: &[f64]| v.iter().sum();
        (
            sum(&self.dw),
            sum(&self.dp),
            sum(&self.dq),
            sum(&self.dm),
        )
    }
}

/// One pass over an input stream, interleaving relaxation and every
/// matrix's update at its own rate.
///
/// Per sample: the hidden state is cleared, the loop relaxes for the
/// configured number of unit sweeps, and then all updates apply
/// simultaneously from the pre-update matrices. `W` separates the raw
/// input; `P` separates the settled reconstruction through its own output;
/// `Q` moves against the settled error/hidden pair, which leaves it
/// stationary exactly when `QNW` is the identity; `M` sees the last two
/// hidden states.
pub fn run_learning_epoch(
    net: &mut ReconNet,
    inputs: &[DVector<f64>],
    cfg: &LearningConfig,
    rng: &mut impl Rng,
) -> CoreResult<LearningTrace> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(CoreError::InvalidConfig(
            "learning epoch needs at least one input".into(),
        ));
    }
    let v = DVector::zeros(net.v_dim());
    let mut trace = LearningTrace::default();
    for x in inputs {
        net.reset();
        let y_w = &net.w * x;
        let mut h_prev = net.h.clone();
        for sweep in 0..cfg.relax_steps {
            if sweep + 1 == cfg.relax_steps {
                h_prev = net.h.clone();
            }
            net.step_extended(x, &v, 1.0)?;
        }
        let h_final = net.h.clone();
        let x_hat = net.reconstruction();
        let e_final = x - &x_hat;
        let s_p = &net.p * &x_hat;

        let dw = natural_gradient_step(&mut net.w, &y_w, cfg.eta_w, cfg.nonlinearity)?;
        let dp = ica_update_p(net, &s_p, &x_hat, cfg, rng)?.delta_norm;
        let dq = hebbian_update_q(net, &e_final, &h_final, cfg.eta_q, cfg.nonneg_q)?;
        let dm = if cfg.eta_m > 0.0 {
            hebbian_update_m(net, &h_prev, &h_final, 1.0, cfg.eta_m, cfg.m_rule)?
        } else {
            0.0
        };

        trace.dw.push(dw);
        trace.dp.push(dp);
        trace.dq.push(dq);
        trace.dm.push(dm);
        trace.qnw_dist.push(net.is_tuned(f64::INFINITY).1);
    }
    Ok(trace)
}

/// Synthetic sources and small sampling helpers shared by the benchmarks.
pub mod synth {
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    /// Standard normal draw (Box-Muller).
    pub fn gaussian(rng: &mut impl Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Independent unit-variance uniform sources.
    pub fn uniform_sources(rng: &mut impl Rng, dim: usize, count: usize) -> Vec<DVector<f64>> {
        let half_width = 3.0_f64.sqrt();
        (0..count)
            .map(|_| DVector::from_fn(dim, |_, _| rng.gen_range(-half_width..half_width)))
            .collect()
    }

    /// One dictionary element active per sample, with magnitude in the
    /// given range and random sign.
    pub fn sparse_dictionary_hits(
        rng: &mut impl Rng,
        dim: usize,
        count: usize,
        amp_lo: f64,
        amp_hi: f64,
    ) -> Vec<DVector<f64>> {
        (0..count)
            .map(|_| {
                let active = rng.gen_range(0..dim);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let amp = rng.gen_range(amp_lo..amp_hi) * sign;
                let mut s = DVector::zeros(dim);
                s[active] = amp;
                s
            })
            .collect()
    }

    /// Zero-mean isotropic Gaussian vectors.
    pub fn isotropic_noise(
        rng: &mut impl Rng,
        dim: usize,
        count: usize,
        std: f64,
    ) -> Vec<DVector<f64>> {
        (0..count)
            .map(|_| DVector::from_fn(dim, |_, _| gaussian(rng) * std))
            .collect()
    }

    /// Apply a mixing matrix to every source vector.
    pub fn mix(sources: &[DVector<f64>], mixing: &DMatrix<f64>) -> Vec<DVector<f64>> {
        sources.iter().map(|s| mixing * s).collect()
    }
}
