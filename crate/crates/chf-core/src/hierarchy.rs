//! Stacked reconstruction networks coupled by robust controllers.
//!
//! Each level runs its own reconstruction loop. The reconstruction error of
//! a level is carried upward by a coupling matrix and becomes the input of
//! the level above, so upper levels only see what the levels below failed
//! to explain. Going the other way, every upper level owns a controller
//! that watches the hidden rate of the level below (read through the
//! speed-identification matrix), compares it with a desired speed field
//! derived from its own hidden state, and injects a corrective drive into
//! the lower hidden layer.
//!
//! The top level has no level above to supply desired values. With the
//! `top_twist` flag its reconstruction mismatch itself plays the role of
//! the corrective signal for the level below, wired through a dedicated
//! coupling matrix.
//!
//! A sweep is synchronous: all levels relax one step bottom-up against the
//! controls computed in the previous sweep, then the controls for the next
//! sweep are computed top-down from the freshly measured rates. Control
//! therefore acts with a one-step delay, which is the price of a fixed
//! sweep schedule.

use nalgebra::{DMatrix, DVector};

use crate::control::SdsController;
use crate::deconv::DeconvUnit;
use crate::error::{CoreError, CoreResult};
use crate::recon::ReconNet;

/// One level of the stack.
///
/// The coupling matrices describe the link to the level *below*: `U`
/// carries the lower reconstruction error (and with it the experienced
/// input speed) up into this level's input space, and `C` reads the lower
/// hidden rate in the same coordinates, so `C ḣ` stands in for `U ẋ`.
/// The optional modulation matrix lets this level's own hidden state
/// scale the carried signal componentwise.
#[derive(Debug, Clone)]
pub struct HierarchyLevel {
    pub net: ReconNet,
    pub controller: Option<SdsController>,
    pub coupling_u: Option<DMatrix<f64>>,
    pub coupling_c: Option<DMatrix<f64>>,
    pub modulation_v: Option<DMatrix<f64>>,
    /// Maps this level's desired speed field into the coordinates the
    /// controller works in. Identity when omitted and shapes allow.
    pub td_transform: Option<DMatrix<f64>>,
    /// Maps the top mismatch into the lower control input when the twist
    /// is enabled. Identity when omitted and shapes allow.
    pub twist_coupling: Option<DMatrix<f64>>,
    /// Strength of the default desired speed field `v(h) = -kappa h`.
    pub kappa: f64,
}

impl HierarchyLevel {
    /// The bottom of a stack: reads external input, is controlled from
    /// above, controls nothing itself.
    pub fn bottom(net: ReconNet) -> Self {
        HierarchyLevel {
            net,
            controller: None,
            coupling_u: None,
            coupling_c: None,
            modulation_v: None,
            td_transform: None,
            twist_coupling: None,
            kappa: 1.0,
        }
    }

    /// A level sitting on top of another, with the coupling matrices to
    /// the level below and the controller acting on it.
    pub fn stacked(
        net: ReconNet,
        controller: Option<SdsController>,
        coupling_u: DMatrix<f64>,
        coupling_c: DMatrix<f64>,
    ) -> Self {
        HierarchyLevel {
            net,
            controller,
            coupling_u: Some(coupling_u),
            coupling_c: Some(coupling_c),
            modulation_v: None,
            td_transform: None,
            twist_coupling: None,
            kappa: 1.0,
        }
    }

    pub fn with_modulation(mut self, v: DMatrix<f64>) -> Self {
        self.modulation_v = Some(v);
        self
    }

    pub fn with_td_transform(mut self, t: DMatrix<f64>) -> Self {
        self.td_transform = Some(t);
        self
    }

    pub fn with_twist_coupling(mut self, k: DMatrix<f64>) -> Self {
        self.twist_coupling = Some(k);
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }
}

/// State of one level after a sweep: hidden state, reconstruction error
/// against the input the level saw, and the control computed for it this
/// sweep (applied on the next one). Plain owned data, safe to hand to
/// logging or analysis running elsewhere.
#[derive(Debug, Clone)]
pub struct LevelSnapshot {
    pub level: usize,
    pub h: DVector<f64>,
    pub e: DVector<f64>,
    pub u: DVector<f64>,
}

/// Per-level outcome of the feedforward equivalence check.
#[derive(Debug, Clone)]
pub struct FeedforwardReport {
    pub level: usize,
    /// Distance of `QNW` from the identity for this level's net.
    pub tuning_distance: f64,
    /// Largest disagreement between the one-sweep and the fully relaxed
    /// hidden state over all probes.
    pub max_residual: f64,
    pub feedforward: bool,
}

/// A validated stack of levels.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    levels: Vec<HierarchyLevel>,
    top_twist: bool,
    controls_enabled: bool,
    /// Pending control input per level, computed by the last top-down pass.
    control_slots: Vec<DVector<f64>>,
    steps: usize,
}

fn pair(i: usize) -> String {
    format!("between levels {} and {}", i - 1, i)
}

/// Wire and validate a stack. At least two levels are required; every
/// non-bottom level must carry couplings whose shapes chain, and a
/// controller sized to its input space, except a twisted top, which
/// injects its own mismatch instead of running a controller.
pub fn build_hierarchy(
    levels: Vec<HierarchyLevel>,
    top_twist: bool,
) -> CoreResult<Hierarchy> {
    if levels.len() < 2 {
        return Err(CoreError::InvalidConfig(format!(
            "a hierarchy needs at least two levels, got {}",
            levels.len()
        )));
    }
    let last = levels.len() - 1;
    let mut levels = levels;
    for i in 0..levels.len() {
        let x_dim = levels[i].net.x_dim();
        let h_dim = levels[i].net.h_dim();
        if !(levels[i].kappa.is_finite() && levels[i].kappa >= 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "level {i}: speed-field strength must be finite and non-negative, got {}",
                levels[i].kappa
            )));
        }
        if i == 0 {
            if levels[i].controller.is_some() {
                return Err(CoreError::InvalidConfig(
                    "the bottom level has nothing below it to control".into(),
                ));
            }
            if levels[i].coupling_u.is_some() || levels[i].coupling_c.is_some() {
                return Err(CoreError::InvalidConfig(
                    "the bottom level has nothing below it to couple to".into(),
                ));
            }
            continue;
        }
        let below_x = levels[i - 1].net.x_dim();
        let below_h = levels[i - 1].net.h_dim();
        let below_v = levels[i - 1].net.v_dim();

        let u = levels[i].coupling_u.as_ref().ok_or_else(|| {
            CoreError::InvalidConfig(format!("missing error coupling {}", pair(i)))
        })?;
        if u.nrows() != x_dim || u.ncols() != below_x {
            return Err(CoreError::ShapeMismatch(format!(
                "error coupling {} must be {x_dim}x{below_x}, got {}x{}",
                pair(i),
                u.nrows(),
                u.ncols()
            )));
        }
        let c = levels[i].coupling_c.as_ref().ok_or_else(|| {
            CoreError::InvalidConfig(format!("missing speed identification {}", pair(i)))
        })?;
        if c.nrows() != x_dim || c.ncols() != below_h {
            return Err(CoreError::ShapeMismatch(format!(
                "speed identification {} must be {x_dim}x{below_h}, got {}x{}",
                pair(i),
                c.nrows(),
                c.ncols()
            )));
        }
        if c.is_square() && c.clone().lu().try_inverse().is_none() {
            return Err(CoreError::SingularMatrix(format!(
                "speed identification {}",
                pair(i)
            )));
        }
        if let Some(v) = &levels[i].modulation_v {
            if v.nrows() != x_dim || v.ncols() != h_dim {
                return Err(CoreError::ShapeMismatch(format!(
                    "level {i}: modulation must be {x_dim}x{h_dim}, got {}x{}",
                    v.nrows(),
                    v.ncols()
                )));
            }
        }

        let twisted_top = top_twist && i == last;
        if twisted_top {
            if levels[i].controller.is_some() {
                return Err(CoreError::InvalidConfig(
                    "a twisted top injects its own mismatch; it cannot also run a controller"
                        .into(),
                ));
            }
            // The twist carries the top mismatch (input-space) into the
            // control input of the level below.
            match &levels[i].twist_coupling {
                Some(k) => {
                    if k.nrows() != below_v || k.ncols() != x_dim {
                        return Err(CoreError::ShapeMismatch(format!(
                            "twist coupling {} must be {below_v}x{x_dim}, got {}x{}",
                            pair(i),
                            k.nrows(),
                            k.ncols()
                        )));
                    }
                }
                None => {
                    if below_v != x_dim {
                        return Err(CoreError::InvalidConfig(format!(
                            "twist coupling {} cannot default to identity: control input \
                             is {below_v}-dimensional, top mismatch is {x_dim}-dimensional",
                            pair(i)
                        )));
                    }
                    levels[i].twist_coupling = Some(DMatrix::identity(below_v, x_dim));
                }
            }
        } else {
            if levels[i].twist_coupling.is_some() {
                return Err(CoreError::InvalidConfig(format!(
                    "level {i}: a twist coupling is only meaningful at the top of a \
                     twisted hierarchy"
                )));
            }
            let ctrl = levels[i].controller.as_ref().ok_or_else(|| {
                CoreError::InvalidConfig(format!("level {i} needs a controller"))
            })?;
            if ctrl.phi().rows() != x_dim || ctrl.phi().cols() != x_dim {
                return Err(CoreError::ShapeMismatch(format!(
                    "level {i}: controller models must be {x_dim}x{x_dim}, got {}x{}",
                    ctrl.phi().rows(),
                    ctrl.phi().cols()
                )));
            }
            if below_v != x_dim {
                return Err(CoreError::ShapeMismatch(format!(
                    "control injection {}: lower level accepts {below_v}-dimensional \
                     control, controller produces {x_dim}",
                    pair(i)
                )));
            }
            match &levels[i].td_transform {
                Some(t) => {
                    if t.nrows() != x_dim || t.ncols() != h_dim {
                        return Err(CoreError::ShapeMismatch(format!(
                            "level {i}: desired-speed transform must be {x_dim}x{h_dim}, \
                             got {}x{}",
                            t.nrows(),
                            t.ncols()
                        )));
                    }
                }
                None => {
                    if x_dim != h_dim {
                        return Err(CoreError::InvalidConfig(format!(
                            "level {i}: desired-speed transform cannot default to identity \
                             with a {h_dim}-dimensional hidden state and {x_dim}-dimensional \
                             input space"
                        )));
                    }
                    levels[i].td_transform = Some(DMatrix::identity(x_dim, h_dim));
                }
            }
        }
    }
    let control_slots = levels
        .iter()
        .map(|l| DVector::zeros(l.net.v_dim()))
        .collect();
    Ok(Hierarchy {
        levels,
        top_twist,
        controls_enabled: true,
        control_slots,
        steps: 0,
    })
}

impl Hierarchy {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn top_twist(&self) -> bool {
        self.top_twist
    }

    pub fn level(&self, i: usize) -> &HierarchyLevel {
        &self.levels[i]
    }

    /// Mutable access for perturbation experiments. Shape changes are not
    /// re-validated here; a later sweep surfaces them as shape errors.
    pub fn level_mut(&mut self, i: usize) -> &mut HierarchyLevel {
        &mut self.levels[i]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Pending control input for a level, as computed by the last sweep.
    pub fn pending_control(&self, i: usize) -> &DVector<f64> {
        &self.control_slots[i]
    }

    /// Disable or re-enable the top-down pass. Disabling zeroes the pending
    /// controls, so the next sweeps run the stack open-loop; useful for
    /// paired on/off comparisons.
    pub fn set_controls_enabled(&mut self, enabled: bool) {
        self.controls_enabled = enabled;
        if !enabled {
            for slot in &mut self.control_slots {
                slot.fill(0.0);
            }
        }
    }

    /// Clear all hidden states, controller integrators, pending controls
    /// and the sweep counter.
    pub fn reset(&mut self) {
        for level in &mut self.levels {
            level.net.reset();
            if let Some(ctrl) = &mut level.controller {
                ctrl.reset();
            }
        }
        for slot in &mut self.control_slots {
            slot.fill(0.0);
        }
        self.steps = 0;
    }

    /// The mixing-coordinate analysis unit for the top level's loop. The
    /// structure is expensive, so it exists only here, built on demand from
    /// the top matrices.
    pub fn top_deconv(&self) -> CoreResult<DeconvUnit> {
        let top = self.levels.last().expect("validated: at least two levels");
        DeconvUnit::diagonalize(&top.net.w, &top.net.q)
    }

    /// One synchronous sweep.
    ///
    /// Bottom-up, every level relaxes one step against its input (external
    /// for the bottom, the carried lower error for the rest) and the
    /// control computed last sweep. Top-down, each controller then reads
    /// the freshly measured lower hidden rate through `C`, compares it with
    /// its level's desired speed field, and leaves the corrective drive in
    /// the slot the next sweep will apply; a twisted top leaves its own
    /// mismatch instead. Snapshots report the post-step state of every
    /// level along with the control just computed for it.
    ///
    /// Because the control acts one sweep late, a feedforward term built
    /// on the measured rate becomes delayed derivative feedback and
    /// excites a two-sweep oscillation regardless of the step size.
    /// Stacked controllers should therefore run integral-only (a zero
    /// feedforward model); the integrator scales the delayed rate by
    /// `dt * gain`, which keeps the loop contractive for moderate gains.
    pub fn step(&mut self, x: &DVector<f64>, dt: f64) -> CoreResult<Vec<LevelSnapshot>> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "sweep step must be positive, got {dt}"
            )));
        }
        let count = self.levels.len();
        let h_old: Vec<DVector<f64>> = self.levels.iter().map(|l| l.net.h.clone()).collect();
        let mut inputs: Vec<DVector<f64>> = Vec::with_capacity(count);

        // Bottom-up: errors propagate upward within the sweep, states
        // advance one step each.
        let mut x_i = x.clone();
        for i in 0..count {
            if x_i.len() != self.levels[i].net.x_dim() {
                return Err(CoreError::ShapeMismatch(format!(
                    "level {i} expects a {}-dimensional input, got {}",
                    self.levels[i].net.x_dim(),
                    x_i.len()
                )));
            }
            let e_pre = &x_i - self.levels[i].net.reconstruction();
            let slot = self.control_slots[i].clone();
            let level = &mut self.levels[i];
            level.net.step_extended(&x_i, &slot, dt).map_err(|err| {
                match err {
                    CoreError::RelaxationDiverged { step } => {
                        CoreError::LevelDiverged { level: i, step }
                    }
                    other => other,
                }
            })?;
            inputs.push(x_i.clone());
            if i + 1 < count {
                let up = &self.levels[i + 1];
                let carrier = up.coupling_u.as_ref().expect("validated: coupling present");
                let mut carried = carrier * &e_pre;
                if let Some(v) = &up.modulation_v {
                    let gains = v * &up.net.h;
                    carried.zip_apply(&gains, |c, g| *c *= 1.0 + g);
                }
                x_i = carried;
            }
        }

        // Top-down: compute the controls the next sweep will apply.
        if self.controls_enabled {
            for i in (1..count).rev() {
                let h_below = self.levels[i - 1].net.h.clone();
                let rate_below = (&h_below - &h_old[i - 1]) / dt;
                let u = if self.top_twist && i == count - 1 {
                    let mismatch = &inputs[i] - self.levels[i].net.reconstruction();
                    let k = self.levels[i]
                        .twist_coupling
                        .as_ref()
                        .expect("validated: twist coupling present");
                    k * mismatch
                } else {
                    let c = self.levels[i]
                        .coupling_c
                        .as_ref()
                        .expect("validated: coupling present");
                    let c_state = c * &h_below;
                    let experienced = c * &rate_below;
                    let t = self.levels[i]
                        .td_transform
                        .as_ref()
                        .expect("validated: transform present");
                    let desired = t * (&self.levels[i].net.h * (-self.levels[i].kappa));
                    let ctrl = self.levels[i]
                        .controller
                        .as_mut()
                        .expect("validated: controller present");
                    ctrl.feedback_step(&c_state, &experienced, &desired, dt)
                        .map_err(|err| match err {
                            CoreError::ControllerDiverged { t, reason } => {
                                CoreError::ControllerDiverged {
                                    t,
                                    reason: format!("level {i}: {reason}"),
                                }
                            }
                            other => other,
                        })?;
                    ctrl.control(&c_state, &experienced, &desired)
                };
                self.control_slots[i - 1] = u;
            }
        }
        self.steps += 1;

        Ok((0..count)
            .map(|i| LevelSnapshot {
                level: i,
                h: self.levels[i].net.h.clone(),
                e: &inputs[i] - self.levels[i].net.reconstruction(),
                u: self.control_slots[i].clone(),
            })
            .collect())
    }

    /// Compare one bottom-up sweep against full relaxation for every level
    /// in isolation.
    ///
    /// Each level is probed with the canonical basis of its input space
    /// plus any supplied probe whose dimension matches. A tuned level
    /// reproduces its relaxed hidden state in a single unit sweep; levels
    /// that need iteration beyond that are flagged with their residual.
    /// Never errs: a level whose relaxation cannot be evaluated is flagged
    /// with an infinite residual.
    pub fn verify_feedforward(
        &self,
        probes: &[DVector<f64>],
        tol: f64,
    ) -> Vec<FeedforwardReport> {
        self.levels
            .iter()
            .enumerate()
            .map(|(i, level)| {
                let x_dim = level.net.x_dim();
                let mut level_probes: Vec<DVector<f64>> = (0..x_dim)
                    .map(|k| {
                        let mut e = DVector::zeros(x_dim);
                        e[k] = 1.0;
                        e
                    })
                    .collect();
                level_probes.extend(probes.iter().filter(|p| p.len() == x_dim).cloned());
                let mut max_residual: f64 = 0.0;
                for probe in &level_probes {
                    let residual =
                        feedforward_residual(&level.net, probe).unwrap_or(f64::INFINITY);
                    max_residual = max_residual.max(residual);
                }
                FeedforwardReport {
                    level: i,
                    tuning_distance: level.net.is_tuned(f64::INFINITY).1,
                    max_residual,
                    feedforward: max_residual <= tol,
                }
            })
            .collect()
    }
}

/// Disagreement between one unit sweep and the fully settled hidden state
/// for a single probe input, or `None` when the settled state cannot be
/// obtained.
fn feedforward_residual(net: &ReconNet, probe: &DVector<f64>) -> Option<f64> {
    let v = DVector::zeros(net.v_dim());
    let mut one_sweep = net.clone();
    one_sweep.reset();
    one_sweep.step_extended(probe, &v, 1.0).ok()?;
    let h_fast = one_sweep.h.clone();

    let settled = match net.solve_equilibrium(probe, &v) {
        Ok(h) => h,
        Err(CoreError::InvalidConfig(_)) => {
            // Gated net: settle by iteration instead of a direct solve.
            let mut relaxed = net.clone();
            relaxed.reset();
            let mut h_prev = relaxed.h.clone();
            let mut converged = None;
            for _ in 0..20_000 {
                relaxed.step_extended(probe, &v, 0.25).ok()?;
                if (&relaxed.h - &h_prev).norm() < 1e-13 * (1.0 + relaxed.h.norm()) {
                    converged = Some(relaxed.h.clone());
                    break;
                }
                h_prev = relaxed.h.clone();
            }
            converged?
        }
        Err(_) => return None,
    };
    Some((h_fast - settled).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::AffineIdModel;

    fn tuned_net(dim: usize, v_dim: usize) -> ReconNet {
        ReconNet::extended(
            DMatrix::identity(dim, dim),
            DMatrix::identity(dim, dim),
            DMatrix::identity(dim, dim),
            DMatrix::zeros(dim, dim),
            DMatrix::zeros(dim, dim),
            if v_dim == 0 {
                DMatrix::zeros(dim, 0)
            } else {
                DMatrix::identity(dim, v_dim)
            },
            0.0,
            0.0,
        )
        .unwrap()
    }

    fn identity_controller(dim: usize, gain: f64) -> SdsController {
        let model = AffineIdModel::constant(DMatrix::identity(dim, dim), DVector::zeros(dim));
        SdsController::new(model.clone(), model, gain).unwrap()
    }

    fn integral_controller(dim: usize, gain: f64) -> SdsController {
        let model = AffineIdModel::constant(DMatrix::identity(dim, dim), DVector::zeros(dim));
        SdsController::feedback_only(model, gain).unwrap()
    }

    fn eye(dim: usize) -> DMatrix<f64> {
        DMatrix::identity(dim, dim)
    }

    /// Bottom + mid + top, all 2-dimensional, identity loops, negated
    /// error carry (upper levels encode the lower state), integral-only
    /// controllers on the upper levels.
    fn tuned_stack(gain: f64) -> Hierarchy {
        let bottom = HierarchyLevel::bottom(tuned_net(2, 2));
        let mid = HierarchyLevel::stacked(
            tuned_net(2, 2),
            Some(integral_controller(2, gain)),
            -eye(2),
            eye(2),
        );
        let top = HierarchyLevel::stacked(
            tuned_net(2, 0),
            Some(integral_controller(2, gain)),
            -eye(2),
            eye(2),
        );
        build_hierarchy(vec![bottom, mid, top], false).unwrap()
    }

    #[test]
    fn two_scalar_levels_build() {
        let bottom = HierarchyLevel::bottom(tuned_net(1, 1));
        let top = HierarchyLevel::stacked(
            tuned_net(1, 0),
            Some(identity_controller(1, 2.0)),
            eye(1),
            eye(1),
        );
        let hier = build_hierarchy(vec![bottom, top], false).unwrap();
        assert_eq!(hier.len(), 2);
        assert!(!hier.top_twist());
    }

    #[test]
    fn single_level_is_rejected() {
        let err = build_hierarchy(vec![HierarchyLevel::bottom(tuned_net(1, 0))], false)
            .unwrap_err();
        assert!(matches!(err, CoreError::InvalidConfig(_)));
    }

    #[test]
    fn mismatched_coupling_names_the_pair() {
        let bottom = HierarchyLevel::bottom(tuned_net(2, 2));
        let top = HierarchyLevel::stacked(
            tuned_net(2, 0),
            Some(identity_controller(2, 2.0)),
            DMatrix::identity(2, 3),
            eye(2),
        );
        let err = build_hierarchy(vec![bottom, top], false).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("between levels 0 and 1"),
            "error should name the pair: {msg}"
        );
    }

    #[test]
    fn bottom_level_cannot_carry_a_controller() {
        let mut bottom = HierarchyLevel::bottom(tuned_net(1, 1));
        bottom.controller = Some(identity_controller(1, 2.0));
        let top = HierarchyLevel::stacked(
            tuned_net(1, 0),
            Some(identity_controller(1, 2.0)),
            eye(1),
            eye(1),
        );
        let err = build_hierarchy(vec![bottom, top], false).unwrap_err();
        assert!(err.to_string().contains("bottom"));
    }

    #[test]
    fn twisted_top_wires_mismatch_to_the_level_below() {
        let bottom = HierarchyLevel::bottom(tuned_net(2, 2));
        let mid = HierarchyLevel::stacked(
            tuned_net(2, 2),
            Some(identity_controller(2, 2.0)),
            eye(2),
            eye(2),
        );
        // Detuned top so its mismatch is nonzero while input flows.
        let mut top_net = tuned_net(2, 0);
        top_net.q *= 0.5;
        let top = HierarchyLevel::stacked(top_net, None, eye(2), eye(2));
        let mut hier = build_hierarchy(vec![bottom, mid, top], true).unwrap();
        assert!(hier.top_twist());
        assert!(hier.level(2).controller.is_none());
        assert!(hier.level(2).twist_coupling.is_some());

        let x = DVector::from_vec(vec![1.0, -0.6]);
        for _ in 0..5 {
            let snaps = hier.step(&x, 0.05).unwrap();
            let carried =
                hier.level(2).twist_coupling.as_ref().unwrap() * &snaps[2].e;
            assert!(
                (&snaps[1].u - carried).norm() < 1e-14,
                "twist injection must equal the coupled top mismatch"
            );
        }
    }

    #[test]
    fn twisted_top_with_controller_is_rejected() {
        let bottom = HierarchyLevel::bottom(tuned_net(1, 1));
        let top = HierarchyLevel::stacked(
            tuned_net(1, 0),
            Some(identity_controller(1, 2.0)),
            eye(1),
            eye(1),
        );
        let err = build_hierarchy(vec![bottom, top], true).unwrap_err();
        assert!(err.to_string().contains("twist"));
    }

    #[test]
    fn zero_input_keeps_the_stack_at_rest() {
        let mut hier = tuned_stack(3.0);
        let x = DVector::zeros(2);
        for _ in 0..20 {
            let snaps = hier.step(&x, 0.05).unwrap();
            for snap in &snaps {
                assert_eq!(snap.h.norm(), 0.0);
                assert_eq!(snap.e.norm(), 0.0);
                assert_eq!(snap.u.norm(), 0.0);
            }
        }
    }

    #[test]
    fn tuned_stack_errors_vanish_after_the_transient() {
        let mut hier = tuned_stack(0.25);
        let x = DVector::from_vec(vec![0.9, -0.4]);
        let dt = 0.01;
        let steps = 10_000;
        let mut last_max_err = 0.0;
        for k in 0..steps {
            let snaps = hier.step(&x, dt).unwrap();
            if k == steps - 1 {
                last_max_err = snaps
                    .iter()
                    .map(|s| s.e.norm())
                    .fold(0.0_f64, f64::max);
            }
        }
        assert!(
            last_max_err < 1e-6,
            "errors should vanish in the tuned regime, got {last_max_err}"
        );
    }

    #[test]
    fn tuned_stack_is_feedforward_equivalent() {
        let hier = tuned_stack(2.0);
        let probes = vec![DVector::from_vec(vec![0.3, 0.7])];
        for report in hier.verify_feedforward(&probes, 1e-6) {
            assert!(report.tuning_distance < 1e-8);
            assert!(
                report.feedforward,
                "level {} residual {}",
                report.level, report.max_residual
            );
        }
    }

    #[test]
    fn detuned_level_is_flagged_alone() {
        let mut hier = tuned_stack(2.0);
        hier.level_mut(1).net.q *= 1.3;
        let reports = hier.verify_feedforward(&[], 1e-6);
        assert!(reports[0].feedforward);
        assert!(!reports[1].feedforward, "detuned level must be flagged");
        assert!(reports[1].max_residual > 1e-3);
        assert!(reports[2].feedforward);
    }

    #[test]
    fn diverging_level_is_tagged() {
        let mut hier = tuned_stack(2.0);
        // Flip the mid loop sign so its relaxation runs away. Controls
        // stay off: they would relay the blow-up into the bottom level's
        // integrator and the wrong level could cross the guard first.
        hier.set_controls_enabled(false);
        hier.level_mut(1).net.w *= -1.0;
        let x = DVector::from_vec(vec![5.0, 5.0]);
        let mut tagged = None;
        for _ in 0..100_000 {
            match hier.step(&x, 0.5) {
                Ok(_) => continue,
                Err(CoreError::LevelDiverged { level, .. }) => {
                    tagged = Some(level);
                    break;
                }
                Err(other) => panic!("unexpected error {other}"),
            }
        }
        assert_eq!(tagged, Some(1), "the unstable level should be named");
    }

    #[test]
    fn top_deconv_reflects_the_top_loop() {
        let hier = tuned_stack(2.0);
        let unit = hier.top_deconv().unwrap();
        let wq = unit.reconstruct_wq();
        assert!((wq - eye(2)).norm() < 1e-10);
    }

    #[test]
    fn controller_reduces_the_error_under_a_perturbed_dictionary() {
        // The mid dictionary is shrunken, so the mid loop rings down five
        // times slower than designed. The top level watches the leftover
        // error and its controller, armed with a proportionally stronger
        // speed field, pushes the mid state down at the design rate. The
        // paired run compares time-averaged mid-level error with the
        // controls on and off, starting from the same displaced state.
        let build = || {
            let bottom = HierarchyLevel::bottom(tuned_net(2, 2));
            let mut mid_net = tuned_net(2, 2);
            mid_net.q *= 0.2;
            let mid = HierarchyLevel::stacked(
                mid_net,
                Some(integral_controller(2, 4.0)),
                -eye(2),
                eye(2),
            )
            .with_kappa(0.0);
            let top = HierarchyLevel::stacked(
                tuned_net(2, 0),
                Some(integral_controller(2, 4.0)),
                -eye(2),
                eye(2),
            )
            .with_kappa(5.0);
            build_hierarchy(vec![bottom, mid, top], false).unwrap()
        };
        let displaced = DVector::from_vec(vec![3.0, -2.3]);
        let x = DVector::zeros(2);
        let dt = 0.01;
        let steps = 2000;

        let run = |enabled: bool| -> (f64, f64) {
            let mut hier = build();
            hier.set_controls_enabled(enabled);
            hier.level_mut(1).net.h = displaced.clone();
            let mut err_sum = 0.0;
            let mut u_sum = 0.0;
            for _ in 0..steps {
                let snaps = hier.step(&x, dt).unwrap();
                err_sum += snaps[1].e.norm();
                u_sum += snaps[1].u.norm();
            }
            (err_sum / steps as f64, u_sum / steps as f64)
        };

        let (err_on, u_on) = run(true);
        let (err_off, u_off) = run(false);
        assert_eq!(u_off, 0.0);
        assert!(u_on > 1e-3, "corrective signal should be nonzero");
        assert!(
            err_on < 0.6 * err_off,
            "control should reduce the mid-level error: on {err_on}, off {err_off}"
        );
    }
}
