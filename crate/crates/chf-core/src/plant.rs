//! Plants: controllable dynamical systems `x' = f(x, u)`.
//!
//! Every plant also carries the affine form of its inverse dynamics,
//!
//! ```text
//! u = B(x) x' + b(x)
//! ```
//!
//! which is what the controller's model estimates. The two descriptions are
//! required to be mutually consistent: feeding `inverse_dynamics(x, xdot)`
//! back through `dynamics` must reproduce `xdot`.
//!
//! Higher-order systems `d^n q / dt^n = f(q, q', ..., q^(n-1))` are handled
//! by order reduction: stacking the configuration and its first `n - 1`
//! derivatives into one first-order state. The reduced plant accepts a
//! control that forces the highest derivative block, so the same first-order
//! control scheme applies to plants of any order.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::domain::AxisBox;
use crate::error::{CoreError, CoreResult};
use crate::integrate::Integrator;
use crate::BLOW_UP_NORM;

type DynamicsFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type MatrixField = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type VectorField = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type DerivativeStackFn = dyn Fn(&[DVector<f64>]) -> DVector<f64> + Send + Sync;

/// A first-order plant with affine inverse dynamics over a box domain.
#[derive(Clone)]
pub struct Plant {
    state_dim: usize,
    control_dim: usize,
    dynamics: Arc<DynamicsFn>,
    b_matrix: Arc<MatrixField>,
    b_offset: Arc<VectorField>,
    domain: AxisBox,
}

impl std::fmt::Debug for Plant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Plant")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl Plant {
    /// Builds a plant from an explicit dynamics map and the matching affine
    /// inverse-dynamics fields.
    pub fn new(
        state_dim: usize,
        control_dim: usize,
        dynamics: Arc<DynamicsFn>,
        b_matrix: Arc<MatrixField>,
        b_offset: Arc<VectorField>,
        domain: AxisBox,
    ) -> CoreResult<Self> {
        if domain.dim() != state_dim {
            return Err(CoreError::ShapeMismatch(format!(
                "domain dimension {} does not match state dimension {}",
                domain.dim(),
                state_dim
            )));
        }
        let plant = Self {
            state_dim,
            control_dim,
            dynamics,
            b_matrix,
            b_offset,
            domain,
        };
        plant.check_fields_at(&plant.domain.centre())?;
        Ok(plant)
    }

    /// Builds a plant from the affine inverse dynamics alone.
    ///
    /// Requires `B(x)` square and invertible on the domain; the forward
    /// dynamics solve `B(x) x' = u - b(x)` at every evaluation.
    pub fn from_inverse_dynamics(
        state_dim: usize,
        b_matrix: Arc<MatrixField>,
        b_offset: Arc<VectorField>,
        domain: AxisBox,
    ) -> CoreResult<Self> {
        let bm = Arc::clone(&b_matrix);
        let bo = Arc::clone(&b_offset);
        let dynamics: Arc<DynamicsFn> = Arc::new(move |x, u| {
            let rhs = u - bo(x);
            bm(x)
                .lu()
                .solve(&rhs)
                .unwrap_or_else(|| DVector::from_element(rhs.len(), f64::NAN))
        });
        Self::new(state_dim, state_dim, dynamics, b_matrix, b_offset, domain)
    }

    fn check_fields_at(&self, x: &DVector<f64>) -> CoreResult<()> {
        let b = (self.b_matrix)(x);
        if b.nrows() != self.control_dim || b.ncols() != self.state_dim {
            return Err(CoreError::ShapeMismatch(format!(
                "B(x) is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                self.control_dim,
                self.state_dim
            )));
        }
        let off = (self.b_offset)(x);
        if off.len() != self.control_dim {
            return Err(CoreError::ShapeMismatch(format!(
                "b(x) has length {}, expected {}",
                off.len(),
                self.control_dim
            )));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn domain(&self) -> &AxisBox {
        &self.domain
    }

    /// `x' = f(x, u)`.
    pub fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.dynamics)(x, u)
    }

    /// `B(x)`.
    pub fn b_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.b_matrix)(x)
    }

    /// `b(x)`.
    pub fn b_offset(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.b_offset)(x)
    }

    /// The control that realises momentum `xdot` at state `x`:
    /// `u = B(x) xdot + b(x)`.
    pub fn inverse_dynamics(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> CoreResult<DVector<f64>> {
        if xdot.len() != self.state_dim {
            return Err(CoreError::ShapeMismatch(format!(
                "xdot has length {}, expected {}",
                xdot.len(),
                self.state_dim
            )));
        }
        Ok(self.b_matrix(x) * xdot + self.b_offset(x))
    }

    /// Advances the state one step under a control held constant over the step.
    ///
    /// Errors if the result is non-finite, crosses the blow-up norm, or
    /// leaves the domain beyond its exit margin.
    pub fn step(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        t: f64,
        dt: f64,
        method: Integrator,
    ) -> CoreResult<DVector<f64>> {
        if x.len() != self.state_dim {
            return Err(CoreError::ShapeMismatch(format!(
                "state has length {}, expected {}",
                x.len(),
                self.state_dim
            )));
        }
        if u.len() != self.control_dim {
            return Err(CoreError::ShapeMismatch(format!(
                "control has length {}, expected {}",
                u.len(),
                self.control_dim
            )));
        }
        let next = method.step(|_t, y| self.dynamics(y, u), t, x, dt);
        let t_next = t + dt;
        if !next.iter().all(|v| v.is_finite()) || next.norm() > BLOW_UP_NORM {
            return Err(CoreError::IntegrationDiverged { t: t_next });
        }
        if !self.domain.within_exit_margin(&next) {
            return Err(CoreError::DomainExit { t: t_next });
        }
        Ok(next)
    }

    /// Integrates the plant under a state-feedback control law, returning the
    /// sampled trajectory `[(t_0, x_0), (t_1, x_1), ...]`.
    pub fn simulate<F>(
        &self,
        x0: DVector<f64>,
        control: F,
        t_final: f64,
        dt: f64,
        method: Integrator,
    ) -> CoreResult<Vec<(f64, DVector<f64>)>>
    where
        F: Fn(f64, &DVector<f64>) -> DVector<f64>,
    {
        let steps = (t_final / dt).round() as usize;
        let mut out = Vec::with_capacity(steps + 1);
        let mut x = x0;
        let mut t = 0.0;
        out.push((t, x.clone()));
        for _ in 0..steps {
            let u = control(t, &x);
            x = self.step(&x, &u, t, dt, method)?;
            t += dt;
            out.push((t, x.clone()));
        }
        Ok(out)
    }
}

/// A desired-momentum field `v(x)`: the task description the controller
/// tracks, with no time parametrisation of its own.
#[derive(Clone)]
pub struct SpeedField {
    field: Arc<VectorField>,
}

impl std::fmt::Debug for SpeedField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SpeedField { .. }")
    }
}

impl SpeedField {
    pub fn new(field: Arc<VectorField>) -> Self {
        Self { field }
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::new(Arc::new(f))
    }

    /// `v(x) = -kappa x`: exponential approach to the origin.
    pub fn linear_decay(kappa: f64) -> Self {
        Self::from_fn(move |x| x * -kappa)
    }

    /// `v(x) = gain (target - x)`: exponential approach to a target point.
    pub fn to_target(target: DVector<f64>, gain: f64) -> Self {
        Self::from_fn(move |x| (&target - x) * gain)
    }

    /// A constant field.
    pub fn constant(v: DVector<f64>) -> Self {
        Self::from_fn(move |_| v.clone())
    }

    /// A planar circulation with a soft radial attractor at radius
    /// `radius`: orbits persist instead of collapsing to a fixed point, so
    /// tracking error statistics have a stationary regime to settle into.
    pub fn planar_orbit(omega: f64, radius: f64, radial_gain: f64) -> Self {
        Self::from_fn(move |x| {
            assert_eq!(x.len(), 2, "planar_orbit is a 2-d field");
            let r2 = x.norm_squared();
            let shrink = radial_gain * (r2 - radius * radius);
            DVector::from_vec(vec![
                -omega * x[1] - shrink * x[0],
                omega * x[0] - shrink * x[1],
            ])
        })
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.field)(x)
    }

    /// Maximum of `|v|` over a grid sample of the domain; a cheap bound used
    /// to sanity-check the boundedness assumptions.
    pub fn max_norm_on_grid(&self, domain: &AxisBox, per_axis: usize) -> f64 {
        domain
            .grid(per_axis)
            .iter()
            .map(|x| self.eval(x).norm())
            .fold(0.0, f64::max)
    }
}

/// A system described by its highest derivative:
/// `d^n q / dt^n = rhs(q, q', ..., q^(n-1))`.
///
/// `rhs` receives the derivative blocks ordered from `q` upward.
#[derive(Clone)]
pub struct HigherOrderSystem {
    order: usize,
    config_dim: usize,
    rhs: Arc<DerivativeStackFn>,
}

impl std::fmt::Debug for HigherOrderSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HigherOrderSystem")
            .field("order", &self.order)
            .field("config_dim", &self.config_dim)
            .finish_non_exhaustive()
    }
}

impl HigherOrderSystem {
    pub fn new<F>(order: usize, config_dim: usize, rhs: F) -> CoreResult<Self>
    where
        F: Fn(&[DVector<f64>]) -> DVector<f64> + Send + Sync + 'static,
    {
        if order == 0 {
            return Err(CoreError::InvalidOrder);
        }
        Ok(Self {
            order,
            config_dim,
            rhs: Arc::new(rhs),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn config_dim(&self) -> usize {
        self.config_dim
    }

    /// Rewrites the system as a first-order plant on the stacked state
    /// `z = (q, q', ..., q^(n-1))`.
    ///
    /// The chain blocks copy the next derivative (`z_k' = z_{k+1}`) and the
    /// top block obeys `z_n' = rhs(z) + u`, so the control acts on the
    /// highest derivative. The affine inverse-dynamics fields select that
    /// block: `B(z) = [0 ... 0 I]` and `b(z) = -rhs(z)`. Pass `u = 0` for the
    /// autonomous system.
    pub fn reduce_order(&self, domain: AxisBox) -> CoreResult<Plant> {
        let n = self.order;
        let d = self.config_dim;
        let state_dim = n * d;
        if domain.dim() != state_dim {
            return Err(CoreError::ShapeMismatch(format!(
                "domain dimension {} does not match reduced state dimension {}",
                domain.dim(),
                state_dim
            )));
        }

        let split = move |z: &DVector<f64>| -> Vec<DVector<f64>> {
            (0..n).map(|k| z.rows(k * d, d).into_owned()).collect()
        };

        let rhs = Arc::clone(&self.rhs);
        let dynamics: Arc<DynamicsFn> = Arc::new(move |z, u| {
            let blocks = split(z);
            let mut zdot = DVector::zeros(n * d);
            for k in 0..n - 1 {
                zdot.rows_mut(k * d, d).copy_from(&blocks[k + 1]);
            }
            let top = rhs(&blocks) + u;
            zdot.rows_mut((n - 1) * d, d).copy_from(&top);
            zdot
        });

        let b_matrix: Arc<MatrixField> = Arc::new(move |_z| {
            let mut b = DMatrix::zeros(d, n * d);
            for i in 0..d {
                b[(i, (n - 1) * d + i)] = 1.0;
            }
            b
        });

        let rhs2 = Arc::clone(&self.rhs);
        let b_offset: Arc<VectorField> = Arc::new(move |z| {
            let blocks = split(z);
            -rhs2(&blocks)
        });

        Plant::new(state_dim, d, dynamics, b_matrix, b_offset, domain)
    }
}

/// Convenience constructors for plants used across the tests and benchmarks.
pub mod families {
    use super::*;

    /// `u = B x' + b` with constant `B` (square, invertible) and constant `b`.
    pub fn linear(b: DMatrix<f64>, offset: DVector<f64>, domain: AxisBox) -> CoreResult<Plant> {
        let n = b.nrows();
        if b.ncols() != n || offset.len() != n {
            return Err(CoreError::ShapeMismatch(
                "linear plant needs square B and matching offset".into(),
            ));
        }
        Plant::from_inverse_dynamics(
            n,
            Arc::new(move |_| b.clone()),
            Arc::new(move |_| offset.clone()),
            domain,
        )
    }

    /// The unit plant `x' = u` (`B = I`, `b = 0`).
    pub fn unit(dim: usize, domain: AxisBox) -> CoreResult<Plant> {
        linear(
            DMatrix::identity(dim, dim),
            DVector::zeros(dim),
            domain,
        )
    }

    /// Constant `B` with a componentwise polynomial offset
    /// `b_i(x) = sum_k coeffs[i][k] * x_i^k`.
    pub fn polynomial_offset(
        b: DMatrix<f64>,
        coeffs: Vec<Vec<f64>>,
        domain: AxisBox,
    ) -> CoreResult<Plant> {
        let n = b.nrows();
        if b.ncols() != n || coeffs.len() != n {
            return Err(CoreError::ShapeMismatch(
                "polynomial plant needs square B and one coefficient row per axis".into(),
            ));
        }
        let offset: Arc<VectorField> = Arc::new(move |x| {
            DVector::from_fn(coeffs.len(), |i, _| {
                coeffs[i]
                    .iter()
                    .rev()
                    .fold(0.0, |acc, &c| acc * x[i] + c)
            })
        });
        Plant::from_inverse_dynamics(n, Arc::new(move |_| b.clone()), offset, domain)
    }

    /// `q'' = -omega^2 q + u`, reduced to first order on `(q, q')`.
    pub fn harmonic_oscillator(omega: f64, domain: AxisBox) -> CoreResult<Plant> {
        let sys = HigherOrderSystem::new(2, 1, move |blocks| &blocks[0] * -(omega * omega))?;
        sys.reduce_order(domain)
    }

    /// A two-joint arm analogue whose inertia matrix varies with
    /// configuration and whose offset is a gravity-like term. `B(x)` stays
    /// uniformly positive definite for `coupling^2 < base^2`.
    pub fn mass_varying_arm(
        base: f64,
        variation: f64,
        coupling: f64,
        gravity: f64,
        domain: AxisBox,
    ) -> CoreResult<Plant> {
        if domain.dim() != 2 {
            return Err(CoreError::ShapeMismatch(
                "mass-varying arm is a 2-d plant".into(),
            ));
        }
        if base <= variation.abs() + coupling.abs() {
            return Err(CoreError::InvalidConfig(
                "arm inertia must dominate its variation and coupling".into(),
            ));
        }
        let b_matrix: Arc<MatrixField> = Arc::new(move |x: &DVector<f64>| {
            let m11 = base + variation * x[1].sin().powi(2);
            let m22 = base + variation * x[0].cos().powi(2);
            DMatrix::from_row_slice(2, 2, &[m11, coupling, coupling, m22])
        });
        let b_offset: Arc<VectorField> =
            Arc::new(move |x: &DVector<f64>| DVector::from_vec(vec![
                gravity * x[0].sin(),
                gravity * x[1].sin(),
            ]));
        Plant::from_inverse_dynamics(2, b_matrix, b_offset, domain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn big_box(dim: usize) -> AxisBox {
        AxisBox::centred(dim, 10.0)
    }

    #[test]
    fn decay_reaches_inverse_e() {
        // x' = -x + u from x = 1 with u = 0: x(1) = exp(-1).
        let plant = Plant::new(
            1,
            1,
            Arc::new(|x: &DVector<f64>, u: &DVector<f64>| -x + u),
            Arc::new(|_x: &DVector<f64>| DMatrix::identity(1, 1)),
            Arc::new(|x: &DVector<f64>| x.clone()),
            big_box(1),
        )
        .unwrap();
        let mut x = DVector::from_element(1, 1.0);
        let dt = 1e-3;
        for k in 0..1000 {
            x = plant
                .step(&x, &DVector::zeros(1), k as f64 * dt, dt, Integrator::Rk4)
                .unwrap();
        }
        assert_relative_eq!(x[0], (-1.0f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn euler_selectable_and_less_accurate() {
        let plant = families::unit(1, big_box(1)).unwrap();
        let u = DVector::from_element(1, 1.0);
        let x = DVector::zeros(1);
        // For x' = u constant both schemes are exact; check they agree.
        let a = plant.step(&x, &u, 0.0, 0.1, Integrator::Euler).unwrap();
        let b = plant.step(&x, &u, 0.0, 0.1, Integrator::Rk4).unwrap();
        assert_relative_eq!(a[0], b[0], epsilon = 1e-15);
    }

    #[test]
    fn inverse_dynamics_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            use rand::Rng;
            // Random diagonally dominant B plus a polynomial offset.
            let n = 3;
            let mut b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.3..0.3));
            for i in 0..n {
                b[(i, i)] += 2.0;
            }
            let plant = families::polynomial_offset(
                b,
                vec![vec![0.4, -0.2, 0.1], vec![-1.0, 0.5], vec![0.0, 0.0, 0.0, 0.3]],
                big_box(3),
            )
            .unwrap();
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let xdot = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let u = plant.inverse_dynamics(&x, &xdot).unwrap();
            let back = plant.dynamics(&x, &u);
            assert_relative_eq!((back - &xdot).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn domain_exit_detected() {
        let plant = families::unit(1, AxisBox::centred(1, 1.0)).unwrap();
        let u = DVector::from_element(1, 5.0);
        let mut x = DVector::zeros(1);
        let mut exited = false;
        for k in 0..100 {
            match plant.step(&x, &u, k as f64 * 0.01, 0.01, Integrator::Rk4) {
                Ok(next) => x = next,
                Err(CoreError::DomainExit { .. }) => {
                    exited = true;
                    break;
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(exited);
        // The margin allows 10% overshoot, so the state got past 1.0 first.
        assert!(x[0] > 1.0);
    }

    #[test]
    fn reduced_oscillator_matches_cosine() {
        let plant = families::harmonic_oscillator(1.0, big_box(2)).unwrap();
        let dt = std::f64::consts::PI / 3000.0;
        let traj = plant
            .simulate(
                DVector::from_vec(vec![1.0, 0.0]),
                |_, _| DVector::zeros(1),
                std::f64::consts::PI,
                dt,
                Integrator::Rk4,
            )
            .unwrap();
        let (t_end, x_end) = traj.last().unwrap();
        assert_relative_eq!(*t_end, std::f64::consts::PI, epsilon = 1e-9);
        assert_relative_eq!(x_end[0], -1.0, epsilon = 1e-4);
        assert_relative_eq!(x_end[1], 0.0, epsilon = 1e-4);
    }

    #[test]
    fn order_one_reduction_is_identity() {
        let sys = HigherOrderSystem::new(1, 2, |blocks| blocks[0].clone() * -0.5).unwrap();
        let plant = sys.reduce_order(big_box(2)).unwrap();
        assert_eq!(plant.state_dim(), 2);
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let got = plant.dynamics(&x, &DVector::zeros(2));
        assert_relative_eq!((got - &x * -0.5).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn triple_integrator_cubic() {
        // q''' = 0 with q(0)=0, q'(0)=0, q''(0)=2: q(t) = t^2.
        let sys = HigherOrderSystem::new(3, 1, |_| DVector::zeros(1)).unwrap();
        let plant = sys.reduce_order(AxisBox::centred(3, 50.0)).unwrap();
        let traj = plant
            .simulate(
                DVector::from_vec(vec![0.0, 0.0, 2.0]),
                |_, _| DVector::zeros(1),
                2.0,
                1e-3,
                Integrator::Rk4,
            )
            .unwrap();
        let (_, z) = traj.last().unwrap();
        assert_relative_eq!(z[0], 4.0, epsilon = 1e-8);
        assert_relative_eq!(z[1], 4.0, epsilon = 1e-8);
        assert_relative_eq!(z[2], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_order_rejected() {
        assert!(matches!(
            HigherOrderSystem::new(0, 1, |_| DVector::zeros(1)),
            Err(CoreError::InvalidOrder)
        ));
    }

    #[test]
    fn reduced_plant_inverse_dynamics_selects_top_block() {
        let sys = HigherOrderSystem::new(2, 1, |blocks| &blocks[0] * -1.0).unwrap();
        let plant = sys.reduce_order(big_box(2)).unwrap();
        let z = DVector::from_vec(vec![0.5, 0.2]);
        // Want acceleration 3.0 at this state: u = 3.0 - rhs = 3.0 + 0.5.
        let zdot = DVector::from_vec(vec![0.2, 3.0]);
        let u = plant.inverse_dynamics(&z, &zdot).unwrap();
        assert_relative_eq!(u[0], 3.5, epsilon = 1e-12);
        let forward = plant.dynamics(&z, &u);
        assert_relative_eq!(forward[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn mass_varying_arm_is_consistent() {
        let plant =
            families::mass_varying_arm(2.0, 0.5, 0.3, 0.4, AxisBox::centred(2, 3.0)).unwrap();
        let x = DVector::from_vec(vec![0.7, -1.1]);
        let xdot = DVector::from_vec(vec![0.3, 0.9]);
        let u = plant.inverse_dynamics(&x, &xdot).unwrap();
        let back = plant.dynamics(&x, &u);
        assert_relative_eq!((back - xdot).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn speed_field_constructors() {
        let v = SpeedField::linear_decay(2.0);
        let x = DVector::from_vec(vec![1.0, -1.0]);
        assert_relative_eq!((v.eval(&x) + &x * 2.0).norm(), 0.0, epsilon = 1e-14);

        let tgt = SpeedField::to_target(DVector::from_vec(vec![1.0, 1.0]), 0.5);
        assert_relative_eq!(tgt.eval(&x)[1], 1.0, epsilon = 1e-14);

        let orbit = SpeedField::planar_orbit(1.0, 1.0, 0.2);
        let on_circle = DVector::from_vec(vec![1.0, 0.0]);
        let vv = orbit.eval(&on_circle);
        // On the attractor circle the field is pure rotation.
        assert_relative_eq!(vv[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(vv[1], 1.0, epsilon = 1e-14);

        let bound = orbit.max_norm_on_grid(&AxisBox::centred(2, 2.0), 5);
        assert!(bound.is_finite() && bound > 0.0);
    }
}
