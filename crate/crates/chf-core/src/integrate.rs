//! Fixed-step integrators shared by the simulation modules.
//!
//! Everything in this crate integrates with a fixed step so that runs are
//! bit-reproducible. The classical fourth-order Runge-Kutta scheme is the
//! default; explicit Euler is available where a contract calls for it or
//! where the right-hand side is non-smooth anyway.

use nalgebra::DVector;

/// Which fixed-step scheme to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

/// One explicit Euler step of `y' = f(t, y)`.
pub fn euler_step<F>(f: F, t: f64, y: &DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    y + f(t, y) * dt
}

/// One classical Runge-Kutta step of `y' = f(t, y)`.
pub fn rk4_step<F>(f: F, t: f64, y: &DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let half = 0.5 * dt;
    let k1 = f(t, y);
    let k2 = f(t + half, &(y + &k1 * half));
    let k3 = f(t + half, &(y + &k2 * half));
    let k4 = f(t + dt, &(y + &k3 * dt));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

impl Integrator {
    /// One step of the selected scheme.
    pub fn step<F>(self, f: F, t: f64, y: &DVector<f64>, dt: f64) -> DVector<f64>
    where
        F: Fn(f64, &DVector<f64>) -> DVector<f64>,
    {
        match self {
            Integrator::Rk4 => rk4_step(f, t, y, dt),
            Integrator::Euler => euler_step(f, t, y, dt),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rk4_matches_exponential_decay() {
        let f = |_t: f64, y: &DVector<f64>| -y;
        let mut y = DVector::from_element(1, 1.0);
        let dt = 1e-3;
        for k in 0..1000 {
            y = rk4_step(f, k as f64 * dt, &y, dt);
        }
        assert_relative_eq!(y[0], (-1.0f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn euler_is_first_order() {
        let f = |_t: f64, y: &DVector<f64>| -y;
        let run = |dt: f64| {
            let mut y = DVector::from_element(1, 1.0);
            let n = (1.0 / dt).round() as usize;
            for k in 0..n {
                y = euler_step(f, k as f64 * dt, &y, dt);
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let e1 = run(1e-2);
        let e2 = run(5e-3);
        let ratio = e1 / e2;
        assert!(ratio > 1.8 && ratio < 2.2, "ratio {ratio}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        let f = |t: f64, _y: &DVector<f64>| DVector::from_element(1, t.cos());
        let run = |dt: f64| {
            let mut y = DVector::from_element(1, 0.0);
            let n = (1.0 / dt).round() as usize;
            for k in 0..n {
                y = rk4_step(f, k as f64 * dt, &y, dt);
            }
            (y[0] - 1.0f64.sin()).abs()
        };
        let e1 = run(2e-2);
        let e2 = run(1e-2);
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }
}
