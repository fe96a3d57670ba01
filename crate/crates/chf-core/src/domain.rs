//! Axis-aligned box domains.
//!
//! Positive-definiteness conditions and boundedness claims only hold over a
//! compact operating region, so every plant carries one of these. Simulations
//! are allowed to overshoot the box by a configurable relative margin before
//! they are declared out of domain.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{CoreError, CoreResult};

/// Relative margin by which trajectories may leave the box before a
/// domain-exit error is raised.
pub const DEFAULT_EXIT_MARGIN: f64 = 0.1;

/// An axis-aligned box `[lo_1, hi_1] x ... x [lo_n, hi_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl AxisBox {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> CoreResult<Self> {
        if lo.len() != hi.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l >= h) {
            return Err(CoreError::InvalidConfig(
                "box lower bound must be strictly below upper bound in every axis".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    /// A centred cube `[-half, half]^dim`.
    pub fn centred(dim: usize, half: f64) -> Self {
        Self {
            lo: DVector::from_element(dim, -half),
            hi: DVector::from_element(dim, half),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }

    /// The box grown by `margin` times its half-width in every axis.
    pub fn inflate(&self, margin: f64) -> Self {
        let span = (&self.hi - &self.lo) * (0.5 * margin);
        Self {
            lo: &self.lo - &span,
            hi: &self.hi + &span,
        }
    }

    /// True if `x` lies inside the box inflated by the default exit margin.
    pub fn within_exit_margin(&self, x: &DVector<f64>) -> bool {
        self.inflate(DEFAULT_EXIT_MARGIN).contains(x)
    }

    /// A regular grid with `per_axis` points per axis (including endpoints).
    ///
    /// The number of samples grows as `per_axis^dim`; intended for the small
    /// dimensions this crate works at.
    pub fn grid(&self, per_axis: usize) -> Vec<DVector<f64>> {
        assert!(per_axis >= 2, "need at least the two endpoints per axis");
        let dim = self.dim();
        let total = per_axis.pow(dim as u32);
        let mut points = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut x = DVector::zeros(dim);
            for i in 0..dim {
                let idx = rem % per_axis;
                rem /= per_axis;
                let frac = idx as f64 / (per_axis - 1) as f64;
                x[i] = self.lo[i] + frac * (self.hi[i] - self.lo[i]);
            }
            points.push(x);
        }
        points
    }

    /// `count` points drawn uniformly from the box.
    pub fn sample_uniform<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<DVector<f64>> {
        (0..count)
            .map(|_| {
                DVector::from_fn(self.dim(), |i, _| rng.gen_range(self.lo[i]..self.hi[i]))
            })
            .collect()
    }

    pub fn centre(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn contains_and_margin() {
        let b = AxisBox::centred(2, 1.0);
        assert!(b.contains(&DVector::from_vec(vec![0.5, -0.5])));
        assert!(!b.contains(&DVector::from_vec(vec![1.05, 0.0])));
        assert!(b.within_exit_margin(&DVector::from_vec(vec![1.05, 0.0])));
        assert!(!b.within_exit_margin(&DVector::from_vec(vec![1.2, 0.0])));
    }

    #[test]
    fn grid_covers_corners() {
        let b = AxisBox::new(
            DVector::from_vec(vec![0.0, -1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        let g = b.grid(3);
        assert_eq!(g.len(), 9);
        assert!(g.iter().any(|p| p[0] == 0.0 && p[1] == -1.0));
        assert!(g.iter().any(|p| p[0] == 1.0 && p[1] == 1.0));
    }

    #[test]
    fn samples_stay_inside() {
        let b = AxisBox::centred(3, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in b.sample_uniform(100, &mut rng) {
            assert!(b.contains(&p));
        }
    }

    #[test]
    fn degenerate_box_rejected() {
        let r = AxisBox::new(
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.0]),
        );
        assert!(r.is_err());
    }
}
