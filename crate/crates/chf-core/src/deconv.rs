//! Temporal deconvolution through diagonal delay lines.
//!
//! The plain reconstruction loop low-pass filters its drive: in the
//! eigenbasis of the loop matrix `WQ` each coordinate is an independent
//! first-order filter. Diagonalizing `WQ` therefore turns the temporal
//! deconvolution problem into scalar ones that need nothing more than a
//! short delay line per component: estimate the derivative from recent
//! samples and add back the decay.
//!
//! Coordinates: the eigenbasis is stored with eigenvectors in the *rows* of
//! `U`, so the loop matrix factors as `WQ = Uᵀ Λ U` and the mixed
//! coordinates are `χ = U h`, `ξ = U W x`. In these coordinates
//! `χ̇ = ξ − Λ χ` componentwise. Note that with eigenvector columns the
//! same letters would read `U Λ Uᵀ` and `χ = Uᵀ h`; both appear in the
//! literature and only this pairing makes the mixing line and the
//! factorization consistent.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, CoreResult};
use crate::EIG_EPSILON;

/// Default number of samples each component's delay line retains. The
/// two-point difference needs two; the extra depth leaves room for
/// higher-order estimators without changing the wire format.
pub const DEFAULT_DELAY_DEPTH: usize = 8;

/// Diagonalized loop with per-component delay lines.
#[derive(Debug, Clone)]
pub struct DeconvUnit {
    u: DMatrix<f64>,
    lambda_diag: DVector<f64>,
    delay_buffers: Vec<VecDeque<f64>>,
    delay_depth: usize,
    asymmetry: f64,
}

impl DeconvUnit {
    /// Build a unit from an explicit orthogonal basis (eigenvectors in rows)
    /// and positive rates.
    pub fn new(u: DMatrix<f64>, lambda_diag: DVector<f64>) -> CoreResult<Self> {
        let dim = u.nrows();
        if u.ncols() != dim {
            return Err(CoreError::ShapeMismatch(format!(
                "eigenbasis must be square, got {}x{}",
                u.nrows(),
                u.ncols()
            )));
        }
        if lambda_diag.len() != dim {
            return Err(CoreError::ShapeMismatch(format!(
                "{} rates for a {dim}-dimensional basis",
                lambda_diag.len()
            )));
        }
        let residual = (&u * u.transpose() - DMatrix::<f64>::identity(dim, dim)).norm();
        if residual > 1e-8 {
            return Err(CoreError::InvalidConfig(format!(
                "basis is not orthogonal, ‖UUᵀ − I‖ = {residual:.3e}"
            )));
        }
        let min_rate = lambda_diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_rate <= 0.0 || min_rate.is_nan() {
            return Err(CoreError::NotPositiveDefinite { min_eig: min_rate });
        }
        Ok(DeconvUnit {
            delay_buffers: vec![VecDeque::with_capacity(DEFAULT_DELAY_DEPTH); dim],
            delay_depth: DEFAULT_DELAY_DEPTH,
            u,
            lambda_diag,
            asymmetry: 0.0,
        })
    }

    /// Diagonalize the loop matrix of a `W`, `Q` pair.
    ///
    /// The product is symmetrized first when it is not exactly symmetric;
    /// the size of the discarded asymmetric part is kept and reported by
    /// [`DeconvUnit::asymmetry`]. Eigenvalues are sorted ascending and each
    /// eigenvector's sign is fixed by its largest-magnitude entry, so the
    /// decomposition is deterministic.
    pub fn diagonalize(w: &DMatrix<f64>, q: &DMatrix<f64>) -> CoreResult<Self> {
        if w.ncols() != q.nrows() || w.nrows() != q.ncols() {
            return Err(CoreError::ShapeMismatch(format!(
                "bottom-up is {}x{} but top-down is {}x{}",
                w.nrows(),
                w.ncols(),
                q.nrows(),
                q.ncols()
            )));
        }
        let wq = w * q;
        let sym = (&wq + wq.transpose()) * 0.5;
        let asymmetry = (&wq - &sym).norm();
        let dim = sym.nrows();
        let eigen = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| {
            eigen.eigenvalues[a]
                .partial_cmp(&eigen.eigenvalues[b])
                .expect("symmetric eigenvalues are finite")
        });
        let min_eig = eigen.eigenvalues[order[0]];
        if min_eig <= EIG_EPSILON {
            return Err(CoreError::NotPositiveDefinite { min_eig });
        }
        let mut u = DMatrix::zeros(dim, dim);
        let mut lambda_diag = DVector::zeros(dim);
        for (row, &idx) in order.iter().enumerate() {
            lambda_diag[row] = eigen.eigenvalues[idx];
            let col = eigen.eigenvectors.column(idx);
            let lead = col.iter().cloned().fold(0.0_f64, |acc, c| {
                if c.abs() > acc.abs() {
                    c
                } else {
                    acc
                }
            });
            let sign = if lead < 0.0 { -1.0 } else { 1.0 };
            for j in 0..dim {
                u[(row, j)] = sign * col[j];
            }
        }
        let mut unit = DeconvUnit::new(u, lambda_diag)?;
        unit.asymmetry = asymmetry;
        Ok(unit)
    }

    pub fn dim(&self) -> usize {
        self.lambda_diag.len()
    }

    /// Eigenbasis, eigenvectors in rows.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn lambda_diag(&self) -> &DVector<f64> {
        &self.lambda_diag
    }

    /// Norm of the asymmetric part discarded during diagonalization.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    /// Loop matrix implied by the stored factors, `Uᵀ Λ U`.
    pub fn reconstruct_wq(&self) -> DMatrix<f64> {
        self.u.transpose() * DMatrix::from_diagonal(&self.lambda_diag) * &self.u
    }

    /// Samples currently held by each component's delay line.
    pub fn delay_usage(&self) -> Vec<usize> {
        self.delay_buffers.iter().map(|b| b.len()).collect()
    }

    /// Forget all buffered samples.
    pub fn clear_delays(&mut self) {
        for buf in &mut self.delay_buffers {
            buf.clear();
        }
    }

    fn check_dim(&self, len: usize, what: &str) -> CoreResult<()> {
        if len != self.dim() {
            return Err(CoreError::ShapeMismatch(format!(
                "{what} has {len} components, unit expects {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Forward model: run the source `ξ` through the componentwise
    /// first-order filters `χ̇ = ξ − Λχ`.
    ///
    /// The source is treated as constant over each sample interval, for
    /// which the filter has an exact update; the output starts from rest and
    /// has the same length as the input, sample `k` sitting at `t = k·dt`.
    pub fn convolve(&self, xi: &[DVector<f64>], dt: f64) -> CoreResult<Vec<DVector<f64>>> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "sample interval must be positive, got {dt}"
            )));
        }
        let dim = self.dim();
        let decay: Vec<f64> = self.lambda_diag.iter().map(|l| (-l * dt).exp()).collect();
        let gain: Vec<f64> = self
            .lambda_diag
            .iter()
            .zip(&decay)
            .map(|(l, a)| (1.0 - a) / l)
            .collect();
        let mut chi = DVector::zeros(dim);
        let mut out = Vec::with_capacity(xi.len());
        for (k, sample) in xi.iter().enumerate() {
            self.check_dim(sample.len(), "source sample")?;
            if k == 0 {
                out.push(chi.clone());
                continue;
            }
            let prev = &xi[k - 1];
            for i in 0..dim {
                chi[i] = decay[i] * chi[i] + gain[i] * prev[i];
            }
            out.push(chi.clone());
        }
        Ok(out)
    }

    /// Inverse model: recover the source from observed `χ` samples using the
    /// delay lines, `ξ̂ = χ̇ + Λχ` with a two-point backward difference. The
    /// decay term reads `χ` averaged over the same two samples: the
    /// difference estimates the derivative at the interval midpoint, and
    /// evaluating the decay there too cancels the half-sample bias that an
    /// endpoint evaluation would leave.
    ///
    /// Streaming: samples accumulate in the delay buffers across calls, and
    /// each sample after the first emits one estimate. The estimate emitted
    /// when `χ(t_{k+1})` arrives reconstructs the source over the preceding
    /// interval, so output `j` of a fresh unit aligns with input sample `j`
    /// of the forward model. A fresh unit fed fewer than two samples has
    /// nothing to difference and reports how many it still needs.
    pub fn deconvolve(
        &mut self,
        chi: &[DVector<f64>],
        dt: f64,
    ) -> CoreResult<Vec<DVector<f64>>> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "sample interval must be positive, got {dt}"
            )));
        }
        let dim = self.dim();
        let buffered = self.delay_buffers[0].len();
        if buffered + chi.len() < 2 {
            return Err(CoreError::NeedMoreSamples {
                needed: 2,
                have: buffered + chi.len(),
            });
        }
        let mut out = Vec::new();
        for sample in chi {
            self.check_dim(sample.len(), "observed sample")?;
            let mut ready = !self.delay_buffers[0].is_empty();
            let mut estimate = DVector::zeros(dim);
            for i in 0..dim {
                let buf = &mut self.delay_buffers[i];
                if let Some(&prev) = buf.back() {
                    estimate[i] = (sample[i] - prev) / dt
                        + self.lambda_diag[i] * 0.5 * (sample[i] + prev);
                } else {
                    ready = false;
                }
                buf.push_back(sample[i]);
                while buf.len() > self.delay_depth {
                    buf.pop_front();
                }
            }
            if ready {
                out.push(estimate);
            }
        }
        Ok(out)
    }

    /// Change to the decoupled coordinates: `χ = U h`, `ξ = U W x`.
    pub fn mix_coordinates(
        &self,
        h: &DVector<f64>,
        w: &DMatrix<f64>,
        x: &DVector<f64>,
    ) -> CoreResult<(DVector<f64>, DVector<f64>)> {
        self.check_dim(h.len(), "hidden state")?;
        self.check_dim(w.nrows(), "bottom-up output")?;
        if w.ncols() != x.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "bottom-up expects {} inputs, got {}",
                w.ncols(),
                x.len()
            )));
        }
        Ok((&self.u * h, &self.u * (w * x)))
    }

    /// Invert the coordinate change.
    pub fn unmix(&self, chi: &DVector<f64>) -> CoreResult<DVector<f64>> {
        self.check_dim(chi.len(), "mixed vector")?;
        Ok(self.u.transpose() * chi)
    }
}
