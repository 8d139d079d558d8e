//! Fisher-information blocks built directly from the vectorized snapshot
//! likelihood, plus the Schur-complement CRB path used as the verification
//! oracle for the closed form.
//!
//! `vec(Y)` is complex Gaussian with mean `μ = (Sᵀ ⊗ I_N)·vec(A)` and
//! covariance `σ²·I_NT`. The unknowns are `ω = (u_1..u_K, v_1..v_K)` and the
//! 2KT-dimensional real/imaginary signal nuisance vector ζ. The stored blocks
//! are the raw `Re{DᴴD}` matrices; the full FIM carries the `2/σ²` prefactor.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{derivative_matrices, steering_matrix, ArrayGeometry, TargetSet};

use super::projector_complement;

/// Raw FIM blocks and the complex Jacobians they come from.
#[derive(Debug, Clone)]
pub struct FimBlocks {
    /// Re{D_ωᴴ D_ω}, 2K×2K.
    pub f11: DMatrix<f64>,
    /// Re{D_ωᴴ D_ζ}, 2K×2KT.
    pub f12: DMatrix<f64>,
    /// Re{D_ζᴴ D_ω}, 2KT×2K.
    pub f21: DMatrix<f64>,
    /// Re{D_ζᴴ D_ζ}, 2KT×2KT.
    pub f22: DMatrix<f64>,
    /// Mean Jacobian w.r.t. the angle vector, NT×2K.
    pub d_omega: DMatrix<Complex64>,
    /// Mean Jacobian w.r.t. the signal nuisance vector, NT×2KT.
    pub d_zeta: DMatrix<Complex64>,
    /// Ȧ_u, N×K.
    pub deriv_u: DMatrix<Complex64>,
    /// Ȧ_v, N×K.
    pub deriv_v: DMatrix<Complex64>,
    /// Π_A⊥, N×N.
    pub projector_complement: DMatrix<Complex64>,
    /// R_S = S·Sᴴ, K×K.
    pub source_cov: DMatrix<Complex64>,
    pub noise_power: f64,
}

/// Builds every block of the snapshot FIM.
pub fn fim_blocks(
    geometry: &ArrayGeometry,
    targets: &TargetSet,
    sources: &DMatrix<Complex64>,
    noise_power: f64,
    wavelength: f64,
) -> Result<FimBlocks> {
    let n = geometry.num_antennas();
    let k = targets.len();
    let t = sources.ncols();
    if sources.nrows() != k {
        return Err(Error::InvalidInput(format!(
            "source matrix has {} rows for {k} targets",
            sources.nrows()
        )));
    }
    if n <= k {
        return Err(Error::InvalidInput(format!(
            "need more antennas than targets (N = {n}, K = {k})"
        )));
    }

    let a = steering_matrix(geometry, targets, wavelength)?;
    let (deriv_u, deriv_v) = derivative_matrices(geometry, targets, wavelength)?;

    // ∂μ/∂u_k stacks s_k(t)·ȧ_u(r_k) over snapshots; same for v.
    let mut d_omega = DMatrix::zeros(n * t, 2 * k);
    for target in 0..k {
        for snap in 0..t {
            let s = sources[(target, snap)];
            for row in 0..n {
                d_omega[(snap * n + row, target)] = s * deriv_u[(row, target)];
                d_omega[(snap * n + row, k + target)] = s * deriv_v[(row, target)];
            }
        }
    }

    // ∂μ/∂Re{s_k} places a(r_k) in snapshot t; the imaginary block is j times it.
    let kt = k * t;
    let mut d_zeta = DMatrix::zeros(n * t, 2 * kt);
    for target in 0..k {
        for snap in 0..t {
            let col = target * t + snap;
            for row in 0..n {
                let entry = a[(row, target)];
                d_zeta[(snap * n + row, col)] = entry;
                d_zeta[(snap * n + row, kt + col)] = Complex64::new(0.0, 1.0) * entry;
            }
        }
    }

    let f11 = real_part(&(d_omega.adjoint() * &d_omega));
    let f12 = real_part(&(d_omega.adjoint() * &d_zeta));
    let f21 = real_part(&(d_zeta.adjoint() * &d_omega));
    let f22 = real_part(&(d_zeta.adjoint() * &d_zeta));

    let projector = projector_complement(&a)?;
    let source_cov = sources * sources.adjoint();

    Ok(FimBlocks {
        f11,
        f12,
        f21,
        f22,
        d_omega,
        d_zeta,
        deriv_u,
        deriv_v,
        projector_complement: projector,
        source_cov,
        noise_power,
    })
}

impl FimBlocks {
    /// The full scaled FIM `(2/σ²)·[[F11, F12], [F21, F22]]`.
    pub fn fim(&self) -> DMatrix<f64> {
        let top = self.f11.nrows();
        let bottom = self.f22.nrows();
        let dim = top + bottom;
        let mut f = DMatrix::zeros(dim, dim);
        f.view_mut((0, 0), (top, top)).copy_from(&self.f11);
        f.view_mut((0, top), (top, bottom)).copy_from(&self.f12);
        f.view_mut((top, 0), (bottom, top)).copy_from(&self.f21);
        f.view_mut((top, top), (bottom, bottom))
            .copy_from(&self.f22);
        f.scale(2.0 / self.noise_power)
    }

    /// CRB through the block inverse: `(σ²/2)·(F11 − F12·F22⁻¹·F21)⁻¹`.
    /// Kept as the brute-force oracle; it is O((KT)³).
    pub fn schur_crb(&self) -> Result<DMatrix<f64>> {
        let f22_inv = self
            .f22
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("signal-nuisance FIM block is singular".into()))?;
        let schur = &self.f11 - &self.f12 * f22_inv * &self.f21;
        let inverse = schur
            .try_inverse()
            .ok_or_else(|| Error::Singular("Schur complement is singular".into()))?;
        Ok(inverse.scale(self.noise_power / 2.0))
    }

    /// `F12·F22⁻¹·F21`, exposed for the long-form vs. closed-form identity.
    pub fn nuisance_correction(&self) -> Result<DMatrix<f64>> {
        let f22_inv = self
            .f22
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("signal-nuisance FIM block is singular".into()))?;
        Ok(&self.f12 * f22_inv * &self.f21)
    }
}

pub(crate) fn real_part(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    m.map(|c| c.re)
}
