//! Cramér–Rao bound engine for multi-target 2D spatial AoA estimation.
//!
//! The 2K×2K CRB matrix is assembled in closed form as
//! `(σ²/2)·(Re{(1₂ ⊗ R_Sᵀ) ⊙ Ȧᴴ Π_A⊥ Ȧ})⁻¹` with `Ȧ = [Ȧ_u, Ȧ_v]` and
//! `Π_A⊥ = I − A(AᴴA)⁻¹Aᴴ`. Parameter ordering throughout is
//! `(u_1..u_K, v_1..v_K)`; interleaving the axes is the classic bug this
//! ordering note exists to prevent.
//!
//! [`fim::fim_blocks`] builds the raw Fisher-information blocks from the
//! snapshot likelihood; its Schur-complement path is the O((KT)³) oracle the
//! closed form is verified against.

mod bounds;
mod fim;

pub use bounds::{
    bound_report, check_bound_conditions, lower_bound, sensitivity_diagnostics,
    steering_correlation_map, BoundReport, ConditionResiduals, LowerBounds, SensitivityDiagnostics,
};
pub use fim::{fim_blocks, FimBlocks};

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{derivative_matrices, steering_matrix, ArrayGeometry, TargetSet};

/// Condition-number guard for the inner-matrix inversion. A near-singular
/// matrix signals coincident targets (a modeling error, not a numerical
/// one), so the engine fails loudly instead of regularizing.
pub const CONDITION_LIMIT: f64 = 1e12;

/// CRB matrix, its trace, and the per-target diagonal pairs.
#[derive(Debug, Clone)]
pub struct CrbResult {
    /// 2K×2K symmetric positive-definite matrix, ordered (u_1..u_K, v_1..v_K).
    pub matrix: DMatrix<f64>,
    /// Sum of the diagonal, dimensionless (u,v)-space variance units.
    pub trace: f64,
    /// (u, v) diagonal entries per target.
    pub per_target: Vec<(f64, f64)>,
}

/// Orthogonal projector onto the complement of the column space of `a`.
pub(crate) fn projector_complement(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let gram = a.adjoint() * a;
    // Guard the Gram condition before factorizing: coincident steering
    // columns leave Cholesky with a tiny positive pivot and a garbage
    // projector rather than a clean failure.
    let gram_eig = SymmetricEigen::new(gram.clone());
    let max = gram_eig.eigenvalues.max();
    let min = gram_eig.eigenvalues.min();
    if !(min > 0.0) || max / min > CONDITION_LIMIT {
        return Err(Error::Singular(
            "steering matrix is numerically rank deficient".into(),
        ));
    }
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::Singular("steering matrix is numerically rank deficient".into()))?;
    let pseudo = chol.solve(&a.adjoint()); // (AᴴA)⁻¹ Aᴴ
    let mut proj = DMatrix::identity(a.nrows(), a.nrows());
    proj -= a * pseudo;
    let adjoint = proj.adjoint();
    Ok((proj + adjoint).scale(0.5))
}

fn closest_pair_note(targets: &TargetSet) -> String {
    match targets.min_separation() {
        Some((i, j, d)) => format!("closest target pair ({i}, {j}) at distance {d:.3e}"),
        None => "single target".into(),
    }
}

/// Inverts a symmetric positive-definite matrix through its eigendecomposition,
/// rejecting condition numbers above [`CONDITION_LIMIT`].
fn guarded_spd_inverse(
    matrix: DMatrix<f64>,
    context: impl Fn() -> String,
) -> Result<(DMatrix<f64>, f64)> {
    let symmetric = (&matrix + matrix.transpose()).scale(0.5);
    let eig = SymmetricEigen::new(symmetric);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > CONDITION_LIMIT {
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::Singular(format!(
            "inner matrix condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e}; {}",
            context()
        )));
    }
    // Q · diag(1/λ) · Qᵀ keeps the inverse exactly symmetric.
    let mut scaled = eig.eigenvectors.clone();
    for (idx, mut col) in scaled.column_iter_mut().enumerate() {
        col /= eig.eigenvalues[idx];
    }
    let inverse = &scaled * eig.eigenvectors.transpose();
    let inverse = (&inverse + inverse.transpose()).scale(0.5);
    let trace_inv = eig.eigenvalues.iter().map(|l| 1.0 / l).sum();
    Ok((inverse, trace_inv))
}

/// Exact multi-target 2D-AoA CRB matrix for the given geometry, targets,
/// source matrix, and noise power.
pub fn crb_matrix(
    geometry: &ArrayGeometry,
    targets: &TargetSet,
    sources: &DMatrix<Complex64>,
    noise_power: f64,
    wavelength: f64,
) -> Result<CrbResult> {
    let n = geometry.num_antennas();
    let k = targets.len();
    validate_crb_inputs(n, k, sources, noise_power)?;

    let a = steering_matrix(geometry, targets, wavelength)?;
    let (deriv_u, deriv_v) = derivative_matrices(geometry, targets, wavelength)?;
    let proj = projector_complement(&a).map_err(|_| {
        Error::Singular(format!(
            "steering matrix rank deficient; {}",
            closest_pair_note(targets)
        ))
    })?;
    let source_cov_t = (sources * sources.adjoint()).transpose();

    let adot = concat_columns(&deriv_u, &deriv_v);
    let h = adot.adjoint() * (&proj * &adot);
    let inner = hadamard_real(&source_cov_t, &h, k);

    let (inverse, trace_inv) = guarded_spd_inverse(inner, || closest_pair_note(targets))?;
    let half_noise = noise_power / 2.0;
    let matrix = inverse.scale(half_noise);
    let trace = half_noise * trace_inv;
    let per_target = (0..k)
        .map(|i| (matrix[(i, i)], matrix[(k + i, k + i)]))
        .collect();
    Ok(CrbResult {
        matrix,
        trace,
        per_target,
    })
}

/// 1D special case: linear array (x coordinates only), u-coordinates only.
/// Returns the K×K matrix `(σ²/2)(Re{R_Sᵀ ⊙ Ȧ_uᴴ Π_A⊥ Ȧ_u})⁻¹`.
pub fn crb_1d(
    x_positions: &[f64],
    u_targets: &[f64],
    sources: &DMatrix<Complex64>,
    noise_power: f64,
    wavelength: f64,
) -> Result<DMatrix<f64>> {
    let n = x_positions.len();
    let k = u_targets.len();
    validate_crb_inputs(n, k, sources, noise_power)?;
    let wave = 2.0 * std::f64::consts::PI / wavelength;

    let a = DMatrix::from_fn(n, k, |i, j| {
        Complex64::from_polar(1.0, wave * x_positions[i] * u_targets[j])
    });
    let deriv = DMatrix::from_fn(n, k, |i, j| {
        Complex64::new(0.0, wave * x_positions[i]) * a[(i, j)]
    });
    let proj = projector_complement(&a).map_err(|_| {
        Error::Singular(format!(
            "1D steering matrix rank deficient (closest u-pair separation {:.3e})",
            min_scalar_separation(u_targets)
        ))
    })?;
    let source_cov_t = (sources * sources.adjoint()).transpose();
    let h = deriv.adjoint() * (&proj * &deriv);
    let mut inner = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            inner[(i, j)] = (source_cov_t[(i, j)] * h[(i, j)]).re;
        }
    }
    let (inverse, _) = guarded_spd_inverse(inner, || {
        format!(
            "closest u-pair separation {:.3e}",
            min_scalar_separation(u_targets)
        )
    })?;
    Ok(inverse.scale(noise_power / 2.0))
}

fn min_scalar_separation(values: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            best = best.min((values[i] - values[j]).abs());
        }
    }
    best
}

fn validate_crb_inputs(
    n: usize,
    k: usize,
    sources: &DMatrix<Complex64>,
    noise_power: f64,
) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("no targets".into()));
    }
    if n <= k {
        return Err(Error::InvalidInput(format!(
            "need more antennas than targets (N = {n}, K = {k})"
        )));
    }
    if sources.nrows() != k {
        return Err(Error::InvalidInput(format!(
            "source matrix has {} rows for {k} targets",
            sources.nrows()
        )));
    }
    if sources.ncols() == 0 {
        return Err(Error::InvalidInput("source matrix has no snapshots".into()));
    }
    if !(noise_power > 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise power {noise_power} must be > 0"
        )));
    }
    Ok(())
}

pub(crate) fn concat_columns(
    left: &DMatrix<Complex64>,
    right: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let n = left.nrows();
    let k = left.ncols();
    let mut out = DMatrix::zeros(n, k + right.ncols());
    for j in 0..k {
        out.set_column(j, &left.column(j).clone_owned());
    }
    for j in 0..right.ncols() {
        out.set_column(k + j, &right.column(j).clone_owned());
    }
    out
}

/// `Re{(1₂ ⊗ R_Sᵀ) ⊙ H}` for a 2K×2K `H`: every K×K block of `H` is
/// Hadamard-multiplied by `R_Sᵀ`.
pub(crate) fn hadamard_real(
    source_cov_t: &DMatrix<Complex64>,
    h: &DMatrix<Complex64>,
    k: usize,
) -> DMatrix<f64> {
    let dim = 2 * k;
    let mut out = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            out[(i, j)] = (source_cov_t[(i % k, j % k)] * h[(i, j)]).re;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{equal_power_sources, Position, SpatialAngle};
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    /// Largest entry modulus of a complex matrix.
    pub(crate) fn cmax(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub(crate) fn random_geometry<R: Rng>(n: usize, region: f64, rng: &mut R) -> ArrayGeometry {
        let half = region / 2.0;
        loop {
            let positions: Vec<Position> = (0..n)
                .map(|_| Position::new(rng.gen_range(-half..=half), rng.gen_range(-half..=half)))
                .collect();
            let geo = ArrayGeometry::new(positions, region, 0.0);
            let m = geo.coordinate_moments();
            if m.var_x > 1e-6 * region * region && m.var_y > 1e-6 * region * region {
                return geo;
            }
        }
    }

    pub(crate) fn upa(n_side: usize, spacing: f64, region: f64) -> ArrayGeometry {
        let mut positions = Vec::new();
        let offset = (n_side as f64 - 1.0) / 2.0;
        for row in 0..n_side {
            for col in 0..n_side {
                positions.push(Position::new(
                    (col as f64 - offset) * spacing,
                    (row as f64 - offset) * spacing,
                ));
            }
        }
        ArrayGeometry::new(positions, region, spacing)
    }

    #[test]
    fn single_target_matches_variance_expression() {
        // Dense 4x4 half-wavelength UPA, T = 16, SNR 10 dB.
        let lambda = 0.05;
        let geo = upa(4, lambda / 2.0, 12.0 * lambda);
        let targets = TargetSet::new(vec![SpatialAngle::new(0.21, -0.37)]);
        let mut rng = stream_rng(5, &[1]);
        let t = 16;
        let sources = equal_power_sources(1, t, 1.0, &mut rng);
        let noise = 0.1;
        let crb = crb_matrix(&geo, &targets, &sources, noise, lambda).unwrap();

        let m = geo.coordinate_moments();
        let n = geo.num_antennas() as f64;
        let pi2 = std::f64::consts::PI.powi(2);
        let denom_x = m.var_x - m.cov * m.cov / m.var_y;
        let denom_y = m.var_y - m.cov * m.cov / m.var_x;
        let expected = noise * lambda * lambda / (8.0 * n * t as f64 * 1.0 * pi2)
            * (1.0 / denom_x + 1.0 / denom_y);
        assert_relative_eq!(crb.trace, expected, max_relative = 1e-9);
        // Frozen from an independent evaluation of the same expression.
        assert_relative_eq!(crb.trace, 3.166286988823055e-5, max_relative = 1e-9);
    }

    #[test]
    fn scaling_geometry_by_two_quarters_the_trace() {
        let lambda = 0.05;
        let mut rng = stream_rng(6, &[2]);
        let geo = random_geometry(6, 12.0 * lambda, &mut rng);
        let doubled = ArrayGeometry::new(
            geo.positions()
                .iter()
                .map(|p| Position::new(2.0 * p.x, 2.0 * p.y))
                .collect(),
            2.0 * geo.region_size(),
            geo.min_spacing(),
        );
        let targets = TargetSet::new(vec![SpatialAngle::new(0.0, 0.0)]);
        let sources = equal_power_sources(1, 8, 1.0, &mut rng);
        let base = crb_matrix(&geo, &targets, &sources, 0.1, lambda).unwrap();
        let scaled = crb_matrix(&doubled, &targets, &sources, 0.1, lambda).unwrap();
        assert_relative_eq!(scaled.trace, base.trace / 4.0, max_relative = 1e-10);
    }

    #[test]
    fn noise_scaling_is_exactly_linear() {
        let lambda = 0.05;
        let mut rng = stream_rng(7, &[3]);
        let geo = random_geometry(7, 12.0 * lambda, &mut rng);
        let targets = TargetSet::sample(2, 0.6, 0.6, 0.05, &mut rng).unwrap();
        let sources = equal_power_sources(2, 6, 1.0, &mut rng);
        let one = crb_matrix(&geo, &targets, &sources, 0.2, lambda).unwrap();
        let three = crb_matrix(&geo, &targets, &sources, 0.6, lambda).unwrap();
        assert_relative_eq!(
            (three.matrix - one.matrix.scale(3.0)).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn crb_is_symmetric_positive_definite() {
        let lambda = 0.05;
        let mut rng = stream_rng(8, &[4]);
        for _ in 0..20 {
            let geo = random_geometry(8, 12.0 * lambda, &mut rng);
            let targets = TargetSet::sample(3, 0.6, 0.6, 0.05, &mut rng).unwrap();
            let sources = equal_power_sources(3, 6, 1.0, &mut rng);
            let crb = crb_matrix(&geo, &targets, &sources, 0.1, lambda).unwrap();
            assert!(
                (crb.matrix.clone() - crb.matrix.transpose()).norm() < 1e-10 * crb.matrix.norm()
            );
            let eig = SymmetricEigen::new(crb.matrix.clone());
            assert!(eig.eigenvalues.min() > 0.0);
            assert!(crb.trace > 0.0);
            for &(cu, cv) in &crb.per_target {
                assert!(cu > 0.0 && cv > 0.0);
            }
        }
    }

    #[test]
    fn coincident_targets_fail_loudly_with_pair_info() {
        let lambda = 0.05;
        let mut rng = stream_rng(9, &[5]);
        let geo = random_geometry(6, 12.0 * lambda, &mut rng);
        let angle = SpatialAngle::new(0.1, 0.1);
        let targets = TargetSet::new(vec![angle, angle]);
        let sources = equal_power_sources(2, 6, 1.0, &mut rng);
        let err = crb_matrix(&geo, &targets, &sources, 0.1, lambda).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("(0, 1)"),
            "message should name the pair: {msg}"
        );
    }

    #[test]
    fn linear_array_is_undefined_in_2d_but_finite_in_1d() {
        let lambda = 0.05;
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * lambda / 2.0).collect();
        let geo = ArrayGeometry::new(
            xs.iter().map(|&x| Position::new(x, 0.0)).collect(),
            12.0 * lambda,
            0.0,
        );
        let targets = TargetSet::new(vec![
            SpatialAngle::new(-0.2, 0.0),
            SpatialAngle::new(0.3, 0.0),
        ]);
        let mut rng = stream_rng(10, &[6]);
        let sources = equal_power_sources(2, 8, 1.0, &mut rng);
        assert!(crb_matrix(&geo, &targets, &sources, 0.1, lambda).is_err());
        let one_d = crb_1d(&xs, &[-0.2, 0.3], &sources, 0.1, lambda).unwrap();
        assert!(one_d.iter().all(|x| x.is_finite()));
        assert!(one_d[(0, 0)] > 0.0 && one_d[(1, 1)] > 0.0);
    }

    #[test]
    fn crb_1d_single_source_matches_schur_oracle() {
        // Half-wavelength ULA, one broadside source; oracle built from the
        // 1D snapshot FIM and its Schur complement.
        let lambda = 0.05;
        let n = 6;
        let t = 5;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * lambda / 2.0).collect();
        let u = 0.0;
        let mut rng = stream_rng(13, &[9]);
        let sources = equal_power_sources(1, t, 1.0, &mut rng);
        let noise = 0.1;
        let closed = crb_1d(&xs, &[u], &sources, noise, lambda).unwrap();

        let wave = 2.0 * std::f64::consts::PI / lambda;
        let a = DMatrix::from_fn(n, 1, |i, _| Complex64::from_polar(1.0, wave * xs[i] * u));
        let deriv = DMatrix::from_fn(n, 1, |i, _| Complex64::new(0.0, wave * xs[i]) * a[(i, 0)]);
        // D_ω column stacks s(t)·ȧ; D_ζ = [I_T ⊗ a, j·I_T ⊗ a].
        let mut d_omega = DMatrix::<Complex64>::zeros(n * t, 1);
        let mut d_zeta = DMatrix::<Complex64>::zeros(n * t, 2 * t);
        for snap in 0..t {
            for row in 0..n {
                d_omega[(snap * n + row, 0)] = sources[(0, snap)] * deriv[(row, 0)];
                d_zeta[(snap * n + row, snap)] = a[(row, 0)];
                d_zeta[(snap * n + row, t + snap)] = Complex64::new(0.0, 1.0) * a[(row, 0)];
            }
        }
        let re = |m: &DMatrix<Complex64>| m.map(|c| c.re);
        let f11 = re(&(d_omega.adjoint() * &d_omega));
        let f12 = re(&(d_omega.adjoint() * &d_zeta));
        let f21 = re(&(d_zeta.adjoint() * &d_omega));
        let f22 = re(&(d_zeta.adjoint() * &d_zeta));
        let schur = &f11 - &f12 * f22.try_inverse().unwrap() * &f21;
        let oracle = noise / 2.0 / schur[(0, 0)];
        assert_relative_eq!(closed[(0, 0)], oracle, max_relative = 1e-10);
    }

    #[test]
    fn crb_1d_permutation_relabels_consistently() {
        let lambda = 0.05;
        let xs: Vec<f64> = (0..5).map(|i| i as f64 * lambda / 2.0).collect();
        let mut rng = stream_rng(11, &[7]);
        let sources = equal_power_sources(2, 8, 1.0, &mut rng);
        let fwd = crb_1d(&xs, &[-0.2, 0.3], &sources, 0.1, lambda).unwrap();
        // Swap target order along with the matching source rows.
        let mut swapped_sources = sources.clone();
        swapped_sources.swap_rows(0, 1);
        let rev = crb_1d(&xs, &[0.3, -0.2], &swapped_sources, 0.1, lambda).unwrap();
        assert_relative_eq!(fwd[(0, 0)], rev[(1, 1)], max_relative = 1e-12);
        assert_relative_eq!(fwd[(1, 1)], rev[(0, 0)], max_relative = 1e-12);
        assert_relative_eq!(fwd[(0, 1)], rev[(1, 0)], max_relative = 1e-12);
    }

    #[test]
    fn projector_is_idempotent_hermitian_annihilating() {
        let lambda = 0.05;
        let mut rng = stream_rng(12, &[8]);
        let geo = random_geometry(7, 12.0 * lambda, &mut rng);
        let targets = TargetSet::sample(3, 0.6, 0.6, 0.05, &mut rng).unwrap();
        let a = steering_matrix(&geo, &targets, lambda).unwrap();
        let p = projector_complement(&a).unwrap();
        let idempotent_defect = cmax(&(&p * &p - &p));
        assert!(idempotent_defect < 1e-10, "defect {idempotent_defect}");
        assert!(cmax(&(p.adjoint() - &p)) < 1e-12);
        assert!(cmax(&(&p * &a)) < 1e-10);
    }
}
