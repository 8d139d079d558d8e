//! Closed-form lower bounds on the expected CRB-trace objective, the
//! equality-condition certificates behind them, and the sensitivity-vector
//! diagnostics that explain which geometries approach the bounds.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{AngleGrid, GridValues};
use crate::model::{
    derivative_matrices, steering_matrix, steering_vector, ArrayGeometry, ScenarioConfig,
    SpatialAngle, TargetSet,
};

use super::{concat_columns, crb_matrix, projector_complement};

/// The two members of the bound chain: the variance/covariance expression
/// (tight for single targets) and the closed-form region bound.
#[derive(Debug, Clone, Copy)]
pub struct LowerBounds {
    pub bound_a: f64,
    pub bound_b: f64,
}

/// Residuals of the equality conditions for both bound steps.
#[derive(Debug, Clone)]
pub struct ConditionResiduals {
    /// `[cross-target interference, per-target sensitivity defect]`: the max
    /// absolute left-hand sides of the two equality-(a) conditions.
    pub equality_a: [f64; 2],
    /// `(|cov(x̃,ỹ)|, |var(x̃)−var(ỹ)|, max(|μ(x̃)|,|μ(ỹ)|), max_n |xₙ²+yₙ²−A²/2|)`.
    pub equality_b: [f64; 4],
}

/// Normalized sensitivity-vector correlations and effective powers.
#[derive(Debug, Clone)]
pub struct SensitivityDiagnostics {
    /// 2K×2K matrix indexed like the CRB (u-block first); entries with equal
    /// target indices are structurally zero and excluded from the mean.
    pub rho: DMatrix<f64>,
    /// 2K effective powers (ω_{u,1..K}, ω_{v,1..K}).
    pub omega: Vec<f64>,
    /// Mean of ρ over the 4K(K−1) cross-target entries; 0 for K = 1.
    pub rho_mean: f64,
    /// Mean of the 2K effective powers.
    pub omega_mean: f64,
}

/// Everything the bound machinery knows about one scenario realization.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub trace: f64,
    pub bound_a: f64,
    pub bound_b: f64,
    pub condition_a_residuals: [f64; 2],
    pub condition_b_residuals: [f64; 4],
    pub rho_matrix: DMatrix<f64>,
    pub omega_values: Vec<f64>,
    pub rho_mean: f64,
    pub omega_mean: f64,
}

/// Closed-form lower bounds on the expected CRB trace.
///
/// `bound_a = Kσ²λ²/(8NTP_sπ²)·(1/(var(x̃)−cov²/var(ỹ)) + 1/(var(ỹ)−cov²/var(x̃)))`
/// and `bound_b = Kσ²λ²/(NTP_sA²π²)`; both assume equal per-target energy.
pub fn lower_bound(geometry: &ArrayGeometry, scenario: &ScenarioConfig) -> Result<LowerBounds> {
    let m = geometry.coordinate_moments();
    if !(m.var_x > 0.0) || !(m.var_y > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "coordinate variances ({:.3e}, {:.3e}) must be positive",
            m.var_x, m.var_y
        )));
    }
    let denom_x = m.var_x - m.cov * m.cov / m.var_y;
    let denom_y = m.var_y - m.cov * m.cov / m.var_x;
    if !(denom_x > 0.0) || !(denom_y > 0.0) {
        return Err(Error::DegenerateGeometry(
            "antenna coordinates are perfectly correlated (collinear array)".into(),
        ));
    }
    let n = geometry.num_antennas() as f64;
    let k = scenario.num_targets as f64;
    let t = scenario.num_snapshots as f64;
    let pi2 = std::f64::consts::PI.powi(2);
    let common =
        k * scenario.noise_power * scenario.wavelength.powi(2) / (n * t * scenario.signal_power);
    Ok(LowerBounds {
        bound_a: common / (8.0 * pi2) * (1.0 / denom_x + 1.0 / denom_y),
        bound_b: common / (scenario.region_size.powi(2) * pi2),
    })
}

/// Evaluates the equality-condition residuals for both bound steps.
pub fn check_bound_conditions(
    geometry: &ArrayGeometry,
    targets: &TargetSet,
    sources: &DMatrix<Complex64>,
    wavelength: f64,
) -> Result<ConditionResiduals> {
    let k = targets.len();
    let a = steering_matrix(geometry, targets, wavelength)?;
    let (deriv_u, deriv_v) = derivative_matrices(geometry, targets, wavelength)?;
    let proj = projector_complement(&a)?;
    let source_cov_t = (sources * sources.adjoint()).transpose();

    // Cross-target interference terms Re{[R_Sᵀ]_{k,k'}·ȧ_ιᴴ Π_A⊥ ȧ_ι'}.
    let adot = concat_columns(&deriv_u, &deriv_v);
    let h = adot.adjoint() * (&proj * &adot);
    let mut interference: f64 = 0.0;
    for i in 0..2 * k {
        for j in 0..2 * k {
            if i % k != j % k {
                let value = (source_cov_t[(i % k, j % k)] * h[(i, j)]).re.abs();
                interference = interference.max(value);
            }
        }
    }

    // Per-target sensitivity condition Aᴴ Π_k⊥ (ȧ_ι − ζ*·ȧ_ι') = 0 with the
    // least-squares-optimal ζ*.
    let mut sensitivity: f64 = 0.0;
    for target in 0..k {
        let ak = a.column(target);
        let norm_sq = ak.norm_squared();
        let du = deriv_u.column(target);
        let dv = deriv_v.column(target);
        let pu = du - &(ak * (ak.dotc(&du) / norm_sq));
        let pv = dv - &(ak * (ak.dotc(&dv) / norm_sq));
        let pu_sq = pu.norm_squared();
        let pv_sq = pv.norm_squared();
        if !(pu_sq > 0.0) || !(pv_sq > 0.0) {
            return Err(Error::DegenerateGeometry(format!(
                "projected steering derivative has zero norm for target {target}"
            )));
        }
        let cross = pu.dotc(&pv).re;
        let residual_u = a.adjoint() * (&pu - &pv.scale(cross / pv_sq));
        let residual_v = a.adjoint() * (&pv - &pu.scale(cross / pu_sq));
        for entry in residual_u.iter().chain(residual_v.iter()) {
            sensitivity = sensitivity.max(entry.norm());
        }
    }

    // Central-symmetry conditions on the coordinates themselves.
    let m = geometry.coordinate_moments();
    let half_sq = geometry.region_size().powi(2) / 2.0;
    let ring = geometry
        .positions()
        .iter()
        .map(|p| (p.x * p.x + p.y * p.y - half_sq).abs())
        .fold(0.0f64, f64::max);
    Ok(ConditionResiduals {
        equality_a: [interference, sensitivity],
        equality_b: [
            m.cov.abs(),
            (m.var_x - m.var_y).abs(),
            m.mean_x.abs().max(m.mean_y.abs()),
            ring,
        ],
    })
}

/// Sensitivity-vector correlations ρ and effective powers ω. The source
/// matrix plays no role here; only the steering structure does.
pub fn sensitivity_diagnostics(
    geometry: &ArrayGeometry,
    targets: &TargetSet,
    wavelength: f64,
) -> Result<SensitivityDiagnostics> {
    let k = targets.len();
    let a = steering_matrix(geometry, targets, wavelength)?;
    let (deriv_u, deriv_v) = derivative_matrices(geometry, targets, wavelength)?;
    let proj = projector_complement(&a)?;
    let adot = concat_columns(&deriv_u, &deriv_v);
    let h = adot.adjoint() * (&proj * &adot);

    let dim = 2 * k;
    let diag: Vec<f64> = (0..dim).map(|i| h[(i, i)].re).collect();
    let scale = diag.iter().fold(0.0f64, |m, &d| m.max(d));
    if let Some(idx) = diag.iter().position(|&d| !(d > 1e-14 * scale.max(1.0))) {
        let axis = if idx < k { "u" } else { "v" };
        return Err(Error::DegenerateGeometry(format!(
            "projected {axis}-derivative for target {} has zero norm",
            idx % k
        )));
    }

    let mut omega = Vec::with_capacity(dim);
    for target in 0..k {
        let nu = diag[target];
        let nv = diag[k + target];
        let cross = h[(target, k + target)].re;
        omega.push((nu - cross * cross / nv).max(0.0));
    }
    for target in 0..k {
        let nu = diag[target];
        let nv = diag[k + target];
        let cross = h[(target, k + target)].re;
        omega.push((nv - cross * cross / nu).max(0.0));
    }

    let mut rho = DMatrix::zeros(dim, dim);
    let mut rho_sum = 0.0;
    let mut rho_count = 0usize;
    for i in 0..dim {
        for j in 0..dim {
            if i % k != j % k {
                let value = (h[(i, j)].norm_sqr() / (diag[i] * diag[j])).min(1.0);
                rho[(i, j)] = value;
                rho_sum += value;
                rho_count += 1;
            }
        }
    }
    let rho_mean = if rho_count > 0 {
        rho_sum / rho_count as f64
    } else {
        0.0
    };
    let omega_mean = omega.iter().sum::<f64>() / dim as f64;
    Ok(SensitivityDiagnostics {
        rho,
        omega,
        rho_mean,
        omega_mean,
    })
}

/// Aggregate report: CRB trace, both bounds, condition residuals, and the
/// sensitivity diagnostics, for one realization.
pub fn bound_report(
    geometry: &ArrayGeometry,
    scenario: &ScenarioConfig,
    targets: &TargetSet,
    sources: &DMatrix<Complex64>,
) -> Result<BoundReport> {
    let crb = crb_matrix(
        geometry,
        targets,
        sources,
        scenario.noise_power,
        scenario.wavelength,
    )?;
    let bounds = lower_bound(geometry, scenario)?;
    let conditions = check_bound_conditions(geometry, targets, sources, scenario.wavelength)?;
    let diag = sensitivity_diagnostics(geometry, targets, scenario.wavelength)?;
    Ok(BoundReport {
        trace: crb.trace,
        bound_a: bounds.bound_a,
        bound_b: bounds.bound_b,
        condition_a_residuals: conditions.equality_a,
        condition_b_residuals: conditions.equality_b,
        rho_matrix: diag.rho,
        omega_values: diag.omega,
        rho_mean: diag.rho_mean,
        omega_mean: diag.omega_mean,
    })
}

/// Normalized steering-vector correlation `(1/N²)·|a(r_ref)ᴴ a(r̄)|²` over a
/// grid of probe directions. Values lie in [0, 1] with 1 at the reference.
pub fn steering_correlation_map(
    geometry: &ArrayGeometry,
    reference: &SpatialAngle,
    grid: &AngleGrid,
    wavelength: f64,
) -> Result<GridValues> {
    let a_ref = steering_vector(geometry, reference, wavelength)?;
    let n = geometry.num_antennas();
    let n_sq = (n * n) as f64;
    let wave = 2.0 * std::f64::consts::PI / wavelength;
    let wx: Vec<f64> = geometry.positions().iter().map(|p| wave * p.x).collect();
    let wy: Vec<f64> = geometry.positions().iter().map(|p| wave * p.y).collect();

    let mut values = DMatrix::zeros(grid.u.len(), grid.v.len());
    for (i, &u) in grid.u.iter().enumerate() {
        for (j, &v) in grid.v.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for idx in 0..n {
                let probe = Complex64::from_polar(1.0, wx[idx] * u + wy[idx] * v);
                acc += a_ref[idx].conj() * probe;
            }
            values[(i, j)] = (acc.norm_sqr() / n_sq).min(1.0);
        }
    }
    Ok(GridValues {
        grid: grid.clone(),
        values,
    })
}
