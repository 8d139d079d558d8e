//! MUSIC spatial-spectrum estimation of multi-target AoAs and
//! assignment-aware MSE scoring.
//!
//! The covariance eigenvectors belonging to the N−K smallest eigenvalues span
//! the noise subspace U_z; the spectrum is `P(r̄) = 1/(aᴴ U_z U_zᴴ a)` and
//! target estimates are its K largest peaks. Estimates are matched to truths
//! by minimum-total-squared-distance assignment so that spurious-peak
//! ambiguity is charged as estimation error rather than bookkeeping error.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{AngleGrid, GridValues};
use crate::model::{ArrayGeometry, SpatialAngle};

/// Floor applied to the spectrum denominator before taking the reciprocal,
/// so exact subspace membership yields a huge finite peak instead of ∞.
const DENOMINATOR_FLOOR: f64 = 1e-300;

/// Absolute eigenvalue-gap threshold below which the signal/noise subspace
/// split at the K/K+1 boundary is flagged as ambiguous.
const EIGENVALUE_TIE_GAP: f64 = 1e-12;

/// MUSIC spatial spectrum on a rectangular angle grid.
#[derive(Debug, Clone)]
pub struct MusicSpectrum {
    pub grid: AngleGrid,
    /// `values[(i, j)] = P(u_i, v_j)`, strictly positive.
    pub values: DMatrix<f64>,
    /// Assumed signal-subspace dimension K.
    pub subspace_dim: usize,
    /// Set when the eigenvalues at the subspace boundary are tied.
    pub eigenvalue_tie: bool,
}

/// K angle estimates read off a spectrum.
#[derive(Debug, Clone)]
pub struct PeakEstimates {
    pub angles: Vec<SpatialAngle>,
    /// Set when fewer than K strict local maxima existed and the list was
    /// padded with the largest remaining grid values.
    pub padded: bool,
}

/// Assignment-resolved squared errors of one estimation trial.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub estimated_angles: Vec<SpatialAngle>,
    pub per_target_sq_errors: Vec<f64>,
    /// Sum of the per-target squared (u, v) distances under the assignment.
    pub total_sq_error: f64,
}

/// Evaluates the MUSIC spectrum of a Hermitian covariance on the given grid.
pub fn music_spectrum(
    covariance: &DMatrix<Complex64>,
    geometry: &ArrayGeometry,
    num_targets: usize,
    grid: &AngleGrid,
    wavelength: f64,
) -> Result<MusicSpectrum> {
    let n = geometry.num_antennas();
    if covariance.nrows() != n || covariance.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "covariance is {}x{} for {n} antennas",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    if num_targets >= n {
        return Err(Error::InvalidInput(format!(
            "subspace dimension K = {num_targets} must be smaller than N = {n}"
        )));
    }
    if !(wavelength > 0.0) {
        return Err(Error::InvalidInput("wavelength must be > 0".into()));
    }

    let hermitian = (covariance + covariance.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(hermitian);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });
    let eigenvalue_tie =
        (eig.eigenvalues[order[num_targets - 1]] - eig.eigenvalues[order[num_targets]]).abs()
            <= EIGENVALUE_TIE_GAP;

    // Noise subspace: eigenvectors of the N−K smallest eigenvalues.
    let noise_dim = n - num_targets;
    let mut noise = DMatrix::zeros(n, noise_dim);
    for (col, &idx) in order[num_targets..].iter().enumerate() {
        noise.set_column(col, &eig.eigenvectors.column(idx).clone_owned());
    }

    let wave = 2.0 * std::f64::consts::PI / wavelength;
    let wx: Vec<f64> = geometry.positions().iter().map(|p| wave * p.x).collect();
    let wy: Vec<f64> = geometry.positions().iter().map(|p| wave * p.y).collect();

    let nv = grid.v.len();
    let rows: Vec<Vec<f64>> = grid
        .u
        .par_iter()
        .map(|&u| {
            let mut row = vec![0.0; nv];
            let mut probe = vec![Complex64::new(0.0, 0.0); n];
            for (j, &v) in grid.v.iter().enumerate() {
                for idx in 0..n {
                    probe[idx] = Complex64::from_polar(1.0, -(wx[idx] * u + wy[idx] * v));
                }
                // ‖U_zᴴ a‖² accumulated column by column.
                let mut denom = 0.0;
                for col in 0..noise_dim {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for idx in 0..n {
                        acc += probe[idx] * noise[(idx, col)];
                    }
                    denom += acc.norm_sqr();
                }
                row[j] = 1.0 / denom.max(DENOMINATOR_FLOOR);
            }
            row
        })
        .collect();

    let mut values = DMatrix::zeros(grid.u.len(), nv);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, value) in row.into_iter().enumerate() {
            values[(i, j)] = value;
        }
    }

    Ok(MusicSpectrum {
        grid: grid.clone(),
        values,
        subspace_dim: num_targets,
        eigenvalue_tie,
    })
}

/// Returns the K largest strict local maxima (8-neighborhood), each refined by
/// one per-axis quadratic interpolation step on the null spectrum `1/P`.
/// Pads with the largest remaining grid values when fewer than K maxima exist.
pub fn estimate_aoas(spectrum: &MusicSpectrum, num_targets: usize) -> PeakEstimates {
    let values = &spectrum.values;
    let (nu, nv) = (values.nrows(), values.ncols());

    let mut peaks: Vec<(usize, usize)> = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            if is_strict_local_max(values, i, j) {
                peaks.push((i, j));
            }
        }
    }
    sort_candidates(spectrum, &mut peaks);

    let mut chosen: Vec<(usize, usize)> = peaks.into_iter().take(num_targets).collect();
    let mut padded = false;
    if chosen.len() < num_targets {
        padded = true;
        let mut rest: Vec<(usize, usize)> = (0..nu)
            .flat_map(|i| (0..nv).map(move |j| (i, j)))
            .filter(|cell| !chosen.contains(cell))
            .collect();
        sort_candidates(spectrum, &mut rest);
        chosen.extend(rest.into_iter().take(num_targets - chosen.len()));
    }

    let angles = chosen
        .into_iter()
        .map(|(i, j)| refine_peak(spectrum, i, j))
        .collect();
    PeakEstimates { angles, padded }
}

fn sort_candidates(spectrum: &MusicSpectrum, cells: &mut [(usize, usize)]) {
    // Descending spectrum value, then lexicographic (u, v) for exact ties.
    cells.sort_by(|&(ai, aj), &(bi, bj)| {
        spectrum.values[(bi, bj)]
            .partial_cmp(&spectrum.values[(ai, aj)])
            .expect("spectrum values are finite")
            .then_with(|| {
                (spectrum.grid.u[ai], spectrum.grid.v[aj])
                    .partial_cmp(&(spectrum.grid.u[bi], spectrum.grid.v[bj]))
                    .expect("grid coordinates are finite")
            })
    });
}

fn is_strict_local_max(values: &DMatrix<f64>, i: usize, j: usize) -> bool {
    let center = values[(i, j)];
    let (nu, nv) = (values.nrows(), values.ncols());
    for di in -1i64..=1 {
        for dj in -1i64..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            let ni = i as i64 + di;
            let nj = j as i64 + dj;
            if ni < 0 || nj < 0 || ni >= nu as i64 || nj >= nv as i64 {
                continue;
            }
            if values[(ni as usize, nj as usize)] >= center {
                return false;
            }
        }
    }
    true
}

/// One quadratic-interpolation step per axis on the null spectrum `1/P`,
/// which is locally parabolic at a MUSIC null. Offsets are clamped to half a
/// cell; boundary cells and non-convex fits fall back to the node itself.
fn refine_peak(spectrum: &MusicSpectrum, i: usize, j: usize) -> SpatialAngle {
    let values = &spectrum.values;
    let grid = &spectrum.grid;
    let null = |i: usize, j: usize| 1.0 / values[(i, j)];

    let mut u = grid.u[i];
    let mut v = grid.v[j];
    if i > 0 && i + 1 < values.nrows() {
        let offset = parabolic_offset(null(i - 1, j), null(i, j), null(i + 1, j));
        let step = (grid.u[i + 1] - grid.u[i - 1]) / 2.0;
        u += offset * step;
    }
    if j > 0 && j + 1 < values.ncols() {
        let offset = parabolic_offset(null(i, j - 1), null(i, j), null(i, j + 1));
        let step = (grid.v[j + 1] - grid.v[j - 1]) / 2.0;
        v += offset * step;
    }
    SpatialAngle::new(u, v)
}

fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom <= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Matches estimates to truths by minimum total squared distance (exhaustive
/// for K ≤ 7, greedy beyond) and reports per-target squared errors.
pub fn assignment_error(
    truths: &[SpatialAngle],
    estimates: &[SpatialAngle],
) -> Result<EstimationResult> {
    let k = truths.len();
    if estimates.len() != k {
        return Err(Error::InvalidInput(format!(
            "{} estimates for {k} targets",
            estimates.len()
        )));
    }
    let mut cost = DMatrix::zeros(k, k);
    for (i, truth) in truths.iter().enumerate() {
        for (j, estimate) in estimates.iter().enumerate() {
            let du = truth.u - estimate.u;
            let dv = truth.v - estimate.v;
            cost[(i, j)] = du * du + dv * dv;
        }
    }
    let assignment = if k <= 7 {
        best_assignment_exhaustive(&cost)
    } else {
        best_assignment_greedy(&cost)
    };
    let per_target_sq_errors: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[(i, j)])
        .collect();
    let total_sq_error = per_target_sq_errors.iter().sum();
    Ok(EstimationResult {
        estimated_angles: assignment.iter().map(|&j| estimates[j]).collect(),
        per_target_sq_errors,
        total_sq_error,
    })
}

fn best_assignment_exhaustive(cost: &DMatrix<f64>) -> Vec<usize> {
    let k = cost.nrows();
    let mut indices: Vec<usize> = (0..k).collect();
    let mut best = indices.clone();
    let mut best_cost = f64::INFINITY;
    permute(&mut indices, 0, &mut |perm| {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
        if total < best_cost {
            best_cost = total;
            best.copy_from_slice(perm);
        }
    });
    best
}

fn permute(values: &mut [usize], start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == values.len() {
        visit(values);
        return;
    }
    for i in start..values.len() {
        values.swap(start, i);
        permute(values, start + 1, visit);
        values.swap(start, i);
    }
}

fn best_assignment_greedy(cost: &DMatrix<f64>) -> Vec<usize> {
    let k = cost.nrows();
    let mut taken = vec![false; k];
    let mut assignment = vec![0usize; k];
    for i in 0..k {
        let mut best_j = usize::MAX;
        let mut best_cost = f64::INFINITY;
        for j in 0..k {
            if !taken[j] && cost[(i, j)] < best_cost {
                best_cost = cost[(i, j)];
                best_j = j;
            }
        }
        taken[best_j] = true;
        assignment[i] = best_j;
    }
    assignment
}

/// Mean of the per-trial total squared errors.
pub fn evaluate_mse(trials: &[EstimationResult]) -> f64 {
    if trials.is_empty() {
        return 0.0;
    }
    trials.iter().map(|t| t.total_sq_error).sum::<f64>() / trials.len() as f64
}

impl MusicSpectrum {
    pub fn to_grid_values(&self) -> GridValues {
        GridValues {
            grid: self.grid.clone(),
            values: self.values.clone(),
        }
    }
}

/// One complete estimation pass: covariance → spectrum → K peaks.
pub fn estimate_from_covariance(
    covariance: &DMatrix<Complex64>,
    geometry: &ArrayGeometry,
    num_targets: usize,
    grid: &AngleGrid,
    wavelength: f64,
) -> Result<(MusicSpectrum, PeakEstimates)> {
    let spectrum = music_spectrum(covariance, geometry, num_targets, grid, wavelength)?;
    let peaks = estimate_aoas(&spectrum, num_targets);
    Ok((spectrum, peaks))
}
