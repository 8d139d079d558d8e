//! System model: array geometry, spatial angles, steering vectors, and
//! synthetic snapshot generation.
//!
//! Angles are kept in spatial coordinates `(u, v)` with `u = cos φ sin θ`
//! and `v = cos θ`; all estimation and bound quantities live in this space.
//! Positions are in meters inside a square moving region of side `A`
//! centered at the origin.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Spatial angle-of-arrival coordinate of one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialAngle {
    pub u: f64,
    pub v: f64,
}

impl SpatialAngle {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Conversion helper from physical elevation/azimuth (radians).
    pub fn from_elevation_azimuth(theta: f64, phi: f64) -> Self {
        Self {
            u: phi.cos() * theta.sin(),
            v: theta.cos(),
        }
    }

    /// A direction is physically realizable when `u² + v² ≤ 1`.
    pub fn is_physical(&self) -> bool {
        self.u * self.u + self.v * self.v <= 1.0
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    /// Euclidean distance in `(u, v)` space.
    pub fn distance(&self, other: &SpatialAngle) -> f64 {
        ((self.u - other.u).powi(2) + (self.v - other.v).powi(2)).sqrt()
    }
}

/// The spatial angles of the K targets of one realization.
#[derive(Debug, Clone)]
pub struct TargetSet {
    angles: Vec<SpatialAngle>,
}

impl TargetSet {
    pub fn new(angles: Vec<SpatialAngle>) -> Self {
        Self { angles }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn angles(&self) -> &[SpatialAngle] {
        &self.angles
    }

    /// Smallest pairwise distance, or `None` for fewer than two targets.
    pub fn min_separation(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.angles.len() {
            for j in (i + 1)..self.angles.len() {
                let d = self.angles[i].distance(&self.angles[j]);
                if best.is_none_or(|(_, _, b)| d < b) {
                    best = Some((i, j, d));
                }
            }
        }
        best
    }

    /// Draws `k` angles uniformly over the box `[-u_max, u_max] × [-v_max, v_max]`
    /// intersected with the unit disk. A draw whose smallest pairwise distance
    /// falls below `min_separation` is rejected and redrawn wholesale; a zero
    /// threshold disables the check (degenerate boxes stay drawable).
    pub fn sample<R: Rng>(
        k: usize,
        u_max: f64,
        v_max: f64,
        min_separation: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&u_max) || !(0.0..=1.0).contains(&v_max) {
            return Err(Error::InvalidInput(format!(
                "angle box ({u_max}, {v_max}) outside (0, 1]"
            )));
        }
        const MAX_SET_ATTEMPTS: usize = 1000;
        for _ in 0..MAX_SET_ATTEMPTS {
            let mut angles = Vec::with_capacity(k);
            for _ in 0..k {
                angles.push(sample_angle(u_max, v_max, rng)?);
            }
            let set = Self::new(angles);
            let ok = min_separation <= 0.0
                || set
                    .min_separation()
                    .is_none_or(|(_, _, d)| d >= min_separation);
            if ok {
                return Ok(set);
            }
        }
        Err(Error::InvalidInput(format!(
            "could not draw {k} targets separated by {min_separation} in \
             [-{u_max}, {u_max}] x [-{v_max}, {v_max}] after {MAX_SET_ATTEMPTS} attempts"
        )))
    }
}

fn sample_angle<R: Rng>(u_max: f64, v_max: f64, rng: &mut R) -> Result<SpatialAngle> {
    const MAX_ATTEMPTS: usize = 10_000;
    for _ in 0..MAX_ATTEMPTS {
        let u = if u_max > 0.0 {
            rng.gen_range(-u_max..=u_max)
        } else {
            0.0
        };
        let v = if v_max > 0.0 {
            rng.gen_range(-v_max..=v_max)
        } else {
            0.0
        };
        let angle = SpatialAngle::new(u, v);
        if angle.is_physical() {
            return Ok(angle);
        }
    }
    Err(Error::InvalidInput(format!(
        "angle box ({u_max}, {v_max}) has no physical intersection with the unit disk"
    )))
}

/// Antenna position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Population-convention first and second moments of the antenna coordinates.
#[derive(Debug, Clone, Copy)]
pub struct CoordinateMoments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov: f64,
}

/// One constraint violation reported by geometry validation.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryViolation {
    /// Antenna outside the square `[-A/2, A/2]²`.
    OutOfRegion { index: usize, position: Position },
    /// Two antennas closer than the minimum spacing.
    Spacing {
        first: usize,
        second: usize,
        distance: f64,
    },
}

impl std::fmt::Display for GeometryViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeometryViolation::OutOfRegion { index, position } => write!(
                f,
                "antenna {index} at ({}, {}) outside the moving region",
                position.x, position.y
            ),
            GeometryViolation::Spacing {
                first,
                second,
                distance,
            } => write!(
                f,
                "antennas {first} and {second} at distance {distance} below the minimum spacing"
            ),
        }
    }
}

/// Positions of the N movable antennas plus the region they live in.
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    positions: Vec<Position>,
    region_size: f64,
    min_spacing: f64,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<Position>, region_size: f64, min_spacing: f64) -> Self {
        Self {
            positions,
            region_size,
            min_spacing,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn region_size(&self) -> f64 {
        self.region_size
    }

    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
    }

    pub fn x_coords(&self) -> Vec<f64> {
        self.positions.iter().map(|p| p.x).collect()
    }

    pub fn y_coords(&self) -> Vec<f64> {
        self.positions.iter().map(|p| p.y).collect()
    }

    /// Clone with antenna `index` moved to `position`.
    pub fn with_position(&self, index: usize, position: Position) -> Self {
        let mut out = self.clone();
        out.positions[index] = position;
        out
    }

    pub fn set_position(&mut self, index: usize, position: Position) {
        self.positions[index] = position;
    }

    /// Mean antenna distance from the region center.
    pub fn mean_radius(&self) -> f64 {
        if self.positions.is_empty() {
            return 0.0;
        }
        self.positions.iter().map(Position::norm).sum::<f64>() / self.positions.len() as f64
    }

    /// Population-convention moments (divide by N).
    pub fn coordinate_moments(&self) -> CoordinateMoments {
        let n = self.positions.len() as f64;
        let mean_x = self.positions.iter().map(|p| p.x).sum::<f64>() / n;
        let mean_y = self.positions.iter().map(|p| p.y).sum::<f64>() / n;
        let mut var_x = 0.0;
        let mut var_y = 0.0;
        let mut cov = 0.0;
        for p in &self.positions {
            var_x += (p.x - mean_x).powi(2);
            var_y += (p.y - mean_y).powi(2);
            cov += (p.x - mean_x) * (p.y - mean_y);
        }
        CoordinateMoments {
            mean_x,
            mean_y,
            var_x: var_x / n,
            var_y: var_y / n,
            cov: cov / n,
        }
    }

    /// Reports every region and spacing violation. Never fails.
    pub fn validate(&self) -> Vec<GeometryViolation> {
        let mut violations = Vec::new();
        let half = self.region_size / 2.0;
        for (i, p) in self.positions.iter().enumerate() {
            if p.x < -half || p.x > half || p.y < -half || p.y > half {
                violations.push(GeometryViolation::OutOfRegion {
                    index: i,
                    position: *p,
                });
            }
        }
        for i in 0..self.positions.len() {
            for j in (i + 1)..self.positions.len() {
                let d = self.positions[i].distance(&self.positions[j]);
                if d < self.min_spacing {
                    violations.push(GeometryViolation::Spacing {
                        first: i,
                        second: j,
                        distance: d,
                    });
                }
            }
        }
        violations
    }
}

/// Reports each out-of-region antenna and each pair closer than the minimum
/// spacing, with the offending distance.
pub fn validate_geometry(geometry: &ArrayGeometry) -> Vec<GeometryViolation> {
    geometry.validate()
}

/// Scenario parameters shared by the CRB engine, the estimator, and the
/// optimization harness.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// Carrier wavelength λ in meters.
    pub wavelength: f64,
    /// Side A of the square antenna moving region, meters.
    pub region_size: f64,
    /// Minimum inter-antenna spacing d_min, meters.
    pub min_spacing: f64,
    pub num_antennas: usize,
    pub num_targets: usize,
    pub num_snapshots: usize,
    /// Per-target signal power P_s (linear).
    pub signal_power: f64,
    /// Noise power σ² (linear).
    pub noise_power: f64,
    /// Half-width of the target angle box along u.
    pub u_max: f64,
    /// Half-width of the target angle box along v.
    pub v_max: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Full-scale benchmark parameters.
    pub fn paper() -> Self {
        let wavelength = 0.05;
        Self {
            wavelength,
            region_size: 12.0 * wavelength,
            min_spacing: wavelength / 2.0,
            num_antennas: 16,
            num_targets: 5,
            num_snapshots: 64,
            signal_power: 1.0,
            noise_power: 10f64.powf(-1.0), // 10 dB SNR
            u_max: 0.6,
            v_max: 0.6,
            seed: 1,
        }
    }

    /// Reduced configuration for fast local runs.
    pub fn desk() -> Self {
        let wavelength = 0.05;
        Self {
            wavelength,
            region_size: 6.0 * wavelength,
            min_spacing: wavelength / 2.0,
            num_antennas: 8,
            num_targets: 3,
            num_snapshots: 16,
            signal_power: 1.0,
            noise_power: 10f64.powf(-1.0),
            u_max: 0.6,
            v_max: 0.6,
            seed: 1,
        }
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.signal_power / self.noise_power).log10()
    }

    /// Sets σ² so that P_s/σ² equals the given SNR exactly.
    pub fn set_snr_db(&mut self, snr_db: f64) {
        self.noise_power = self.signal_power * 10f64.powf(-snr_db / 10.0);
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) {
            return Err(Error::InvalidInput("wavelength must be > 0".into()));
        }
        if !(self.region_size > 0.0) {
            return Err(Error::InvalidInput("region_size must be > 0".into()));
        }
        if self.min_spacing < 0.0 {
            return Err(Error::InvalidInput("min_spacing must be >= 0".into()));
        }
        if self.num_antennas <= self.num_targets {
            return Err(Error::InvalidInput(format!(
                "need more antennas than targets (N = {}, K = {})",
                self.num_antennas, self.num_targets
            )));
        }
        if self.num_targets == 0 || self.num_snapshots == 0 {
            return Err(Error::InvalidInput(
                "num_targets and num_snapshots must be >= 1".into(),
            ));
        }
        if !(self.signal_power > 0.0) || !(self.noise_power >= 0.0) {
            return Err(Error::InvalidInput(
                "signal_power must be > 0 and noise_power >= 0".into(),
            ));
        }
        for (name, value) in [("u_max", self.u_max), ("v_max", self.v_max)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::InvalidInput(format!("{name} must be in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Source signals, noise power, and (once synthesized) received snapshots.
#[derive(Debug, Clone)]
pub struct SnapshotBundle {
    /// K×T source matrix S.
    pub sources: DMatrix<Complex64>,
    /// Noise power σ² per received entry.
    pub noise_power: f64,
    /// Cached N×K steering matrix of the generating targets.
    pub steering: DMatrix<Complex64>,
    /// N×T received matrix Y, filled by `synthesize_snapshots`.
    pub received: Option<DMatrix<Complex64>>,
}

impl SnapshotBundle {
    pub fn new(sources: DMatrix<Complex64>, noise_power: f64) -> Self {
        Self {
            sources,
            noise_power,
            steering: DMatrix::zeros(0, 0),
            received: None,
        }
    }
}

/// Per-entry steering response `exp(j·(2π/λ)·(x_n·u + y_n·v))`.
pub fn steering_vector(
    geometry: &ArrayGeometry,
    angle: &SpatialAngle,
    wavelength: f64,
) -> Result<DVector<Complex64>> {
    check_steering_inputs(geometry, angle, wavelength)?;
    let wave = 2.0 * std::f64::consts::PI / wavelength;
    Ok(DVector::from_iterator(
        geometry.num_antennas(),
        geometry
            .positions()
            .iter()
            .map(|p| Complex64::from_polar(1.0, wave * (p.x * angle.u + p.y * angle.v))),
    ))
}

/// N×K matrix whose k-th column is the steering vector of target k.
pub fn steering_matrix(
    geometry: &ArrayGeometry,
    targets: &TargetSet,
    wavelength: f64,
) -> Result<DMatrix<Complex64>> {
    let n = geometry.num_antennas();
    let k = targets.len();
    let mut a = DMatrix::zeros(n, k);
    for (j, angle) in targets.angles().iter().enumerate() {
        a.set_column(j, &steering_vector(geometry, angle, wavelength)?);
    }
    Ok(a)
}

/// Angular derivatives of the steering vector:
/// `ȧ_u[n] = j(2π/λ)·x_n·a[n]` and `ȧ_v[n] = j(2π/λ)·y_n·a[n]`.
pub fn steering_derivatives(
    geometry: &ArrayGeometry,
    angle: &SpatialAngle,
    wavelength: f64,
) -> Result<(DVector<Complex64>, DVector<Complex64>)> {
    let a = steering_vector(geometry, angle, wavelength)?;
    let wave = 2.0 * std::f64::consts::PI / wavelength;
    let n = geometry.num_antennas();
    let mut du = DVector::zeros(n);
    let mut dv = DVector::zeros(n);
    for (i, p) in geometry.positions().iter().enumerate() {
        let j_wave_a = Complex64::new(0.0, wave) * a[i];
        du[i] = j_wave_a * p.x;
        dv[i] = j_wave_a * p.y;
    }
    Ok((du, dv))
}

/// N×K derivative matrices (Ȧ_u, Ȧ_v) over a target set.
pub fn derivative_matrices(
    geometry: &ArrayGeometry,
    targets: &TargetSet,
    wavelength: f64,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let n = geometry.num_antennas();
    let k = targets.len();
    let mut au = DMatrix::zeros(n, k);
    let mut av = DMatrix::zeros(n, k);
    for (j, angle) in targets.angles().iter().enumerate() {
        let (du, dv) = steering_derivatives(geometry, angle, wavelength)?;
        au.set_column(j, &du);
        av.set_column(j, &dv);
    }
    Ok((au, av))
}

fn check_steering_inputs(
    geometry: &ArrayGeometry,
    angle: &SpatialAngle,
    wavelength: f64,
) -> Result<()> {
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::InvalidInput(format!(
            "wavelength {wavelength} must be finite and > 0"
        )));
    }
    if !angle.is_finite() {
        return Err(Error::InvalidInput(format!(
            "non-finite angle ({}, {})",
            angle.u, angle.v
        )));
    }
    if let Some((i, p)) = geometry
        .positions()
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite())
    {
        return Err(Error::InvalidInput(format!(
            "non-finite position ({}, {}) at antenna {i}",
            p.x, p.y
        )));
    }
    Ok(())
}

/// K×T circularly-symmetric complex Gaussian source matrix with each row
/// rescaled so `‖s_k‖² = T·P_s` exactly.
pub fn equal_power_sources<R: Rng>(
    num_targets: usize,
    num_snapshots: usize,
    signal_power: f64,
    rng: &mut R,
) -> DMatrix<Complex64> {
    let target_energy = (signal_power * num_snapshots as f64).sqrt();
    let mut s = cscg_matrix(num_targets, num_snapshots, 1.0, rng);
    for k in 0..num_targets {
        let norm = s.row(k).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            let scale = Complex64::new(target_energy / norm, 0.0);
            for t in 0..num_snapshots {
                s[(k, t)] *= scale;
            }
        }
    }
    s
}

/// Matrix of i.i.d. circularly-symmetric complex Gaussians with per-entry
/// variance `variance`.
pub fn cscg_matrix<R: Rng>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> DMatrix<Complex64> {
    let sigma = (variance / 2.0).sqrt();
    // Column-major fill keeps the draw order independent of the caller.
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(sigma * re, sigma * im)
    })
}

/// Fills the received matrix: `Y = A·S + Z` with i.i.d. CSCG noise of
/// per-entry variance σ². Deterministic given the generator state.
pub fn synthesize_snapshots<R: Rng>(
    geometry: &ArrayGeometry,
    targets: &TargetSet,
    mut bundle: SnapshotBundle,
    wavelength: f64,
    rng: &mut R,
) -> Result<SnapshotBundle> {
    let k = targets.len();
    if bundle.sources.nrows() != k {
        return Err(Error::InvalidInput(format!(
            "source matrix has {} rows but there are {k} targets",
            bundle.sources.nrows()
        )));
    }
    let a = steering_matrix(geometry, targets, wavelength)?;
    let mut y = &a * &bundle.sources;
    if bundle.noise_power > 0.0 {
        let z = cscg_matrix(y.nrows(), y.ncols(), bundle.noise_power, rng);
        y += z;
    }
    bundle.steering = a;
    bundle.received = Some(y);
    Ok(bundle)
}

/// Sample covariance `(1/T)·Y·Yᴴ`. The 1/T normalization keeps eigenvalues at
/// signal-power scale; subspaces are invariant to it.
pub fn sample_covariance(received: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if received.ncols() == 0 || received.nrows() == 0 {
        return Err(Error::InvalidInput("empty snapshot matrix".into()));
    }
    let t = received.ncols() as f64;
    let mut r = received * received.adjoint();
    r.scale_mut(1.0 / t);
    // Force exact Hermitian symmetry against rounding.
    let rh = r.adjoint();
    Ok((&r + &rh).scale(0.5))
}
