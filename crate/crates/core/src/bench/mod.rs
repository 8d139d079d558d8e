//! Benchmark harness: scheme geometries, parameter sweeps over the scenario
//! axes, and the diagnostic reports behind the correlation/spectrum plots.
//!
//! Geometry design happens once per sweep point (the array is configured from
//! the target distribution, not per realization); evaluation then averages
//! the CRB trace and the MUSIC MSE over fresh, per-trial seeded target draws.
//! Curve rows are appended to `curves.csv` as they finish so an interrupted
//! sweep resumes where it stopped.

mod baselines;

pub use baselines::{
    dense_upa, optimize_proposed, single_target_ma_baseline, sparse_upa, upa_lattice,
};

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::crb::{crb_matrix, lower_bound, sensitivity_diagnostics, steering_correlation_map};
use crate::error::{Error, Result};
use crate::grid::AngleGrid;
use crate::model::{
    equal_power_sources, sample_covariance, synthesize_snapshots, ArrayGeometry, ScenarioConfig,
    SnapshotBundle, SpatialAngle, TargetSet,
};
use crate::music::{assignment_error, estimate_aoas, music_spectrum};
use crate::rng::{stream_rng, streams, substream};
use crate::swarm::{SwarmParams, TARGET_SEPARATION_FRACTION};

/// Harness-level knobs shared by the CLI subcommands.
#[derive(Debug, Clone)]
pub struct HarnessOptions {
    /// Monte-Carlo sample count M for the optimizer objective.
    pub num_samples: usize,
    /// Evaluation trials per sweep point / diagnostics run.
    pub trials: usize,
    /// MUSIC and correlation grid resolution per axis.
    pub grid_resolution: usize,
}

impl HarnessOptions {
    pub fn paper() -> Self {
        Self {
            num_samples: 100,
            trials: 200,
            grid_resolution: 401,
        }
    }

    pub fn desk() -> Self {
        Self {
            num_samples: 20,
            trials: 20,
            grid_resolution: 201,
        }
    }
}

/// Benchmark schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    ProposedMa,
    SingleTargetMa,
    DenseUpa,
    SparseUpa,
    LowerBound,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::ProposedMa,
        Scheme::SingleTargetMa,
        Scheme::DenseUpa,
        Scheme::SparseUpa,
        Scheme::LowerBound,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ProposedMa => "proposed_ma",
            Scheme::SingleTargetMa => "single_target_ma",
            Scheme::DenseUpa => "dense_upa",
            Scheme::SparseUpa => "sparse_upa",
            Scheme::LowerBound => "lower_bound",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed_ma" => Ok(Scheme::ProposedMa),
            "single_target_ma" => Ok(Scheme::SingleTargetMa),
            "dense_upa" => Ok(Scheme::DenseUpa),
            "sparse_upa" => Ok(Scheme::SparseUpa),
            "lower_bound" => Ok(Scheme::LowerBound),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

/// The scenario axis a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    SnrDb,
    NumSnapshots,
    NumTargets,
    RegionSizeOverLambda,
    AngleRange,
    NumAntennas,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::SnrDb => "snr_db",
            SweepParameter::NumSnapshots => "num_snapshots",
            SweepParameter::NumTargets => "num_targets",
            SweepParameter::RegionSizeOverLambda => "region_size_over_lambda",
            SweepParameter::AngleRange => "angle_range",
            SweepParameter::NumAntennas => "num_antennas",
        }
    }

    /// Applies one swept value to a copy of the base scenario.
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut scenario = base.clone();
        match self {
            SweepParameter::SnrDb => scenario.set_snr_db(value),
            SweepParameter::NumSnapshots => scenario.num_snapshots = as_count(value)?,
            SweepParameter::NumTargets => scenario.num_targets = as_count(value)?,
            SweepParameter::RegionSizeOverLambda => {
                scenario.region_size = value * scenario.wavelength
            }
            SweepParameter::AngleRange => {
                scenario.u_max = value;
                scenario.v_max = value;
            }
            SweepParameter::NumAntennas => scenario.num_antennas = as_count(value)?,
        }
        scenario.validate()?;
        Ok(scenario)
    }
}

fn as_count(value: f64) -> Result<usize> {
    if value.fract() != 0.0 || value < 1.0 {
        return Err(Error::InvalidInput(format!(
            "swept count {value} must be a positive integer"
        )));
    }
    Ok(value as usize)
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr_db" => Ok(SweepParameter::SnrDb),
            "num_snapshots" => Ok(SweepParameter::NumSnapshots),
            "num_targets" => Ok(SweepParameter::NumTargets),
            "region_size_over_lambda" => Ok(SweepParameter::RegionSizeOverLambda),
            "angle_range" => Ok(SweepParameter::AngleRange),
            "num_antennas" => Ok(SweepParameter::NumAntennas),
            other => Err(Error::Config(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

/// One sweep description: which axis, which values, how many trials per
/// point, and which schemes to run.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub trials_per_point: usize,
    pub schemes: Vec<Scheme>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            parameter: SweepParameter::SnrDb,
            values: Vec::new(),
            trials_per_point: 200,
            schemes: Scheme::ALL.to_vec(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidInput("sweep has no values".into()));
        }
        if self.values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("sweep values must be sorted".into()));
        }
        if self.trials_per_point == 0 {
            return Err(Error::InvalidInput("trials_per_point must be >= 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidInput("sweep has no schemes".into()));
        }
        Ok(())
    }
}

/// One evaluated (scheme, x) pair.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub scheme: Scheme,
    pub x_value: f64,
    pub crb_trace_mean: f64,
    /// NaN for the formula-only lower-bound scheme.
    pub mse_mean: f64,
    /// Successful trials behind the means.
    pub trials: usize,
    pub failed_trials: usize,
    /// More than 1% of trials failed.
    pub flagged: bool,
    pub seed_base: u64,
}

impl CurvePoint {
    fn csv_row(&self) -> String {
        let mse = if self.mse_mean.is_nan() {
            String::new()
        } else {
            format!("{:e}", self.mse_mean)
        };
        format!(
            "{},{},{:e},{},{}\n",
            self.scheme, self.x_value, self.crb_trace_mean, mse, self.trials
        )
    }
}

/// Result of a full sweep run.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<CurvePoint>,
    /// Any point flagged (failure rate above 1%).
    pub flagged: bool,
}

/// Averaged CRB trace and MUSIC MSE for one geometry over seeded trials.
#[derive(Debug, Clone, Copy)]
pub struct PointEvaluation {
    pub crb_trace_mean: f64,
    pub mse_mean: f64,
    pub successes: usize,
    pub failures: usize,
}

/// Evaluates one geometry over `trials` independent target draws. When
/// `grid_resolution` is zero the MUSIC stage is skipped and `mse_mean` is NaN.
pub fn evaluate_point(
    geometry: &ArrayGeometry,
    scenario: &ScenarioConfig,
    trials: usize,
    point_seed: u64,
    grid_resolution: usize,
) -> Result<PointEvaluation> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let grid = (grid_resolution > 0).then(|| {
        AngleGrid::symmetric(
            scenario.u_max,
            scenario.v_max,
            grid_resolution,
            grid_resolution,
        )
    });
    let min_separation = TARGET_SEPARATION_FRACTION * scenario.u_max.max(scenario.v_max);

    let results: Vec<Result<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(point_seed, &[streams::TRIAL, trial as u64]);
            let targets = TargetSet::sample(
                scenario.num_targets,
                scenario.u_max,
                scenario.v_max,
                min_separation,
                &mut rng,
            )?;
            let sources = equal_power_sources(
                scenario.num_targets,
                scenario.num_snapshots,
                scenario.signal_power,
                &mut rng,
            );
            let crb = crb_matrix(
                geometry,
                &targets,
                &sources,
                scenario.noise_power,
                scenario.wavelength,
            )?;
            let mse = match &grid {
                Some(grid) => {
                    let bundle = SnapshotBundle::new(sources, scenario.noise_power);
                    let out = synthesize_snapshots(
                        geometry,
                        &targets,
                        bundle,
                        scenario.wavelength,
                        &mut rng,
                    )?;
                    let cov = sample_covariance(out.received.as_ref().expect("filled"))?;
                    let spectrum = music_spectrum(
                        &cov,
                        geometry,
                        scenario.num_targets,
                        grid,
                        scenario.wavelength,
                    )?;
                    let peaks = estimate_aoas(&spectrum, scenario.num_targets);
                    assignment_error(targets.angles(), &peaks.angles)?.total_sq_error
                }
                None => f64::NAN,
            };
            Ok((crb.trace, mse))
        })
        .collect();

    let mut crb_sum = 0.0;
    let mut mse_sum = 0.0;
    let mut successes = 0usize;
    let mut failures = 0usize;
    for result in results {
        match result {
            Ok((crb, mse)) => {
                crb_sum += crb;
                mse_sum += mse;
                successes += 1;
            }
            Err(_) => failures += 1,
        }
    }
    if successes == 0 {
        return Err(Error::Singular(format!(
            "all {trials} evaluation trials failed"
        )));
    }
    Ok(PointEvaluation {
        crb_trace_mean: crb_sum / successes as f64,
        mse_mean: if grid.is_some() {
            mse_sum / successes as f64
        } else {
            f64::NAN
        },
        successes,
        failures,
    })
}

/// Designs the geometry a scheme uses under one scenario. `None` for the
/// formula-only lower bound.
pub fn scheme_geometry(
    scheme: Scheme,
    scenario: &ScenarioConfig,
    swarm: &SwarmParams,
    num_samples: usize,
) -> Result<Option<ArrayGeometry>> {
    match scheme {
        Scheme::DenseUpa => Ok(Some(dense_upa(scenario))),
        Scheme::SparseUpa => Ok(Some(sparse_upa(scenario)?)),
        Scheme::ProposedMa => Ok(Some(
            optimize_proposed(scenario, swarm, num_samples)?.geometry,
        )),
        Scheme::SingleTargetMa => Ok(Some(single_target_ma_baseline(
            scenario,
            swarm,
            num_samples,
        )?)),
        Scheme::LowerBound => Ok(None),
    }
}

/// Runs a full sweep. When `out_dir` is given, rows append to `curves.csv`
/// incrementally and already-present (scheme, x) rows are skipped, so an
/// interrupted run resumes.
pub fn run_sweep(
    sweep: &SweepSpec,
    scenario: &ScenarioConfig,
    swarm: &SwarmParams,
    harness: &HarnessOptions,
    out_dir: Option<&Path>,
) -> Result<SweepOutcome> {
    sweep.validate()?;
    let mut done: HashSet<(String, String)> = HashSet::new();
    let mut points: Vec<CurvePoint> = Vec::new();

    let curves_path = out_dir.map(|d| d.join("curves.csv"));
    if let Some(path) = &curves_path {
        if path.exists() {
            for point in parse_curves_csv(&fs::read_to_string(path)?, sweep)? {
                done.insert((point.scheme.name().to_string(), point.x_value.to_string()));
                points.push(point);
            }
        } else {
            fs::write(path, "scheme,x,crb,mse,trials\n")?;
        }
    }

    for &scheme in &sweep.schemes {
        for &x in &sweep.values {
            if done.contains(&(scheme.name().to_string(), x.to_string())) {
                continue;
            }
            let point = run_sweep_point(sweep, scenario, swarm, harness, scheme, x)?;
            if let Some(path) = &curves_path {
                let mut file = fs::OpenOptions::new().append(true).open(path)?;
                file.write_all(point.csv_row().as_bytes())?;
                file.flush()?;
            }
            points.push(point);
        }
    }

    let flagged = points.iter().any(|p| p.flagged);
    Ok(SweepOutcome { points, flagged })
}

fn run_sweep_point(
    sweep: &SweepSpec,
    scenario: &ScenarioConfig,
    swarm: &SwarmParams,
    harness: &HarnessOptions,
    scheme: Scheme,
    x: f64,
) -> Result<CurvePoint> {
    let scenario_x = sweep.parameter.apply(scenario, x)?;
    // Evaluation draws are shared across schemes and sweep values (common
    // random numbers): scheme curves are paired, and sweeps over pure scale
    // parameters such as SNR inherit the exact σ² monotonicity of the CRB.
    let seed_base = substream(scenario.seed, &[streams::SWEEP_POINT]);
    // Geometry design keeps the scenario seed; the scheme-specific streams
    // already separate its draws from evaluation.
    let design_scenario = scenario_x.clone();

    match scheme_geometry(scheme, &design_scenario, swarm, harness.num_samples)? {
        Some(geometry) => {
            let eval = evaluate_point(
                &geometry,
                &scenario_x,
                sweep.trials_per_point,
                seed_base,
                harness.grid_resolution,
            )?;
            let flagged = eval.failures as f64 > 0.01 * sweep.trials_per_point as f64;
            Ok(CurvePoint {
                scheme,
                x_value: x,
                crb_trace_mean: eval.crb_trace_mean,
                mse_mean: eval.mse_mean,
                trials: eval.successes,
                failed_trials: eval.failures,
                flagged,
                seed_base,
            })
        }
        None => {
            // Formula-only bound; any non-degenerate geometry moments would
            // do, but only bound_b (region form) is reported on curves.
            let reference = sparse_upa(&scenario_x)?;
            let bounds = lower_bound(&reference, &scenario_x)?;
            Ok(CurvePoint {
                scheme,
                x_value: x,
                crb_trace_mean: bounds.bound_b,
                mse_mean: f64::NAN,
                trials: 0,
                failed_trials: 0,
                flagged: false,
                seed_base,
            })
        }
    }
}

fn parse_curves_csv(text: &str, sweep: &SweepSpec) -> Result<Vec<CurvePoint>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Config(format!(
                "curves.csv line {}: expected 5 fields",
                lineno + 1
            )));
        }
        let scheme = fields[0].parse::<Scheme>()?;
        let x_value = fields[1]
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("curves.csv line {}: bad x", lineno + 1)))?;
        let crb = fields[2]
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("curves.csv line {}: bad crb", lineno + 1)))?;
        let mse = if fields[3].is_empty() {
            f64::NAN
        } else {
            fields[3]
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("curves.csv line {}: bad mse", lineno + 1)))?
        };
        let trials = fields[4]
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("curves.csv line {}: bad trials", lineno + 1)))?;
        let failed_trials = if scheme == Scheme::LowerBound {
            0
        } else {
            sweep.trials_per_point.saturating_sub(trials)
        };
        points.push(CurvePoint {
            scheme,
            x_value,
            crb_trace_mean: crb,
            mse_mean: mse,
            trials,
            failed_trials,
            flagged: failed_trials as f64 > 0.01 * sweep.trials_per_point as f64,
            seed_base: 0,
        });
    }
    Ok(points)
}

/// ρ̄ and ω̄ averaged over seeded target draws, plus the per-draw failure
/// count. Draws depend only on the scenario seed, so different geometries
/// evaluated under the same scenario are paired.
pub fn mean_sensitivity(
    geometry: &ArrayGeometry,
    scenario: &ScenarioConfig,
    trials: usize,
) -> Result<(f64, f64, usize)> {
    let min_separation = TARGET_SEPARATION_FRACTION * scenario.u_max.max(scenario.v_max);
    let mut rho_sum = 0.0;
    let mut omega_sum = 0.0;
    let mut successes = 0usize;
    let mut failures = 0usize;
    for trial in 0..trials {
        let mut rng = stream_rng(
            scenario.seed,
            &[streams::DIAGNOSTICS, streams::TRIAL, trial as u64],
        );
        let targets = TargetSet::sample(
            scenario.num_targets,
            scenario.u_max,
            scenario.v_max,
            min_separation,
            &mut rng,
        )?;
        match sensitivity_diagnostics(geometry, &targets, scenario.wavelength) {
            Ok(diag) => {
                rho_sum += diag.rho_mean;
                omega_sum += diag.omega_mean;
                successes += 1;
            }
            Err(_) => failures += 1,
        }
    }
    if successes == 0 {
        return Err(Error::DegenerateGeometry(
            "all sensitivity draws failed".into(),
        ));
    }
    Ok((
        rho_sum / successes as f64,
        omega_sum / successes as f64,
        failures,
    ))
}

/// Diagnostics for one geometry: sensitivity aggregates, a steering
/// correlation grid around the reference target, and one seeded MUSIC
/// realization (spectrum plus its assignment MSE).
#[derive(Debug, Clone)]
pub struct DiagnosticsSummary {
    pub rho_mean: f64,
    pub omega_mean: f64,
    pub realization_mse: f64,
    pub estimated_angles: Vec<SpatialAngle>,
    /// Peak extraction had to pad (fewer than K local maxima).
    pub flagged: bool,
}

/// Builds the diagnostics for one geometry. When `out_dir` is given, writes
/// `correlation_grid.csv` and `spectrum_grid.csv` there.
pub fn diagnostics_report(
    geometry: &ArrayGeometry,
    scenario: &ScenarioConfig,
    reference_target: &SpatialAngle,
    harness: &HarnessOptions,
    out_dir: Option<&Path>,
) -> Result<DiagnosticsSummary> {
    let (rho_mean, omega_mean, _) = mean_sensitivity(geometry, scenario, harness.trials)?;

    let grid = AngleGrid::symmetric(
        scenario.u_max,
        scenario.v_max,
        harness.grid_resolution,
        harness.grid_resolution,
    );
    let correlation =
        steering_correlation_map(geometry, reference_target, &grid, scenario.wavelength)?;

    // One seeded realization with the reference pinned as the K-th target.
    let min_separation = TARGET_SEPARATION_FRACTION * scenario.u_max.max(scenario.v_max);
    let mut rng = stream_rng(scenario.seed, &[streams::DIAGNOSTICS, streams::SIGNALS]);
    let targets = loop {
        let mut angles = TargetSet::sample(
            scenario.num_targets.saturating_sub(1),
            scenario.u_max,
            scenario.v_max,
            min_separation,
            &mut rng,
        )?
        .angles()
        .to_vec();
        angles.push(*reference_target);
        let candidate = TargetSet::new(angles);
        let separated = candidate
            .min_separation()
            .is_none_or(|(_, _, d)| d >= min_separation);
        if separated || min_separation <= 0.0 {
            break candidate;
        }
    };
    let sources = equal_power_sources(
        scenario.num_targets,
        scenario.num_snapshots,
        scenario.signal_power,
        &mut rng,
    );
    let bundle = SnapshotBundle::new(sources, scenario.noise_power);
    let out = synthesize_snapshots(geometry, &targets, bundle, scenario.wavelength, &mut rng)?;
    let cov = sample_covariance(out.received.as_ref().expect("filled"))?;
    let spectrum = music_spectrum(
        &cov,
        geometry,
        scenario.num_targets,
        &grid,
        scenario.wavelength,
    )?;
    let peaks = estimate_aoas(&spectrum, scenario.num_targets);
    let scored = assignment_error(targets.angles(), &peaks.angles)?;

    if let Some(dir) = out_dir {
        crate::io::write_grid_csv(&dir.join("correlation_grid.csv"), &correlation)?;
        crate::io::write_grid_csv(&dir.join("spectrum_grid.csv"), &spectrum.to_grid_values())?;
    }

    Ok(DiagnosticsSummary {
        rho_mean,
        omega_mean,
        realization_mse: scored.total_sq_error,
        estimated_angles: scored.estimated_angles,
        flagged: peaks.padded || spectrum.eigenvalue_tie,
    })
}

/// Exclusion radius around the reference direction when scanning for
/// grating lobes: the main lobe of every array in scope is narrower, every
/// grating lobe in the box is farther.
pub const GRATING_EXCLUSION_RADIUS: f64 = 0.15;

/// True when the steering correlation exceeds 0.99 anywhere farther than
/// [`GRATING_EXCLUSION_RADIUS`] from the reference angle.
pub fn has_grating_lobe(
    geometry: &ArrayGeometry,
    scenario: &ScenarioConfig,
    reference: &SpatialAngle,
    grid_resolution: usize,
) -> Result<bool> {
    let grid = AngleGrid::symmetric(
        scenario.u_max,
        scenario.v_max,
        grid_resolution,
        grid_resolution,
    );
    let map = steering_correlation_map(geometry, reference, &grid, scenario.wavelength)?;
    for (i, &u) in map.grid.u.iter().enumerate() {
        for (j, &v) in map.grid.v.iter().enumerate() {
            let distance = ((u - reference.u).powi(2) + (v - reference.v).powi(2)).sqrt();
            if distance > GRATING_EXCLUSION_RADIUS && map.values[(i, j)] > 0.99 {
                return Ok(true);
            }
        }
    }
    Ok(false)
}
