//! Frozen Monte-Carlo sample sets and the sample-average CRB-trace objective.
//!
//! One sample set is drawn up front and reused across the entire optimization
//! (common random numbers), so the objective is a fixed deterministic function
//! of the geometry and line-search comparisons never compare noise.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::crb::crb_matrix;
use crate::error::{Error, Result};
use crate::model::{equal_power_sources, ArrayGeometry, ScenarioConfig, TargetSet};

/// One realization: a target draw and its equal-power source matrix.
#[derive(Debug, Clone)]
pub struct McSample {
    pub targets: TargetSet,
    pub sources: DMatrix<Complex64>,
}

/// M frozen realizations drawn from one scenario.
#[derive(Debug, Clone)]
pub struct MonteCarloSampleSet {
    samples: Vec<McSample>,
    wavelength: f64,
}

impl MonteCarloSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[McSample] {
        &self.samples
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }
}

/// Fraction of the angle-box half-width below which a target draw counts as
/// coincident and is redrawn. Scales to zero for degenerate boxes so those
/// stay drawable.
pub const TARGET_SEPARATION_FRACTION: f64 = 1e-2;

/// Draws `m` i.i.d. realizations: K angles uniform on the box (coincident
/// draws rejected and redrawn) and K×T equal-power Gaussian sources.
pub fn draw_sample_set<R: Rng>(
    scenario: &ScenarioConfig,
    m: usize,
    rng: &mut R,
) -> Result<MonteCarloSampleSet> {
    if m == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    let min_separation = TARGET_SEPARATION_FRACTION * scenario.u_max.max(scenario.v_max);
    let mut samples = Vec::with_capacity(m);
    for _ in 0..m {
        let targets = TargetSet::sample(
            scenario.num_targets,
            scenario.u_max,
            scenario.v_max,
            min_separation,
            rng,
        )?;
        let sources = equal_power_sources(
            scenario.num_targets,
            scenario.num_snapshots,
            scenario.signal_power,
            rng,
        );
        samples.push(McSample { targets, sources });
    }
    Ok(MonteCarloSampleSet {
        samples,
        wavelength: scenario.wavelength,
    })
}

/// Threshold above which the per-sample CRB evaluations run on the thread
/// pool. The reduction order is fixed by sample index either way, so the
/// result is bit-identical across schedules.
const PARALLEL_SAMPLE_THRESHOLD: usize = 64;

/// Sample-average CRB trace `ψ̃(q̃) = (1/M)·Σ tr(CRB_m)`.
pub fn expected_crb_trace(
    geometry: &ArrayGeometry,
    samples: &MonteCarloSampleSet,
    noise_power: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty sample set".into()));
    }
    let eval = |(index, sample): (usize, &McSample)| {
        crb_matrix(
            geometry,
            &sample.targets,
            &sample.sources,
            noise_power,
            samples.wavelength,
        )
        .map(|crb| crb.trace)
        .map_err(|e| Error::Singular(format!("sample #{index}: {e}")))
    };
    let traces: Vec<f64> = if samples.len() >= PARALLEL_SAMPLE_THRESHOLD {
        samples
            .samples()
            .par_iter()
            .enumerate()
            .map(eval)
            .collect::<Result<Vec<f64>>>()?
    } else {
        samples
            .samples()
            .iter()
            .enumerate()
            .map(eval)
            .collect::<Result<Vec<f64>>>()?
    };
    Ok(traces.iter().sum::<f64>() / traces.len() as f64)
}
