//! Antenna-position optimization: per-antenna alternating optimization with
//! swarm-based gradient descent over the Monte-Carlo expected CRB trace.
//!
//! One antenna is optimized at a time against a swarm of I candidate
//! positions. Agent 1 always carries the incumbent position, so the committed
//! objective can never worsen; the other agents are drawn feasibly at random
//! and let the search escape local basins. Mass transfers toward the current
//! best agent shrink the step-acceptance threshold of heavy (good) agents and
//! keep light (bad) agents exploratory.

mod samples;
mod step;

pub use samples::{
    draw_sample_set, expected_crb_trace, McSample, MonteCarloSampleSet, TARGET_SEPARATION_FRACTION,
};
pub use step::{
    backtracking_step, numeric_gradient, project_to_region, spacing_ok, update_masses, StepContext,
    StepOutcome, SwarmAgent,
};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ArrayGeometry, Position, ScenarioConfig};
use crate::rng::{stream_rng, streams};

/// Swarm and line-search parameters of the optimizer.
#[derive(Debug, Clone)]
pub struct SwarmParams {
    /// Number of agents I.
    pub num_agents: usize,
    /// Mass-transfer exponent p.
    pub mass_exponent: f64,
    /// Step-size exponent q in β = g̃^q.
    pub step_exponent: f64,
    /// Largest trial step τ_max in meters.
    pub max_step: f64,
    /// Backtracking shrink factor ς.
    pub shrink_factor: f64,
    /// Sufficient-decrease coefficient ξ.
    pub armijo: f64,
    /// Outer (alternating-optimization) iteration cap J.
    pub max_outer: usize,
    /// Inner (swarm) iteration cap L per antenna.
    pub max_inner: usize,
    /// Line-search trial cap B.
    pub max_backtracks: usize,
    /// Relative-decrease termination threshold ε.
    pub tolerance: f64,
    /// Finite-difference probe step δ in meters.
    pub gradient_step: f64,
}

impl SwarmParams {
    /// Full-scale settings: I = 25, p = 2, q = 0.5, τ_max = 0.25λ, ξ = 0.6,
    /// J = L = 50, ε = 1e-3.
    pub fn paper(wavelength: f64) -> Self {
        Self {
            num_agents: 25,
            mass_exponent: 2.0,
            step_exponent: 0.5,
            max_step: 0.25 * wavelength,
            shrink_factor: 0.5,
            armijo: 0.6,
            max_outer: 50,
            max_inner: 50,
            max_backtracks: 40,
            tolerance: 1e-3,
            gradient_step: 1e-4 * wavelength,
        }
    }

    /// Reduced settings for fast local runs.
    pub fn desk(wavelength: f64) -> Self {
        Self {
            num_agents: 8,
            max_outer: 10,
            max_inner: 10,
            ..Self::paper(wavelength)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(Error::InvalidInput("need at least one agent".into()));
        }
        if !(self.mass_exponent > 0.0) || !(self.step_exponent > 0.0) {
            return Err(Error::InvalidInput(
                "mass and step exponents must be > 0".into(),
            ));
        }
        if !(self.max_step > 0.0) || !(self.gradient_step > 0.0) {
            return Err(Error::InvalidInput(
                "max_step and gradient_step must be > 0".into(),
            ));
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return Err(Error::InvalidInput(
                "shrink_factor must be in (0, 1)".into(),
            ));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidInput("armijo must be in (0, 1)".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput("tolerance must be > 0".into()));
        }
        if self.max_backtracks == 0 {
            return Err(Error::InvalidInput("max_backtracks must be >= 1".into()));
        }
        Ok(())
    }
}

/// One committed inner iteration of the optimizer trace.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    /// Outer (AO) pass, 1-based.
    pub outer: usize,
    /// Antenna index being optimized.
    pub antenna: usize,
    /// Inner swarm iteration, 1-based.
    pub inner: usize,
    /// Committed (best-agent) objective after this iteration.
    pub objective: f64,
}

/// Result of one optimization run.
#[derive(Debug, Clone)]
pub struct OptimizationOutcome {
    pub geometry: ArrayGeometry,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// One record per committed inner iteration, in execution order.
    pub trace: Vec<IterationRecord>,
    /// Number of agents that fell back to the incumbent position because
    /// feasible random initialization failed.
    pub init_fallbacks: usize,
}

/// Rejection-sampling attempts per agent before falling back to the
/// incumbent position.
const AGENT_INIT_ATTEMPTS: usize = 1000;

/// Minimizes the expected CRB trace over the frozen sample set by alternating
/// per-antenna swarm descent. Both loops stop early once the relative
/// objective decrease drops to `tolerance` or below.
pub fn optimize_positions(
    scenario: &ScenarioConfig,
    params: &SwarmParams,
    samples: &MonteCarloSampleSet,
    initial_geometry: &ArrayGeometry,
) -> Result<OptimizationOutcome> {
    params.validate()?;
    // Feasibility is judged against the scenario's constraints, which are
    // the ones the search enforces.
    let constrained = ArrayGeometry::new(
        initial_geometry.positions().to_vec(),
        scenario.region_size,
        scenario.min_spacing,
    );
    let violations = constrained.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidInput(format!(
            "initial geometry infeasible: {}",
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }

    let noise_power = scenario.noise_power;
    let mut geometry = initial_geometry.clone();
    let initial_objective = expected_crb_trace(&geometry, samples, noise_power)?;
    let mut incumbent = initial_objective;
    let mut trace = Vec::new();
    let mut init_fallbacks = 0usize;
    let mut agent_rng = stream_rng(scenario.seed, &[streams::AGENTS]);

    for outer in 1..=params.max_outer {
        let pass_start = incumbent;
        for antenna in 0..geometry.num_antennas() {
            // The inner loop only moves this antenna; the others stay frozen,
            // so the objective can work off a per-antenna snapshot.
            let base = geometry.clone();
            let fixed: Vec<Position> = base
                .positions()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != antenna)
                .map(|(_, &p)| p)
                .collect();
            let objective = |candidate: Position| {
                expected_crb_trace(
                    &base.with_position(antenna, candidate),
                    samples,
                    noise_power,
                )
            };

            let mut agents = init_swarm(
                base.positions()[antenna],
                incumbent,
                &objective,
                params,
                &fixed,
                scenario,
                &mut agent_rng,
                &mut init_fallbacks,
            )?;

            let mut committed_position = base.positions()[antenna];
            let mut previous = incumbent;
            for inner in 1..=params.max_inner {
                update_masses(&mut agents, params.mass_exponent);
                let ctx = StepContext {
                    fixed_antennas: &fixed,
                    min_spacing: scenario.min_spacing,
                    region_size: scenario.region_size,
                    max_step: params.max_step,
                    shrink_factor: params.shrink_factor,
                    armijo: params.armijo,
                    max_backtracks: params.max_backtracks,
                };
                let outcomes: Vec<StepOutcome> = agents
                    .par_iter()
                    .map(|agent| {
                        let gradient = numeric_gradient(
                            objective,
                            agent.position,
                            params.gradient_step,
                            scenario.region_size,
                        )?;
                        let beta = agent.relative_mass.powf(params.step_exponent);
                        backtracking_step(objective, agent, gradient, beta, &ctx)
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (agent, outcome) in agents.iter_mut().zip(&outcomes) {
                    agent.position = outcome.position;
                    agent.objective = outcome.objective;
                }

                let best = step::argmin(&agents);
                debug_assert!(agents[best].objective <= incumbent + 1e-12 * incumbent.abs());
                committed_position = agents[best].position;
                incumbent = agents[best].objective;
                trace.push(IterationRecord {
                    outer,
                    antenna,
                    inner,
                    objective: incumbent,
                });

                let decrease = (previous - incumbent) / previous.abs().max(f64::MIN_POSITIVE);
                previous = incumbent;
                if decrease <= params.tolerance {
                    break;
                }
            }
            geometry.set_position(antenna, committed_position);
        }
        let pass_decrease = (pass_start - incumbent) / pass_start.abs().max(f64::MIN_POSITIVE);
        if pass_decrease <= params.tolerance {
            break;
        }
    }

    Ok(OptimizationOutcome {
        geometry,
        initial_objective,
        final_objective: incumbent,
        trace,
        init_fallbacks,
    })
}

/// Builds the swarm for one antenna: agent 1 at the incumbent position, the
/// rest drawn uniformly over the region subject to the spacing constraint
/// against the fixed antennas. Initial masses are 1/I.
#[allow(clippy::too_many_arguments)]
fn init_swarm<R: Rng>(
    incumbent_position: Position,
    incumbent_objective: f64,
    objective: &(impl Fn(Position) -> Result<f64> + Sync),
    params: &SwarmParams,
    fixed: &[Position],
    scenario: &ScenarioConfig,
    rng: &mut R,
    init_fallbacks: &mut usize,
) -> Result<Vec<SwarmAgent>> {
    let mass = 1.0 / params.num_agents as f64;
    let half = scenario.region_size / 2.0;
    let mut positions = vec![incumbent_position];
    let mut fallbacks = Vec::new();
    for _ in 1..params.num_agents {
        let mut drawn = None;
        for _ in 0..AGENT_INIT_ATTEMPTS {
            let candidate = Position::new(rng.gen_range(-half..=half), rng.gen_range(-half..=half));
            if spacing_ok(candidate, fixed, scenario.min_spacing) {
                drawn = Some(candidate);
                break;
            }
        }
        fallbacks.push(drawn.is_none());
        if drawn.is_none() {
            *init_fallbacks += 1;
        }
        positions.push(drawn.unwrap_or(incumbent_position));
    }

    // Objective evaluations are pure; order-preserving parallel map.
    let values: Vec<f64> = positions
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            if i == 0 {
                Ok(incumbent_objective)
            } else {
                objective(p)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut agents: Vec<SwarmAgent> = positions
        .into_iter()
        .zip(values)
        .map(|(p, v)| SwarmAgent::new(p, mass, v))
        .collect();
    for (agent, fell_back) in agents.iter_mut().skip(1).zip(fallbacks) {
        agent.init_fallback = fell_back;
    }
    Ok(agents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_geometry;
    use crate::rng::streams;

    fn sparse_lattice(scenario: &ScenarioConfig) -> ArrayGeometry {
        let n = scenario.num_antennas;
        let cols = (n as f64).sqrt().ceil() as usize;
        let spacing = scenario.region_size / (cols - 1) as f64;
        let offset = (cols as f64 - 1.0) / 2.0;
        let mut positions = Vec::new();
        for row in 0..cols {
            for col in 0..cols {
                positions.push(Position::new(
                    (col as f64 - offset) * spacing,
                    (row as f64 - offset) * spacing,
                ));
            }
        }
        positions.truncate(n);
        ArrayGeometry::new(positions, scenario.region_size, scenario.min_spacing)
    }

    fn small_scenario() -> ScenarioConfig {
        let mut scenario = ScenarioConfig::desk();
        scenario.num_antennas = 4;
        scenario.num_targets = 1;
        scenario.num_snapshots = 4;
        scenario.seed = 21;
        scenario
    }

    #[test]
    fn full_scale_defaults_are_pinned() {
        let lambda = 0.05;
        let params = SwarmParams::paper(lambda);
        assert_eq!(params.num_agents, 25);
        assert_eq!(params.mass_exponent, 2.0);
        assert_eq!(params.step_exponent, 0.5);
        assert_eq!(params.max_step, 0.25 * lambda);
        assert_eq!(params.armijo, 0.6);
        assert_eq!(params.max_outer, 50);
        assert_eq!(params.max_inner, 50);
        assert_eq!(params.tolerance, 1e-3);
        params.validate().unwrap();
    }

    #[test]
    fn zero_outer_iterations_return_initial_geometry() {
        let scenario = small_scenario();
        let mut params = SwarmParams::desk(scenario.wavelength);
        params.max_outer = 0;
        let mut rng = stream_rng(scenario.seed, &[streams::TARGETS]);
        let samples = draw_sample_set(&scenario, 3, &mut rng).unwrap();
        let initial = sparse_lattice(&scenario);
        let outcome = optimize_positions(&scenario, &params, &samples, &initial).unwrap();
        assert_eq!(outcome.geometry.positions(), initial.positions());
        assert_eq!(outcome.initial_objective, outcome.final_objective);
        assert!(outcome.trace.is_empty());
    }

    #[test]
    fn committed_trace_is_non_increasing_and_feasible() {
        let scenario = small_scenario();
        let mut params = SwarmParams::desk(scenario.wavelength);
        params.num_agents = 4;
        params.max_outer = 5;
        params.max_inner = 5;
        let mut rng = stream_rng(scenario.seed, &[streams::TARGETS]);
        let samples = draw_sample_set(&scenario, 5, &mut rng).unwrap();
        let initial = sparse_lattice(&scenario);
        let outcome = optimize_positions(&scenario, &params, &samples, &initial).unwrap();
        assert!(outcome.final_objective <= outcome.initial_objective);
        let mut previous = outcome.initial_objective;
        for record in &outcome.trace {
            assert!(
                record.objective <= previous * (1.0 + 1e-12),
                "objective rose from {previous} to {}",
                record.objective
            );
            previous = record.objective;
        }
        assert!(validate_geometry(&outcome.geometry).is_empty());
    }

    #[test]
    fn identical_seeds_reproduce_geometry_bitwise() {
        let scenario = small_scenario();
        let mut params = SwarmParams::desk(scenario.wavelength);
        params.num_agents = 3;
        params.max_outer = 2;
        params.max_inner = 3;
        let run = || {
            let mut rng = stream_rng(scenario.seed, &[streams::TARGETS]);
            let samples = draw_sample_set(&scenario, 4, &mut rng).unwrap();
            let initial = sparse_lattice(&scenario);
            optimize_positions(&scenario, &params, &samples, &initial).unwrap()
        };
        let a = run();
        let b = run();
        for (pa, pb) in a.geometry.positions().iter().zip(b.geometry.positions()) {
            assert_eq!(pa.x.to_bits(), pb.x.to_bits());
            assert_eq!(pa.y.to_bits(), pb.y.to_bits());
        }
        assert_eq!(a.final_objective.to_bits(), b.final_objective.to_bits());
    }

    #[test]
    fn gradient_of_expected_trace_is_richardson_consistent() {
        let scenario = small_scenario();
        let mut rng = stream_rng(scenario.seed, &[streams::TARGETS]);
        let samples = draw_sample_set(&scenario, 5, &mut rng).unwrap();
        let geometry = sparse_lattice(&scenario);
        let antenna = 1;
        let objective = |p: Position| {
            expected_crb_trace(
                &geometry.with_position(antenna, p),
                &samples,
                scenario.noise_power,
            )
        };
        // Random-ish interior point away from the boundary.
        let point = Position::new(0.021, -0.037);
        let delta = 1e-4 * scenario.wavelength;
        let coarse = numeric_gradient(objective, point, delta, scenario.region_size).unwrap();
        let fine = numeric_gradient(objective, point, delta / 2.0, scenario.region_size).unwrap();
        let norm = (fine[0] * fine[0] + fine[1] * fine[1]).sqrt();
        let diff = ((coarse[0] - fine[0]).powi(2) + (coarse[1] - fine[1]).powi(2)).sqrt();
        assert!(
            diff / norm < 1e-3,
            "relative gradient drift {}",
            diff / norm
        );
    }

    #[test]
    fn crowded_region_falls_back_to_incumbent_agents() {
        // Three antennas in the optimal 3-point spread of the square with the
        // minimum spacing set to their smallest pairwise distance: any move
        // of any antenna shrinks some pair below the spacing, so the feasible
        // set for a random agent has measure zero and initialization falls
        // back to the incumbent (flagged), while the run still completes.
        let mut scenario = small_scenario();
        scenario.num_antennas = 3;
        scenario.num_targets = 1;
        let a = scenario.region_size;
        let half = a / 2.0;
        let offset = (2.0 - 3f64.sqrt()) * a;
        let positions = vec![
            Position::new(-half, -half),
            Position::new(half, -half + offset),
            Position::new(-half + offset, half),
        ];
        let spacing = positions
            .iter()
            .enumerate()
            .flat_map(|(i, p)| positions[i + 1..].iter().map(move |q| p.distance(q)))
            .fold(f64::INFINITY, f64::min);
        scenario.min_spacing = spacing;
        let geometry = ArrayGeometry::new(positions, scenario.region_size, spacing);

        let mut params = SwarmParams::desk(scenario.wavelength);
        params.num_agents = 3;
        params.max_outer = 1;
        params.max_inner = 1;
        let mut rng = stream_rng(scenario.seed, &[streams::TARGETS]);
        let samples = draw_sample_set(&scenario, 2, &mut rng).unwrap();
        let outcome = optimize_positions(&scenario, &params, &samples, &geometry).unwrap();
        assert!(outcome.init_fallbacks > 0);
        assert!(validate_geometry(&outcome.geometry).is_empty());
    }

    #[test]
    fn infeasible_initial_geometry_is_rejected() {
        let scenario = small_scenario();
        let params = SwarmParams::desk(scenario.wavelength);
        let mut rng = stream_rng(scenario.seed, &[streams::TARGETS]);
        let samples = draw_sample_set(&scenario, 2, &mut rng).unwrap();
        let bad = ArrayGeometry::new(
            vec![Position::new(0.0, 0.0); scenario.num_antennas],
            scenario.region_size,
            scenario.min_spacing,
        );
        assert!(matches!(
            optimize_positions(&scenario, &params, &samples, &bad),
            Err(Error::InvalidInput(_))
        ));
    }
}
