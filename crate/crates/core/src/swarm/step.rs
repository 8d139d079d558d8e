//! Per-agent primitives: region projection, numeric gradients, mass
//! transfer, and the backtracking step with the mass-weighted sufficient
//! decrease test.

use crate::error::{Error, Result};
use crate::model::Position;

/// Component-wise clamp onto the closed square `[-A/2, A/2]²`.
pub fn project_to_region(position: Position, region_size: f64) -> Position {
    let half = region_size / 2.0;
    Position::new(position.x.clamp(-half, half), position.y.clamp(-half, half))
}

/// Central-difference gradient with both probe points projected into the
/// region first. At the boundary the probes collapse onto one side, and the
/// quotient uses the actual probe separation, which turns the estimate into
/// a one-sided difference rather than silently halving it.
pub fn numeric_gradient<F>(
    objective: F,
    position: Position,
    step: f64,
    region_size: f64,
) -> Result<[f64; 2]>
where
    F: Fn(Position) -> Result<f64>,
{
    let mut gradient = [0.0; 2];
    for (axis, slot) in gradient.iter_mut().enumerate() {
        let offset = |p: Position, delta: f64| match axis {
            0 => Position::new(p.x + delta, p.y),
            _ => Position::new(p.x, p.y + delta),
        };
        let plus = project_to_region(offset(position, step), region_size);
        let minus = project_to_region(offset(position, -step), region_size);
        let span = match axis {
            0 => plus.x - minus.x,
            _ => plus.y - minus.y,
        };
        if span == 0.0 {
            continue;
        }
        let f_plus = objective(plus)
            .map_err(|e| Error::GradientEvaluation(format!("probe +{step} on axis {axis}: {e}")))?;
        let f_minus = objective(minus)
            .map_err(|e| Error::GradientEvaluation(format!("probe -{step} on axis {axis}: {e}")))?;
        *slot = (f_plus - f_minus) / span;
    }
    Ok(gradient)
}

/// One swarm agent: candidate position, masses, and its current objective.
#[derive(Debug, Clone)]
pub struct SwarmAgent {
    pub position: Position,
    pub mass: f64,
    pub relative_mass: f64,
    pub objective: f64,
    /// Set when feasible random initialization failed and the agent fell
    /// back to duplicating the incumbent position.
    pub init_fallback: bool,
}

impl SwarmAgent {
    pub fn new(position: Position, mass: f64, objective: f64) -> Self {
        Self {
            position,
            mass,
            relative_mass: 1.0,
            objective,
            init_fallback: false,
        }
    }
}

/// Guard for the mass-transfer ratio when the swarm objective spread
/// vanishes; with all agents equivalent there is nothing to transfer.
const MASS_SPREAD_FLOOR: f64 = 1e-15;

/// Transfers mass from every non-best agent toward the incumbent best and
/// refreshes the relative masses. Total mass is conserved exactly.
pub fn update_masses(agents: &mut [SwarmAgent], mass_exponent: f64) {
    if agents.is_empty() {
        return;
    }
    let best = argmin(agents);
    let psi_min = agents[best].objective;
    let psi_max = agents
        .iter()
        .map(|a| a.objective)
        .fold(f64::NEG_INFINITY, f64::max);
    let spread = psi_max - psi_min;
    if spread >= MASS_SPREAD_FLOOR * psi_min.abs().max(1.0) {
        let mut transferred = 0.0;
        for (i, agent) in agents.iter_mut().enumerate() {
            if i == best {
                continue;
            }
            let kappa = ((agent.objective - psi_min) / spread).powf(mass_exponent);
            let loss = kappa * agent.mass;
            agent.mass -= loss;
            transferred += loss;
        }
        agents[best].mass += transferred;
    }
    let max_mass = agents
        .iter()
        .map(|a| a.mass)
        .fold(f64::NEG_INFINITY, f64::max);
    for agent in agents.iter_mut() {
        agent.relative_mass = agent.mass / max_mass;
    }
}

/// Index of the agent with the smallest objective (first on ties).
pub fn argmin(agents: &[SwarmAgent]) -> usize {
    let mut best = 0;
    for (i, agent) in agents.iter().enumerate().skip(1) {
        if agent.objective < agents[best].objective {
            best = i;
        }
    }
    best
}

/// Outcome of one backtracking line search.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub position: Position,
    pub objective: f64,
    /// Accepted step size; 0 on a stall.
    pub step_size: f64,
    pub stalled: bool,
}

/// Inputs the line search needs beyond the agent itself.
pub struct StepContext<'a> {
    /// Positions of the other, fixed antennas the candidate must keep
    /// `min_spacing` away from.
    pub fixed_antennas: &'a [Position],
    pub min_spacing: f64,
    pub region_size: f64,
    pub max_step: f64,
    pub shrink_factor: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

/// Tries the projected candidate at `max_step` first and shrinks by
/// `shrink_factor` on failure, accepting the first candidate that both keeps
/// the minimum spacing against all fixed antennas and passes the
/// sufficient-decrease test `ψ(new) ≤ ψ(old) − ξ·β·τ·‖∇ψ‖²`. After
/// `max_backtracks` unsuccessful trials the agent stays put with step size 0;
/// a stall is a normal outcome.
pub fn backtracking_step<F>(
    objective: F,
    agent: &SwarmAgent,
    gradient: [f64; 2],
    beta: f64,
    ctx: &StepContext<'_>,
) -> Result<StepOutcome>
where
    F: Fn(Position) -> Result<f64>,
{
    if !gradient[0].is_finite() || !gradient[1].is_finite() {
        return Err(Error::GradientEvaluation(format!(
            "non-finite gradient ({}, {})",
            gradient[0], gradient[1]
        )));
    }
    let grad_norm_sq = gradient[0] * gradient[0] + gradient[1] * gradient[1];
    let mut tau = ctx.max_step;
    for _ in 0..ctx.max_backtracks {
        let candidate = project_to_region(
            Position::new(
                agent.position.x - tau * gradient[0],
                agent.position.y - tau * gradient[1],
            ),
            ctx.region_size,
        );
        if spacing_ok(candidate, ctx.fixed_antennas, ctx.min_spacing) {
            let value = objective(candidate)?;
            if value <= agent.objective - ctx.armijo * beta * tau * grad_norm_sq {
                return Ok(StepOutcome {
                    position: candidate,
                    objective: value,
                    step_size: tau,
                    stalled: false,
                });
            }
        }
        tau *= ctx.shrink_factor;
    }
    Ok(StepOutcome {
        position: agent.position,
        objective: agent.objective,
        step_size: 0.0,
        stalled: true,
    })
}

pub fn spacing_ok(candidate: Position, fixed: &[Position], min_spacing: f64) -> bool {
    fixed
        .iter()
        .all(|other| candidate.distance(other) >= min_spacing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn projection_leaves_interior_points_alone() {
        let p = Position::new(0.1, -0.2);
        assert_eq!(project_to_region(p, 1.0), p);
    }

    #[test]
    fn projection_clamps_both_axes() {
        let a = 0.6;
        let p = project_to_region(Position::new(a, -a), a);
        assert_eq!(p, Position::new(a / 2.0, -a / 2.0));
    }

    #[test]
    fn boundary_points_are_feasible() {
        let a = 0.6;
        let p = Position::new(-a / 2.0, 0.0);
        assert_eq!(project_to_region(p, a), p);
    }

    #[test]
    fn gradient_of_quadratic_is_exact() {
        let objective = |p: Position| Ok(p.x * p.x + p.y * p.y);
        let p = Position::new(0.12, -0.07);
        let g = numeric_gradient(objective, p, 1e-5, 10.0).unwrap();
        assert_relative_eq!(g[0], 2.0 * p.x, epsilon = 1e-8);
        assert_relative_eq!(g[1], 2.0 * p.y, epsilon = 1e-8);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = numeric_gradient(|_| Ok(4.2), Position::new(0.0, 0.1), 1e-5, 1.0).unwrap();
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn gradient_propagates_probe_failures() {
        let objective = |_: Position| -> Result<f64> { Err(Error::InvalidInput("boom".into())) };
        assert!(matches!(
            numeric_gradient(objective, Position::new(0.0, 0.0), 1e-5, 1.0),
            Err(Error::GradientEvaluation(_))
        ));
    }

    fn swarm(values: &[f64]) -> Vec<SwarmAgent> {
        let mass = 1.0 / values.len() as f64;
        values
            .iter()
            .map(|&v| SwarmAgent::new(Position::new(0.0, 0.0), mass, v))
            .collect()
    }

    #[test]
    fn best_agent_keeps_its_own_mass_term() {
        let mut agents = swarm(&[1.0, 2.0, 3.0]);
        let before = agents[0].mass;
        update_masses(&mut agents, 2.0);
        // κ = 0 at the minimum: the best agent only gains, never loses.
        assert!(agents[0].mass >= before);
        assert_relative_eq!(agents[0].relative_mass, 1.0);
    }

    #[test]
    fn worst_agent_transfers_all_mass() {
        let mut agents = swarm(&[1.0, 5.0]);
        update_masses(&mut agents, 2.0);
        // κ = 1 at the maximum: full transfer.
        assert_relative_eq!(agents[1].mass, 0.0);
        assert_relative_eq!(agents[0].mass, 1.0);
    }

    #[test]
    fn total_mass_is_conserved_exactly() {
        let mut agents = swarm(&[3.0, 1.0, 2.0, 2.5, 1.7]);
        for _ in 0..5 {
            update_masses(&mut agents, 2.0);
            let total: f64 = agents.iter().map(|a| a.mass).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_objectives_skip_the_transfer() {
        let mut agents = swarm(&[2.0, 2.0, 2.0]);
        update_masses(&mut agents, 2.0);
        for agent in &agents {
            assert_relative_eq!(agent.mass, 1.0 / 3.0);
            assert_relative_eq!(agent.relative_mass, 1.0);
        }
    }

    fn plain_ctx(max_step: f64) -> StepContext<'static> {
        StepContext {
            fixed_antennas: &[],
            min_spacing: 0.0,
            region_size: 10.0,
            max_step,
            shrink_factor: 0.5,
            armijo: 0.6,
            max_backtracks: 40,
        }
    }

    #[test]
    fn zero_gradient_accepts_first_candidate_in_place() {
        let agent = SwarmAgent::new(Position::new(0.3, -0.2), 1.0, 7.0);
        let outcome =
            backtracking_step(|_| Ok(7.0), &agent, [0.0, 0.0], 1.0, &plain_ctx(0.0125)).unwrap();
        assert!(!outcome.stalled);
        assert_eq!(outcome.position, agent.position);
        assert_eq!(outcome.step_size, 0.0125);
    }

    #[test]
    fn convex_quadratic_step_strictly_decreases() {
        let objective = |p: Position| Ok((p.x - 1.0).powi(2) + (p.y + 0.5).powi(2));
        let start = Position::new(0.0, 0.0);
        let value = objective(start).unwrap();
        let agent = SwarmAgent::new(start, 1.0, value);
        let gradient = numeric_gradient(objective, start, 1e-6, 10.0).unwrap();
        let outcome =
            backtracking_step(objective, &agent, gradient, 1.0, &plain_ctx(0.25)).unwrap();
        assert!(!outcome.stalled);
        assert!(outcome.objective < value);
    }

    #[test]
    fn spacing_violation_shrinks_until_it_holds() {
        // Powers of two keep the spacing comparison exact.
        let max_step = 0.015625;
        let d_min = 0.03125;
        // Fixed neighbor along the descent direction at d_min + τ_max/2: the
        // τ_max candidate violates spacing, the next one holds it exactly.
        let neighbor = [Position::new(d_min + 0.5 * max_step, 0.0)];
        let ctx = StepContext {
            fixed_antennas: &neighbor,
            min_spacing: d_min,
            region_size: 10.0,
            max_step,
            shrink_factor: 0.5,
            armijo: 0.6,
            max_backtracks: 40,
        };
        // Descent toward +x pushes straight at the neighbor.
        let objective = |p: Position| Ok(-p.x);
        let start = Position::new(0.0, 0.0);
        let agent = SwarmAgent::new(start, 1.0, 0.0);
        let outcome = backtracking_step(objective, &agent, [-1.0, 0.0], 1.0, &ctx).unwrap();
        assert!(!outcome.stalled);
        assert!(spacing_ok(outcome.position, &neighbor, d_min));
        assert_eq!(outcome.step_size, 0.5 * max_step);
    }
}
