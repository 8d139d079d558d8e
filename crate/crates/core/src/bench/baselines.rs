//! Baseline array geometries and the optimization entry points the
//! benchmark schemes are built from.

use crate::error::{Error, Result};
use crate::model::{ArrayGeometry, Position, ScenarioConfig};
use crate::rng::{stream_rng, streams};
use crate::swarm::{draw_sample_set, optimize_positions, OptimizationOutcome, SwarmParams};

/// First `n` nodes, row-major, of a ⌈√n⌉×⌈√n⌉ lattice centered at the origin.
pub fn upa_lattice(n: usize, spacing: f64) -> Vec<Position> {
    let side = (n as f64).sqrt().ceil() as usize;
    let offset = (side as f64 - 1.0) / 2.0;
    let mut positions = Vec::with_capacity(side * side);
    for row in 0..side {
        for col in 0..side {
            positions.push(Position::new(
                (col as f64 - offset) * spacing,
                (row as f64 - offset) * spacing,
            ));
        }
    }
    positions.truncate(n);
    positions
}

/// UPA with half-wavelength inter-antenna spacing, centered at the origin.
pub fn dense_upa(scenario: &ScenarioConfig) -> ArrayGeometry {
    ArrayGeometry::new(
        upa_lattice(scenario.num_antennas, scenario.wavelength / 2.0),
        scenario.region_size,
        scenario.min_spacing,
    )
}

/// UPA spanning the full moving region: spacing `A/(⌈√N⌉ − 1)` on both axes.
pub fn sparse_upa(scenario: &ScenarioConfig) -> Result<ArrayGeometry> {
    let side = (scenario.num_antennas as f64).sqrt().ceil() as usize;
    if side < 2 {
        return Err(Error::InvalidInput(format!(
            "sparse UPA needs a lattice side of at least 2 (N = {})",
            scenario.num_antennas
        )));
    }
    let spacing = scenario.region_size / (side - 1) as f64;
    Ok(ArrayGeometry::new(
        upa_lattice(scenario.num_antennas, spacing),
        scenario.region_size,
        scenario.min_spacing,
    ))
}

/// Runs the position optimizer from the full-aperture UPA start against the
/// scenario's own target distribution.
pub fn optimize_proposed(
    scenario: &ScenarioConfig,
    swarm: &SwarmParams,
    num_samples: usize,
) -> Result<OptimizationOutcome> {
    let mut rng = stream_rng(scenario.seed, &[streams::TARGETS]);
    let samples = draw_sample_set(scenario, num_samples, &mut rng)?;
    let initial = sparse_upa(scenario)?;
    optimize_positions(scenario, swarm, &samples, &initial)
}

/// Proxy for a single-target-oriented movable-antenna design: the same
/// optimizer run with K forced to 1 over the same angle box. The returned
/// geometry is then evaluated under the multi-target scenario.
pub fn single_target_ma_baseline(
    scenario: &ScenarioConfig,
    swarm: &SwarmParams,
    num_samples: usize,
) -> Result<ArrayGeometry> {
    let mut single = scenario.clone();
    single.num_targets = 1;
    let mut rng = stream_rng(
        scenario.seed,
        &[streams::SINGLE_TARGET_BASELINE, streams::TARGETS],
    );
    let samples = draw_sample_set(&single, num_samples, &mut rng)?;
    let initial = sparse_upa(&single)?;
    let outcome = optimize_positions(&single, swarm, &samples, &initial)?;
    Ok(outcome.geometry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dense_upa_is_half_wavelength_and_centered() {
        let scenario = ScenarioConfig::paper();
        let geo = dense_upa(&scenario);
        assert_eq!(geo.num_antennas(), 16);
        let m = geo.coordinate_moments();
        assert_relative_eq!(m.mean_x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(m.mean_y, 0.0, epsilon = 1e-15);
        // Adjacent columns differ by λ/2 = 0.025 m.
        let xs = geo.x_coords();
        assert_relative_eq!(xs[1] - xs[0], 0.025, epsilon = 1e-15);
        assert!(geo.validate().is_empty());
    }

    #[test]
    fn single_antenna_upa_is_at_origin() {
        let positions = upa_lattice(1, 0.025);
        assert_eq!(positions, vec![Position::new(0.0, 0.0)]);
    }

    #[test]
    fn five_antenna_upa_drops_row_major_from_the_end() {
        let positions = upa_lattice(5, 1.0);
        // 3x3 lattice keeps the first five nodes: full bottom row plus the
        // first two of the middle row.
        let expected = [
            Position::new(-1.0, -1.0),
            Position::new(0.0, -1.0),
            Position::new(1.0, -1.0),
            Position::new(-1.0, 0.0),
            Position::new(0.0, 0.0),
        ];
        assert_eq!(positions, expected);
    }

    #[test]
    fn sparse_upa_spans_region_corners() {
        let scenario = ScenarioConfig::paper();
        let geo = sparse_upa(&scenario).unwrap();
        // 4x4 at 4λ spacing, corners at ±6λ.
        let lambda = scenario.wavelength;
        let xs = geo.x_coords();
        let ys = geo.y_coords();
        assert_relative_eq!(xs[1] - xs[0], 4.0 * lambda, epsilon = 1e-15);
        assert_relative_eq!(
            xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            6.0 * lambda
        );
        assert_relative_eq!(
            ys.iter().cloned().fold(f64::INFINITY, f64::min),
            -6.0 * lambda
        );
        assert!(geo.validate().is_empty());
    }

    #[test]
    fn nine_antenna_sparse_upa_spacing() {
        let mut scenario = ScenarioConfig::paper();
        scenario.num_antennas = 9;
        scenario.region_size = 6.0 * scenario.wavelength;
        let geo = sparse_upa(&scenario).unwrap();
        let xs = geo.x_coords();
        assert_relative_eq!(xs[1] - xs[0], 3.0 * scenario.wavelength, epsilon = 1e-15);
    }

    #[test]
    fn sparse_upa_rejects_degenerate_lattice() {
        let mut scenario = ScenarioConfig::paper();
        scenario.num_antennas = 1;
        assert!(sparse_upa(&scenario).is_err());
    }
}
