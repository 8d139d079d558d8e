//! Config-file and CSV formats.
//!
//! The configuration format is flat `key = value` lines with `#` comments;
//! lists are comma-separated. Run manifests are written in the same format
//! with every parameter and seed spelled out, so a manifest can be fed back
//! through `--config` for an exact replay. Floats are printed with Rust's
//! shortest round-trip formatting, which re-parses to the identical value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bench::{HarnessOptions, Scheme, SweepParameter, SweepSpec};
use crate::error::{Error, Result};
use crate::grid::GridValues;
use crate::model::{ArrayGeometry, Position, ScenarioConfig};
use crate::swarm::SwarmParams;

/// Everything a run needs: scenario, optimizer, harness, and (optionally)
/// a sweep description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub swarm: SwarmParams,
    pub harness: HarnessOptions,
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    pub fn paper() -> Self {
        let scenario = ScenarioConfig::paper();
        let swarm = SwarmParams::paper(scenario.wavelength);
        Self {
            scenario,
            swarm,
            harness: HarnessOptions::paper(),
            sweep: None,
        }
    }

    pub fn desk() -> Self {
        let scenario = ScenarioConfig::desk();
        let swarm = SwarmParams::desk(scenario.wavelength);
        Self {
            scenario,
            swarm,
            harness: HarnessOptions::desk(),
            sweep: None,
        }
    }

    /// Applies `key = value` overrides from a config file on top of `self`.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        self.apply_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.apply_pair(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    fn apply_pair(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            // Scenario.
            "wavelength" => self.scenario.wavelength = parse_f64(key, value)?,
            "region_size" => self.scenario.region_size = parse_f64(key, value)?,
            "min_spacing" => self.scenario.min_spacing = parse_f64(key, value)?,
            "num_antennas" => self.scenario.num_antennas = parse_usize(key, value)?,
            "num_targets" => self.scenario.num_targets = parse_usize(key, value)?,
            "num_snapshots" => self.scenario.num_snapshots = parse_usize(key, value)?,
            "snr_db" => {
                let snr = parse_f64(key, value)?;
                self.scenario.set_snr_db(snr);
            }
            "u_max" => self.scenario.u_max = parse_f64(key, value)?,
            "v_max" => self.scenario.v_max = parse_f64(key, value)?,
            "seed" => self.scenario.seed = parse_u64(key, value)?,
            // Swarm.
            "agents" => self.swarm.num_agents = parse_usize(key, value)?,
            "mass_exponent" => self.swarm.mass_exponent = parse_f64(key, value)?,
            "step_exponent" => self.swarm.step_exponent = parse_f64(key, value)?,
            "max_step" => self.swarm.max_step = parse_f64(key, value)?,
            "shrink_factor" => self.swarm.shrink_factor = parse_f64(key, value)?,
            "armijo" => self.swarm.armijo = parse_f64(key, value)?,
            "max_outer" => self.swarm.max_outer = parse_usize(key, value)?,
            "max_inner" => self.swarm.max_inner = parse_usize(key, value)?,
            "max_backtracks" => self.swarm.max_backtracks = parse_usize(key, value)?,
            "tolerance" => self.swarm.tolerance = parse_f64(key, value)?,
            "gradient_step" => self.swarm.gradient_step = parse_f64(key, value)?,
            // Harness.
            "num_samples" => self.harness.num_samples = parse_usize(key, value)?,
            "trials" => self.harness.trials = parse_usize(key, value)?,
            "grid_resolution" => self.harness.grid_resolution = parse_usize(key, value)?,
            // Sweep.
            "sweep_parameter" => {
                self.sweep_mut().parameter = value.parse::<SweepParameter>()?;
            }
            "sweep_values" => {
                self.sweep_mut().values = parse_f64_list(key, value)?;
            }
            "schemes" => {
                let schemes = value
                    .split(',')
                    .map(|s| s.trim().parse::<Scheme>())
                    .collect::<Result<Vec<_>>>()?;
                self.sweep_mut().schemes = schemes;
            }
            other => {
                return Err(Error::Config(format!("unknown key `{other}`")));
            }
        }
        Ok(())
    }

    fn sweep_mut(&mut self) -> &mut SweepSpec {
        if self.sweep.is_none() {
            self.sweep = Some(SweepSpec::default());
        }
        self.sweep.as_mut().expect("just inserted")
    }

    /// The configured sweep with its per-point trial count taken from the
    /// harness `trials` key, which is the single source of truth.
    pub fn sweep_spec(&self) -> Option<SweepSpec> {
        self.sweep.as_ref().map(|sweep| {
            let mut sweep = sweep.clone();
            sweep.trials_per_point = self.harness.trials;
            sweep
        })
    }

    /// Serializes every parameter in a fixed key order. The output parses
    /// back to an identical config, which is what manifest replay relies on.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut push = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        push("wavelength", self.scenario.wavelength.to_string());
        push("region_size", self.scenario.region_size.to_string());
        push("min_spacing", self.scenario.min_spacing.to_string());
        push("num_antennas", self.scenario.num_antennas.to_string());
        push("num_targets", self.scenario.num_targets.to_string());
        push("num_snapshots", self.scenario.num_snapshots.to_string());
        push("snr_db", self.scenario.snr_db().to_string());
        push("u_max", self.scenario.u_max.to_string());
        push("v_max", self.scenario.v_max.to_string());
        push("seed", self.scenario.seed.to_string());
        push("agents", self.swarm.num_agents.to_string());
        push("mass_exponent", self.swarm.mass_exponent.to_string());
        push("step_exponent", self.swarm.step_exponent.to_string());
        push("max_step", self.swarm.max_step.to_string());
        push("shrink_factor", self.swarm.shrink_factor.to_string());
        push("armijo", self.swarm.armijo.to_string());
        push("max_outer", self.swarm.max_outer.to_string());
        push("max_inner", self.swarm.max_inner.to_string());
        push("max_backtracks", self.swarm.max_backtracks.to_string());
        push("tolerance", self.swarm.tolerance.to_string());
        push("gradient_step", self.swarm.gradient_step.to_string());
        push("num_samples", self.harness.num_samples.to_string());
        push("trials", self.harness.trials.to_string());
        push("grid_resolution", self.harness.grid_resolution.to_string());
        if let Some(sweep) = &self.sweep {
            push("sweep_parameter", sweep.parameter.to_string());
            push(
                "sweep_values",
                sweep
                    .values
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            push(
                "schemes",
                sweep
                    .schemes
                    .iter()
                    .map(|s| s.name().to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        out
    }

    /// Writes the manifest: a comment header plus the full config.
    pub fn write_manifest(&self, path: &Path, command: &str) -> Result<()> {
        let mut text = String::new();
        let _ = writeln!(text, "# ma-sensing run manifest");
        let _ = writeln!(text, "# command: {command}");
        let _ = writeln!(text, "# replay: pass this file via --config");
        text.push_str(&self.to_config_string());
        fs::write(path, text)?;
        Ok(())
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: `{value}` is not a number")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| Error::Config(format!("{key}: `{value}` is not an integer")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: `{value}` is not a count")))
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|item| parse_f64(key, item.trim()))
        .collect()
}

/// Geometry export with header `n,x,y`, coordinates in meters.
pub fn write_geometry_csv(path: &Path, geometry: &ArrayGeometry) -> Result<()> {
    let mut out = String::from("n,x,y\n");
    for (i, p) in geometry.positions().iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", p.x, p.y);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Geometry import; `region_size` and `min_spacing` come from the scenario
/// since the CSV carries positions only.
pub fn read_geometry_csv(path: &Path, region_size: f64, min_spacing: f64) -> Result<ArrayGeometry> {
    let text = fs::read_to_string(path)?;
    let mut rows = BTreeMap::new();
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == "n,x,y" => {}
        other => {
            return Err(Error::Config(format!(
                "{}: expected header `n,x,y`, found {:?}",
                path.display(),
                other.unwrap_or("<empty>")
            )))
        }
    }
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Config(format!(
                "{}: line {}: expected 3 fields",
                path.display(),
                lineno + 2
            )));
        }
        let index = parse_usize("n", fields[0].trim())?;
        let x = parse_f64("x", fields[1].trim())?;
        let y = parse_f64("y", fields[2].trim())?;
        rows.insert(index, Position::new(x, y));
    }
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "{}: no antenna rows",
            path.display()
        )));
    }
    Ok(ArrayGeometry::new(
        rows.into_values().collect(),
        region_size,
        min_spacing,
    ))
}

/// Grid export with header `u,v,value`, row-major over u then v.
pub fn write_grid_csv(path: &Path, grid_values: &GridValues) -> Result<()> {
    let mut out = String::from("u,v,value\n");
    for (i, &u) in grid_values.grid.u.iter().enumerate() {
        for (j, &v) in grid_values.grid.v.iter().enumerate() {
            let _ = writeln!(out, "{u},{v},{}", grid_values.values[(i, j)]);
        }
    }
    fs::write(path, out)?;
    Ok(())
}
