//! `masense` - CLI harness for movable-antenna array design and multi-target
//! AoA estimation benchmarks.
//!
//! Exit codes: 0 on success, 2 when a run completed but was flagged degraded
//! (failed trials above threshold, padded peak sets, agent-init fallbacks),
//! 1 on error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ma_sensing::bench::{
    dense_upa, diagnostics_report, optimize_proposed, run_sweep, scheme_geometry,
    single_target_ma_baseline, sparse_upa, Scheme,
};
use ma_sensing::crb::{bound_report, lower_bound};
use ma_sensing::io::{read_geometry_csv, write_geometry_csv, write_grid_csv, RunConfig};
use ma_sensing::model::{
    equal_power_sources, sample_covariance, synthesize_snapshots, ArrayGeometry, SnapshotBundle,
    SpatialAngle, TargetSet,
};
use ma_sensing::music::{assignment_error, estimate_aoas, music_spectrum};
use ma_sensing::rng::{stream_rng, streams};
use ma_sensing::swarm::TARGET_SEPARATION_FRACTION;

#[derive(Parser)]
#[command(
    name = "masense",
    about = "Movable-antenna array design and multi-target AoA estimation benchmarks",
    version
)]
struct Cli {
    /// Flat key=value config file applied over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Baseline parameter set.
    #[arg(long, global = true, value_enum, default_value = "paper")]
    preset: Preset,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
    Desk,
}

#[derive(Args)]
struct GeometryArg {
    /// Geometry CSV (header n,x,y) to evaluate.
    #[arg(long, conflicts_with = "scheme")]
    geometry: Option<PathBuf>,
    /// Scheme geometry to construct instead.
    #[arg(long, default_value = "dense_upa")]
    scheme: String,
}

#[derive(Args)]
struct ReferenceArg {
    /// Reference target u coordinate.
    #[arg(long, default_value_t = 0.0)]
    ref_u: f64,
    /// Reference target v coordinate.
    #[arg(long, default_value_t = 0.0)]
    ref_v: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize antenna positions for the configured scenario.
    Optimize,
    /// CRB trace, bounds, condition residuals, and sensitivity aggregates
    /// for one seeded realization on a geometry.
    Crb(GeometryArg),
    /// Closed-form lower bounds for a geometry.
    Bound(GeometryArg),
    /// One seeded MUSIC realization: spectrum grid, estimates, MSE.
    Music {
        #[command(flatten)]
        geometry: GeometryArg,
        #[command(flatten)]
        reference: ReferenceArg,
    },
    /// Run the configured parameter sweep.
    Sweep,
    /// Correlation/sensitivity/spectrum diagnostics across schemes.
    Diagnose {
        #[command(flatten)]
        reference: ReferenceArg,
        /// Comma-separated scheme list.
        #[arg(
            long,
            default_value = "proposed_ma,single_target_ma,dense_upa,sparse_upa"
        )]
        schemes: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(flagged) => {
            if flagged {
                eprintln!("completed with degraded results (see output)");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut config = match cli.preset {
        Preset::Paper => RunConfig::paper(),
        Preset::Desk => RunConfig::desk(),
    };
    if let Some(path) = &cli.config {
        config
            .apply_file(path)
            .with_context(|| format!("loading {}", path.display()))?;
    }
    if let Some(seed) = cli.seed {
        config.scenario.seed = seed;
    }
    config.scenario.validate()?;

    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
    }

    let command_name = command_name(&cli.command);
    if let Some(dir) = &cli.out {
        config.write_manifest(&dir.join("manifest.txt"), command_name)?;
    }

    match &cli.command {
        Command::Optimize => cmd_optimize(&config, cli.out.as_deref()),
        Command::Crb(geometry) => cmd_crb(&config, geometry, cli.out.as_deref()),
        Command::Bound(geometry) => cmd_bound(&config, geometry, cli.out.as_deref()),
        Command::Music {
            geometry,
            reference,
        } => cmd_music(&config, geometry, reference, cli.out.as_deref()),
        Command::Sweep => cmd_sweep(&config, cli.out.as_deref()),
        Command::Diagnose { reference, schemes } => {
            cmd_diagnose(&config, reference, schemes, cli.out.as_deref())
        }
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Optimize => "optimize",
        Command::Crb(_) => "crb",
        Command::Bound(_) => "bound",
        Command::Music { .. } => "music",
        Command::Sweep => "sweep",
        Command::Diagnose { .. } => "diagnose",
    }
}

fn resolve_geometry(config: &RunConfig, arg: &GeometryArg) -> anyhow::Result<ArrayGeometry> {
    if let Some(path) = &arg.geometry {
        return Ok(read_geometry_csv(
            path,
            config.scenario.region_size,
            config.scenario.min_spacing,
        )?);
    }
    let scheme: Scheme = arg.scheme.parse()?;
    let geometry = scheme_geometry(
        scheme,
        &config.scenario,
        &config.swarm,
        config.harness.num_samples,
    )?
    .ok_or_else(|| anyhow::anyhow!("scheme `{scheme}` has no geometry"))?;
    Ok(geometry)
}

fn cmd_optimize(config: &RunConfig, out: Option<&Path>) -> anyhow::Result<bool> {
    let outcome = optimize_proposed(&config.scenario, &config.swarm, config.harness.num_samples)?;
    println!(
        "expected CRB trace: {:e} -> {:e} ({} committed iterations)",
        outcome.initial_objective,
        outcome.final_objective,
        outcome.trace.len()
    );
    if let Some(dir) = out {
        write_geometry_csv(&dir.join("geometry_proposed_ma.csv"), &outcome.geometry)?;
        let mut trace = String::from("outer,antenna,inner,best_objective\n");
        for record in &outcome.trace {
            let _ = writeln!(
                trace,
                "{},{},{},{:e}",
                record.outer, record.antenna, record.inner, record.objective
            );
        }
        fs::write(dir.join("trace.csv"), trace)?;
        println!(
            "wrote geometry_proposed_ma.csv and trace.csv to {}",
            dir.display()
        );
    }
    Ok(outcome.init_fallbacks > 0)
}

fn cmd_crb(config: &RunConfig, arg: &GeometryArg, out: Option<&Path>) -> anyhow::Result<bool> {
    let geometry = resolve_geometry(config, arg)?;
    let scenario = &config.scenario;
    let mut rng = stream_rng(scenario.seed, &[streams::DIAGNOSTICS, streams::SIGNALS]);
    let min_separation = TARGET_SEPARATION_FRACTION * scenario.u_max.max(scenario.v_max);
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
    let report = bound_report(&geometry, scenario, &targets, &sources)?;
    println!("tr(CRB)   = {:e}", report.trace);
    println!("bound_a   = {:e}", report.bound_a);
    println!("bound_b   = {:e}", report.bound_b);
    println!("rho_mean  = {:.6}", report.rho_mean);
    println!("omega_mean= {:e}", report.omega_mean);
    println!(
        "equality-a residuals: interference {:e}, sensitivity {:e}",
        report.condition_a_residuals[0], report.condition_a_residuals[1]
    );
    println!(
        "equality-b residuals: cov {:e}, var-gap {:e}, mean {:e}, ring {:e}",
        report.condition_b_residuals[0],
        report.condition_b_residuals[1],
        report.condition_b_residuals[2],
        report.condition_b_residuals[3]
    );
    if let Some(dir) = out {
        let mut csv = String::from(
            "trace,bound_a,bound_b,rho_mean,omega_mean,res_interference,res_sensitivity,res_cov,res_vargap,res_mean,res_ring\n",
        );
        let _ = writeln!(
            csv,
            "{:e},{:e},{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            report.trace,
            report.bound_a,
            report.bound_b,
            report.rho_mean,
            report.omega_mean,
            report.condition_a_residuals[0],
            report.condition_a_residuals[1],
            report.condition_b_residuals[0],
            report.condition_b_residuals[1],
            report.condition_b_residuals[2],
            report.condition_b_residuals[3]
        );
        fs::write(dir.join("crb.csv"), csv)?;
    }
    Ok(false)
}

fn cmd_bound(config: &RunConfig, arg: &GeometryArg, out: Option<&Path>) -> anyhow::Result<bool> {
    let geometry = resolve_geometry(config, arg)?;
    let bounds = lower_bound(&geometry, &config.scenario)?;
    println!("bound_a = {:e}", bounds.bound_a);
    println!("bound_b = {:e}", bounds.bound_b);
    if let Some(dir) = out {
        fs::write(
            dir.join("bound.csv"),
            format!(
                "bound_a,bound_b\n{:e},{:e}\n",
                bounds.bound_a, bounds.bound_b
            ),
        )?;
    }
    Ok(false)
}

fn cmd_music(
    config: &RunConfig,
    arg: &GeometryArg,
    reference: &ReferenceArg,
    out: Option<&Path>,
) -> anyhow::Result<bool> {
    let geometry = resolve_geometry(config, arg)?;
    let scenario = &config.scenario;
    let reference = SpatialAngle::new(reference.ref_u, reference.ref_v);
    let min_separation = TARGET_SEPARATION_FRACTION * scenario.u_max.max(scenario.v_max);
    let mut rng = stream_rng(scenario.seed, &[streams::DIAGNOSTICS, streams::SIGNALS]);
    let mut angles = TargetSet::sample(
        scenario.num_targets - 1,
        scenario.u_max,
        scenario.v_max,
        min_separation,
        &mut rng,
    )?
    .angles()
    .to_vec();
    angles.push(reference);
    let targets = TargetSet::new(angles);
    let sources = equal_power_sources(
        scenario.num_targets,
        scenario.num_snapshots,
        scenario.signal_power,
        &mut rng,
    );
    let bundle = SnapshotBundle::new(sources, scenario.noise_power);
    let synthesized =
        synthesize_snapshots(&geometry, &targets, bundle, scenario.wavelength, &mut rng)?;
    let cov = sample_covariance(synthesized.received.as_ref().expect("filled"))?;
    let grid = ma_sensing::grid::AngleGrid::symmetric(
        scenario.u_max,
        scenario.v_max,
        config.harness.grid_resolution,
        config.harness.grid_resolution,
    );
    let spectrum = music_spectrum(
        &cov,
        &geometry,
        scenario.num_targets,
        &grid,
        scenario.wavelength,
    )?;
    let peaks = estimate_aoas(&spectrum, scenario.num_targets);
    let scored = assignment_error(targets.angles(), &peaks.angles)?;
    println!("realization MSE = {:e}", scored.total_sq_error);
    for (k, (truth, est)) in targets
        .angles()
        .iter()
        .zip(&scored.estimated_angles)
        .enumerate()
    {
        println!(
            "target {k}: true ({:+.4}, {:+.4})  est ({:+.4}, {:+.4})  sq_err {:e}",
            truth.u, truth.v, est.u, est.v, scored.per_target_sq_errors[k]
        );
    }
    if let Some(dir) = out {
        write_grid_csv(&dir.join("spectrum_grid.csv"), &spectrum.to_grid_values())?;
        let mut csv = String::from("trial,k,true_u,true_v,est_u,est_v,sq_err\n");
        for (k, (truth, est)) in targets
            .angles()
            .iter()
            .zip(&scored.estimated_angles)
            .enumerate()
        {
            let _ = writeln!(
                csv,
                "0,{k},{},{},{},{},{:e}",
                truth.u, truth.v, est.u, est.v, scored.per_target_sq_errors[k]
            );
        }
        fs::write(dir.join("estimates.csv"), csv)?;
    }
    Ok(peaks.padded || spectrum.eigenvalue_tie)
}

fn cmd_sweep(config: &RunConfig, out: Option<&Path>) -> anyhow::Result<bool> {
    let sweep = config
        .sweep_spec()
        .context("sweep command needs sweep_parameter/sweep_values in the config")?;
    let outcome = run_sweep(
        &sweep,
        &config.scenario,
        &config.swarm,
        &config.harness,
        out,
    )?;
    for point in &outcome.points {
        let mse = if point.mse_mean.is_nan() {
            "-".to_string()
        } else {
            format!("{:e}", point.mse_mean)
        };
        println!(
            "{:>18} x={:<8} crb={:e} mse={} trials={}{}",
            point.scheme.name(),
            point.x_value,
            point.crb_trace_mean,
            mse,
            point.trials,
            if point.flagged { " [flagged]" } else { "" }
        );
    }
    Ok(outcome.flagged)
}

fn cmd_diagnose(
    config: &RunConfig,
    reference: &ReferenceArg,
    schemes: &str,
    out: Option<&Path>,
) -> anyhow::Result<bool> {
    let reference = SpatialAngle::new(reference.ref_u, reference.ref_v);
    let schemes: Vec<Scheme> = schemes
        .split(',')
        .map(|s| s.trim().parse::<Scheme>())
        .collect::<ma_sensing::Result<Vec<_>>>()?;
    let mut flagged = false;
    let mut rows = String::from("scheme,rho_mean,omega_mean,realization_mse\n");
    for scheme in schemes {
        let geometry = match scheme {
            Scheme::ProposedMa => {
                optimize_proposed(&config.scenario, &config.swarm, config.harness.num_samples)?
                    .geometry
            }
            Scheme::SingleTargetMa => single_target_ma_baseline(
                &config.scenario,
                &config.swarm,
                config.harness.num_samples,
            )?,
            Scheme::DenseUpa => dense_upa(&config.scenario),
            Scheme::SparseUpa => sparse_upa(&config.scenario)?,
            Scheme::LowerBound => bail!("lower_bound has no geometry to diagnose"),
        };
        let scheme_dir = out.map(|dir| dir.join(scheme.name()));
        if let Some(dir) = &scheme_dir {
            fs::create_dir_all(dir)?;
        }
        let summary = diagnostics_report(
            &geometry,
            &config.scenario,
            &reference,
            &config.harness,
            scheme_dir.as_deref(),
        )?;
        flagged |= summary.flagged;
        println!(
            "{:>18}: rho_mean={:.6} omega_mean={:e} realization_mse={:e}{}",
            scheme.name(),
            summary.rho_mean,
            summary.omega_mean,
            summary.realization_mse,
            if summary.flagged { " [flagged]" } else { "" }
        );
        let _ = writeln!(
            rows,
            "{},{},{:e},{:e}",
            scheme.name(),
            summary.rho_mean,
            summary.omega_mean,
            summary.realization_mse
        );
        if let Some(dir) = out {
            write_geometry_csv(
                &dir.join(format!("geometry_{}.csv", scheme.name())),
                &geometry,
            )?;
        }
    }
    if let Some(dir) = out {
        fs::write(dir.join("diagnostics.csv"), rows)?;
    }
    Ok(flagged)
}
