//! Subcommands. Each returns `Ok` only when every output was written and the
//! numerics converged.

use std::path::{Path, PathBuf};

use bsim_core::anatomy::{assign_roles, build_thorax, StageId};
use bsim_core::energy::{fd_check, EnergySpec};
use bsim_core::pipeline::{apply_trajectory, calibrate, run_pipeline, support_datum, StageSettings};
use bsim_core::tmr::{report, MeasurementReport};
use bsim_core::TriMesh;
use clap::{Parser, Subcommand};

use crate::config::{load_config, RunConfig};
use crate::io;
use crate::CliError;

/// Distance within which an imported vertex counts as lying on the thorax, cm.
const ROLE_TOL: f64 = 1e-7;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(
    name = "bsim",
    version,
    about = "Breast surface evolution through patient positioning stages"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the initial (SRG) mesh and export it.
    Init {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the stage sequence, export one mesh per stage and the report.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Comma-separated subset of SRG,STU,LAT.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<StageId>>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Report CSV; `<output_dir>/report.csv` by default.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Mesh directory; the config's output directory by default.
        #[arg(long)]
        export_dir: Option<PathBuf>,
    },
    /// Fit the config's free parameters to its calibration targets.
    Calibrate {
        #[arg(short, long)]
        config: PathBuf,
        /// Calibrated config.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Measure an existing mesh as it would appear in a stage.
    Measure {
        #[arg(short, long)]
        mesh: PathBuf,
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, default_value = "SRG")]
        stage: StageId,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Validate a mesh and compare the analytic gradient with finite differences.
    Check {
        #[arg(short, long)]
        mesh: PathBuf,
        /// Restores fixed vertices and energy coefficients from a config.
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Init { config, output } => init(config, output),
        Command::Run {
            config,
            stages,
            trajectory,
            report,
            export_dir,
        } => run(
            config,
            stages.as_deref(),
            trajectory.as_deref(),
            report.as_deref(),
            export_dir.as_deref(),
        ),
        Command::Calibrate { config, output } => calibrate_cmd(config, output),
        Command::Measure {
            mesh,
            config,
            stage,
            report,
        } => measure(mesh, config, *stage, report.as_deref()),
        Command::Check { mesh, config } => check(mesh, config.as_deref()),
    }
}

fn read_mesh(path: &Path) -> Result<TriMesh, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("obj") => io::read_obj(path),
        _ => io::read_off(path),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn init(config: &Path, output: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let mesh = cfg.simulation().initial_mesh()?;
    io::export_off(&mesh, output)?;
    println!(
        "{}: {} vertices, {} facets, volume {:.3} cm3",
        output.display(),
        mesh.vertex_count(),
        mesh.facet_count(),
        mesh.enclosed_volume()
    );
    Ok(())
}

/// Keeps the config's settings for the requested stages, in pipeline order.
fn select_stages(cfg: &mut RunConfig, ids: &[StageId]) {
    let mut ids = ids.to_vec();
    ids.sort();
    ids.dedup();
    cfg.stages = ids
        .into_iter()
        .map(|id| {
            cfg.stages
                .iter()
                .find(|s| s.id == id)
                .cloned()
                .unwrap_or_else(|| StageSettings::new(id))
        })
        .collect();
}

fn print_reports(reports: &[MeasurementReport]) {
    for r in reports {
        println!(
            "{}  volume {:9.3} cm3  area {:8.3} cm2  density {:.4} g/cm3",
            r.stage, r.volume, r.area, r.density
        );
        for w in &r.warnings {
            eprintln!("warning: {}: {w}", r.stage);
        }
    }
}

fn run(
    config: &Path,
    stages: Option<&[StageId]>,
    trajectory: Option<&Path>,
    report_path: Option<&Path>,
    export_dir: Option<&Path>,
) -> Result<(), CliError> {
    let mut cfg = load_config(config)?;
    if let Some(ids) = stages {
        select_stages(&mut cfg, ids);
    }
    let traj = trajectory.map(io::load_trajectory).transpose()?;
    if let Some(t) = &traj {
        t.validate()?;
    }
    let sim = cfg.simulation();
    let out = run_pipeline(&sim)?;

    let mut reports = out.reports();
    if let Some(t) = &traj {
        for r in &mut reports {
            r.markers = apply_trajectory(&r.markers, t, r.stage);
        }
    }
    let export_dir = export_dir.unwrap_or(&cfg.output_dir);
    ensure_dir(export_dir)?;
    for s in &out.stages {
        let name = format!("{}.off", s.config.id.as_str().to_lowercase());
        io::export_off(&s.mesh, &export_dir.join(name))?;
    }
    if reports.iter().any(|r| !r.markers.is_empty()) {
        io::write_atomic(&export_dir.join("markers.csv"), io::markers_csv(&reports).as_bytes())?;
    }
    let report_path = report_path.map_or_else(|| cfg.output_dir.join("report.csv"), Path::to_path_buf);
    if let Some(dir) = report_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    io::write_report(&reports, &report_path)?;
    print_reports(&reports);

    let stalled: Vec<String> = out
        .stages
        .iter()
        .filter(|s| !s.solve.converged)
        .map(|s| {
            format!(
                "{} (|grad| {:.3e} after {} iterations)",
                s.config.id, s.solve.final_grad_norm, s.solve.iters
            )
        })
        .collect();
    if stalled.is_empty() {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!("not converged: {}", stalled.join(", "))))
    }
}

fn calibrate_cmd(config: &Path, output: &Path) -> Result<(), CliError> {
    let mut cfg = load_config(config)?;
    let problem = cfg
        .calibration
        .clone()
        .ok_or_else(|| CliError::Usage("config has no calibration block".into()))?;
    let result = calibrate(&cfg.simulation(), &problem)?;
    let free: Vec<_> = problem.free.iter().map(|f| f.parameter).collect();
    cfg.absorb(&result.simulation, &free);
    io::write_atomic(output, cfg.to_json().as_bytes())?;
    for (f, v) in problem.free.iter().zip(&result.values) {
        println!("{:?} = {v}", f.parameter);
    }
    println!(
        "residual {:.3e} after {} evaluations",
        result.residual, result.evaluations
    );
    if result.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "calibration did not reach tolerance {}; best-so-far written to {}",
            problem.tolerance,
            output.display()
        )))
    }
}

fn measure(mesh: &Path, config: &Path, stage: StageId, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let sim = cfg.simulation();
    let (thorax, _) = build_thorax(&sim.anthro)?;
    let mut m = read_mesh(mesh)?;
    assign_roles(&mut m, &thorax, ROLE_TOL);
    m.ensure_valid()?;
    let configs = sim.stage_configs(&sim.initial_mesh()?)?;
    let table = configs.iter().find(|c| c.id == stage).and_then(|c| c.table());
    let r = report(&m, stage, sim.anthro.breast_mass, &thorax, table);
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    let csv = io::report_csv(std::slice::from_ref(&r));
    match out {
        Some(p) => io::write_atomic(p, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn check(mesh: &Path, config: Option<&Path>) -> Result<(), CliError> {
    let mut m = read_mesh(mesh)?;
    let spec = match config {
        Some(c) => {
            let cfg = load_config(c)?;
            let sim = cfg.simulation();
            let (thorax, _) = build_thorax(&sim.anthro)?;
            assign_roles(&mut m, &thorax, ROLE_TOL);
            let configs = sim.stage_configs(&sim.initial_mesh()?)?;
            let srg = &configs[0];
            EnergySpec {
                g_dir: srg.g_dir,
                support: srg.support,
                datum: support_datum(&m, srg),
                ..sim.spec
            }
        }
        None => EnergySpec {
            sigma: 1.0,
            willmore: 1.0,
            compressibility: 1.0,
            rest_volume: m.enclosed_volume().abs().max(f64::MIN_POSITIVE),
            ..EnergySpec::default()
        },
    };
    let fixed = m
        .vertex_roles
        .iter()
        .filter(|&&r| r != bsim_core::VertexRole::Free)
        .count();
    println!(
        "{} vertices ({fixed} fixed), {} facets, area {:.6} cm2, volume {:.6} cm3",
        m.vertex_count(),
        m.facet_count(),
        m.total_area(None),
        m.enclosed_volume()
    );
    let violations = m.validate();
    for v in &violations {
        println!("violation: {v:?}");
    }
    if !violations.is_empty() {
        return Err(CliError::Numerical(bsim_core::Error::InvalidMesh(format!(
            "{} violation(s)",
            violations.len()
        ))));
    }
    let err = fd_check(&m, &spec, FD_STEP)?;
    println!("fd_check: max relative gradient error {err:.3e} at step {FD_STEP} cm");
    Ok(())
}
