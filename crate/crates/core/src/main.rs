use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use vemsad::coupling::StressReading;
use vemsad::harness::{
    example1_case, patch_coupled_case, patch_transport_case, run_convergence, run_lithiation, LithiationConfig,
    ManufacturedCase,
};
use vemsad::mesh::{load_mesh, StructuredKind};
use vemsad::solver::{FixedPointConfig, IncrementNorm};
use vemsad::Error;

#[derive(Parser)]
#[command(name = "vemsad", version, about = "Virtual element solver for stress-assisted diffusion")]
struct Cli {
    /// JSON file with default values for any of the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    fp_tol: Option<f64>,
    #[arg(long, global = true)]
    fp_max_iter: Option<usize>,
    #[arg(long, global = true, value_enum)]
    fp_norm: Option<NormArg>,
    #[arg(long, global = true)]
    fp_damping: Option<f64>,
    /// Stop on the absolute increment instead of the relative one.
    #[arg(long, global = true)]
    abs_tol: bool,
    /// Floor of the norm in the relative stopping test (0: purely relative).
    #[arg(long, global = true)]
    fp_norm_floor: Option<f64>,
    #[arg(long, global = true)]
    stab_scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence study of a manufactured case on refined structured meshes.
    Converge {
        #[arg(long)]
        case: Option<String>,
        #[arg(long, value_enum)]
        mesh_family: Option<Family>,
        /// Meshes with 2, 4, ..., 2^levels cells per direction.
        #[arg(long)]
        levels: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cell quadrature degree of the error integrals.
        #[arg(long)]
        error_order: Option<usize>,
    },
    /// Lithiation of a perforated cylinder read from a mesh file.
    Run {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        law: Option<String>,
        #[arg(long)]
        clamped: Option<bool>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Family {
    Hex,
    Prism,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Phi,
    Combined,
}

#[derive(Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    case: Option<String>,
    mesh_family: Option<Family>,
    levels: Option<u32>,
    out: Option<PathBuf>,
    error_order: Option<usize>,
    mesh: Option<PathBuf>,
    law: Option<String>,
    clamped: Option<bool>,
    fp_tol: Option<f64>,
    fp_max_iter: Option<usize>,
    fp_norm: Option<IncrementNorm>,
    fp_damping: Option<f64>,
    fp_norm_floor: Option<f64>,
    abs_tol: Option<bool>,
    stab_scale: Option<f64>,
    quad_order: Option<usize>,
}

fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

/// Command defaults, overridden by the config file, overridden by flags.
fn fixed_point_config(cli: &Cli, file: &FileConfig, mut c: FixedPointConfig) -> FixedPointConfig {
    let norm = cli.fp_norm.map(|v| match v {
        NormArg::Phi => IncrementNorm::Phi,
        NormArg::Combined => IncrementNorm::Combined,
    });
    if let Some(v) = cli.fp_tol.or(file.fp_tol) {
        c.tolerance = v;
    }
    if let Some(v) = cli.fp_max_iter.or(file.fp_max_iter) {
        c.max_iterations = v;
    }
    if let Some(v) = norm.or(file.fp_norm) {
        c.norm = v;
    }
    if let Some(v) = cli.fp_damping.or(file.fp_damping) {
        c.damping = v;
    }
    if cli.abs_tol || file.abs_tol == Some(true) {
        c.abs_tol = true;
    }
    if let Some(v) = cli.fp_norm_floor.or(file.fp_norm_floor) {
        c.norm_floor = v;
    }
    if let Some(v) = cli.stab_scale.or(file.stab_scale) {
        c.stab_scale = v;
    }
    if let Some(v) = file.quad_order {
        c.quad_order = v;
    }
    c
}

fn case_by_name(name: &str) -> vemsad::Result<ManufacturedCase> {
    Ok(match name {
        "example1" => example1_case(StressReading::Matrix),
        "example1-scalar" => example1_case(StressReading::Scalar),
        "patch-coupled" => patch_coupled_case(),
        "patch-transport" => patch_transport_case(),
        other => return Err(input(format!("unknown case '{other}'"))),
    })
}

fn run(cli: &Cli) -> vemsad::Result<()> {
    let file: FileConfig = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Converge {
            case,
            mesh_family,
            levels,
            out,
            error_order,
        } => {
            let name = case.clone().or(file.case.clone()).unwrap_or_else(|| "example1".into());
            let case = case_by_name(&name)?;
            let kind = match mesh_family.or(file.mesh_family).unwrap_or(Family::Hex) {
                Family::Hex => StructuredKind::Hex,
                Family::Prism => StructuredKind::Prism,
            };
            let levels = levels.or(file.levels).unwrap_or(3);
            if levels == 0 || levels > 6 {
                return Err(input("levels must be between 1 and 6"));
            }
            let sizes: Vec<usize> = (1..=levels).map(|l| 1usize << l).collect();
            let order = error_order.or(file.error_order).unwrap_or(4);
            let fp = fixed_point_config(cli, &file, FixedPointConfig::default());
            let report = run_convergence(&case, kind, &sizes, &fp, order)?;
            print!("{}", report.to_table());
            if let Some(dir) = out.clone().or(file.out.clone()) {
                report.write(&dir)?;
            }
            Ok(())
        }
        Command::Run {
            mesh,
            law,
            clamped,
            out,
        } => {
            let path = mesh
                .clone()
                .or(file.mesh.clone())
                .ok_or_else(|| input("a mesh file is required (--mesh)"))?;
            let base = LithiationConfig::default();
            let config = LithiationConfig {
                law: law.clone().or(file.law.clone()).unwrap_or_else(|| "example2".into()),
                clamped: clamped.or(file.clamped).unwrap_or(false),
                fixed_point: fixed_point_config(cli, &file, base.fixed_point.clone()),
                ..base
            };
            let mesh = load_mesh(&path, None)?;
            let res = run_lithiation(mesh, &config)?;
            println!(
                "converged in {} iterations, max displacement {:.6e}",
                res.trace.iterations(),
                res.max_displacement
            );
            if let Some(dir) = out.clone().or(file.out.clone()) {
                std::fs::create_dir_all(&dir)?;
                let stem = if config.clamped { "clamped" } else { "unclamped" };
                res.export(&dir.join(format!("{stem}.vtu")))?;
                write_trace(&dir.join(format!("{stem}_trace.json")), &res.trace)?;
            }
            Ok(())
        }
    }
}

fn write_trace(path: &Path, trace: &vemsad::solver::IterationTrace) -> vemsad::Result<()> {
    let json = serde_json::to_string_pretty(trace).map_err(|e| input(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonConvergence { .. } => ExitCode::from(2),
                Error::Parse(_)
                | Error::Topology(_)
                | Error::Geometry(_)
                | Error::EmptyDirichlet
                | Error::Constraint(_)
                | Error::Dimension(_)
                | Error::Input(_)
                | Error::Io(_) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
