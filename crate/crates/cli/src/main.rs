//! `platevem`: mesh utilities and the plate experiments.
//!
//! Exit codes: 0 success, 1 numerical or I/O failure, 2 usage or configuration error.

mod config;
mod manifest;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use platevem::dynamics::{NewtonConfig, PhysicalParams, Scheme, TimeState};
use platevem::experiments::{
    bridge_bounds, report_jacobian, run_example1, run_example2, write_convergence_csv, write_energy_csv, ConvergenceRow, Damping, DtPolicy,
    Example1Config, Example2Config, ManufacturedSolution,
};
use platevem::geometry::signed_area;
use platevem::mesh::{check_regularity, read_mesh, write_mesh, BoundarySpec, Bounds, PolygonalMesh};
use platevem::assembly::{assemble, build_dof_map, ProblemKind};

use config::FileConfig;
use manifest::Manifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] platevem::Error),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(platevem::Error::Config(_) | platevem::Error::InvalidArgument(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Parser)]
#[command(name = "platevem", version, about = "C1 virtual element solver for the nonlocal dynamic plate equation")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate, validate or convert polygonal meshes.
    Mesh {
        #[command(subcommand)]
        action: MeshCommand,
    },
    /// Manufactured clamped plate: convergence table for one mesh family.
    Example1(Example1Args),
    /// Bridge deck released from a static deflection: energy trace.
    Example2(Example2Args),
    /// Example 1 convergence tables for several mesh families.
    Convergence(ConvergenceArgs),
    /// Sparsity and conditioning of the bordered Newton Jacobian.
    ReportJacobian(JacobianArgs),
}

#[derive(Debug, Subcommand)]
enum MeshCommand {
    Generate(GenerateArgs),
    /// Read a mesh file, check its invariants and report shape regularity.
    Validate {
        path: PathBuf,
        /// Regularity threshold for the report.
        #[arg(long, default_value_t = 0.05)]
        gamma: f64,
        /// Fail (exit 1) when the regularity check does not pass.
        #[arg(long)]
        strict: bool,
    },
    /// Rewrite a mesh file in canonical form (counter-clockwise cells, retagged boundary).
    Convert {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Retag boundary edges; keeps the file's tags when omitted.
        #[arg(long, value_enum)]
        boundary: Option<BoundaryKind>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Family {
    Square,
    Distorted,
    Nonconvex,
    Voronoi,
    Regular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundaryKind {
    Clamped,
    Bridge,
}

impl BoundaryKind {
    fn spec(self) -> BoundarySpec {
        match self {
            BoundaryKind::Clamped => BoundarySpec::AllClamped,
            BoundaryKind::Bridge => BoundarySpec::Bridge,
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Subdivisions per side, or the number of seeds for voronoi.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    lloyd: usize,
    #[arg(long, default_value_t = 0.2)]
    amplitude: f64,
    /// `xmin,ymin,xmax,ymax`; defaults to the unit square (bridge deck for `--boundary bridge`).
    #[arg(long, value_delimiter = ',', num_args = 4)]
    bounds: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "clamped")]
    boundary: BoundaryKind,
    #[arg(short, long)]
    output: PathBuf,
}

/// Options shared by the simulation commands.
#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Axial load.
    #[arg(long = "P")]
    p: Option<f64>,
    /// Stretching coefficient.
    #[arg(long = "S")]
    s: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Final time.
    #[arg(long = "T")]
    t_final: Option<f64>,
    #[arg(long)]
    scheme: Option<String>,
    /// Output directory.
    #[arg(short = 'o', long)]
    out_dir: Option<PathBuf>,
    /// Estimate Jacobian condition numbers (slower).
    #[arg(long)]
    condition: bool,
}

#[derive(Debug, Args)]
struct FamilyArgs {
    /// Coarsest level: cells per side, or sqrt of the seed count for voronoi.
    #[arg(long)]
    n0: Option<usize>,
    /// Number of levels, each doubling the previous one.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lloyd: Option<usize>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long, value_enum)]
    dt_policy: Option<DtPolicyArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DtPolicyArg {
    /// Largest dt <= h^2 dividing T.
    H2,
    /// The value of --dt.
    Fixed,
}

#[derive(Debug, Args)]
struct Example1Args {
    #[arg(long, value_enum)]
    mesh: Option<Family>,
    #[command(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "square,voronoi")]
    families: Vec<Family>,
    #[command(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct Example2Args {
    /// Cells per side of the deck grid.
    #[arg(long)]
    n: Option<usize>,
    /// `strip` damps a frame along the boundary; `constant` uses --delta everywhere.
    #[arg(long, value_enum)]
    damping: Option<DampingArg>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DampingArg {
    Strip,
    Constant,
}

#[derive(Debug, Args)]
struct JacobianArgs {
    #[arg(long, value_enum)]
    mesh: Option<Family>,
    #[arg(long)]
    n: Option<usize>,
    /// Time at which the manufactured state is sampled.
    #[arg(long, default_value_t = 0.25)]
    t: f64,
    #[command(flatten)]
    common: CommonArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Mesh { action } => mesh_command(action),
        Command::Example1(a) => example1(a),
        Command::Example2(a) => example2(a),
        Command::Convergence(a) => convergence(a),
        Command::ReportJacobian(a) => jacobian(a),
    }
}

fn mesh_command(action: MeshCommand) -> Result<(), CliError> {
    match action {
        MeshCommand::Generate(a) => {
            let bounds = match (&a.bounds, a.boundary) {
                (Some(b), _) => Bounds::new(b[0], b[1], b[2], b[3])?,
                (None, BoundaryKind::Bridge) => bridge_bounds(),
                (None, BoundaryKind::Clamped) => Bounds::unit_square(),
            };
            let spec = a.boundary.spec();
            let mesh = match a.family {
                Family::Voronoi => platevem::mesh::generate_voronoi(a.n, bounds, a.lloyd, a.seed, &spec)?,
                f => mesh_family(f, a.seed, a.lloyd, a.amplitude).generate(a.n, bounds, &spec)?,
            };
            write_mesh(&mesh, &a.output)?;
            println!("{}: {} vertices, {} cells, h = {:.6e}", a.output.display(), mesh.num_vertices(), mesh.num_cells(), mesh.h());
            Ok(())
        }
        MeshCommand::Validate { path, gamma, strict } => {
            let mesh = read_mesh(&path)?;
            let report = check_regularity(&mesh, gamma);
            let summary = json!({
                "path": path,
                "vertices": mesh.num_vertices(),
                "cells": mesh.num_cells(),
                "boundary_edges": mesh.boundary_edges().count(),
                "h": mesh.h(),
                "area": total_area(&mesh),
                "regularity": report,
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("plain JSON"));
            if strict && !report.passes {
                return Err(platevem::Error::Validation(format!("regularity check failed for gamma = {gamma}")).into());
            }
            Ok(())
        }
        MeshCommand::Convert { input, output, boundary } => {
            let mut mesh = read_mesh(&input)?;
            if let Some(kind) = boundary {
                let positions = mesh.vertices().iter().map(|v| v.position).collect();
                let cells = mesh.cells().iter().map(|c| c.vertices.clone()).collect();
                mesh = PolygonalMesh::with_boundary_spec(positions, cells, *mesh.bounds(), &kind.spec())?;
            }
            write_mesh(&mesh, &output)?;
            println!("{} -> {}", input.display(), output.display());
            Ok(())
        }
    }
}

fn total_area(mesh: &PolygonalMesh) -> f64 {
    (0..mesh.num_cells()).map(|c| signed_area(&mesh.cell_polygon(c))).sum()
}

fn mesh_family(f: Family, seed: u64, lloyd: usize, amplitude: f64) -> platevem::experiments::MeshFamily {
    use platevem::experiments::MeshFamily as M;
    match f {
        Family::Square => M::Square,
        Family::Distorted => M::Distorted { amplitude, seed },
        Family::Nonconvex => M::Nonconvex,
        Family::Voronoi => M::Voronoi { lloyd_iterations: lloyd, seed },
        Family::Regular => M::RegularPolygon,
    }
}

fn family_from_name(name: &str) -> Result<Family, CliError> {
    Family::from_str(name, true).map_err(|_| CliError::Usage(format!("unknown mesh family {name:?}")))
}

fn scheme(common: &CommonArgs, file: &FileConfig) -> Result<Scheme, CliError> {
    let name = common.scheme.clone().or_else(|| file.time.scheme.clone()).unwrap_or_else(|| "nonlinear".into());
    name.parse().map_err(|e: platevem::Error| CliError::Usage(e.to_string()))
}

fn newton(file: &FileConfig, default: NewtonConfig) -> NewtonConfig {
    NewtonConfig { max_iterations: file.time.newton_max_iterations.unwrap_or(default.max_iterations), ..default }
}

fn out_dir(common: &CommonArgs, file: &FileConfig) -> Result<PathBuf, CliError> {
    let dir = common.out_dir.clone().or_else(|| file.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(io_err(format!("cannot create {}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(format!("cannot create {}", path.display())))?))
}

/// Example 1 configuration from flags, file and defaults.
fn example1_config(family: Option<Family>, fa: &FamilyArgs, common: &CommonArgs, file: &FileConfig) -> Result<Example1Config, CliError> {
    let d = Example1Config::default();
    let family = match (family, &file.mesh.family) {
        (Some(f), _) => f,
        (None, Some(name)) => family_from_name(name)?,
        (None, None) => Family::Square,
    };
    let n0 = fa.n0.or(file.mesh.n).unwrap_or(4);
    let count = fa.levels.or(file.mesh.levels).unwrap_or(4);
    if n0 == 0 || count == 0 || count > 16 {
        return Err(CliError::Usage(format!("need n0 >= 1 and 1 <= levels <= 16 (got n0 = {n0}, levels = {count})")));
    }
    let dt = common.dt.or(file.time.dt);
    let dt_policy = match (fa.dt_policy, dt) {
        (Some(DtPolicyArg::H2), _) | (None, None) => DtPolicy::HSquared,
        (Some(DtPolicyArg::Fixed), Some(dt)) | (None, Some(dt)) => DtPolicy::Fixed { dt },
        (Some(DtPolicyArg::Fixed), None) => return Err(CliError::Usage("--dt-policy fixed requires --dt".into())),
    };
    Ok(Example1Config {
        family: mesh_family(family, fa.seed.or(file.mesh.seed).unwrap_or(1), fa.lloyd.or(file.mesh.lloyd).unwrap_or(10), fa.amplitude.or(file.mesh.amplitude).unwrap_or(0.2)),
        levels: (0..count).map(|i| n0 << i).collect(),
        dt_policy,
        t_final: common.t_final.or(file.time.t_final).unwrap_or(d.t_final),
        delta: common.delta.or(file.physics.delta).unwrap_or(d.delta),
        sigma: common.sigma.or(file.physics.sigma).unwrap_or(d.sigma),
        p: common.p.or(file.physics.p).unwrap_or(d.p),
        s: common.s.or(file.physics.s).unwrap_or(d.s),
        scheme: scheme(common, file)?,
        newton: newton(file, d.newton),
        condition_estimate: common.condition || file.output.condition.unwrap_or(false),
    })
}

fn print_table(rows: &[ConvergenceRow]) {
    println!("{:>10} {:>7} {:>11} {:>11} {:>6} {:>6}", "h", "ndof", "err_h2", "err_rel", "eoc", "newton");
    for r in rows {
        let eoc = r.eoc.map_or_else(|| "-".to_string(), |e| format!("{e:.3}"));
        println!("{:>10.4e} {:>7} {:>11.4e} {:>11.4e} {:>6} {:>6}", r.h, r.ndof, r.err_h2, r.err_rel, eoc, r.newton_max);
    }
}

fn example1(a: Example1Args) -> Result<(), CliError> {
    let start = Instant::now();
    let file = FileConfig::load_opt(a.common.config.as_deref())?;
    let cfg = example1_config(a.mesh, &a.family, &a.common, &file)?;
    let dir = out_dir(&a.common, &file)?;
    let rows = run_example1(&cfg)?;
    print_table(&rows);
    let csv = dir.join("convergence.csv");
    write_convergence_csv(&rows, create(&csv)?)?;
    Manifest::new("example1", &cfg, json!({ "rows": rows }), vec![csv], start).write(&dir)
}

fn convergence(a: ConvergenceArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let file = FileConfig::load_opt(a.common.config.as_deref())?;
    let dir = out_dir(&a.common, &file)?;
    let mut configs = Vec::new();
    let mut results = serde_json::Map::new();
    let mut outputs = Vec::new();
    for &f in &a.families {
        let cfg = example1_config(Some(f), &a.family, &a.common, &file)?;
        let rows = run_example1(&cfg)?;
        let name = serde_json::to_value(f).expect("plain enum").as_str().expect("string").to_string();
        println!("{name}");
        print_table(&rows);
        let csv = dir.join(format!("convergence_{name}.csv"));
        write_convergence_csv(&rows, create(&csv)?)?;
        results.insert(name, json!(rows));
        outputs.push(csv);
        configs.push(cfg);
    }
    Manifest::new("convergence", &configs, results.into(), outputs, start).write(&dir)
}

fn example2(a: Example2Args) -> Result<(), CliError> {
    let start = Instant::now();
    let common = &a.common;
    let file = FileConfig::load_opt(common.config.as_deref())?;
    let d = Example2Config::default();
    let delta = common.delta.or(file.physics.delta);
    let damping = match (a.damping, delta) {
        (Some(DampingArg::Strip), _) | (None, None) => Damping::Strip,
        (Some(DampingArg::Constant), Some(value)) | (None, Some(value)) => Damping::Constant { value },
        (Some(DampingArg::Constant), None) => return Err(CliError::Usage("--damping constant requires --delta".into())),
    };
    let cfg = Example2Config {
        n: a.n.or(file.mesh.n).unwrap_or(d.n),
        dt: common.dt.or(file.time.dt).unwrap_or(d.dt),
        t_final: common.t_final.or(file.time.t_final).unwrap_or(d.t_final),
        sigma: common.sigma.or(file.physics.sigma).unwrap_or(d.sigma),
        p: common.p.or(file.physics.p).unwrap_or(d.p),
        s: common.s.or(file.physics.s).unwrap_or(d.s),
        damping,
        scheme: scheme(common, &file)?,
        newton: newton(&file, d.newton),
        initial_load: d.initial_load,
    };
    let dir = out_dir(common, &file)?;
    let r = run_example2(&cfg)?;
    let recs = &r.trajectory.records;
    let (first, last) = (recs.first().expect("at least one step"), recs.last().expect("at least one step"));
    let ratio = last.energy / first.energy;
    let newton_max = recs.iter().map(|x| x.newton_iters).max().unwrap_or(0);
    println!("steps {}  E(t1) = {:.6e}  E(T) = {:.6e}  ratio = {:.4e}  newton_max = {}", recs.len(), first.energy, last.energy, ratio, newton_max);
    let csv = dir.join("energy.csv");
    write_energy_csv(&r.trajectory, create(&csv)?)?;
    let results = json!({
        "steps": recs.len(),
        "energy_first": first.energy,
        "energy_final": last.energy,
        "energy_ratio": ratio,
        "newton_max": newton_max,
        "damped_fraction": r.damped_fraction,
        "ndof": r.system.n_free(),
    });
    Manifest::new("example2", &cfg, results, vec![csv], start).write(&dir)
}

fn jacobian(a: JacobianArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let common = &a.common;
    let file = FileConfig::load_opt(common.config.as_deref())?;
    let d = Example1Config::default();
    let family = match (a.mesh, &file.mesh.family) {
        (Some(f), _) => f,
        (None, Some(name)) => family_from_name(name)?,
        (None, None) => Family::Square,
    };
    let n = a.n.or(file.mesh.n).unwrap_or(16);
    let seed = file.mesh.seed.unwrap_or(1);
    let fam = mesh_family(family, seed, file.mesh.lloyd.unwrap_or(10), file.mesh.amplitude.unwrap_or(0.2));
    let sol = ManufacturedSolution {
        delta: common.delta.or(file.physics.delta).unwrap_or(d.delta),
        p: common.p.or(file.physics.p).unwrap_or(d.p),
        s: common.s.or(file.physics.s).unwrap_or(d.s),
    };
    let params = PhysicalParams { sigma: common.sigma.or(file.physics.sigma).unwrap_or(d.sigma), p: sol.p, s: sol.s };
    let dt = common.dt.or(file.time.dt).unwrap_or(1e-3);
    let with_condition = common.condition || file.output.condition.unwrap_or(false);
    let dir = out_dir(common, &file)?;

    let mesh = fam.generate(n, Bounds::unit_square(), &BoundarySpec::AllClamped)?;
    let dofs = build_dof_map(&mesh, ProblemKind::Clamped)?;
    let delta = sol.delta;
    let system = assemble(&mesh, &dofs, params.sigma, |_| delta)?;
    let eta = system.interpolate(|p| (sol.u(p, a.t), sol.grad(p, a.t)))?;
    let eta_prev = system.interpolate(|p| (sol.u(p, a.t - dt), sol.grad(p, a.t - dt)))?;
    let state = TimeState { xi: system.ax.quad_form(&eta), eta, eta_prev, step: 1, time: a.t };
    let report = report_jacobian(&system, params, &state, dt, with_condition)?;
    println!(
        "N = {}  nnz(J1) = {}  nnz(bordered) = {}  nnz(full) = {}  fill bordered = {:.3e}  fill full = {:.3e}",
        report.n, report.nnz_j1, report.nnz_bordered, report.nnz_full, report.bordered_fill, report.full_fill
    );
    if let Some(c) = report.cond_estimate {
        println!("condition estimate = {c:.4e}");
    }
    let path = dir.join("jacobian.json");
    fs::write(&path, serde_json::to_string_pretty(&report).expect("plain JSON")).map_err(io_err(format!("cannot write {}", path.display())))?;
    let parameters = json!({ "family": fam, "n": n, "t": a.t, "dt": dt, "params": { "sigma": params.sigma, "P": params.p, "S": params.s } });
    Manifest::new("report-jacobian", &parameters, json!(report), vec![path], start).write(&dir)
}
