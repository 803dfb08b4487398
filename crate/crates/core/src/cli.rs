//! Command-line front end. Exit codes: 0 success (including a reported
//! collapse), 1 acceptance failure, 2 input error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bench::{Bench, BenchOptions};
use crate::certify::{certificate, CertifyOptions};
use crate::eigen::{solve_first_cluster, solve_pencil, EigenOptions};
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, DensityField, Floor, MassMode};
use crate::frame::select_frame;
use crate::maximizer::{maximize, AscentConfig, InitialDensity};
use crate::mesh::{
    load_mesh, write_intrinsic_json, write_off, IntrinsicMeshFile, MeshFormat, MeshGenerator,
    TriangleMesh,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ACCEPTANCE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "confspec",
    version,
    about = "Maximize and certify λ₁·A within a conformal class"
)]
pub struct Cli {
    /// TOML file of defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for internal parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Low spectrum of the pencil at a fixed density.
    Spectrum(SpectrumArgs),
    /// Run the ascent over the N schedule and certify the result.
    Maximize(MaximizeArgs),
    /// Certificate for a given density.
    Certify(CertifyArgs),
    /// Run the acceptance matrix and print a pass/fail table.
    Bench(BenchArgs),
    /// Write a generated mesh to a file.
    Gen(GenArgs),
    /// Print mesh statistics as JSON.
    Stats(MeshArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct MeshArgs {
    /// Mesh file (OFF, OBJ or intrinsic JSON).
    #[arg(long, conflicts_with = "gen")]
    pub mesh: Option<PathBuf>,
    /// Mesh file format; inferred from the extension when absent.
    #[arg(long)]
    pub format: Option<String>,
    /// Generator: icosphere:S, flat-torus:square:N, flat-torus:equilateral:N, flat-torus:a,b,c,d:NxM.
    #[arg(long)]
    pub gen: Option<String>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct DensityArgs {
    /// uniform | random:<seed> | path to a density sidecar (intrinsic JSON with "density").
    #[arg(long)]
    pub density: Option<String>,
    /// Density floor: 0 or -0.5.
    #[arg(long, allow_hyphen_values = true)]
    pub floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[command(flatten)]
    pub density: DensityArgs,
    /// Number of eigenpairs.
    #[arg(short = 'k', long = "k")]
    pub k: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write stiffness.mtx and mass.mtx.
    #[arg(long)]
    pub dump_matrices: bool,
}

#[derive(Debug, Args)]
pub struct MaximizeArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[command(flatten)]
    pub density: DensityArgs,
    /// Density caps in units of 1/A, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n_schedule: Option<Vec<f64>>,
    #[arg(long)]
    pub damping: Option<f64>,
    /// Relative λ tolerance per N level.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[command(flatten)]
    pub density: DensityArgs,
    /// Density cap in units of 1/A (defaults to the last schedule entry).
    #[arg(long)]
    pub cap: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Coarse meshes only, tolerances doubled.
    #[arg(long)]
    pub quick: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub gen: String,
    /// Output file; `.off` (embedded meshes only) or `.json`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Keys accepted in the `--config` TOML file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: Option<PathBuf>,
    pub format: Option<String>,
    pub gen: Option<String>,
    pub density: Option<String>,
    pub floor: Option<f64>,
    pub n_schedule: Option<Vec<f64>>,
    pub damping: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub k: Option<usize>,
    pub quick: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    Uniform,
    Random(u64),
    File(PathBuf),
}

impl FromStr for DensitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            return Ok(DensitySpec::Uniform);
        }
        if let Some(seed) = s.strip_prefix("random:") {
            return seed
                .parse()
                .map(DensitySpec::Random)
                .map_err(|_| Error::InvalidArgument(format!("bad random seed in '{s}'")));
        }
        if s == "random" {
            return Ok(DensitySpec::Random(0));
        }
        Ok(DensitySpec::File(PathBuf::from(s)))
    }
}

impl DensitySpec {
    fn initial(&self, mesh: &TriangleMesh) -> Result<InitialDensity> {
        Ok(match self {
            DensitySpec::Uniform => InitialDensity::Uniform,
            DensitySpec::Random(seed) => InitialDensity::Random(*seed),
            DensitySpec::File(path) => InitialDensity::Given(read_density(path, mesh)?),
        })
    }
}

/// Density values from a sidecar written by `maximize`.
pub fn read_density(path: &Path, mesh: &TriangleMesh) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: IntrinsicMeshFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let values = file.density.ok_or_else(|| {
        Error::InvalidDensity(format!("{} has no \"density\" field", path.display()))
    })?;
    if file.vertices != mesh.vertex_count() || file.triangles != mesh.triangles() {
        return Err(Error::Inconsistent(format!(
            "{} describes a different mesh",
            path.display()
        )));
    }
    if values.len() != mesh.vertex_count() {
        return Err(Error::InvalidDensity(format!(
            "{} values for {} vertices",
            values.len(),
            mesh.vertex_count()
        )));
    }
    Ok(values)
}

fn pick<T: Clone>(cli: &Option<T>, file: &Option<T>) -> Option<T> {
    cli.clone().or_else(|| file.clone())
}

fn resolve_mesh(args: &MeshArgs, file: &RunConfig) -> Result<(TriangleMesh, String)> {
    let path = if args.gen.is_some() {
        None
    } else {
        pick(&args.mesh, &file.mesh)
    };
    let generator = if args.mesh.is_some() {
        None
    } else {
        pick(&args.gen, &file.gen)
    };
    match (path, generator) {
        (Some(path), _) => {
            let format = match pick(&args.format, &file.format) {
                Some(f) => f.parse()?,
                None => MeshFormat::from_path(&path).ok_or_else(|| {
                    Error::InvalidArgument(format!("cannot infer the format of {}", path.display()))
                })?,
            };
            let mesh = load_mesh(&path, format)?;
            Ok((mesh, path.display().to_string()))
        }
        (None, Some(spec)) => {
            let g: MeshGenerator = spec.parse()?;
            Ok((g.generate()?, g.to_string()))
        }
        (None, None) => Err(Error::InvalidArgument(
            "give --mesh PATH or --gen SPEC".into(),
        )),
    }
}

fn resolve_floor(args: &DensityArgs, file: &RunConfig) -> Result<Floor> {
    pick(&args.floor, &file.floor).map_or(Ok(Floor::Zero), Floor::from_value)
}

fn resolve_density(args: &DensityArgs, file: &RunConfig) -> Result<DensitySpec> {
    pick(&args.density, &file.density).map_or(Ok(DensitySpec::Uniform), |s| s.parse())
}

fn output_dir(cli: &Option<PathBuf>, file: &RunConfig) -> Result<PathBuf> {
    let dir = pick(cli, &file.out).unwrap_or_else(|| PathBuf::from("confspec-out"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn cmd_spectrum(args: &SpectrumArgs, file: &RunConfig) -> Result<i32> {
    let (mesh, source) = resolve_mesh(&args.mesh, file)?;
    let floor = resolve_floor(&args.density, file)?;
    let values = resolve_density(&args.density, file)?
        .initial(&mesh)?
        .values(&mesh)?;
    let density = DensityField::normalized(&mesh, values, floor, f64::INFINITY)?;
    let stiffness = assemble_stiffness(&mesh);
    let mass = assemble_mass(&mesh, &density, MassMode::Consistent);
    let mut opts = EigenOptions::with_k(pick(&args.k, &file.k).unwrap_or(10));
    opts.seed = pick(&args.seed, &file.seed).unwrap_or(opts.seed);
    opts.tol = pick(&args.tol, &file.tol).unwrap_or(opts.tol);
    let spec = solve_pencil(&stiffness, &mass, &opts)?;
    let dir = output_dir(&args.out, file)?;
    write(&dir, "spectrum.csv", &spec.to_csv())?;
    let summary = json!({
        "mesh": source,
        "vertices": mesh.vertex_count(),
        "genus": mesh.genus(),
        "lambda1_area": spec.lambda1(),
        "first_cluster_size": spec.first_cluster().len(),
        "eigenvalues": spec.eigenvalues,
        "residuals": spec.residuals,
        "clusters": spec.clusters,
        "excluded_vertices": spec.excluded_vertices,
    });
    write(
        &dir,
        "spectrum.json",
        &serde_json::to_string_pretty(&summary).expect("json"),
    )?;
    if args.dump_matrices {
        write(&dir, "stiffness.mtx", &stiffness.matrix.to_matrix_market())?;
        write(&dir, "mass.mtx", &mass.matrix.to_matrix_market())?;
    }
    println!(
        "lambda1_area {:.10} (first cluster of {}) -> {}",
        spec.lambda1(),
        spec.first_cluster().len(),
        dir.display()
    );
    Ok(EXIT_OK)
}

fn ascent_config(args: &MaximizeArgs, file: &RunConfig) -> Result<AscentConfig> {
    let mut c = AscentConfig {
        floor: resolve_floor(&args.density, file)?,
        ..AscentConfig::default()
    };
    if let Some(v) = pick(&args.n_schedule, &file.n_schedule) {
        c.n_schedule = v;
    }
    if let Some(v) = pick(&args.damping, &file.damping) {
        c.damping = v;
    }
    if let Some(v) = pick(&args.tol, &file.tol) {
        c.lambda_tol = v;
    }
    if let Some(v) = pick(&args.max_iters, &file.max_iters) {
        c.max_iters = v;
    }
    if let Some(v) = pick(&args.seed, &file.seed) {
        c.seed = v;
    }
    if let Some(v) = file.k {
        c.k = v;
    }
    c.validate()?;
    Ok(c)
}

fn cmd_maximize(args: &MaximizeArgs, file: &RunConfig) -> Result<i32> {
    let (mesh, source) = resolve_mesh(&args.mesh, file)?;
    let config = ascent_config(args, file)?;
    let init = resolve_density(&args.density, file)?.initial(&mesh)?;
    let result = maximize(&mesh, &init, &config, &CertifyOptions::default())?;
    let dir = output_dir(&args.out, file)?;
    write(&dir, "trace.csv", &result.trace.to_csv())?;
    write(
        &dir,
        "density.json",
        &write_intrinsic_json(&mesh, Some(result.density.values())),
    )?;
    write(&dir, "certificate.json", &result.certificate.to_json())?;
    write(&dir, "frame.json", &result.frame.to_json())?;
    let summary = json!({
        "mesh": source,
        "status": result.trace.status.as_str(),
        "lambda1_area": result.certificate.lambda1_area,
        "iterations": result.trace.records.len().saturating_sub(1),
        "levels": result.trace.levels,
        "saturation_constant": result.trace.saturation_constant(),
        "frame": {
            "ell": result.frame.ell,
            "objective": result.frame.objective,
            "q_spectrum": result.frame.q_spectrum,
        },
        "config": config,
    });
    write(
        &dir,
        "result.json",
        &serde_json::to_string_pretty(&summary).expect("json"),
    )?;
    println!(
        "status {} lambda1_area {:.10} -> {}",
        result.trace.status.as_str(),
        result.certificate.lambda1_area,
        dir.display()
    );
    Ok(EXIT_OK)
}

fn cmd_certify(args: &CertifyArgs, file: &RunConfig) -> Result<i32> {
    let (mesh, _) = resolve_mesh(&args.mesh, file)?;
    let floor = resolve_floor(&args.density, file)?;
    let values = resolve_density(&args.density, file)?
        .initial(&mesh)?
        .values(&mesh)?;
    let scaled_cap = args
        .cap
        .or_else(|| file.n_schedule.as_ref().and_then(|s| s.last().copied()))
        .unwrap_or(
            *AscentConfig::default()
                .n_schedule
                .last()
                .expect("default schedule"),
        );
    let density = DensityField::normalized(&mesh, values, floor, scaled_cap / mesh.area())?;
    let stiffness = assemble_stiffness(&mesh);
    let mass = assemble_mass(&mesh, &density, MassMode::Consistent);
    let mut opts = EigenOptions::with_k(pick(&None, &file.k).unwrap_or(8));
    opts.seed = pick(&args.seed, &file.seed).unwrap_or(opts.seed);
    let spec = solve_first_cluster(&stiffness, &mass, &opts)?;
    let frame = select_frame(
        &mesh,
        &spec.first_cluster_basis(),
        spec.first_cluster_value(),
    )?;
    let cert = certificate(&mesh, &density, &spec, &frame, &CertifyOptions::default())?;
    let dir = output_dir(&args.out, file)?;
    write(&dir, "certificate.json", &cert.to_json())?;
    println!(
        "lambda1_area {:.10} -> {}",
        cert.lambda1_area,
        dir.display()
    );
    Ok(EXIT_OK)
}

fn cmd_bench(args: &BenchArgs, file: &RunConfig) -> Result<i32> {
    let options = BenchOptions {
        quick: args.quick || file.quick.unwrap_or(false),
        seed: pick(&args.seed, &file.seed).unwrap_or(BenchOptions::default().seed),
    };
    let bench = Bench::new(options);
    let outcomes = bench.run_all();
    for o in &outcomes {
        println!("{}", o.line());
    }
    let mut levels = Vec::new();
    for run in bench.runs().into_iter().flatten() {
        for l in &run.result.trace.levels {
            levels.push(json!({
                "run": run.label,
                "N": l.n,
                "lambda1_area": l.lambda1_area,
                "EN_measure": l.en_measure,
                "EN_measure_times_N": l.en_measure_times_n,
                "ENeg_measure": l.eneg_measure,
            }));
        }
    }
    println!(
        "\n{:<36} {:>12} {:>14} {:>12} {:>14}",
        "run", "N", "lambda1_area", "EN_measure", "EN_measure*N"
    );
    for l in &levels {
        println!(
            "{:<36} {:>12.4} {:>14.6} {:>12.3e} {:>14.3e}",
            l["run"].as_str().unwrap_or(""),
            l["N"].as_f64().unwrap_or(f64::NAN),
            l["lambda1_area"].as_f64().unwrap_or(f64::NAN),
            l["EN_measure"].as_f64().unwrap_or(f64::NAN),
            l["EN_measure_times_N"].as_f64().unwrap_or(f64::NAN),
        );
    }
    if let Some(out) = pick(&args.out, &file.out) {
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let report = json!({ "options": options, "criteria": outcomes, "levels": levels });
        write(
            &out,
            "bench.json",
            &serde_json::to_string_pretty(&report).expect("json"),
        )?;
    }
    Ok(if outcomes.iter().all(|o| o.pass) {
        EXIT_OK
    } else {
        EXIT_ACCEPTANCE
    })
}

fn cmd_gen(args: &GenArgs) -> Result<i32> {
    let g: MeshGenerator = args.gen.parse()?;
    let mesh = g.generate()?;
    let text = match MeshFormat::from_path(&args.out) {
        Some(MeshFormat::Off) => write_off(&mesh)?,
        Some(MeshFormat::IntrinsicJson) => write_intrinsic_json(&mesh, None),
        _ => {
            return Err(Error::InvalidArgument(
                "output must end in .off or .json".into(),
            ))
        }
    };
    fs::write(&args.out, text).map_err(|e| Error::io(&args.out, e))?;
    println!(
        "{} vertices, {} triangles, genus {} -> {}",
        mesh.vertex_count(),
        mesh.triangles().len(),
        mesh.genus(),
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_stats(args: &MeshArgs, file: &RunConfig) -> Result<i32> {
    let (mesh, source) = resolve_mesh(args, file)?;
    let stats = mesh.stats();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "mesh": source, "stats": stats })).expect("json")
    );
    Ok(EXIT_OK)
}

/// Parses the command line, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_NUMERIC
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(jobs) = pick(&cli.jobs, &file.jobs) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Spectrum(a) => cmd_spectrum(a, &file),
        Command::Maximize(a) => cmd_maximize(a, &file),
        Command::Certify(a) => cmd_certify(a, &file),
        Command::Bench(a) => cmd_bench(a, &file),
        Command::Gen(a) => cmd_gen(a),
        Command::Stats(a) => cmd_stats(a, &file),
    }
}
