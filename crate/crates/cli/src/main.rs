use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctis_core::bench::{run_benchmark, BenchConfig};
use ctis_core::io::{self, BenchRow};
use ctis_core::oracle::OracleLimits;
use ctis_core::{
    avg_relative_pixel_error, build_system_matrix, column_sums, em_solve, impulse_kernels,
    make_geometry, project, relative_error, synth_kernels, synth_scene, Backend, Datacube, Dtype,
    FpaImage, Init, KernelSet, Projector, Real, SolverConfig, SpectralProjector, SpotSpec, Storage,
    SystemGeometry,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

mod parse;

use parse::{GeometryArg, SpotsArg};

#[derive(Parser, Debug)]
#[command(
    name = "ctis",
    version,
    about = "Shift-invariant CTIS calibration, projection and reconstruction"
)]
struct Cli {
    /// Worker threads for data-parallel loops (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic calibration kernel set
    SynthCalib(SynthCalibArgs),
    /// Write a synthetic datacube
    SynthScene(SynthSceneArgs),
    /// Project a datacube to an FPA image
    Project(ProjectArgs),
    /// Reconstruct a datacube from an FPA image with EM
    Reconstruct(ReconstructArgs),
    /// Print error metrics between two datacubes
    Compare(CompareArgs),
    /// Time EM over backends and iteration counts
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug)]
struct SynthCalibArgs {
    /// a,alpha,gamma,xi,w
    #[arg(long, value_parser = parse::geometry)]
    geometry: GeometryArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// fitted | impulse[:ROW,COL] | key=value;... (orders, base, dispersion,
    /// sigma, amplitude, zeroth, jitter, center=ROW,COL)
    #[arg(long, default_value = "fitted", value_parser = parse::spots)]
    spots: SpotsArg,
    /// Comma-separated band wavelengths, stored as metadata
    #[arg(long, value_delimiter = ',')]
    wavelengths: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthSceneArgs {
    /// constant:V | rgb:PATH | random:SEED
    #[arg(long, value_parser = parse::scene)]
    kind: ctis_core::SceneKind,
    /// a,alpha,gamma,xi,w
    #[arg(long, value_parser = parse::geometry)]
    geometry: GeometryArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[arg(long)]
    kernels: PathBuf,
    #[arg(long)]
    cube: PathBuf,
    #[arg(long, default_value = "wbh")]
    backend: Backend,
    /// poisson:SCALE
    #[arg(long, value_parser = parse::noise)]
    noise: Option<f64>,
    /// Noise seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Expected a,alpha,gamma,xi,w; inputs must match
    #[arg(long, value_parser = parse::geometry)]
    geometry: Option<GeometryArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long)]
    kernels: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value = "wbh")]
    backend: Backend,
    #[arg(long, default_value_t = 25)]
    iterations: usize,
    #[arg(long, default_value = "ones")]
    init: Init,
    /// Division guard (default 1e-12 for f64, 1e-6 for f32)
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value = "f64")]
    precision: Dtype,
    /// Expected a,alpha,gamma,xi,w; inputs must match
    #[arg(long, value_parser = parse::geometry)]
    geometry: Option<GeometryArg>,
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration CSV: iteration,seconds,residual
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    cube_a: PathBuf,
    /// Reference cube
    #[arg(long)]
    cube_b: PathBuf,
    /// Reference voxels at or below this are left out of the pixel error
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(long)]
    kernels: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "25")]
    iterations: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "wbh,bf")]
    backends: Vec<Backend>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value = "f32")]
    precision: Dtype,
    /// Ground-truth cube for the quality columns
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Core(ctis_core::Error),
    Usage(String),
}

impl From<ctis_core::Error> for CliError {
    fn from(e: ctis_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Usage(_) => "UsageError",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::Usage(m) => m.clone(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn geometry_of(arg: GeometryArg, wavelengths: Option<Vec<f64>>) -> CliResult<SystemGeometry> {
    Ok(make_geometry(
        arg.a,
        arg.alpha,
        arg.gamma,
        arg.xi,
        arg.w,
        wavelengths,
    )?)
}

fn check_expected(expected: Option<GeometryArg>, found: &SystemGeometry) -> CliResult {
    if let Some(arg) = expected {
        io::expect_geometry(&geometry_of(arg, None)?, found)?;
    }
    Ok(())
}

fn synth_calib(args: SynthCalibArgs) -> CliResult {
    let g = geometry_of(args.geometry, args.wavelengths)?;
    let kernels: KernelSet<f64> = match args.spots {
        SpotsArg::Impulse { row, col } => impulse_kernels(&g, row, col)?,
        SpotsArg::Fitted(overrides) => {
            let mut spec = SpotSpec::fitted(&g);
            for (key, value) in overrides {
                match key.as_str() {
                    "orders" => spec.orders = value as usize,
                    "base" => spec.base_radius = value,
                    "dispersion" => spec.dispersion = value,
                    "sigma" => spec.sigma = value,
                    "amplitude" => spec.amplitude = value,
                    "zeroth" => spec.zeroth_amplitude = value,
                    "jitter" => spec.jitter = value,
                    "center_row" => spec.center.0 = value,
                    "center_col" => spec.center.1 = value,
                    other => return Err(CliError::Usage(format!("unknown spot key `{other}`"))),
                }
            }
            synth_kernels(&g, &spec, args.seed)?
        }
    };
    io::save_kernels(&args.out, &kernels)?;
    println!("wrote kernels {} to {}", g, args.out.display());
    Ok(())
}

fn synth_scene_cmd(args: SynthSceneArgs) -> CliResult {
    let g = geometry_of(args.geometry, None)?;
    let cube: Datacube<f64> = synth_scene(&g, &args.kind)?;
    io::save_cube(&args.out, &cube)?;
    println!("wrote cube {} to {}", g, args.out.display());
    Ok(())
}

fn project_cmd(args: ProjectArgs) -> CliResult {
    let kernels = io::load_kernels::<f64>(&args.kernels)?;
    let cube = io::load_cube::<f64>(&args.cube)?;
    check_expected(args.geometry, kernels.geometry())?;
    io::expect_geometry(kernels.geometry(), cube.geometry())?;
    cube.validate_nonnegative()?;
    let clean = match args.backend {
        Backend::Wbh => project(&mut SpectralProjector::new(&kernels), &cube)?,
        Backend::Bf => project(
            &mut build_system_matrix(&kernels, Storage::Auto, OracleLimits::default())?,
            &cube,
        )?,
    };
    let image = match args.noise {
        None => clean,
        Some(scale) => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let noisy = clean
                .data()
                .iter()
                .map(|&x| {
                    let mean = x * scale;
                    if mean > 0.0 {
                        Poisson::new(mean)
                            .map(|p| p.sample(&mut rng) / scale)
                            .unwrap_or(x)
                    } else {
                        0.0
                    }
                })
                .collect();
            FpaImage::new(clean.geometry(), noisy)?
        }
    };
    io::save_image(&args.out, &image)?;
    println!("wrote image {} to {}", image.geometry(), args.out.display());
    Ok(())
}

fn reconstruct_as<T: Real>(args: &ReconstructArgs) -> CliResult {
    let kernels = io::load_kernels::<T>(&args.kernels)?;
    let image = io::load_image::<T>(&args.image)?;
    check_expected(args.geometry, kernels.geometry())?;
    io::expect_geometry(kernels.geometry(), image.geometry())?;
    let h = column_sums(&kernels)?;
    let cfg = SolverConfig {
        iterations: args.iterations,
        init: args.init,
        epsilon: args.epsilon,
        record_residuals: true,
    };
    let mut projector: Box<dyn Projector<T> + '_> = match args.backend {
        Backend::Wbh => Box::new(SpectralProjector::new(&kernels)),
        Backend::Bf => Box::new(build_system_matrix(
            &kernels,
            Storage::Auto,
            OracleLimits::default(),
        )?),
    };
    let report = em_solve(projector.as_mut(), &image, &h, &cfg)?;
    io::save_cube(&args.out, &report.cube)?;
    if let Some(path) = &args.report {
        io::write_report_csv(BufWriter::new(File::create(path)?), &report)?;
    }
    let last = report
        .residuals
        .as_ref()
        .and_then(|r| r.last().copied())
        .unwrap_or(f64::NAN);
    println!(
        "reconstructed {} with {} ({}, K={}) in {:.3} s; last residual {:.3e}",
        report.cube.geometry(),
        args.backend.as_str(),
        T::DTYPE,
        report.iterations,
        report.total_seconds(),
        last
    );
    Ok(())
}

fn compare_cmd(args: CompareArgs) -> CliResult {
    let a = io::load_cube::<f64>(&args.cube_a)?;
    let b = io::load_cube::<f64>(&args.cube_b)?;
    let rel = relative_error(&a, &b)?;
    let pixel = avg_relative_pixel_error(&a, &b, args.threshold)?;
    println!("relative_error: {rel:.6e}");
    println!(
        "avg_relative_pixel_error: {:.6e} (used {}, excluded {})",
        pixel.mean, pixel.used, pixel.excluded
    );
    Ok(())
}

fn print_table(rows: &[BenchRow]) {
    println!(
        "{:<8} {:>4} {:>6} {:>12} {:>14} {:>14}",
        "backend", "w", "K", "median (s)", "rel_error", "pixel_error"
    );
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
    for r in rows.iter().filter(|r| r.solver == "em-median") {
        println!(
            "{:<8} {:>4} {:>6} {:>12.4e} {:>14} {:>14}",
            r.backend,
            r.w,
            r.iterations,
            r.seconds,
            opt(r.relative_error),
            opt(r.avg_rel_pixel_error)
        );
    }
}

fn benchmark_as<T: Real>(args: &BenchmarkArgs) -> CliResult {
    let kernels = io::load_kernels::<T>(&args.kernels)?;
    let image = io::load_image::<T>(&args.image)?;
    io::expect_geometry(kernels.geometry(), image.geometry())?;
    let reference = args
        .reference
        .as_deref()
        .map(io::load_cube::<T>)
        .transpose()?;
    let cfg = BenchConfig {
        iterations: args.iterations.clone(),
        backends: args.backends.clone(),
        repeats: args.repeats,
        ..BenchConfig::default()
    };
    let rows = run_benchmark(&kernels, &image, reference.as_ref(), &cfg)?;
    io::write_bench_csv(BufWriter::new(File::create(&args.out)?), &rows)?;
    print_table(&rows);
    Ok(())
}

fn configure_threads(threads: Option<usize>) -> CliResult {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::SynthCalib(a) => synth_calib(a),
        Command::SynthScene(a) => synth_scene_cmd(a),
        Command::Project(a) => project_cmd(a),
        Command::Reconstruct(a) => match a.precision {
            Dtype::F64 => reconstruct_as::<f64>(&a),
            Dtype::F32 => reconstruct_as::<f32>(&a),
        },
        Command::Compare(a) => compare_cmd(a),
        Command::Benchmark(a) => match a.precision {
            Dtype::F64 => benchmark_as::<f64>(&a),
            Dtype::F32 => benchmark_as::<f32>(&a),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error: UsageError: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.message().replace('\n', " ");
            eprintln!("error: {}: {}", e.category(), message);
            ExitCode::FAILURE
        }
    }
}
