mod bench;
mod config;

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gmmscape::fit::{fit_with, GbmsParams};
use gmmscape::ingest::ply::{self, PlyEncoding};
use gmmscape::ingest::{self, CameraIntrinsics, Image, IntensityImage};
use gmmscape::model::io::{load_gmm, save_gmm, ModelFormat};
use gmmscape::occupancy::OccupancyGrid3D;
use gmmscape::registration::{pose_graph_optimize, register, PoseGraph, Variant};
use gmmscape::{inference, memory_footprint, par, synth, ErrorKind, PointCloud4D, RigidTransform};

use config::Config;

/// Bad flag values or config contents; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "gmmscape", version, about = "Fit, resample, register and raytrace self-organizing Gaussian mixture models")]
struct Cli {
    /// Worker threads; 0 uses every hardware thread, 1 runs sequentially.
    #[arg(long, global = true, env = "GMMSCAPE_THREADS")]
    threads: Option<usize>,

    /// TOML file with defaults for any subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a mixture to a depth + intensity frame.
    Fit(FitArgs),
    /// Draw points from a model into a PLY file.
    Sample(SampleArgs),
    /// Expected intensity and its variance at given 3D locations.
    Infer(InferArgs),
    /// Align a source model to a target model.
    Register(RegisterArgs),
    /// Optimise a pose graph stored as JSON.
    Posegraph(PosegraphArgs),
    /// Raytrace resampled models into an occupancy grid.
    Occupancy(OccupancyArgs),
    /// Time full fits over a bandwidth and decimation sweep; writes CSV.
    Bench(BenchArgs),
    /// Time the dense E-step at several thread counts; writes CSV.
    BenchEstep(BenchEstepArgs),
    /// Render a frame of the built-in synthetic scene.
    SynthFrame(SynthFrameArgs),
}

#[derive(Args)]
struct FrameArgs {
    /// 16-bit depth image.
    #[arg(long)]
    depth: PathBuf,
    /// 8- or 16-bit grayscale intensity image.
    #[arg(long)]
    intensity: PathBuf,
    /// Camera intrinsics as JSON; defaults to the VGA reference camera
    /// scaled to the image size.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    /// Depth units per meter.
    #[arg(long)]
    depth_scale: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    frame: FrameArgs,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    decimate: Option<usize>,
    /// Drop points farther than this many meters from the camera.
    #[arg(long)]
    max_range: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "binary", value_parser = parse_format)]
    format: ModelFormat,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, short)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Write ASCII PLY instead of binary.
    #[arg(long)]
    ascii: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// PLY with x, y, z properties.
    #[arg(long)]
    locs: PathBuf,
    #[arg(long)]
    ascii: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// anisotropic, isoplanar or hybrid.
    #[arg(long, default_value = "hybrid", value_parser = parse_variant)]
    variant: Variant,
    /// Initial guess as a 4×4 matrix text file; identity when absent.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct PosegraphArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 0)]
    fixed: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct OccupancyArgs {
    /// Directory holding the model files named in the poses file.
    #[arg(long)]
    models_dir: PathBuf,
    /// One line per model: `file qw qx qy qz tx ty tz`, sensor to world.
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    num_pts: Option<usize>,
    /// Trimmed max range of each ray in meters.
    #[arg(long)]
    max_range: Option<f64>,
    #[arg(long)]
    resolution: Option<f64>,
    /// World position of the grid's minimum corner, as x,y,z.
    #[arg(long, value_parser = parse_triple::<f64>, allow_hyphen_values = true)]
    origin: Option<[f64; 3]>,
    /// Voxel counts along x,y,z.
    #[arg(long, value_parser = parse_triple::<usize>)]
    dims: Option<[usize; 3]>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also dump the full grid in binary form.
    #[arg(long)]
    grid_out: Option<PathBuf>,
    #[arg(long)]
    ascii: bool,
    /// PLY of occupied voxel centers.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Depth, intensity and intrinsics; without them a synthetic frame is
    /// rendered at `--synthetic`.
    #[arg(long, requires = "intensity")]
    depth: Option<PathBuf>,
    #[arg(long, requires = "depth")]
    intensity: Option<PathBuf>,
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    #[arg(long)]
    depth_scale: Option<f64>,
    /// Synthetic frame size as WIDTHxHEIGHT.
    #[arg(long, default_value = "640x480", value_parser = parse_size)]
    synthetic: (usize, usize),
    #[arg(long)]
    bandwidth_count: Option<usize>,
    #[arg(long)]
    bandwidth_min: Option<f64>,
    #[arg(long)]
    bandwidth_max: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    decimate: Option<Vec<usize>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchEstepArgs {
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    #[arg(long, default_value_t = 100)]
    components: usize,
    /// Thread counts to time; the first is the speedup baseline.
    #[arg(long, value_delimiter = ',', default_value = "1,8")]
    thread_counts: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthFrameArgs {
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 480)]
    height: usize,
    /// Index along the built-in camera trajectory.
    #[arg(long, default_value_t = 0)]
    pose_index: usize,
    /// Receives depth.png, intensity.png, intrinsics.json and pose.txt.
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_format(s: &str) -> Result<ModelFormat, String> {
    s.parse().map_err(|e: gmmscape::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: gmmscape::Error| e.to_string())
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> Result<[T; 3], String>
where
    T::Err: std::fmt::Display,
{
    let parts: Vec<&str> = s.split(',').collect();
    let [a, b, c] = parts.as_slice() else { return Err(format!("expected three comma-separated values, got {s:?}")) };
    let p = |v: &str| v.trim().parse::<T>().map_err(|e| format!("{v:?}: {e}"));
    Ok([p(a)?, p(b)?, p(c)?])
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let p = |v: &str| v.parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(w)?, p(h)?))
}

/// A depth + intensity pair with its camera.
pub struct Frame {
    depth: Image<u16>,
    intensity: IntensityImage,
    intrinsics: CameraIntrinsics,
}

impl Frame {
    fn load(depth: &Path, intensity: &Path, intrinsics: Option<&Path>, depth_scale: Option<f64>) -> Result<Self> {
        let depth = ingest::load_depth(depth).with_context(|| format!("loading depth {}", depth.display()))?;
        let intensity =
            ingest::load_intensity(intensity).with_context(|| format!("loading intensity {}", intensity.display()))?;
        let mut k = match intrinsics {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading intrinsics {}", p.display()))?;
                serde_json::from_str::<CameraIntrinsics>(&text)
                    .map_err(gmmscape::Error::from)
                    .with_context(|| format!("parsing intrinsics {}", p.display()))?
            }
            None => synth::scaled_intrinsics(depth.width(), depth.height()),
        };
        if let Some(s) = depth_scale {
            k.depth_scale = s;
        }
        Ok(Self { depth, intensity, intrinsics: k })
    }

    fn synthetic(width: usize, height: usize) -> Self {
        let f = synth::render_frame(width, height, &RigidTransform::identity());
        Self { depth: f.depth, intensity: f.intensity, intrinsics: f.intrinsics }
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn decimated(&self, factor: usize) -> Result<Self> {
        if factor == 1 {
            return Ok(Self { depth: self.depth.clone(), intensity: self.intensity.clone(), intrinsics: self.intrinsics });
        }
        Ok(Self {
            depth: ingest::decimate(&self.depth, factor)?,
            intensity: self.intensity.decimate(factor)?,
            intrinsics: self.intrinsics.decimated(factor)?,
        })
    }

    pub fn cloud(&self) -> Result<PointCloud4D> {
        Ok(ingest::image_pair_to_cloud(&self.depth, &self.intensity, &self.intrinsics)?)
    }
}

/// The given seed, or a fresh one that is reported so the run can be
/// repeated.
fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random();
        eprintln!("seed: {s}");
        s
    })
}

fn ply_encoding(ascii: bool) -> PlyEncoding {
    if ascii {
        PlyEncoding::Ascii
    } else {
        PlyEncoding::BinaryLittleEndian
    }
}

fn cmd_fit(cfg: &Config, a: &FitArgs) -> Result<()> {
    let bandwidth = a.bandwidth.unwrap_or(cfg.fit.bandwidth);
    let decimate = a.decimate.unwrap_or(cfg.fit.decimate);
    let max_range = a.max_range.or(cfg.fit.max_range);
    let depth_scale = a.frame.depth_scale.or(cfg.fit.depth_scale);
    let gbms = GbmsParams::new(bandwidth)?;
    if let Some(r) = max_range {
        if !(r > 0.0) {
            bail!(UsageError(format!("max range {r} must be positive")));
        }
    }
    let mut em = cfg.em;
    em.seed = resolve_seed(a.seed);

    let frame = Frame::load(&a.frame.depth, &a.frame.intensity, a.frame.intrinsics.as_deref(), depth_scale)?
        .decimated(decimate)?;
    let mut cloud = frame.cloud()?;
    if let Some(r) = max_range {
        let kept: Vec<[f64; 4]> =
            cloud.points().iter().filter(|p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= r * r).copied().collect();
        cloud = PointCloud4D::new(kept).context("no points within max range")?;
    }
    log::info!("fitting {} points at bandwidth {bandwidth}", cloud.len());
    let t = Instant::now();
    let out = fit_with(&cloud, &gbms, &em)?;
    let secs = t.elapsed().as_secs_f64();
    save_gmm(&out.model, &a.out, a.format).with_context(|| format!("writing {}", a.out.display()))?;
    println!("points: {}", cloud.len());
    println!("components: {}", out.model.len());
    println!("em_iterations: {}", out.iterations);
    println!("converged: {}", out.converged);
    println!("log_likelihood: {:.6}", out.log_likelihood);
    println!("fit_seconds: {secs:.3}");
    println!("memory_bytes: {}", memory_footprint(&out.model));
    Ok(())
}

fn cmd_sample(a: &SampleArgs) -> Result<()> {
    let model = load_gmm(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let seed = resolve_seed(a.seed);
    let cloud = inference::joint_dist_sample(&model, a.n, seed)?;
    ply::write_cloud(&a.out, &cloud, ply_encoding(a.ascii)).with_context(|| format!("writing {}", a.out.display()))?;
    println!("samples: {}", cloud.len());
    Ok(())
}

fn cmd_infer(a: &InferArgs) -> Result<()> {
    let model = load_gmm(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let locs = ply::read_xyz(&a.locs).with_context(|| format!("loading locations {}", a.locs.display()))?;
    let r = inference::color_conditional(&model, &locs)?;
    let mut flat = Vec::with_capacity(locs.len() * 5);
    for (i, p) in locs.iter().enumerate() {
        flat.extend_from_slice(p);
        flat.push(r.expected_intensity[i]);
        flat.push(r.variance[i]);
    }
    ply::write_table(&a.out, &["x", "y", "z", "intensity", "variance"], &flat, ply_encoding(a.ascii))
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!("locations: {}", locs.len());
    Ok(())
}

fn cmd_register(cfg: &Config, a: &RegisterArgs) -> Result<()> {
    let source = load_gmm(&a.source).with_context(|| format!("loading source {}", a.source.display()))?;
    let target = load_gmm(&a.target).with_context(|| format!("loading target {}", a.target.display()))?;
    let init = match &a.init {
        Some(p) => RigidTransform::parse_text(
            &std::fs::read_to_string(p).with_context(|| format!("reading initial transform {}", p.display()))?,
        )?,
        None => RigidTransform::identity(),
    };
    let r = register(a.variant, &init, &source, &target, &cfg.registration)?;
    std::fs::write(&a.out, r.transform.to_text()).with_context(|| format!("writing {}", a.out.display()))?;
    println!("cost: {:.12e}", r.final_cost);
    println!("iterations: {}", r.iterations);
    println!("converged: {}", r.converged);
    Ok(())
}

fn cmd_posegraph(a: &PosegraphArgs) -> Result<()> {
    let graph = PoseGraph::load(&a.graph).with_context(|| format!("loading graph {}", a.graph.display()))?;
    let r = pose_graph_optimize(&graph, a.fixed)?;
    r.graph.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("initial_cost: {:.12e}", r.initial_cost);
    println!("final_cost: {:.12e}", r.final_cost);
    println!("iterations: {}", r.iterations);
    println!("converged: {}", r.converged);
    Ok(())
}

/// Parses `file qw qx qy qz tx ty tz` lines; blank lines and `#` comments
/// are skipped.
fn read_poses(path: &Path) -> Result<Vec<(String, RigidTransform)>> {
    let f = File::open(path).with_context(|| format!("opening poses {}", path.display()))?;
    let mut out = Vec::new();
    for (no, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || gmmscape::Error::Format(format!("{}:{}: expected `file qw qx qy qz tx ty tz`", path.display(), no + 1));
        if fields.len() != 8 {
            return Err(bad().into());
        }
        let v: Vec<f64> = fields[1..].iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let pose = RigidTransform::from_quaternion([v[0], v[1], v[2], v[3]], [v[4], v[5], v[6]])?;
        out.push((fields[0].to_string(), pose));
    }
    if out.is_empty() {
        bail!(gmmscape::Error::Format(format!("{} lists no models", path.display())));
    }
    Ok(out)
}

fn cmd_occupancy(cfg: &Config, a: &OccupancyArgs) -> Result<()> {
    let mut params = cfg.grid;
    if let Some(r) = a.resolution {
        params.resolution = r;
    }
    if let Some(o) = a.origin {
        params.origin = o;
    }
    if let Some(d) = a.dims {
        params.dims = d;
    }
    let num_pts = a.num_pts.unwrap_or(cfg.occupancy.num_pts);
    let max_range = a.max_range.unwrap_or(cfg.occupancy.max_range);
    let seed = resolve_seed(a.seed);
    let poses = read_poses(&a.poses)?;
    let mut grid = OccupancyGrid3D::new(params)?;
    for (i, (name, pose)) in poses.iter().enumerate() {
        let path = a.models_dir.join(name);
        let model = load_gmm(&path).with_context(|| format!("loading model {}", path.display()))?;
        let world = model.transformed(pose);
        grid.insert_resampled_model(&world, pose, num_pts, max_range, seed.wrapping_add(i as u64))?;
        log::info!("inserted {name}");
    }
    grid.write_occupied_ply(&a.out, ply_encoding(a.ascii)).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(g) = &a.grid_out {
        grid.save(g).with_context(|| format!("writing {}", g.display()))?;
    }
    let c = grid.counts();
    println!("occupied: {}", c.occupied);
    println!("free: {}", c.free);
    println!("unknown: {}", c.unknown);
    Ok(())
}

fn csv_sink(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let w: Box<dyn Write> = match out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    Ok(csv::Writer::from_writer(w))
}

fn cmd_bench(cfg: &Config, a: &BenchArgs) -> Result<()> {
    let mut bc = cfg.bench.clone();
    if let Some(v) = a.bandwidth_count {
        bc.bandwidth_count = v;
    }
    if let Some(v) = a.bandwidth_min {
        bc.bandwidth_min = v;
    }
    if let Some(v) = a.bandwidth_max {
        bc.bandwidth_max = v;
    }
    if let Some(v) = &a.decimate {
        bc.decimations = v.clone();
    }
    if let Some(v) = a.repetitions {
        bc.repetitions = v;
    }
    if a.out.is_some() {
        bc.output = a.out.clone();
    }
    bc.validate()?;
    let mut em = cfg.em;
    em.seed = resolve_seed(a.seed);
    let frame = match (&a.depth, &a.intensity) {
        (Some(d), Some(i)) => Frame::load(d, i, a.intrinsics.as_deref(), a.depth_scale)?,
        _ => Frame::synthetic(a.synthetic.0, a.synthetic.1),
    };
    let mut w = csv_sink(bc.output.as_deref())?;
    let mut write_err = None;
    let rows = bench::sweep(&frame, &bc, &em, |row| {
        if let Err(e) = w.serialize(row).and_then(|_| w.flush().map_err(csv::Error::from)) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).context("writing CSV");
    }
    for v in bench::monotonicity_violations(&rows, &bc.decimations, bc.bandwidth_count) {
        eprintln!("monotonicity: {v}");
    }
    Ok(())
}

fn cmd_bench_estep(a: &BenchEstepArgs) -> Result<()> {
    if a.thread_counts.is_empty() || a.thread_counts.contains(&0) {
        bail!(UsageError("thread counts must be positive".into()));
    }
    if a.points == 0 || a.components == 0 || a.components > a.points {
        bail!(UsageError("need 1 ≤ components ≤ points".into()));
    }
    let rows = bench::estep_scaling(a.points, a.components, &a.thread_counts, a.repetitions, a.seed)?;
    let mut w = csv_sink(a.out.as_deref())?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    eprintln!("hardware threads: {}", par::hardware_threads());
    Ok(())
}

fn cmd_synth_frame(a: &SynthFrameArgs) -> Result<()> {
    if a.width < 2 || a.height < 2 {
        bail!(UsageError("frame must be at least 2×2".into()));
    }
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let pose = synth::trajectory_pose(a.pose_index);
    let f = synth::render_frame(a.width, a.height, &pose);
    ingest::save_depth_png(&f.depth, a.out_dir.join("depth.png"))?;
    ingest::save_intensity_png(&f.intensity, a.out_dir.join("intensity.png"))?;
    std::fs::write(a.out_dir.join("intrinsics.json"), serde_json::to_string_pretty(&f.intrinsics)?)?;
    std::fs::write(a.out_dir.join("pose.txt"), pose.to_text())?;
    println!("wrote {}", a.out_dir.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Fit(a) => cmd_fit(&cfg, a),
        Command::Sample(a) => cmd_sample(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Register(a) => cmd_register(&cfg, a),
        Command::Posegraph(a) => cmd_posegraph(a),
        Command::Occupancy(a) => cmd_occupancy(&cfg, a),
        Command::Bench(a) => cmd_bench(&cfg, a),
        Command::BenchEstep(a) => cmd_bench_estep(a),
        Command::SynthFrame(a) => cmd_synth_frame(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gmmscape::Error>() {
            return match e.kind() {
                ErrorKind::Io => EXIT_IO,
                ErrorKind::Usage => EXIT_USAGE,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            };
        }
        if cause.is::<UsageError>() || cause.is::<toml::de::Error>() {
            return EXIT_USAGE;
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_IO
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        par::set_threads(n);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
