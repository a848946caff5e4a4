use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use cortexforge_core::mesh::io::{read_mesh, write_mesh};
use cortexforge_core::mesh::{inflate, self_intersections, smooth, SmoothParams};
use cortexforge_core::metrics::{curvature, sulcal_depth, surface_distance, thickness};
use cortexforge_core::phantom::{make_phantom, PhantomKind, PhantomParams};
use cortexforge_core::pipeline::{run_pipeline, PipelinePaths, ReconConfig, StageError};
use cortexforge_core::sdf::{clip_sdf, mesh_to_sdf, sdf_loss, LossKind, LossSpec};
use cortexforge_core::synth::{generate_training_pair, SynthConfig};
use cortexforge_core::volume::nifti::{read_labels, read_scalar, write_labels, write_scalar};
use cortexforge_core::Error;

const SEED_ENV: &str = "CORTEXFORGE_SEED";

/// Synthetic MRI generation and cortical surface reconstruction from
/// signed distance volumes.
#[derive(Debug, Parser)]
#[command(name = "cortexforge", version)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write an analytic phantom: label map, SDFs and reference meshes.
    Phantom(PhantomArgs),
    /// Generate one synthetic training image with its SDF targets.
    Synth(SynthArgs),
    /// Signed distance volume of a closed mesh on the grid of a reference volume.
    Sdf(SdfArgs),
    /// Reconstruct white and pial surfaces from SDF volumes.
    Recon(ReconArgs),
    /// Thickness, curvature, sulcal depth and distances for fitted surfaces.
    Metrics(MetricsArgs),
    /// Mesh utilities.
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// Voxelwise loss between a predicted and a target SDF.
    Loss(LossArgs),
}

#[derive(Debug, Args)]
struct PhantomArgs {
    #[arg(long)]
    kind: PhantomKind,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    inner_radius: Option<f64>,
    #[arg(long)]
    outer_radius: Option<f64>,
    #[arg(long)]
    fold_amplitude: Option<f64>,
    #[arg(long)]
    fold_frequency: Option<f64>,
    #[arg(long)]
    subdivision: Option<u32>,
    #[arg(long)]
    out_labels: PathBuf,
    /// One path per surface, inner first.
    #[arg(long, num_args = 1..)]
    out_sdf: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    out_mesh: Vec<PathBuf>,
    /// Binary mask of label 1, ready for `recon --wm-mask`.
    #[arg(long)]
    out_wm_mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, num_args = 1..)]
    sdf: Vec<PathBuf>,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_image: PathBuf,
    #[arg(long, num_args = 1..)]
    out_target: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct SdfArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// Volume whose grid the SDF is sampled on.
    #[arg(long)]
    like: PathBuf,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReconArgs {
    #[arg(long, required_unless_present = "batch")]
    wm_sdf: Option<PathBuf>,
    #[arg(long, required_unless_present = "batch")]
    pial_sdf: Option<PathBuf>,
    #[arg(long, required_unless_present = "batch")]
    wm_mask: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "batch")]
    out_wm: Option<PathBuf>,
    #[arg(long, required_unless_present = "batch")]
    out_pial: Option<PathBuf>,
    /// White-surface energy trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    pial_trace: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Reference white surface for AAD and HD90.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// JSON array of subjects, each with the fields of a single run.
    #[arg(long, conflicts_with_all = ["wm_sdf", "pial_sdf", "wm_mask", "out_wm", "out_pial", "trace", "pial_trace", "manifest", "reference"])]
    batch: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    wm: PathBuf,
    #[arg(long)]
    pial: PathBuf,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Copy of the white surface with per-vertex scalars (PLY).
    #[arg(long)]
    out_wm: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    inflation_iterations: usize,
}

#[derive(Debug, Subcommand)]
enum MeshCommand {
    /// Euler characteristic and closed-manifold check.
    Euler { input: PathBuf },
    /// Self-intersecting triangle pairs.
    Selfx { input: PathBuf },
    /// Two-phase Laplacian smoothing.
    Smooth {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
    },
    /// Area-preserving inflation.
    Inflate {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        iterations: usize,
    },
}

#[derive(Debug, Args)]
struct LossArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    kind: LossKind,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
}

/// Error surfaced to the shell: a JSON object on stderr plus an exit status.
struct Failure {
    code: i32,
    body: Value,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code(),
            body: json!({ "error": e.kind(), "message": e.to_string() }),
        }
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure {
            code: e.source.exit_code(),
            body: stage_error_json(&e),
        }
    }
}

fn stage_error_json(e: &StageError) -> Value {
    json!({ "error": e.source.kind(), "stage": e.stage.to_string(), "message": e.source.to_string() })
}

type CliResult = Result<Value, Failure>;

fn env_seed() -> Result<Option<u64>, Error> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidInput(format!("{SEED_ENV} must be an unsigned integer, got '{s}'"))),
        Err(_) => Ok(None),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn phantom(args: PhantomArgs) -> CliResult {
    let d = PhantomParams::default();
    let params = PhantomParams {
        dims: args.dims.unwrap_or(d.dims),
        spacing_mm: args.spacing.unwrap_or(d.spacing_mm),
        inner_radius_mm: args.inner_radius.unwrap_or(d.inner_radius_mm),
        outer_radius_mm: args.outer_radius.unwrap_or(d.outer_radius_mm),
        fold_amplitude_mm: args.fold_amplitude.unwrap_or(d.fold_amplitude_mm),
        fold_frequency: args.fold_frequency.unwrap_or(d.fold_frequency),
        subdivision: args.subdivision.unwrap_or(d.subdivision),
    };
    let surfaces = if args.kind == PhantomKind::Concentric { 2 } else { 1 };
    for (flag, n) in [("--out-sdf", args.out_sdf.len()), ("--out-mesh", args.out_mesh.len())] {
        if n > surfaces {
            return Err(Error::InvalidInput(format!(
                "{flag}: {} phantom has {surfaces} surface(s), got {n} paths",
                args.kind
            ))
            .into());
        }
    }
    let p = make_phantom(args.kind, &params)?;
    write_labels(&args.out_labels, &p.labels)?;
    for (path, sdf) in args.out_sdf.iter().zip(&p.sdfs) {
        write_scalar(path, sdf)?;
    }
    for (path, mesh) in args.out_mesh.iter().zip(&p.meshes) {
        write_mesh(path, mesh, &[])?;
    }
    if let Some(path) = &args.out_wm_mask {
        write_labels(path, &p.labels.mask_where(|l| l == 1))?;
    }
    Ok(json!({
        "kind": args.kind,
        "params": params,
        "labels": path_str(&args.out_labels),
        "sdf": args.out_sdf.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
        "mesh": args.out_mesh.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
    }))
}

fn synth(args: SynthArgs) -> CliResult {
    if args.sdf.len() != args.out_target.len() {
        return Err(Error::InvalidInput(format!(
            "{} SDF inputs but {} --out-target paths",
            args.sdf.len(),
            args.out_target.len()
        ))
        .into());
    }
    let mut cfg = SynthConfig::load(&args.config)?;
    if let Some(seed) = args.seed.map(Ok).or_else(|| env_seed().transpose()).transpose()? {
        cfg.seed = seed;
    }
    let labels = read_labels(&args.labels)?;
    let sdfs = args.sdf.iter().map(read_scalar).collect::<Result<Vec<_>, _>>()?;
    let pair = generate_training_pair(&labels, &sdfs, &cfg)?;
    write_scalar(&args.out_image, &pair.image)?;
    for (path, target) in args.out_target.iter().zip(&pair.targets) {
        write_scalar(path, target)?;
    }
    Ok(json!({
        "seed": cfg.seed,
        "image": path_str(&args.out_image),
        "targets": args.out_target.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
        "acquisition": pair.acquisition,
    }))
}

fn sdf(args: SdfArgs) -> CliResult {
    let mesh = read_mesh(&args.mesh)?;
    let like = read_scalar(&args.like)?;
    let mut vol = mesh_to_sdf(&mesh, like.geometry())?;
    if let Some(bound) = args.clip {
        vol = clip_sdf(&vol, bound)?;
    }
    write_scalar(&args.out, &vol)?;
    let (min, max) = vol.min_max();
    Ok(json!({ "out": path_str(&args.out), "min": min, "max": max }))
}

fn recon_config(path: Option<&Path>) -> Result<ReconConfig, Error> {
    let mut cfg = match path {
        Some(p) => ReconConfig::load(p)?,
        None => ReconConfig::default(),
    };
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn recon(args: ReconArgs) -> CliResult {
    let cfg = recon_config(args.config.as_deref())?;
    if let Some(batch) = &args.batch {
        return recon_batch(batch, &cfg);
    }
    let required = |p: Option<PathBuf>| p.expect("required unless --batch");
    let paths = PipelinePaths {
        wm_sdf: required(args.wm_sdf),
        pial_sdf: required(args.pial_sdf),
        wm_mask: required(args.wm_mask),
        out_white: required(args.out_wm),
        out_pial: required(args.out_pial),
        white_trace: args.trace,
        pial_trace: args.pial_trace,
        manifest: args.manifest,
        reference_white: args.reference,
    };
    let manifest = run_pipeline(&paths, &cfg)?;
    Ok(serde_json::to_value(manifest).map_err(Error::from)?)
}

/// Runs every subject in parallel. The exit status is that of the first
/// failing subject in input order.
fn recon_batch(batch: &Path, cfg: &ReconConfig) -> CliResult {
    let text = std::fs::read_to_string(batch).map_err(Error::from)?;
    let subjects: Vec<PipelinePaths> = serde_json::from_str(&text).map_err(Error::from)?;
    let results: Vec<Result<Value, StageError>> = subjects
        .par_iter()
        .map(|paths| {
            let manifest = run_pipeline(paths, cfg)?;
            Ok(serde_json::to_value(manifest).expect("manifest serializes"))
        })
        .collect();
    let code = results
        .iter()
        .find_map(|r| r.as_ref().err().map(|e| e.source.exit_code()));
    let body: Vec<Value> = results
        .iter()
        .map(|r| match r {
            Ok(m) => json!({ "ok": true, "manifest": m }),
            Err(e) => json!({ "ok": false, "error": stage_error_json(e) }),
        })
        .collect();
    match code {
        None => Ok(Value::Array(body)),
        Some(code) => Err(Failure {
            code,
            body: json!({ "error": "batch", "results": body }),
        }),
    }
}

fn metrics(args: MetricsArgs) -> CliResult {
    let wm = read_mesh(&args.wm)?;
    let pial = read_mesh(&args.pial)?;
    let th = thickness(&wm, &pial)?;
    let curv = curvature(&wm)?;
    let depth = sulcal_depth(&wm, &inflate(&wm, args.inflation_iterations)?)?;
    let distance = match &args.reference {
        Some(p) => Some(surface_distance(&wm, &read_mesh(p)?)?),
        None => None,
    };
    if let Some(out) = &args.out_wm {
        write_mesh(
            out,
            &wm,
            &[
                th.to_vertex_scalars(),
                curv.to_vertex_scalars(),
                depth.to_vertex_scalars(),
            ],
        )?;
    }
    Ok(json!({
        "aad_mm": distance.map(|d| d.aad_mm),
        "hd90_mm": distance.map(|d| d.hd90_mm),
        "thickness_mean_mm": th.mean(),
        "thickness_std_mm": th.std(),
        "curvature_mean": curv.mean(),
        "depth_std": depth.std(),
    }))
}

fn mesh(cmd: MeshCommand) -> CliResult {
    match cmd {
        MeshCommand::Euler { input } => {
            let m = read_mesh(&input)?;
            let report = m.topology_report();
            Ok(json!({
                "topology": report,
                "sphere": report.is_valid_sphere(),
            }))
        }
        MeshCommand::Selfx { input } => {
            let pairs = self_intersections(&read_mesh(&input)?);
            Ok(json!({ "count": pairs.len(), "pairs": pairs }))
        }
        MeshCommand::Smooth {
            input,
            out,
            iterations,
            lambda,
            mu,
        } => {
            let d = SmoothParams::default();
            let params = SmoothParams {
                iterations: iterations.unwrap_or(d.iterations),
                lambda: lambda.unwrap_or(d.lambda),
                mu: mu.unwrap_or(d.mu),
            };
            let m = smooth(&read_mesh(&input)?, &params)?;
            write_mesh(&out, &m, &[])?;
            Ok(json!({ "out": path_str(&out), "params": params }))
        }
        MeshCommand::Inflate { input, out, iterations } => {
            let inflation = inflate(&read_mesh(&input)?, iterations)?;
            write_mesh(&out, &inflation.mesh, &[])?;
            Ok(json!({ "out": path_str(&out), "iterations": iterations }))
        }
    }
}

fn loss(args: LossArgs) -> CliResult {
    let spec = LossSpec {
        kind: args.kind,
        delta: args.delta,
    };
    let report = sdf_loss(&read_scalar(&args.pred)?, &read_scalar(&args.target)?, &spec)?;
    Ok(serde_json::to_value(report).map_err(Error::from)?)
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::InvalidInput("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    match cli.command {
        Command::Phantom(a) => phantom(a),
        Command::Synth(a) => synth(a),
        Command::Sdf(a) => sdf(a),
        Command::Recon(a) => recon(a),
        Command::Metrics(a) => metrics(a),
        Command::Mesh(c) => mesh(c),
        Command::Loss(a) => loss(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let body = json!({ "error": "usage", "message": e.render().to_string().trim_end() });
            eprintln!("{body}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(v) => {
            // a closed pipe on stdout is not an error of the command
            let _ = writeln!(
                std::io::stdout().lock(),
                "{}",
                serde_json::to_string_pretty(&v).expect("JSON output")
            );
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.body);
            ExitCode::from(f.code as u8)
        }
    }
}
