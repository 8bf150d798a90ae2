use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use defurnish::evaluation::{
    generate_room, geometric_error, texture_error, GroundTruth, MetricsReport, RoomSpec, TruthFile,
};
use defurnish::inpainting::ExternalHook;
use defurnish::mesh::{load_mesh, save_mesh, sidecar_path};
use defurnish::pipeline::{
    run_pipeline, run_stage, PipelineConfig, PipelineError, PipelineReport, Stage, StageInput,
    TIMINGS,
};

#[derive(Parser, Debug)]
#[command(
    name = "defurnish",
    version,
    about = "Remove furniture from labeled, textured room scans"
)]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every stage; dumps go to <out>/<stage>, the report to <out>/report.json.
    Run(MeshArgs),
    /// Segment planes and plan object removal.
    Segment(MeshArgs),
    /// Remove objects and fill the holes, from a segment dump.
    Reconstruct(DumpArgs),
    /// Unwrap charts, from a reconstruct dump.
    Unwrap(DumpArgs),
    /// Rasterize and inpaint charts, from an unwrap dump.
    Inpaint(DumpArgs),
    /// Pack the atlas and write the output mesh, from an inpaint dump.
    Pack(DumpArgs),
    /// Write a synthetic furnished room and its ground truth.
    Synth(SynthArgs),
    /// Score an output mesh against ground truth.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Pipeline configuration (TOML). Every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// External inpainting command with {texture}, {mask} and {output}
    /// placeholders; overrides the config.
    #[arg(long)]
    hook_cmd: Option<String>,
}

#[derive(Args, Debug)]
struct MeshArgs {
    /// Input mesh (.obj or .ply).
    mesh: PathBuf,
    /// Label sidecar; defaults to <stem>.labels.json next to the mesh if present.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct DumpArgs {
    /// Previous stage's dump directory.
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Room spec (TOML or JSON); defaults to an empty 4 x 3 x 2.5 m room.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Output mesh of a run.
    mesh: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// truth.json written by `synth`.
    #[arg(long)]
    truth: PathBuf,
    /// report.json of the run, for UV, packing and timing figures.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Texture samples per new face.
    #[arg(long, default_value_t = 16)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the metrics here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit status 2: bad arguments, configuration or inputs.
#[derive(Debug)]
struct Usage(anyhow::Error);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(Usage(e.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("DEFURNISH_LOG")
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Run(a) => {
            let config = load_config(&a.config)?;
            let labels = labels_for(&a.mesh, a.labels);
            let report =
                run_pipeline(&a.mesh, labels.as_deref(), &config, &a.out).map_err(classify)?;
            print_report(&report);
            Ok(())
        }
        Command::Segment(a) => {
            let config = load_config(&a.config)?;
            let labels = labels_for(&a.mesh, a.labels);
            if !a.mesh.exists() {
                return Err(usage(anyhow::anyhow!(
                    "input not found: {}",
                    a.mesh.display()
                )));
            }
            let input = StageInput::Mesh {
                mesh: &a.mesh,
                labels: labels.as_deref(),
            };
            let report = run_stage(Stage::Segment, input, &config, &a.out).map_err(classify)?;
            print_report(&report);
            Ok(())
        }
        Command::Reconstruct(a) => stage(Stage::Reconstruct, a),
        Command::Unwrap(a) => stage(Stage::Unwrap, a),
        Command::Inpaint(a) => stage(Stage::Inpaint, a),
        Command::Pack(a) => stage(Stage::Pack, a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
    }
}

fn stage(stage: Stage, a: DumpArgs) -> anyhow::Result<()> {
    let config = load_config(&a.config)?;
    let report = run_stage(stage, StageInput::Dump(&a.input), &config, &a.out).map_err(classify)?;
    print_report(&report);
    Ok(())
}

fn print_report(report: &PipelineReport) {
    println!("{}", report.without_timings().to_json());
}

fn load_config(args: &ConfigArgs) -> anyhow::Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(p) => PipelineConfig::load(p).map_err(usage)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(cmd) = &args.hook_cmd {
        let timeout = config.hook.as_ref().map(|h| h.timeout_secs);
        let mut hook = ExternalHook::new(cmd.clone());
        if let Some(t) = timeout {
            hook.timeout_secs = t;
        }
        config.hook = Some(hook);
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

fn labels_for(mesh: &Path, given: Option<PathBuf>) -> Option<PathBuf> {
    given.or_else(|| {
        let p = sidecar_path(mesh);
        p.exists().then(|| {
            log::info!("labels={}", p.display());
            p
        })
    })
}

/// Input and configuration problems are usage errors; everything else is a
/// fatal stage error.
fn classify(e: PipelineError) -> anyhow::Error {
    match e {
        PipelineError::Config(_) | PipelineError::MissingInput(_) => usage(e),
        e => anyhow::Error::new(e),
    }
}

fn read_spec(path: &Path) -> anyhow::Result<RoomSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let spec = if json {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(spec)
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut spec = match &a.spec {
        Some(p) => read_spec(p).map_err(usage)?,
        None => RoomSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let fx = generate_room(&spec).map_err(usage)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mesh = a.out.join("room.obj");
    save_mesh(&fx.mesh, &mesh)?;
    let truth = a.out.join("truth.json");
    fs::write(&truth, serde_json::to_string_pretty(&fx.truth.to_file())?)?;
    log::info!(
        "synth faces={} mesh={} truth={}",
        fx.mesh.face_count(),
        mesh.display(),
        truth.display()
    );
    println!("{}", mesh.display());
    println!("{}", sidecar_path(&mesh).display());
    println!("{}", truth.display());
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let config = match &a.config {
        Some(p) => PipelineConfig::load(p).map_err(usage)?,
        None => PipelineConfig::default(),
    };
    let text = fs::read_to_string(&a.truth)
        .with_context(|| format!("reading {}", a.truth.display()))
        .map_err(usage)?;
    let file: TruthFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", a.truth.display()))
        .map_err(usage)?;
    let truth = GroundTruth::from_file(&file).map_err(usage)?;
    let labels = labels_for(&a.mesh, a.labels);
    let mesh = load_mesh(&a.mesh, labels.as_deref(), &config.classes).map_err(usage)?;
    let geo = geometric_error(&mesh, &truth, &config.reconstruct_params())?;
    let tex = texture_error(&mesh, &truth, a.samples, a.seed)?;
    let mut metrics = MetricsReport::new(&geo, &tex);
    if let Some(path) = &a.report {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(usage)?;
        let report: PipelineReport = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(usage)?;
        if let Some(u) = &report.unwrap {
            metrics.adjacency_ratio = Some(u.adjacency_preservation);
            metrics.max_stretch = Some(u.distortion.max_stretch);
        }
        metrics.occupancy = report.pack.as_ref().map(|p| p.occupancy);
        metrics.runtimes = report.timings;
        let timings = path.with_file_name(TIMINGS);
        if metrics.runtimes.is_empty() && timings.exists() {
            metrics.runtimes = serde_json::from_str(&fs::read_to_string(&timings)?)?;
        }
    }
    let json = serde_json::to_string_pretty(&metrics)?;
    match &a.out {
        Some(p) => fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}
