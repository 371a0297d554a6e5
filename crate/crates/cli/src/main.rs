//! `grasp`: run, simulate, bench, eval and export for the grasp perception
//! pipeline.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid configuration or
//! arguments, 3 I/O failure, 4 schema mismatch in an input document.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "grasp",
    version,
    about = "Point-cloud grasp perception pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a directory of depth frames and emit one JSON record per frame.
    Run(RunArgs),
    /// Render a simulated approach sequence with ground truth.
    Simulate(SimulateArgs),
    /// Measure end-to-end throughput.
    Bench(BenchArgs),
    /// Score runs (RSR) or trial ledgers (GAS).
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write segmented clouds as PLY and scene graphs as JSON lines.
    Export(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of depth frames (.pgm, .raw with .json sidecar, .csv).
    #[arg(long)]
    input: PathBuf,
    /// Record file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Force the motor off (only neutral commands are emitted).
    #[arg(long)]
    motor_off: bool,
    /// Reserved for live input; not supported yet.
    #[arg(long, hide = true)]
    follow: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene template: single_object, grip_taxonomy or cluttered:K.
    #[arg(long, default_value = "single_object", conflicts_with = "scene")]
    template: String,
    /// Scene description (JSON) used instead of a template.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    /// Camera-to-target range of the first frame, mm.
    #[arg(long, default_value_t = 800.0)]
    start_range: f64,
    /// Camera-to-target range of the last frame, mm.
    #[arg(long, default_value_t = 300.0)]
    end_range: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    azimuth: f64,
    #[arg(long, default_value_t = 45.0)]
    elevation: f64,
    /// Keyframe spacing.
    #[arg(long, default_value_t = 20)]
    every: usize,
    /// Keyframes are taken from this many leading frames.
    #[arg(long, default_value_t = 100)]
    first: usize,
    /// Depth noise standard deviation in mm (overrides the scene).
    #[arg(long)]
    noise: Option<f64>,
    /// Pixel dropout probability (overrides the scene).
    #[arg(long)]
    dropout: Option<f64>,
    /// Camera intrinsics (JSON); 640×480 defaults when omitted.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of depth frames; all are loaded before timing.
    #[arg(long, required_unless_present = "simulated")]
    input: Option<PathBuf>,
    /// Benchmark on this many frames of a simulated approach instead.
    #[arg(long, conflicts_with = "input")]
    simulated: Option<usize>,
    /// Seed of the simulated scene.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    /// Disable the thread pool inside each frame.
    #[arg(long)]
    single_thread: bool,
    /// Also write the records produced while timing.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Reconstruction success rate of a run over a simulated sequence.
    Rsr(RsrArgs),
    /// Grasping ability score of a trial ledger.
    Gas(GasArgs),
}

#[derive(Args)]
struct RsrArgs {
    /// manifest.json written by `simulate`.
    #[arg(long)]
    manifest: PathBuf,
    /// Record file written by `run`.
    #[arg(long)]
    records: PathBuf,
    /// Score every frame instead of the keyframes only.
    #[arg(long)]
    all_frames: bool,
    /// Centroid error bound, mm.
    #[arg(long, default_value_t = 20.0)]
    threshold: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Args)]
struct GasArgs {
    /// CSV with object_id, grasp_score, maintain_score[, participant].
    #[arg(long)]
    trials: PathBuf,
    /// Object to grip type map, JSON object or CSV (object_id, grip).
    #[arg(long)]
    grip_map: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// A depth frame or a directory of frames.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for `<frame>.ply` files and `scene_graph.jsonl`.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Bench(a) => commands::bench(a),
        Command::Eval(EvalCommand::Rsr(a)) => commands::eval_rsr(a),
        Command::Eval(EvalCommand::Gas(a)) => commands::eval_gas(a),
        Command::Export(a) => commands::export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
