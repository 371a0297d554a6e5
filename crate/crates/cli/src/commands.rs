use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use grasp_core::config::PipelineConfig;
use grasp_core::depth_io::{
    load_depth_frame, write_pgm16, write_pgm8, CameraIntrinsics, DepthFormat, DepthFrame,
};
use grasp_core::eval::{
    benchmark_with, gas, read_grip_map, read_trials, score_run, FpsStats, RsrReport,
};
use grasp_core::export::{scene_graph_json_line, write_ply_file};
use grasp_core::pipeline::{perceive, FrameRecord, Pipeline};
use grasp_core::simulator::{
    generate_scene, simulate_sequence, Manifest, SceneSpec, SceneTemplate, SequenceSpec,
};
use grasp_core::{Error, Threading};
use serde_json::json;

use crate::{BenchArgs, ExportArgs, GasArgs, RsrArgs, RunArgs, SimulateArgs};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_SCHEMA: u8 = 4;

/// Published reference throughput, fps (mean ± std).
const REFERENCE_FPS: (f64, f64) = (10.72, 0.58);

pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter { .. } | Error::InsufficientFrames { .. } => EXIT_CONFIG,
            Error::Io { .. } | Error::MalformedHeader { .. } | Error::DimensionMismatch { .. } => {
                EXIT_IO
            }
            Error::Schema(_) | Error::Json { .. } => EXIT_SCHEMA,
            _ => EXIT_FAILURE,
        };
        CliError::new(code, e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(EXIT_IO, anyhow!("{}: {e}", path.display()))
}

/// Any failure to read the config file is an I/O error; anything wrong with
/// its contents is a configuration error.
fn load_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => PipelineConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => e.into(),
            other => CliError::new(EXIT_CONFIG, other),
        }),
    }
}

/// Depth frames in `dir` in lexicographic file-name order. JSON sidecars and
/// files of unknown type are skipped.
fn list_frames(dir: &Path) -> CliResult<Vec<(PathBuf, DepthFormat)>> {
    let entries = fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        if let Some(format) = DepthFormat::from_extension(&path) {
            frames.push((path, format));
        }
    }
    frames.sort_by(|a, b| a.0.file_name().cmp(&b.0.file_name()));
    if frames.is_empty() {
        return Err(CliError::new(
            EXIT_IO,
            anyhow!("{}: no depth frames found", dir.display()),
        ));
    }
    Ok(frames)
}

/// Loads every frame of `dir`; timestamps are positions in name order.
fn load_frames(dir: &Path) -> CliResult<Vec<DepthFrame>> {
    list_frames(dir)?
        .into_iter()
        .enumerate()
        .map(|(i, (path, format))| Ok(load_depth_frame(&path, format)?.with_timestamp(i as u64)))
        .collect()
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(path, e))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn header_line(cfg: &PipelineConfig, frames: usize) -> String {
    json!({ "header": { "seed": cfg.seed, "frames": frames, "config": cfg.to_json() } }).to_string()
}

fn record_line(record: &FrameRecord) -> String {
    serde_json::to_string(record).expect("record serializes")
}

pub fn run(args: RunArgs) -> CliResult {
    if args.follow {
        return Err(CliError::new(
            EXIT_CONFIG,
            anyhow!("--follow is reserved for live input and not supported"),
        ));
    }
    let mut cfg = load_config(args.config.as_deref())?;
    if args.motor_off {
        cfg.control.motor_enabled = false;
    }
    let frames = list_frames(&args.input)?;
    let mut pipeline = Pipeline::new(cfg)?;
    let mut out = output(args.out.as_deref())?;
    let out_path = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("<stdout>"));
    writeln!(out, "{}", header_line(&cfg, frames.len())).map_err(|e| io_error(&out_path, e))?;
    for (i, (path, format)) in frames.iter().enumerate() {
        let frame = load_depth_frame(path, *format)?.with_timestamp(i as u64);
        let record = pipeline.process(&frame)?;
        writeln!(out, "{}", record_line(&record)).map_err(|e| io_error(&out_path, e))?;
    }
    out.flush().map_err(|e| io_error(&out_path, e))
}

fn load_intrinsics(path: Option<&Path>) -> CliResult<CameraIntrinsics> {
    match path {
        None => Ok(CameraIntrinsics::default()),
        Some(p) => CameraIntrinsics::load_json(p).map_err(|e| match e {
            Error::Io { .. } => e.into(),
            other => CliError::new(EXIT_CONFIG, other),
        }),
    }
}

pub fn simulate(args: SimulateArgs) -> CliResult {
    let intr = load_intrinsics(args.intrinsics.as_deref())?;
    let mut scene = match &args.scene {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            SceneSpec::from_json(&text)?
        }
        None => {
            let template: SceneTemplate = args
                .template
                .parse()
                .map_err(|e| CliError::new(EXIT_CONFIG, e))?;
            generate_scene(args.seed, &template)?
        }
    };
    if let Some(noise) = args.noise {
        scene.noise_sigma = noise;
    }
    if let Some(dropout) = args.dropout {
        scene.dropout_rate = dropout;
    }
    let spec = SequenceSpec {
        azimuth_deg: args.azimuth,
        elevation_deg: args.elevation,
        keyframe_every: args.every,
        keyframe_first: args.first,
        ..SequenceSpec::new(scene, args.start_range, args.end_range, args.frames)
    };
    let frames_dir = args.out.join("frames");
    let labels_dir = args.out.join("labels");
    for dir in [&frames_dir, &labels_dir] {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let mut manifest = simulate_sequence(&spec, &intr, Threading::Parallel, |f| {
        let frame = f.rendered.to_frame(&intr)?;
        write_pgm16(
            frames_dir.join(grasp_core::simulator::depth_file_name(f.index)),
            frame.width(),
            frame.height(),
            frame.data(),
        )?;
        write_pgm8(
            labels_dir.join(grasp_core::simulator::label_file_name(f.index)),
            f.rendered.width,
            f.rendered.height,
            &f.rendered.labels,
        )
    })?;
    for f in &mut manifest.frames {
        f.depth_file = format!("frames/{}", f.depth_file);
        f.label_file = format!("labels/{}", f.label_file);
    }
    write_text(&args.out.join("manifest.json"), &manifest.to_json())?;
    eprintln!(
        "wrote {} frames ({} keyframes, {} objects) to {}",
        manifest.frames.len(),
        manifest.keyframes.len(),
        manifest.sequence.scene.objects.len(),
        args.out.display()
    );
    Ok(())
}

fn simulated_frames(n: usize, seed: u64, intr: &CameraIntrinsics) -> CliResult<Vec<DepthFrame>> {
    let scene = generate_scene(seed, &SceneTemplate::Cluttered(3))?;
    let spec = SequenceSpec::new(scene, 800.0, 300.0, n.max(2));
    let mut frames = Vec::with_capacity(n);
    simulate_sequence(&spec, intr, Threading::Parallel, |f| {
        frames.push(f.rendered.to_frame(intr)?.with_timestamp(f.index as u64));
        Ok(())
    })?;
    frames.truncate(n);
    Ok(frames)
}

fn fps_summary(stats: &FpsStats, threading: Threading) -> String {
    format!(
        "median {:.2} fps (mean {:.2} ± {:.2}, {} frames, {}); reference {:.2} ± {:.2} fps",
        stats.median,
        stats.mean,
        stats.std,
        stats.frames,
        match threading {
            Threading::Single => "single-threaded",
            Threading::Parallel => "thread pool",
        },
        REFERENCE_FPS.0,
        REFERENCE_FPS.1
    )
}

pub fn bench(args: BenchArgs) -> CliResult {
    let mut cfg = load_config(args.config.as_deref())?;
    cfg.threading = if args.single_thread {
        Threading::Single
    } else {
        Threading::Parallel
    };
    let frames = match (&args.input, args.simulated) {
        (Some(dir), _) => load_frames(dir)?,
        (None, Some(n)) => simulated_frames(n, args.seed, &cfg.intrinsics)?,
        (None, None) => unreachable!("clap requires one of --input and --simulated"),
    };
    let mut pipeline = Pipeline::new(cfg)?;
    let mut records = Vec::with_capacity(frames.len());
    let stats = benchmark_with(&frames, args.warmup, |f| {
        records.push(pipeline.process(f)?);
        Ok(())
    })?;
    if let Some(path) = &args.records {
        let mut out = create(path)?;
        let mut text = header_line(&cfg, frames.len()) + "\n";
        for r in &records {
            text += &record_line(r);
            text.push('\n');
        }
        out.write_all(text.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| io_error(path, e))?;
    }
    if args.json {
        let report = json!({
            "median_fps": stats.median,
            "mean_fps": stats.mean,
            "std_fps": stats.std,
            "frames": stats.frames,
            "warmup": args.warmup,
            "threading": cfg.threading,
            "reference_fps": { "mean": REFERENCE_FPS.0, "std": REFERENCE_FPS.1 },
        });
        println!("{report}");
    } else {
        println!("{}", fps_summary(&stats, cfg.threading));
    }
    Ok(())
}

/// Reads a record stream, ignoring the header line.
fn read_records(path: &Path) -> CliResult<Vec<FrameRecord>> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| {
            CliError::new(
                EXIT_SCHEMA,
                anyhow!("{}: line {}: {e}", path.display(), i + 1),
            )
        })?;
        if value.get("header").is_some() {
            continue;
        }
        let record = serde_json::from_value(value).map_err(|e| {
            CliError::new(
                EXIT_SCHEMA,
                anyhow!("{}: line {}: {e}", path.display(), i + 1),
            )
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn eval_rsr(args: RsrArgs) -> CliResult {
    let text = fs::read_to_string(&args.manifest).map_err(|e| io_error(&args.manifest, e))?;
    let manifest = Manifest::from_json(&text)?;
    let records = read_records(&args.records)?;
    let results = score_run(&manifest, &records, !args.all_frames)?;
    let report = RsrReport::new(&results, args.threshold)?;
    if let Some(p) = &args.csv {
        write_text(p, &report.to_csv())?;
    }
    if let Some(p) = &args.markdown {
        write_text(p, &report.to_markdown())?;
    }
    println!(
        "RSR {:.2}% ({}/{})",
        report.rsr * 100.0,
        report.successes,
        report.frames
    );
    Ok(())
}

pub fn eval_gas(args: GasArgs) -> CliResult {
    let trials = read_trials(&args.trials)?;
    let map = read_grip_map(&args.grip_map)?;
    let report = gas(&trials, &map)?;
    if let Some(p) = &args.csv {
        write_text(p, &report.to_csv())?;
    }
    if let Some(p) = &args.markdown {
        write_text(p, &report.to_markdown())?;
    }
    print!("{}", report.to_markdown());
    Ok(())
}

pub fn export(args: ExportArgs) -> CliResult {
    let cfg = load_config(args.config.as_deref())?;
    let inputs = if args.input.is_dir() {
        list_frames(&args.input)?
    } else {
        let format = DepthFormat::from_extension(&args.input).ok_or_else(|| {
            CliError::new(
                EXIT_CONFIG,
                anyhow!("{}: unknown depth frame type", args.input.display()),
            )
        })?;
        vec![(args.input.clone(), format)]
    };
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let graph_path = args.out.join("scene_graph.jsonl");
    let mut graphs = create(&graph_path)?;
    for (i, (path, format)) in inputs.iter().enumerate() {
        let frame = load_depth_frame(path, *format)?.with_timestamp(i as u64);
        let p = perceive(&frame, &cfg)?;
        let stem = path.file_stem().map_or_else(
            || format!("frame_{i}"),
            |s| s.to_string_lossy().into_owned(),
        );
        write_ply_file(args.out.join(format!("{stem}.ply")), &p)?;
        writeln!(graphs, "{}", scene_graph_json_line(&p.graph))
            .map_err(|e| io_error(&graph_path, e))?;
    }
    graphs.flush().map_err(|e| io_error(&graph_path, e))
}
