//! Command line front end for the pose decoding pipeline.
//!
//! Subcommands cover the full loop: `synth` writes a scene and its rendered
//! map stack, `refine` applies refinement weights to a map directory,
//! `decode` turns maps into detections and 3-D poses, `eval` scores poses
//! against their scene, and `roundtrip` chains synth, decode and eval in one
//! step. Every subcommand is deterministic given its flags and seeds: the
//! same invocation writes byte-identical files.
//!
//! Exit codes: 0 on success, 1 on operational failure (missing or malformed
//! inputs, impossible requests, violated metric gates), 2 on argument
//! errors.

use std::error::Error;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use grm3d_core::detect::DetectParams;
use grm3d_core::gmap::{read_gmap_file, write_gmap_file};
use grm3d_core::maps::DataMapSet;
use grm3d_core::metrics::{evaluate, MetricReport, DEFAULT_PCK_THRESHOLD};
use grm3d_core::pipeline::{decode_scene_maps, DecodeOutcome, DecodeParams, GraphMode};
use grm3d_core::pose::{load_poses, save_poses, Pose3D};
use grm3d_core::sdar::{load_weights, refine, GateSource, SdarWeights};
use grm3d_core::skeleton::SkeletonConfig;
use grm3d_core::synth::{
    corrupt_maps, generate_scene, load_scene, render_maps, save_scene, CorruptParams,
    CorruptionLog, RenderParams, Scene, SceneParams,
};

#[derive(Parser)]
#[command(
    name = "grm3d",
    version,
    about = "Multi-person 3-D pose map synthesis, decoding and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene and its rendered map stack into a directory.
    Synth(SynthArgs),
    /// Apply refinement weights to a rendered map directory.
    Refine(RefineArgs),
    /// Decode persons and 3-D poses from a map directory.
    Decode(DecodeArgs),
    /// Score decoded poses against the scene they came from.
    Eval(EvalArgs),
    /// Synth, decode and eval in one deterministic step.
    Roundtrip(RoundtripArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GraphArg {
    Star,
    Tree,
    Dgr,
}

impl From<GraphArg> for GraphMode {
    fn from(value: GraphArg) -> Self {
        match value {
            GraphArg::Star => GraphMode::Star,
            GraphArg::Tree => GraphMode::Tree,
            GraphArg::Dgr => GraphMode::Dgr,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GateArg {
    Refined,
    Residual,
}

impl From<GateArg> for GateSource {
    fn from(value: GateArg) -> Self {
        match value {
            GateArg::Refined => GateSource::Refined,
            GateArg::Residual => GateSource::Residual,
        }
    }
}

/// Scene synthesis and corruption flags, shared by `synth` and `roundtrip`.
#[derive(Args)]
struct SceneArgs {
    /// Scene generation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of persons to place.
    #[arg(long, default_value_t = 2)]
    persons: usize,
    /// Map grid as HxW, e.g. 128x128.
    #[arg(long, default_value = "128x128", value_parser = parse_size)]
    size: (usize, usize),
    /// How tightly persons cluster, from 0 (anywhere) to 1 (packed).
    #[arg(long, default_value_t = 0.0)]
    crowding: f64,
    /// Skeleton description file; omit for the built-in 15-joint skeleton.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Per-joint suppression probability for the corruption pass.
    #[arg(long, default_value_t = 0.0)]
    occlusion: f64,
    /// Suppress every center-channel peak.
    #[arg(long)]
    suppress_centers: bool,
    /// Also suppress joints overlapped in 2-D by a strictly nearer person.
    #[arg(long, default_value_t = 0.0)]
    proximity_radius: f64,
    /// Enable range-dependent depth noise: std = |offset|^2 / divisor.
    #[arg(long)]
    depth_noise_divisor: Option<f64>,
    /// Corruption seed; defaults to the scene seed plus one.
    #[arg(long)]
    corrupt_seed: Option<u64>,
    /// Rendered feature channels (`refine` needs at least one).
    #[arg(long, default_value_t = 0)]
    feature_channels: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Output directory for scene.txt and the .gmap stack.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RefineArgs {
    /// Input map directory.
    #[arg(long)]
    maps: PathBuf,
    /// Weights container path, or "identity" for the zero (no-op) weights.
    #[arg(long)]
    weights: String,
    /// Which signals drive the feature gates.
    #[arg(long, value_enum, default_value_t = GateArg::Refined)]
    gate: GateArg,
    /// Output directory for the refined map stack.
    #[arg(long)]
    out: PathBuf,
}

/// Decoder selection flags, shared by `decode` and `roundtrip`.
#[derive(Args)]
struct DecodeFlags {
    /// Decoder to run.
    #[arg(long, value_enum, default_value_t = GraphArg::Dgr)]
    graph: GraphArg,
    /// Peak detection threshold, strictly between 0 and 1.
    #[arg(long, default_value_t = 0.5, value_parser = parse_threshold)]
    threshold: f32,
}

#[derive(Args)]
struct DecodeArgs {
    /// Input map directory.
    #[arg(long)]
    maps: PathBuf,
    #[command(flatten)]
    decode: DecodeFlags,
    /// Skeleton description file; omit for the built-in 15-joint skeleton.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Output directory for detections.txt, poses.txt and decode_report.txt.
    #[arg(long)]
    out: PathBuf,
}

/// Metric flags, shared by `eval` and `roundtrip`.
#[derive(Args)]
struct MetricFlags {
    /// Correctness radius for the PCK metric, in skeleton units.
    #[arg(long, default_value_t = DEFAULT_PCK_THRESHOLD)]
    pck_radius: f64,
    /// Fail (exit 1) when PCK lands below this percentage.
    #[arg(long)]
    min_pck_rel: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Decoded poses file.
    #[arg(long)]
    poses: PathBuf,
    /// Scene file providing the ground truth.
    #[arg(long)]
    scene: PathBuf,
    /// Skeleton description file; omit for the built-in 15-joint skeleton.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    #[command(flatten)]
    metric: MetricFlags,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RoundtripArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    decode: DecodeFlags,
    #[command(flatten)]
    metric: MetricFlags,
    /// Output directory for every artifact, report.txt included.
    #[arg(long)]
    out: PathBuf,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("size must look like 128x128, got {s}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in size: {s}"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in size: {s}"))?;
    if h == 0 || w == 0 {
        return Err(format!("size must be positive, got {s}"));
    }
    Ok((h, w))
}

fn parse_threshold(s: &str) -> Result<f32, String> {
    let v: f32 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("threshold must lie strictly between 0 and 1, got {v}"))
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<i32, Box<dyn Error>> {
    match cli.command {
        Command::Synth(args) => {
            let output = run_synth(&args.scene)?;
            write_scene_dir(&args.out, &output)?;
            println!("wrote {}", args.out.display());
            Ok(0)
        }
        Command::Refine(args) => run_refine(&args),
        Command::Decode(args) => {
            require_path(&args.maps)?;
            let skeleton = load_skeleton(&args.skeleton)?;
            let maps = load_map_dir(&args.maps)?;
            let outcome = run_decode(&maps, &skeleton, &args.decode)?;
            write_decode_dir(&args.out, &outcome)?;
            println!(
                "decoded {}/{} persons",
                outcome.decoded_count(),
                outcome.poses.len()
            );
            Ok(0)
        }
        Command::Eval(args) => {
            require_path(&args.poses)?;
            require_path(&args.scene)?;
            let skeleton = load_skeleton(&args.skeleton)?;
            let scene = load_scene(&args.scene)?;
            let preds = load_poses(&args.poses)?;
            let (report, code) = run_eval(&scene.gt_poses(), &preds, &skeleton, &args.metric);
            let text = report.to_text();
            print!("{text}");
            if let Some(out) = &args.out {
                fs::write(out, &text)?;
            }
            Ok(code)
        }
        Command::Roundtrip(args) => {
            let output = run_synth(&args.scene)?;
            write_scene_dir(&args.out, &output)?;
            let outcome = run_decode(&output.maps, &output.skeleton, &args.decode)?;
            write_decode_dir(&args.out, &outcome)?;
            let (report, code) = run_eval(
                &output.scene.gt_poses(),
                &outcome.valid_poses(),
                &output.skeleton,
                &args.metric,
            );
            let text = report.to_text();
            print!("{text}");
            fs::write(args.out.join("report.txt"), &text)?;
            Ok(code)
        }
    }
}

/// Everything `synth` produces before any file is written.
struct SynthOutput {
    skeleton: SkeletonConfig,
    scene: Scene,
    maps: DataMapSet,
    corruption: Option<CorruptionLog>,
}

fn run_synth(args: &SceneArgs) -> Result<SynthOutput, Box<dyn Error>> {
    let skeleton = load_skeleton(&args.skeleton)?;
    let (height, width) = args.size;
    let scene_params =
        SceneParams { width, height, person_count: args.persons, crowding: args.crowding };
    let scene = generate_scene(&skeleton, &scene_params, args.seed)?;
    let render = RenderParams {
        feature_channels: (args.feature_channels > 0).then_some(args.feature_channels),
        feature_seed: args.seed,
        ..RenderParams::default()
    };
    let mut maps = render_maps(&scene, &skeleton, &render)?;
    let wants_corruption = args.occlusion > 0.0
        || args.suppress_centers
        || args.proximity_radius > 0.0
        || args.depth_noise_divisor.is_some();
    let corruption = if wants_corruption {
        let params = CorruptParams {
            occlusion_prob: args.occlusion,
            suppress_centers: args.suppress_centers,
            seed: args.corrupt_seed.unwrap_or_else(|| args.seed.wrapping_add(1)),
            depth_noise_divisor: args.depth_noise_divisor.unwrap_or(f64::INFINITY),
            proximity_radius: args.proximity_radius,
            ..CorruptParams::default()
        };
        Some(corrupt_maps(&mut maps, &scene, &skeleton, &render, &params)?)
    } else {
        None
    };
    Ok(SynthOutput { skeleton, scene, maps, corruption })
}

fn run_refine(args: &RefineArgs) -> Result<i32, Box<dyn Error>> {
    require_path(&args.maps)?;
    let maps = load_map_dir(&args.maps)?;
    let weights = if args.weights == "identity" {
        let feature = maps
            .feature
            .as_ref()
            .ok_or("refinement needs a feature map (synth with --feature-channels)")?;
        SdarWeights::zeros(maps.joint_count(), feature.channels())
    } else {
        let path = PathBuf::from(&args.weights);
        require_path(&path)?;
        load_weights(&path)?
    };
    let refined = refine(&maps, &weights, args.gate.into())?;
    fs::create_dir_all(&args.out)?;
    save_map_dir(&args.out, &refined)?;
    // Keep the directory self-contained for downstream eval.
    let scene_src = args.maps.join("scene.txt");
    if scene_src.exists() {
        fs::copy(scene_src, args.out.join("scene.txt"))?;
    }
    println!("wrote {}", args.out.display());
    Ok(0)
}

fn run_decode(
    maps: &DataMapSet,
    skeleton: &SkeletonConfig,
    flags: &DecodeFlags,
) -> Result<DecodeOutcome, Box<dyn Error>> {
    let params = DecodeParams {
        detect: DetectParams { threshold: flags.threshold, ..DetectParams::default() },
        mode: flags.graph.into(),
        ..DecodeParams::default()
    };
    Ok(decode_scene_maps(maps, skeleton, &params)?)
}

fn run_eval(
    gt: &[Pose3D],
    preds: &[Pose3D],
    skeleton: &SkeletonConfig,
    flags: &MetricFlags,
) -> (MetricReport, i32) {
    let report = evaluate(gt, preds, skeleton.mid_hip(), flags.pck_radius);
    let code = match flags.min_pck_rel {
        Some(min) if report.pck_rel < min => {
            eprintln!("pck_rel {:.4} below required {min:.4}", report.pck_rel);
            1
        }
        _ => 0,
    };
    (report, code)
}

fn load_skeleton(path: &Option<PathBuf>) -> Result<SkeletonConfig, Box<dyn Error>> {
    match path {
        None => Ok(SkeletonConfig::default()),
        Some(p) => {
            require_path(p)?;
            Ok(SkeletonConfig::load(p)?)
        }
    }
}

fn require_path(path: &Path) -> Result<(), Box<dyn Error>> {
    if path.exists() {
        Ok(())
    } else {
        Err(format!("missing file: {}", path.display()).into())
    }
}

fn save_map_dir(dir: &Path, maps: &DataMapSet) -> Result<(), Box<dyn Error>> {
    write_gmap_file(&dir.join("heat.gmap"), &maps.heat)?;
    write_gmap_file(&dir.join("scale.gmap"), &maps.scale)?;
    write_gmap_file(&dir.join("depth.gmap"), &maps.depth)?;
    write_gmap_file(&dir.join("offset3d.gmap"), &maps.offset3d)?;
    if let Some(feature) = &maps.feature {
        write_gmap_file(&dir.join("feature.gmap"), feature)?;
    }
    Ok(())
}

fn load_map_dir(dir: &Path) -> Result<DataMapSet, Box<dyn Error>> {
    for name in ["heat.gmap", "scale.gmap", "depth.gmap", "offset3d.gmap"] {
        require_path(&dir.join(name))?;
    }
    let heat = read_gmap_file(&dir.join("heat.gmap"))?;
    let scale = read_gmap_file(&dir.join("scale.gmap"))?;
    let depth = read_gmap_file(&dir.join("depth.gmap"))?;
    let offset3d = read_gmap_file(&dir.join("offset3d.gmap"))?;
    let feature_path = dir.join("feature.gmap");
    let feature =
        if feature_path.exists() { Some(read_gmap_file(&feature_path)?) } else { None };
    if heat.channels() < 2 {
        return Err(format!(
            "heat map in {} needs at least one joint channel plus the center channel",
            dir.display()
        )
        .into());
    }
    let joint_count = heat.channels() - 1;
    Ok(DataMapSet::new(joint_count, heat, scale, depth, offset3d, feature)?)
}

fn write_scene_dir(dir: &Path, output: &SynthOutput) -> Result<(), Box<dyn Error>> {
    fs::create_dir_all(dir)?;
    save_scene(&dir.join("scene.txt"), &output.scene)?;
    save_map_dir(dir, &output.maps)?;
    if let Some(log) = &output.corruption {
        fs::write(dir.join("corruption.txt"), corruption_to_text(log))?;
    }
    Ok(())
}

fn write_decode_dir(dir: &Path, outcome: &DecodeOutcome) -> Result<(), Box<dyn Error>> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("detections.txt"), detections_to_text(outcome))?;
    save_poses(&dir.join("poses.txt"), &outcome.valid_poses())?;
    fs::write(dir.join("decode_report.txt"), decode_report_to_text(outcome))?;
    Ok(())
}

fn corruption_to_text(log: &CorruptionLog) -> String {
    let mut text = String::new();
    for (person, joint) in &log.joints {
        writeln!(text, "joint {person} {joint}").expect("string write");
    }
    for person in &log.centers {
        writeln!(text, "center {person}").expect("string write");
    }
    text
}

fn detections_to_text(outcome: &DecodeOutcome) -> String {
    let mut text = String::new();
    for (index, person) in outcome.detections.iter().enumerate() {
        writeln!(text, "person {index}").expect("string write");
        match (&person.center, &person.center_3d) {
            (Some(peak), Some(pos)) => {
                writeln!(
                    text,
                    "center {} {} {:?} at {:?} {:?} {:?}",
                    peak.x, peak.y, peak.confidence, pos[0], pos[1], pos[2]
                )
                .expect("string write");
            }
            _ => writeln!(text, "center none").expect("string write"),
        }
        for (category, (peak, pos)) in
            person.keypoints.iter().zip(&person.keypoints_3d).enumerate()
        {
            match (peak, pos) {
                (Some(peak), Some(pos)) => {
                    writeln!(
                        text,
                        "joint {category} {} {} {:?} at {:?} {:?} {:?}",
                        peak.x, peak.y, peak.confidence, pos[0], pos[1], pos[2]
                    )
                    .expect("string write");
                }
                _ => writeln!(text, "joint {category} none").expect("string write"),
            }
        }
    }
    text
}

fn decode_report_to_text(outcome: &DecodeOutcome) -> String {
    let total = outcome.poses.len();
    let decoded = outcome.decoded_count();
    let mut text = String::new();
    writeln!(text, "persons {total}").expect("string write");
    writeln!(text, "decoded {decoded}").expect("string write");
    writeln!(text, "failed {}", total - decoded).expect("string write");
    for (index, result) in outcome.poses.iter().enumerate() {
        match result {
            Ok(pose) => writeln!(
                text,
                "person {index}: ok joints {}/{}",
                pose.valid_count(),
                pose.joint_count()
            )
            .expect("string write"),
            Err(e) => writeln!(text, "person {index}: error: {e}").expect("string write"),
        }
    }
    text
}
