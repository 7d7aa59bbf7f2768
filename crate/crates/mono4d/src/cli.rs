//! Command-line subcommands. Each returns a typed error; the binary turns it into a
//! one-line `error[<category>]: ...` report and an exit code.
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mono4d_core::corr::{TrackSet, DEFAULT_EDGE_THRESHOLD};
use mono4d_core::eval::{
    align_for_eval, apply_similarity, filter_flying_tracks, flow_metrics, recover_scene_flow, sequence_metrics,
    AlignMode, MetricReport,
};
use mono4d_core::loss::{LossReport, LossWeights};
use mono4d_core::pipeline::{reconstruct_stream, EmittedFrame, FrameSource, WindowConfig};
use mono4d_core::refine::{refine_scene_with, RefineParams, RefineProblem};
use mono4d_core::synth::{describe, Preset, Scene, DEFAULT_FRAMES, DEFAULT_TRACK_GRID};
use mono4d_core::{CloudSequence, DepthMap, PoseSE3, SceneInputs};
use serde::Serialize;

use crate::error::{IoError, Result};
use crate::formats::ply::{self, ColorBy, Colorizer, Layout, Vertex};
use crate::formats::{json, pfm};
use crate::manifest::{prediction, write_scene, GroundTruth, Manifest, ManifestSource};

#[derive(Debug, Parser)]
#[command(name = "mono4d", version, about = "Dense 4D reconstruction from per-frame depth, flow and masks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct a scene manifest into per-frame clouds, poses and losses.
    Reconstruct(ReconstructArgs),
    /// Score a reconstruction against the ground-truth clouds of a manifest.
    EvalPcd(EvalPcdArgs),
    /// Score long-term 3D scene flow along the manifest's tracks.
    EvalFlow(EvalFlowArgs),
    /// Print the loss terms of a manifest's inputs as given.
    Losses(LossesArgs),
    /// Render a synthetic scene with exact inputs and ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Manifest file or the directory containing manifest.json.
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Frames per window.
    #[arg(long, default_value_t = 4)]
    pub window: usize,
    /// Frames shared by consecutive windows.
    #[arg(long, default_value_t = 1)]
    pub overlap: usize,
    /// Optimize per-frame depth scales and the focal length before reconstructing.
    #[arg(long)]
    pub refine: bool,
    #[arg(long, default_value_t = 200)]
    pub refine_iters: usize,
    #[arg(long, value_enum, default_value_t = Layout::PerFrame)]
    pub ply_layout: Layout,
    #[arg(long, value_enum, default_value_t = ColorBy::FrameIndex)]
    pub color_by: ColorBy,
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    Global,
    FirstFrame,
}

impl From<AlignArg> for AlignMode {
    fn from(a: AlignArg) -> Self {
        match a {
            AlignArg::Global => AlignMode::Global,
            AlignArg::FirstFrame => AlignMode::FirstFrame,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalPcdArgs {
    /// Output directory of `reconstruct`.
    pub pred_dir: PathBuf,
    /// Manifest with ground truth.
    pub gt_manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = AlignArg::Global)]
    pub align: AlignArg,
}

#[derive(Debug, Args)]
pub struct EvalFlowArgs {
    pub pred_dir: PathBuf,
    pub gt_manifest: PathBuf,
    /// Query points per side, taken evenly from the manifest's square track grid.
    #[arg(long, default_value_t = DEFAULT_TRACK_GRID)]
    pub grid: usize,
}

#[derive(Debug, Args)]
pub struct LossesArgs {
    pub manifest: PathBuf,
}

fn preset_names() -> Vec<&'static str> {
    Preset::ALL.iter().map(|p| p.name()).collect()
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_FRAMES)]
    pub frames: usize,
    #[arg(long, default_value = "default", value_parser = clap::builder::PossibleValuesParser::new(preset_names()))]
    pub preset: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Tracks are seeded on an N×N grid of the first frame.
    #[arg(long, default_value_t = DEFAULT_TRACK_GRID)]
    pub track_grid: usize,
}

/// Applies `MONO4D_THREADS` (0 or unset = one worker per core).
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("MONO4D_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| IoError::Usage(format!("MONO4D_THREADS must be a non-negative integer, got {value:?}")))?;
    if n > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Reconstruct(a) => reconstruct(&a).map(|_| ()),
        Command::EvalPcd(a) => {
            let report = eval_pcd(&a)?;
            print_report(&mut stdout, &report)
        }
        Command::EvalFlow(a) => {
            let report = eval_flow(&a)?;
            print_report(&mut stdout, &report)
        }
        Command::Losses(a) => {
            let report = losses(&Manifest::open(&a.manifest)?.inputs()?)?;
            stdout.write_all(&json::encode(&report)).map_err(|e| IoError::io(Path::new("<stdout>"), e))
        }
        Command::Synth(a) => {
            let manifest = synth(&a)?;
            writeln!(stdout, "{}", manifest.dir().display()).map_err(|e| IoError::io(Path::new("<stdout>"), e))
        }
    }
}

/// JSON on stdout, the human-readable table on stderr.
fn print_report(out: &mut impl Write, report: &MetricReport) -> Result<()> {
    out.write_all(&json::encode(report)).map_err(|e| IoError::io(Path::new("<stdout>"), e))?;
    eprint!("{}", metric_table(report));
    Ok(())
}

/// Fixed column order: CD, F1, F2.5, F5 then ADE, FDE, P5, P10. Absent suites are omitted.
pub fn metric_table(r: &MetricReport) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    let mut out = String::new();
    if r.cd_mm.is_some() {
        out += &format!("{:>10} {:>8} {:>8} {:>8}\n", "CD (mm)", "F1", "F2.5", "F5");
        out += &format!("{:>10} {:>8} {:>8} {:>8}\n", cell(r.cd_mm), cell(r.f1), cell(r.f2_5), cell(r.f5));
    }
    if r.ade_mm.is_some() {
        out += &format!("{:>10} {:>8} {:>8} {:>8}\n", "ADE (mm)", "FDE (mm)", "P5", "P10");
        out += &format!("{:>10} {:>8} {:>8} {:>8}\n", cell(r.ade_mm), cell(r.fde_mm), cell(r.p5), cell(r.p10));
    }
    out
}

/// Loss terms at the identity refinement state.
pub fn losses(inputs: &SceneInputs) -> Result<LossReport> {
    let problem = RefineProblem::new(inputs, LossWeights::default())?;
    Ok(problem.loss(&RefineParams::new(inputs.num_frames()))?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub complete: bool,
    pub frames_emitted: usize,
    pub num_frames: usize,
    pub window_size: usize,
    pub overlap: usize,
    pub refined: bool,
    /// Scale of the similarity applied to each window after the first.
    pub stitch_scales: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Camera-frame depth of an emitted frame.
fn camera_depth(frame: &EmittedFrame) -> DepthMap {
    let inv = frame.pose.inverse();
    DepthMap::with_mask(frame.cloud.points.map(|p| inv.apply(p).z), &frame.cloud.valid).expect("same dims")
}

/// Writes each frame as soon as it is final.
struct FrameWriter<'a> {
    out: &'a Path,
    args: &'a ReconstructArgs,
    total: usize,
    colors: Option<Colorizer>,
    merged: Vec<Vertex>,
    poses: Vec<PoseSE3>,
    failure: Arc<Mutex<Option<IoError>>>,
}

impl FrameWriter<'_> {
    fn write(&mut self, frame: &EmittedFrame) -> Result<()> {
        let colors = *self.colors.get_or_insert_with(|| Colorizer::new(self.args.color_by, self.total, &frame.cloud));
        let vertices = colors.vertices(frame.index, &frame.cloud);
        match self.args.ply_layout {
            Layout::PerFrame => ply::write_vertices(&ply::frame_file(self.out, frame.index), &vertices)?,
            Layout::Merged => self.merged.extend(vertices),
        }
        pfm::write_depth(&self.out.join(prediction::depth_name(frame.index)), &camera_depth(frame))?;
        self.poses.push(frame.pose);
        if self.args.verbose {
            eprintln!("frame {} written ({} points)", frame.index, frame.cloud.valid_count());
        }
        Ok(())
    }

    fn emit(&mut self, frame: EmittedFrame) -> mono4d_core::Result<()> {
        self.write(&frame).map_err(|e| {
            let message = e.to_string();
            *self.failure.lock().expect("not poisoned") = Some(e);
            mono4d_core::Error::Source(message)
        })
    }

    fn finish(&self) -> Result<()> {
        if self.args.ply_layout == Layout::Merged {
            ply::write_vertices(&self.out.join("merged.ply"), &self.merged)?;
        }
        json::write_poses(&self.out.join(prediction::POSES), &self.poses)
    }
}

/// Runs the windowed reconstruction and writes everything under `--out`. Returns the
/// run summary; on failure the frames finished before it stay on disk and `run.json`
/// records the error.
pub fn reconstruct(args: &ReconstructArgs) -> Result<RunSummary> {
    let cfg = WindowConfig::new(args.window, args.overlap).map_err(|e| IoError::Usage(e.to_string()))?;
    let manifest = Manifest::open(&args.manifest)?;
    let total = manifest.num_frames();
    if total < cfg.window_size {
        return Err(IoError::validation(format!("{total} frames do not fill one window of {}", cfg.window_size)));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| IoError::io(&args.out, e))?;

    let mut refined: Option<(SceneInputs, LossReport)> = None;
    if args.refine {
        let inputs = manifest.inputs()?;
        let params = RefineParams { max_iterations: args.refine_iters, ..RefineParams::new(total) };
        let verbose = args.verbose;
        let outcome = refine_scene_with(&inputs, &params, &LossWeights::default(), |e| {
            if verbose {
                eprintln!("refine iteration {} total {:.6e} step {:.3e}", e.iteration, e.report.total, e.step_size);
            }
        })
        .map_err(|e| IoError::Core(e.error))?;
        json::write(&args.out.join("refine_trace.json"), &outcome.trace)?;
        let report = *outcome.report();
        let refined_inputs = SceneInputs { depths: outcome.depths, intrinsics: outcome.intrinsics, ..inputs };
        refined = Some((refined_inputs, report));
    }
    let intrinsics = refined.as_ref().map_or(*manifest.intrinsics(), |(i, _)| i.intrinsics);
    json::write_intrinsics(&args.out.join(prediction::INTRINSICS), &intrinsics)?;

    let failure = Arc::new(Mutex::new(None));
    let mut writer = FrameWriter {
        out: &args.out,
        args,
        total,
        colors: None,
        merged: Vec::new(),
        poses: Vec::new(),
        failure: failure.clone(),
    };
    let mut disk = ManifestSource::new(&manifest);
    let mut memory = refined.as_ref().map(|(i, _)| i.clone());
    let source: &mut dyn FrameSource = match memory.as_mut() {
        Some(inputs) => inputs,
        None => &mut disk,
    };
    let result = reconstruct_stream(source, &cfg, |f| writer.emit(f));
    writer.finish()?;

    let mut summary = RunSummary {
        complete: result.is_ok(),
        frames_emitted: writer.poses.len(),
        num_frames: total,
        window_size: cfg.window_size,
        overlap: cfg.overlap,
        refined: args.refine,
        stitch_scales: Vec::new(),
        error: None,
    };
    match result {
        Ok(stream) => {
            summary.stitch_scales = stream.stitches.iter().map(|s| s.scale).collect();
            let report = match &refined {
                Some((_, report)) => *report,
                None => losses(&manifest.inputs()?)?,
            };
            json::write(&args.out.join(prediction::LOSSES), &report)?;
            json::write(&args.out.join(prediction::RUN), &summary)?;
            if args.verbose {
                eprintln!("{} frames in {} windows", stream.frames, stream.windows);
            }
            Ok(summary)
        }
        Err(stream_error) => {
            let error = failure
                .lock()
                .expect("not poisoned")
                .take()
                .or_else(|| disk.take_error())
                .unwrap_or(IoError::Core(stream_error.error));
            summary.error = Some(error.to_string());
            json::write(&args.out.join(prediction::RUN), &summary)?;
            Err(error)
        }
    }
}

fn paired(pred: &CloudSequence, gt: &CloudSequence) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(IoError::validation(format!(
            "prediction has {} frames, ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    let (p, g) = (&pred.intrinsics, &gt.intrinsics);
    if (p.width, p.height) != (g.width, g.height) {
        return Err(IoError::validation(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            p.width, p.height, g.width, g.height
        )));
    }
    Ok(())
}

pub fn eval_pcd(args: &EvalPcdArgs) -> Result<MetricReport> {
    let pred = prediction::read(&args.pred_dir)?;
    let gt = Manifest::open(&args.gt_manifest)?.ground_truth()?;
    paired(&pred, &gt)?;
    let sim = align_for_eval(&pred, &gt, args.align.into())?;
    let metrics = sequence_metrics(&apply_similarity(&pred, &sim), &gt)?;
    Ok(MetricReport::default().with_clouds(&metrics))
}

/// Evenly spaced `grid × grid` subset of tracks laid out on a square `G × G` grid.
pub fn grid_subset(tracks: &TrackSet, grid: usize) -> Result<TrackSet> {
    let side = (tracks.num_tracks as f64).sqrt().round() as usize;
    if side * side != tracks.num_tracks {
        return Err(IoError::validation(format!("{} tracks do not form a square grid", tracks.num_tracks)));
    }
    if grid == 0 || grid > side {
        return Err(IoError::Usage(format!("--grid {grid} must be between 1 and the track grid side {side}")));
    }
    let pick: Vec<usize> = (0..grid).map(|k| ((k as f64 + 0.5) * side as f64 / grid as f64).floor() as usize).collect();
    let indices: Vec<usize> = pick.iter().flat_map(|&r| pick.iter().map(move |&c| r * side + c)).collect();
    Ok(tracks.select(&indices))
}

pub fn eval_flow(args: &EvalFlowArgs) -> Result<MetricReport> {
    let pred = prediction::read(&args.pred_dir)?;
    let manifest = Manifest::open(&args.gt_manifest)?;
    let tracks = manifest
        .tracks()?
        .ok_or_else(|| IoError::validation(format!("{}: manifest lists no tracks", args.gt_manifest.display())))?;
    let gt = manifest.ground_truth()?;
    paired(&pred, &gt)?;
    let subset = grid_subset(&tracks, args.grid)?;
    let (kept, _) = filter_flying_tracks(&subset, &manifest.ground_truth_depths()?, DEFAULT_EDGE_THRESHOLD)?;
    let sim = align_for_eval(&pred, &gt, AlignMode::FirstFrame)?;
    let predicted = recover_scene_flow(&apply_similarity(&pred, &sim), &kept);
    let truth = recover_scene_flow(&gt, &kept);
    Ok(MetricReport::default().with_flow(&flow_metrics(&predicted, &truth)?))
}

pub fn synth(args: &SynthArgs) -> Result<Manifest> {
    let preset = Preset::from_name(&args.preset).map_err(|e| IoError::Usage(e.to_string()))?;
    if args.frames == 0 {
        return Err(IoError::Usage("--frames must be positive".into()));
    }
    let scene = Scene::preset(preset, args.seed, args.frames)?;
    let inputs = scene.inputs(Some(args.track_grid)).map_err(|e| IoError::Usage(e.to_string()))?;
    let gt = GroundTruth { depths: &inputs.depths, poses: scene.camera_poses() };
    let id = format!("{}-seed{}-{}f", preset.name(), args.seed, args.frames);
    let manifest = write_scene(&args.out, &id, &inputs, Some(gt))?;
    eprintln!("{id}: {}", describe(scene.spec()));
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_shows_the_defaults() {
        let mut cmd = Cli::command();
        let help = cmd.find_subcommand_mut("reconstruct").unwrap().render_long_help().to_string();
        for needle in ["[default: 4]", "[default: 1]", "[default: 200]"] {
            assert!(help.contains(needle), "{needle} missing from\n{help}");
        }
        let help = cmd.find_subcommand_mut("eval-flow").unwrap().render_long_help().to_string();
        assert!(help.contains("[default: 35]"));
        let help = cmd.find_subcommand_mut("eval-pcd").unwrap().render_long_help().to_string();
        assert!(help.contains("[default: global]"));
        let help = cmd.find_subcommand_mut("synth").unwrap().render_long_help().to_string();
        assert!(help.contains("[default: 40]") && help.contains("[default: default]") && help.contains("[default: 0]"));
    }

    #[test]
    fn grid_subset_picks_evenly() {
        let n = 6 * 6;
        let positions: Vec<[f64; 2]> = (0..n).map(|k| [k as f64, 0.0]).collect();
        let tracks = TrackSet::new(n, 1, positions, vec![true; n], 0).unwrap();
        let sub = grid_subset(&tracks, 3).unwrap();
        let picked: Vec<f64> = sub.positions.iter().map(|p| p[0]).collect();
        assert_eq!(picked, [7.0, 9.0, 11.0, 19.0, 21.0, 23.0, 31.0, 33.0, 35.0]);
        assert_eq!(grid_subset(&tracks, 6).unwrap(), tracks);
        assert!(grid_subset(&tracks, 7).is_err());
        assert!(grid_subset(&tracks.select(&[0, 1, 2]), 1).is_err());
    }

    #[test]
    fn table_has_fixed_columns() {
        let r =
            MetricReport { cd_mm: Some(1.0), f1: Some(99.0), f2_5: Some(100.0), f5: Some(100.0), ..Default::default() };
        let t = metric_table(&r);
        assert!(t.starts_with("   CD (mm)       F1     F2.5       F5\n"));
        assert_eq!(t.lines().count(), 2);
    }
}
