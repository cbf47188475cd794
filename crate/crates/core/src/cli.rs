//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when an input file is missing or invalid,
//! 2 on a usage error. Set `DERAIN_THREADS` to fix the worker count.

use std::ffi::OsStr;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::annotate::{auto_annotate, transfer_labels, AnnotateConfig, AnnotationScene};
use crate::eval::{
    benchmark_run, confusion_from_keep, default_search_space, derive_metrics, tune_filter, Sample,
    SearchSpace, TuneConfig,
};
use crate::filters::{filter_mask, FilterKind, FilterParams};
use crate::io::{
    load_cloud, load_labels, parse_json, read_annotation_scene_json, read_mask, read_scene_json, read_text,
    to_json, write_cloud, write_file, write_labels, write_mask, write_results_csv,
};
use crate::rainsim::{inject_rain, RainConfig, RainDensity};
use crate::scene::{builtin_scene, raycast_scene, SceneSpec, BUILTIN_SCENES};
use crate::seed::stage_seed;
use crate::types::{ConfusionCounts, SensorCalibration};

pub const THREADS_ENV: &str = "DERAIN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lidar-derain", version, about = "Simulate, annotate, de-rain and score LiDAR rain scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print a built-in scene as JSON.
    Scene(SceneArgs),
    /// Ray-cast a scene and write clean and rainy scans.
    Simulate(SimulateArgs),
    /// Filter one cloud; writes the inlier mask and the kept points.
    Derain(DerainArgs),
    /// Label a cloud from an annotation scene.
    Annotate(AnnotateArgs),
    /// Copy labels from the nearest points of a labeled cloud.
    Transfer(TransferArgs),
    /// Score inlier masks against ground-truth labels.
    Eval(EvalArgs),
    /// Random-search filter parameters on a dataset.
    Tune(TuneArgs),
    /// Run filters over a dataset and write a results table.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SceneArgs {
    /// minimal, corridor or rehearse-like
    #[arg(long)]
    name: String,
    /// Emit the annotator's view (sensor frame) instead of the world scene.
    #[arg(long)]
    annotation: bool,
    /// Sensor calibration used for --annotation: desk, desk-small or a JSON file.
    #[arg(long, default_value = "desk")]
    calib: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Built-in scene name or scene JSON file.
    #[arg(long)]
    scene: String,
    /// desk, desk-small or a calibration JSON file.
    #[arg(long, default_value = "desk")]
    calib: String,
    /// Rain rate in mm/h.
    #[arg(long, value_parser = positive_f64, conflicts_with = "density")]
    rate: Option<f64>,
    /// light, medium or heavy (10, 25, 50 mm/h).
    #[arg(long, value_parser = parse_density)]
    density: Option<RainDensity>,
    /// Rain config JSON; --rate/--density override its rate.
    #[arg(long)]
    rain_config: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    frames: u32,
    /// Range noise standard deviation in metres.
    #[arg(long, default_value_t = 0.01, value_parser = non_negative_f64)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Only unreturned beams receive rain.
    #[arg(long)]
    no_occlusion: bool,
    #[arg(long, default_value = "simulated")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct DerainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Filter parameter JSON, e.g. {"kind": "dsor", "k": 5, "s": 0.01, "r": 0.05}.
    #[arg(long, conflicts_with = "kind")]
    filter: Option<PathBuf>,
    /// Filter kind with default parameters.
    #[arg(long, value_parser = parse_kind)]
    kind: Option<FilterKind>,
    /// Inlier mask output (one byte per point, 1 = kept).
    #[arg(long)]
    out_mask: PathBuf,
    /// Filtered cloud output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Annotation scene JSON (see `scene --annotation`).
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    iterations: u32,
    /// RANSAC inlier distance in metres.
    #[arg(long, default_value_t = 0.05, value_parser = positive_f64)]
    threshold: f64,
    /// Height band around the road plane that still counts as road.
    #[arg(long, default_value_t = 0.1, value_parser = non_negative_f64)]
    tolerance: f64,
    #[arg(long, default_value_t = 0.1, value_parser = non_negative_f64)]
    box_margin: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TransferArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    src_labels: PathBuf,
    #[arg(long)]
    dst: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Inlier masks, paired in order with --gt.
    #[arg(long, num_args = 1.., required = true)]
    pred: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    gt: Vec<PathBuf>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    /// Dataset root: .bin/.label pairs below light/, medium/ or heavy/.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    kind: FilterKind,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    samples: u32,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    trials: u32,
    /// Restrict to one rain density.
    #[arg(long, value_parser = parse_density)]
    density: Option<RainDensity>,
    /// Search space JSON; built-in ranges when omitted.
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Best parameters as filter JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    /// NAME or NAME=PARAMS.json; NAME alone must be a filter kind.
    #[arg(long = "filter", value_delimiter = ',', default_value = "ror,sor,dror,dsor")]
    filters: Vec<String>,
    /// Write 0 in the time column so the table is reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got `{s}`")),
    }
}

fn parse_density(s: &str) -> Result<RainDensity, String> {
    RainDensity::from_name(s).ok_or_else(|| format!("expected light, medium or heavy, got `{s}`"))
}

fn parse_kind(s: &str) -> Result<FilterKind, String> {
    FilterKind::from_name(s).ok_or_else(|| format!("expected ror, sor, dror or dsor, got `{s}`"))
}

/// A failure after argument parsing: `usage` maps to exit 2, the rest to 1.
struct Failure {
    usage: bool,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { usage: false, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self { usage: true, message: message.into() }
    }
}

impl From<crate::io::IoError> for Failure {
    fn from(e: crate::io::IoError) -> Self {
        Failure::input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn in_file(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

/// Runs the CLI on `args` (without the program name) and returns the exit code.
pub fn run(args: &[String]) -> i32 {
    let argv = std::iter::once("lidar-derain".to_string()).chain(args.iter().cloned());
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    eprint!("{e}");
                    2
                }
                _ => {
                    let text = e.to_string();
                    eprintln!("{}", text.lines().next().unwrap_or("usage error"));
                    2
                }
            };
        }
    };
    let outcome = match thread_pool() {
        Ok(pool) => pool.install(|| dispatch(cli.command)),
        Err(f) => Err(f),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            if f.usage {
                2
            } else {
                1
            }
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Failure::input(format!("thread pool: {e}")))
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Scene(a) => cmd_scene(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Derain(a) => cmd_derain(a),
        Command::Annotate(a) => cmd_annotate(a),
        Command::Transfer(a) => cmd_transfer(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> CmdResult {
    match out {
        Some(path) => Ok(write_file(path, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_calib(arg: &str) -> Result<SensorCalibration, Failure> {
    let calib = match SensorCalibration::builtin(arg) {
        Some(c) => c,
        None => {
            let path = Path::new(arg);
            let c: SensorCalibration = parse_json(&read_text(path)?).map_err(|e| in_file(path, e))?;
            c.validate().map_err(|e| in_file(path, e))?;
            c
        }
    };
    Ok(calib)
}

fn load_scene(arg: &str) -> Result<SceneSpec, Failure> {
    if BUILTIN_SCENES.contains(&arg) {
        return builtin_scene(arg).map_err(|e| Failure::input(e.to_string()));
    }
    let path = Path::new(arg);
    read_scene_json(&read_text(path)?).map_err(|e| in_file(path, e))
}

fn cmd_scene(a: SceneArgs) -> CmdResult {
    let spec = builtin_scene(&a.name).map_err(|e| Failure::usage(format!("--name: {e}")))?;
    let text = if a.annotation {
        let calib = load_calib(&a.calib)?;
        to_json(&AnnotationScene::from_scene(&spec, calib.sensor_height))
    } else {
        to_json(&spec)
    };
    emit(&a.out, &text)
}

fn scan_name(frame: u32) -> String {
    format!("scan_{frame:06}")
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let spec = load_scene(&a.scene)?;
    let calib = load_calib(&a.calib)?;
    let mut rain = match &a.rain_config {
        Some(path) => parse_json::<RainConfig>(&read_text(path)?).map_err(|e| in_file(path, e))?,
        None => RainConfig::default(),
    };
    if let Some(rate) = a.rate.or(a.density.map(RainDensity::rate)) {
        rain.rate = rate;
    }
    if a.no_occlusion {
        rain.occlusion = false;
    }
    rain.validate().map_err(|e| Failure::input(format!("rain config: {e}")))?;

    for frame in 0..a.frames {
        let frame_seed = stage_seed(a.seed, &format!("frame-{frame}"));
        let noise_seed = stage_seed(frame_seed, "scene-noise");
        let (pgm, labels) = raycast_scene(&spec, &calib, a.noise, noise_seed).map_err(|e| Failure::input(e.to_string()))?;
        let cfg = RainConfig { seed: stage_seed(frame_seed, "rain"), ..rain.clone() };
        let (rainy, rain_labels) = inject_rain(&pgm, &labels, &calib, &cfg).map_err(|e| Failure::input(e.to_string()))?;
        for (dir, grid, l) in [("clean", &pgm, &labels), ("rain", &rainy, &rain_labels)] {
            let (cloud, cloud_labels) = grid.returned_cloud(l);
            let base = a.out_dir.join(dir).join(scan_name(frame));
            write_file(&base.with_extension("bin"), &write_cloud(&cloud)?)?;
            write_file(&base.with_extension("label"), &write_labels(&cloud_labels))?;
        }
    }
    println!("wrote {} frame(s) at {} mm/h to {}", a.frames, rain.rate, a.out_dir.display());
    Ok(())
}

fn load_filter(path: &Path) -> Result<FilterParams, Failure> {
    let p: FilterParams = parse_json(&read_text(path)?).map_err(|e| in_file(path, e))?;
    p.validate().map_err(|e| in_file(path, e))?;
    Ok(p)
}

fn cmd_derain(a: DerainArgs) -> CmdResult {
    let params = match (&a.filter, a.kind) {
        (Some(path), _) => load_filter(path)?,
        (None, Some(kind)) => FilterParams::default_for(kind),
        (None, None) => return Err(Failure::usage("one of --filter or --kind is required")),
    };
    let cloud = load_cloud(&a.input).map_err(|e| in_file(&a.input, e))?;
    let keep = filter_mask(&cloud, &params).map_err(|e| in_file(&a.input, e))?;
    write_file(&a.out_mask, &write_mask(&keep))?;
    if let Some(out) = &a.out {
        write_file(out, &write_cloud(&cloud.select(&keep))?)?;
    }
    let removed = keep.iter().filter(|&&k| !k).count();
    println!("{}: removed {removed} of {} points", params.kind().name(), keep.len());
    Ok(())
}

fn cmd_annotate(a: AnnotateArgs) -> CmdResult {
    let scene = read_annotation_scene_json(&read_text(&a.scene)?).map_err(|e| in_file(&a.scene, e))?;
    let cloud = load_cloud(&a.input).map_err(|e| in_file(&a.input, e))?;
    let cfg = AnnotateConfig {
        iterations: a.iterations as usize,
        inlier_threshold: a.threshold,
        plane_tolerance: a.tolerance,
        box_margin: a.box_margin,
        seed: stage_seed(a.seed, "annotate"),
    };
    let labels = auto_annotate(&cloud, &scene, &cfg).map_err(|e| in_file(&a.input, e))?;
    write_file(&a.out, &write_labels(&labels))?;
    Ok(())
}

fn cmd_transfer(a: TransferArgs) -> CmdResult {
    let src = load_cloud(&a.src).map_err(|e| in_file(&a.src, e))?;
    let labels = load_labels(&a.src_labels).map_err(|e| in_file(&a.src_labels, e))?;
    let dst = load_cloud(&a.dst).map_err(|e| in_file(&a.dst, e))?;
    let out = transfer_labels(&src, &labels, &dst).map_err(|e| in_file(&a.src, e))?;
    write_file(&a.out, &write_labels(&out))?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    if a.pred.len() != a.gt.len() {
        return Err(Failure::usage(format!("--pred has {} files but --gt has {}", a.pred.len(), a.gt.len())));
    }
    let mut counts = ConfusionCounts::default();
    for (pred, gt) in a.pred.iter().zip(&a.gt) {
        let keep = read_mask(&crate::io::read_file(pred)?).map_err(|e| in_file(pred, e))?;
        let labels = load_labels(gt).map_err(|e| in_file(gt, e))?;
        counts += confusion_from_keep(&keep, &labels).map_err(|e| in_file(pred, e))?;
    }
    let m = derive_metrics(counts);
    let text = format!(
        "precision,recall,f1,rain_iou,tp,fp,fn,tn\n{:.2},{:.2},{:.2},{:.2},{},{},{},{}\n",
        100.0 * m.precision,
        100.0 * m.recall,
        100.0 * m.f1,
        100.0 * m.rain_iou,
        counts.tp,
        counts.fp,
        counts.fn_,
        counts.tn
    );
    emit(&a.out, &text)
}

fn density_of(path: &Path) -> Option<RainDensity> {
    path.ancestors().skip(1).find_map(|p| p.file_name().and_then(OsStr::to_str).and_then(RainDensity::from_name))
}

fn collect_bins(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| in_file(dir, e))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            if p.file_name() != Some(OsStr::new("clean")) {
                collect_bins(&p, out)?;
            }
        } else if p.extension() == Some(OsStr::new("bin")) {
            out.push(p);
        }
    }
    Ok(())
}

/// Labeled rainy scans below `root`, in sorted path order. A scan's density
/// comes from the nearest ancestor directory named light, medium or heavy;
/// `clean` directories are skipped.
fn load_dataset(root: &Path, only: Option<RainDensity>) -> Result<Vec<Sample>, Failure> {
    if !root.is_dir() {
        return Err(Failure::input(format!("{}: not a directory", root.display())));
    }
    let mut bins = Vec::new();
    collect_bins(root, &mut bins)?;
    let mut samples = Vec::new();
    for bin in bins {
        let Some(density) = density_of(&bin) else { continue };
        if only.is_some_and(|d| d != density) {
            continue;
        }
        let label_path = bin.with_extension("label");
        let cloud = load_cloud(&bin).map_err(|e| in_file(&bin, e))?;
        let labels = load_labels(&label_path).map_err(|e| in_file(&label_path, e))?;
        if labels.len() != cloud.len() {
            return Err(in_file(&label_path, format!("{} labels for {} points", labels.len(), cloud.len())));
        }
        samples.push(Sample { cloud, labels, density });
    }
    if samples.is_empty() {
        return Err(Failure::input(format!(
            "{}: no labeled scans below a light/, medium/ or heavy/ directory",
            root.display()
        )));
    }
    Ok(samples)
}

fn cmd_tune(a: TuneArgs) -> CmdResult {
    let space: SearchSpace = match &a.space {
        Some(path) => parse_json(&read_text(path)?).map_err(|e| in_file(path, e))?,
        None => default_search_space(a.kind),
    };
    let data = load_dataset(&a.data, a.density)?;
    let cfg = TuneConfig { n_samples: a.samples as usize, n_trials: a.trials as usize, seed: stage_seed(a.seed, "tune") };
    let best = tune_filter(a.kind, &data, &space, &cfg).map_err(|e| in_file(&a.data, e))?;
    write_file(&a.out, to_json(&best.params).as_bytes())?;
    println!("best {} f1 {:.2}% at trial {}", a.kind.name(), 100.0 * best.f1, best.trial);
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let mut filters = Vec::new();
    for spec in &a.filters {
        let entry = match spec.split_once('=') {
            Some((name, path)) => (name.to_string(), load_filter(Path::new(path))?),
            None => {
                let kind = parse_kind(spec).map_err(|e| Failure::usage(format!("--filter: {e}")))?;
                (kind.name().to_string(), FilterParams::default_for(kind))
            }
        };
        filters.push(entry);
    }
    let data = load_dataset(&a.data, None)?;
    let table = benchmark_run(&data, &filters, !a.no_timing).map_err(|e| in_file(&a.data, e))?;
    emit(&a.out, &write_results_csv(&table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &[&str]) -> Vec<String> {
        s.iter().map(|a| a.to_string()).collect()
    }

    #[test]
    fn help_and_usage_codes() {
        assert_eq!(run(&args(&["bench", "--help"])), 0);
        assert_eq!(run(&args(&["--help"])), 0);
        assert_eq!(run(&args(&["bench", "--bogus"])), 2);
        assert_eq!(run(&args(&["simulate", "--scene", "minimal", "--rate", "-1"])), 2);
        assert_eq!(run(&args(&[])), 2);
    }

    #[test]
    fn missing_input_is_exit_one() {
        assert_eq!(run(&args(&["derain", "--in", "/nonexistent/x.bin", "--kind", "dsor", "--out-mask", "/tmp/m"])), 1);
    }

    #[test]
    fn density_from_ancestors() {
        assert_eq!(density_of(Path::new("data/heavy/rain/scan_000000.bin")), Some(RainDensity::Heavy));
        assert_eq!(density_of(Path::new("data/x/scan.bin")), None);
    }
}
