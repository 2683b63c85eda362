//! `bmc` command line.
//!
//! Every subcommand resolves its [`RunConfig`] as defaults, then the optional
//! `--config` JSON file, then individual flags. Outputs are assembled in
//! memory and written only once the whole run has succeeded; if writing
//! fails midway, files already written are removed again.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::anchors::{
    build_targets, iou_positive_counts, objectness_loss, partition_pixels, per_box_feature_maps,
    sample_background, select_positive_anchors, Cell, SupervisionTarget,
};
use crate::bm::generate_map;
use crate::config::RunConfig;
use crate::eval::{froc, FrocMode};
use crate::io::{self, AnnotationFormat, AnnotationRecord};
use crate::map::ScalarMap;
use crate::resize::GridSpec;
use crate::roi::abm_loss;

#[derive(Debug, Parser)]
#[command(
    name = "bmc",
    version,
    about = "Bounding-map supervision targets and FROC evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-image BM_xy at image resolution.
    GenBm(MapArgs),
    /// Per-image size-adaptive ABM_xy at image resolution.
    GenAbm(MapArgs),
    /// Feature-grid objectness targets, pixel sets and positive anchors.
    Targets(MapArgs),
    /// IoU-baseline positive anchor counts against BM-selected positives.
    StatsImbalance(StatsArgs),
    /// Sensitivity at fixed false positives per image.
    Froc(FrocArgs),
    /// Objectness BCE or ABM L2 loss between two stored maps.
    Losses(LossArgs),
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Annotation file (.csv or .json).
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write 8-bit PGM previews.
    #[arg(long)]
    pub pgm: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub annotations: PathBuf,
    /// Directory for per-box, per-image and histogram CSV tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct FrocArgs {
    /// Detections JSON: `[{"image_id", "box": [x1, y1, x2, y2], "score"}]`.
    pub detections: PathBuf,
    pub annotations: PathBuf,
    /// Directory for `froc.csv` and `run.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossMode {
    Objectness,
    Abm,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum)]
    pub mode: LossMode,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON run configuration; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Positive anchor boundary value B.
    #[arg(long)]
    pub boundary: Option<f64>,
    #[arg(long)]
    pub min_background: Option<usize>,
    #[arg(long)]
    pub a_small: Option<f64>,
    #[arg(long)]
    pub a_medium: Option<f64>,
    #[arg(long)]
    pub baseline_iou: Option<f64>,
    #[arg(long)]
    pub eval_iou: Option<f64>,
    /// Comma-separated FPPI points.
    #[arg(long, value_delimiter = ',')]
    pub fppi: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub froc_mode: Option<FrocModeArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrocModeArg {
    Step,
    Linear,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.stride {
            c.stride = v;
        }
        if let Some(v) = self.boundary {
            c.boundary = v;
        }
        if let Some(v) = self.min_background {
            c.min_background = v;
        }
        if let Some(v) = self.a_small {
            c.a_small = v;
        }
        if let Some(v) = self.a_medium {
            c.a_medium = v;
        }
        if let Some(v) = self.baseline_iou {
            c.baseline_iou = v;
        }
        if let Some(v) = self.eval_iou {
            c.eval_iou = v;
        }
        if let Some(v) = &self.fppi {
            c.fppi_points = v.clone();
        }
        if let Some(v) = self.froc_mode {
            c.froc_mode = match v {
                FrocModeArg::Step => FrocMode::Step,
                FrocModeArg::Linear => FrocMode::Linear,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

/// Files of one run, written together at the end.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.files.push((path, bytes.into()));
    }

    fn add_map(&mut self, path: PathBuf, map: &ScalarMap) {
        let side = io::sidecar_path(&path);
        self.add(path, io::encode_map(map));
        self.add(side, io::encode_sidecar(map));
    }

    fn add_json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(path, text);
        Ok(())
    }

    fn commit(self) -> Result<()> {
        let mut written: Vec<&Path> = Vec::new();
        let mut created_dirs: Vec<PathBuf> = Vec::new();
        let result = (|| -> Result<()> {
            for (path, bytes) in &self.files {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    if !dir.exists() {
                        fs::create_dir_all(dir)
                            .with_context(|| format!("creating {}", dir.display()))?;
                        created_dirs.push(dir.to_path_buf());
                    }
                }
                fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
                written.push(path);
            }
            Ok(())
        })();
        if result.is_err() {
            for p in written {
                let _ = fs::remove_file(p);
            }
            for d in created_dirs.iter().rev() {
                let _ = fs::remove_dir(d);
            }
        }
        result
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    inputs: Vec<String>,
    config: &'a RunConfig,
}

fn run_record(
    out: &mut Outputs,
    dir: &Path,
    command: &str,
    inputs: &[&Path],
    config: &RunConfig,
) -> Result<()> {
    let record = RunRecord {
        command,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        config,
    };
    out.add_json(dir.join("run.json"), &record)
}

fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let format = AnnotationFormat::from_path(path)?;
    let records = io::parse_annotations(path, format)?;
    for r in &records {
        let id = &r.image_id;
        if id == "." || id == ".." || id.contains(['/', '\\']) || id == "run.json" {
            bail!("image_id '{id}' cannot be used as a file name");
        }
    }
    Ok(records)
}

/// Parses `argv` and runs the chosen subcommand, returning the text meant
/// for stdout.
pub fn run<I, T>(argv: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    execute(&cli.command)
}

pub fn execute(command: &Command) -> Result<String> {
    match command {
        Command::GenBm(a) => gen_map(a, false),
        Command::GenAbm(a) => gen_map(a, true),
        Command::Targets(a) => targets(a),
        Command::StatsImbalance(a) => stats_imbalance(a),
        Command::Froc(a) => froc_cmd(a),
        Command::Losses(a) => losses(a),
    }
}

fn gen_map(args: &MapArgs, adaptive: bool) -> Result<String> {
    let config = args.config.resolve()?;
    let records = load_annotations(&args.annotations)?;
    let policy = adaptive.then(|| config.alpha_policy());
    let (tag, command) = if adaptive {
        ("abm", "gen-abm")
    } else {
        ("bm", "gen-bm")
    };

    let mut out = Outputs::default();
    let mut report = String::new();
    for r in &records {
        let map = generate_map(&r.boxes, r.width, r.height, policy.as_ref())
            .with_context(|| format!("image '{}'", r.image_id))?;
        out.add_map(args.out.join(format!("{}.{tag}.f32", r.image_id)), &map);
        if args.pgm {
            out.add(
                args.out.join(format!("{}.{tag}.pgm", r.image_id)),
                io::encode_pgm(&map),
            );
        }
        writeln!(
            report,
            "{}: {} boxes, {}x{}",
            r.image_id,
            r.boxes.len(),
            r.width,
            r.height
        )?;
    }
    run_record(&mut out, &args.out, command, &[&args.annotations], &config)?;
    out.commit()?;
    Ok(report)
}

#[derive(Serialize)]
struct TargetsFile<'a> {
    image_id: &'a str,
    image_width: usize,
    image_height: usize,
    stride: usize,
    grid_width: usize,
    grid_height: usize,
    anchor_classes: usize,
    boundary: f64,
    seed: u64,
    foreground: Vec<Cell>,
    background: Vec<Cell>,
    sampled_background: Vec<Cell>,
    positives: Vec<Cell>,
}

fn grid_for(r: &AnnotationRecord, config: &RunConfig) -> Result<GridSpec> {
    let grid = GridSpec {
        image_width: r.width,
        image_height: r.height,
        stride: config.stride,
        anchor_classes: config.anchor_classes,
    };
    grid.validate()?;
    Ok(grid)
}

fn targets(args: &MapArgs) -> Result<String> {
    let config = args.config.resolve()?;
    let records = load_annotations(&args.annotations)?;
    let params = config.target_params();
    // one generator hands out a recorded per-image sampling seed
    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);

    let mut out = Outputs::default();
    let mut report = String::new();
    for r in &records {
        let grid = grid_for(r, &config)?;
        let seed = seeds.next_u64();
        let t: SupervisionTarget = build_targets(&r.boxes, &grid, &params, seed)
            .with_context(|| format!("image '{}'", r.image_id))?;
        let (_, background) = partition_pixels(&t.target)?;
        let dir = args.out.join(&r.image_id);
        out.add_map(dir.join("bm_r.f32"), &t.target);
        if args.pgm {
            out.add(dir.join("bm_r.pgm"), io::encode_pgm(&t.target));
        }
        let (gw, gh) = grid.feature_dims();
        out.add_json(
            dir.join("targets.json"),
            &TargetsFile {
                image_id: &r.image_id,
                image_width: r.width,
                image_height: r.height,
                stride: grid.stride,
                grid_width: gw,
                grid_height: gh,
                anchor_classes: grid.anchor_classes,
                boundary: t.boundary,
                seed,
                foreground: t.foreground.clone().into(),
                background: background.into(),
                sampled_background: t.sampled_background.clone().into(),
                positives: t.positives.clone().into(),
            },
        )?;
        writeln!(
            report,
            "{}: grid {gw}x{gh}, foreground {}, sampled background {}, positives {}",
            r.image_id,
            t.foreground.len(),
            t.sampled_background.len(),
            t.positives.len()
        )?;
    }
    run_record(
        &mut out,
        &args.out,
        "targets",
        &[&args.annotations],
        &config,
    )?;
    out.commit()?;
    Ok(report)
}

fn stats_imbalance(args: &StatsArgs) -> Result<String> {
    let config = args.config.resolve()?;
    let records = load_annotations(&args.annotations)?;
    let anchors = config.anchor_config();

    let mut per_box = String::from("image_id,box,area,iou_positives,loc_p\n");
    let mut per_image = String::from("image_id,boxes,iou_positives,loc_p\n");
    let mut box_counts = Vec::new();
    let mut image_counts = Vec::new();
    for r in &records {
        let grid = grid_for(r, &config)?;
        let counts = iou_positive_counts(&r.boxes, &anchors, &grid)?;
        let maps = per_box_feature_maps(&r.boxes, &grid)?;
        let mut union = crate::anchors::PixelSet::new();
        for (i, (gt, m)) in r.boxes.iter().zip(&maps).enumerate() {
            let loc = select_positive_anchors(
                std::slice::from_ref(gt),
                std::slice::from_ref(m),
                config.boundary,
                config.small_box_area,
            )?;
            writeln!(
                per_box,
                "{},{i},{},{},{}",
                r.image_id,
                gt.area(),
                counts.per_box[i],
                loc.len()
            )?;
            box_counts.push(counts.per_box[i]);
            union = union.union(&loc);
        }
        writeln!(
            per_image,
            "{},{},{},{}",
            r.image_id,
            r.boxes.len(),
            counts.per_image,
            union.len()
        )?;
        image_counts.push(counts.per_image);
    }

    let top = box_counts
        .iter()
        .chain(&image_counts)
        .copied()
        .max()
        .unwrap_or(0);
    let mut histogram = String::from("positives,gt_boxes,images\n");
    for k in 0..=top {
        let nb = box_counts.iter().filter(|&&c| c == k).count();
        let ni = image_counts.iter().filter(|&&c| c == k).count();
        writeln!(histogram, "{k},{nb},{ni}")?;
    }

    if let Some(dir) = &args.out {
        let mut out = Outputs::default();
        out.add(dir.join("per_box.csv"), per_box.clone());
        out.add(dir.join("per_image.csv"), per_image);
        out.add(dir.join("histogram.csv"), histogram.clone());
        run_record(
            &mut out,
            dir,
            "stats-imbalance",
            &[&args.annotations],
            &config,
        )?;
        out.commit()?;
    }

    let at_most_four = box_counts.iter().filter(|&&c| c <= 4).count();
    let mut report = per_box;
    if !box_counts.is_empty() {
        writeln!(
            report,
            "# {at_most_four}/{} GT boxes match <= 4 positive anchors at IoU {}",
            box_counts.len(),
            config.baseline_iou
        )?;
    }
    Ok(report)
}

fn froc_cmd(args: &FrocArgs) -> Result<String> {
    let config = args.config.resolve()?;
    let records = load_annotations(&args.annotations)?;
    let dets = io::parse_detections(&args.detections)?;
    let gts = io::ground_truth(&records);
    let result = froc(
        &dets,
        &gts,
        &config.fppi_points,
        config.eval_iou,
        config.froc_mode,
    )?;

    let mut report = String::new();
    let mut csv = String::from("fppi,sensitivity\n");
    for p in &result.points {
        writeln!(report, "sensitivity@{} = {:.4}", p.fppi, p.sensitivity)?;
        writeln!(csv, "{},{}", p.fppi, p.sensitivity)?;
    }
    writeln!(report, "average = {:.4}", result.average)?;
    writeln!(csv, "average,{}", result.average)?;

    if let Some(dir) = &args.out {
        let mut out = Outputs::default();
        out.add(dir.join("froc.csv"), csv);
        run_record(
            &mut out,
            dir,
            "froc",
            &[&args.detections, &args.annotations],
            &config,
        )?;
        out.commit()?;
    }
    Ok(report)
}

fn losses(args: &LossArgs) -> Result<String> {
    let config = args.config.resolve()?;
    let pred = io::read_map(&args.pred)?;
    let target = io::read_map(&args.target)?;
    let loss = match args.mode {
        LossMode::Objectness => {
            let (foreground, background) = partition_pixels(&target)?;
            let sampled =
                sample_background(&foreground, &background, config.min_background, config.seed)?;
            let t = SupervisionTarget {
                target,
                foreground,
                sampled_background: sampled,
                positives: Default::default(),
                boundary: config.boundary,
                seed: config.seed,
            };
            objectness_loss(&pred, &t, config.objectness_reduction)?
        }
        LossMode::Abm => abm_loss(&pred, &target, config.abm_reduction)?,
    };
    Ok(format!("{loss}\n"))
}
