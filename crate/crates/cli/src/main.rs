// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rangekit::augment::{build_object_bank, cut_and_paste, random_global_augment, LabeledFrame, ObjectBank, ObjectLabel};
use rangekit::config::PipelineConfig;
use rangekit::eval::{evaluate_class, evaluate_kitti, evaluate_waymo, EvalFrame, GroundTruth, MetricRow};
use rangekit::io;
use rangekit::pipeline::{export_frame, run_pipeline, Frame, FrameContext, Heads, Injector};
use rangekit::rangeproj::{build_range_image, unproject, PointStatus};
use rangekit::roipool::roi_max_pool_batch;
use rangekit::synthetic::{synthetic_frame, SyntheticConfig};
use rangekit::viewtransfer::gather_point_features;
use rangekit::{viz, Error, Result};

type R = f64;

#[derive(Parser)]
#[command(name = "rangekit", version, about = "LIDAR range-image toolkit")]
struct Cli {
    /// Flat `section.key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Kv,
}

#[derive(Subcommand)]
enum Command {
    /// Convert between velodyne `.bin` scans and `.rgrd` range images.
    Convert(ConvertArgs),
    /// Project a scan and report pixel occupancy.
    Project(ScanArgs),
    /// Random global augmentation and optional object pasting.
    Augment(AugmentArgs),
    /// RoI-pool proposals over a scan.
    Pool(PoolArgs),
    /// Evaluate detections against ground truth.
    Eval(EvalArgs),
    /// Run the two-stage skeleton end to end.
    Pipeline(PipelineArgs),
    /// Write PLY and PPM inspection files.
    Viz(VizArgs),
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ScanArgs {
    /// Velodyne `.bin` scan.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    input: PathBuf,
    /// Ground-truth text file for the scan.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Object bank to paste from.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Crop the scan's labelled objects into a new bank here.
    #[arg(long)]
    save_bank: Option<PathBuf>,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long)]
    input: PathBuf,
    /// Proposals in the detection text format.
    #[arg(long)]
    proposals: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Plain,
    Kitti,
    Waymo,
}

#[derive(Args)]
struct EvalArgs {
    /// Lines of `frame_id detections ground_truth`.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::Plain)]
    metric: Metric,
    /// Class to evaluate; defaults to `pipeline.class`.
    #[arg(long)]
    class: Option<String>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Generate this many synthetic frames.
    #[arg(long, conflicts_with = "kitti_root")]
    synthetic: Option<usize>,
    /// KITTI layout with `velodyne/`, `label_2/` and `calib/`.
    #[arg(long)]
    kitti_root: Option<PathBuf>,
    /// Frame ids to load from the KITTI root, one per line.
    #[arg(long, requires = "kitti_root")]
    ids: Option<PathBuf>,
    #[arg(long, default_value = "oracle")]
    injector: Injector,
    /// Also export input scans, labels, range images, BEV grids and pooled features.
    #[arg(long)]
    artifacts: bool,
}

#[derive(Args)]
struct VizArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
}

/// Ordered report lines.
#[derive(Default)]
struct Report(Vec<(String, String)>);

impl Report {
    fn add(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.push((key.into(), value.to_string()));
    }

    fn metrics(&mut self, row: &MetricRow<R>) {
        let fmt = |v: Option<R>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
        let p = &row.name;
        self.add(format!("{p}.num_gt"), row.num_gt);
        self.add(format!("{p}.tp"), row.tp);
        self.add(format!("{p}.fp"), row.fp);
        self.add(format!("{p}.ap"), fmt(row.ap));
        self.add(format!("{p}.aph"), fmt(row.aph));
    }

    fn render(&self, format: Format) -> String {
        let width = self.0.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        self.0
            .iter()
            .map(|(k, v)| match format {
                Format::Text => format!("{k:<width$}  {v}\n"),
                Format::Kv => format!("{k}={v}\n"),
            })
            .collect()
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| usage("--out is required for this command"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn load_config(cli: &Cli) -> Result<PipelineConfig<R>> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::kitti(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn extension(p: &Path) -> &str {
    p.extension().and_then(|e| e.to_str()).unwrap_or("")
}

fn cmd_convert(cfg: &PipelineConfig<R>, a: &ConvertArgs, report: &mut Report) -> Result<()> {
    match (extension(&a.input), extension(&a.output)) {
        ("bin", "rgrd") => {
            let cloud = io::read_velodyne::<R>(&a.input)?;
            let (img, map) = build_range_image(&cloud, &cfg.projection)?;
            io::write_range_image(&a.output, &img)?;
            report.add("points", cloud.len());
            report.add("valid_pixels", img.valid_count());
            report.add("dropped_points", cloud.len() - map.count(PointStatus::Kept));
        }
        ("rgrd", "bin") => {
            let img = io::read_range_image::<R>(&a.input)?;
            let cloud = unproject(&img);
            io::write_velodyne(&a.output, &cloud)?;
            report.add("points", cloud.len());
        }
        (i, o) => return Err(usage(format!("cannot convert .{i} to .{o}; use .bin <-> .rgrd"))),
    }
    report.add("output", a.output.display());
    Ok(())
}

fn cmd_project(cli: &Cli, cfg: &PipelineConfig<R>, a: &ScanArgs, report: &mut Report) -> Result<()> {
    let cloud = io::read_velodyne::<R>(&a.input)?;
    let (img, map) = build_range_image(&cloud, &cfg.projection)?;
    img.check_consistency(1e-4)?;
    report.add("height", img.height());
    report.add("width", img.width());
    report.add("channels", img.num_channels());
    report.add("points", cloud.len());
    report.add("kept", map.count(PointStatus::Kept));
    report.add("occluded", map.count(PointStatus::Occluded));
    report.add("out_of_view", map.count(PointStatus::OutOfView));
    report.add("valid_pixels", img.valid_count());
    if let Some(dir) = &cli.out {
        ensure_dir(dir)?;
        io::write_range_image(&dir.join("image.rgrd"), &img)?;
        let mut text = String::new();
        for i in 0..map.num_points() {
            match map.pixel_of(i) {
                Some((u, v)) => text.push_str(&format!("{u} {v} {:?}\n", map.status(i))),
                None => text.push_str(&format!("- - {:?}\n", map.status(i))),
            }
        }
        let path = dir.join("pixels.txt");
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn read_labels(path: Option<&Path>) -> Result<Vec<GroundTruth<R>>> {
    path.map_or(Ok(Vec::new()), io::read_ground_truths)
}

fn cmd_augment(cli: &Cli, cfg: &PipelineConfig<R>, a: &AugmentArgs, report: &mut Report) -> Result<()> {
    let dir = out_dir(cli)?;
    ensure_dir(dir)?;
    let cloud = io::read_velodyne::<R>(&a.input)?;
    let gts = read_labels(a.labels.as_deref())?;
    let boxes: Vec<_> = gts.iter().map(|g| g.bbox).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    if let Some(bank_dir) = &a.save_bank {
        let (image, _) = build_range_image(&cloud, &cfg.projection)?;
        let labels = gts.iter().filter(|g| !g.dont_care).map(|g| ObjectLabel::new(g.bbox, g.class.clone())).collect();
        let bank = build_object_bank(&[LabeledFrame { image, labels }])?;
        bank.save(bank_dir)?;
        report.add("bank_entries", bank.len());
    }

    let (cloud, boxes, t) = random_global_augment(&cloud, &boxes, &mut rng, &cfg.augment)?;
    report.add("flipped", t.flipped);
    report.add("rotation", format!("{:.6}", t.rotation));
    report.add("scale", format!("{:.6}", t.scale));
    let (mut image, _) = build_range_image(&cloud, &cfg.projection)?;
    let mut labels: Vec<ObjectLabel<R>> =
        boxes.iter().zip(&gts).map(|(b, g)| ObjectLabel::new(*b, g.class.clone())).collect();
    if let Some(bank_dir) = &a.bank {
        let bank = ObjectBank::<R>::load(bank_dir)?;
        let (img, l, stats) = cut_and_paste(&image, &labels, &bank, &mut rng, &cfg.augment)?;
        image = img;
        labels = l;
        report.add("pasted", stats.pasted);
        report.add("paste_rejected", stats.rejected_overlap);
        report.add("paste_pixels_written", stats.pixels_written);
    }
    image.check_consistency(1e-4)?;
    io::write_range_image(&dir.join("augmented.rgrd"), &image)?;
    io::write_velodyne(&dir.join("augmented.bin"), &unproject(&image))?;
    let out_gts: Vec<GroundTruth<R>> = labels.iter().map(|l| GroundTruth::new(l.bbox, l.class.clone())).collect();
    io::write_ground_truths(&dir.join("augmented_labels.txt"), &out_gts)?;
    report.add("valid_pixels", image.valid_count());
    report.add("labels", labels.len());
    Ok(())
}

fn cmd_pool(cli: &Cli, cfg: &PipelineConfig<R>, a: &PoolArgs, report: &mut Report) -> Result<()> {
    let cloud = io::read_velodyne::<R>(&a.input)?;
    let proposals: Vec<_> = io::read_detections::<R>(&a.proposals)?.iter().map(|d| d.bbox).collect();
    let (image, map) = build_range_image(&cloud, &cfg.projection)?;
    let frame = Frame {
        id: "pool".into(),
        cloud: cloud.clone(),
        labels: Vec::new(),
    };
    let ctx = FrameContext {
        index: 0,
        seed: cfg.seed,
        frame: &frame,
        config: cfg,
    };
    let features = Injector::Oracle.feature_map(&ctx, &image, cfg.roi.channels)?;
    let pts = gather_point_features(features.view(), &map, &cloud)?;
    let pooled = roi_max_pool_batch(&pts.positions, pts.features.view(), &proposals, &cfg.roi)?;
    report.add("proposals", pooled.len());
    report.add("grid", cfg.roi.grid);
    report.add("channels", cfg.roi.channels);
    report.add("values_per_roi", cfg.roi.output_len());
    for (k, p) in pooled.iter().enumerate() {
        let c = cfg.roi.channels;
        let filled = p.values.chunks(c).filter(|cell| cell.iter().any(|&v| v != 0.0)).count();
        report.add(format!("roi{k}.nonzero_cells"), filled);
    }
    if let Some(dir) = &cli.out {
        ensure_dir(dir)?;
        let path = dir.join("pooled.roip");
        std::fs::write(&path, io::encode_pooled(&pooled)).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn cmd_eval(cfg: &PipelineConfig<R>, a: &EvalArgs, report: &mut Report) -> Result<()> {
    let frames: Vec<EvalFrame<R>> = io::load_eval_frames(&a.manifest)?.into_iter().map(|(_, f)| f).collect();
    let class = a.class.clone().unwrap_or_else(|| cfg.pipeline.class.clone());
    report.add("frames", frames.len());
    let rows = match a.metric {
        Metric::Plain => vec![evaluate_class(&frames, &class, &cfg.eval)?],
        Metric::Kitti => evaluate_kitti(&frames, &class, &cfg.eval)?,
        Metric::Waymo => evaluate_waymo(&frames, &class, &cfg.eval)?,
    };
    for row in &rows {
        report.metrics(row);
    }
    Ok(())
}

fn load_kitti_root(root: &Path, ids: Option<&Path>) -> Result<Vec<Frame<R>>> {
    let ids: Vec<String> = match ids {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        None => {
            let velo = root.join("velodyne");
            let mut ids: Vec<String> = std::fs::read_dir(&velo)
                .map_err(|e| Error::Io { path: velo.clone(), source: e })?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| extension(p) == "bin")
                .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(String::from))
                .collect();
            ids.sort();
            ids
        }
    };
    ids.iter()
        .map(|id| {
            let label = root.join("label_2").join(format!("{id}.txt"));
            let calib = root.join("calib").join(format!("{id}.txt"));
            io::load_kitti_frame(
                id,
                &root.join("velodyne").join(format!("{id}.bin")),
                label.exists().then_some(label.as_path()),
                calib.exists().then_some(calib.as_path()),
            )
            .map(Frame::from)
        })
        .collect()
}

fn cmd_pipeline(cli: &Cli, cfg: &PipelineConfig<R>, a: &PipelineArgs, report: &mut Report) -> Result<()> {
    let frames = match (&a.synthetic, &a.kitti_root) {
        (Some(n), None) => {
            let mut synth = match cfg.dataset {
                rangekit::config::Dataset::Kitti => SyntheticConfig::kitti(),
                rangekit::config::Dataset::Waymo => SyntheticConfig::waymo(),
            };
            synth.class = cfg.pipeline.class.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..*n).map(|i| synthetic_frame(&format!("{i:06}"), &synth, &mut rng)).collect()
        }
        (None, Some(root)) => load_kitti_root(root, a.ids.as_deref())?,
        _ => return Err(usage("pipeline needs --synthetic N or --kitti-root DIR")),
    };
    let run = run_pipeline(&frames, cfg, &a.injector, a.artifacts)?;
    report.add("injector", a.injector);
    report.add("frames", run.frames.len());
    for f in &run.frames {
        let s = &f.stats;
        report.add(format!("frame.{}.proposals", f.id), s.proposals);
        report.add(format!("frame.{}.detections", f.id), s.detections);
    }
    report.metrics(&run.metrics);
    if let Some(dir) = &cli.out {
        ensure_dir(dir)?;
        for f in &run.frames {
            export_frame(dir, f)?;
        }
        if a.artifacts {
            for f in &frames {
                io::write_velodyne(&dir.join(format!("{}.bin", f.id)), &f.cloud)?;
                io::write_ground_truths(&dir.join(format!("{}.gt.txt", f.id)), &f.labels)?;
            }
        }
        let path = dir.join("metrics.txt");
        let mut m = Report::default();
        m.metrics(&run.metrics);
        std::fs::write(&path, m.render(Format::Kv)).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn cmd_viz(cli: &Cli, cfg: &PipelineConfig<R>, a: &VizArgs, report: &mut Report) -> Result<()> {
    let dir = out_dir(cli)?;
    let cloud = io::read_velodyne::<R>(&a.input)?;
    let gts: Vec<_> = read_labels(a.labels.as_deref())?.iter().map(|g| g.bbox).collect();
    let dets: Vec<_> = match &a.detections {
        Some(p) => io::read_detections::<R>(p)?.iter().map(|d| d.bbox).collect(),
        None => Vec::new(),
    };
    let stem = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("scan");
    viz::viz_export(dir, stem, &cloud, &gts, &dets, &cfg.bev)?;
    let (nx, ny) = cfg.bev.grid_size();
    report.add("ply", dir.join(format!("{stem}.ply")).display());
    report.add("ppm", dir.join(format!("{stem}.ppm")).display());
    report.add("raster", format!("{nx}x{ny}"));
    Ok(())
}

fn run(cli: &Cli) -> Result<Report> {
    let cfg = load_config(cli)?;
    let mut report = Report::default();
    match &cli.command {
        Command::Convert(a) => cmd_convert(&cfg, a, &mut report)?,
        Command::Project(a) => cmd_project(cli, &cfg, a, &mut report)?,
        Command::Augment(a) => cmd_augment(cli, &cfg, a, &mut report)?,
        Command::Pool(a) => cmd_pool(cli, &cfg, a, &mut report)?,
        Command::Eval(a) => cmd_eval(&cfg, a, &mut report)?,
        Command::Pipeline(a) => cmd_pipeline(cli, &cfg, a, &mut report)?,
        Command::Viz(a) => cmd_viz(cli, &cfg, a, &mut report)?,
    }
    Ok(report)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            print!("{}", report.render(cli.format));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
