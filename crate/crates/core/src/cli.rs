//! Batch command-line front end.
//!
//! Exit codes: 0 ok, 2 config or usage error, 3 data error, 4 internal.
//! Errors are printed to stderr as one JSON object.

use crate::bevfusion::{cfs_forward, voxel_pool, VoxelFeature};
use crate::binning::BinEdges;
use crate::config::{Config, ConfigError};
use crate::distill::{gaussian_mask, loss_high, loss_low, parse_soft_labels, response_loss, total_loss, AdapterWeights, LossReport};
use crate::geometry::CameraRig;
use crate::lifting::{build_context, encode_camera, lift_frustum, predict_distributions, FrustumCloud, LiftMode};
use crate::oracle::{
    height_sweep, range_sweep, robustness_sweep, robustness_table, run_pipeline, synth_scene, PipelineMode, Scene,
    SweepRow,
};
use crate::report::Table;
use crate::tensor::{load_cbt1, save_cbt1, Tensor};
use crate::weights::WeightStore;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const THREADS_ENV: &str = "COBEV_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Internal(_) => "internal",
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "bevlift", version, about = "Depth/height BEV lifting, pooling, fusion and synthetic oracles")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config; every field is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; falls back to COBEV_THREADS, then the config.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Depth,
    Height,
}

impl From<ModeArg> for LiftMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Depth => LiftMode::Depth,
            ModeArg::Height => LiftMode::Height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PipelineModeArg {
    Fused,
    DepthOnly,
    HeightOnly,
}

impl From<PipelineModeArg> for PipelineMode {
    fn from(m: PipelineModeArg) -> Self {
        match m {
            PipelineModeArg::Fused => PipelineMode::Fused,
            PipelineModeArg::DepthOnly => PipelineMode::DepthOnly,
            PipelineModeArg::HeightOnly => PipelineMode::HeightOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Range,
    Height,
    Noise,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes depth_bins.csv and height_bins.csv (index, lower, upper, center, width).
    Bins,
    /// Lifts a context and a distribution into a frustum point cloud.
    ///
    /// Give either --context with --dist, or --features to run the toy head.
    /// Writes <mode>_coords.cbt1, <mode>_feats.cbt1, <mode>_mask.cbt1 and <mode>_lift.json.
    Lift {
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Context `[C, Hf, Wf]`.
        #[arg(long, requires = "dist", conflicts_with = "features")]
        context: Option<PathBuf>,
        /// Distribution `[N, Hf, Wf]`.
        #[arg(long, requires = "context")]
        dist: Option<PathBuf>,
        /// Image features `[C_feat, Hf, Wf]` for the toy head.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Pools a lifted frustum into `[Zc, C, Y, X]` voxels.
    ///
    /// Writes <mode>_voxels.cbt1 and <mode>_pool.json.
    Pool {
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Points `[N, Hf, Wf, 3]` from `lift`
        #[arg(long)]
        coords: PathBuf,
        /// Features `[N, C, Hf, Wf]`
        #[arg(long)]
        feats: PathBuf,
        /// Validity mask `[N, Hf, Wf]`, 0 or 1
        #[arg(long)]
        mask: PathBuf,
    },
    /// Fuses depth and height voxels. Writes bev.cbt1, a1.cbt1, a2.cbt1 and fuse.json.
    Fuse {
        /// Depth-branch voxels `[Zc, C, Y, X]`
        #[arg(long)]
        depth: PathBuf,
        /// Height-branch voxels, same shape
        #[arg(long)]
        height: PathBuf,
    },
    /// Ground-truth pipeline on a scene file or a synthesized scene.
    ///
    /// Writes bev.cbt1, metrics.json and scene.json.
    Pipeline {
        /// `{"boxes": [[x, y, z, l, w, h, theta], ...]}`; synthesized from the seed when absent.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "fused")]
        mode: PipelineModeArg,
    },
    /// Writes a plot-ready sweep CSV.
    ///
    /// range  -> sweep_range.csv: distance, cam_height, depth_true, depth_quantized,
    ///           depth_error, depth_bound, height_true, height_quantized, height_error, height_bound
    /// height -> sweep_height.csv: cam_height, distance, height_error, height_bound,
    ///           error_increase, depth_error, depth_bound
    /// noise  -> sweep_noise.csv: factors, trials, mean_iou, std_iou, min_iou, max_iou
    ///           and noise_trials.csv: factors, trial, iou
    #[command(verbatim_doc_comment)]
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
        /// Monte-Carlo trials for the noise sweep; overrides the config.
        #[arg(long)]
        trials: Option<usize>,
        /// Scene for the noise sweep; synthesized from the seed when absent.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Distillation losses between teacher and student BEV features `[C, Y, X]`.
    ///
    /// Writes distill.json with l_low, l_high, l_res and l_total.
    Distill {
        /// Teacher low-level features
        #[arg(long)]
        teacher: PathBuf,
        /// Student low-level features
        #[arg(long)]
        student: PathBuf,
        /// Boxes that define the foreground mask.
        #[arg(long)]
        scene: PathBuf,
        /// Adapter weight-store directory, overriding the config.
        #[arg(long)]
        adapter: Option<PathBuf>,
        /// High-level features; the low-level pair is reused when absent.
        #[arg(long, requires = "student_high")]
        teacher_high: Option<PathBuf>,
        #[arg(long, requires = "teacher_high")]
        student_high: Option<PathBuf>,
        /// Teacher soft labels, JSON lines.
        #[arg(long, requires = "student_labels")]
        teacher_labels: Option<PathBuf>,
        /// Student predictions in the same format; scores are ignored.
        #[arg(long, requires = "teacher_labels")]
        student_labels: Option<PathBuf>,
        /// Detection loss computed elsewhere.
        #[arg(long)]
        l_det: Option<f64>,
    },
}

fn resolve_threads(flag: Option<usize>, cfg: &Config) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(cfg.threads),
    }
}

/// Loads the config and applies flag overrides.
pub fn effective_config(g: &GlobalArgs) -> Result<Config, CliError> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    cfg.threads = resolve_threads(g.threads, &cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

struct Out<'a> {
    dir: &'a Path,
}

impl Out<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn tensor(&self, name: &str, t: &Tensor) -> Result<(), CliError> {
        save_cbt1(self.path(name), t).map_err(|e| CliError::Internal(format!("writing {name}: {e}")))
    }

    fn json(&self, name: &str, v: &impl Serialize) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))?;
        s.push('\n');
        self.text(name, &s)
    }

    fn text(&self, name: &str, s: &str) -> Result<(), CliError> {
        std::fs::write(self.path(name), s).map_err(|e| CliError::Internal(format!("writing {name}: {e}")))
    }

    fn csv(&self, name: &str, t: &Table) -> Result<(), CliError> {
        self.text(name, &t.to_csv_string())
    }
}

fn read_tensor(p: &Path) -> Result<Tensor, CliError> {
    load_cbt1(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn read_text(p: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn load_scene(path: Option<&Path>, cfg: &Config, rig: CameraRig) -> Result<Scene, CliError> {
    match path {
        Some(p) => Scene::from_json(&read_text(p)?, rig, cfg.image).map_err(|e| data(format!("{}: {e}", p.display()))),
        None => synth_scene(cfg.seed, cfg.scene.n_boxes, &rig, cfg.image, &cfg.grid).map_err(data),
    }
}

fn mode_name(m: LiftMode) -> String {
    m.to_string()
}

fn edges_for(cfg: &Config, m: LiftMode) -> BinEdges {
    match m {
        LiftMode::Depth => cfg.depth_bins.edges(),
        LiftMode::Height => cfg.height_bins.edges(),
    }
}

fn bins_table(e: &BinEdges) -> Table {
    let mut t = Table::new(&["index", "lower", "upper", "center", "width"]);
    let s = e.as_slice();
    for (i, c) in e.centers().into_iter().enumerate() {
        t.push(vec![i.into(), s[i].into(), s[i + 1].into(), c.into(), (s[i + 1] - s[i]).into()]);
    }
    t
}

#[derive(Serialize)]
struct LiftSummary {
    mode: LiftMode,
    n_bins: usize,
    channels: usize,
    feature_height: usize,
    feature_width: usize,
    points: usize,
    valid: usize,
    dropped: usize,
    valid_fraction: f64,
}

fn cmd_lift(
    cfg: &Config,
    out: &Out,
    mode: LiftMode,
    context: Option<&Path>,
    dist: Option<&Path>,
    features: Option<&Path>,
) -> Result<(), CliError> {
    let rig = cfg.rig()?;
    let (ctx, dist) = match (context, dist, features) {
        (Some(c), Some(d), None) => (read_tensor(c)?, read_tensor(d)?),
        (None, None, Some(f)) => {
            let feat = read_tensor(f)?;
            let w = cfg.head_weights()?;
            let f_cam = encode_camera(&rig, &w).map_err(data)?;
            let (dd, hd) = predict_distributions(&feat, &f_cam, &w).map_err(data)?;
            let ctx = build_context(&feat, &f_cam, &w).map_err(data)?;
            (ctx, if mode == LiftMode::Depth { dd } else { hd })
        }
        _ => return Err(CliError::Usage("give --context with --dist, or --features".into())),
    };
    let edges = edges_for(cfg, mode);
    let cloud = lift_frustum(&ctx, &dist, &rig, &edges, mode, cfg.downsample as f64).map_err(data)?;
    let name = mode_name(mode);
    out.tensor(&format!("{name}_coords.cbt1"), &cloud.coords)?;
    out.tensor(&format!("{name}_feats.cbt1"), &cloud.feats)?;
    out.tensor(&format!("{name}_mask.cbt1"), &cloud.mask_tensor())?;
    let (h, w) = cloud.spatial();
    let points = cloud.mask.len();
    let valid = cloud.valid_count();
    let summary = LiftSummary {
        mode,
        n_bins: cloud.n_bins(),
        channels: cloud.channels(),
        feature_height: h,
        feature_width: w,
        points,
        valid,
        dropped: points - valid,
        valid_fraction: if points == 0 { 0.0 } else { valid as f64 / points as f64 },
    };
    out.json(&format!("{name}_lift.json"), &summary)?;
    println!("{name}: {valid} of {points} frustum points valid");
    Ok(())
}

fn cmd_pool(cfg: &Config, out: &Out, mode: LiftMode, coords: &Path, feats: &Path, mask: &Path) -> Result<(), CliError> {
    let cloud = FrustumCloud::from_parts(read_tensor(coords)?, read_tensor(feats)?, &read_tensor(mask)?, mode).map_err(data)?;
    let (vox, stats) = voxel_pool(&cloud, &cfg.grid);
    let name = mode_name(mode);
    out.tensor(&format!("{name}_voxels.cbt1"), &vox.data)?;
    out.json(&format!("{name}_pool.json"), &stats)?;
    println!("{name}: pooled {} points into {} BEV cells", stats.pooled, stats.cells_hit);
    Ok(())
}

#[derive(Serialize)]
struct FuseSummary {
    bev_shape: Vec<usize>,
    a1_range: [f32; 2],
    a2_range: [f32; 2],
    weights_seed: Option<u64>,
}

fn range_of(t: &Tensor) -> [f32; 2] {
    t.data()
        .iter()
        .fold([f32::INFINITY, f32::NEG_INFINITY], |[lo, hi], &v| [lo.min(v), hi.max(v)])
}

fn cmd_fuse(cfg: &Config, out: &Out, depth: &Path, height: &Path) -> Result<(), CliError> {
    let fd = VoxelFeature::new(read_tensor(depth)?, cfg.grid).map_err(data)?;
    let fh = VoxelFeature::new(read_tensor(height)?, cfg.grid).map_err(data)?;
    let w = cfg.cfs_weights()?;
    let o = cfs_forward(&fd, &fh, &w).map_err(data)?;
    out.tensor("bev.cbt1", &o.bev)?;
    out.tensor("a1.cbt1", &o.a1)?;
    out.tensor("a2.cbt1", &o.a2)?;
    out.json(
        "fuse.json",
        &FuseSummary {
            bev_shape: o.bev.shape().to_vec(),
            a1_range: range_of(&o.a1),
            a2_range: range_of(&o.a2),
            weights_seed: w.seed,
        },
    )?;
    println!("fused BEV {:?}", o.bev.shape());
    Ok(())
}

fn cmd_pipeline(cfg: &Config, out: &Out, scene: Option<&Path>, mode: PipelineMode) -> Result<(), CliError> {
    let scene = load_scene(scene, cfg, cfg.rig()?)?;
    let spec = cfg.pipeline_spec(mode);
    let w = cfg.cfs_weights()?;
    let o = run_pipeline(&scene, &spec, &w).map_err(data)?;
    out.tensor("bev.cbt1", &o.bev)?;
    out.json("metrics.json", &o.metrics)?;
    out.text("scene.json", &(scene.boxes_json() + "\n"))?;
    match o.metrics.iou {
        Some(v) => println!("{}: {} boxes, occupancy IoU {v:.4}", mode.name(), scene.boxes.len()),
        None => println!("{}: no boxes, occupancy IoU undefined", mode.name()),
    }
    Ok(())
}

fn sweep_pairs<'a>(depth: &'a [SweepRow], height: &'a [SweepRow]) -> impl Iterator<Item = (SweepRow, SweepRow)> + 'a {
    depth.iter().copied().zip(height.iter().copied())
}

fn cmd_sweep(cfg: &Config, out: &Out, kind: SweepKind, trials: Option<usize>, scene: Option<&Path>) -> Result<(), CliError> {
    let geo = |e| CliError::Data(format!("sweep geometry: {e}"));
    match kind {
        SweepKind::Range => {
            let rig = cfg.rig()?;
            let ds = &cfg.sweep.distances;
            let d = range_sweep(&rig, ds, LiftMode::Depth, &cfg.depth_bins.edges()).map_err(geo)?;
            let h = range_sweep(&rig, ds, LiftMode::Height, &cfg.height_bins.edges()).map_err(geo)?;
            let mut t = Table::new(&[
                "distance",
                "cam_height",
                "depth_true",
                "depth_quantized",
                "depth_error",
                "depth_bound",
                "height_true",
                "height_quantized",
                "height_error",
                "height_bound",
            ]);
            for (a, b) in sweep_pairs(&d, &h) {
                t.push(vec![
                    a.distance.into(),
                    a.cam_height.into(),
                    a.true_value.into(),
                    a.quantized_value.into(),
                    a.placement_error.into(),
                    a.bound.into(),
                    b.true_value.into(),
                    b.quantized_value.into(),
                    b.placement_error.into(),
                    b.bound.into(),
                ]);
            }
            out.csv("sweep_range.csv", &t)?;
            println!("range sweep: {} rows", t.rows.len());
        }
        SweepKind::Height => {
            cfg.check_sweep_rigs()?;
            let k = cfg.sweep_intrinsics()?;
            let s = &cfg.sweep;
            let run = |m, e: &BinEdges| height_sweep(k, s.pitch_deg, &s.cam_heights, s.height_sweep_distance, m, e);
            let d = run(LiftMode::Depth, &cfg.depth_bins.edges()).map_err(geo)?;
            let h = run(LiftMode::Height, &cfg.height_bins.edges()).map_err(geo)?;
            let mut t = Table::new(&[
                "cam_height",
                "distance",
                "height_error",
                "height_bound",
                "error_increase",
                "depth_error",
                "depth_bound",
            ]);
            let mut prev: Option<f64> = None;
            for (a, b) in sweep_pairs(&d, &h) {
                let inc = prev.map_or(0.0, |p| b.placement_error - p);
                prev = Some(b.placement_error);
                t.push(vec![
                    b.cam_height.into(),
                    b.distance.into(),
                    b.placement_error.into(),
                    b.bound.into(),
                    inc.into(),
                    a.placement_error.into(),
                    a.bound.into(),
                ]);
            }
            out.csv("sweep_height.csv", &t)?;
            println!("camera-height sweep: {} rows", t.rows.len());
        }
        SweepKind::Noise => {
            let n = trials.unwrap_or(cfg.noise.trials);
            if n == 0 {
                return Err(CliError::Usage("noise sweep needs at least one trial".into()));
            }
            let scene = load_scene(scene, cfg, cfg.rig()?)?;
            let spec = cfg.pipeline_spec(PipelineMode::Fused);
            let rows = robustness_sweep(&scene, &spec, &cfg.cfs_weights()?, &cfg.noise_spec(), n).map_err(data)?;
            out.csv("sweep_noise.csv", &robustness_table(&rows))?;
            let mut per = Table::new(&["factors", "trial", "iou"]);
            for r in &rows {
                for (k, &v) in r.ious.iter().enumerate() {
                    per.push(vec![r.factors.as_str().into(), k.into(), v.into()]);
                }
            }
            out.csv("noise_trials.csv", &per)?;
            for r in &rows {
                println!("{:>6}: mean IoU {:.4} over {} trials", r.factors, r.mean_iou, r.trials);
            }
        }
    }
    Ok(())
}

struct DistillInputs<'a> {
    teacher: &'a Path,
    student: &'a Path,
    scene: &'a Path,
    adapter: Option<&'a Path>,
    high: Option<(&'a Path, &'a Path)>,
    labels: Option<(&'a Path, &'a Path)>,
    l_det: Option<f64>,
}

fn cmd_distill(cfg: &Config, out: &Out, a: DistillInputs) -> Result<(), CliError> {
    let teacher = read_tensor(a.teacher)?;
    let student = read_tensor(a.student)?;
    let scene = Scene::from_json(&read_text(a.scene)?, cfg.rig()?, cfg.image).map_err(|e| data(format!("{}: {e}", a.scene.display())))?;
    let mask = gaussian_mask(&scene.boxes, &cfg.grid);
    let adapter = match a.adapter.map(Path::to_path_buf).or_else(|| cfg.adapter.clone()) {
        Some(dir) => {
            let store = WeightStore::load_dir(&dir).map_err(|e| data(format!("adapter {}: {e}", dir.display())))?;
            Some(AdapterWeights::from_store(store).map_err(|e| data(format!("adapter {}: {e}", dir.display())))?)
        }
        None => None,
    };
    let l_low = loss_low(&teacher, &student, &mask, adapter.as_ref()).map_err(data)?;
    let l_high = match a.high {
        Some((t, s)) => loss_high(&read_tensor(t)?, &read_tensor(s)?, &mask).map_err(data)?,
        None => loss_high(&teacher, &student, &mask).map_err(data)?,
    };
    let l_res = match a.labels {
        Some((t, s)) => {
            let tl = parse_soft_labels(&read_text(t)?).map_err(|e| data(format!("{}: {e}", t.display())))?;
            let sl = parse_soft_labels(&read_text(s)?).map_err(|e| data(format!("{}: {e}", s.display())))?;
            let boxes: Vec<[f64; 7]> = sl.iter().map(|l| l.bbox).collect();
            let cls: Vec<Vec<f64>> = sl.into_iter().map(|l| l.cls).collect();
            response_loss(&tl, &boxes, &cls).map_err(data)?
        }
        None => 0.0,
    };
    let l_total = total_loss(a.l_det, l_low, l_high, l_res).map_err(data)?;
    let report = LossReport {
        l_low,
        l_high,
        l_res,
        l_total,
    };
    out.json("distill.json", &report)?;
    println!("l_low {l_low:.6e}  l_high {l_high:.6e}  l_res {l_res:.6e}  l_total {l_total:.6e}");
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli.global)?;
    if let Some(n) = cfg.threads {
        // a pool built earlier in this process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::Internal(format!("creating {}: {e}", cfg.out.display())))?;
    let out = Out { dir: &cfg.out };
    match &cli.command {
        Command::Bins => {
            let (d, h) = (cfg.depth_bins.edges(), cfg.height_bins.edges());
            out.csv("depth_bins.csv", &bins_table(&d))?;
            out.csv("height_bins.csv", &bins_table(&h))?;
            println!("depth: {} edges over [{}, {}]", d.as_slice().len(), d.lo(), d.hi());
            println!("height: {} edges over [{}, {}]", h.as_slice().len(), h.lo(), h.hi());
            Ok(())
        }
        Command::Lift {
            mode,
            context,
            dist,
            features,
        } => cmd_lift(&cfg, &out, (*mode).into(), context.as_deref(), dist.as_deref(), features.as_deref()),
        Command::Pool { mode, coords, feats, mask } => cmd_pool(&cfg, &out, (*mode).into(), coords, feats, mask),
        Command::Fuse { depth, height } => cmd_fuse(&cfg, &out, depth, height),
        Command::Pipeline { scene, mode } => cmd_pipeline(&cfg, &out, scene.as_deref(), (*mode).into()),
        Command::Sweep { kind, trials, scene } => cmd_sweep(&cfg, &out, *kind, *trials, scene.as_deref()),
        Command::Distill {
            teacher,
            student,
            scene,
            adapter,
            teacher_high,
            student_high,
            teacher_labels,
            student_labels,
            l_det,
        } => cmd_distill(
            &cfg,
            &out,
            DistillInputs {
                teacher,
                student,
                scene,
                adapter: adapter.as_deref(),
                high: teacher_high.as_deref().zip(student_high.as_deref()),
                labels: teacher_labels.as_deref().zip(student_labels.as_deref()),
                l_det: *l_det,
            },
        ),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        assert_eq!(CliError::Data(String::new()).exit_code(), 3);
        assert_eq!(CliError::Internal(String::new()).exit_code(), 4);
        assert_eq!(main_with(["bevlift", "nope"]), 2);
        assert_eq!(main_with(["bevlift", "--help"]), 0);
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, "{\"seed\": 1, \"out\": \"a\"}").unwrap();
        let g = GlobalArgs {
            config: Some(p),
            seed: Some(9),
            out: Some(PathBuf::from("b")),
            threads: Some(1),
        };
        let c = effective_config(&g).unwrap();
        assert_eq!((c.seed, c.out, c.threads), (9, PathBuf::from("b"), Some(1)));
    }
}
