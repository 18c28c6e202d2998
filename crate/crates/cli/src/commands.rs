use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use graspkit::avh::{ground_truth_avh, random_avh, AngleViewHeatmap, AvhDims};
use graspkit::camera::{backproject, DepthImage, GridMap, Intrinsics, PointCloud};
use graspkit::eval::{evaluate, EvalConfig, FrictionSet};
use graspkit::fas::{
    detect_timed, DetectConfig, DetectTimings, Detection, FasConfig, GripperConfig,
};
use graspkit::geometry::OrientationTable;
use graspkit::io::{
    load_records, records_to_annotations, records_to_detections, write_gripper_obj, write_records,
    GraspRecord,
};
use graspkit::nms::{gpnms, gpnms_indices, NmsConfig};
use graspkit::par::Execution;
use graspkit::scenegen::{oracle_grasps, render_depth, sample_surface_cloud, SyntheticScene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::parse_csv_f64;
use crate::Ctx;

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Pixels per heatmap cell.
    #[arg(long)]
    stride: Option<usize>,
    /// Approach views in the orientation table.
    #[arg(long)]
    views: Option<usize>,
    /// In-plane angles per view.
    #[arg(long)]
    angles: Option<usize>,
}

impl GridArgs {
    fn resolve(&self, ctx: &mut Ctx, intr: &Intrinsics) -> Result<(OrientationTable, GridMap)> {
        let stride = ctx.resolver.get("stride", self.stride, 4usize)?;
        let views = ctx
            .resolver
            .get("views", self.views, graspkit::geometry::DEFAULT_VIEWS)?;
        let angles = ctx
            .resolver
            .get("angles", self.angles, graspkit::geometry::DEFAULT_ANGLES)?;
        Ok((
            OrientationTable::new(views, angles)?,
            GridMap::for_intrinsics(stride, intr)?,
        ))
    }
}

#[derive(Debug, Args)]
pub struct NmsArgsShared {
    /// Translation radius (m).
    #[arg(long)]
    nms_trans: Option<f64>,
    /// Rotation radius (degrees).
    #[arg(long)]
    nms_rot_deg: Option<f64>,
}

impl NmsArgsShared {
    fn resolve(&self, ctx: &mut Ctx) -> Result<NmsConfig> {
        let d = NmsConfig::default();
        let cfg = NmsConfig {
            t_trans: ctx.resolver.get("nms_trans", self.nms_trans, d.t_trans)?,
            t_rot: ctx
                .resolver
                .get("nms_rot_deg", self.nms_rot_deg, d.t_rot.to_degrees())?
                .to_radians(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Writes to `--out` (recorded as an output) or stdout.
fn emit(ctx: &mut Ctx, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match ctx.out().map(Path::to_path_buf) {
        Some(path) => {
            create_parent(&path)?;
            let f =
                fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = std::io::BufWriter::new(f);
            write(&mut w)?;
            w.flush()?;
            ctx.manifest.output(&path);
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

fn load_depth(ctx: &mut Ctx, path: &Path) -> Result<DepthImage> {
    ctx.manifest.input("depth", path);
    let depth = ctx.manifest.time("load", || DepthImage::load_pgm(path));
    depth.with_context(|| format!("reading depth {}", path.display()))
}

fn load_grasps(ctx: &mut Ctx, path: &Path) -> Result<Vec<Detection>> {
    ctx.manifest.input("grasps", path);
    let records = ctx.manifest.time("load", || load_records(path));
    let records = records.with_context(|| format!("reading grasps {}", path.display()))?;
    Ok(records_to_detections(&records)?)
}

fn intrinsics(ctx: &mut Ctx) -> Result<Intrinsics> {
    let flag = ctx.shared.intrinsics.clone();
    let (intr, path) = ctx.resolver.intrinsics(flag.as_deref())?;
    if let Some(p) = path {
        ctx.manifest.input("intrinsics", &p);
    }
    Ok(intr)
}

fn gripper(ctx: &mut Ctx) -> Result<GripperConfig> {
    let flag = ctx.shared.gripper.clone();
    ctx.resolver.gripper(flag.as_deref())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Render this scene JSON instead of generating one.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Number of objects in a generated scene.
    #[arg(long)]
    objects: Option<usize>,
    /// Surface sampling density of the written cloud (points/m²).
    #[arg(long)]
    density: Option<f64>,
    /// Oracle grasps kept per object.
    #[arg(long)]
    per_object: Option<usize>,
}

pub fn synth(ctx: &mut Ctx, a: SynthArgs) -> Result<()> {
    let Some(dir) = ctx.out().map(Path::to_path_buf) else {
        bail!("synth needs --out <dir>");
    };
    let intr = intrinsics(ctx)?;
    let g = gripper(ctx)?;
    let seed = ctx.seed(0)?;
    let objects = ctx.resolver.get("objects", a.objects, 5usize)?;
    let density = ctx.resolver.get("density", a.density, 1e5)?;
    let per_object = ctx.resolver.get("per_object", a.per_object, 10usize)?;

    // One generator per run; each stage draws its own sub-seed from it.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (scene_seed, cloud_seed, oracle_seed): (u64, u64, u64) =
        (rng.random(), rng.random(), rng.random());

    let scene = match &a.scene {
        Some(p) => {
            ctx.manifest.input("scene", p);
            SyntheticScene::load(p).with_context(|| format!("reading scene {}", p.display()))?
        }
        None => ctx.manifest.time("scene", || {
            SyntheticScene::random(scene_seed, objects, &intr)
        })?,
    };
    let depth = ctx.manifest.time("render", || {
        render_depth(&scene, &intr, Execution::default())
    })?;
    let cloud = ctx.manifest.time("sample", || {
        sample_surface_cloud(&scene, density, cloud_seed)
    })?;
    let oracle = ctx.manifest.time("oracle", || {
        oracle_grasps(&scene, &g, per_object, oracle_seed)
    })?;

    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = |name: &str| dir.join(name);
    scene.save(path("scene.json"))?;
    depth.save_pgm(path("depth.pgm"))?;
    cloud.save_xyz(path("cloud.xyz"))?;
    fs::write(
        path("intrinsics.json"),
        serde_json::to_string_pretty(&intr)? + "\n",
    )?;
    let records: Vec<GraspRecord> = oracle.iter().map(GraspRecord::from).collect();
    graspkit::io::save_records(path("annotations.jsonl"), &records)?;
    for name in [
        "scene.json",
        "depth.pgm",
        "cloud.xyz",
        "intrinsics.json",
        "annotations.jsonl",
    ] {
        ctx.manifest.output(&path(name));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct GtAvhArgs {
    /// Annotations as grasp JSON Lines.
    #[arg(long)]
    annotations: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
}

pub fn gt_avh(ctx: &mut Ctx, a: GtAvhArgs) -> Result<()> {
    let Some(out) = ctx.out().map(Path::to_path_buf) else {
        bail!("gt-avh needs --out <file>");
    };
    let intr = intrinsics(ctx)?;
    let (table, grid) = a.grid.resolve(ctx, &intr)?;
    ctx.manifest.input("annotations", &a.annotations);
    let records = load_records(&a.annotations)
        .with_context(|| format!("reading {}", a.annotations.display()))?;
    let anns = records_to_annotations(&records)?;
    let avh = ctx
        .manifest
        .time("heatmap", || ground_truth_avh(&anns, &intr, &table, &grid))?;
    create_parent(&out)?;
    avh.write(&out)?;
    ctx.manifest.output(&out);
    Ok(())
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Depth image (16-bit binary PGM).
    #[arg(long)]
    depth: PathBuf,
    /// Heatmap source: `file:PATH` (or a bare path), `random:SEED:DENSITY`,
    /// or `oracle:ANNOTATIONS.jsonl`.
    #[arg(long)]
    avh: String,
    #[arg(long)]
    threshold: Option<f32>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Spatial index voxel size (m).
    #[arg(long)]
    cell_size: Option<f64>,
    /// Candidate widths (m), comma separated.
    #[arg(long)]
    widths: Option<String>,
    /// Depth offsets along the approach (m), comma separated.
    #[arg(long)]
    depth_offsets: Option<String>,
    /// Check every pose by scanning the whole cloud.
    #[arg(long)]
    brute_force: bool,
    /// Skip non-maximum suppression of the output.
    #[arg(long)]
    no_nms: bool,
    #[command(flatten)]
    nms: NmsArgsShared,
    #[command(flatten)]
    grid: GridArgs,
    /// Also write the gripper boxes of every grasp as a Wavefront OBJ.
    #[arg(long)]
    obj: Option<PathBuf>,
}

fn heatmap_source(
    ctx: &mut Ctx,
    source: &str,
    intr: &Intrinsics,
    table: &OrientationTable,
    grid: &GridMap,
) -> Result<AngleViewHeatmap> {
    let dims = AvhDims::new(table, grid);
    if let Some(rest) = source.strip_prefix("random:") {
        let (seed, density) = rest
            .split_once(':')
            .with_context(|| format!("expected random:SEED:DENSITY, got {source:?}"))?;
        let seed: u64 = seed
            .parse()
            .with_context(|| format!("bad seed in {source:?}"))?;
        let density: f64 = density
            .parse()
            .with_context(|| format!("bad density in {source:?}"))?;
        ctx.manifest.seed = Some(seed);
        return Ok(random_avh(dims, seed, density)?);
    }
    if let Some(path) = source.strip_prefix("oracle:") {
        let path = Path::new(path);
        ctx.manifest.input("annotations", path);
        let records = load_records(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(ground_truth_avh(
            &records_to_annotations(&records)?,
            intr,
            table,
            grid,
        )?);
    }
    let path = Path::new(source.strip_prefix("file:").unwrap_or(source));
    ctx.manifest.input("avh", path);
    AngleViewHeatmap::read(path).with_context(|| format!("reading heatmap {}", path.display()))
}

fn detect_config(ctx: &mut Ctx, a: &DetectArgs, g: GripperConfig) -> Result<DetectConfig> {
    let d = DetectConfig::default();
    let fas_default = FasConfig::default();
    let widths = a.widths.as_deref().map(parse_csv_f64).transpose()?;
    let offsets = a.depth_offsets.as_deref().map(parse_csv_f64).transpose()?;
    let cfg = DetectConfig {
        fas: FasConfig {
            widths: ctx.resolver.get("widths", widths, fas_default.widths)?,
            depth_offsets: ctx
                .resolver
                .get("depth_offsets", offsets, fas_default.depth_offsets)?,
        },
        gripper: g,
        threshold: ctx.resolver.get("threshold", a.threshold, d.threshold)?,
        top_k: ctx.resolver.get("top_k", a.top_k, d.top_k)?,
        cell_size: ctx.resolver.get_opt("cell_size", a.cell_size)?,
        execution: Execution::default(),
        brute_force: ctx
            .resolver
            .get("brute_force", a.brute_force.then_some(true), false)?,
    };
    cfg.fas.validate(&cfg.gripper)?;
    Ok(cfg)
}

fn record_timings(ctx: &mut Ctx, t: &DetectTimings) {
    for (k, v) in [
        ("extract", t.extract_ms),
        ("backproject", t.backproject_ms),
        ("index", t.index_ms),
        ("search", t.search_ms),
        ("detect", t.total_ms),
    ] {
        ctx.manifest.timings_ms.insert(k.to_string(), v);
    }
}

pub fn detect(ctx: &mut Ctx, a: DetectArgs) -> Result<()> {
    let intr = intrinsics(ctx)?;
    let g = gripper(ctx)?;
    let (table, grid) = a.grid.resolve(ctx, &intr)?;
    let cfg = detect_config(ctx, &a, g)?;
    let use_nms = ctx.resolver.get("nms", a.no_nms.then_some(false), true)?;
    let nms = a.nms.resolve(ctx)?;
    let depth = load_depth(ctx, &a.depth)?;
    let avh = {
        let t = std::time::Instant::now();
        let avh = heatmap_source(ctx, &a.avh, &intr, &table, &grid)?;
        ctx.manifest
            .timings_ms
            .insert("heatmap".into(), t.elapsed().as_secs_f64() * 1e3);
        avh
    };
    let (mut dets, timings) = detect_timed(&avh, &depth, &intr, &grid, &table, &cfg)?;
    record_timings(ctx, &timings);
    if use_nms {
        dets = ctx.manifest.time("nms", || gpnms(&dets, &nms));
    }
    let records: Vec<GraspRecord> = dets.iter().map(GraspRecord::from).collect();
    emit(ctx, |w| Ok(write_records(w, &records)?))?;
    if let Some(obj) = &a.obj {
        create_parent(obj)?;
        let poses: Vec<_> = dets.iter().map(|d| d.pose).collect();
        write_gripper_obj(
            std::io::BufWriter::new(fs::File::create(obj)?),
            &poses,
            &cfg.gripper,
        )?;
        ctx.manifest.output(obj);
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Grasps to score (JSON Lines).
    #[arg(long)]
    grasps: PathBuf,
    /// Scene cloud (`x y z` per line).
    #[arg(long, conflicts_with = "depth")]
    cloud: Option<PathBuf>,
    /// Depth image to back-project instead of a cloud.
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Friction coefficients, comma separated.
    #[arg(long)]
    frictions: Option<String>,
    /// Ranks averaged by the metric.
    #[arg(long)]
    k_max: Option<usize>,
    /// Neighbors used for normal estimation.
    #[arg(long)]
    normal_k: Option<usize>,
    /// Score grasps as given, without non-maximum suppression.
    #[arg(long)]
    no_nms: bool,
    #[command(flatten)]
    nms: NmsArgsShared,
}

pub fn eval(ctx: &mut Ctx, a: EvalArgs) -> Result<()> {
    let g = gripper(ctx)?;
    let d = EvalConfig::default();
    let frictions = a.frictions.as_deref().map(parse_csv_f64).transpose()?;
    let frictions = FrictionSet::new(ctx.resolver.get(
        "frictions",
        frictions,
        d.frictions.mus.clone(),
    )?)?;
    let use_nms = ctx.resolver.get("nms", a.no_nms.then_some(false), true)?;
    let nms = a.nms.resolve(ctx)?;
    let cfg = EvalConfig {
        frictions,
        k_max: ctx.resolver.get("k_max", a.k_max, d.k_max)?,
        nms: use_nms.then_some(nms),
        gripper: g,
        normal_k: ctx.resolver.get("normal_k", a.normal_k, d.normal_k)?,
        execution: Execution::default(),
    };
    let cloud = match (&a.cloud, &a.depth) {
        (Some(p), _) => {
            ctx.manifest.input("cloud", p);
            ctx.manifest
                .time("load", || PointCloud::load_xyz(p))
                .with_context(|| format!("reading cloud {}", p.display()))?
        }
        (None, Some(p)) => {
            let intr = intrinsics(ctx)?;
            let depth = load_depth(ctx, p)?;
            ctx.manifest
                .time("backproject", || backproject(&depth, &intr))?
        }
        (None, None) => bail!("eval needs --cloud or --depth"),
    };
    let dets = load_grasps(ctx, &a.grasps)?;
    let result = ctx
        .manifest
        .time("eval", || evaluate(&dets, &cloud.points, &cfg))?;
    emit(ctx, |w| write_json(w, &result.report))
}

#[derive(Debug, Args)]
pub struct NmsArgs {
    /// Grasps (JSON Lines).
    #[arg(long)]
    grasps: PathBuf,
    #[command(flatten)]
    nms: NmsArgsShared,
}

pub fn nms(ctx: &mut Ctx, a: NmsArgs) -> Result<()> {
    let cfg = a.nms.resolve(ctx)?;
    ctx.manifest.input("grasps", &a.grasps);
    let records = ctx.manifest.time("load", || load_records(&a.grasps));
    let records = records.with_context(|| format!("reading grasps {}", a.grasps.display()))?;
    let dets = records_to_detections(&records)?;
    // Survivors are written as read, so a second pass is byte-identical.
    let kept = ctx.manifest.time("nms", || gpnms_indices(&dets, &cfg));
    let records: Vec<GraspRecord> = kept.into_iter().map(|i| records[i].clone()).collect();
    emit(ctx, |w| Ok(write_records(w, &records)?))
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Objects in the synthetic scene.
    #[arg(long)]
    objects: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Fraction of heatmap bins that are non-zero.
    #[arg(long)]
    avh_density: Option<f64>,
    #[arg(long)]
    cell_size: Option<f64>,
    /// Run the search single-threaded.
    #[arg(long)]
    sequential: bool,
    /// Also time one run of the exhaustive per-pose search.
    #[arg(long)]
    brute_force: bool,
    /// Time both search paths as the field of view (and so the cloud) grows
    /// at fixed point density, with this many candidates.
    #[arg(long)]
    scaling: Option<usize>,
}

#[derive(Debug, Serialize)]
struct StageMedians {
    extract: f64,
    backproject: f64,
    index: f64,
    search: f64,
    total: f64,
}

#[derive(Debug, Serialize)]
struct BruteComparison {
    total_ms: f64,
    speedup: f64,
    identical_output: bool,
}

#[derive(Debug, Serialize)]
struct ScalingRow {
    points: usize,
    candidates: usize,
    indexed_search_ms: f64,
    brute_force_search_ms: f64,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    points: usize,
    candidates: usize,
    detections: usize,
    reps: usize,
    execution: &'static str,
    median_ms: StageMedians,
    /// Every repetition produced the same grasps.
    deterministic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    brute_force: Option<BruteComparison>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    scaling: Vec<ScalingRow>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Camera with the given image size and the default focal length, so larger
/// images see more of the scene at the same pixel density.
fn widened(base: &Intrinsics, width: usize, height: usize) -> Intrinsics {
    Intrinsics {
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
        ..*base
    }
}

pub fn bench(ctx: &mut Ctx, a: BenchArgs) -> Result<()> {
    let intr = intrinsics(ctx)?;
    let g = gripper(ctx)?;
    let seed = ctx.seed(0)?;
    let objects = ctx.resolver.get("objects", a.objects, 6usize)?;
    let reps = ctx.resolver.get("reps", a.reps, 9usize)?;
    anyhow::ensure!(reps > 0, "--reps must be at least 1");
    let top_k = ctx
        .resolver
        .get("top_k", a.top_k, graspkit::avh::DEFAULT_TOP_K)?;
    let avh_density = ctx.resolver.get("avh_density", a.avh_density, 0.01)?;
    let cell_size = ctx.resolver.get_opt("cell_size", a.cell_size)?;
    let execution = if a.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (scene_seed, avh_seed): (u64, u64) = (rng.random(), rng.random());
    let table = OrientationTable::default();
    let setup = |intr: &Intrinsics,
                 scene: &SyntheticScene|
     -> Result<(DepthImage, GridMap, AngleViewHeatmap)> {
        let depth = render_depth(scene, intr, Execution::default())?;
        let grid = GridMap::for_intrinsics(4, intr)?;
        let avh = random_avh(AvhDims::new(&table, &grid), avh_seed, avh_density)?;
        Ok((depth, grid, avh))
    };
    let scene = SyntheticScene::random(scene_seed, objects, &intr)?;
    let (depth, grid, avh) = ctx.manifest.time("setup", || setup(&intr, &scene))?;
    let cfg = DetectConfig {
        gripper: g,
        top_k,
        cell_size,
        execution,
        ..DetectConfig::default()
    };

    let mut stages: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut first: Option<Vec<Detection>> = None;
    let mut deterministic = true;
    let mut last = DetectTimings::default();
    for _ in 0..reps {
        let (dets, t) = detect_timed(&avh, &depth, &intr, &grid, &table, &cfg)?;
        for (k, v) in [
            ("extract", t.extract_ms),
            ("backproject", t.backproject_ms),
            ("index", t.index_ms),
            ("search", t.search_ms),
            ("total", t.total_ms),
        ] {
            stages.entry(k).or_default().push(v);
        }
        match &first {
            None => first = Some(dets),
            Some(f) => deterministic &= *f == dets,
        }
        last = t;
    }
    let mut med = |k: &str| median(stages.remove(k).unwrap_or_default());
    let median_ms = StageMedians {
        extract: med("extract"),
        backproject: med("backproject"),
        index: med("index"),
        search: med("search"),
        total: med("total"),
    };
    let first = first.unwrap_or_default();

    let brute_force = if a.brute_force {
        let brute_cfg = DetectConfig {
            brute_force: true,
            ..cfg.clone()
        };
        let (dets, t) = ctx.manifest.time("brute_force", || {
            detect_timed(&avh, &depth, &intr, &grid, &table, &brute_cfg)
        })?;
        Some(BruteComparison {
            total_ms: t.total_ms,
            speedup: t.total_ms / median_ms.total,
            identical_output: dets == first,
        })
    } else {
        None
    };

    let mut scaling = Vec::new();
    if let Some(k) = a.scaling {
        // Same scene and focal length throughout; narrow views crop it.
        for (w, h) in [(128, 96), (192, 144), (256, 192), (384, 288)] {
            let cam = widened(&intr, w, h);
            let (depth, grid, avh) = setup(&cam, &scene)?;
            let run = |brute_force: bool| {
                let c = DetectConfig {
                    top_k: k,
                    brute_force,
                    ..cfg.clone()
                };
                detect_timed(&avh, &depth, &cam, &grid, &table, &c)
            };
            let (_, ti) = ctx.manifest.time("scaling", || run(false))?;
            let (_, tb) = ctx.manifest.time("scaling", || run(true))?;
            scaling.push(ScalingRow {
                points: ti.points,
                candidates: ti.candidates,
                indexed_search_ms: ti.search_ms,
                brute_force_search_ms: tb.search_ms,
            });
        }
    }

    ctx.manifest
        .timings_ms
        .insert("detect_median".into(), median_ms.total);
    let report = BenchReport {
        points: last.points,
        candidates: last.candidates,
        detections: first.len(),
        reps,
        execution: match execution {
            Execution::Parallel => "parallel",
            Execution::Sequential => "sequential",
        },
        median_ms,
        deterministic,
        brute_force,
        scaling,
    };
    emit(ctx, |w| write_json(w, &report))
}
