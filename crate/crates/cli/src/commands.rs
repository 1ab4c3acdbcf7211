use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{info, warn};
use serde::Serialize;

use pfilter_core::io::{export_map_ply, kitti_ate, load_calib, load_kitti_poses, write_kitti_scan, write_trajectory_kitti, EvalReport, KittiSequence};
use pfilter_core::odometry::run_sequence_with;
use pfilter_core::{
    Error, FrameStats, InputSpec, MeanStats, PointLabel, Pose, Result as CoreResult, RunConfig, ScanSource, SceneSpec,
    SynthSource,
};

use crate::{AblateArgs, BaseArgs, EvalArgs, OnOff, RunArgs, SynthArgs};

/// A failed command with its exit status: 1 at run time, 2 for usage or
/// configuration errors.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

/// Core errors caused by bad configuration are usage errors.
fn classify(e: Error) -> Failure {
    match e {
        Error::Config(_) => usage(e),
        other => runtime(other),
    }
}

fn effective_config(base: &BaseArgs) -> CmdResult<RunConfig> {
    let mut cfg = match &base.config {
        Some(path) => RunConfig::load(path).map_err(classify)?,
        None => {
            let input = base
                .input
                .as_deref()
                .ok_or_else(|| usage(anyhow!("--input is required without --config")))?;
            RunConfig::new(InputSpec::parse(input).map_err(classify)?)
        }
    };
    if let (Some(input), Some(_)) = (&base.input, &base.config) {
        cfg.input = InputSpec::parse(input).map_err(classify)?;
    }
    if let Some(p) = base.pfilter {
        cfg.pipeline.filter.enabled = p == OnOff::On;
    }
    if let Some(m) = base.method {
        cfg.pipeline.extraction.method = m.into();
    }
    if let Some(g) = base.gamma {
        cfg.pipeline.filter.gamma = g;
    }
    if base.seed.is_some() {
        cfg.seed = base.seed;
    }
    if let Some(out) = &base.out {
        cfg.output.dir = out.clone();
    }
    if base.ground_truth.is_some() {
        cfg.ground_truth = base.ground_truth.clone();
    }
    if base.calib.is_some() {
        cfg.calib = base.calib.clone();
    }
    if base.max_frames.is_some() {
        cfg.max_frames = base.max_frames;
    }
    Ok(cfg)
}

fn load_scene(name: &str, seed: Option<u64>) -> CoreResult<SceneSpec> {
    let input = InputSpec::Synth(name.to_string());
    let mut spec = match input.preset() {
        Some(preset) => SceneSpec::preset(preset, seed.unwrap_or(0)).expect("listed presets exist"),
        None => SceneSpec::load(Path::new(name))?,
    };
    if let Some(s) = seed {
        spec.noise.seed = s;
    }
    Ok(spec)
}

/// A scan source plus the ground truth that goes with it.
struct Prepared {
    source: Box<dyn ScanSource>,
    truth: Option<Vec<Pose>>,
}

fn relative_to_first(poses: &[Pose]) -> Vec<Pose> {
    match poses.first() {
        Some(first) => {
            let inv = first.inverse();
            poses.iter().map(|p| inv.compose(p)).collect()
        }
        None => Vec::new(),
    }
}

fn prepare(cfg: &RunConfig) -> CmdResult<Prepared> {
    let calib = cfg.calib.as_deref().map(load_calib).transpose().map_err(runtime)?;
    let file_truth = cfg
        .ground_truth
        .as_deref()
        .map(|p| load_kitti_poses(p, calib.as_ref()))
        .transpose()
        .map_err(runtime)?;
    let (source, truth): (Box<dyn ScanSource>, Option<Vec<Pose>>) = match &cfg.input {
        InputSpec::Synth(name) => {
            let mut spec = load_scene(name, cfg.seed).map_err(classify)?;
            if let Some(n) = cfg.max_frames {
                let n = n.min(spec.frames());
                spec.trajectory.set_frames(n);
            }
            let truth = file_truth.or_else(|| Some(relative_to_first(&spec.ground_truth())));
            (Box::new(SynthSource::new(spec)), truth)
        }
        InputSpec::Kitti(dir) => {
            let mut seq = KittiSequence::open(dir).map_err(runtime)?;
            if let Some(n) = cfg.max_frames {
                seq.truncate(n);
            }
            (Box::new(seq), file_truth)
        }
    };
    let truth = truth.map(|mut t| {
        if let Some(n) = cfg.max_frames {
            t.truncate(n);
        }
        t
    });
    Ok(Prepared { source, truth })
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(runtime)
}

fn write_file(path: &Path, contents: &[u8]) -> CmdResult {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(runtime)
}

const STATS_HEADER: &str =
    "frame\tmap_points\tedge_points\tsurface_points\tfeatures\tconstraints\tms\titerations\tinserted\tdeleted\tcropped\tdegenerate";

fn stats_row(s: &FrameStats) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\t{}\t{}\t{}\t{}\t{}",
        s.frame_index,
        s.map_point_count,
        s.edge_count,
        s.surface_count,
        s.feature_count,
        s.constraint_count,
        s.elapsed_ms,
        s.iterations,
        s.inserted,
        s.deleted,
        s.cropped,
        u8::from(s.degenerate)
    )
}

fn mean_row(m: &MeanStats) -> String {
    format!(
        "Mean\t{:.1}\t{:.1}\t{:.2}",
        m.map_point_count, m.constraint_count, m.elapsed_ms
    )
}

/// Outcome of one pipeline run.
struct RunOutcome {
    poses: Vec<Pose>,
    stats: Vec<FrameStats>,
    mean: MeanStats,
    eval: Option<EvalReport>,
}

fn execute(cfg: &RunConfig, ply_dir: Option<&Path>) -> CmdResult<RunOutcome> {
    let prepared = prepare(cfg)?;
    let Prepared { mut source, truth } = prepared;
    let ply_every = cfg.output.ply_every;
    let result = run_sequence_with(source.as_mut(), &cfg.pipeline, |out, odo| {
        let k = out.stats.frame_index;
        if k % 50 == 0 {
            info!("frame {k}: {} map points, {:.1} ms", out.stats.map_point_count, out.stats.elapsed_ms);
        }
        if let Some(dir) = ply_dir {
            if ply_every > 0 && k % ply_every == 0 {
                export_map_ply(&odo.snapshot(), &dir.join(format!("map_{k:06}.ply")))?;
            }
        }
        Ok(())
    })
    .map_err(runtime)?;
    let poses = result.trajectory.poses();
    let eval = match &truth {
        Some(t) => match kitti_ate(&poses, t) {
            Ok(r) => Some(r),
            Err(Error::TooFewPoses { got }) => {
                warn!("skipping evaluation: {got} ground-truth poses");
                None
            }
            Err(e) => return Err(runtime(e)),
        },
        None => None,
    };
    if let Some(dir) = ply_dir {
        if cfg.output.final_map {
            export_map_ply(&result.snapshot, &dir.join("map.ply")).map_err(runtime)?;
        }
    }
    Ok(RunOutcome {
        poses,
        mean: result.mean,
        stats: result.stats,
        eval,
    })
}

#[derive(Serialize)]
struct RunSummary<'a> {
    output_dir: &'a Path,
    frames: usize,
    mean: MeanStats,
    ate_percent: Option<f64>,
}

pub fn run(args: &RunArgs) -> CmdResult {
    let mut cfg = effective_config(&args.base)?;
    if let Some(v) = args.theta_p {
        cfg.pipeline.filter.theta_p = v;
    }
    if let Some(v) = args.theta_max {
        cfg.pipeline.filter.theta_max = v;
    }
    if let Some(v) = args.kappa_new {
        cfg.pipeline.filter.kappa_new = v;
    }
    if let Some(v) = args.ply_every {
        cfg.output.ply_every = v;
    }
    cfg.validate().map_err(classify)?;

    let dir = cfg.output.dir.clone();
    create_dir(&dir)?;
    write_file(&dir.join("config.toml"), cfg.to_toml_string().as_bytes())?;
    let outcome = execute(&cfg, Some(&dir))?;

    let calib = cfg.calib.as_deref().map(load_calib).transpose().map_err(runtime)?;
    write_trajectory_kitti(&outcome.poses, calib.as_ref(), &dir.join("trajectory.txt")).map_err(runtime)?;
    let mut tsv = String::from(STATS_HEADER);
    tsv.push('\n');
    for s in &outcome.stats {
        tsv.push_str(&stats_row(s));
        tsv.push('\n');
    }
    write_file(&dir.join("stats.tsv"), tsv.as_bytes())?;
    if let Some(report) = &outcome.eval {
        write_file(&dir.join("eval.txt"), format!("{report}\n").as_bytes())?;
        let json = serde_json::to_string_pretty(report).map_err(runtime)?;
        write_file(&dir.join("eval.json"), json.as_bytes())?;
    }

    if args.base.json {
        let summary = RunSummary {
            output_dir: &dir,
            frames: outcome.poses.len(),
            mean: outcome.mean,
            ate_percent: outcome.eval.as_ref().and_then(|r| r.ate_percent),
        };
        println!("{}", serde_json::to_string_pretty(&summary).map_err(runtime)?);
    } else {
        println!("frames\t{}", outcome.poses.len());
        println!("\tmap_points\tconstraints\tms");
        println!("{}", mean_row(&outcome.mean));
        if let Some(report) = &outcome.eval {
            println!("{report}");
        }
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> CmdResult {
    for path in [Some(&args.estimate), Some(&args.truth), args.calib.as_ref()].into_iter().flatten() {
        if !path.exists() {
            return Err(usage(anyhow!("input path {} does not exist", path.display())));
        }
    }
    let calib = args.calib.as_deref().map(load_calib).transpose().map_err(runtime)?;
    let est = load_kitti_poses(&args.estimate, calib.as_ref()).map_err(runtime)?;
    let truth = load_kitti_poses(&args.truth, calib.as_ref()).map_err(runtime)?;
    let report = kitti_ate(&est, &truth).map_err(runtime)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
    } else {
        println!("{report}");
    }
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    theta_p: f64,
    theta_max: f64,
    kappa_new: usize,
    ate_percent: Option<f64>,
    mean_map_points: Option<f64>,
    mean_ms: Option<f64>,
    error: Option<String>,
}

impl AblationRow {
    fn tsv(&self) -> String {
        let opt = |v: Option<f64>, digits: usize| v.map_or("-".to_string(), |v| format!("{v:.digits$}"));
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.theta_p,
            self.theta_max,
            self.kappa_new,
            opt(self.ate_percent, 4),
            opt(self.mean_map_points, 1),
            opt(self.mean_ms, 2),
            self.error.as_deref().unwrap_or("ok")
        )
    }
}

pub fn ablate(args: &AblateArgs) -> CmdResult {
    let base = effective_config(&args.base)?;
    let defaults = &base.pipeline.filter;
    let pick = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let theta_ps = pick(&args.theta_p, defaults.theta_p);
    let theta_maxs = pick(&args.theta_max, defaults.theta_max);
    let kappas = if args.kappa_new.is_empty() {
        vec![defaults.kappa_new]
    } else {
        args.kappa_new.clone()
    };

    let mut grid = Vec::new();
    for &tp in &theta_ps {
        for &tm in &theta_maxs {
            for &kn in &kappas {
                let mut cfg = base.clone();
                cfg.pipeline.filter.theta_p = tp;
                cfg.pipeline.filter.theta_max = tm;
                cfg.pipeline.filter.kappa_new = kn;
                cfg.validate().map_err(classify)?;
                grid.push(cfg);
            }
        }
    }

    let dir = base.output.dir.clone();
    create_dir(&dir)?;
    write_file(&dir.join("config.toml"), base.to_toml_string().as_bytes())?;
    let mut rows = Vec::with_capacity(grid.len());
    for cfg in &grid {
        let f = &cfg.pipeline.filter;
        info!("ablation point theta_p={} theta_max={} kappa_new={}", f.theta_p, f.theta_max, f.kappa_new);
        let row = match execute(cfg, None) {
            Ok(o) => AblationRow {
                theta_p: f.theta_p,
                theta_max: f.theta_max,
                kappa_new: f.kappa_new,
                ate_percent: o.eval.and_then(|r| r.ate_percent),
                mean_map_points: Some(o.mean.map_point_count),
                mean_ms: Some(o.mean.elapsed_ms),
                error: None,
            },
            Err(e) => AblationRow {
                theta_p: f.theta_p,
                theta_max: f.theta_max,
                kappa_new: f.kappa_new,
                ate_percent: None,
                mean_map_points: None,
                mean_ms: None,
                error: Some(format!("{:#}", e.error)),
            },
        };
        rows.push(row);
    }

    let mut tsv = String::from("theta_p\ttheta_max\tkappa_new\tate_percent\tmean_map_points\tmean_ms\tstatus\n");
    for r in &rows {
        writeln!(tsv, "{}", r.tsv()).expect("writing to a string");
    }
    write_file(&dir.join("ablation.tsv"), tsv.as_bytes())?;
    if args.base.json {
        println!("{}", serde_json::to_string_pretty(&rows).map_err(runtime)?);
    } else {
        print!("{tsv}");
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(runtime(anyhow!("{failed} of {} grid points failed", rows.len())));
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> CmdResult {
    let input = InputSpec::Synth(args.scene.clone());
    if let Some(path) = input.path() {
        if !path.exists() {
            return Err(usage(anyhow!("scene {} is neither a preset nor an existing file", path.display())));
        }
    }
    let mut spec = load_scene(&args.scene, args.seed).map_err(classify)?;
    if let Some(n) = args.frames {
        spec.trajectory.set_frames(n);
    }
    let out: PathBuf = args.out.clone();
    let velodyne = out.join("velodyne");
    let labels = out.join("labels");
    create_dir(&velodyne)?;
    create_dir(&labels)?;
    write_file(&out.join("scene.toml"), spec.to_toml_string().as_bytes())?;
    let model = toml::to_string_pretty(&spec.sensor.lidar_model()).map_err(runtime)?;
    write_file(&out.join("sensor.toml"), model.as_bytes())?;

    let truth = relative_to_first(&spec.ground_truth());
    write_trajectory_kitti(&truth, None, &out.join("poses.txt")).map_err(runtime)?;
    let mut source = SynthSource::new(spec);
    while let Some(scan) = source.next_scan().map_err(runtime)? {
        let k = scan.frame_index;
        write_kitti_scan(&scan, &velodyne.join(format!("{k:06}.bin"))).map_err(runtime)?;
        let labeled = source.last_labeled().expect("a scan was just rendered");
        write_labels(&labeled.labels, &labels.join(format!("{k:06}.txt")))?;
    }
    Ok(())
}

/// One line per point: class and source primitive (-1 for none).
fn write_labels(labels: &[PointLabel], path: &Path) -> CmdResult {
    let mut text = String::with_capacity(labels.len() * 10);
    for l in labels {
        let prim = l.primitive.map_or(-1, i64::from);
        writeln!(text, "{} {prim}", l.class.as_str()).expect("writing to a string");
    }
    write_file(path, text.as_bytes())
}
