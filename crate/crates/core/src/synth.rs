//! Synthetic LiDAR sequences with exact ground truth.
//!
//! Scenes are built from static primitives (planes, quads, walls, poles,
//! boxes) and boxes moving at constant velocity. Each frame is ray cast
//! from the ground-truth sensor pose; every returned point carries a label
//! saying whether it came from a static landmark, a moving object, or an
//! injected spurious return.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose};
use crate::map::{MapPointId, MapSnapshot, UpdateReport};
use crate::scan::{LidarModel, RawPoint, Scan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    /// Unbounded plane.
    Plane { point: [f64; 3], normal: [f64; 3] },
    /// Parallelogram `origin + s·edge_a + t·edge_b`, `s, t ∈ [0, 1]`.
    Quad {
        origin: [f64; 3],
        edge_a: [f64; 3],
        edge_b: [f64; 3],
    },
    /// Vertical wall between two ground points.
    Wall {
        start: [f64; 2],
        end: [f64; 2],
        base: f64,
        height: f64,
    },
    /// Vertical cylinder.
    Pole {
        base: [f64; 3],
        radius: f64,
        height: f64,
    },
    /// Axis-aligned box.
    Box { min: [f64; 3], max: [f64; 3] },
}

impl Primitive {
    /// Distance along the unit ray to the first hit in front of `origin`.
    pub fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::Plane { point, normal } => {
                let n = Vector3::from(*normal).normalize();
                ray_plane(origin, dir, &Vector3::from(*point), &n)
            }
            Primitive::Quad { origin: o, edge_a, edge_b } => {
                ray_quad(origin, dir, &Vector3::from(*o), &Vector3::from(*edge_a), &Vector3::from(*edge_b))
            }
            Primitive::Wall { start, end, base, height } => {
                let o = Vector3::new(start[0], start[1], *base);
                let a = Vector3::new(end[0] - start[0], end[1] - start[1], 0.0);
                let b = Vector3::new(0.0, 0.0, *height);
                ray_quad(origin, dir, &o, &a, &b)
            }
            Primitive::Pole { base, radius, height } => ray_pole(origin, dir, &Vector3::from(*base), *radius, *height),
            Primitive::Box { min, max } => ray_box(origin, dir, &Vector3::from(*min), &Vector3::from(*max)),
        }
    }

    /// Distance from `p` to the primitive's surface (unbounded for planar pieces).
    pub fn surface_distance(&self, p: &Point3) -> f64 {
        match self {
            Primitive::Plane { point, normal } => {
                (p - Vector3::from(*point)).dot(&Vector3::from(*normal).normalize()).abs()
            }
            Primitive::Quad { origin, edge_a, edge_b } => {
                let n = Vector3::from(*edge_a).cross(&Vector3::from(*edge_b)).normalize();
                (p - Vector3::from(*origin)).dot(&n).abs()
            }
            Primitive::Wall { start, end, .. } => {
                let a = Vector3::new(end[0] - start[0], end[1] - start[1], 0.0);
                let n = a.cross(&Vector3::z()).normalize();
                (p - Vector3::new(start[0], start[1], 0.0)).dot(&n).abs()
            }
            Primitive::Pole { base, radius, .. } => {
                let d = Vector3::new(p.x - base[0], p.y - base[1], 0.0).norm();
                (d - radius).abs()
            }
            Primitive::Box { min, max } => {
                // Distance to the nearest face plane, for points on the boundary.
                (0..3)
                    .flat_map(|i| [(p[i] - min[i]).abs(), (p[i] - max[i]).abs()])
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Axis-aligned bounds, `None` for unbounded primitives.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let from_corners = |pts: &[Point3]| {
            let mut lo = pts[0];
            let mut hi = pts[0];
            for p in pts {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            (lo, hi)
        };
        match self {
            Primitive::Plane { .. } => None,
            Primitive::Quad { origin, edge_a, edge_b } => {
                let (o, a, b) = (Vector3::from(*origin), Vector3::from(*edge_a), Vector3::from(*edge_b));
                Some(from_corners(&[o, o + a, o + b, o + a + b]))
            }
            Primitive::Wall { start, end, base, height } => Some(from_corners(&[
                Vector3::new(start[0], start[1], *base),
                Vector3::new(end[0], end[1], base + height),
            ])),
            Primitive::Pole { base, radius, height } => Some((
                Vector3::new(base[0] - radius, base[1] - radius, base[2]),
                Vector3::new(base[0] + radius, base[1] + radius, base[2] + height),
            )),
            Primitive::Box { min, max } => Some((Vector3::from(*min), Vector3::from(*max))),
        }
    }

    fn translated(&self, offset: &Vector3<f64>) -> Primitive {
        let shift = |a: &[f64; 3]| [a[0] + offset.x, a[1] + offset.y, a[2] + offset.z];
        match self {
            Primitive::Plane { point, normal } => Primitive::Plane {
                point: shift(point),
                normal: *normal,
            },
            Primitive::Quad { origin, edge_a, edge_b } => Primitive::Quad {
                origin: shift(origin),
                edge_a: *edge_a,
                edge_b: *edge_b,
            },
            Primitive::Wall { start, end, base, height } => Primitive::Wall {
                start: [start[0] + offset.x, start[1] + offset.y],
                end: [end[0] + offset.x, end[1] + offset.y],
                base: base + offset.z,
                height: *height,
            },
            Primitive::Pole { base, radius, height } => Primitive::Pole {
                base: shift(base),
                radius: *radius,
                height: *height,
            },
            Primitive::Box { min, max } => Primitive::Box {
                min: shift(min),
                max: shift(max),
            },
        }
    }
}

fn ray_plane(o: &Point3, d: &Vector3<f64>, p0: &Point3, n: &Vector3<f64>) -> Option<f64> {
    let denom = d.dot(n);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = (p0 - o).dot(n) / denom;
    (t > 0.0).then_some(t)
}

fn ray_quad(o: &Point3, d: &Vector3<f64>, origin: &Point3, a: &Vector3<f64>, b: &Vector3<f64>) -> Option<f64> {
    let n = a.cross(b);
    if n.norm_squared() == 0.0 {
        return None;
    }
    let t = ray_plane(o, d, origin, &n.normalize())?;
    let rel = o + d * t - origin;
    // Solve rel = s·a + u·b in the quad's plane.
    let (aa, ab, bb) = (a.dot(a), a.dot(b), b.dot(b));
    let (ra, rb) = (rel.dot(a), rel.dot(b));
    let det = aa * bb - ab * ab;
    let s = (ra * bb - rb * ab) / det;
    let u = (rb * aa - ra * ab) / det;
    ((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&u)).then_some(t)
}

fn ray_pole(o: &Point3, d: &Vector3<f64>, base: &Point3, radius: f64, height: f64) -> Option<f64> {
    let (ox, oy) = (o.x - base.x, o.y - base.y);
    let a = d.x * d.x + d.y * d.y;
    if a < 1e-15 {
        return None;
    }
    let b = 2.0 * (ox * d.x + oy * d.y);
    let c = ox * ox + oy * oy - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Numerically stable roots.
    let q = -0.5 * (b + b.signum() * sq);
    let (mut t0, mut t1) = (q / a, c / q);
    if t0 > t1 {
        std::mem::swap(&mut t0, &mut t1);
    }
    [t0, t1].into_iter().find(|&t| {
        let z = o.z + d.z * t;
        t > 0.0 && z >= base.z && z <= base.z + height
    })
}

fn ray_box(o: &Point3, d: &Vector3<f64>, min: &Point3, max: &Point3) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i] < min[i] || o[i] > max[i] {
                return None;
            }
            continue;
        }
        let (a, b) = ((min[i] - o[i]) / d[i], (max[i] - o[i]) / d[i]);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        t_enter = t_enter.max(lo);
        t_exit = t_exit.min(hi);
    }
    (t_enter <= t_exit && t_enter > 0.0).then_some(t_enter)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingObject {
    pub shape: Primitive,
    /// Displacement per frame in meters.
    pub velocity: [f64; 3],
}

impl MovingObject {
    pub fn at_frame(&self, frame: usize) -> Primitive {
        self.shape.translated(&(Vector3::from(self.velocity) * frame as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSpec {
    pub ring_count: u16,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    /// Rays per ring per sweep.
    pub azimuth_steps: usize,
    pub min_range: f64,
    pub max_range: f64,
    /// Sweep start angle, counter-clockwise from +x; the sweep runs clockwise.
    pub start_azimuth_deg: f64,
    /// Move the sensor along the trajectory during each sweep.
    pub motion_distortion: bool,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            ring_count: 64,
            min_elevation_deg: -24.8,
            max_elevation_deg: 2.0,
            azimuth_steps: 900,
            min_range: 0.5,
            max_range: 80.0,
            start_azimuth_deg: 180.0,
            motion_distortion: true,
        }
    }
}

impl SensorSpec {
    pub fn lidar_model(&self) -> LidarModel {
        LidarModel {
            ring_count: self.ring_count,
            min_elevation_deg: self.min_elevation_deg,
            max_elevation_deg: self.max_elevation_deg,
            sweep_start_deg: Some(-self.start_azimuth_deg),
        }
    }

    /// Unit ray direction in the sensor frame and its sweep fraction.
    pub fn ray(&self, ring: u16, step: usize) -> (Vector3<f64>, f64) {
        let elev = self.lidar_model().ring_elevation(ring);
        let s = step as f64 / self.azimuth_steps as f64;
        let az = self.start_azimuth_deg.to_radians() - s * std::f64::consts::TAU;
        (
            Vector3::new(elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin()),
            s,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub translation: [f64; 3],
    #[serde(default)]
    pub roll_deg: f64,
    #[serde(default)]
    pub pitch_deg: f64,
    #[serde(default)]
    pub yaw_deg: f64,
}

impl PoseSpec {
    pub fn to_pose(&self) -> Pose {
        Pose::new(
            UnitQuaternion::from_euler_angles(
                self.roll_deg.to_radians(),
                self.pitch_deg.to_radians(),
                self.yaw_deg.to_radians(),
            ),
            Vector3::from(self.translation),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Screw motion with a fixed body-frame increment per frame.
    ConstantVelocity {
        frames: usize,
        start: PoseSpec,
        /// Body-frame translation per frame.
        step: [f64; 3],
        #[serde(default)]
        yaw_rate_deg: f64,
        /// Frames spent accelerating linearly from rest to the full step.
        #[serde(default)]
        ramp_frames: usize,
    },
    Explicit { poses: Vec<PoseSpec> },
}

impl TrajectorySpec {
    pub fn poses(&self) -> Vec<Pose> {
        match self {
            TrajectorySpec::ConstantVelocity {
                frames,
                start,
                step,
                yaw_rate_deg,
                ramp_frames,
            } => {
                let start = start.to_pose();
                let inc = Pose::from_yaw(yaw_rate_deg.to_radians(), Vector3::from(*step));
                let xi = inc.log().expect("per-frame yaw below pi");
                let mut out = Vec::with_capacity(*frames);
                let mut pose = start;
                for k in 0..*frames {
                    out.push(pose);
                    let scale = ((k + 1) as f64 / (*ramp_frames + 1) as f64).min(1.0);
                    let step = if scale < 1.0 { Pose::exp(&xi.scale(scale)) } else { inc };
                    pose = pose.compose(&step);
                }
                out
            }
            TrajectorySpec::Explicit { poses } => poses.iter().map(PoseSpec::to_pose).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TrajectorySpec::ConstantVelocity { frames, .. } => *frames,
            TrajectorySpec::Explicit { poses } => poses.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sets the frame count; explicit trajectories can only shrink.
    pub fn set_frames(&mut self, n: usize) {
        match self {
            TrajectorySpec::ConstantVelocity { frames, .. } => *frames = n,
            TrajectorySpec::Explicit { poses } => poses.truncate(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Gaussian range noise standard deviation in meters.
    pub range_sigma: f64,
    /// Probability that a ray returns a spurious point in free space.
    pub transient_fraction: f64,
    /// Spurious returns come in blocks of `[rings, azimuth steps]` rays
    /// sharing one relative range, like one-frame ghost patches. `[1, 1]`
    /// makes every ray independent.
    pub transient_extent: [usize; 2],
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            range_sigma: 0.0,
            transient_fraction: 0.0,
            transient_extent: [1, 1],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub statics: Vec<Primitive>,
    #[serde(default)]
    pub moving: Vec<MovingObject>,
    #[serde(default)]
    pub sensor: SensorSpec,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sensor;
        if s.ring_count == 0 || s.azimuth_steps == 0 {
            return Err(Error::Config("sensor needs at least one ring and one azimuth step".into()));
        }
        if !(s.max_elevation_deg >= s.min_elevation_deg) || !(s.max_range > s.min_range && s.min_range >= 0.0) {
            return Err(Error::Config("sensor field of view and range must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noise.transient_fraction) {
            return Err(Error::Config("transient_fraction must lie in [0, 1]".into()));
        }
        if self.noise.transient_extent.contains(&0) {
            return Err(Error::Config("transient_extent entries must be at least 1".into()));
        }
        if !(self.noise.range_sigma >= 0.0) {
            return Err(Error::Config("range_sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scene specs always serialize")
    }

    pub fn frames(&self) -> usize {
        self.trajectory.len()
    }

    pub fn ground_truth(&self) -> Vec<Pose> {
        self.trajectory.poses()
    }

    /// Primitive with the given label id at `frame`.
    pub fn primitive_at(&self, id: usize, frame: usize) -> Option<Primitive> {
        if id < self.statics.len() {
            Some(self.statics[id].clone())
        } else {
            self.moving.get(id - self.statics.len()).map(|m| m.at_frame(frame))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    StaticLandmark,
    MovingObject,
    TransientNoise,
}

impl PointClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointClass::StaticLandmark => "static",
            PointClass::MovingObject => "moving",
            PointClass::TransientNoise => "noise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointLabel {
    pub class: PointClass,
    /// Index into statics, then moving objects; `None` for noise.
    pub primitive: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScan {
    pub scan: Scan,
    pub labels: Vec<PointLabel>,
    /// Sensor pose at the sweep end (the frame's ground truth).
    pub pose: Pose,
}

/// Sensor pose at sweep fraction `s` of `frame`.
pub fn sweep_pose(spec: &SceneSpec, poses: &[Pose], frame: usize, s: f64) -> Pose {
    let end = poses[frame];
    if !spec.sensor.motion_distortion || frame == 0 {
        return end;
    }
    let start = poses[frame - 1];
    let inc = start.between(&end).log().expect("per-frame rotation below pi");
    start.compose(&Pose::exp(&inc.scale(s)))
}

/// Ray casts one frame.
pub fn render_scan(spec: &SceneSpec, frame: usize) -> LabeledScan {
    let poses = spec.ground_truth();
    render_with_poses(spec, &poses, frame)
}

pub fn render_with_poses(spec: &SceneSpec, poses: &[Pose], frame: usize) -> LabeledScan {
    assert!(frame < poses.len(), "frame {frame} beyond trajectory of {}", poses.len());
    let sensor = &spec.sensor;
    let mut primitives: Vec<(Primitive, PointLabel)> = spec
        .statics
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                p.clone(),
                PointLabel {
                    class: PointClass::StaticLandmark,
                    primitive: Some(i as u32),
                },
            )
        })
        .collect();
    primitives.extend(spec.moving.iter().enumerate().map(|(j, m)| {
        (
            m.at_frame(frame),
            PointLabel {
                class: PointClass::MovingObject,
                primitive: Some((spec.statics.len() + j) as u32),
            },
        )
    }));

    // Drop primitives that no ray of this sweep can reach.
    let start = if frame > 0 { poses[frame - 1].translation } else { poses[frame].translation };
    let end = poses[frame].translation;
    let reach = sensor.max_range + (end - start).norm();
    primitives.retain(|(prim, _)| match prim.bounds() {
        None => true,
        Some((lo, hi)) => {
            let gap = (lo - end).sup(&(end - hi)).sup(&Vector3::zeros());
            gap.norm() <= reach
        }
    });

    let normal = Normal::new(0.0, spec.noise.range_sigma.max(0.0)).expect("finite sigma");
    let ghosts = GhostTiles::draw(spec, frame);
    let per_ring: Vec<Vec<(RawPoint, PointLabel)>> = (0..sensor.ring_count)
        .into_par_iter()
        .map(|ring| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.noise.seed);
            rng.set_stream(((frame as u64) << 16) | ring as u64);
            let mut out = Vec::with_capacity(sensor.azimuth_steps);
            for step in 0..sensor.azimuth_steps {
                let (dir_s, s) = sensor.ray(ring, step);
                let pose = sweep_pose(spec, poses, frame, s);
                let origin = pose.translation;
                let dir_w = pose.rotation * dir_s;
                let mut hit: Option<(f64, PointLabel)> = None;
                for (prim, label) in &primitives {
                    if let Some(t) = prim.intersect(&origin, &dir_w) {
                        if hit.is_none_or(|(best, _)| t < best) {
                            hit = Some((t, *label));
                        }
                    }
                }
                let hit = hit.filter(|(t, _)| *t >= sensor.min_range && *t <= sensor.max_range);
                // Draws happen for every ray so streams stay aligned across scenes.
                let spurious = ghosts.at(ring, step);
                let eps = if spec.noise.range_sigma > 0.0 {
                    normal.sample(&mut rng)
                } else {
                    0.0
                };
                let (range, label) = if let Some(u) = spurious {
                    let far = hit.map_or(sensor.max_range, |(t, _)| t);
                    (
                        sensor.min_range + u * (far - sensor.min_range),
                        PointLabel {
                            class: PointClass::TransientNoise,
                            primitive: None,
                        },
                    )
                } else if let Some((t, label)) = hit {
                    (t + eps, label)
                } else {
                    continue;
                };
                out.push((
                    RawPoint {
                        position: dir_s * range,
                        intensity: 0.0,
                        ring,
                        rel_time: s,
                    },
                    label,
                ));
            }
            out
        })
        .collect();

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for ring in per_ring {
        for (p, l) in ring {
            points.push(p);
            labels.push(l);
        }
    }
    LabeledScan {
        scan: Scan::new(frame, sensor.ring_count, points),
        labels,
        pose: poses[frame],
    }
}

/// Per-frame tiling of the (ring, azimuth step) grid into blocks that
/// independently become spurious with the transient probability.
struct GhostTiles {
    extent: [usize; 2],
    offset: [usize; 2],
    cols: usize,
    /// Relative range of each spurious tile.
    tiles: Vec<Option<f64>>,
}

impl GhostTiles {
    fn draw(spec: &SceneSpec, frame: usize) -> Self {
        let extent = spec.noise.transient_extent;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.noise.seed);
        rng.set_stream(((frame as u64) << 16) | 0xffff);
        let offset = [rng.random_range(0..extent[0]), rng.random_range(0..extent[1])];
        let rows = (spec.sensor.ring_count as usize + offset[0]).div_ceil(extent[0]);
        let cols = (spec.sensor.azimuth_steps + offset[1]).div_ceil(extent[1]);
        let tiles = (0..rows * cols)
            .map(|_| {
                let hit = rng.random::<f64>() < spec.noise.transient_fraction;
                let u: f64 = rng.random();
                hit.then_some(u)
            })
            .collect();
        Self {
            extent,
            offset,
            cols,
            tiles,
        }
    }

    fn at(&self, ring: u16, step: usize) -> Option<f64> {
        let r = (ring as usize + self.offset[0]) / self.extent[0];
        let c = (step + self.offset[1]) / self.extent[1];
        self.tiles[r * self.cols + c]
    }
}

/// Map-point provenance collected from update reports.
#[derive(Debug, Clone, Default)]
pub struct ProvenanceLedger {
    labels: HashMap<MapPointId, PointLabel>,
}

impl ProvenanceLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the labels of the points inserted by `report`, whose
    /// features were extracted from `scan`.
    pub fn record(&mut self, report: &UpdateReport, scan: &LabeledScan) {
        for ins in &report.inserted {
            if let Some(label) = scan.labels.get(ins.source_index) {
                self.labels.insert(ins.id, *label);
            }
        }
    }

    pub fn label(&self, id: MapPointId) -> Option<&PointLabel> {
        self.labels.get(&id)
    }

    pub fn labels(&self) -> &HashMap<MapPointId, PointLabel> {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub static_landmark: usize,
    pub moving_object: usize,
    pub transient_noise: usize,
}

impl ClassCounts {
    fn bump(&mut self, class: PointClass) {
        match class {
            PointClass::StaticLandmark => self.static_landmark += 1,
            PointClass::MovingObject => self.moving_object += 1,
            PointClass::TransientNoise => self.transient_noise += 1,
        }
    }

    pub fn get(&self, class: PointClass) -> usize {
        match class {
            PointClass::StaticLandmark => self.static_landmark,
            PointClass::MovingObject => self.moving_object,
            PointClass::TransientNoise => self.transient_noise,
        }
    }
}

/// Kept/deleted counts per source class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersistenceConfusion {
    pub kept: ClassCounts,
    pub deleted: ClassCounts,
}

impl PersistenceConfusion {
    /// Fraction of the class's map points absent from the snapshot.
    pub fn removed_fraction(&self, class: PointClass) -> Option<f64> {
        let total = self.kept.get(class) + self.deleted.get(class);
        (total > 0).then(|| self.deleted.get(class) as f64 / total as f64)
    }
}

/// Compares every labelled map point ever inserted against the snapshot.
pub fn persistence_oracle(labels: &HashMap<MapPointId, PointLabel>, snapshot: &MapSnapshot) -> PersistenceConfusion {
    let live: std::collections::HashSet<MapPointId> = snapshot.records.iter().map(|r| r.id).collect();
    let mut out = PersistenceConfusion::default();
    for (id, label) in labels {
        if live.contains(id) {
            out.kept.bump(label.class);
        } else {
            out.deleted.bump(label.class);
        }
    }
    out
}

/// Parameters of the procedurally generated street scene used by the
/// synthetic test suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TownOptions {
    pub frames: usize,
    /// Forward motion per frame (m).
    pub speed: f64,
    pub yaw_rate_deg: f64,
    pub transient_fraction: f64,
    pub transient_extent: [usize; 2],
    pub range_sigma: f64,
    pub seed: u64,
    pub moving_objects: bool,
    /// Frames spent accelerating from rest.
    pub ramp_frames: usize,
    /// Layout seed for building and pole placement.
    pub layout_seed: u64,
}

impl Default for TownOptions {
    fn default() -> Self {
        Self {
            frames: 100,
            speed: 1.5,
            yaw_rate_deg: 0.0,
            transient_fraction: 0.0,
            transient_extent: [2, 8],
            range_sigma: 0.0,
            seed: 0,
            moving_objects: false,
            ramp_frames: 5,
            layout_seed: 7,
        }
    }
}

impl SceneSpec {
    /// Built-in scenes by name: `town`, `town-traffic` (moving objects and
    /// 20% spurious returns) and `corridor`.
    pub fn preset(name: &str, seed: u64) -> Option<SceneSpec> {
        match name {
            "town" => Some(SceneSpec::town(&TownOptions { seed, ..Default::default() })),
            "town-traffic" => Some(SceneSpec::town(&TownOptions {
                seed,
                moving_objects: true,
                transient_fraction: 0.2,
                range_sigma: 0.01,
                ..Default::default()
            })),
            "corridor" => {
                let mut spec = SceneSpec::corridor(100, 1.0);
                spec.noise.seed = seed;
                Some(spec)
            }
            _ => None,
        }
    }

    /// A straight street lined with buildings and poles, optionally with traffic.
    pub fn town(opts: &TownOptions) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.layout_seed);
        let length = opts.frames as f64 * opts.speed;
        let (x_min, x_max) = (-70.0, length + 90.0);
        let mut statics = vec![Primitive::Plane {
            point: [0.0, 0.0, 0.0],
            normal: [0.0, 0.0, 1.0],
        }];
        for side in [1.0, -1.0] {
            let mut x = x_min + rng.random_range(0.0..6.0);
            while x < x_max {
                let len = rng.random_range(8.0..20.0);
                let setback = rng.random_range(9.0..14.0);
                let depth = rng.random_range(6.0..12.0);
                let height = rng.random_range(6.0..15.0);
                let (y0, y1) = if side > 0.0 {
                    (setback, setback + depth)
                } else {
                    (-setback - depth, -setback)
                };
                statics.push(Primitive::Box {
                    min: [x, y0, 0.0],
                    max: [x + len, y1, height],
                });
                x += len + rng.random_range(3.0..9.0);
            }
            let mut x = x_min + rng.random_range(0.0..10.0);
            while x < x_max {
                statics.push(Primitive::Pole {
                    base: [x, side * 6.5, 0.0],
                    radius: 0.15,
                    height: 6.0,
                });
                x += rng.random_range(10.0..18.0);
            }
        }

        let mut moving = Vec::new();
        if opts.moving_objects {
            // Oncoming traffic and faster cars in the ego lane's neighbour.
            let mut x = 15.0;
            while x < x_max + 100.0 {
                moving.push(MovingObject {
                    shape: Primitive::Box {
                        min: [x, -4.4, 0.0],
                        max: [x + 4.5, -2.6, 1.5],
                    },
                    velocity: [-1.5, 0.0, 0.0],
                });
                x += rng.random_range(25.0..45.0);
            }
            let mut x = -60.0;
            while x < x_max {
                moving.push(MovingObject {
                    shape: Primitive::Box {
                        min: [x, 2.6, 0.0],
                        max: [x + 4.5, 4.4, 1.5],
                    },
                    velocity: [opts.speed + 1.3, 0.0, 0.0],
                });
                x += rng.random_range(30.0..50.0);
            }
        }

        SceneSpec {
            statics,
            moving,
            sensor: SensorSpec::default(),
            trajectory: TrajectorySpec::ConstantVelocity {
                frames: opts.frames,
                start: PoseSpec {
                    translation: [0.0, 0.0, 1.8],
                    roll_deg: 0.0,
                    pitch_deg: 0.0,
                    yaw_deg: 0.0,
                },
                step: [opts.speed, 0.0, 0.0],
                yaw_rate_deg: opts.yaw_rate_deg,
                ramp_frames: opts.ramp_frames,
            },
            noise: NoiseSpec {
                range_sigma: opts.range_sigma,
                transient_fraction: opts.transient_fraction,
                transient_extent: opts.transient_extent,
                seed: opts.seed,
            },
        }
    }
}

impl SceneSpec {
    /// Indoor corridor with door gaps and pillars along both walls.
    pub fn corridor(frames: usize, step: f64) -> SceneSpec {
        let length = frames as f64 * step + 60.0;
        let mut statics = vec![
            Primitive::Plane {
                point: [0.0, 0.0, 0.0],
                normal: [0.0, 0.0, 1.0],
            },
            Primitive::Quad {
                origin: [-30.0, -4.0, 3.2],
                edge_a: [length + 30.0, 0.0, 0.0],
                edge_b: [0.0, 8.0, 0.0],
            },
        ];
        for side in [1.0, -1.0] {
            let mut x = -30.0;
            let mut k = 0;
            while x < length {
                let seg = 5.0 + 2.0 * ((k * 7 + if side > 0.0 { 3 } else { 0 }) % 4) as f64;
                statics.push(Primitive::Wall {
                    start: [x, side * 4.0],
                    end: [x + seg, side * 4.0],
                    base: 0.0,
                    height: 3.2,
                });
                // Recess behind the door gap.
                statics.push(Primitive::Wall {
                    start: [x + seg, side * 5.5],
                    end: [x + seg + 1.5, side * 5.5],
                    base: 0.0,
                    height: 3.2,
                });
                statics.push(Primitive::Pole {
                    base: [x + 0.5 * seg, side * 3.6, 0.0],
                    radius: 0.2,
                    height: 3.2,
                });
                x += seg + 1.5;
                k += 1;
            }
        }
        SceneSpec {
            statics,
            moving: vec![],
            sensor: SensorSpec {
                max_range: 40.0,
                ..SensorSpec::default()
            },
            trajectory: TrajectorySpec::ConstantVelocity {
                frames,
                start: PoseSpec {
                    translation: [0.0, 0.0, 1.5],
                    roll_deg: 0.0,
                    pitch_deg: 0.0,
                    yaw_deg: 0.0,
                },
                step: [step, 0.0, 0.0],
                yaw_rate_deg: 0.0,
                ramp_frames: 5,
            },
            noise: NoiseSpec::default(),
        }
    }

    /// Street drive past a pole that is only visible through a gap in a
    /// wall. Returns the scene and the label id of the pole.
    pub fn pole_through_gap(frames: usize, gap: (f64, f64)) -> (SceneSpec, usize) {
        let mut spec = SceneSpec::town(&TownOptions {
            frames,
            ..TownOptions::default()
        });
        // Replace the +y side of the street with a long wall with one opening.
        spec.statics.retain(|p| match p {
            Primitive::Box { min, .. } => min[1] < 0.0,
            Primitive::Pole { base, .. } => base[1] < 0.0,
            _ => true,
        });
        let far = frames as f64 * 1.2 + 100.0;
        spec.statics.push(Primitive::Wall {
            start: [-80.0, 4.0],
            end: [gap.0, 4.0],
            base: 0.0,
            height: 5.0,
        });
        spec.statics.push(Primitive::Wall {
            start: [gap.1, 4.0],
            end: [far, 4.0],
            base: 0.0,
            height: 5.0,
        });
        spec.statics.push(Primitive::Pole {
            base: [0.5 * (gap.0 + gap.1), 9.0, 0.0],
            radius: 0.2,
            height: 4.0,
        });
        let pole = spec.statics.len() - 1;
        (spec, pole)
    }
}

/// Renders a scene frame by frame as a scan source.
#[derive(Debug, Clone)]
pub struct SynthSource {
    spec: SceneSpec,
    poses: Vec<Pose>,
    next: usize,
    last: Option<LabeledScan>,
}

impl SynthSource {
    pub fn new(spec: SceneSpec) -> Self {
        let poses = spec.ground_truth();
        Self {
            spec,
            poses,
            next: 0,
            last: None,
        }
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn ground_truth(&self) -> &[Pose] {
        &self.poses
    }

    /// The most recently rendered frame with its labels.
    pub fn last_labeled(&self) -> Option<&LabeledScan> {
        self.last.as_ref()
    }
}

impl crate::odometry::ScanSource for SynthSource {
    fn next_scan(&mut self) -> Result<Option<Scan>> {
        if self.next >= self.poses.len() {
            return Ok(None);
        }
        let ls = render_with_poses(&self.spec, &self.poses, self.next);
        self.next += 1;
        let scan = ls.scan.clone();
        self.last = Some(ls);
        Ok(Some(scan))
    }

    fn len_hint(&self) -> Option<usize> {
        Some(self.poses.len() - self.next)
    }
}
