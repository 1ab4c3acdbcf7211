//! KITTI odometry file formats: velodyne `.bin` scans, pose lists and the
//! `Tr:` calibration line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Matrix3x4;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::odometry::ScanSource;
use crate::scan::{rel_time_from_azimuth, sweep_azimuth, LidarModel, RawPoint, Scan};

const RECORD_BYTES: usize = 16;

/// Reads a scan with the default HDL-64E beam model.
pub fn load_kitti_scan(path: &Path) -> Result<Scan> {
    load_kitti_scan_with(path, 0, &LidarModel::default())
}

pub fn load_kitti_scan_with(path: &Path, frame_index: usize, model: &LidarModel) -> Result<Scan> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_kitti_scan(&bytes, path, frame_index, model)
}

/// Decodes packed little-endian `f32` quadruples `(x, y, z, intensity)`.
///
/// Rings come from elevation binning and relative times from the sweep
/// azimuth, since the format stores neither.
pub fn parse_kitti_scan(bytes: &[u8], path: &Path, frame_index: usize, model: &LidarModel) -> Result<Scan> {
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::ScanSize {
            path: path.to_path_buf(),
            len: bytes.len(),
            offset: bytes.len() - bytes.len() % RECORD_BYTES,
        });
    }
    let mut raw = Vec::with_capacity(bytes.len() / RECORD_BYTES);
    for rec in bytes.chunks_exact(RECORD_BYTES) {
        let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().expect("4-byte slice"));
        raw.push(([f(0) as f64, f(1) as f64, f(2) as f64], f(3)));
    }
    let start = match model.sweep_start_deg {
        Some(deg) => deg.to_radians(),
        None => raw
            .first()
            .map(|(p, _)| sweep_azimuth(&(*p).into()))
            .unwrap_or(0.0),
    };
    let points = raw
        .into_iter()
        .map(|(p, intensity)| {
            let position = p.into();
            RawPoint {
                position,
                intensity,
                ring: model.ring_of(&position),
                rel_time: rel_time_from_azimuth(sweep_azimuth(&position), start),
            }
        })
        .collect();
    Ok(Scan::from_unordered(frame_index, model.ring_count, points))
}

pub fn encode_kitti_scan(scan: &Scan) -> Vec<u8> {
    let mut out = Vec::with_capacity(scan.len() * RECORD_BYTES);
    for p in &scan.points {
        for v in [p.position.x as f32, p.position.y as f32, p.position.z as f32, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_kitti_scan(scan: &Scan, path: &Path) -> Result<()> {
    fs::write(path, encode_kitti_scan(scan)).map_err(|e| Error::io(path, e))
}

fn parse_numbers(text: &str, path: &Path, line: usize) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("not a number: {tok:?}"),
            })
        })
        .collect()
}

fn pose_from_row(values: &[f64], path: &Path, line: usize) -> Result<Pose> {
    if values.len() != 12 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("expected 12 values, found {}", values.len()),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: "non-finite value".into(),
        });
    }
    Ok(Pose::from_matrix3x4(&Matrix3x4::from_row_slice(values)))
}

/// Reads the LiDAR-to-camera transform from the `Tr:` line of `calib.txt`.
pub fn load_calib(path: &Path) -> Result<Pose> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calib(&text, path)
}

pub fn parse_calib(text: &str, path: &Path) -> Result<Pose> {
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.trim_start().strip_prefix("Tr:") {
            let values = parse_numbers(rest, path, i + 1)?;
            return pose_from_row(&values, path, i + 1);
        }
    }
    Err(Error::Parse {
        path: path.to_path_buf(),
        line: text.lines().count(),
        message: "no `Tr:` line".into(),
    })
}

/// Reads a KITTI pose file; with a calibration the camera-frame poses are
/// re-expressed in the LiDAR frame as `Tr⁻¹ · P · Tr`.
pub fn load_kitti_poses(path: &Path, calib: Option<&Pose>) -> Result<Vec<Pose>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kitti_poses(&text, path, calib)
}

pub fn parse_kitti_poses(text: &str, path: &Path, calib: Option<&Pose>) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values = parse_numbers(line, path, i + 1)?;
        let cam = pose_from_row(&values, path, i + 1)?;
        poses.push(match calib {
            Some(tr) => tr.inverse().compose(&cam).compose(tr),
            None => cam,
        });
    }
    Ok(poses)
}

pub fn format_kitti_poses(poses: &[Pose], calib: Option<&Pose>) -> String {
    let mut out = String::new();
    for pose in poses {
        let p = match calib {
            Some(tr) => tr.compose(pose).compose(&tr.inverse()),
            None => *pose,
        };
        let m = p.to_matrix3x4();
        let row: Vec<String> = (0..3)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .map(|(r, c)| format!("{:e}", m[(r, c)]))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Writes one 12-value row-major line per pose, mapping LiDAR-frame poses
/// back to the camera frame when a calibration is given.
pub fn write_trajectory_kitti(poses: &[Pose], calib: Option<&Pose>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(format_kitti_poses(poses, calib).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Velodyne scans of one sequence directory, read lazily in file-name order.
///
/// The directory holds `velodyne/*.bin` (or the `.bin` files directly) and
/// optionally `sensor.toml` describing the beam layout.
#[derive(Debug, Clone)]
pub struct KittiSequence {
    files: Vec<PathBuf>,
    model: LidarModel,
    next: usize,
}

impl KittiSequence {
    pub fn open(dir: &Path) -> Result<Self> {
        let sensor = dir.join("sensor.toml");
        let model = if sensor.exists() {
            let text = fs::read_to_string(&sensor).map_err(|e| Error::io(&sensor, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", sensor.display())))?
        } else {
            LidarModel::default()
        };
        let velodyne = dir.join("velodyne");
        let scan_dir = if velodyne.is_dir() { velodyne } else { dir.to_path_buf() };
        let mut files = Vec::new();
        for entry in fs::read_dir(&scan_dir).map_err(|e| Error::io(&scan_dir, e))? {
            let path = entry.map_err(|e| Error::io(&scan_dir, e))?.path();
            if path.extension().is_some_and(|x| x == "bin") {
                files.push(path);
            }
        }
        files.sort();
        Ok(Self { files, model, next: 0 })
    }

    pub fn with_model(mut self, model: LidarModel) -> Self {
        self.model = model;
        self
    }

    pub fn model(&self) -> &LidarModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Stops after the first `n` scans.
    pub fn truncate(&mut self, n: usize) {
        self.files.truncate(n);
    }
}

impl ScanSource for KittiSequence {
    fn next_scan(&mut self) -> Result<Option<Scan>> {
        let Some(path) = self.files.get(self.next) else {
            return Ok(None);
        };
        let scan = load_kitti_scan_with(path, self.next, &self.model)?;
        self.next += 1;
        Ok(Some(scan))
    }

    fn len_hint(&self) -> Option<usize> {
        Some(self.files.len() - self.next)
    }
}
