use serde::{Deserialize, Serialize};

use crate::geometry::Point3;

/// One return of a spinning multi-beam LiDAR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawPoint {
    /// Sensor-frame position at acquisition time.
    pub position: Point3,
    pub intensity: f32,
    pub ring: u16,
    /// Fraction of the sweep elapsed when the point was measured, in `[0, 1]`.
    pub rel_time: f64,
}

impl RawPoint {
    pub fn new(position: Point3, ring: u16, rel_time: f64) -> Self {
        Self {
            position,
            intensity: 0.0,
            ring,
            rel_time,
        }
    }

    pub fn range(&self) -> f64 {
        self.position.norm()
    }
}

/// A full sweep. Points are grouped by ring in ascending ring order and
/// sorted by acquisition order (azimuth) within each ring.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub frame_index: usize,
    pub ring_count: u16,
    pub points: Vec<RawPoint>,
}

impl Scan {
    pub fn new(frame_index: usize, ring_count: u16, points: Vec<RawPoint>) -> Self {
        Self {
            frame_index,
            ring_count,
            points,
        }
    }

    /// Stable-sort the points into ring/acquisition order.
    pub fn from_unordered(frame_index: usize, ring_count: u16, mut points: Vec<RawPoint>) -> Self {
        points.sort_by(|a, b| a.ring.cmp(&b.ring).then(a.rel_time.total_cmp(&b.rel_time)));
        Self::new(frame_index, ring_count, points)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Index ranges of each ring inside `points`, indexed by ring id.
    pub fn ring_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges = vec![0..0; self.ring_count as usize];
        let mut start = 0;
        while start < self.points.len() {
            let ring = self.points[start].ring;
            let mut end = start + 1;
            while end < self.points.len() && self.points[end].ring == ring {
                end += 1;
            }
            if let Some(r) = ranges.get_mut(ring as usize) {
                *r = start..end;
            }
            start = end;
        }
        ranges
    }

    /// Checks the grouping and ordering invariants.
    pub fn is_well_formed(&self) -> bool {
        self.points.windows(2).all(|w| {
            w[0].ring < w[1].ring || (w[0].ring == w[1].ring && w[0].rel_time <= w[1].rel_time)
        }) && self.points.iter().all(|p| {
            p.ring < self.ring_count
                && (0.0..=1.0).contains(&p.rel_time)
                && p.position.iter().all(|c| c.is_finite())
        })
    }
}

/// Beam layout of a spinning LiDAR: `ring_count` lasers spaced uniformly in
/// elevation, sweeping clockwise seen from above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarModel {
    pub ring_count: u16,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    /// Sweep azimuth (see [`sweep_azimuth`]) at which a sweep starts, in
    /// degrees. When unset the first point of each scan defines the start.
    pub sweep_start_deg: Option<f64>,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self::HDL_64E
    }
}

impl LidarModel {
    /// Velodyne HDL-64E as mounted on the KITTI car.
    pub const HDL_64E: LidarModel = LidarModel {
        ring_count: 64,
        min_elevation_deg: -24.8,
        max_elevation_deg: 2.0,
        sweep_start_deg: None,
    };

    pub fn ring_spacing_deg(&self) -> f64 {
        if self.ring_count < 2 {
            0.0
        } else {
            (self.max_elevation_deg - self.min_elevation_deg) / (self.ring_count - 1) as f64
        }
    }

    pub fn ring_elevation(&self, ring: u16) -> f64 {
        (self.min_elevation_deg + ring as f64 * self.ring_spacing_deg()).to_radians()
    }

    /// Nearest ring for a direction, clamped to the valid range.
    pub fn ring_of(&self, p: &Point3) -> u16 {
        let horiz = (p.x * p.x + p.y * p.y).sqrt();
        let elev = p.z.atan2(horiz).to_degrees();
        let spacing = self.ring_spacing_deg();
        if spacing == 0.0 {
            return 0;
        }
        let idx = ((elev - self.min_elevation_deg) / spacing).round();
        idx.clamp(0.0, (self.ring_count - 1) as f64) as u16
    }
}

/// Sweep angle of `p`, increasing in the clockwise scan direction.
pub fn sweep_azimuth(p: &Point3) -> f64 {
    -p.y.atan2(p.x)
}

/// Fraction of the sweep elapsed at azimuth `az` for a sweep starting at `start`.
pub fn rel_time_from_azimuth(az: f64, start: f64) -> f64 {
    (az - start).rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn ring_ranges_follow_grouping() {
        let pts = vec![
            RawPoint::new(Vector3::new(1.0, 0.0, 0.0), 2, 0.5),
            RawPoint::new(Vector3::new(1.0, 0.0, 0.0), 0, 0.7),
            RawPoint::new(Vector3::new(1.0, 0.0, 0.0), 0, 0.1),
        ];
        let scan = Scan::from_unordered(0, 3, pts);
        assert!(scan.is_well_formed());
        assert_eq!(scan.ring_ranges(), vec![0..2, 0..0, 2..3]);
        assert_eq!(scan.points[0].rel_time, 0.1);
    }

    #[test]
    fn ring_binning_recovers_ring_elevations() {
        let model = LidarModel::HDL_64E;
        for ring in 0..64 {
            let e = model.ring_elevation(ring);
            let p = Vector3::new(10.0 * e.cos() * 0.3f64.cos(), 10.0 * e.cos() * 0.3f64.sin(), 10.0 * e.sin());
            assert_eq!(model.ring_of(&p), ring);
        }
        assert_eq!(model.ring_of(&Vector3::new(1.0, 0.0, 5.0)), 63);
        assert_eq!(model.ring_of(&Vector3::new(1.0, 0.0, -5.0)), 0);
    }

    #[test]
    fn rel_time_wraps_around() {
        let start = 3.0;
        assert_eq!(rel_time_from_azimuth(start, start), 0.0);
        let t = rel_time_from_azimuth(start - 0.1, start);
        assert!((t - (1.0 - 0.1 / std::f64::consts::TAU)).abs() < 1e-12);
    }
}
