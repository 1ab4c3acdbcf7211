//! Dataset ingestion, trajectory output, evaluation and map export.

pub mod eval;
pub mod kitti;
pub mod ply;

pub use eval::{kitti_ate, trajectory_distances, EvalReport, LengthError, EVAL_LENGTHS, EVAL_STRIDE};
pub use kitti::{
    load_calib, load_kitti_poses, load_kitti_scan, load_kitti_scan_with, write_kitti_scan, write_trajectory_kitti,
    KittiSequence,
};
pub use ply::{export_map_ply, pindex_color};
