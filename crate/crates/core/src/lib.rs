//! Scan-to-map LiDAR odometry with a persistence-filtered local feature map.
//!
//! Every map point carries a discounted detection count (its p-Index).
//! Points that stop being matched are deleted, points matched often enough
//! become permanent, and new points get a short grace window. The pipeline
//! runs extraction, de-skewing, matching, pose optimisation and the map
//! update for each sweep.

pub mod config;
pub mod deskew;
pub mod error;
pub mod features;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod map;
pub mod odometry;
pub mod registration;
pub mod scan;
pub mod synth;

pub use config::{InputSpec, OutputConfig, RunConfig};
pub use deskew::{deskew_point, predict_initial_pose, MotionState};
pub use error::{Error, Result};
pub use features::{
    compute_smoothness, extract_features, local_covariance_eigenvalues, ExtractionConfig, ExtractionMethod,
    FeatureKind, FeaturePoint, FeatureSet,
};
pub use geometry::{compose, se3_exp, se3_log, transform_point, Point3, Pose, Twist};
pub use map::{
    FeatureObservation, FilterParams, LocalFeatureMap, MapPoint, MapPointId, MapSnapshot, ThresholdConvention,
    UpdateReport,
};
pub use odometry::{
    run_sequence, run_sequence_with, FrameOutput, FrameStats, MeanStats, Odometry, PipelineConfig, ScanSource,
    SequenceResult, Trajectory, VecSource,
};
pub use registration::{solve_pose, SolverConfig};
pub use scan::{LidarModel, RawPoint, Scan};
pub use synth::{persistence_oracle, render_scan, LabeledScan, PointClass, PointLabel, ProvenanceLedger, SceneSpec, SynthSource};
