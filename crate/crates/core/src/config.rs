//! Run configuration shared by the command-line tools.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odometry::PipelineConfig;

/// Where scans come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InputSpec {
    /// Directory of velodyne `.bin` files.
    Kitti(PathBuf),
    /// Scene file, or one of the built-in scene names.
    Synth(String),
}

impl InputSpec {
    pub const PRESETS: [&'static str; 3] = ["town", "town-traffic", "corridor"];

    pub fn parse(text: &str) -> Result<Self> {
        if let Some(rest) = text.strip_prefix("synth:") {
            if rest.is_empty() {
                return Err(Error::Config("synth: input needs a scene path or preset name".into()));
            }
            Ok(InputSpec::Synth(rest.to_string()))
        } else {
            let rest = text.strip_prefix("kitti:").unwrap_or(text);
            if rest.is_empty() {
                return Err(Error::Config("empty input path".into()));
            }
            Ok(InputSpec::Kitti(PathBuf::from(rest)))
        }
    }

    /// Built-in preset name, if the synthetic input refers to one and no
    /// file of that name exists.
    pub fn preset(&self) -> Option<&str> {
        match self {
            InputSpec::Synth(name) if !Path::new(name).exists() && Self::PRESETS.contains(&name.as_str()) => {
                Some(name.as_str())
            }
            _ => None,
        }
    }

    /// Filesystem path the input depends on, if any.
    pub fn path(&self) -> Option<&Path> {
        match self {
            InputSpec::Kitti(p) => Some(p),
            InputSpec::Synth(_) if self.preset().is_some() => None,
            InputSpec::Synth(p) => Some(Path::new(p)),
        }
    }
}

impl TryFrom<String> for InputSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        InputSpec::parse(&s)
    }
}

impl From<InputSpec> for String {
    fn from(i: InputSpec) -> String {
        match i {
            InputSpec::Kitti(p) => format!("kitti:{}", p.display()),
            InputSpec::Synth(s) => format!("synth:{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a PLY map snapshot every this many frames; 0 disables it.
    pub ply_every: usize,
    /// Write the final map as PLY.
    pub final_map: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            ply_every: 0,
            final_map: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputSpec,
    /// Ground-truth poses for evaluation after the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calib: Option<PathBuf>,
    /// Process at most this many frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_frames: Option<usize>,
    /// Overrides the noise seed of synthetic scenes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn new(input: InputSpec) -> Self {
        Self {
            input,
            ground_truth: None,
            calib: None,
            max_frames: None,
            seed: None,
            pipeline: PipelineConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run configs always serialize")
    }

    /// Checks parameters and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        let inputs = [self.input.path(), self.ground_truth.as_deref(), self.calib.as_deref()];
        for path in inputs.into_iter().flatten() {
            if !path.exists() {
                return Err(Error::Config(format!("input path {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_parsing() {
        assert_eq!(InputSpec::parse("synth:town").unwrap(), InputSpec::Synth("town".into()));
        assert_eq!(InputSpec::parse("data/07").unwrap(), InputSpec::Kitti("data/07".into()));
        assert_eq!(InputSpec::parse("kitti:data/07").unwrap(), InputSpec::Kitti("data/07".into()));
        assert!(InputSpec::parse("synth:").is_err());
        assert_eq!(InputSpec::Synth("town".into()).preset(), Some("town"));
        assert_eq!(InputSpec::Synth("nope.toml".into()).preset(), None);
    }

    #[test]
    fn toml_round_trip_and_missing_path() {
        let mut cfg = RunConfig::new(InputSpec::Synth("town".into()));
        cfg.seed = Some(3);
        cfg.pipeline.filter.theta_p = 1.2;
        let text = cfg.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        cfg.validate().unwrap();
        let missing = RunConfig::new(InputSpec::Kitti("/definitely/not/here".into()));
        let err = missing.validate().unwrap_err().to_string();
        assert!(err.contains("/definitely/not/here"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("input = \"synth:town\"\nbogus = 1\n").is_err());
    }
}
