//! `pfilter`: run, evaluate, ablate and generate synthetic data.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pfilter_core::ExtractionMethod;

#[derive(Parser, Debug)]
#[command(name = "pfilter", version, about = "LiDAR odometry with a persistence-filtered feature map")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run odometry over a sequence and write trajectory, stats and maps.
    Run(RunArgs),
    /// Compare an estimated trajectory with ground truth.
    Eval(EvalArgs),
    /// Run a grid over theta_p x theta_max x kappa_new.
    Ablate(AblateArgs),
    /// Render a synthetic scene to velodyne files, poses and labels.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ring,
    Eigen,
}

impl From<Method> for ExtractionMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Ring => ExtractionMethod::Ring,
            Method::Eigen => ExtractionMethod::Eigen,
        }
    }
}

/// Options shared by `run` and `ablate`. Flags override the config file.
#[derive(Args, Debug, Clone)]
pub struct BaseArgs {
    /// Sequence directory (`kitti:` prefix optional), or `synth:<preset|scene.toml>`.
    #[arg(long)]
    pub input: Option<String>,
    /// Run configuration in TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub pfilter: Option<OnOff>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Noise seed for synthetic inputs.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ground-truth poses (KITTI format) for evaluation.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// KITTI calib.txt whose `Tr` maps LiDAR to camera coordinates.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long)]
    pub max_frames: Option<usize>,
    /// Print a JSON summary instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub base: BaseArgs,
    #[arg(long)]
    pub theta_p: Option<f64>,
    #[arg(long)]
    pub theta_max: Option<f64>,
    #[arg(long)]
    pub kappa_new: Option<usize>,
    /// Write a PLY map snapshot every N frames.
    #[arg(long)]
    pub ply_every: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub base: BaseArgs,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub theta_p: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub theta_max: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub kappa_new: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Preset name (town, town-traffic, corridor) or scene TOML file.
    #[arg(long)]
    pub scene: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::run(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
