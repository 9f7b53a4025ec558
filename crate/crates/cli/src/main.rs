use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ric_core::config::PipelineConfig;
use ric_core::fixture::{make_fixture, FixtureKind, FixtureParams};
use ric_core::io::{read_ply, SceneInput};
use ric_core::metrics::{evaluate, CdUnits, EvalOptions, DEFAULT_RESOLUTION, DEFAULT_TAU_FRACTION};
use ric_core::pipeline::Pipeline;
use ric_core::view_select::select_viewpoints;
use ric_core::{Error, Result};

#[derive(Parser)]
#[command(name = "ric", version, about = "Single-view RGB-D scene completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Units {
    Meters,
    UnitCube,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Plane,
    BoxOnPlane,
    SphereOnPlane,
}

#[derive(clap::Args)]
struct InputArgs {
    /// 8-bit RGB PNG.
    #[arg(long)]
    rgb: PathBuf,
    /// 16-bit depth PNG.
    #[arg(long)]
    depth: PathBuf,
    /// Intrinsics JSON (fx, fy, cx, cy, width, height, depth_scale).
    #[arg(long)]
    intrinsics: PathBuf,
    /// TOML or JSON pipeline configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl InputArgs {
    fn load(&self) -> Result<(ric_core::RgbdFrame, PipelineConfig)> {
        let frame = SceneInput {
            rgb: self.rgb.clone(),
            depth: self.depth.clone(),
            intrinsics: self.intrinsics.clone(),
        }
        .load()?;
        let config = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        Ok((frame, config))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Complete a scene and write the fused point cloud.
    Run {
        #[command(flatten)]
        input: InputArgs,
        /// Output PLY.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth PLY to evaluate against.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Directory for per-view intermediates.
        #[arg(long)]
        debug_dir: Option<PathBuf>,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare a predicted cloud against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: usize,
        /// F-Score threshold as a fraction of the ground-truth bounding-box diagonal.
        #[arg(long, default_value_t = DEFAULT_TAU_FRACTION)]
        tau: f64,
        #[arg(long, value_enum, default_value = "unit-cube")]
        cd_units: Units,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic scene with exact ground truth.
    Fixture {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 160)]
        width: usize,
        #[arg(long, default_value_t = 120)]
        height: usize,
        #[arg(long, default_value_t = 150.0)]
        focal: f64,
    },
    /// Print the selected viewpoints as JSON.
    SelectViews {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            input,
            out,
            gt,
            debug_dir,
            seed,
        } => {
            let (frame, mut config) = input.load()?;
            if debug_dir.is_some() {
                config.debug_dir = debug_dir;
            }
            if seed.is_some() {
                config.seed = seed;
            }
            let gt_cloud = gt.as_deref().map(read_ply).transpose()?;
            let pipeline = Pipeline::from_config(config)?;
            let output = pipeline.run_to_file(&frame, &out)?;
            println!(
                "wrote {} points ({} input, {} predicted) to {}",
                output.cloud.len(),
                output.input_points,
                output.cloud.len() - output.input_points,
                out.display()
            );
            for v in output.views.iter().filter(|v| v.error.is_some()) {
                println!(
                    "view {} failed: {}",
                    v.view_id,
                    v.error.as_deref().unwrap_or_default()
                );
            }
            if let Some(gt) = gt_cloud {
                let report = evaluate(&output.cloud.points, &gt.points, &EvalOptions::default())?;
                println!("{report}");
            }
            Ok(())
        }
        Command::Evaluate {
            pred,
            gt,
            resolution,
            tau,
            cd_units,
            json,
        } => {
            let options = EvalOptions {
                resolution,
                tau_fraction: tau,
                cd_units: match cd_units {
                    Units::Meters => CdUnits::Meters,
                    Units::UnitCube => CdUnits::UnitCube,
                },
            };
            let report = evaluate(&read_ply(&pred)?.points, &read_ply(&gt)?.points, &options)?;
            if json {
                println!("{}", report.to_json());
            } else {
                println!("{report}");
            }
            Ok(())
        }
        Command::Fixture {
            kind,
            out_dir,
            width,
            height,
            focal,
        } => {
            let kind = match kind {
                Kind::Plane => FixtureKind::Plane,
                Kind::BoxOnPlane => FixtureKind::BoxOnPlane,
                Kind::SphereOnPlane => FixtureKind::SphereOnPlane,
            };
            let params = FixtureParams {
                width,
                height,
                focal,
                ..Default::default()
            };
            let files = make_fixture(kind, &params)?.write(&out_dir)?;
            println!("rgb        {}", files.input.rgb.display());
            println!("depth      {}", files.input.depth.display());
            println!("intrinsics {}", files.input.intrinsics.display());
            println!("gt         {}", files.ground_truth.display());
            Ok(())
        }
        Command::SelectViews { input } => {
            let (frame, config) = input.load()?;
            let views = select_viewpoints(&frame, &config.view_selection)?;
            let json: Vec<_> = views
                .iter()
                .map(|v| {
                    serde_json::json!({
                        "direction_index": v.direction_index,
                        "angle_deg": v.angle,
                        "context": v.context,
                        "camera_center": v.pose.camera_center().as_slice(),
                        "rotation": v.pose.rotation.transpose().as_slice(),
                        "translation": v.pose.translation.as_slice(),
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&json)?);
            Ok(())
        }
        Command::DefaultConfig => {
            print!("{}", PipelineConfig::default().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
