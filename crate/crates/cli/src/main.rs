use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spacnet_cli::commands::{self, InterfaceOptions, Predictor};
use spacnet_cli::points::{ply_string, write_points, xyz_string, PointFormat};
use spacnet_cli::{CliError, ExperimentManifest, Result};
use spacnet_core::interface::{InterfaceConfig, InterfaceMode};
use spacnet_core::{Point3, PointCloud};

#[derive(Parser)]
#[command(name = "spacnet", version, about = "Interface-guided point cloud completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Occlusion,
    Edges,
}

impl From<Mode> for InterfaceMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Occlusion => InterfaceMode::OcclusionPoint,
            Mode::Edges => InterfaceMode::EdgeDetection,
        }
    }
}

#[derive(Args)]
struct ManifestArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Overrides the manifest's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the manifest's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<PointFormat>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
}

impl ManifestArgs {
    fn load(&self) -> Result<ExperimentManifest> {
        let mut m = ExperimentManifest::load(&self.manifest)?;
        if let Some(s) = self.seed {
            m.seed = s;
        }
        if let Some(o) = &self.out {
            m.out_dir = o.clone();
        }
        if let Some(f) = self.format {
            m.format = f;
        }
        if let Some(mode) = self.mode {
            m.interface.mode = mode.into();
        }
        if let Some(d) = self.delta {
            m.interface.delta = d;
        }
        if let Some(r) = self.radius {
            m.interface.radius_r = r;
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Args)]
struct InterfaceArgs {
    /// Interface mode; defaults to occlusion when --occlusion is given, edges otherwise.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Occlusion point as x,y,z.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    occlusion: Option<Point3>,
    #[arg(long, default_value_t = InterfaceConfig::default().delta)]
    delta: f64,
    #[arg(long, default_value_t = InterfaceConfig::default().radius_r)]
    radius: f64,
}

impl InterfaceArgs {
    fn options(&self, n_t: usize) -> InterfaceOptions {
        let mode = self.mode.unwrap_or(if self.occlusion.is_some() { Mode::Occlusion } else { Mode::Edges });
        InterfaceOptions { mode: mode.into(), occlusion: self.occlusion, n_t, radius: self.radius, delta: self.delta }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the default desk-scale manifest.
    Manifest,
    /// Generate the train and test splits described by a manifest.
    Synth(ManifestArgs),
    /// Color the detected interface of a scan.
    Interface {
        input: PathBuf,
        #[command(flatten)]
        iface: InterfaceArgs,
        /// Number of interface points in occlusion mode.
        #[arg(long, default_value_t = InterfaceConfig::default().n_t)]
        n_t: usize,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PointFormat::Ply)]
        format: PointFormat,
    },
    /// Train on the train split and write model.ckpt and train_log.json.
    Train(ManifestArgs),
    /// Complete one scan with a trained checkpoint.
    Complete {
        checkpoint: PathBuf,
        input: PathBuf,
        #[command(flatten)]
        iface: InterfaceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PointFormat::Ply)]
        format: PointFormat,
    },
    /// Score the test split and write report.json.
    Eval {
        /// Checkpoint to evaluate; omit with --ground-truth.
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        manifest: ManifestArgs,
        /// Score the ground truth against itself.
        #[arg(long, conflicts_with = "checkpoint")]
        ground_truth: bool,
        /// Print the JSON report instead of the table.
        #[arg(long)]
        json: bool,
    },
}

fn parse_point(s: &str) -> std::result::Result<Point3, String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"))).collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Point3::new(*x, *y, *z)),
        _ => Err(format!("expected three finite numbers x,y,z, got '{s}'")),
    }
}

fn emit(out: Option<&Path>, cloud: &PointCloud, colors: &[[u8; 3]], format: PointFormat) -> Result<()> {
    match out {
        Some(path) => write_points(path, cloud, Some(colors), format),
        None => {
            let text = match format {
                PointFormat::Ply => ply_string(cloud, Some(colors)),
                PointFormat::Xyz => xyz_string(cloud),
            };
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Manifest => println!("{}", ExperimentManifest::desk().to_json()),
        Command::Synth(args) => {
            let m = args.load()?;
            let index = commands::synth(&m)?;
            let train = index.samples.iter().filter(|s| s.split == spacnet_cli::dataset::Split::Train).count();
            println!(
                "wrote {train} train and {} test samples to {}",
                index.samples.len() - train,
                m.out_dir.display()
            );
        }
        Command::Interface { input, iface, n_t, out, format } => {
            let (cloud, result) = commands::interface(&input, &iface.options(n_t))?;
            eprintln!("{} of {} points on the interface", result.len(), cloud.len());
            emit(out.as_deref(), &cloud, &commands::interface_colors(cloud.len(), &result), format)?;
        }
        Command::Train(args) => {
            let m = args.load()?;
            let outcome = commands::train_model(&m, |line| println!("{line}"))?;
            println!("checkpoint written to {}", outcome.checkpoint.display());
        }
        Command::Complete { checkpoint, input, iface, out, format } => {
            let c = commands::complete(&checkpoint, &input, &iface.options(InterfaceConfig::default().n_t))?;
            eprintln!("{} scan points + {} predicted", c.partial.len(), c.missing.len());
            emit(out.as_deref(), &c.complete, &c.colors(), format)?;
        }
        Command::Eval { checkpoint, manifest, ground_truth, json } => {
            let m = manifest.load()?;
            let predictor = match (&checkpoint, ground_truth) {
                (Some(path), false) => Predictor::Model(path),
                (None, true) => Predictor::GroundTruth,
                _ => return Err(CliError::Validation("give a checkpoint or --ground-truth".into())),
            };
            let report = commands::eval(&m, predictor)?;
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_table());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
