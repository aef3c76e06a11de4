use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eit_core::cli_io::{
    evaluate_files, export_plot, generate_dataset, parse_angle, reconstruct, sweep_frequency, sweep_noise, DatasetOptions,
    GridInput, Method, ReconstructOptions, SceneInput,
};
use eit_core::error::{EitError, Result};
use eit_core::metrics::EvalReport;
use eit_core::mesh::{build_disk_mesh, TriMesh, REFERENCE_LEVEL};
use eit_core::phantom::Preset;
use eit_core::pinn::InverseConfig;

/// Electrical impedance tomography on the unit disk.
#[derive(Parser)]
#[command(name = "eit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with one directory per record.
    Generate {
        /// Records per phantom category.
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Lower end of the per-record SNR range in dB.
        #[arg(long, default_value_t = 40.0)]
        snr_min: f64,
        /// Upper end of the per-record SNR range in dB.
        #[arg(long, default_value_t = 60.0)]
        snr_max: f64,
        #[arg(long, default_value_t = REFERENCE_LEVEL)]
        mesh_level: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct σ from a record, a preset or an imported frame.
    Reconstruct {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inverse-network reconstructions of a preset at several frequencies.
    SweepFreq {
        /// Preset phantom name.
        #[arg(long, default_value = "case1")]
        preset: String,
        /// Comma-separated frequencies, e.g. `pi/8,pi/4,pi/2`.
        #[arg(long, value_delimiter = ',', default_value = "pi/8,pi/4,pi/2")]
        omega: Vec<String>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstructions at several noise levels.
    SweepNoise {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated SNR levels in dB.
        #[arg(long, value_delimiter = ',', default_value = "20,40,60")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an 8-bit grayscale PGM and a JSON range sidecar for a grid file.
    ExportPlot {
        grid: PathBuf,
        /// Output path without extension; defaults to the grid path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print metrics of a σ grid against a σ grid or phantom JSON.
    Evaluate {
        estimate: PathBuf,
        truth: PathBuf,
        #[arg(long, default_value = "custom")]
        case: String,
        #[arg(long, default_value = "unknown")]
        method: String,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Dataset record directory.
    #[arg(long, group = "source")]
    record: Option<PathBuf>,
    /// Preset phantom name (case1..case6, medical).
    #[arg(long, group = "source")]
    preset: Option<String>,
    /// Measured frame, binary or CSV.
    #[arg(long, group = "source")]
    frame: Option<PathBuf>,
    /// Ground truth for an imported frame: σ grid file or phantom JSON.
    #[arg(long, requires = "frame")]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config entry; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Network initialization seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Training iterations; overrides the config.
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// pinn, noser, l2 or tv.
    #[arg(long, default_value = "pinn")]
    method: String,
    /// Comma-separated potential grid files, one per excitation; FEM grids
    /// are used when absent.
    #[arg(long, value_delimiter = ',')]
    grids: Vec<PathBuf>,
    /// Baseline regularization weight; swept against the truth when absent.
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long, default_value_t = REFERENCE_LEVEL)]
    mesh_level: u32,
    #[command(flatten)]
    config: ConfigArgs,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| EitError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl ConfigArgs {
    fn resolve(&self) -> Result<InverseConfig> {
        let mut config = match &self.config {
            Some(p) => InverseConfig::from_kv(&read_text(p)?)?,
            None => InverseConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| EitError::Usage(format!("--set expects KEY=VALUE, got {kv}")))?;
            if !config.set(k.trim(), v.trim())? {
                return Err(EitError::InvalidConfig(format!("unknown key {}", k.trim())));
            }
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(n) = self.iterations {
            config.iterations = n;
        }
        config.validate()?;
        Ok(config)
    }
}

fn preset(name: &str) -> Result<Preset> {
    Preset::from_name(name).ok_or_else(|| EitError::Usage(format!("unknown preset {name}")))
}

impl InputArgs {
    fn scene(&self) -> Result<SceneInput> {
        match (&self.record, &self.preset, &self.frame) {
            (Some(r), None, None) => Ok(SceneInput::Record(r.clone())),
            (None, Some(p), None) => Ok(SceneInput::Preset(preset(p)?)),
            (None, None, Some(f)) => Ok(SceneInput::Imported {
                frame: f.clone(),
                truth: self.truth.clone(),
            }),
            _ => Err(EitError::Usage("give exactly one of --record, --preset, --frame".into())),
        }
    }
}

impl RunArgs {
    fn options(&self) -> Result<(ReconstructOptions, TriMesh)> {
        let method = Method::from_name(&self.method)
            .ok_or_else(|| EitError::Usage(format!("unknown method {}; expected pinn, noser, l2 or tv", self.method)))?;
        let grids = if self.grids.is_empty() {
            GridInput::Fem
        } else {
            GridInput::Files(self.grids.clone())
        };
        let options = ReconstructOptions {
            method,
            grids,
            config: self.config.resolve()?,
            lambda: self.reg,
            noise: None,
        };
        Ok((options, build_disk_mesh(self.mesh_level)))
    }
}

fn print_report(r: &EvalReport) {
    println!("{}: ssim {:.4} cc {:.4} rie {:.4}", r.method, r.ssim, r.cc, r.rie);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            count,
            seed,
            snr_min,
            snr_max,
            mesh_level,
            out,
        } => {
            let options = DatasetOptions {
                count_per_category: count,
                seed,
                snr_min,
                snr_max,
                mesh_level,
                ..Default::default()
            };
            let rows = generate_dataset(&options, &out)?;
            println!("wrote {} records to {}", rows.len(), out.display());
        }
        Command::Reconstruct { input, run, out } => {
            let (options, mesh) = run.options()?;
            let res = reconstruct(&input.scene()?, &options, &mesh, &out)?;
            match &res.report {
                Some(r) => print_report(r),
                None => println!("wrote {}", out.join("sigma.bin").display()),
            }
        }
        Command::SweepFreq {
            preset: name,
            omega,
            config,
            out,
        } => {
            let omegas = omega
                .iter()
                .map(|s| parse_angle(s).ok_or_else(|| EitError::Usage(format!("cannot parse frequency {s}"))))
                .collect::<Result<Vec<_>>>()?;
            let mesh = build_disk_mesh(REFERENCE_LEVEL);
            for row in sweep_frequency(preset(&name)?, &omegas, &config.resolve()?, &mesh, &out)? {
                print!("omega {:.4}: ", row.value);
                print_report(&row.report);
            }
        }
        Command::SweepNoise {
            input,
            run,
            levels,
            noise_seed,
            out,
        } => {
            let (options, mesh) = run.options()?;
            for row in sweep_noise(&input.scene()?, &levels, noise_seed, &options, &mesh, &out)? {
                print!("{} dB: ", row.value);
                print_report(&row.report);
            }
        }
        Command::ExportPlot { grid, out } => {
            let prefix = out.unwrap_or_else(|| grid.clone());
            export_plot(&grid, &prefix)?;
            println!("wrote {}", prefix.with_extension("pgm").display());
        }
        Command::Evaluate {
            estimate,
            truth,
            case,
            method,
        } => {
            let r = evaluate_files(&estimate, &truth, &case, &method)?;
            println!("{}", EvalReport::CSV_HEADER);
            println!("{}", r.csv_row(0, "-"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                EitError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
