use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use pathsense::display::{load_calibration, CalibrationMatrix};
use pathsense::metrics::{SdMode, DEFAULT_BIN_WIDTH};
use pathsense::protocol::{ClockMode, ConnectionOptions, DEFAULT_DECIMATION};
use pathsense::{ControllerKind, DisplayMode, PathKind, PathParams};
use pathsense_cli::commands::{self, RunArgs};
use pathsense_cli::server::{serve, ServeOptions};

#[derive(Parser)]
#[command(name = "pathsense", version, about = "Light-path following on a 12x12 sensory display")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Curved,
    Helical,
}

#[derive(Clone, Copy, ValueEnum)]
enum Display {
    Tdu,
    Vdu,
}

impl From<Display> for DisplayMode {
    fn from(d: Display) -> Self {
        match d {
            Display::Tdu => DisplayMode::Tdu,
            Display::Vdu => DisplayMode::Vdu,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Controller {
    Ideal,
    Noisy,
    Manual,
    External,
}

impl From<Controller> for ControllerKind {
    fn from(c: Controller) -> Self {
        match c {
            Controller::Ideal => ControllerKind::Ideal,
            Controller::Noisy => ControllerKind::Noisy,
            Controller::Manual => ControllerKind::Manual,
            Controller::External => ControllerKind::External,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    Realtime,
    Fast,
    Lockstep,
}

#[derive(Clone, Copy, ValueEnum)]
enum Spread {
    AboutPath,
    AboutTrialMean,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a light path and print it as JSON.
    GenPath {
        #[arg(long, value_enum, default_value = "curved")]
        kind: Kind,
        #[arg(long, default_value_t = 12.0)]
        height: f64,
        /// Lateral eccentricity in cm.
        #[arg(long, default_value_t = 6.0)]
        extent: f64,
        /// Helix revolutions.
        #[arg(long, default_value_t = 1.5)]
        turns: f64,
        #[arg(long, default_value_t = 40)]
        points: usize,
        #[arg(long)]
        id: Option<String>,
        /// Output file; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run scripted trials headless and write trajectories plus a report.
    Run {
        /// Built-in path id or path JSON file.
        #[arg(long, default_value = "path1")]
        path: String,
        #[arg(long, value_enum, default_value = "vdu")]
        display: Display,
        #[arg(long, value_enum, default_value = "ideal")]
        controller: Controller,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Base noise seed; trial i uses seed + i. Required for noisy runs.
        #[arg(long)]
        seed: Option<u64>,
        /// Follower speed along the path, cm/s.
        #[arg(long)]
        speed: Option<f64>,
        #[arg(long)]
        tremor_sigma: Option<f64>,
        #[arg(long)]
        drift_theta: Option<f64>,
        #[arg(long)]
        drift_sigma: Option<f64>,
        #[arg(long)]
        target_radius: Option<f64>,
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
        bin_width: f64,
        #[arg(long, short)]
        out_dir: PathBuf,
    },
    /// Serve live sessions over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "PATHSENSE_DATA_DIR")]
        data_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "realtime")]
        clock: Clock,
        /// Send every n-th frame.
        #[arg(long, default_value_t = DEFAULT_DECIMATION)]
        decimation: u32,
        /// JSON array of 144 electrode gains.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Re-render a recorded trajectory as frame messages.
    Replay {
        trajectory: PathBuf,
        /// Built-in path id or path JSON file; defaults to the recorded id.
        #[arg(long)]
        path: Option<String>,
        #[arg(long, default_value_t = 50.0)]
        fps: f64,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Compute the summary table from recorded trajectories.
    Metrics {
        /// Trajectory files or directories holding them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Compare every trajectory against this path instead of the
        /// built-in named in its header.
        #[arg(long)]
        path: Option<String>,
        #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
        bin_width: f64,
        #[arg(long, value_enum, default_value = "about-path")]
        sd_mode: Spread,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn output(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn calibration(path: Option<&PathBuf>) -> anyhow::Result<Option<CalibrationMatrix>> {
    path.map(|p| {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        load_calibration(f).with_context(|| p.display().to_string())
    })
    .transpose()
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::GenPath { kind, height, extent, turns, points, id, out } => {
            let kind = match kind {
                Kind::Curved => PathKind::Curved,
                Kind::Helical => PathKind::Helical,
            };
            let params = PathParams { kind, height, lateral_extent: extent, turns, n_points: points };
            commands::gen_path(&params, id.as_deref(), &mut output(out.as_ref())?)?;
        }
        Command::Run {
            path,
            display,
            controller,
            trials,
            seed,
            speed,
            tremor_sigma,
            drift_theta,
            drift_sigma,
            target_radius,
            timeout,
            bin_width,
            out_dir,
        } => {
            let args = RunArgs {
                path,
                display: display.into(),
                controller: controller.into(),
                trials,
                seed,
                speed,
                tremor_sigma,
                drift_theta,
                drift_sigma,
                target_radius,
                timeout_s: timeout,
                bin_width,
                out_dir,
            };
            let written = commands::run(&args, &mut io::stdout().lock())?;
            log::info!("wrote {} files to {}", written.len(), args.out_dir.display());
        }
        Command::Serve { port, host, data_dir, clock, decimation, calibration: cal } => {
            if decimation == 0 {
                anyhow::bail!("--decimation must be at least 1");
            }
            let clock = match clock {
                Clock::Realtime => ClockMode::Realtime,
                Clock::Fast => ClockMode::Fast,
                Clock::Lockstep => ClockMode::Lockstep,
            };
            let connection = ConnectionOptions {
                decimation,
                calibration: calibration(cal.as_ref())?.unwrap_or_default(),
                ..ConnectionOptions::default()
            };
            let opts = ServeOptions { data_dir, clock, connection };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .with_context(|| format!("binding {host}:{port}"))?;
                serve(listener, opts).await?;
                anyhow::Ok(())
            })?;
        }
        Command::Replay { trajectory, path, fps, calibration: cal, out } => {
            let cal = calibration(cal.as_ref())?;
            commands::replay(&trajectory, path.as_deref(), fps, cal.as_ref(), &mut output(out.as_ref())?)?;
        }
        Command::Metrics { inputs, path, bin_width, sd_mode, out } => {
            let mut files = Vec::new();
            for p in inputs {
                if p.is_dir() {
                    files.extend(commands::jsonl_files(&p)?);
                } else {
                    files.push(p);
                }
            }
            let mode = match sd_mode {
                Spread::AboutPath => SdMode::AboutPath,
                Spread::AboutTrialMean => SdMode::AboutTrialMean,
            };
            commands::metrics(&files, path.as_deref(), bin_width, mode, &mut output(out.as_ref())?)?;
        }
    }
    Ok(())
}
