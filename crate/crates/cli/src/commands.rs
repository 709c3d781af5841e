//! Batch verbs: path generation, headless runs, replay and metrics.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use pathsense::control::NoiseParams;
use pathsense::display::{to_voltage, CalibrationMatrix, DEFAULT_ACTIVATION_THRESHOLD};
use pathsense::metrics::{aggregate, write_csv, ConditionReport, SdMode, Trial};
use pathsense::protocol::ServerMessage;
use pathsense::runner::{replay_frames, run_headless, RunSpec};
use pathsense::session::DEFAULT_FOLLOW_SPEED;
use pathsense::{make_path, ControllerConfig, ControllerKind, DisplayMode, LightPath, PathParams, SessionConfig, TrajectoryRecord};

use crate::resolve_path;

pub fn gen_path(params: &PathParams, id: Option<&str>, out: &mut dyn Write) -> anyhow::Result<LightPath> {
    let mut path = make_path(params)?;
    if let Some(id) = id {
        path = LightPath::new(id, path.points().to_vec())?;
    }
    writeln!(out, "{}", path.to_json())?;
    Ok(path)
}

/// Options of a headless run; `None` fields keep the library defaults.
#[derive(Debug, Clone)]
pub struct RunArgs {
    pub path: String,
    pub display: DisplayMode,
    pub controller: ControllerKind,
    pub trials: usize,
    pub seed: Option<u64>,
    pub speed: Option<f64>,
    pub tremor_sigma: Option<f64>,
    pub drift_theta: Option<f64>,
    pub drift_sigma: Option<f64>,
    pub target_radius: Option<f64>,
    pub timeout_s: Option<f64>,
    pub bin_width: f64,
    pub out_dir: PathBuf,
}

impl RunArgs {
    pub fn to_spec(&self) -> anyhow::Result<RunSpec> {
        let path = resolve_path(&self.path)?;
        let speed = self.speed.unwrap_or(DEFAULT_FOLLOW_SPEED);
        let controller = match self.controller {
            ControllerKind::Ideal => ControllerConfig::Ideal { speed },
            ControllerKind::Noisy => {
                let Some(seed) = self.seed else {
                    bail!("the noisy controller needs --seed so runs are reproducible");
                };
                let d = NoiseParams::default();
                ControllerConfig::Noisy {
                    speed,
                    noise: NoiseParams {
                        tremor_sigma: self.tremor_sigma.unwrap_or(d.tremor_sigma),
                        drift_theta: self.drift_theta.unwrap_or(d.drift_theta),
                        drift_sigma: self.drift_sigma.unwrap_or(d.drift_sigma),
                        seed,
                    },
                }
            }
            ControllerKind::Manual => bail!("the manual controller needs a live client; use `serve`"),
            ControllerKind::External => bail!("the external controller needs a live pose source; use `serve`"),
        };
        let mut config = SessionConfig::new(path, self.display, controller);
        if let Some(r) = self.target_radius {
            config.target_radius = r;
        }
        if let Some(t) = self.timeout_s {
            config.timeout_s = t;
        }
        config.validate()?;
        Ok(RunSpec { config, trials: self.trials, seed_base: self.seed.unwrap_or(0), bin_width: self.bin_width })
    }
}

/// Runs the trials, writes one JSONL file per trial plus `report.csv`,
/// and echoes the report to `out`.
pub fn run(args: &RunArgs, out: &mut dyn Write) -> anyhow::Result<Vec<PathBuf>> {
    let spec = args.to_spec()?;
    let output = run_headless(&spec)?;
    let written = output.write_to(&args.out_dir)?;
    out.write_all(&output.csv_bytes())?;
    Ok(written)
}

pub fn read_record(file: &Path) -> anyhow::Result<TrajectoryRecord> {
    let f = File::open(file).with_context(|| format!("opening {}", file.display()))?;
    TrajectoryRecord::read_jsonl(BufReader::new(f)).with_context(|| format!("reading {}", file.display()))
}

/// Re-renders a recording as frame messages, one JSON line each.
pub fn replay(
    file: &Path,
    path: Option<&str>,
    fps: f64,
    calibration: Option<&CalibrationMatrix>,
    out: &mut dyn Write,
) -> anyhow::Result<usize> {
    let record = read_record(file)?;
    let path = match path {
        Some(p) => resolve_path(p)?,
        None => resolve_path(&record.header.path_id)
            .with_context(|| format!("recording is on `{}`; pass --path for custom paths", record.header.path_id))?,
    };
    if path.id() != record.header.path_id {
        bail!("recording was made on `{}` but the path given is `{}`", record.header.path_id, path.id());
    }
    let defaults = SessionConfig::new(path.clone(), record.header.display, ControllerConfig::ideal());
    let frames = replay_frames(&record, &path, &defaults.camera, &defaults.cutoff, fps)?;
    let identity = CalibrationMatrix::default();
    let cal = calibration.unwrap_or(&identity);
    for (t_ms, frame) in &frames {
        let volts = match record.header.display {
            DisplayMode::Tdu => Some(to_voltage(frame, cal, DEFAULT_ACTIVATION_THRESHOLD)?.volts),
            DisplayMode::Vdu => None,
        };
        let msg = ServerMessage::Frame { t_ms: *t_ms, grid: frame.cells().to_vec(), volts };
        out.write_all(msg.to_line().as_bytes())?;
    }
    Ok(frames.len())
}

/// Evaluates recordings grouped by condition and path, writing the table
/// as CSV. With `path` set every recording is checked against it;
/// otherwise each is compared with the built-in path named in its header.
pub fn metrics(
    files: &[PathBuf],
    path: Option<&str>,
    bin_width: f64,
    mode: SdMode,
    out: &mut dyn Write,
) -> anyhow::Result<usize> {
    if files.is_empty() {
        bail!("no trajectory files given");
    }
    let fixed = path.map(resolve_path).transpose()?;
    let mut paths: BTreeMap<String, LightPath> = BTreeMap::new();
    let mut pools: BTreeMap<(String, String), Vec<Trial>> = BTreeMap::new();
    for file in files {
        let record = read_record(file)?;
        let path = match &fixed {
            Some(p) => p,
            None => {
                let id = record.header.path_id.clone();
                if !paths.contains_key(&id) {
                    let p = resolve_path(&id).with_context(|| {
                        format!("{}: recorded on `{id}`; pass --path for custom paths", file.display())
                    })?;
                    paths.insert(id.clone(), p);
                }
                &paths[&id]
            }
        };
        let trial = Trial::from_record(&record, path, bin_width).with_context(|| file.display().to_string())?;
        pools.entry((record.header.condition(), record.header.path_id.clone())).or_default().push(trial);
    }
    let reports: Vec<ConditionReport> = pools
        .into_iter()
        .map(|((condition, path_id), trials)| ConditionReport { condition, path_id, trials })
        .collect();
    let rows = aggregate(&reports, mode);
    write_csv(&rows, &mut *out)?;
    Ok(rows.len())
}

/// Lists the `.jsonl` files of a directory in name order.
pub fn jsonl_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}
