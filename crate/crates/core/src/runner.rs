//! Headless batch runs and frame replay.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::metrics::{aggregate, write_csv, ConditionReport, MetricError, SdMode, TableRow, Trial};
use crate::path::LightPath;
use crate::record::TrajectoryRecord;
use crate::render::{render_frame, CameraModel, CutoffParams, Frame};
use crate::session::{ControllerConfig, Session, SessionConfig, SessionError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("headless runs need a scripted controller (ideal or noisy), got {0}")]
    NotScripted(crate::record::ControllerKind),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("fps must be positive")]
    BadFps,
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub config: SessionConfig,
    pub trials: usize,
    /// Trial `i` runs with noise seed `seed_base + i`.
    pub seed_base: u64,
    pub bin_width: f64,
}

/// One finished trial, optionally with every rendered frame.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub record: TrajectoryRecord,
    pub frames: Vec<(u64, Frame)>,
}

/// Runs one session to its end.
pub fn run_trial(config: SessionConfig, keep_frames: bool) -> Result<TrialRun, RunError> {
    let mut session = Session::new(config)?;
    let first = session.start()?;
    let mut frames = Vec::new();
    if keep_frames {
        frames.push((0, first));
    }
    loop {
        let out = session.tick()?;
        if keep_frames {
            frames.push((out.t_ms, out.frame));
        }
        if out.event.is_some() {
            break;
        }
    }
    Ok(TrialRun { record: session.into_record(), frames })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TrajectoryRecord>,
    pub rows: Vec<TableRow>,
}

impl RunOutput {
    /// File name for trial `i`, e.g. `path1-vdu-ideal-003.jsonl`.
    pub fn trial_file_name(record: &TrajectoryRecord, i: usize) -> String {
        let h = &record.header;
        format!("{}-{}-{}-{i:03}.jsonl", h.path_id, h.display, h.controller)
    }

    pub fn csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_csv(&self.rows, &mut buf).expect("writing to memory");
        buf
    }

    /// Writes every trajectory plus `report.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            let p = dir.join(Self::trial_file_name(r, i));
            fs::write(&p, r.to_jsonl())?;
            written.push(p);
        }
        let p = dir.join("report.csv");
        fs::write(&p, self.csv_bytes())?;
        written.push(p);
        Ok(written)
    }
}

/// Runs `spec.trials` scripted sessions and evaluates them as one
/// condition.
pub fn run_headless(spec: &RunSpec) -> Result<RunOutput, RunError> {
    if !spec.config.controller.is_scripted() {
        return Err(RunError::NotScripted(spec.config.controller.kind()));
    }
    if spec.trials == 0 {
        return Err(RunError::NoTrials);
    }
    let mut records = Vec::with_capacity(spec.trials);
    let mut trials = Vec::with_capacity(spec.trials);
    for i in 0..spec.trials {
        let mut cfg = spec.config.clone();
        if let ControllerConfig::Noisy { noise, .. } = &mut cfg.controller {
            noise.seed = spec.seed_base.wrapping_add(i as u64);
        }
        let run = run_trial(cfg, false)?;
        trials.push(Trial::from_record(&run.record, &spec.config.path, spec.bin_width)?);
        records.push(run.record);
    }
    let report = ConditionReport {
        condition: records[0].header.condition(),
        path_id: spec.config.path.id().to_string(),
        trials,
    };
    Ok(RunOutput { records, rows: aggregate(&[report], SdMode::AboutPath) })
}

/// Re-renders a recorded trajectory. Frames are emitted for the first
/// sample and then whenever at least `1000 / fps` ms have passed.
pub fn replay_frames(
    record: &TrajectoryRecord,
    path: &LightPath,
    camera: &CameraModel,
    cutoff: &CutoffParams,
    fps: f64,
) -> Result<Vec<(u64, Frame)>, RunError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(RunError::BadFps);
    }
    let period = 1000.0 / fps;
    let mut next = 0.0;
    let mut out = Vec::new();
    for s in &record.samples {
        if s.t_ms as f64 + 1e-9 >= next {
            out.push((s.t_ms, render_frame(&s.pose, path, camera, cutoff)));
            while next <= s.t_ms as f64 + 1e-9 {
                next += period;
            }
        }
    }
    Ok(out)
}
