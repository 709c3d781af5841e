//! Trajectory records and their JSON-lines file format.
//!
//! Line 1 is a header object; every following line is one sample
//! `{"t_ms":…,"pos":[x,y,z],"quat":[w,x,y,z]}`.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, UnitQuat, Vec3};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record has no header line")]
    MissingHeader,
    #[error("record has no samples")]
    Empty,
    #[error("line {line}: expected t_ms {expected}, found {found}")]
    Cadence { line: usize, expected: u64, found: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplayMode {
    Tdu,
    Vdu,
}

impl fmt::Display for DisplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DisplayMode::Tdu => "tdu",
            DisplayMode::Vdu => "vdu",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Manual,
    External,
    Ideal,
    Noisy,
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerKind::Manual => "manual",
            ControllerKind::External => "external",
            ControllerKind::Ideal => "ideal",
            ControllerKind::Noisy => "noisy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub path_id: String,
    pub controller: ControllerKind,
    pub display: DisplayMode,
    pub tick_ms: u32,
    pub target_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
}

impl RecordHeader {
    /// Condition label used to group trials, e.g. `vdu+ideal`.
    pub fn condition(&self) -> String {
        format!("{}+{}", self.display, self.controller)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t_ms: u64,
    pub pose: Pose,
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    t_ms: u64,
    pos: [f64; 3],
    quat: [f64; 4],
}

impl From<&Sample> for SampleLine {
    fn from(s: &Sample) -> Self {
        SampleLine { t_ms: s.t_ms, pos: s.pose.position.to_array(), quat: s.pose.orientation.to_array() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub header: RecordHeader,
    pub samples: Vec<Sample>,
}

impl TrajectoryRecord {
    pub fn new(header: RecordHeader) -> Self {
        Self { header, samples: Vec::new() }
    }

    pub fn push(&mut self, t_ms: u64, pose: Pose) {
        self.samples.push(Sample { t_ms, pose });
    }

    pub fn last_t_ms(&self) -> Option<u64> {
        self.samples.last().map(|s| s.t_ms)
    }

    /// True when samples start at 0 and advance by exactly `tick_ms`.
    pub fn has_exact_cadence(&self) -> bool {
        let step = u64::from(self.header.tick_ms);
        self.samples.iter().enumerate().all(|(i, s)| s.t_ms == i as u64 * step)
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<(), RecordError> {
        serde_json::to_writer(&mut w, &self.header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut w, &SampleLine::from(s)).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }

    /// Parses a record, checking the 0, tick, 2·tick, … cadence. Errors
    /// carry 1-based line numbers.
    pub fn read_jsonl(r: impl BufRead) -> Result<Self, RecordError> {
        let mut lines = r.lines().enumerate();
        let header = loop {
            match lines.next() {
                None => return Err(RecordError::MissingHeader),
                Some((_, Err(e))) => return Err(e.into()),
                Some((i, Ok(text))) if !text.trim().is_empty() => {
                    break serde_json::from_str::<RecordHeader>(&text)
                        .map_err(|e| RecordError::Parse { line: i + 1, message: e.to_string() })?;
                }
                Some(_) => {}
            }
        };
        if header.tick_ms == 0 {
            return Err(RecordError::Parse { line: 1, message: "tick_ms must be positive".into() });
        }
        let mut record = TrajectoryRecord::new(header);
        let step = u64::from(record.header.tick_ms);
        for (i, line) in lines {
            let text = line?;
            if text.trim().is_empty() {
                continue;
            }
            let line_no = i + 1;
            let parsed: SampleLine = serde_json::from_str(&text)
                .map_err(|e| RecordError::Parse { line: line_no, message: e.to_string() })?;
            let position = Vec3::from(parsed.pos);
            if !position.is_finite() {
                return Err(RecordError::Parse { line: line_no, message: "non-finite position".into() });
            }
            let orientation = UnitQuat::try_from_components(parsed.quat, 1e-6).map_err(|n| RecordError::Parse {
                line: line_no,
                message: format!("quaternion norm {n} is not unit"),
            })?;
            let expected = record.samples.len() as u64 * step;
            if parsed.t_ms != expected {
                return Err(RecordError::Cadence { line: line_no, expected, found: parsed.t_ms });
            }
            // keep stored values bit-exact when they are already unit
            let raw = UnitQuat::from(parsed.quat);
            let orientation = if (raw.norm() - 1.0).abs() <= 1e-12 { raw } else { orientation };
            record.push(parsed.t_ms, Pose { position, orientation });
        }
        if record.samples.is_empty() {
            return Err(RecordError::Empty);
        }
        Ok(record)
    }
}
