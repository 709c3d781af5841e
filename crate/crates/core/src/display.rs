//! Frame encoders for the two display backends: electrode voltages for the
//! tongue display and gray levels for the on-screen dot matrix.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::Frame;

pub const GRID: usize = 12;
pub const GRID_CELLS: usize = GRID * GRID;

/// Lowest voltage of an active electrode.
pub const MIN_VOLTS: f64 = 1.0;
/// Highest electrode voltage.
pub const MAX_VOLTS: f64 = 10.0;
/// Intensities below this leave the electrode off.
pub const DEFAULT_ACTIVATION_THRESHOLD: f64 = 0.05;
pub const GRAY_LEVELS: u8 = 128;

#[derive(Debug, Error, PartialEq)]
pub enum DisplayError {
    #[error("frame is {frame_w}x{frame_h} but calibration is {cal_w}x{cal_h}")]
    DimensionMismatch { frame_w: usize, frame_h: usize, cal_w: usize, cal_h: usize },
    #[error("calibration must hold {expected} gains, found {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("calibration gain {value} at cell ({row},{col}) is outside [0, 1]")]
    GainOutOfRange { row: usize, col: usize, value: f64 },
    #[error("calibration file: {0}")]
    Parse(String),
}

/// Per-electrode gains, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "Vec<f64>")]
pub struct CalibrationMatrix {
    width: usize,
    height: usize,
    gains: Vec<f64>,
}

impl From<CalibrationMatrix> for Vec<f64> {
    fn from(c: CalibrationMatrix) -> Self {
        c.gains
    }
}

impl Default for CalibrationMatrix {
    fn default() -> Self {
        Self::uniform(GRID, GRID, 1.0)
    }
}

impl CalibrationMatrix {
    pub fn uniform(width: usize, height: usize, gain: f64) -> Self {
        Self { width, height, gains: vec![gain.clamp(0.0, 1.0); width * height] }
    }

    /// Builds a 12×12 matrix, checking the count and the range of each gain.
    pub fn from_gains(gains: Vec<f64>) -> Result<Self, DisplayError> {
        if gains.len() != GRID_CELLS {
            return Err(DisplayError::WrongCount { expected: GRID_CELLS, found: gains.len() });
        }
        if let Some(i) = gains.iter().position(|g| !(0.0..=1.0).contains(g)) {
            return Err(DisplayError::GainOutOfRange { row: i / GRID, col: i % GRID, value: gains[i] });
        }
        Ok(Self { width: GRID, height: GRID, gains })
    }

    pub fn gain(&self, col: usize, row: usize) -> f64 {
        self.gains[row * self.width + col]
    }
}

/// Reads a calibration file: a JSON array of 144 gains. An empty source
/// yields the identity (all-ones) matrix.
pub fn load_calibration(mut source: impl Read) -> Result<CalibrationMatrix, DisplayError> {
    let mut text = String::new();
    source.read_to_string(&mut text).map_err(|e| DisplayError::Parse(e.to_string()))?;
    if text.trim().is_empty() {
        return Ok(CalibrationMatrix::default());
    }
    let gains: Vec<f64> = serde_json::from_str(&text).map_err(|e| DisplayError::Parse(e.to_string()))?;
    CalibrationMatrix::from_gains(gains)
}

/// Electrode voltages: each cell is either 0 (off) or within `[1, 10]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VoltageFrame {
    pub volts: Vec<f64>,
}

/// 7-bit gray levels, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GrayFrame {
    pub levels: Vec<u8>,
}

/// Encodes a frame as electrode voltages.
///
/// On/off is decided on the raw intensity before the gain is applied. An
/// active cell gets `(1 + 9 I) * gain` volts; if the gain pulls it under the
/// 1 V floor the electrode is switched off instead.
pub fn to_voltage(
    f: &Frame,
    c: &CalibrationMatrix,
    activation_threshold: f64,
) -> Result<VoltageFrame, DisplayError> {
    if f.width() != c.width || f.height() != c.height {
        return Err(DisplayError::DimensionMismatch {
            frame_w: f.width(),
            frame_h: f.height(),
            cal_w: c.width,
            cal_h: c.height,
        });
    }
    let volts = f
        .cells()
        .iter()
        .zip(&c.gains)
        .map(|(&intensity, &gain)| {
            if intensity < activation_threshold {
                return 0.0;
            }
            let v = (MIN_VOLTS + (MAX_VOLTS - MIN_VOLTS) * intensity) * gain;
            if v < MIN_VOLTS {
                0.0
            } else {
                v.min(MAX_VOLTS)
            }
        })
        .collect();
    Ok(VoltageFrame { volts })
}

/// Quantizes one intensity to a gray level with round-half-up.
pub fn gray_level(intensity: f64) -> u8 {
    let max = f64::from(GRAY_LEVELS - 1);
    (intensity.clamp(0.0, 1.0) * max + 0.5).floor() as u8
}

pub fn to_gray(f: &Frame) -> GrayFrame {
    GrayFrame { levels: f.cells().iter().map(|&i| gray_level(i)).collect() }
}
