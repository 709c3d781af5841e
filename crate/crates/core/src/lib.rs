//! Simulator for following a 3D light path through a low-resolution
//! subjective view, as on a 12×12 tongue display or dot-matrix screen.
//!
//! The pieces, bottom-up:
//! * [`geometry`] and [`path`]: poses and the light paths inside the 12 cm cube;
//! * [`render`]: pinhole projection of light points onto the grid with a
//!   sigmoid distance cutoff;
//! * [`display`]: voltage and gray-level encoders;
//! * [`control`]: manual, ideal, noisy and external pose controllers;
//! * [`session`] and [`record`]: the 5 ms experiment loop and trajectory files;
//! * [`metrics`]: z-binned correlation, average SD and transit times;
//! * [`protocol`] and [`runner`]: the live wire protocol and headless batches.

pub mod control;
pub mod display;
pub mod geometry;
pub mod metrics;
pub mod path;
pub mod protocol;
pub mod record;
pub mod render;
pub mod runner;
pub mod session;

pub use geometry::{Pose, UnitQuat, Vec3};
pub use path::{builtin_path, make_path, LightPath, PathKind, PathParams};
pub use record::{ControllerKind, DisplayMode, TrajectoryRecord};
pub use render::{CameraModel, CutoffParams, Frame};
pub use session::{ControllerConfig, Session, SessionConfig};
