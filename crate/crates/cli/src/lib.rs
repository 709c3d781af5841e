//! Command implementations behind the `pathsense` binary, plus the
//! WebSocket session server.

pub mod commands;
pub mod server;

use std::fs::File;
use std::path::Path;

use anyhow::Context;
use pathsense::LightPath;

/// Resolves a path argument: an existing file is read as path JSON,
/// anything else is looked up among the built-in ids.
pub fn resolve_path(arg: &str) -> anyhow::Result<LightPath> {
    let p = Path::new(arg);
    if p.is_file() {
        let f = File::open(p).with_context(|| format!("opening path file {arg}"))?;
        return LightPath::from_reader(f).with_context(|| format!("reading path file {arg}"));
    }
    Ok(pathsense::builtin_path(arg)?)
}
