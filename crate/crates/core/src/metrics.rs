//! Trajectory-versus-path comparison with the vertical axis standing in
//! for time.
//!
//! Samples are binned by their z coordinate over the path's z-range
//! (half-open bins `[lo, hi)`, all visits to a bin pooled). The reference
//! for a trajectory is the path evaluated at the very same sample heights
//! and binned identically, so a follower that sits exactly on the path
//! yields identical bin means.
//!
//! From the paired series we compute
//! * the Pearson correlation of x and of y along z, averaged over the axes
//!   whose reference actually varies;
//! * the average SD: per bin, the RMS (over trials) of the lateral
//!   deviation from the path, averaged over x and y and then over bins;
//! * transit times, start to target.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path::LightPath;
use crate::record::{Outcome, TrajectoryRecord};

pub const DEFAULT_BIN_WIDTH: f64 = 0.1;
/// Reference-axis variance below which that axis is left out of the
/// correlation.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;
/// Slack used when assigning heights that sit on a bin edge.
const EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("bin width must be positive, got {0}")]
    BadBinWidth(f64),
    #[error("trajectory has no samples inside the path's z-range")]
    EmptyOverlap,
    #[error("path z must strictly decrease from start to target for z-parameterized metrics")]
    PathNotMonotone,
    #[error("need at least 3 jointly occupied bins, found {0}")]
    InsufficientBins(usize),
    #[error("correlation undefined: reference is constant along z on both axes")]
    DegenerateAxes,
    #[error("no trials to evaluate")]
    NoTrials,
    #[error("trials were binned over different z grids")]
    GridMismatch,
    #[error("transit time undefined: session did not reach the target")]
    NotCompleted,
    #[error("trajectory recorded on `{record}` but compared against path `{path}`")]
    PathMismatch { record: String, path: String },
    #[error("report csv: {0}")]
    Csv(String),
}

/// Compensated (Neumaier) summation so pooled results do not depend on
/// the order trials are visited in.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn stable_mean(values: &[f64]) -> f64 {
    stable_sum(values.iter().copied()) / values.len() as f64
}

/// Uniform z bins over `[z_min, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZGrid {
    pub z_min: f64,
    pub z_max: f64,
    pub bin_width: f64,
    pub n_bins: usize,
}

impl ZGrid {
    pub fn new(z_min: f64, z_max: f64, bin_width: f64) -> Result<Self, MetricError> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(MetricError::BadBinWidth(bin_width));
        }
        let n_bins = (((z_max - z_min) / bin_width) - EDGE_EPS).ceil().max(1.0) as usize;
        Ok(Self { z_min, z_max, bin_width, n_bins })
    }

    pub fn for_path(path: &LightPath, bin_width: f64) -> Result<Self, MetricError> {
        Self::new(path.target().z, path.start().z, bin_width)
    }

    /// Bin holding height `z`; a height on an edge goes to the upper bin
    /// and `z_max` itself to the last bin.
    pub fn index(&self, z: f64) -> Option<usize> {
        if !z.is_finite() || z < self.z_min - EDGE_EPS || z > self.z_max + EDGE_EPS {
            return None;
        }
        let q = ((z - self.z_min) / self.bin_width + EDGE_EPS).floor().max(0.0) as usize;
        Some(q.min(self.n_bins - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub x_mean: f64,
    pub y_mean: f64,
    pub count: usize,
}

/// Per-bin lateral means; `None` marks an empty bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZBinnedSeries {
    pub grid: ZGrid,
    pub bins: Vec<Option<BinStat>>,
}

impl ZBinnedSeries {
    /// Bins `(x, y, z)` points; points outside the grid are dropped.
    pub fn from_points(grid: ZGrid, points: impl IntoIterator<Item = [f64; 3]>) -> Self {
        let mut acc: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); grid.n_bins];
        for [x, y, z] in points {
            if let Some(i) = grid.index(z) {
                acc[i].0.push(x);
                acc[i].1.push(y);
            }
        }
        let bins = acc
            .into_iter()
            .map(|(xs, ys)| {
                (!xs.is_empty()).then(|| BinStat { x_mean: stable_mean(&xs), y_mean: stable_mean(&ys), count: xs.len() })
            })
            .collect();
        Self { grid, bins }
    }

    pub fn occupied(&self) -> usize {
        self.bins.iter().flatten().count()
    }
}

/// The path as a function of height, for z-monotone paths.
#[derive(Debug, Clone)]
pub struct ZProfile {
    // ascending z
    points: Vec<[f64; 3]>,
}

impl ZProfile {
    pub fn new(path: &LightPath) -> Result<Self, MetricError> {
        let pts = path.points();
        if pts.windows(2).any(|w| w[1].z >= w[0].z) {
            return Err(MetricError::PathNotMonotone);
        }
        Ok(Self { points: pts.iter().rev().map(|p| p.to_array()).collect() })
    }

    /// Lateral position of the path at height `z` (clamped to its range).
    pub fn at(&self, z: f64) -> (f64, f64) {
        let pts = &self.points;
        let j = pts.partition_point(|p| p[2] <= z).clamp(1, pts.len() - 1);
        let (a, b) = (pts[j - 1], pts[j]);
        let t = ((z - a[2]) / (b[2] - a[2])).clamp(0.0, 1.0);
        (a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t)
    }
}

fn in_range_samples<'a>(traj: &'a TrajectoryRecord, grid: &'a ZGrid) -> impl Iterator<Item = [f64; 3]> + 'a {
    traj.samples
        .iter()
        .map(|s| s.pose.position.to_array())
        .filter(move |p| grid.index(p[2]).is_some())
}

/// Bins a trajectory over the path's z-range.
pub fn zbin(traj: &TrajectoryRecord, path: &LightPath, bin_width: f64) -> Result<ZBinnedSeries, MetricError> {
    let grid = ZGrid::for_path(path, bin_width)?;
    let series = ZBinnedSeries::from_points(grid, in_range_samples(traj, &grid));
    if series.occupied() == 0 {
        return Err(MetricError::EmptyOverlap);
    }
    Ok(series)
}

/// Bins the path itself, evaluated at the heights of the trajectory's
/// samples.
pub fn zbin_reference(traj: &TrajectoryRecord, path: &LightPath, bin_width: f64) -> Result<ZBinnedSeries, MetricError> {
    let grid = ZGrid::for_path(path, bin_width)?;
    let profile = ZProfile::new(path)?;
    let series = ZBinnedSeries::from_points(
        grid,
        in_range_samples(traj, &grid).map(|[_, _, z]| {
            let (x, y) = profile.at(z);
            [x, y, z]
        }),
    );
    if series.occupied() == 0 {
        return Err(MetricError::EmptyOverlap);
    }
    Ok(series)
}

/// A binned trajectory together with its binned reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialBins {
    pub trajectory: ZBinnedSeries,
    pub reference: ZBinnedSeries,
}

impl TrialBins {
    pub fn new(traj: &TrajectoryRecord, path: &LightPath, bin_width: f64) -> Result<Self, MetricError> {
        Ok(Self { trajectory: zbin(traj, path, bin_width)?, reference: zbin_reference(traj, path, bin_width)? })
    }

    /// Pairs `(trajectory, reference)` over jointly occupied bins.
    fn pairs(&self) -> impl Iterator<Item = (usize, BinStat, BinStat)> + '_ {
        self.trajectory
            .bins
            .iter()
            .zip(&self.reference.bins)
            .enumerate()
            .filter_map(|(i, (t, r))| Some((i, (*t)?, (*r)?)))
    }
}

/// Correlation result, percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pct: f64,
    /// `None` when the reference is constant on that axis.
    pub x_pct: Option<f64>,
    pub y_pct: Option<f64>,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (stable_mean(a), stable_mean(b));
    let sab = stable_sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)));
    let saa = stable_sum(a.iter().map(|x| (x - ma) * (x - ma)));
    let sbb = stable_sum(b.iter().map(|y| (y - mb) * (y - mb)));
    if saa <= 0.0 || sbb <= 0.0 {
        // a flat series carries no shape to correlate with
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

fn population_variance(v: &[f64]) -> f64 {
    let m = stable_mean(v);
    stable_sum(v.iter().map(|x| (x - m) * (x - m))) / v.len() as f64
}

/// Pooled correlation along z over every jointly occupied bin of every
/// trial.
pub fn pooled_correlation(trials: &[TrialBins]) -> Result<Correlation, MetricError> {
    let mut tx = Vec::new();
    let mut ty = Vec::new();
    let mut rx = Vec::new();
    let mut ry = Vec::new();
    for trial in trials {
        for (_, t, r) in trial.pairs() {
            tx.push(t.x_mean);
            ty.push(t.y_mean);
            rx.push(r.x_mean);
            ry.push(r.y_mean);
        }
    }
    if tx.len() < 3 {
        return Err(MetricError::InsufficientBins(tx.len()));
    }
    let axis = |t: &[f64], r: &[f64]| (population_variance(r) >= DEGENERATE_VARIANCE).then(|| 100.0 * pearson(t, r));
    let x_pct = axis(&tx, &rx);
    let y_pct = axis(&ty, &ry);
    let used: Vec<f64> = [x_pct, y_pct].into_iter().flatten().collect();
    if used.is_empty() {
        return Err(MetricError::DegenerateAxes);
    }
    let pct = (stable_sum(used.iter().copied()) / used.len() as f64).clamp(-100.0, 100.0);
    Ok(Correlation { pct, x_pct, y_pct })
}

/// Correlation of one binned trajectory against one binned reference.
pub fn correlation_along_z(t: &ZBinnedSeries, p: &ZBinnedSeries) -> Result<Correlation, MetricError> {
    if t.grid != p.grid {
        return Err(MetricError::GridMismatch);
    }
    pooled_correlation(&[TrialBins { trajectory: t.clone(), reference: p.clone() }])
}

/// How per-bin spread is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdMode {
    /// RMS of trial deviations from the path (distance to the path).
    #[default]
    AboutPath,
    /// SD of trial deviations about their cross-trial mean at that height.
    AboutTrialMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdSummary {
    pub avg_sd_cm: f64,
    pub sd_x_cm: f64,
    pub sd_y_cm: f64,
    /// Bins that contributed.
    pub bins: usize,
}

fn spread(devs: &[f64], mode: SdMode) -> f64 {
    let center = match mode {
        SdMode::AboutPath => 0.0,
        SdMode::AboutTrialMean => stable_mean(devs),
    };
    (stable_sum(devs.iter().map(|d| (d - center) * (d - center))) / devs.len() as f64).sqrt()
}

pub fn avg_sd(trials: &[TrialBins], mode: SdMode) -> Result<SdSummary, MetricError> {
    let first = trials.first().ok_or(MetricError::NoTrials)?;
    let grid = first.trajectory.grid;
    if trials.iter().any(|t| t.trajectory.grid != grid || t.reference.grid != grid) {
        return Err(MetricError::GridMismatch);
    }
    let mut dev: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); grid.n_bins];
    for trial in trials {
        for (i, t, r) in trial.pairs() {
            dev[i].0.push(t.x_mean - r.x_mean);
            dev[i].1.push(t.y_mean - r.y_mean);
        }
    }
    let (sx, sy): (Vec<f64>, Vec<f64>) = dev
        .iter()
        .filter(|(dx, _)| !dx.is_empty())
        .map(|(dx, dy)| (spread(dx, mode), spread(dy, mode)))
        .unzip();
    if sx.is_empty() {
        return Err(MetricError::EmptyOverlap);
    }
    let sd_x_cm = stable_mean(&sx);
    let sd_y_cm = stable_mean(&sy);
    let per_bin: Vec<f64> = sx.iter().zip(&sy).map(|(a, b)| (a + b) / 2.0).collect();
    Ok(SdSummary { avg_sd_cm: stable_mean(&per_bin), sd_x_cm, sd_y_cm, bins: sx.len() })
}

/// Seconds from start to target for a completed session.
pub fn transit_time(traj: &TrajectoryRecord) -> Result<f64, MetricError> {
    match (traj.header.outcome, traj.last_t_ms()) {
        (Some(Outcome::Completed), Some(t)) => Ok(t as f64 / 1000.0),
        _ => Err(MetricError::NotCompleted),
    }
}

/// Formats a transit time as `mean ± sd s` with one decimal.
pub fn format_transit(mean_s: f64, sd_s: f64) -> String {
    format!("{mean_s:.1} ± {sd_s:.1} s")
}

/// Sample mean and SD (n − 1 denominator; zero for a single value).
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let m = stable_mean(values);
    if values.len() == 1 {
        return Some((m, 0.0));
    }
    let ss = stable_sum(values.iter().map(|v| (v - m) * (v - m)));
    Some((m, (ss / (values.len() - 1) as f64).sqrt()))
}

/// One recorded trial ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub bins: TrialBins,
    pub transit_s: Option<f64>,
}

impl Trial {
    pub fn from_record(record: &TrajectoryRecord, path: &LightPath, bin_width: f64) -> Result<Self, MetricError> {
        if record.header.path_id != path.id() {
            return Err(MetricError::PathMismatch { record: record.header.path_id.clone(), path: path.id().to_string() });
        }
        Ok(Self { bins: TrialBins::new(record, path, bin_width)?, transit_s: transit_time(record).ok() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_trials: usize,
    pub avg_sd_cm: f64,
    pub sd_x_cm: f64,
    pub sd_y_cm: f64,
    pub correlation_pct: f64,
    pub corr_x_pct: Option<f64>,
    pub corr_y_pct: Option<f64>,
    /// Over completed trials only.
    pub transit_mean_s: Option<f64>,
    pub transit_sd_s: Option<f64>,
}

/// Evaluates a pooled set of trials.
pub fn evaluate(trials: &[Trial], mode: SdMode) -> Result<MetricsReport, MetricError> {
    if trials.is_empty() {
        return Err(MetricError::NoTrials);
    }
    let bins: Vec<TrialBins> = trials.iter().map(|t| t.bins.clone()).collect();
    let sd = avg_sd(&bins, mode)?;
    let corr = pooled_correlation(&bins)?;
    let times: Vec<f64> = trials.iter().filter_map(|t| t.transit_s).collect();
    let transit = mean_sd(&times);
    Ok(MetricsReport {
        n_trials: trials.len(),
        avg_sd_cm: sd.avg_sd_cm,
        sd_x_cm: sd.sd_x_cm,
        sd_y_cm: sd.sd_y_cm,
        correlation_pct: corr.pct,
        corr_x_pct: corr.x_pct,
        corr_y_pct: corr.y_pct,
        transit_mean_s: transit.map(|t| t.0),
        transit_sd_s: transit.map(|t| t.1),
    })
}

/// Trials of one condition on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub condition: String,
    pub path_id: String,
    pub trials: Vec<Trial>,
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub condition: String,
    pub path_id: String,
    pub n_trials: usize,
    pub avg_sd_cm: Option<f64>,
    pub correlation_pct: Option<f64>,
    pub transit_mean_s: Option<f64>,
    pub transit_sd_s: Option<f64>,
}

/// Pools reports sharing `(condition, path_id)` into a single trial set
/// and evaluates each pool. Undefined metrics are left empty. Rows come
/// out sorted by key.
pub fn aggregate(reports: &[ConditionReport], mode: SdMode) -> Vec<TableRow> {
    let mut pools: BTreeMap<(String, String), Vec<Trial>> = BTreeMap::new();
    for r in reports {
        pools.entry((r.condition.clone(), r.path_id.clone())).or_default().extend(r.trials.iter().cloned());
    }
    pools
        .into_iter()
        .map(|((condition, path_id), trials)| {
            let bins: Vec<TrialBins> = trials.iter().map(|t| t.bins.clone()).collect();
            let times: Vec<f64> = trials.iter().filter_map(|t| t.transit_s).collect();
            let transit = mean_sd(&times);
            TableRow {
                condition,
                path_id,
                n_trials: trials.len(),
                avg_sd_cm: avg_sd(&bins, mode).ok().map(|s| s.avg_sd_cm),
                correlation_pct: pooled_correlation(&bins).ok().map(|c| c.pct),
                transit_mean_s: transit.map(|t| t.0),
                transit_sd_s: transit.map(|t| t.1),
            }
        })
        .collect()
}

pub const CSV_COLUMNS: [&str; 7] =
    ["condition", "path_id", "n_trials", "avg_sd_cm", "correlation_pct", "transit_mean_s", "transit_sd_s"];

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_default()
}

pub fn write_csv(rows: &[TableRow], w: impl Write) -> Result<(), MetricError> {
    let csv_err = |e: csv::Error| MetricError::Csv(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.condition.clone(),
            r.path_id.clone(),
            r.n_trials.to_string(),
            fmt_opt(r.avg_sd_cm, 6),
            fmt_opt(r.correlation_pct, 4),
            fmt_opt(r.transit_mean_s, 3),
            fmt_opt(r.transit_sd_s, 3),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| MetricError::Csv(e.to_string()))
}

pub fn read_csv(r: impl Read) -> Result<Vec<TableRow>, MetricError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(|e| MetricError::Csv(e.to_string()))?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(MetricError::Csv(format!("unexpected columns {headers:?}")));
    }
    rdr.deserialize().map(|row| row.map_err(|e| MetricError::Csv(e.to_string()))).collect()
}
