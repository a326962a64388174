//! Report and CSV writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use timing_game::equilibrium::{ScatterPoint, TracePoint};
use timing_game::{Boundary, Constants, Timeline};

use crate::config::ExperimentConfig;

/// Points on the x grid of `boundary.csv` and `regions.csv`.
const PLOT_POINTS: usize = 201;

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| path.display().to_string())?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| path.display().to_string())
}

pub fn write_scatter(path: &Path, points: &[ScatterPoint]) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "y", "mode"])?;
    for p in points {
        w.write_record([p.x.to_string(), p.y.to_string(), p.mode.as_str().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &[TracePoint<f64>]) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "x", "y", "rate", "cum_hazard", "region"])?;
    for p in trace {
        w.write_record([
            p.t.to_string(),
            p.x.to_string(),
            p.y.to_string(),
            p.rate.to_string(),
            p.cum_hazard.to_string(),
            p.region.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timeline(path: &Path, timeline: &Timeline) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "hazard", "cumulative_hazard", "L_t", "F_t"])?;
    for s in &timeline.hazard_curve {
        w.write_record([
            s.t.to_string(),
            s.hazard.to_string(),
            s.cumulative_hazard.to_string(),
            s.l_t.to_string(),
            s.f_t.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Right end of the plotted x range: wide enough to show the start state,
/// the anchors and the point where the boundary flattens out.
fn x_max(cfg: &ExperimentConfig, k: &Constants) -> f64 {
    let grid = cfg.x_grid.iter().copied().fold(0.0, f64::max);
    [grid, 2.0 * cfg.s0.x, 4.0 * k.x_bar.unwrap_or(0.0), 10.0]
        .into_iter()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
}

/// Writes `boundary.csv` (x, b) and `regions.csv`, which adds the
/// preemption line and the two horizontal thresholds.
pub fn write_boundary(dir: &Path, cfg: &ExperimentConfig, k: &Constants, b: &Boundary) -> anyhow::Result<()> {
    let top = x_max(cfg, k);
    let xs: Vec<f64> = (0..PLOT_POINTS).map(|i| top * i as f64 / (PLOT_POINTS - 1) as f64).collect();

    let mut w = csv_writer(&dir.join("boundary.csv"))?;
    w.write_record(["x", "b"])?;
    for &x in &xs {
        w.write_record([x.to_string(), b.eval(x).to_string()])?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("regions.csv"))?;
    w.write_record(["x", "preemption_line", "boundary", "y_star", "y_bar"])?;
    for &x in &xs {
        w.write_record([
            x.to_string(),
            k.preemption_line(x).to_string(),
            b.eval(x).to_string(),
            k.y_star.to_string(),
            k.y_bar.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
