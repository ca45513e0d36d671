//! Output directory resolution and file writers.

use std::path::{Path, PathBuf};

use anyhow::Context;
use ifenn_core::fem::SolveHistory;
use serde::Serialize;

use crate::config::resolve;
use crate::Failure;

pub const OUTPUT_ROOT_ENV: &str = "IFENN_OUTPUT_ROOT";

/// Picks and creates the output directory. A relative `--out` resolves
/// against the working directory and a relative configured `output`
/// against the configuration file; `IFENN_OUTPUT_ROOT` replaces both bases.
pub fn output_dir(flag: Option<&Path>, configured: Option<&Path>, config_base: &Path, default: &str) -> Result<PathBuf, Failure> {
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
    let dir = match (flag, configured) {
        (Some(p), _) => resolve(root.as_deref().unwrap_or(Path::new("")), p),
        (None, Some(p)) => resolve(root.as_deref().unwrap_or(config_base), p),
        (None, None) => resolve(root.as_deref().unwrap_or(Path::new("")), Path::new(default)),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).map_err(Failure::Io)?;
    Ok(dir)
}

pub fn io<E: Into<anyhow::Error>>(path: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Io(e.into().context(format!("writing {}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(io(path))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io(path))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(io(path))?;
    for row in rows {
        w.serialize(row).map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

#[derive(Serialize)]
struct ReactionRow {
    increment: usize,
    lf: f64,
    reaction: f64,
    iterations: usize,
}

pub fn write_reactions(path: &Path, history: &SolveHistory) -> Result<(), Failure> {
    write_csv(
        path,
        history.records.iter().map(|r| ReactionRow { increment: r.increment, lf: r.lf, reaction: r.reaction, iterations: r.iterations }),
    )
}

#[derive(Serialize)]
struct IterationRow {
    increment: usize,
    iteration: usize,
    ratio: f64,
    residual_norm: f64,
    residual_ratio: f64,
    solve_seconds: f64,
}

pub fn write_iterations(path: &Path, history: &SolveHistory) -> Result<(), Failure> {
    write_csv(
        path,
        history.records.iter().flat_map(|r| {
            r.log.iter().map(move |l| IterationRow {
                increment: r.increment,
                iteration: l.iteration,
                ratio: l.ratio,
                residual_norm: l.residual_norm,
                residual_ratio: l.residual_ratio,
                solve_seconds: l.solve_seconds,
            })
        }),
    )
}

/// Drops the nodal states (the Gauss point fields stay) and, unless asked
/// to keep them, the wall-clock times so reruns are byte-identical.
pub fn compact_history(history: &SolveHistory, keep_timings: bool) -> SolveHistory {
    let mut h = history.clone();
    for r in &mut h.records {
        r.state.u = Vec::new();
        r.state.eps_bar = Vec::new();
        r.state.kappa = Vec::new();
        if !keep_timings {
            for l in &mut r.log {
                l.solve_seconds = 0.0;
            }
        }
    }
    h
}

/// Reads `history.json` from a run directory or the file itself.
pub fn read_history(path: &Path) -> Result<SolveHistory, Failure> {
    let file = if path.is_dir() { path.join("history.json") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display())).map_err(Failure::Io)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display())).map_err(Failure::Config)
}
