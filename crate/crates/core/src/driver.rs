//! Batch run: build, step to the end time, write snapshots and diagnostics.

use std::path::Path;
use std::time::Instant;

use crate::config::RunConfig;
use crate::diagnostics::{diagnose, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::output::{write_snapshot, DiagnosticsWriter};
use crate::solver::{RunStats, Solver};

#[derive(Clone, Debug)]
pub struct RunReport {
    pub steps: usize,
    pub t: f64,
    pub wall_seconds: f64,
    pub stats: RunStats,
    pub snapshots: usize,
    pub last: DiagnosticsRecord,
    /// Largest limited fraction seen on any diagnostics row.
    pub max_limited_fraction: f64,
}

/// Failure after the run started; output written so far stays on disk.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub step: usize,
    pub t: f64,
}

pub fn build_solver(cfg: &RunConfig) -> Result<Solver> {
    Solver::new(cfg.scenario()?, cfg.solver.clone())
}

/// Runs a configuration on the given number of threads (default: rayon's).
pub fn run(cfg: &RunConfig) -> std::result::Result<RunReport, RunFailure> {
    let pre = |error: Error| RunFailure { error, step: 0, t: 0.0 };
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| pre(Error::Config(format!("thread pool: {e}"))))?;
            pool.install(|| run_inner(cfg))
        }
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &RunConfig) -> std::result::Result<RunReport, RunFailure> {
    let start = Instant::now();
    let fail = |error: Error, s: &Solver| RunFailure { error, step: s.step, t: s.t };
    let mut solver = build_solver(cfg).map_err(|error| RunFailure { error, step: 0, t: 0.0 })?;
    let dir = cfg.output.dir.as_path();
    let t_end = solver.scenario.t_end;
    let mut diag = DiagnosticsWriter::create(dir, &cfg.output.diagnostics).map_err(|e| fail(e, &solver))?;
    let mut snapshots = 0;
    let mut snap = |s: &Solver, tag: &str| -> Result<()> {
        if cfg.output.snapshots {
            write_snapshot(&s.grid, &s.model, dir, tag)?;
            snapshots += 1;
        }
        Ok(())
    };
    let mut rec = diagnose(&solver.grid, &solver.model, 0, 0.0, 0.0, None);
    let mut max_lim = rec.limited_fraction;
    diag.write(&rec).map_err(|e| fail(e, &solver))?;
    snap(&solver, &step_tag(0)).map_err(|e| fail(e, &solver))?;
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
    let mut next_out = if cfg.output.interval > 0.0 { cfg.output.interval } else { f64::INFINITY };
    let mut last_written = 0;
    while solver.step < max_steps && solver.t < t_end * (1.0 - 1e-14) {
        let st = match solver.step(t_end - solver.t) {
            Ok(st) => st,
            Err(e) => {
                let _ = write_snapshot(&solver.grid, &solver.model, dir, "failed");
                return Err(fail(e, &solver));
            }
        };
        let done = solver.step >= max_steps || solver.t >= t_end * (1.0 - 1e-14);
        if solver.step % cfg.output.diagnostics_every == 0 || done {
            rec = diagnose(&solver.grid, &solver.model, solver.step, solver.t, st.dt, Some(&rec));
            max_lim = max_lim.max(rec.limited_fraction);
            diag.write(&rec).map_err(|e| fail(e, &solver))?;
        }
        let by_step = cfg.output.every > 0 && solver.step % cfg.output.every == 0;
        let by_time = solver.t >= next_out * (1.0 - 1e-12);
        while solver.t >= next_out * (1.0 - 1e-12) {
            next_out += cfg.output.interval;
        }
        if by_step || by_time || done {
            snap(&solver, &step_tag(solver.step)).map_err(|e| fail(e, &solver))?;
            last_written = solver.step;
        }
    }
    if last_written != solver.step {
        snap(&solver, &step_tag(solver.step)).map_err(|e| fail(e, &solver))?;
    }
    Ok(RunReport {
        steps: solver.step,
        t: solver.t,
        wall_seconds: start.elapsed().as_secs_f64(),
        stats: solver.stats.clone(),
        snapshots,
        last: rec,
        max_limited_fraction: max_lim,
    })
}

pub fn step_tag(step: usize) -> String {
    format!("{step:06}")
}

/// Validates a configuration file without running it.
pub fn check(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg = RunConfig::from_text_with(&text, overrides)?;
    build_solver(&cfg)?;
    Ok(cfg)
}
