//! Time integration on the AMR hierarchy.
//!
//! One coarse step advances level `ℓ` in `𝔯^ℓ` sub-steps. Each sub-step runs
//! the predictor, recurses into the next finer level, computes face fluxes,
//! builds DG candidates, detects troubled cells and recomputes those on the
//! subgrid. Fluxes through faces at a level jump are taken from the fine
//! side and accumulated onto the coarse face, so the coarse and fine sides
//! exchange identical face totals.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::amr::{indicator_value, Geometry, Grid, Lookup, RefinementControl, Status};
use crate::basis::{cached_operators, OperatorSet};
use crate::corrector::{element_dt, face_flux_table, time_integrate, update_element, volume_term, FaceRecord};
use crate::error::{Error, Result};
use crate::limiter::{
    all_admissible, detect, fv_apply, fv_fluxes, reconstruct_admissible, DmpAccumulator, DmpBounds, FvFluxes,
    LimiterOptions, Patch,
};
use crate::pde::{state_from, PdeModel};
use crate::predictor::{solve_predictor, PredictorOptions, SpaceTimePredictor, TraceTable};
use crate::scenarios::{Bc, Scenario};
use crate::tensor::{flatten, unflatten, Mat};

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub degree: usize,
    /// Fraction of the time-step bound; see `corrector::default_cfl`.
    pub cfl: f64,
    pub refine: usize,
    pub predictor: PredictorOptions,
    pub limiter: LimiterOptions,
    pub amr: RefinementControl,
    pub max_retries: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            degree: 3,
            cfl: crate::corrector::default_cfl(3),
            refine: 2,
            predictor: PredictorOptions::default(),
            limiter: LimiterOptions::default(),
            amr: RefinementControl::default(),
            max_retries: 3,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::Config(format!("cfl = {} must lie in (0, 1)", self.cfl)));
        }
        if self.degree > crate::basis::MAX_DEGREE {
            return Err(Error::Config(format!("degree {} exceeds {}", self.degree, crate::basis::MAX_DEGREE)));
        }
        if self.refine < 2 {
            return Err(Error::Config(format!("amr.r = {} must be at least 2", self.refine)));
        }
        if !(self.limiter.delta0 >= 0.0 && self.limiter.eps >= 0.0) {
            return Err(Error::Config("limiter.delta0 and limiter.eps must be non-negative".into()));
        }
        self.amr.validate()
    }
}

/// Counters of one coarse step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    pub dt: f64,
    pub retries: usize,
    /// Troubled cells summed over all sub-steps.
    pub troubled: usize,
    pub first_order: usize,
    pub fv_fallback_faces: usize,
    pub predictor_failures: usize,
    pub predictor_unconverged: usize,
    /// Cell updates summed over all sub-steps.
    pub cell_updates: usize,
}

/// Counters accumulated over a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    pub retries: usize,
    pub terminal_failures: usize,
    pub troubled: usize,
    pub first_order: usize,
    pub fv_fallback_faces: usize,
    pub predictor_failures: usize,
    pub predictor_unconverged: usize,
    pub refined: usize,
    pub coarsened: usize,
}

pub struct Solver {
    pub scenario: Scenario,
    pub model: PdeModel,
    pub opts: SolverOptions,
    pub grid: Grid,
    pub t: f64,
    pub step: usize,
    pub stats: RunStats,
}

/// Nodal payload of the initial condition on cell `(level, coords)`.
fn initial_payload(sc: &Scenario, model: &PdeModel, geom: &Geometry, ops: &OperatorSet, level: usize, coords: [i64; 3]) -> Vec<f64> {
    let nv = model.nvars();
    let lo = geom.cell_lo(level, coords);
    let h = geom.h(level);
    let dim = geom.dim;
    let mut u = Vec::with_capacity(ops.nodes_per_element() * nv);
    for k in 0..ops.nodes_per_element() {
        let ix = unflatten(k, ops.n, dim);
        let mut x = [0.0; 3];
        for a in 0..dim {
            x[a] = lo[a] + h[a] * ops.quad.nodes[ix[a]];
        }
        let q = model.prim_to_cons(&(sc.initial)(&x, 0.0));
        u.extend_from_slice(&q[..nv]);
    }
    u
}

/// Subcell point samples of the initial condition.
fn initial_subcells(sc: &Scenario, model: &PdeModel, geom: &Geometry, ops: &OperatorSet, level: usize, coords: [i64; 3]) -> Vec<f64> {
    let nv = model.nvars();
    let lo = geom.cell_lo(level, coords);
    let h = geom.h(level);
    let dim = geom.dim;
    let ns = ops.ns;
    let mut w = Vec::with_capacity(ops.subcells_per_element() * nv);
    for c in 0..ops.subcells_per_element() {
        let ix = unflatten(c, ns, dim);
        let mut x = [0.0; 3];
        for a in 0..dim {
            x[a] = lo[a] + h[a] * (ix[a] as f64 + 0.5) / ns as f64;
        }
        let q = model.prim_to_cons(&(sc.initial)(&x, 0.0));
        w.extend_from_slice(&q[..nv]);
    }
    w
}

impl Solver {
    pub fn new(scenario: Scenario, opts: SolverOptions) -> Result<Solver> {
        opts.validate()?;
        let dim = scenario.dim;
        let ops = cached_operators(opts.degree, dim, 2 * opts.degree + 1, opts.refine)?;
        let mut model = scenario.model.clone();
        let nv = model.nvars();
        let geom = Geometry {
            dim,
            lo: scenario.lo,
            hi: scenario.hi,
            base: scenario.base,
            periodic: scenario.periodic(),
            refine: opts.refine,
        };
        let init_model = model.clone();
        let sc = scenario.clone();
        let g2 = geom.clone();
        let ops2 = ops.clone();
        let init = move |level: usize, coords: [i64; 3]| initial_payload(&sc, &init_model, &g2, &ops2, level, coords);
        let grid = Grid::new(geom, opts.amr.lmax, ops.clone(), nv, &init)?;
        if scenario.ch_auto {
            model.params.ch = 0.0;
            let mut ch: f64 = 0.0;
            for c in &grid.cells {
                for s in c.u.chunks_exact(nv) {
                    for a in 0..dim {
                        ch = ch.max(model.max_convective_speed_axis(&state_from(s), a)?);
                    }
                }
            }
            model.params.ch = ch;
        }
        let mut solver = Solver { scenario, model, opts, grid, t: 0.0, step: 0, stats: RunStats::default() };
        for _ in 0..solver.opts.amr.lmax {
            let chi = solver.estimator();
            let rep = solver.grid.adapt(&solver.model, &chi, &solver.opts.amr, Some(&init))?;
            if rep.refined == 0 {
                break;
            }
        }
        solver.limit_initial_data();
        solver.grid.update_virtual_cells(&solver.model)?;
        Ok(solver)
    }

    /// Cells whose initial polynomial is not admissible start limited.
    fn limit_initial_data(&mut self) {
        if !self.opts.limiter.enabled {
            return;
        }
        let ops = self.grid.ops.clone();
        let model = &self.model;
        let ids = self.grid.tree_order();
        let marks: Vec<Option<(Vec<f64>, Vec<f64>)>> = ids
            .par_iter()
            .map(|&id| {
                let c = &self.grid.cells[id];
                let rep = detect(model, &ops, &c.u, None, &self.opts.limiter);
                if !rep.physical_only() {
                    return None;
                }
                let w = initial_subcells(&self.scenario, model, &self.grid.geom, &ops, c.level, c.coords);
                let u = reconstruct_admissible(model, &ops, &w);
                Some((w, u))
            })
            .collect();
        for (&id, m) in ids.iter().zip(marks) {
            if let Some((w, u)) = m {
                let c = &mut self.grid.cells[id];
                c.u = u;
                c.sub = Some(w);
                c.beta = true;
            }
        }
    }

    /// Refinement estimator per cell id.
    pub fn estimator(&self) -> Vec<f64> {
        let g = &self.grid;
        let phi: Vec<f64> = g
            .cells
            .par_iter()
            .map(|c| indicator_value(&self.model, &g.ops, &c.u, g.geom.h(c.level), self.opts.amr.indicator))
            .collect();
        g.compute_chi(&phi, self.opts.amr.eps)
    }

    /// Largest admissible coarse time step.
    pub fn compute_dt(&self) -> Result<f64> {
        let g = &self.grid;
        let r = g.geom.refine as f64;
        let ids = g.tree_order();
        let dts: Vec<Result<f64>> = ids
            .par_iter()
            .map(|&id| {
                let c = &g.cells[id];
                let hmin = g.geom.h_min(c.level);
                let mut dt = element_dt(&self.model, &g.ops, &c.u, hmin, self.opts.cfl)?;
                if let (true, Some(w)) = (c.beta, &c.sub) {
                    dt = dt.min(element_dt(&self.model, &g.ops, w, hmin, self.opts.cfl)?);
                }
                Ok(dt * r.powi(c.level as i32))
            })
            .collect();
        let mut dt = f64::INFINITY;
        for d in dts {
            dt = dt.min(d?);
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Solver(format!("invalid time step {dt}")));
        }
        Ok(dt)
    }

    /// Limited fraction of the active cells.
    pub fn limited_fraction(&self) -> f64 {
        let ids = self.grid.tree_order();
        let n = ids.iter().filter(|&&id| self.grid.cells[id].beta).count();
        n as f64 / ids.len().max(1) as f64
    }

    /// Advances by one coarse step of at most `dt_max`, retrying with a
    /// halved step on terminal failures.
    pub fn step(&mut self, dt_max: f64) -> Result<StepStats> {
        let mut dt = self.compute_dt()?.min(dt_max);
        let backup = self.grid.cells.clone();
        let mut retries = 0;
        loop {
            match self.advance_coarse(dt) {
                Ok(mut st) => {
                    st.retries = retries;
                    self.t += dt;
                    self.step += 1;
                    self.grid.update_virtual_cells(&self.model)?;
                    self.record(&st);
                    let ctrl = &self.opts.amr;
                    if ctrl.lmax > 0 && ctrl.interval > 0 && self.step % ctrl.interval == 0 {
                        self.adapt()?;
                    }
                    return Ok(st);
                }
                Err(e @ (Error::Solver(_) | Error::Inadmissible(_))) => {
                    self.stats.terminal_failures += 1;
                    self.grid.cells = backup.clone();
                    if retries >= self.opts.max_retries {
                        return Err(Error::Solver(format!("{e}; giving up after {retries} retries at t = {}", self.t)));
                    }
                    retries += 1;
                    self.stats.retries += 1;
                    dt *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn record(&mut self, st: &StepStats) {
        let s = &mut self.stats;
        s.steps += 1;
        s.troubled += st.troubled;
        s.first_order += st.first_order;
        s.fv_fallback_faces += st.fv_fallback_faces;
        s.predictor_failures += st.predictor_failures;
        s.predictor_unconverged += st.predictor_unconverged;
    }

    pub fn adapt(&mut self) -> Result<()> {
        let chi = self.estimator();
        let rep = self.grid.adapt(&self.model, &chi, &self.opts.amr, None)?;
        self.stats.refined += rep.refined;
        self.stats.coarsened += rep.coarsened;
        Ok(())
    }

    fn advance_coarse(&mut self, dt: f64) -> Result<StepStats> {
        let ncells = self.grid.cells.len();
        let cx = Ctx { model: &self.model, scenario: &self.scenario, opts: &self.opts, ops: self.grid.ops.clone() };
        let mut wk = Work {
            preds: (0..ncells).map(|_| None).collect(),
            slots: vec![Vec::new(); ncells],
            stats: StepStats { dt, ..StepStats::default() },
        };
        advance(&cx, &mut self.grid, &mut wk, 0, self.t, dt, 0)?;
        Ok(wk.stats)
    }
}

struct Ctx<'a> {
    model: &'a PdeModel,
    scenario: &'a Scenario,
    opts: &'a SolverOptions,
    ops: Arc<OperatorSet>,
}

struct Work {
    preds: Vec<Option<SpaceTimePredictor>>,
    /// Face records per cell, ordered `axis*2 + side`.
    slots: Vec<Vec<FaceRecord>>,
    stats: StepStats,
}

fn unit(axis: usize, s: i64) -> [i64; 3] {
    let mut o = [0i64; 3];
    o[axis] = s;
    o
}

fn side_sign(side: usize) -> i64 {
    if side == 0 {
        -1
    } else {
        1
    }
}

/// Tangential node indices of face point `p` (normal axis has extent 1).
fn face_point(p: usize, axis: usize, n: usize, dim: usize) -> [usize; 3] {
    let mut ix = [0usize; 3];
    let mut rem = p;
    for a in 0..dim {
        if a != axis {
            ix[a] = rem % n;
            rem /= n;
        }
    }
    ix
}

enum FaceTask {
    Pair { id: usize, j: usize, axis: usize },
    Coarse { id: usize, axis: usize, side: usize, vc: usize },
    Boundary { id: usize, axis: usize, side: usize },
}

fn record_from_table(ops: &OperatorSet, table: &[f64], npts: usize, nv: usize) -> FaceRecord {
    FaceRecord::from_nodal(ops, time_integrate(ops, table, npts * nv), nv)
}

#[allow(clippy::too_many_arguments)]
fn face_task(cx: &Ctx, grid: &Grid, wk: &Work, task: &FaceTask, level: usize, t: f64, dt: f64, m: usize) -> Result<FaceRecord> {
    let ops = &*cx.ops;
    let model = cx.model;
    let nv = grid.nv;
    let dim = grid.geom.dim;
    let h = grid.geom.h(level);
    let pred = |id: usize| wk.preds[id].as_ref().expect("predictor of active cell");
    match *task {
        FaceTask::Pair { id, j, axis } => {
            let lower = pred(id).face_trace(ops, axis, 1);
            let upper = pred(j).face_trace(ops, axis, 0);
            let tab = face_flux_table(model, &lower, &upper, axis, dim, ops.degree, h[axis]);
            Ok(record_from_table(ops, &tab, lower.npts, nv))
        }
        FaceTask::Coarse { id, axis, side, vc } => {
            let own = pred(id).face_trace(ops, axis, side);
            let parent = grid.cells[vc].parent.ok_or_else(|| Error::Grid(format!("virtual child {vc} without parent")))?;
            let o = grid.geom.child_offset(grid.cells[vc].coords);
            let mut space: [Option<&Mat>; 3] = [None, None, None];
            for b in 0..dim {
                space[b] = Some(if b == axis {
                    if side == 1 {
                        &ops.eval_left
                    } else {
                        &ops.eval_right
                    }
                } else {
                    &ops.child_proj[o[b]]
                });
            }
            let other = pred(parent).evaluate(space, Some(&ops.child_proj[m]));
            let tab = if side == 1 {
                face_flux_table(model, &own, &other, axis, dim, ops.degree, h[axis])
            } else {
                face_flux_table(model, &other, &own, axis, dim, ops.degree, h[axis])
            };
            Ok(record_from_table(ops, &tab, own.npts, nv))
        }
        FaceTask::Boundary { id, axis, side } => {
            let own = pred(id).face_trace(ops, axis, side);
            let ghost = boundary_table(cx, grid, &own, id, axis, side, t, dt)?;
            let tab = if side == 1 {
                face_flux_table(model, &own, &ghost, axis, dim, ops.degree, h[axis])
            } else {
                face_flux_table(model, &ghost, &own, axis, dim, ops.degree, h[axis])
            };
            Ok(record_from_table(ops, &tab, own.npts, nv))
        }
    }
}

/// Ghost trace table on a domain boundary face.
#[allow(clippy::too_many_arguments)]
fn boundary_table(cx: &Ctx, grid: &Grid, own: &TraceTable, id: usize, axis: usize, side: usize, t: f64, dt: f64) -> Result<TraceTable> {
    let ops = &*cx.ops;
    let nv = grid.nv;
    let dim = grid.geom.dim;
    let c = &grid.cells[id];
    let lo = grid.geom.cell_lo(c.level, c.coords);
    let h = grid.geom.h(c.level);
    let mut ghost = own.clone();
    for ti in 0..own.nt {
        let tn = t + dt * ops.quad.nodes[ti];
        for p in 0..own.npts {
            let ix = face_point(p, axis, ops.n, dim);
            let mut x = [0.0; 3];
            for a in 0..dim {
                x[a] = if a == axis { lo[a] + side as f64 * h[a] } else { lo[a] + h[a] * ops.quad.nodes[ix[a]] };
            }
            let off = (ti * own.npts + p) * nv;
            // An inadmissible trace poisons the face like an interior one:
            // the candidate turns NaN and the cell is recomputed.
            let (q, g) = match cx.scenario.ghost(axis, side, &x, tn, &own.state(ti, p), &own.gradient(ti, p)) {
                Ok(v) => v,
                Err(Error::Inadmissible(_)) => {
                    ghost.q[off..off + nv].iter_mut().for_each(|v| *v = f64::NAN);
                    continue;
                }
                Err(e) => return Err(e),
            };
            ghost.q[off..off + nv].copy_from_slice(&q[..nv]);
            for a in 0..dim {
                ghost.grad[a][off..off + nv].copy_from_slice(&g[a][..nv]);
            }
        }
    }
    Ok(ghost)
}

/// Subcell patch of cell `id` with ghosts from same-level neighbours and
/// boundary conditions.
fn build_patch(cx: &Ctx, grid: &Grid, snap: &HashMap<usize, Vec<f64>>, id: usize, t: f64) -> Result<Patch> {
    let ops = &*cx.ops;
    let nv = grid.nv;
    let dim = grid.geom.dim;
    let ns = ops.ns as isize;
    let c = &grid.cells[id];
    let lo = grid.geom.cell_lo(c.level, c.coords);
    let h = grid.geom.h(c.level);
    let mut patch = Patch::new(ops.ns, dim, nv);
    patch.set_interior(&snap[&id]);
    let all: Vec<[isize; 3]> = patch.indices().collect();
    for ix in &all {
        if (0..dim).all(|a| (0..ns).contains(&ix[a])) {
            continue;
        }
        let mut jx = *ix;
        let mut bcs: Vec<(usize, usize)> = Vec::new();
        for a in 0..dim {
            let o = if ix[a] < 0 {
                -1
            } else if ix[a] >= ns {
                1
            } else {
                0
            };
            if o == 0 {
                continue;
            }
            let nb = c.coords[a] + o;
            let n = grid.geom.cells_per_axis(c.level, a);
            if grid.geom.periodic[a] || (0..n).contains(&nb) {
                continue;
            }
            let side = usize::from(o > 0);
            let mirrored = if side == 0 { -1 - ix[a] } else { 2 * ns - 1 - ix[a] };
            jx[a] = match cx.scenario.bcs[a][side] {
                Bc::Slip | Bc::NoSlip { .. } => mirrored,
                _ => {
                    if side == 0 {
                        0
                    } else {
                        ns - 1
                    }
                }
            }
            .clamp(0, ns - 1);
            bcs.push((a, side));
        }
        let mut off = [0i64; 3];
        let mut local = [0usize; 3];
        for a in 0..dim {
            off[a] = jx[a].div_euclid(ns) as i64;
            local[a] = jx[a].rem_euclid(ns) as usize;
        }
        let src = if off == [0; 3] {
            Some(&snap[&id])
        } else {
            match grid.neighbor(id, off) {
                Lookup::Cell(j) => snap.get(&j),
                _ => None,
            }
        };
        let Some(src) = src else { continue };
        let k = flatten(&local, ops.ns, dim) * nv;
        let mut q = state_from(&src[k..k + nv]);
        if !bcs.is_empty() {
            let mut x = [0.0; 3];
            for a in 0..dim {
                x[a] = lo[a] + h[a] * (ix[a] as f64 + 0.5) / ns as f64;
            }
            for &(a, side) in &bcs {
                q = cx.scenario.ghost_average(a, side, &x, t, &q)?;
            }
        }
        patch.cell_mut(*ix).copy_from_slice(&q[..nv]);
    }
    // Corners without a same-level source copy their nearest filled cell.
    for ix in &all {
        if patch.cell(*ix)[0].is_nan() {
            let mut jx = *ix;
            for a in 0..dim {
                jx[a] = jx[a].clamp(-1, ns);
            }
            let mut src = patch.cell(jx).to_vec();
            if src[0].is_nan() {
                for a in 0..dim {
                    jx[a] = jx[a].clamp(0, ns - 1);
                }
                src = patch.cell(jx).to_vec();
            }
            patch.cell_mut(*ix).copy_from_slice(&src);
        }
    }
    Ok(patch)
}

fn troubled_fv(cx: &Ctx, grid: &Grid, wk: &Work, snap: &HashMap<usize, Vec<f64>>, id: usize, t: f64, dt: f64, first_order: bool) -> Result<FvFluxes> {
    let ops = &*cx.ops;
    let dim = grid.geom.dim;
    let c = &grid.cells[id];
    let h = grid.geom.h(c.level);
    let mut hs = [1.0; 3];
    for a in 0..dim {
        hs[a] = h[a] / ops.ns as f64;
    }
    let patch = build_patch(cx, grid, snap, id, t + 0.5 * dt)?;
    let mut fl = fv_fluxes(cx.model, &patch, hs, dt, cx.opts.limiter.scheme, first_order);
    for a in 0..dim {
        for s in 0..2 {
            if let Lookup::Cell(j) = grid.neighbor(id, unit(a, side_sign(s))) {
                if grid.cells[j].status == Status::VirtualParent {
                    fl.set_boundary(a, s, &wk.slots[id][2 * a + s].b);
                }
            }
        }
    }
    Ok(fl)
}

fn subcell_sizes(grid: &Grid, ops: &OperatorSet, level: usize) -> [f64; 3] {
    let h = grid.geom.h(level);
    let mut hs = [1.0; 3];
    for a in 0..grid.geom.dim {
        hs[a] = h[a] / ops.ns as f64;
    }
    hs
}

#[allow(clippy::too_many_arguments)]
fn advance(cx: &Ctx, grid: &mut Grid, wk: &mut Work, level: usize, t: f64, dt: f64, m: usize) -> Result<()> {
    let ops = cx.ops.clone();
    let model = cx.model;
    let nv = grid.nv;
    let dim = grid.geom.dim;
    let r = grid.geom.refine;
    let h = grid.geom.h(level);

    grid.refresh_virtual_parents(level);
    let mut level_ids: Vec<usize> = grid.active[level].clone();
    level_ids.extend(&grid.virtual_children[level]);
    level_ids.extend(&grid.virtual_parents[level]);
    let snap: HashMap<usize, Vec<f64>> = {
        let g = &*grid;
        level_ids.par_iter().map(|&id| (id, g.subcell_data(id))).collect()
    };

    let ids = grid.active[level].clone();
    let preds: Vec<SpaceTimePredictor> = {
        let g = &*grid;
        ids.par_iter().map(|&id| solve_predictor(&ops, model, &g.cells[id].u, dt, h, &cx.opts.predictor)).collect()
    };
    for (&id, p) in ids.iter().zip(preds) {
        if p.failed {
            wk.stats.predictor_failures += 1;
        } else if !p.converged {
            wk.stats.predictor_unconverged += 1;
        }
        wk.preds[id] = Some(p);
        wk.slots[id] = vec![FaceRecord::zeros(&ops, nv); 2 * dim];
    }

    if level + 1 < grid.num_levels() && !grid.active[level + 1].is_empty() {
        for m2 in 0..r {
            let tau = m2 as f64 / r as f64;
            let vcs = grid.virtual_children[level + 1].clone();
            let payloads: Vec<(Vec<f64>, Vec<f64>)> = {
                let g = &*grid;
                let w = &*wk;
                vcs.par_iter()
                    .map(|&id| {
                        let p = g.cells[id].parent.expect("virtual child parent");
                        let pu = w.preds[p].as_ref().expect("parent predictor").at_time(&ops, tau);
                        let o = g.geom.child_offset(g.cells[id].coords);
                        g.virtual_child_payload(model, &pu, p, o)
                    })
                    .collect()
            };
            for (&id, (u, w)) in vcs.iter().zip(payloads) {
                grid.cells[id].u = u;
                grid.cells[id].sub = Some(w);
            }
            advance(cx, grid, wk, level + 1, t + m2 as f64 * dt / r as f64, dt / r as f64, m2)?;
        }
    }

    // Face fluxes.
    let mut tasks = Vec::new();
    for &id in &ids {
        for a in 0..dim {
            for s in 0..2 {
                match grid.neighbor(id, unit(a, side_sign(s))) {
                    Lookup::Cell(j) => match grid.cells[j].status {
                        Status::Active => {
                            if s == 1 {
                                tasks.push(FaceTask::Pair { id, j, axis: a });
                            }
                        }
                        Status::VirtualChild => tasks.push(FaceTask::Coarse { id, axis: a, side: s, vc: j }),
                        Status::VirtualParent => {}
                    },
                    Lookup::Boundary { .. } => tasks.push(FaceTask::Boundary { id, axis: a, side: s }),
                    Lookup::Missing => {
                        return Err(Error::Grid(format!("cell {id} has no face neighbour on axis {a} side {s}")));
                    }
                }
            }
        }
    }
    let recs: Vec<Result<FaceRecord>> = {
        let g = &*grid;
        let w = &*wk;
        tasks.par_iter().map(|task| face_task(cx, g, w, task, level, t, dt, m)).collect()
    };
    for (task, rec) in tasks.iter().zip(recs) {
        let rec = rec?;
        match *task {
            FaceTask::Pair { id, j, axis } => {
                wk.slots[id][2 * axis + 1] = rec.clone();
                wk.slots[j][2 * axis] = rec;
            }
            FaceTask::Coarse { id, axis, side, .. } | FaceTask::Boundary { id, axis, side } => {
                wk.slots[id][2 * axis + side] = rec;
            }
        }
    }

    // Candidates and detection.
    let lim = &cx.opts.limiter;
    let pos: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let (vols, mut cands, bounds, mut troubled): (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<DmpBounds>, Vec<bool>) = {
        let g = &*grid;
        let w = &*wk;
        let res: Vec<Result<(Vec<f64>, Vec<f64>, DmpBounds, bool)>> = ids
            .par_iter()
            .map(|&id| {
                let pred = w.preds[id].as_ref().unwrap();
                let vol = volume_term(&ops, pred);
                let cand = update_element(&ops, &g.cells[id].u, pred, &vol, &w.slots[id])?;
                let mut acc = DmpAccumulator::new(model, lim.dmp_vars);
                acc.add_subcells(&snap[&id]);
                for off in g.geom.voronoi_offsets() {
                    if let Lookup::Cell(j) = g.neighbor(id, off) {
                        if let Some(s) = snap.get(&j) {
                            acc.add_subcells(s);
                        }
                    }
                }
                let b = acc.finish(lim.delta0, lim.eps);
                let rep = detect(model, &ops, &cand, Some(&b), lim);
                if !lim.enabled && rep.physical_only() {
                    return Err(Error::Solver(format!("inadmissible candidate in cell {id} with the limiter disabled")));
                }
                let bad = lim.enabled && (pred.failed || rep.beta());
                Ok((vol, cand, b, bad))
            })
            .collect();
        let mut vols = Vec::with_capacity(ids.len());
        let mut cands = Vec::with_capacity(ids.len());
        let mut bounds = Vec::with_capacity(ids.len());
        let mut tr = Vec::with_capacity(ids.len());
        for x in res {
            let (v, c, b, t) = x?;
            vols.push(v);
            cands.push(c);
            bounds.push(b);
            tr.push(t);
        }
        (vols, cands, bounds, tr)
    };

    // Subcell recomputation of troubled cells.
    let hs = subcell_sizes(grid, &ops, level);
    let n = ids.len();
    let mut first_order = vec![false; n];
    let mut raw: Vec<Option<FvFluxes>> = vec![None; n];
    let mut dirty: Vec<bool> = troubled.clone();
    let mut fluxes: Vec<Option<FvFluxes>> = vec![None; n];
    let mut w_new: Vec<Option<Vec<f64>>> = vec![None; n];
    if troubled.iter().any(|&b| b) {
        loop {
            let todo: Vec<usize> = (0..n).filter(|&i| dirty[i]).collect();
            let computed: Vec<Result<FvFluxes>> = {
                let g = &*grid;
                let w = &*wk;
                todo.par_iter()
                    .map(|&i| troubled_fv(cx, g, w, &snap, ids[i], t, dt, first_order[i]))
                    .collect()
            };
            for (&i, f) in todo.iter().zip(computed) {
                raw[i] = Some(f?);
                dirty[i] = false;
            }
            // Shared faces of two troubled cells get one flux.
            for i in 0..n {
                fluxes[i] = if troubled[i] { raw[i].clone() } else { None };
            }
            for i in 0..n {
                if !troubled[i] {
                    continue;
                }
                for a in 0..dim {
                    let Lookup::Cell(jid) = grid.neighbor(ids[i], unit(a, 1)) else { continue };
                    let Some(&j) = pos.get(&jid) else { continue };
                    if j == i || !troubled[j] {
                        continue;
                    }
                    let i_wins = if first_order[i] != first_order[j] { first_order[i] } else { ids[i] < ids[j] };
                    if i_wins {
                        let b = fluxes[i].as_ref().unwrap().boundary(a, 1);
                        fluxes[j].as_mut().unwrap().set_boundary(a, 0, &b);
                    } else {
                        let b = fluxes[j].as_ref().unwrap().boundary(a, 0);
                        fluxes[i].as_mut().unwrap().set_boundary(a, 1, &b);
                    }
                }
            }
            let mut changed = false;
            for i in 0..n {
                if !troubled[i] {
                    continue;
                }
                let w = fv_apply(&snap[&ids[i]], fluxes[i].as_ref().unwrap(), hs, dt);
                if !all_admissible(model, &w) {
                    if first_order[i] {
                        return Err(Error::Solver(format!(
                            "first-order subcell update of cell {} inadmissible at t = {t}",
                            ids[i]
                        )));
                    }
                    first_order[i] = true;
                    dirty[i] = true;
                    changed = true;
                }
                w_new[i] = Some(w);
            }
            if changed {
                continue;
            }
            // Unlimited neighbours take the subgrid flux on shared faces.
            let mut touched = vec![false; n];
            for i in 0..n {
                if !troubled[i] {
                    continue;
                }
                for a in 0..dim {
                    for s in 0..2 {
                        let Lookup::Cell(jid) = grid.neighbor(ids[i], unit(a, side_sign(s))) else { continue };
                        let Some(&j) = pos.get(&jid) else { continue };
                        if troubled[j] {
                            continue;
                        }
                        let b = fluxes[i].as_ref().unwrap().boundary(a, s);
                        wk.slots[jid][2 * a + 1 - s] = FaceRecord::from_subfaces(&ops, b, nv);
                        touched[j] = true;
                    }
                }
            }
            let redo: Vec<usize> = (0..n).filter(|&j| touched[j]).collect();
            let results: Vec<Result<(Vec<f64>, bool)>> = {
                let g = &*grid;
                let w = &*wk;
                redo.par_iter()
                    .map(|&j| {
                        let id = ids[j];
                        let pred = w.preds[id].as_ref().unwrap();
                        let cand = update_element(&ops, &g.cells[id].u, pred, &vols[j], &w.slots[id])?;
                        let rep = detect(model, &ops, &cand, Some(&bounds[j]), lim);
                        Ok((cand, rep.beta()))
                    })
                    .collect()
            };
            for (&j, res) in redo.iter().zip(results) {
                let (cand, bad) = res?;
                cands[j] = cand;
                if bad {
                    troubled[j] = true;
                    dirty[j] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    // Commit.
    for i in 0..n {
        let id = ids[i];
        wk.stats.cell_updates += 1;
        if troubled[i] {
            wk.stats.troubled += 1;
            if first_order[i] {
                wk.stats.first_order += 1;
            }
            let fl = fluxes[i].as_ref().unwrap();
            wk.stats.fv_fallback_faces += fl.fallbacks;
            for a in 0..dim {
                for s in 0..2 {
                    wk.slots[id][2 * a + s] = FaceRecord::from_subfaces(&ops, fl.boundary(a, s), nv);
                }
            }
            let w = w_new[i].take().unwrap();
            let c = &mut grid.cells[id];
            c.u = reconstruct_admissible(model, &ops, &w);
            c.sub = Some(w);
            c.beta = true;
        } else {
            let c = &mut grid.cells[id];
            c.u = std::mem::take(&mut cands[i]);
            c.sub = None;
            c.beta = false;
        }
    }

    // Fine faces feed the coarse neighbour's accumulator.
    if level > 0 {
        let scale = 1.0 / r as f64;
        for &id in &ids {
            for a in 0..dim {
                for s in 0..2 {
                    let Lookup::Cell(j) = grid.neighbor(id, unit(a, side_sign(s))) else { continue };
                    if grid.cells[j].status != Status::VirtualChild {
                        continue;
                    }
                    let p = grid.cells[j].parent.expect("virtual child parent");
                    let tang: Vec<usize> = (0..dim).filter(|&b| b != a).collect();
                    let o = grid.geom.child_offset(grid.cells[id].coords);
                    let rec = wk.slots[id][2 * a + s].restrict_to_parent(&ops, nv, &tang, o);
                    wk.slots[p][2 * a + 1 - s].add_scaled(&rec, scale);
                }
            }
        }
    }
    Ok(())
}
