//! Cell-by-cell tree AMR on a Cartesian base grid.
//!
//! Cells live in an arena addressed by id and by `(level, lattice coords)`.
//! Active cells (`σ = 0`) tile the domain; virtual parents (`σ = −1`) hold
//! averages of their children and virtual children (`σ = +1`) hold
//! projections of an active parent. Virtual cells exist only where they give
//! an active cell a same-level neighbour.

use std::collections::HashMap;
use std::sync::Arc;

use crate::basis::OperatorSet;
use crate::error::{Error, Result};
use crate::limiter::{all_admissible, reconstruct_admissible};
use crate::pde::{PdeModel, ZERO_STATE};
use crate::tensor::unflatten;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    VirtualParent,
    Active,
    VirtualChild,
}

impl Status {
    pub fn sigma(self) -> i8 {
        match self {
            Status::VirtualParent => -1,
            Status::Active => 0,
            Status::VirtualChild => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub level: usize,
    pub status: Status,
    pub beta: bool,
    pub coords: [i64; 3],
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Nodal DG coefficients `[space][var]`.
    pub u: Vec<f64>,
    /// Subcell averages; authoritative for limited active cells.
    pub sub: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Geometry {
    pub dim: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub base: [usize; 3],
    pub periodic: [bool; 3],
    pub refine: usize,
}

impl Geometry {
    pub fn cells_per_axis(&self, level: usize, axis: usize) -> i64 {
        (self.base[axis] * self.refine.pow(level as u32)) as i64
    }

    pub fn h(&self, level: usize) -> [f64; 3] {
        let mut h = [1.0; 3];
        for a in 0..self.dim {
            h[a] = (self.hi[a] - self.lo[a]) / self.cells_per_axis(level, a) as f64;
        }
        h
    }

    pub fn h_min(&self, level: usize) -> f64 {
        let h = self.h(level);
        h[..self.dim].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn cell_lo(&self, level: usize, coords: [i64; 3]) -> [f64; 3] {
        let h = self.h(level);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.lo[a] + coords[a] as f64 * h[a];
        }
        x
    }

    pub fn cell_volume(&self, level: usize) -> f64 {
        self.h(level)[..self.dim].iter().product()
    }

    pub fn domain_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.hi[a] - self.lo[a]).product()
    }

    /// Wraps periodic axes; returns the first non-periodic axis and side
    /// that falls outside the domain otherwise.
    pub fn wrap(&self, level: usize, coords: [i64; 3]) -> std::result::Result<[i64; 3], (usize, usize)> {
        let mut c = [0i64; 3];
        for a in 0..self.dim {
            let n = self.cells_per_axis(level, a);
            let x = coords[a];
            if (0..n).contains(&x) {
                c[a] = x;
            } else if self.periodic[a] {
                c[a] = x.rem_euclid(n);
            } else {
                return Err((a, usize::from(x >= n)));
            }
        }
        Ok(c)
    }

    /// Child index of a cell within its parent, per axis.
    pub fn child_offset(&self, coords: [i64; 3]) -> [usize; 3] {
        let mut o = [0usize; 3];
        for a in 0..self.dim {
            o[a] = coords[a].rem_euclid(self.refine as i64) as usize;
        }
        o
    }

    /// Non-zero offsets in `{−1,0,1}^d` (face, edge and corner neighbours).
    pub fn voronoi_offsets(&self) -> Vec<[i64; 3]> {
        let m = 3usize.pow(self.dim as u32);
        (0..m)
            .map(|i| {
                let u = unflatten(i, 3, self.dim);
                let mut o = [0i64; 3];
                for a in 0..self.dim {
                    o[a] = u[a] as i64 - 1;
                }
                o
            })
            .filter(|o| o.iter().any(|x| *x != 0))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lookup {
    Cell(usize),
    Boundary { axis: usize, side: usize },
    Missing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Indicator {
    Density,
    Pressure,
    VelocityMagnitude,
    Vorticity,
}

impl std::str::FromStr for Indicator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "density" => Ok(Indicator::Density),
            "pressure" => Ok(Indicator::Pressure),
            "velocity" | "velocity_magnitude" => Ok(Indicator::VelocityMagnitude),
            "vorticity" => Ok(Indicator::Vorticity),
            _ => Err(format!("unknown indicator `{s}` (density | pressure | velocity | vorticity)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RefinementControl {
    pub lmax: usize,
    pub chi_ref: f64,
    pub chi_rec: f64,
    pub eps: f64,
    pub indicator: Indicator,
    /// Coarse steps between adaptations.
    pub interval: usize,
}

impl Default for RefinementControl {
    fn default() -> Self {
        RefinementControl {
            lmax: 0,
            chi_ref: 0.25,
            chi_rec: 0.05,
            eps: 0.01,
            indicator: Indicator::Density,
            interval: 10,
        }
    }
}

impl RefinementControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi_rec < self.chi_ref) {
            return Err(Error::Config(format!(
                "amr.chirec = {} must be below amr.chiref = {}",
                self.chi_rec, self.chi_ref
            )));
        }
        if self.interval == 0 {
            return Err(Error::Config("amr.interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdaptReport {
    pub refined: usize,
    pub coarsened: usize,
}

/// Indicator value `Φ` of a cell from its nodal payload.
pub fn indicator_value(model: &PdeModel, ops: &OperatorSet, u: &[f64], h: [f64; 3], kind: Indicator) -> f64 {
    let nv = model.nvars();
    let mean = crate::pde::state_from(&ops.mean(u, nv));
    if !model.is_fluid() {
        return mean[0];
    }
    match kind {
        Indicator::Density => mean[0],
        Indicator::Pressure => model.pressure(&mean),
        Indicator::VelocityMagnitude => {
            let r = mean[0];
            (mean[1] * mean[1] + mean[2] * mean[2] + mean[3] * mean[3]).sqrt() / r
        }
        Indicator::Vorticity => {
            // Mean vorticity magnitude from nodal velocity derivatives.
            let dim = ops.dim;
            let ext = vec![ops.n; dim];
            let vel: Vec<f64> = u
                .chunks_exact(nv)
                .flat_map(|c| [c[1] / c[0], c[2] / c[0], c[3] / c[0]])
                .collect();
            let mut d = [vec![], vec![], vec![]];
            for a in 0..dim {
                crate::tensor::apply_axis(&vel, &ext, 3, a, &ops.diff, &mut d[a]);
                d[a].iter_mut().for_each(|x| *x /= h[a]);
            }
            let mut acc = 0.0;
            for k in 0..ops.nodes_per_element() {
                let g = |a: usize, c: usize| if a < dim { d[a][k * 3 + c] } else { 0.0 };
                let wx = g(1, 2) - g(2, 1);
                let wy = g(2, 0) - g(0, 2);
                let wz = g(0, 1) - g(1, 0);
                acc += ops.node_weight(k) * (wx * wx + wy * wy + wz * wz).sqrt();
            }
            acc
        }
    }
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub geom: Geometry,
    pub lmax: usize,
    pub nv: usize,
    pub ops: Arc<OperatorSet>,
    pub cells: Vec<Cell>,
    index: HashMap<(usize, [i64; 3]), usize>,
    /// Per level: active, virtual-child and virtual-parent ids.
    pub active: Vec<Vec<usize>>,
    pub virtual_children: Vec<Vec<usize>>,
    pub virtual_parents: Vec<Vec<usize>>,
}

impl Grid {
    /// Base grid of active level-0 cells; `init(level, coords)` returns the
    /// nodal payload.
    pub fn new(
        geom: Geometry,
        lmax: usize,
        ops: Arc<OperatorSet>,
        nv: usize,
        init: &(dyn Fn(usize, [i64; 3]) -> Vec<f64> + Sync),
    ) -> Result<Grid> {
        if geom.refine < 2 {
            return Err(Error::Grid(format!("refinement factor {} must be at least 2", geom.refine)));
        }
        if ops.refine != geom.refine || ops.dim != geom.dim {
            return Err(Error::Grid("operator set does not match grid geometry".into()));
        }
        for a in 0..geom.dim {
            if geom.base[a] == 0 || !(geom.hi[a] > geom.lo[a]) {
                return Err(Error::Grid(format!("invalid extent on axis {a}")));
            }
        }
        let n0: usize = geom.base[..geom.dim].iter().product();
        let mut cells = Vec::with_capacity(n0);
        for i in 0..n0 {
            let mut c = [0i64; 3];
            let mut rem = i;
            for a in 0..geom.dim {
                c[a] = (rem % geom.base[a]) as i64;
                rem /= geom.base[a];
            }
            cells.push(Cell {
                level: 0,
                status: Status::Active,
                beta: false,
                coords: c,
                parent: None,
                children: Vec::new(),
                u: init(0, c),
                sub: None,
            });
        }
        let mut g = Grid {
            geom,
            lmax,
            nv,
            ops,
            cells,
            index: HashMap::new(),
            active: Vec::new(),
            virtual_children: Vec::new(),
            virtual_parents: Vec::new(),
        };
        g.reindex();
        Ok(g)
    }

    pub fn max_level(&self) -> usize {
        self.cells.iter().filter(|c| c.status == Status::Active).map(|c| c.level).max().unwrap_or(0)
    }

    pub fn num_levels(&self) -> usize {
        self.active.len()
    }

    fn reindex(&mut self) {
        self.index.clear();
        let levels = self.cells.iter().map(|c| c.level).max().unwrap_or(0) + 1;
        self.active = vec![Vec::new(); levels];
        self.virtual_children = vec![Vec::new(); levels];
        self.virtual_parents = vec![Vec::new(); levels];
        for (id, c) in self.cells.iter().enumerate() {
            self.index.insert((c.level, c.coords), id);
            match c.status {
                Status::Active => self.active[c.level].push(id),
                Status::VirtualChild => self.virtual_children[c.level].push(id),
                Status::VirtualParent => self.virtual_parents[c.level].push(id),
            }
        }
    }

    pub fn lookup(&self, level: usize, coords: [i64; 3]) -> Lookup {
        match self.geom.wrap(level, coords) {
            Err((axis, side)) => Lookup::Boundary { axis, side },
            Ok(c) => self.index.get(&(level, c)).map_or(Lookup::Missing, |&id| Lookup::Cell(id)),
        }
    }

    pub fn neighbor(&self, id: usize, offset: [i64; 3]) -> Lookup {
        let c = &self.cells[id];
        let mut x = c.coords;
        for a in 0..3 {
            x[a] += offset[a];
        }
        self.lookup(c.level, x)
    }

    /// Active cell covering the lattice position, searching coarser levels.
    /// `None` if the region is covered by finer cells or lies outside.
    pub fn covering_active(&self, level: usize, coords: [i64; 3]) -> Option<usize> {
        let c = self.geom.wrap(level, coords).ok()?;
        let r = self.geom.refine as i64;
        let mut div = 1i64;
        for l in (0..=level).rev() {
            let mut cl = [0i64; 3];
            for a in 0..self.geom.dim {
                cl[a] = c[a].div_euclid(div);
            }
            if let Some(&id) = self.index.get(&(l, cl)) {
                match self.cells[id].status {
                    Status::Active => return Some(id),
                    Status::VirtualParent => return None,
                    Status::VirtualChild => {}
                }
            }
            div *= r;
        }
        None
    }

    /// Active ids in tree order (depth first from the base cells).
    pub fn tree_order(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.level == 0)
            .map(|(i, _)| i)
            .rev()
            .collect();
        while let Some(id) = stack.pop() {
            let c = &self.cells[id];
            match c.status {
                Status::Active => out.push(id),
                Status::VirtualParent => stack.extend(c.children.iter().rev()),
                Status::VirtualChild => {}
            }
        }
        out
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().map(|v| v.len()).sum()
    }

    /// t^n subcell data of a cell: stored averages or the projection.
    pub fn subcell_data(&self, id: usize) -> Vec<f64> {
        let c = &self.cells[id];
        match &c.sub {
            Some(w) => w.clone(),
            None => self.ops.project_to_subcells(&c.u, self.nv),
        }
    }

    /// Payload of virtual child `o` of a parent whose polynomial at the
    /// required time is `parent_u`. Subcell data comes from the parent's
    /// subcells when it is limited; otherwise from the projected child
    /// polynomial, falling back to the parent's `t^n` projection if that is
    /// not admissible.
    pub fn virtual_child_payload(
        &self,
        model: &PdeModel,
        parent_u: &[f64],
        parent: usize,
        o: [usize; 3],
    ) -> (Vec<f64>, Vec<f64>) {
        let ops = &self.ops;
        let nv = self.nv;
        let u = ops.child_projection(parent_u, nv, o);
        let p = &self.cells[parent];
        let sub = match &p.sub {
            Some(w) => ops.subcells_to_child(w, nv, o),
            None => {
                let w = ops.project_to_subcells(&u, nv);
                if all_admissible(model, &w) {
                    w
                } else {
                    ops.subcells_to_child(&ops.project_to_subcells(&p.u, nv), nv, o)
                }
            }
        };
        (u, sub)
    }

    /// Refreshes virtual parents on levels `>= from` bottom-up.
    pub fn refresh_virtual_parents(&mut self, from: usize) {
        let nv = self.nv;
        for l in (from..self.virtual_parents.len()).rev() {
            for i in 0..self.virtual_parents[l].len() {
                let id = self.virtual_parents[l][i];
                let kids = self.cells[id].children.clone();
                let us: Vec<&[f64]> = kids.iter().map(|&k| self.cells[k].u.as_slice()).collect();
                let u = self.ops.parent_average(&us, nv);
                let subs: Vec<Vec<f64>> = kids.iter().map(|&k| self.subcell_data(k)).collect();
                let refs: Vec<&[f64]> = subs.iter().map(|s| s.as_slice()).collect();
                let w = self.ops.subcells_from_children(&refs, nv);
                let c = &mut self.cells[id];
                c.u = u;
                c.sub = Some(w);
            }
        }
    }

    /// Refreshes all virtual payloads from the current active data.
    pub fn update_virtual_cells(&mut self, model: &PdeModel) -> Result<()> {
        for l in 0..self.virtual_children.len() {
            for i in 0..self.virtual_children[l].len() {
                let id = self.virtual_children[l][i];
                let p = self.cells[id]
                    .parent
                    .ok_or_else(|| Error::Grid(format!("orphan virtual child {id}")))?;
                if self.cells[p].status != Status::Active {
                    return Err(Error::Grid(format!("virtual child {id} without active parent")));
                }
                let o = self.geom.child_offset(self.cells[id].coords);
                let pu = self.cells[p].u.clone();
                let (u, w) = self.virtual_child_payload(model, &pu, p, o);
                let c = &mut self.cells[id];
                c.u = u;
                c.sub = Some(w);
            }
        }
        for l in 0..self.virtual_parents.len() {
            for &id in &self.virtual_parents[l] {
                if self.cells[id].children.is_empty() {
                    return Err(Error::Grid(format!("virtual parent {id} without children")));
                }
            }
        }
        self.refresh_virtual_parents(0);
        Ok(())
    }

    /// Refinement estimator per cell id (0 for non-active cells) from
    /// indicator values `phi` of every cell.
    pub fn compute_chi(&self, phi: &[f64], eps: f64) -> Vec<f64> {
        let dim = self.geom.dim;
        let mut chi = vec![0.0; self.cells.len()];
        for ids in &self.active {
            for &id in ids {
                let pi = phi[id];
                let mut num = 0.0;
                let mut den = 0.0;
                for a in 0..dim {
                    let side = |s: i64| {
                        let mut off = [0i64; 3];
                        off[a] = s;
                        match self.neighbor(id, off) {
                            Lookup::Cell(j) => phi[j],
                            _ => pi,
                        }
                    };
                    let (pp, pm) = (side(1), side(-1));
                    let dp = pp - pi;
                    let dm = pi - pm;
                    let d2 = pp - 2.0 * pi + pm;
                    num += d2 * d2;
                    let t = dp.abs() + dm.abs() + eps * (pp.abs() + 2.0 * pi.abs() + pm.abs());
                    den += t * t;
                }
                chi[id] = if den > 0.0 { (num / den).sqrt().min(1.0) } else { 0.0 };
            }
        }
        chi
    }

    /// Refines, recoarsens and restores the level-jump constraint.
    ///
    /// `reinit`, when given, supplies fresh payloads for new children
    /// (initial refinement); otherwise children receive the projection of
    /// their parent.
    pub fn adapt(
        &mut self,
        model: &PdeModel,
        chi: &[f64],
        ctrl: &RefinementControl,
        reinit: Option<&(dyn Fn(usize, [i64; 3]) -> Vec<f64> + Sync)>,
    ) -> Result<AdaptReport> {
        if self.lmax == 0 {
            return Ok(AdaptReport::default());
        }
        let n = self.cells.len();
        let offsets = self.geom.voronoi_offsets();
        let mut refine = vec![false; n];
        for (id, c) in self.cells.iter().enumerate() {
            if c.status == Status::Active && c.level < self.lmax && chi[id] > ctrl.chi_ref {
                refine[id] = true;
            }
        }
        // Propagate so that new children see no neighbour coarser than their parent.
        let mut changed = true;
        while changed {
            changed = false;
            for id in 0..n {
                if !refine[id] {
                    continue;
                }
                let c = &self.cells[id];
                for off in &offsets {
                    let mut x = c.coords;
                    for a in 0..3 {
                        x[a] += off[a];
                    }
                    if let Some(j) = self.covering_active(c.level, x) {
                        if self.cells[j].level < c.level && !refine[j] {
                            refine[j] = true;
                            changed = true;
                        }
                    }
                }
            }
        }
        let mut coarsen = vec![false; n];
        for (id, c) in self.cells.iter().enumerate() {
            if c.status != Status::VirtualParent {
                continue;
            }
            let ok_kids = c.children.iter().all(|&k| {
                let kc = &self.cells[k];
                kc.status == Status::Active && !kc.beta && chi[k] < ctrl.chi_rec && !refine[k]
            });
            if !ok_kids {
                continue;
            }
            let ok_nb = offsets.iter().all(|off| match self.neighbor(id, *off) {
                Lookup::Cell(j) if self.cells[j].status == Status::VirtualParent => {
                    self.cells[j].children.iter().all(|&k| self.cells[k].status != Status::VirtualParent && !refine[k])
                }
                _ => true,
            });
            if ok_nb {
                coarsen[id] = true;
            }
        }

        let mut report = AdaptReport::default();
        let mut out: Vec<Cell> = Vec::with_capacity(n);
        let roots: Vec<usize> = (0..n).filter(|&i| self.cells[i].level == 0).collect();
        for r in roots {
            self.emit(model, r, None, &refine, &coarsen, reinit, &mut out, &mut report);
        }
        self.cells = out;
        self.reindex();
        self.spawn_virtual_children();
        self.update_virtual_cells(model)?;
        Ok(report)
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &self,
        model: &PdeModel,
        old: usize,
        parent: Option<usize>,
        refine: &[bool],
        coarsen: &[bool],
        reinit: Option<&(dyn Fn(usize, [i64; 3]) -> Vec<f64> + Sync)>,
        out: &mut Vec<Cell>,
        report: &mut AdaptReport,
    ) -> Option<usize> {
        let c = &self.cells[old];
        let nv = self.nv;
        let ops = &self.ops;
        match c.status {
            Status::VirtualChild => None,
            Status::Active if refine[old] => {
                report.refined += 1;
                let id = out.len();
                out.push(Cell {
                    level: c.level,
                    status: Status::VirtualParent,
                    beta: false,
                    coords: c.coords,
                    parent,
                    children: Vec::new(),
                    u: c.u.clone(),
                    sub: None,
                });
                let r = self.geom.refine;
                let mut kids = Vec::with_capacity(ops.children_per_element());
                for k in 0..ops.children_per_element() {
                    let o = unflatten(k, r, self.geom.dim);
                    let mut cc = [0i64; 3];
                    for a in 0..self.geom.dim {
                        cc[a] = c.coords[a] * r as i64 + o[a] as i64;
                    }
                    let (u, sub, beta) = if let Some(f) = reinit {
                        (f(c.level + 1, cc), None, false)
                    } else if let (true, Some(w)) = (c.beta, &c.sub) {
                        let ws = ops.subcells_to_child(w, nv, o);
                        (reconstruct_admissible(model, ops, &ws), Some(ws), true)
                    } else {
                        (ops.child_projection(&c.u, nv, o), None, false)
                    };
                    kids.push(out.len());
                    out.push(Cell {
                        level: c.level + 1,
                        status: Status::Active,
                        beta,
                        coords: cc,
                        parent: Some(id),
                        children: Vec::new(),
                        u,
                        sub,
                    });
                }
                out[id].children = kids;
                Some(id)
            }
            Status::Active => {
                let id = out.len();
                out.push(Cell { parent, children: Vec::new(), ..c.clone() });
                Some(id)
            }
            Status::VirtualParent if coarsen[old] => {
                report.coarsened += 1;
                let us: Vec<&[f64]> = c.children.iter().map(|&k| self.cells[k].u.as_slice()).collect();
                let id = out.len();
                out.push(Cell {
                    level: c.level,
                    status: Status::Active,
                    beta: false,
                    coords: c.coords,
                    parent,
                    children: Vec::new(),
                    u: ops.parent_average(&us, nv),
                    sub: None,
                });
                Some(id)
            }
            Status::VirtualParent => {
                let id = out.len();
                out.push(Cell { parent, children: Vec::new(), sub: None, ..c.clone() });
                let mut kids = Vec::new();
                for &k in &c.children {
                    if let Some(nk) = self.emit(model, k, Some(id), refine, coarsen, reinit, out, report) {
                        kids.push(nk);
                    }
                }
                out[id].children = kids;
                Some(id)
            }
        }
    }

    /// Creates virtual children for active cells next to a virtual parent.
    fn spawn_virtual_children(&mut self) {
        if self.lmax == 0 {
            return;
        }
        let offsets = self.geom.voronoi_offsets();
        let r = self.geom.refine;
        let dim = self.geom.dim;
        let mut new_cells = Vec::new();
        let n = self.cells.len();
        for id in 0..n {
            let c = &self.cells[id];
            if c.status != Status::Active || c.level >= self.lmax {
                continue;
            }
            let needs = offsets.iter().any(|off| {
                matches!(self.neighbor(id, *off), Lookup::Cell(j) if self.cells[j].status == Status::VirtualParent)
            });
            if !needs {
                continue;
            }
            let mut kids = Vec::new();
            for k in 0..r.pow(dim as u32) {
                let o = unflatten(k, r, dim);
                let mut cc = [0i64; 3];
                for a in 0..dim {
                    cc[a] = c.coords[a] * r as i64 + o[a] as i64;
                }
                kids.push(n + new_cells.len());
                new_cells.push(Cell {
                    level: c.level + 1,
                    status: Status::VirtualChild,
                    beta: false,
                    coords: cc,
                    parent: Some(id),
                    children: Vec::new(),
                    u: Vec::new(),
                    sub: None,
                });
            }
            self.cells[id].children = kids;
        }
        self.cells.extend(new_cells);
        self.reindex();
    }

    /// Structural checks: tiling by active cells, parent/child links and the
    /// level-jump constraint over face, edge and corner neighbours.
    pub fn check(&self) -> Result<()> {
        let dim = self.geom.dim;
        let lmax = self.max_level();
        let r = self.geom.refine as i64;
        let fine: Vec<i64> = (0..dim).map(|a| self.geom.cells_per_axis(lmax, a)).collect();
        let total: i64 = fine.iter().product();
        let mut cover = vec![0u8; total as usize];
        for ids in &self.active {
            for &id in ids {
                let c = &self.cells[id];
                let s = r.pow((lmax - c.level) as u32);
                let span = s.pow(dim as u32);
                for k in 0..span {
                    let mut idx = 0i64;
                    let mut rem = k;
                    let mut mul = 1i64;
                    for a in 0..dim {
                        let x = c.coords[a] * s + rem % s;
                        rem /= s;
                        idx += x * mul;
                        mul *= fine[a];
                    }
                    cover[idx as usize] += 1;
                }
            }
        }
        if cover.iter().any(|&x| x != 1) {
            return Err(Error::Grid("active cells do not tile the domain".into()));
        }
        for (id, c) in self.cells.iter().enumerate() {
            if let Some(p) = c.parent {
                if !self.cells[p].children.contains(&id) {
                    return Err(Error::Grid(format!("cell {id} not listed by its parent")));
                }
            } else if c.level != 0 {
                return Err(Error::Grid(format!("orphan cell {id}")));
            }
            if c.status == Status::VirtualChild && self.cells[c.parent.unwrap()].status != Status::Active {
                return Err(Error::Grid(format!("virtual child {id} has no active parent")));
            }
        }
        for ids in &self.active {
            for &id in ids {
                let c = &self.cells[id];
                for off in self.geom.voronoi_offsets() {
                    let mut x = c.coords;
                    for a in 0..3 {
                        x[a] += off[a];
                    }
                    match self.lookup(c.level, x) {
                        Lookup::Boundary { .. } => {}
                        Lookup::Cell(j) if self.cells[j].status == Status::VirtualParent => {
                            for &k in &self.cells[j].children {
                                let o = self.geom.child_offset(self.cells[k].coords);
                                let touches = (0..dim).all(|a| match off[a] {
                                    1 => o[a] == 0,
                                    -1 => o[a] == self.geom.refine - 1,
                                    _ => true,
                                });
                                if touches && self.cells[k].status == Status::VirtualParent {
                                    return Err(Error::Grid(format!("level jump > 1 next to cell {id}")));
                                }
                            }
                        }
                        Lookup::Cell(_) => {}
                        Lookup::Missing => match self.covering_active(c.level, x) {
                            Some(j) if self.cells[j].level + 1 >= c.level => {}
                            _ => return Err(Error::Grid(format!("level jump > 1 next to cell {id}"))),
                        },
                    }
                }
            }
        }
        Ok(())
    }

    /// Total of the conserved variables over active cells.
    pub fn totals(&self) -> Vec<f64> {
        let nv = self.nv;
        let mut t = vec![0.0; nv];
        for id in self.tree_order() {
            let c = &self.cells[id];
            let vol = self.geom.cell_volume(c.level);
            let m = match &c.sub {
                Some(w) if c.beta => self.ops.subcell_mean(w, nv),
                _ => self.ops.mean(&c.u, nv),
            };
            for v in 0..nv {
                t[v] += vol * m[v];
            }
        }
        t
    }

    /// Cell mean of an active cell (subcell mean when limited).
    pub fn cell_mean(&self, id: usize) -> crate::pde::State {
        let c = &self.cells[id];
        let m = match &c.sub {
            Some(w) if c.beta => self.ops.subcell_mean(w, self.nv),
            _ => self.ops.mean(&c.u, self.nv),
        };
        let mut s = ZERO_STATE;
        s[..self.nv].copy_from_slice(&m);
        s
    }
}
