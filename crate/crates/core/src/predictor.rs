//! Element-local space-time predictor.
//!
//! The weak space-time problem with upwinding in time is solved by Picard
//! iteration on the nodal coefficients of a tensor-product GL basis in
//! `(x, t)`. Gradients and fluxes are expanded in the same nodal basis.

use crate::basis::OperatorSet;
use crate::pde::{PdeModel, State, MAX_VARS, ZERO_GRAD, ZERO_STATE};
use crate::tensor::{apply_axis, apply_tensor_opt, Mat};

#[derive(Clone, Debug)]
pub struct PredictorOptions {
    pub max_iter: Option<usize>,
    pub tol: f64,
}

impl Default for PredictorOptions {
    fn default() -> Self {
        PredictorOptions { max_iter: None, tol: 1e-10 }
    }
}

impl PredictorOptions {
    pub fn max_iter_for(&self, degree: usize) -> usize {
        self.max_iter.unwrap_or(2 * (degree + 1))
    }
}

/// Space-time predictor of one element.
///
/// Layouts: `q` is `[t][space][var]`; `grad` and `flux` are
/// `[axis][t][space][var]`. Gradients are in physical units.
#[derive(Clone, Debug)]
pub struct SpaceTimePredictor {
    pub n: usize,
    pub dim: usize,
    pub nv: usize,
    pub dt: f64,
    pub h: [f64; 3],
    pub q: Vec<f64>,
    pub grad: Vec<f64>,
    pub flux: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Non-finite iterate or flux failure; the fields then hold the
    /// time-constant extension of the input.
    pub failed: bool,
    pub residuals: Vec<f64>,
}

/// Values of the predictor on a sub-lattice: `q` is `[t][pts][var]`,
/// `grad[a]` is `[t][pts][var]`.
#[derive(Clone, Debug)]
pub struct TraceTable {
    pub nt: usize,
    pub npts: usize,
    pub nv: usize,
    pub q: Vec<f64>,
    pub grad: [Vec<f64>; 3],
}

impl TraceTable {
    pub fn state(&self, t: usize, p: usize) -> State {
        let mut s = ZERO_STATE;
        let off = (t * self.npts + p) * self.nv;
        s[..self.nv].copy_from_slice(&self.q[off..off + self.nv]);
        s
    }

    pub fn gradient(&self, t: usize, p: usize) -> crate::pde::Grad {
        let mut g = ZERO_GRAD;
        let off = (t * self.npts + p) * self.nv;
        for (a, ga) in self.grad.iter().enumerate() {
            if !ga.is_empty() {
                g[a][..self.nv].copy_from_slice(&ga[off..off + self.nv]);
            }
        }
        g
    }
}

impl SpaceTimePredictor {
    pub fn space_nodes(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    fn block(&self) -> usize {
        self.space_nodes() * self.n * self.nv
    }

    pub fn grad_axis(&self, a: usize) -> &[f64] {
        let b = self.block();
        &self.grad[a * b..(a + 1) * b]
    }

    pub fn flux_axis(&self, a: usize) -> &[f64] {
        let b = self.block();
        &self.flux[a * b..(a + 1) * b]
    }

    /// Evaluates state and gradient on the tensor lattice defined by one
    /// optional matrix per spatial axis and one for time (`None` keeps the
    /// nodes of that axis).
    pub fn evaluate(&self, space: [Option<&Mat>; 3], time: Option<&Mat>) -> TraceTable {
        let mut mats: Vec<Option<&Mat>> = space[..self.dim].to_vec();
        mats.push(time);
        let ext = vec![self.n; self.dim + 1];
        let q = apply_tensor_opt(&self.q, &ext, self.nv, &mats);
        let grad: [Vec<f64>; 3] = std::array::from_fn(|a| {
            if a < self.dim {
                apply_tensor_opt(self.grad_axis(a), &ext, self.nv, &mats)
            } else {
                Vec::new()
            }
        });
        let nt = time.map_or(self.n, |m| m.rows);
        let npts = q.len() / (nt * self.nv);
        TraceTable { nt, npts, nv: self.nv, q, grad }
    }

    /// Space-time table on face `(axis, side)`; `side` 0 is the lower face.
    pub fn face_trace(&self, ops: &OperatorSet, axis: usize, side: usize) -> TraceTable {
        let mut space = [None, None, None];
        space[axis] = Some(if side == 0 { &ops.eval_left } else { &ops.eval_right });
        self.evaluate(space, None)
    }

    /// State and gradient at one face space-time node.
    pub fn trace_at_face(
        &self,
        ops: &OperatorSet,
        axis: usize,
        side: usize,
        st_node: usize,
    ) -> (State, crate::pde::Grad) {
        let tab = self.face_trace(ops, axis, side);
        let t = st_node / tab.npts;
        let p = st_node % tab.npts;
        (tab.state(t, p), tab.gradient(t, p))
    }

    /// Spatial nodal polynomial at normalized time `tau ∈ [0,1]`.
    pub fn at_time(&self, ops: &OperatorSet, tau: f64) -> Vec<f64> {
        let row = Mat { rows: 1, cols: self.n, data: crate::basis::basis_values(&ops.quad.nodes, tau) };
        self.evaluate([None, None, None], Some(&row)).q
    }

    /// Time integral (normalized to `[0,1]`) of the nodal flux along `axis`.
    pub fn time_integrated_flux(&self, ops: &OperatorSet, axis: usize) -> Vec<f64> {
        let nsp = self.space_nodes() * self.nv;
        let f = self.flux_axis(axis);
        let mut out = vec![0.0; nsp];
        for (m, w) in ops.mass.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(&f[m * nsp..(m + 1) * nsp]) {
                *o += w * x;
            }
        }
        out
    }
}

fn gradients(ops: &OperatorSet, dim: usize, nv: usize, h: &[f64; 3], q: &[f64], out: &mut Vec<f64>, tmp: &mut Vec<f64>) {
    let ext = vec![ops.n; dim];
    out.clear();
    for a in 0..dim {
        apply_axis(q, &ext, nv, a, &ops.diff, tmp);
        let inv = 1.0 / h[a];
        out.extend(tmp.iter().map(|x| x * inv));
    }
}

/// Evaluates nodal fluxes; returns false on any failure.
fn fluxes(model: &PdeModel, dim: usize, nv: usize, q: &[f64], grad: &[f64], out: &mut Vec<f64>) -> bool {
    let npts = q.len() / nv;
    out.clear();
    out.resize(dim * q.len(), 0.0);
    let block = q.len();
    for p in 0..npts {
        let mut u = ZERO_STATE;
        u[..nv].copy_from_slice(&q[p * nv..(p + 1) * nv]);
        let mut g = ZERO_GRAD;
        for a in 0..dim {
            g[a][..nv].copy_from_slice(&grad[a * block + p * nv..a * block + (p + 1) * nv]);
        }
        match model.flux(&u, &g, dim) {
            Ok(f) => {
                for a in 0..dim {
                    out[a * block + p * nv..a * block + (p + 1) * nv].copy_from_slice(&f[a][..nv]);
                }
            }
            Err(_) => return false,
        }
    }
    true
}

/// Solves the element-local space-time problem for nodal state `u`
/// (`[space][var]`), time step `dt` and cell sizes `h`.
pub fn solve_predictor(
    ops: &OperatorSet,
    model: &PdeModel,
    u: &[f64],
    dt: f64,
    h: [f64; 3],
    opts: &PredictorOptions,
) -> SpaceTimePredictor {
    let dim = ops.dim;
    let nv = model.nvars();
    let n = ops.n;
    let nsp = ops.nodes_per_element();
    debug_assert_eq!(u.len(), nsp * nv);
    let slice = nsp * nv;
    let max_iter = opts.max_iter_for(ops.degree);

    let mut q: Vec<f64> = (0..n).flat_map(|_| u.iter().copied()).collect();
    let mut grad = Vec::new();
    let mut flux = Vec::new();
    let mut tmp = Vec::new();
    let mut div = vec![0.0; q.len()];
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut failed = !u.iter().all(|x| x.is_finite()) || !(dt > 0.0);
    let mut iterations = 0;
    let ext_st = vec![n; dim + 1];

    if !failed {
        for _ in 0..max_iter {
            iterations += 1;
            gradients(ops, dim, nv, &h, &q, &mut grad, &mut tmp);
            if !fluxes(model, dim, nv, &q, &grad, &mut flux) {
                failed = true;
                break;
            }
            div.iter_mut().for_each(|x| *x = 0.0);
            for a in 0..dim {
                apply_axis(&flux[a * q.len()..(a + 1) * q.len()], &ext_st[..dim], nv, a, &ops.diff, &mut tmp);
                let inv = 1.0 / h[a];
                div.iter_mut().zip(&tmp).for_each(|(d, x)| *d += inv * x);
            }
            apply_axis(&div, &ext_st, nv, dim, &ops.time_flux, &mut tmp);
            let mut delta = vec![0.0f64; nv];
            let mut scale = vec![0.0f64; nv];
            for m in 0..n {
                let c0 = ops.time_init[m];
                for i in 0..slice {
                    let new = c0 * u[i] - dt * tmp[m * slice + i];
                    let v = i % nv;
                    delta[v] = delta[v].max((new - q[m * slice + i]).abs());
                    scale[v] = scale[v].max(new.abs());
                    q[m * slice + i] = new;
                }
            }
            if !q.iter().all(|x| x.is_finite()) {
                failed = true;
                break;
            }
            // Near-zero components are measured against the largest one so
            // roundoff in them cannot stall convergence.
            let floor = 1e-4 * scale.iter().cloned().fold(0.0, f64::max) + f64::MIN_POSITIVE;
            let res = delta
                .iter()
                .zip(&scale)
                .map(|(d, s)| d / s.max(floor))
                .fold(0.0, f64::max);
            residuals.push(res);
            if res <= opts.tol {
                converged = true;
                break;
            }
        }
    }
    if !failed {
        gradients(ops, dim, nv, &h, &q, &mut grad, &mut tmp);
        if !fluxes(model, dim, nv, &q, &grad, &mut flux) {
            failed = true;
        }
    }
    if failed {
        // Time-constant extension of the input; the caller treats the cell
        // as troubled.
        q = (0..n).flat_map(|_| u.iter().copied()).collect();
        gradients(ops, dim, nv, &h, &q, &mut grad, &mut tmp);
        if !fluxes(model, dim, nv, &q, &grad, &mut flux) {
            flux = vec![f64::NAN; dim * q.len()];
        }
        converged = false;
    }
    SpaceTimePredictor { n, dim, nv, dt, h, q, grad, flux, iterations, converged, failed, residuals }
}

/// Discrete residual of the predictor equations, max-norm over all entries.
pub fn predictor_residual(ops: &OperatorSet, model: &PdeModel, u: &[f64], p: &SpaceTimePredictor) -> f64 {
    let dim = ops.dim;
    let nv = p.nv;
    let n = ops.n;
    let ext_st = vec![n; dim + 1];
    let mut tmp = Vec::new();
    let mut grad = Vec::new();
    let mut flux = Vec::new();
    gradients(ops, dim, nv, &p.h, &p.q, &mut grad, &mut tmp);
    if !fluxes(model, dim, nv, &p.q, &grad, &mut flux) {
        return f64::INFINITY;
    }
    let mut div = vec![0.0; p.q.len()];
    for a in 0..dim {
        apply_axis(&flux[a * p.q.len()..(a + 1) * p.q.len()], &ext_st[..dim], nv, a, &ops.diff, &mut tmp);
        div.iter_mut().zip(&tmp).for_each(|(d, x)| *d += x / p.h[a]);
    }
    apply_axis(&div, &ext_st, nv, dim, &ops.time_flux, &mut tmp);
    let slice = u.len();
    let mut r: f64 = 0.0;
    for m in 0..n {
        for i in 0..slice {
            let target = ops.time_init[m] * u[i] - p.dt * tmp[m * slice + i];
            r = r.max((target - p.q[m * slice + i]).abs());
        }
    }
    r
}

/// Nodal state of size `MAX_VARS` at a spatial node of a nodal array.
pub fn node_state(u: &[f64], nv: usize, k: usize) -> State {
    let mut s = [0.0; MAX_VARS];
    s[..nv].copy_from_slice(&u[k * nv..(k + 1) * nv]);
    s
}
