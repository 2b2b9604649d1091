//! Gauss–Legendre quadrature, the nodal Lagrange basis on the reference
//! element `[0,1]^d`, and every precomputed discrete operator the solver
//! needs: element mass and stiffness, boundary evaluation, the space-time
//! predictor time matrices, subcell projection/reconstruction and the
//! inter-level transfer matrices.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::{apply_tensor, Mat};

pub const MAX_QUADRATURE_POINTS: usize = 16;
pub const MAX_DEGREE: usize = 5;

/// Gauss–Legendre rule on the reference interval `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature1D {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Integrates `f` over `[a, b]` with the rule mapped onto that interval.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let len = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(a + len * x))
            .sum::<f64>()
            * len
    }
}

/// Gauss–Legendre nodes and weights, mapped to `[0,1]`.
///
/// Roots of the Legendre polynomial are found by Newton iteration started
/// from the Chebyshev–Gauss nodes.
pub fn gauss_legendre(n: usize) -> Result<Quadrature1D> {
    if n == 0 || n > MAX_QUADRATURE_POINTS {
        return Err(Error::InvalidArgument(format!(
            "Gauss-Legendre point count must be in 1..={MAX_QUADRATURE_POINTS}, got {n}"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n {
        // Chebyshev guess for the i-th root in descending order on [-1,1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        // Ascending order on [0,1].
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    Ok(Quadrature1D { nodes, weights })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Value of the `k`-th Lagrange polynomial through `nodes` at `x`.
pub fn lagrange(nodes: &[f64], k: usize, x: f64) -> f64 {
    let xk = nodes[k];
    nodes
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, xj)| (x - xj) / (xk - xj))
        .product()
}

/// Derivative of the `k`-th Lagrange polynomial through `nodes` at `x`.
pub fn lagrange_derivative(nodes: &[f64], k: usize, x: f64) -> f64 {
    let xk = nodes[k];
    let mut sum = 0.0;
    for (m, xm) in nodes.iter().enumerate() {
        if m == k {
            continue;
        }
        let mut prod = 1.0 / (xk - xm);
        for (j, xj) in nodes.iter().enumerate() {
            if j != k && j != m {
                prod *= (x - xj) / (xk - xj);
            }
        }
        sum += prod;
    }
    sum
}

/// `ℓ_k(x)` for the nodal basis of `q`; rejects out-of-range `k`.
pub fn lagrange_eval(q: &Quadrature1D, k: usize, x: f64) -> Result<f64> {
    if k >= q.n() {
        return Err(Error::InvalidArgument(format!(
            "basis index {k} out of range for {} nodes",
            q.n()
        )));
    }
    Ok(lagrange(&q.nodes, k, x))
}

/// Row vector of all basis values at `x`.
pub fn basis_values(nodes: &[f64], x: f64) -> Vec<f64> {
    (0..nodes.len()).map(|k| lagrange(nodes, k, x)).collect()
}

/// Row vector of all basis derivatives at `x`.
pub fn basis_derivatives(nodes: &[f64], x: f64) -> Vec<f64> {
    (0..nodes.len()).map(|k| lagrange_derivative(nodes, k, x)).collect()
}

/// Exact integral of `ℓ_k` over `[a, b]`.
pub fn lagrange_integral(q: &Quadrature1D, k: usize, a: f64, b: f64) -> f64 {
    q.integrate(a, b, |x| lagrange(&q.nodes, k, x))
}

/// Every discrete operator needed by the scheme for one `(N, d, Nₛ, 𝔯)`.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub degree: usize,
    pub dim: usize,
    pub ns: usize,
    pub refine: usize,
    /// Number of nodes per direction, `N + 1`.
    pub n: usize,
    pub quad: Quadrature1D,
    /// Diagonal of the per-direction mass matrix (the GL weights).
    pub mass: Vec<f64>,
    /// `diff[i][j] = ℓ_j'(x_i)`: nodal derivative on the unit interval.
    pub diff: Mat,
    /// `stiff[k][q] = w_q ℓ_k'(x_q) / w_k`: mass-normalised volume operator.
    pub stiff: Mat,
    /// Boundary evaluation `ℓ_k(0)` and `ℓ_k(1)` as `1 × n` matrices.
    pub eval_left: Mat,
    pub eval_right: Mat,
    /// `ℓ_k(0)/w_k` and `ℓ_k(1)/w_k`: surface lifting coefficients.
    pub lift_left: Vec<f64>,
    pub lift_right: Vec<f64>,
    /// Predictor time operators: `q_m = init_m u − Δt Σ_n flux_mn (∇·F)_n`.
    pub time_init: Vec<f64>,
    pub time_flux: Mat,
    /// Subcell averages from nodal values, `ns × n`.
    pub proj_sub: Mat,
    /// Conservation-constrained least-squares left inverse of `proj_sub`.
    pub recon_sub: Mat,
    /// Parent → child `o` nodal projection, one per child index.
    pub child_proj: Vec<Mat>,
    /// Child `o` → parent contribution of the L2 average.
    pub parent_avg: Vec<Mat>,
    /// Parent subcells → child `o` subcells (piecewise-constant overlap).
    pub sub_to_child: Vec<Mat>,
    /// Child `o` subcells → parent subcells (overlap average contribution).
    pub sub_from_child: Vec<Mat>,
    /// `n × ns` moments of piecewise-constant subcell data against the basis,
    /// normalized by the weights: `(1/w_k) ∫_{I_i} ℓ_k`.
    pub sub_moment: Mat,
}

impl OperatorSet {
    pub fn nodes_per_element(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn subcells_per_element(&self) -> usize {
        self.ns.pow(self.dim as u32)
    }

    pub fn children_per_element(&self) -> usize {
        self.refine.pow(self.dim as u32)
    }

    fn ext(&self, size: usize) -> Vec<usize> {
        vec![size; self.dim]
    }

    /// Tensor quadrature weight of spatial node `k` on the unit cell.
    pub fn node_weight(&self, k: usize) -> f64 {
        let ix = crate::tensor::unflatten(k, self.n, self.dim);
        (0..self.dim).map(|a| self.mass[ix[a]]).product()
    }

    /// Element mean of a nodal polynomial with `nv` variables.
    pub fn mean(&self, u: &[f64], nv: usize) -> Vec<f64> {
        let mut m = vec![0.0; nv];
        for k in 0..self.nodes_per_element() {
            let w = self.node_weight(k);
            for v in 0..nv {
                m[v] += w * u[k * nv + v];
            }
        }
        m
    }

    /// Mean of subcell averages.
    pub fn subcell_mean(&self, w: &[f64], nv: usize) -> Vec<f64> {
        let count = self.subcells_per_element();
        let mut m = vec![0.0; nv];
        for c in 0..count {
            for v in 0..nv {
                m[v] += w[c * nv + v];
            }
        }
        m.iter_mut().for_each(|x| *x /= count as f64);
        m
    }

    pub fn project_to_subcells(&self, u: &[f64], nv: usize) -> Vec<f64> {
        let mats: Vec<&Mat> = vec![&self.proj_sub; self.dim];
        apply_tensor(u, &self.ext(self.n), nv, &mats)
    }

    pub fn reconstruct_from_subcells(&self, w: &[f64], nv: usize) -> Vec<f64> {
        let mats: Vec<&Mat> = vec![&self.recon_sub; self.dim];
        apply_tensor(w, &self.ext(self.ns), nv, &mats)
    }

    /// Nodal values of the parent polynomial restricted to child `child`
    /// (per-axis child index in `0..r`).
    pub fn child_projection(&self, u: &[f64], nv: usize, child: [usize; 3]) -> Vec<f64> {
        let mats: Vec<&Mat> = (0..self.dim).map(|a| &self.child_proj[child[a]]).collect();
        apply_tensor(u, &self.ext(self.n), nv, &mats)
    }

    /// L2 projection of piecewise child polynomials onto the parent space.
    /// `children` are in lattice order with axis 0 fastest.
    pub fn parent_average(&self, children: &[&[f64]], nv: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes_per_element() * nv];
        for (c, data) in children.iter().enumerate() {
            let idx = crate::tensor::unflatten(c, self.refine, self.dim);
            let mats: Vec<&Mat> = (0..self.dim).map(|a| &self.parent_avg[idx[a]]).collect();
            let part = apply_tensor(data, &self.ext(self.n), nv, &mats);
            out.iter_mut().zip(&part).for_each(|(o, p)| *o += p);
        }
        out
    }

    pub fn subcells_to_child(&self, w: &[f64], nv: usize, child: [usize; 3]) -> Vec<f64> {
        let mats: Vec<&Mat> = (0..self.dim).map(|a| &self.sub_to_child[child[a]]).collect();
        apply_tensor(w, &self.ext(self.ns), nv, &mats)
    }

    pub fn subcells_from_children(&self, children: &[&[f64]], nv: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.subcells_per_element() * nv];
        for (c, data) in children.iter().enumerate() {
            let idx = crate::tensor::unflatten(c, self.refine, self.dim);
            let mats: Vec<&Mat> = (0..self.dim).map(|a| &self.sub_from_child[idx[a]]).collect();
            let part = apply_tensor(data, &self.ext(self.ns), nv, &mats);
            out.iter_mut().zip(&part).for_each(|(o, p)| *o += p);
        }
        out
    }
}

/// Builds the operator set for degree `degree`, dimension `dim`, `ns`
/// subcells per direction and refinement factor `refine`.
pub fn build_operators(degree: usize, dim: usize, ns: usize, refine: usize) -> Result<OperatorSet> {
    if degree > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!("degree {degree} exceeds {MAX_DEGREE}")));
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidArgument(format!("dimension {dim} not in 1..=3")));
    }
    if ns < degree + 1 {
        return Err(Error::InvalidArgument(format!(
            "subcell count {ns} below N+1 = {} loses information",
            degree + 1
        )));
    }
    if refine < 2 {
        return Err(Error::InvalidArgument(format!("refinement factor {refine} must be >= 2")));
    }
    let n = degree + 1;
    let quad = gauss_legendre(n)?;
    let x = &quad.nodes;
    let w = &quad.weights;

    let diff = Mat::from_fn(n, n, |i, j| lagrange_derivative(x, j, x[i]));
    let stiff = Mat::from_fn(n, n, |k, q| w[q] * lagrange_derivative(x, k, x[q]) / w[k]);
    let left = basis_values(x, 0.0);
    let right = basis_values(x, 1.0);
    let eval_left = Mat { rows: 1, cols: n, data: left.clone() };
    let eval_right = Mat { rows: 1, cols: n, data: right.clone() };
    let lift_left: Vec<f64> = (0..n).map(|k| left[k] / w[k]).collect();
    let lift_right: Vec<f64> = (0..n).map(|k| right[k] / w[k]).collect();

    // Time matrix: K_mn = ψ_m(1) ψ_n(1) − w_n ψ_m'(τ_n).
    let k1 = DMatrix::from_fn(n, n, |m, nn| right[m] * right[nn] - w[nn] * lagrange_derivative(x, m, x[nn]));
    let k1_inv = k1
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("singular predictor time matrix".into()))?;
    let time_init: Vec<f64> = (0..n).map(|m| (0..n).map(|nn| k1_inv[(m, nn)] * left[nn]).sum()).collect();
    let time_flux = Mat::from_fn(n, n, |m, nn| k1_inv[(m, nn)] * w[nn]);

    // Subcell projection: exact averages over uniform subintervals.
    let hs = 1.0 / ns as f64;
    let proj_sub = Mat::from_fn(ns, n, |j, k| {
        lagrange_integral(&quad, k, j as f64 * hs, (j + 1) as f64 * hs) / hs
    });
    let recon_sub = constrained_left_inverse(&proj_sub, w)?;

    let rf = refine as f64;
    let child_proj: Vec<Mat> = (0..refine)
        .map(|o| Mat::from_fn(n, n, |q, k| lagrange(x, k, (o as f64 + x[q]) / rf)))
        .collect();
    let parent_avg: Vec<Mat> = (0..refine)
        .map(|o| Mat::from_fn(n, n, |k, q| w[q] * lagrange(x, k, (o as f64 + x[q]) / rf) / (rf * w[k])))
        .collect();

    // Piecewise-constant transfers between the parent subgrid and the child
    // subgrids, using exact interval overlaps.
    let overlap = |a0: f64, a1: f64, b0: f64, b1: f64| (a1.min(b1) - a0.max(b0)).max(0.0);
    let sub_to_child: Vec<Mat> = (0..refine)
        .map(|o| {
            Mat::from_fn(ns, ns, |j, i| {
                let c0 = (o as f64 + j as f64 * hs) / rf;
                let c1 = (o as f64 + (j + 1) as f64 * hs) / rf;
                overlap(c0, c1, i as f64 * hs, (i + 1) as f64 * hs) / (c1 - c0)
            })
        })
        .collect();
    let sub_from_child: Vec<Mat> = (0..refine)
        .map(|o| {
            Mat::from_fn(ns, ns, |i, j| {
                let c0 = (o as f64 + j as f64 * hs) / rf;
                let c1 = (o as f64 + (j + 1) as f64 * hs) / rf;
                overlap(c0, c1, i as f64 * hs, (i + 1) as f64 * hs) / hs
            })
        })
        .collect();

    let sub_moment = Mat::from_fn(n, ns, |k, i| hs * proj_sub.at(i, k) / w[k]);

    Ok(OperatorSet {
        degree,
        dim,
        ns,
        refine,
        n,
        mass: w.clone(),
        quad,
        diff,
        stiff,
        eval_left,
        eval_right,
        lift_left,
        lift_right,
        time_init,
        time_flux,
        proj_sub,
        recon_sub,
        child_proj,
        parent_avg,
        sub_to_child,
        sub_from_child,
        sub_moment,
    })
}

/// Least-squares left inverse of `p` (`ns × n`) subject to conservation of
/// the mean: the reconstructed polynomial has the same mean as the averages.
fn constrained_left_inverse(p: &Mat, weights: &[f64]) -> Result<Mat> {
    let (ns, n) = (p.rows, p.cols);
    let pm = DMatrix::from_row_slice(ns, n, &p.data);
    let ptp = pm.transpose() * &pm;
    let mut kkt = DMatrix::zeros(n + 1, n + 1);
    kkt.view_mut((0, 0), (n, n)).copy_from(&ptp);
    for k in 0..n {
        kkt[(k, n)] = weights[k];
        kkt[(n, k)] = weights[k];
    }
    let lu = kkt.lu();
    let mut r = Mat::zeros(n, ns);
    for j in 0..ns {
        let mut rhs = DVector::zeros(n + 1);
        for k in 0..n {
            rhs[k] = pm[(j, k)];
        }
        rhs[n] = 1.0 / ns as f64;
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidArgument("singular reconstruction system".into()))?;
        for k in 0..n {
            r.data[k * ns + j] = sol[k];
        }
    }
    Ok(r)
}

type CacheKey = (usize, usize, usize, usize);

/// Shared, immutable operator sets keyed by `(N, d, Nₛ, 𝔯)`.
pub fn cached_operators(degree: usize, dim: usize, ns: usize, refine: usize) -> Result<Arc<OperatorSet>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<OperatorSet>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (degree, dim, ns, refine);
    if let Some(ops) = cache.lock().unwrap().get(&key) {
        return Ok(ops.clone());
    }
    let ops = Arc::new(build_operators(degree, dim, ns, refine)?);
    cache.lock().unwrap().insert(key, ops.clone());
    Ok(ops)
}
