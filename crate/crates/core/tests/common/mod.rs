//! Independent oracles and error integrals shared by the integration tests.
#![allow(dead_code)]

use aderdg::amr::Grid;
use aderdg::basis::{basis_values, gauss_legendre};
use aderdg::config::RunConfig;
use aderdg::scenarios::build_scenario;
use aderdg::solver::{Solver, SolverOptions};
use aderdg::tensor::unflatten;

/// Exact solution of the 1D Euler Riemann problem (two-rarefaction /
/// two-shock Newton iteration on the star pressure).
pub struct ExactRiemann {
    pub gamma: f64,
    pub left: [f64; 3],
    pub right: [f64; 3],
    p_star: f64,
    u_star: f64,
}

impl ExactRiemann {
    /// States are `[rho, u, p]`.
    pub fn new(gamma: f64, left: [f64; 3], right: [f64; 3]) -> Self {
        let mut s = ExactRiemann { gamma, left, right, p_star: 0.0, u_star: 0.0 };
        let (cl, cr) = (s.sound(&left), s.sound(&right));
        let mut p = (0.5 * (left[2] + right[2])).max(1e-8);
        // Two-rarefaction guess.
        let z = (gamma - 1.0) / (2.0 * gamma);
        let pr = ((cl + cr - 0.5 * (gamma - 1.0) * (right[1] - left[1])) / (cl / left[2].powf(z) + cr / right[2].powf(z)))
            .powf(1.0 / z);
        if pr.is_finite() && pr > 0.0 {
            p = pr;
        }
        for _ in 0..100 {
            let (fl, dl) = s.f(p, &left);
            let (fr, dr) = s.f(p, &right);
            let g = fl + fr + right[1] - left[1];
            let next = (p - g / (dl + dr)).max(1e-12);
            let done = (next - p).abs() < 1e-15 * p;
            p = next;
            if done {
                break;
            }
        }
        s.p_star = p;
        s.u_star = 0.5 * (left[1] + right[1]) + 0.5 * (s.f(p, &right).0 - s.f(p, &left).0);
        s
    }

    fn sound(&self, w: &[f64; 3]) -> f64 {
        (self.gamma * w[2] / w[0]).sqrt()
    }

    fn f(&self, p: f64, w: &[f64; 3]) -> (f64, f64) {
        let g = self.gamma;
        let (rho, pk) = (w[0], w[2]);
        if p > pk {
            let a = 2.0 / ((g + 1.0) * rho);
            let b = (g - 1.0) / (g + 1.0) * pk;
            let q = (a / (p + b)).sqrt();
            ((p - pk) * q, q * (1.0 - 0.5 * (p - pk) / (b + p)))
        } else {
            let c = self.sound(w);
            let e = (g - 1.0) / (2.0 * g);
            (2.0 * c / (g - 1.0) * ((p / pk).powf(e) - 1.0), (p / pk).powf(-(g + 1.0) / (2.0 * g)) / (rho * c))
        }
    }

    /// `[rho, u, p]` at similarity coordinate `s = (x - x0)/t`.
    pub fn sample(&self, s: f64) -> [f64; 3] {
        let g = self.gamma;
        let (ps, us) = (self.p_star, self.u_star);
        let gm = (g - 1.0) / (g + 1.0);
        if s <= us {
            let w = self.left;
            let c = self.sound(&w);
            if ps > w[2] {
                let sh = w[1] - c * ((g + 1.0) / (2.0 * g) * ps / w[2] + (g - 1.0) / (2.0 * g)).sqrt();
                if s < sh {
                    w
                } else {
                    [w[0] * (ps / w[2] + gm) / (gm * ps / w[2] + 1.0), us, ps]
                }
            } else {
                let cs = c * (ps / w[2]).powf((g - 1.0) / (2.0 * g));
                if s < w[1] - c {
                    w
                } else if s > us - cs {
                    [w[0] * (ps / w[2]).powf(1.0 / g), us, ps]
                } else {
                    let k = 2.0 / (g + 1.0) + gm / c * (w[1] - s);
                    let rho = w[0] * k.powf(2.0 / (g - 1.0));
                    let u = 2.0 / (g + 1.0) * (c + 0.5 * (g - 1.0) * w[1] + s);
                    [rho, u, w[2] * k.powf(2.0 * g / (g - 1.0))]
                }
            }
        } else {
            let w = self.right;
            let c = self.sound(&w);
            if ps > w[2] {
                let sh = w[1] + c * ((g + 1.0) / (2.0 * g) * ps / w[2] + (g - 1.0) / (2.0 * g)).sqrt();
                if s > sh {
                    w
                } else {
                    [w[0] * (ps / w[2] + gm) / (gm * ps / w[2] + 1.0), us, ps]
                }
            } else {
                let cs = c * (ps / w[2]).powf((g - 1.0) / (2.0 * g));
                if s > w[1] + c {
                    w
                } else if s < us + cs {
                    [w[0] * (ps / w[2]).powf(1.0 / g), us, ps]
                } else {
                    let k = 2.0 / (g + 1.0) - gm / c * (s - w[1]);
                    let rho = w[0] * k.powf(2.0 / (g - 1.0));
                    let u = 2.0 / (g + 1.0) * (-c + 0.5 * (g - 1.0) * w[1] + s);
                    [rho, u, w[2] * k.powf(2.0 * g / (g - 1.0))]
                }
            }
        }
    }

    pub fn star(&self) -> (f64, f64) {
        (self.p_star, self.u_star)
    }
}

/// Free-space heat kernel applied to a Gaussian of amplitude `a` and width
/// `s`: `a s/σ(t) exp(−x²/2σ(t)²)` with `σ² = s² + 2κt`.
pub fn gaussian_heat(a: f64, s: f64, kappa: f64, x: f64, t: f64) -> f64 {
    let v = s * s + 2.0 * kappa * t;
    a * s / v.sqrt() * (-x * x / (2.0 * v)).exp()
}

/// Solution of active cell `id` at reference point `xi ∈ [0,1]^d`:
/// the DG polynomial, or the containing subcell average when limited.
pub fn sample_cell(grid: &Grid, id: usize, xi: [f64; 3]) -> Vec<f64> {
    let c = &grid.cells[id];
    let ops = &grid.ops;
    let nv = grid.nv;
    let dim = grid.geom.dim;
    if c.beta {
        let w = c.sub.as_ref().expect("limited cell without subcells");
        let mut k = 0;
        let mut stride = 1;
        for a in 0..dim {
            let i = ((xi[a] * ops.ns as f64) as usize).min(ops.ns - 1);
            k += i * stride;
            stride *= ops.ns;
        }
        return w[k * nv..(k + 1) * nv].to_vec();
    }
    let phi: Vec<Vec<f64>> = (0..dim).map(|a| basis_values(&ops.quad.nodes, xi[a])).collect();
    let mut out = vec![0.0; nv];
    for k in 0..ops.nodes_per_element() {
        let ix = unflatten(k, ops.n, dim);
        let wgt: f64 = (0..dim).map(|a| phi[a][ix[a]]).product();
        for v in 0..nv {
            out[v] += wgt * c.u[k * nv + v];
        }
    }
    out
}

/// `∫ |f(u_h) − g(x)|^p dx` over all active cells with a `q`-point Gauss
/// rule per axis (per subcell for limited cells).
pub fn integrate_error(
    grid: &Grid,
    q: usize,
    p: i32,
    f: impl Fn(&[f64]) -> f64,
    g: impl Fn(&[f64; 3]) -> f64,
) -> f64 {
    let gl = gauss_legendre(q).unwrap();
    let dim = grid.geom.dim;
    let mut total = 0.0;
    for lvl in &grid.active {
        for &id in lvl {
            let c = &grid.cells[id];
            let lo = grid.geom.cell_lo(c.level, c.coords);
            let h = grid.geom.h(c.level);
            // Sub-intervals per axis: subcells for limited cells.
            let m = if c.beta { grid.ops.ns } else { 1 };
            let npts = (m * q).pow(dim as u32);
            for k in 0..npts {
                let ix = unflatten(k, m * q, dim);
                let mut xi = [0.0; 3];
                let mut x = [0.0; 3];
                let mut w = 1.0;
                for a in 0..dim {
                    let (cell, node) = (ix[a] / q, ix[a] % q);
                    xi[a] = (cell as f64 + gl.nodes[node]) / m as f64;
                    x[a] = lo[a] + h[a] * xi[a];
                    w *= gl.weights[node] / m as f64 * h[a];
                }
                let e = (f(&sample_cell(grid, id, xi)) - g(&x)).abs();
                total += w * e.powi(p);
            }
        }
    }
    total
}

pub fn solver_from(text: &str) -> Solver {
    let cfg = RunConfig::from_text(text).unwrap();
    Solver::new(cfg.scenario().unwrap(), cfg.solver.clone()).unwrap()
}

pub fn solver_with(name: &str, opts: SolverOptions, base: [Option<usize>; 3]) -> Solver {
    let ov = aderdg::scenarios::ScenarioOverrides { base, ..Default::default() };
    Solver::new(build_scenario(name, &ov).unwrap(), opts).unwrap()
}

/// Advances to `t_end` (or `max_steps`), calling `each` after every step.
pub fn run_to(s: &mut Solver, t_end: f64, max_steps: usize, mut each: impl FnMut(&Solver)) {
    while s.t < t_end * (1.0 - 1e-14) && s.step < max_steps {
        s.step(t_end - s.t).unwrap();
        each(s);
    }
}
