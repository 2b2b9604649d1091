//! Global integrals and per-cell derived fields.

use rayon::prelude::*;

use crate::amr::Grid;
use crate::basis::OperatorSet;
use crate::pde::{state_from, PdeModel};
use crate::tensor::apply_axis;

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    /// `(1/|Ω|) ∫ ½ρ|v|²`.
    pub kinetic: f64,
    /// `−dK/dt` by backward difference; 0 on the first record.
    pub dissipation: f64,
    pub divb_max: f64,
    /// `((1/|Ω|) ∫ (∇·B)²)^{1/2}`.
    pub divb_l2: f64,
    pub limited_fraction: f64,
    pub active_per_level: Vec<usize>,
}

/// Cell means of derived fields from nodal derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DerivedMeans {
    pub vorticity_z: f64,
    pub current_z: f64,
    pub div_b: f64,
}

/// Nodal derivative `∂_axis` of component `comp` (physical units).
fn nodal_derivative(ops: &OperatorSet, field: &[f64], stride: usize, axis: usize, h: f64) -> Vec<f64> {
    let ext = vec![ops.n; ops.dim];
    let mut out = Vec::new();
    apply_axis(field, &ext, stride, axis, &ops.diff, &mut out);
    out.iter_mut().for_each(|x| *x /= h);
    out
}

/// Nodal `∇·B`, `ω_z` and `j_z` of a payload.
pub fn derived_nodal(model: &PdeModel, ops: &OperatorSet, u: &[f64], h: [f64; 3]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let nv = model.nvars();
    let dim = ops.dim;
    let npts = u.len() / nv;
    let mut vel = Vec::with_capacity(npts * 3);
    let mut b = Vec::with_capacity(npts * 3);
    for c in u.chunks_exact(nv) {
        if model.is_fluid() {
            vel.extend_from_slice(&[c[1] / c[0], c[2] / c[0], c[3] / c[0]]);
        } else {
            vel.extend_from_slice(&[0.0; 3]);
        }
        if model.is_mhd() {
            b.extend_from_slice(&c[5..8]);
        } else {
            b.extend_from_slice(&[0.0; 3]);
        }
    }
    let dv: Vec<Vec<f64>> = (0..dim).map(|a| nodal_derivative(ops, &vel, 3, a, h[a])).collect();
    let db: Vec<Vec<f64>> = (0..dim).map(|a| nodal_derivative(ops, &b, 3, a, h[a])).collect();
    let d = |arr: &Vec<Vec<f64>>, a: usize, k: usize, c: usize| if a < dim { arr[a][k * 3 + c] } else { 0.0 };
    let mut div = vec![0.0; npts];
    let mut wz = vec![0.0; npts];
    let mut jz = vec![0.0; npts];
    for k in 0..npts {
        div[k] = (0..dim).map(|a| db[a][k * 3 + a]).sum();
        wz[k] = d(&dv, 0, k, 1) - d(&dv, 1, k, 0);
        jz[k] = d(&db, 0, k, 1) - d(&db, 1, k, 0);
    }
    (div, wz, jz)
}

pub fn derived_means(model: &PdeModel, ops: &OperatorSet, u: &[f64], h: [f64; 3]) -> DerivedMeans {
    let (div, wz, jz) = derived_nodal(model, ops, u, h);
    let mean = |f: &[f64]| f.iter().enumerate().map(|(k, x)| ops.node_weight(k) * x).sum::<f64>();
    DerivedMeans { vorticity_z: mean(&wz), current_z: mean(&jz), div_b: mean(&div) }
}

struct CellIntegrals {
    kinetic: f64,
    divb_max: f64,
    divb_sq: f64,
}

pub fn diagnose(grid: &Grid, model: &PdeModel, step: usize, t: f64, dt: f64, prev: Option<&DiagnosticsRecord>) -> DiagnosticsRecord {
    let ops = &*grid.ops;
    let nv = grid.nv;
    let ids = grid.tree_order();
    let per: Vec<CellIntegrals> = ids
        .par_iter()
        .map(|&id| {
            let c = &grid.cells[id];
            let vol = grid.geom.cell_volume(c.level);
            let kinetic = if !model.is_fluid() {
                0.0
            } else {
                let ke = |s: &[f64]| 0.5 * (s[1] * s[1] + s[2] * s[2] + s[3] * s[3]) / s[0];
                match (&c.sub, c.beta) {
                    (Some(w), true) => {
                        let m = w.len() / nv;
                        w.chunks_exact(nv).map(ke).sum::<f64>() / m as f64
                    }
                    _ => c.u.chunks_exact(nv).enumerate().map(|(k, s)| ops.node_weight(k) * ke(s)).sum::<f64>(),
                }
            } * vol;
            let (divb_max, divb_sq) = if model.is_mhd() {
                let (div, _, _) = derived_nodal(model, ops, &c.u, grid.geom.h(c.level));
                let mx = div.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let sq: f64 = div.iter().enumerate().map(|(k, x)| ops.node_weight(k) * x * x).sum();
                (mx, sq * vol)
            } else {
                (0.0, 0.0)
            };
            CellIntegrals { kinetic, divb_max, divb_sq }
        })
        .collect();
    let totals = grid.totals();
    let omega = grid.geom.domain_volume();
    let mut kinetic = 0.0;
    let mut divb_max: f64 = 0.0;
    let mut divb_sq = 0.0;
    for c in &per {
        kinetic += c.kinetic;
        divb_max = divb_max.max(c.divb_max);
        divb_sq += c.divb_sq;
    }
    kinetic /= omega;
    let limited = ids.iter().filter(|&&id| grid.cells[id].beta).count();
    let dissipation = match prev {
        Some(p) if t > p.t => -(kinetic - p.kinetic) / (t - p.t),
        _ => 0.0,
    };
    let g = |v: usize| if v < nv { totals[v] } else { 0.0 };
    let fluid = model.is_fluid();
    DiagnosticsRecord {
        step,
        t,
        dt,
        mass: g(0),
        momentum: if fluid { [g(1), g(2), g(3)] } else { [0.0; 3] },
        energy: if fluid { g(4) } else { 0.0 },
        kinetic,
        dissipation,
        divb_max,
        divb_l2: (divb_sq / omega).sqrt(),
        limited_fraction: limited as f64 / ids.len().max(1) as f64,
        active_per_level: grid.active.iter().map(|v| v.len()).collect(),
    }
}

/// Pressure and speed of a mean state.
pub fn mean_pressure_speed(model: &PdeModel, mean: &[f64]) -> (f64, f64) {
    if !model.is_fluid() {
        return (0.0, 0.0);
    }
    let s = state_from(mean);
    let v = (s[1] * s[1] + s[2] * s[2] + s[3] * s[3]).sqrt() / s[0];
    (model.pressure(&s), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::Geometry;
    use crate::basis::cached_operators;
    use crate::pde::PdeParams;
    use std::f64::consts::PI;

    fn grid(model: &PdeModel, n: usize, f: impl Fn(f64, f64) -> crate::pde::State + Sync) -> Grid {
        let ops = cached_operators(3, 2, 7, 2).unwrap();
        let geom = Geometry {
            dim: 2,
            lo: [0.0; 3],
            hi: [2.0 * PI, 2.0 * PI, 1.0],
            base: [n, n, 1],
            periodic: [true; 3],
            refine: 2,
        };
        let g2 = geom.clone();
        let o2 = ops.clone();
        let nv = model.nvars();
        let init = move |l: usize, c: [i64; 3]| {
            let lo = g2.cell_lo(l, c);
            let h = g2.h(l);
            let mut u = Vec::new();
            for k in 0..o2.nodes_per_element() {
                let ix = crate::tensor::unflatten(k, o2.n, 2);
                let s = f(lo[0] + h[0] * o2.quad.nodes[ix[0]], lo[1] + h[1] * o2.quad.nodes[ix[1]]);
                u.extend_from_slice(&s[..nv]);
            }
            u
        };
        Grid::new(geom, 0, ops, nv, &init).unwrap()
    }

    #[test]
    fn static_fluid_has_no_kinetic_energy() {
        let m = PdeModel::cns(PdeParams::default());
        let g = grid(&m, 4, |_, _| {
            let mut w = crate::pde::ZERO_STATE;
            w[0] = 1.0;
            w[4] = 1.0;
            m.prim_to_cons(&w)
        });
        let d = diagnose(&g, &m, 0, 0.0, 0.0, None);
        assert_eq!(d.kinetic, 0.0);
        assert_eq!(d.dissipation, 0.0);
        assert!((d.mass - 4.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn taylor_green_kinetic_energy_is_one_quarter() {
        let m = PdeModel::cns(PdeParams::default());
        let g = grid(&m, 8, |x, y| {
            let mut w = crate::pde::ZERO_STATE;
            w[0] = 1.0;
            w[1] = x.sin() * y.cos();
            w[2] = -x.cos() * y.sin();
            w[4] = 100.0;
            m.prim_to_cons(&w)
        });
        let d = diagnose(&g, &m, 0, 0.0, 0.0, None);
        assert!((d.kinetic - 0.25).abs() < 1e-6, "{}", d.kinetic);
        assert!(d.momentum[0].abs() < 1e-12);
    }

    #[test]
    fn uniform_field_has_no_divergence_or_current() {
        let m = PdeModel::vrmhd(PdeParams::default());
        let g = grid(&m, 3, |_, _| {
            let mut w = crate::pde::ZERO_STATE;
            w[0] = 1.0;
            w[4] = 1.0;
            w[5] = 0.1;
            m.prim_to_cons(&w)
        });
        let d = diagnose(&g, &m, 0, 0.0, 0.0, None);
        assert!(d.divb_max < 1e-14 && d.divb_l2 < 1e-14);
        for c in &g.cells {
            let dm = derived_means(&m, &g.ops, &c.u, g.geom.h(0));
            assert!(dm.current_z.abs() < 1e-14 && dm.div_b.abs() < 1e-14);
        }
    }

    #[test]
    fn vorticity_of_solid_rotation() {
        let m = PdeModel::cns(PdeParams::default());
        let g = grid(&m, 2, |x, y| {
            let mut w = crate::pde::ZERO_STATE;
            w[0] = 1.0;
            w[1] = -y;
            w[2] = x;
            w[4] = 1.0;
            m.prim_to_cons(&w)
        });
        for c in &g.cells {
            let dm = derived_means(&m, &g.ops, &c.u, g.geom.h(0));
            assert!((dm.vorticity_z - 2.0).abs() < 1e-12);
        }
    }
}
