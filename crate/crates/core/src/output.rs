//! CSV snapshots and the diagnostics table.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::amr::Grid;
use crate::diagnostics::{derived_means, mean_pressure_speed, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::pde::PdeModel;
use crate::tensor::unflatten;

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

pub fn cells_header(model: &PdeModel) -> Vec<String> {
    let mut h: Vec<String> = ["level", "beta", "i", "j", "k", "x_lo", "x_hi", "y_lo", "y_hi", "z_lo", "z_hi"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(model.var_names().iter().map(|s| s.to_string()));
    if model.is_fluid() {
        h.extend(["p", "vmag", "omega_z"].iter().map(|s| s.to_string()));
    }
    if model.is_mhd() {
        h.extend(["j_z", "div_b"].iter().map(|s| s.to_string()));
    }
    h
}

pub fn subgrid_header(model: &PdeModel) -> Vec<String> {
    let mut h: Vec<String> =
        ["cell", "level", "beta", "si", "sj", "sk", "x", "y", "z"].iter().map(|s| s.to_string()).collect();
    h.extend(model.var_names().iter().map(|s| s.to_string()));
    h
}

pub fn snapshot_paths(dir: &Path, tag: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("cells_{tag}.csv")), dir.join(format!("subgrid_{tag}.csv")))
}

/// Writes `cells_<tag>.csv` and `subgrid_<tag>.csv` in tree order.
pub fn write_snapshot(grid: &Grid, model: &PdeModel, dir: &Path, tag: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (cp, sp) = snapshot_paths(dir, tag);
    let mut cw = csv::Writer::from_writer(File::create(cp)?);
    let mut sw = csv::Writer::from_writer(File::create(sp)?);
    cw.write_record(cells_header(model)).map_err(csv_err)?;
    sw.write_record(subgrid_header(model)).map_err(csv_err)?;
    let ops = &*grid.ops;
    let g = &grid.geom;
    let nv = grid.nv;
    for (order, id) in grid.tree_order().into_iter().enumerate() {
        let c = &grid.cells[id];
        let lo = g.cell_lo(c.level, c.coords);
        let h = g.h(c.level);
        let mut row = vec![c.level.to_string(), u8::from(c.beta).to_string()];
        row.extend((0..3).map(|a| c.coords[a].to_string()));
        for a in 0..3 {
            if a < g.dim {
                row.push(fmt(lo[a]));
                row.push(fmt(lo[a] + h[a]));
            } else {
                row.push(fmt(g.lo[a]));
                row.push(fmt(g.hi[a]));
            }
        }
        let mean = grid.cell_mean(id);
        row.extend(mean[..nv].iter().map(|&x| fmt(x)));
        let dm = derived_means(model, ops, &c.u, h);
        if model.is_fluid() {
            let (p, v) = mean_pressure_speed(model, &mean[..nv]);
            row.extend([fmt(p), fmt(v), fmt(dm.vorticity_z)]);
        }
        if model.is_mhd() {
            row.extend([fmt(dm.current_z), fmt(dm.div_b)]);
        }
        cw.write_record(&row).map_err(csv_err)?;

        let w = grid.subcell_data(id);
        let ns = ops.ns;
        for (k, s) in w.chunks_exact(nv).enumerate() {
            let ix = unflatten(k, ns, g.dim);
            let mut row = vec![order.to_string(), c.level.to_string(), u8::from(c.beta).to_string()];
            row.extend((0..3).map(|a| ix[a].to_string()));
            for a in 0..3 {
                let x = if a < g.dim { lo[a] + h[a] * (ix[a] as f64 + 0.5) / ns as f64 } else { 0.5 * (g.lo[a] + g.hi[a]) };
                row.push(fmt(x));
            }
            row.extend(s.iter().map(|&x| fmt(x)));
            sw.write_record(&row).map_err(csv_err)?;
        }
    }
    cw.flush()?;
    sw.flush()?;
    Ok(())
}

/// Diagnostics table writer with a fixed column selection.
pub struct DiagnosticsWriter {
    w: csv::Writer<File>,
    columns: Vec<String>,
}

pub fn diagnostics_header(columns: &[String]) -> Vec<String> {
    let mut h: Vec<String> = vec!["step".into(), "t".into(), "dt".into()];
    for c in columns {
        match c.as_str() {
            "momentum" => h.extend(["mom_x", "mom_y", "mom_z"].iter().map(|s| s.to_string())),
            "divb" => h.extend(["divb_max", "divb_l2"].iter().map(|s| s.to_string())),
            "active_cells" => h.extend(["active_cells", "active_per_level"].iter().map(|s| s.to_string())),
            other => h.push(other.to_string()),
        }
    }
    h
}

impl DiagnosticsWriter {
    pub fn create(dir: &Path, columns: &[String]) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_writer(File::create(dir.join("diagnostics.csv"))?);
        w.write_record(diagnostics_header(columns)).map_err(csv_err)?;
        Ok(DiagnosticsWriter { w, columns: columns.to_vec() })
    }

    pub fn write(&mut self, d: &DiagnosticsRecord) -> Result<()> {
        let mut row = vec![d.step.to_string(), fmt(d.t), fmt(d.dt)];
        for c in &self.columns {
            match c.as_str() {
                "mass" => row.push(fmt(d.mass)),
                "momentum" => row.extend(d.momentum.iter().map(|&x| fmt(x))),
                "energy" => row.push(fmt(d.energy)),
                "kinetic" => row.push(fmt(d.kinetic)),
                "dissipation" => row.push(fmt(d.dissipation)),
                "divb" => row.extend([fmt(d.divb_max), fmt(d.divb_l2)]),
                "limited_fraction" => row.push(fmt(d.limited_fraction)),
                "active_cells" => {
                    row.push(d.active_per_level.iter().sum::<usize>().to_string());
                    let per: Vec<String> = d.active_per_level.iter().map(|n| n.to_string()).collect();
                    row.push(per.join(";"));
                }
                other => return Err(Error::Config(format!("unknown diagnostics column `{other}`"))),
            }
        }
        self.w.write_record(&row).map_err(csv_err)?;
        self.w.flush()?;
        Ok(())
    }
}
