//! Batch driver and CSV output contract.

use std::path::Path;

use approx::assert_relative_eq;
use aderdg::config::RunConfig;
use aderdg::driver::run;
use aderdg::output::{cells_header, diagnostics_header, subgrid_header};
use aderdg::pde::{PdeModel, PdeParams};
use aderdg::Error;

fn config(dir: &Path, extra: &str) -> RunConfig {
    let mut cfg = RunConfig::from_text(&format!("scenario = sod\nnx = 40\n{extra}")).unwrap();
    cfg.output.dir = dir.to_path_buf();
    cfg
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn headers_match_format_document() {
    let cns = PdeModel::cns(PdeParams::default());
    let mhd = PdeModel::vrmhd(PdeParams::default());
    assert_eq!(
        cells_header(&cns).join(","),
        "level,beta,i,j,k,x_lo,x_hi,y_lo,y_hi,z_lo,z_hi,rho,mx,my,mz,E,p,vmag,omega_z"
    );
    assert_eq!(
        cells_header(&mhd).join(","),
        "level,beta,i,j,k,x_lo,x_hi,y_lo,y_hi,z_lo,z_hi,rho,mx,my,mz,E,Bx,By,Bz,psi,p,vmag,omega_z,j_z,div_b"
    );
    assert_eq!(subgrid_header(&cns).join(","), "cell,level,beta,si,sj,sk,x,y,z,rho,mx,my,mz,E");
    let all: Vec<String> = aderdg::config::DIAGNOSTIC_COLUMNS.iter().map(|s| s.to_string()).collect();
    assert_eq!(
        diagnostics_header(&all).join(","),
        "step,t,dt,mass,mom_x,mom_y,mom_z,energy,kinetic,dissipation,divb_max,divb_l2,limited_fraction,active_cells,active_per_level"
    );
}

#[test]
fn zero_steps_writes_initial_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "max_steps = 0");
    let r = run(&cfg).unwrap();
    assert_eq!((r.steps, r.t, r.snapshots), (0, 0.0, 1));
    let (h, rows) = read_csv(&dir.path().join("cells_000000.csv"));
    assert_eq!(h, cells_header(&PdeModel::cns(PdeParams::default())));
    assert_eq!(rows.len(), r.last.active_per_level.iter().sum::<usize>());
    assert!(rows.len() > 40, "the initial jump is refined");
    assert!(dir.path().join("subgrid_000000.csv").exists());
    let (_, diag) = read_csv(&dir.path().join("diagnostics.csv"));
    assert_eq!(diag.len(), 1);
    assert_eq!(diag[0][0], "0");
}

#[test]
fn snapshot_means_reproduce_diagnostics_totals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "max_steps = 12\namr.lmax = 1");
    let r = run(&cfg).unwrap();
    assert_eq!(r.steps, 12);
    let (h, rows) = read_csv(&dir.path().join("cells_000012.csv"));
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let (lo, hi, rho, e) = (col("x_lo"), col("x_hi"), col("rho"), col("E"));
    let f = |row: &Vec<String>, i: usize| row[i].parse::<f64>().unwrap();
    let mass: f64 = rows.iter().map(|row| f(row, rho) * (f(row, hi) - f(row, lo))).sum();
    let energy: f64 = rows.iter().map(|row| f(row, e) * (f(row, hi) - f(row, lo))).sum();
    assert_relative_eq!(mass, r.last.mass, max_relative = 1e-12);
    assert_relative_eq!(energy, r.last.energy, max_relative = 1e-12);
    // Subgrid rows: N_s per cell, cell index in tree order.
    let (_, sub) = read_csv(&dir.path().join("subgrid_000012.csv"));
    assert_eq!(sub.len(), rows.len() * 7);
    assert!(sub.windows(2).all(|w| w[0][0].parse::<usize>().unwrap() <= w[1][0].parse::<usize>().unwrap()));
}

#[test]
fn output_cadence_by_steps_and_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "max_steps = 10\noutput.every = 4\ndiagnostics.every = 3");
    let r = run(&cfg).unwrap();
    for step in [0, 4, 8, 10] {
        assert!(dir.path().join(format!("cells_{step:06}.csv")).exists(), "step {step}");
    }
    assert_eq!(r.snapshots, 4);
    let (_, diag) = read_csv(&dir.path().join("diagnostics.csv"));
    let steps: Vec<&str> = diag.iter().map(|row| row[0].as_str()).collect();
    assert_eq!(steps, ["0", "3", "6", "9", "10"]);

    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "t_end = 0.05\noutput.dt = 0.02\noutput.snapshots = true");
    let r = run(&cfg).unwrap();
    assert_relative_eq!(r.t, 0.05, max_relative = 1e-12);
    // t = 0, two crossings and the final state.
    assert_eq!(r.snapshots, 4);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        run(&config(d.path(), "max_steps = 15\nthreads = 1\noutput.every = 5")).unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 9);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn unwritable_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, b"x").unwrap();
    let cfg = config(&file.join("sub"), "max_steps = 1");
    let f = run(&cfg).unwrap_err();
    assert!(matches!(f.error, Error::Io(_)), "{:?}", f.error);
    assert_eq!(f.step, 0);
}
