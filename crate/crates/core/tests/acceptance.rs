//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p aderdg --test acceptance`. A single criterion can
//! be selected by number: `cargo test --test acceptance -- 3 7`.

mod common;

use std::time::{Duration, Instant};

use aderdg::basis::{build_operators, gauss_legendre, MAX_DEGREE};
use aderdg::config::RunConfig;
use aderdg::diagnostics::diagnose;
use aderdg::driver;
use aderdg::scenarios::{B_DIFFUSION_AMPLITUDE, B_DIFFUSION_WIDTH};
use aderdg::solver::Solver;
use aderdg::tensor::unflatten;
use common::{gaussian_heat, integrate_error, run_to, solver_from, ExactRiemann};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(pass: bool, elapsed: Duration, limit: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (pass && s < limit, format!("{s:.1} s / {limit:.0} s"))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c1_operators() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 4];
    for n in 1..=MAX_DEGREE + 1 {
        let q = gauss_legendre(n).unwrap();
        for k in 0..2 * n {
            let s: f64 = q.nodes.iter().zip(&q.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
            worst[0] = worst[0].max((s - 1.0 / (k as f64 + 1.0)).abs());
        }
    }
    for degree in 0..=MAX_DEGREE {
        for dim in 1..=2 {
            for refine in [2, 3] {
                let ops = build_operators(degree, dim, 2 * degree + 1, refine).unwrap();
                let nv = 2;
                let u: Vec<f64> = (0..ops.nodes_per_element() * nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let back = ops.reconstruct_from_subcells(&ops.project_to_subcells(&u, nv), nv);
                worst[1] = worst[1].max(max_abs_diff(&u, &back));
                let kids: Vec<Vec<f64>> = (0..ops.children_per_element())
                    .map(|c| ops.child_projection(&u, nv, unflatten(c, refine, dim)))
                    .collect();
                let refs: Vec<&[f64]> = kids.iter().map(|v| v.as_slice()).collect();
                worst[2] = worst[2].max(max_abs_diff(&u, &ops.parent_average(&refs, nv)));
                let w: Vec<f64> = (0..ops.subcells_per_element() * nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let kids: Vec<Vec<f64>> = (0..ops.children_per_element())
                    .map(|c| ops.subcells_to_child(&w, nv, unflatten(c, refine, dim)))
                    .collect();
                let refs: Vec<&[f64]> = kids.iter().map(|v| v.as_slice()).collect();
                worst[3] = worst[3].max(max_abs_diff(&w, &ops.subcells_from_children(&refs, nv)));
            }
        }
    }
    let ok = worst.iter().all(|&e| e <= 1e-12);
    let (pass, t) = within(ok, start.elapsed(), 5.0);
    outcome(
        pass,
        format!(
            "quadrature {:.1e}, R∘P {:.1e}, child round trip {:.1e}, subcell round trip {:.1e} (≤ 1e-12); {t}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

/// L2 density error of the isentropic vortex at `t_end` against the exact
/// translated solution.
fn vortex_error(degree: usize, n: usize, t_end: f64) -> f64 {
    let mut s = solver_from(&format!("scenario = smooth_vortex\ndegree = {degree}\nnx = {n}\nny = {n}\namr.lmax = 0"));
    run_to(&mut s, t_end, usize::MAX, |_| {});
    let exact = s.scenario.initial.clone();
    let model = s.model.clone();
    integrate_error(&s.grid, degree + 3, 2, |u| u[0], |x| model.prim_to_cons(&exact(x, t_end))[0]).sqrt()
}

fn c2_convergence() -> Outcome {
    let start = Instant::now();
    let t_end = 1.0;
    let meshes: [(usize, [usize; 4]); 3] = [(1, [10, 20, 40, 80]), (2, [8, 16, 32, 64]), (3, [5, 10, 20, 40])];
    let mut ok = true;
    let mut parts = Vec::new();
    for (degree, ns) in meshes {
        let errs: Vec<f64> = ns.iter().map(|&n| vortex_error(degree, n, t_end)).collect();
        let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let last = *orders.last().unwrap();
        ok &= last >= degree as f64 + 0.5;
        parts.push(format!(
            "N={degree}: errors [{}] orders [{}]",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", "),
            orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>().join(", ")
        ));
    }
    let (pass, t) = within(ok, start.elapsed(), 600.0);
    outcome(pass, format!("{} (finest order ≥ N+0.5); {t}", parts.join("; ")))
}

/// ρ > 0 and p > 0 at every nodal value of unlimited cells and every
/// subcell value of limited ones.
fn all_nodal_and_subcell_positive(s: &Solver) -> bool {
    let nv = s.grid.nv;
    let ok = |d: &[f64]| {
        d.chunks_exact(nv).all(|q| q[0] > 0.0 && s.model.pressure(&aderdg::pde::state_from(q)) > 0.0)
    };
    s.grid.active.iter().flatten().all(|&id| {
        let c = &s.grid.cells[id];
        match (&c.sub, c.beta) {
            (Some(w), true) => ok(w),
            _ => ok(&c.u),
        }
    })
}

fn c3_sod() -> Outcome {
    let start = Instant::now();
    let mut s = solver_from("scenario = sod\ndegree = 3\nnx = 100\namr.lmax = 1\nlimiter.enabled = true");
    let mut positive = all_nodal_and_subcell_positive(&s);
    run_to(&mut s, 0.2, usize::MAX, |s| positive &= all_nodal_and_subcell_positive(s));
    let rp = ExactRiemann::new(1.4, [1.0, 0.0, 1.0], [0.125, 0.0, 0.1]);
    let l1 = integrate_error(&s.grid, 6, 1, |u| u[0], |x| rp.sample((x[0] - 0.5) / 0.2)[0]);
    let ok = l1 < 3e-2 && positive && s.stats.terminal_failures == 0;
    let (pass, t) = within(ok, start.elapsed(), 120.0);
    outcome(
        pass,
        format!(
            "L1(rho) = {l1:.3e} (< 3e-2), positivity {}, {} steps, {} troubled; {t}",
            if positive { "held" } else { "VIOLATED" },
            s.step,
            s.stats.troubled
        ),
    )
}

fn fit_rate(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let (sx, sy) = samples.iter().fold((0.0, 0.0), |a, &(t, k)| (a.0 + t, a.1 + k.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, k) in samples {
        num += (t - mx) * (k.ln() - my);
        den += (t - mx) * (t - mx);
    }
    -num / den
}

fn c4_taylor_green() -> Outcome {
    let start = Instant::now();
    let mut s = solver_from("scenario = taylor_green_2d\namr.lmax = 0");
    let nu = s.model.params.mu;
    let mut samples = Vec::new();
    run_to(&mut s, 1.5, usize::MAX, |s| {
        if s.t >= 0.5 - 1e-12 {
            samples.push((s.t, diagnose(&s.grid, &s.model, s.step, s.t, 0.0, None).kinetic));
        }
    });
    let rate = fit_rate(&samples);
    let rel = (rate - 4.0 * nu).abs() / (4.0 * nu);
    let (pass, t) = within(rel < 0.05, start.elapsed(), 600.0);
    outcome(pass, format!("fitted rate {rate:.5} vs 4ν = {:.5}, rel. dev {rel:.2e} (< 5e-2); {t}", 4.0 * nu))
}

fn c5_resistive_diffusion() -> Outcome {
    let start = Instant::now();
    let mut s = solver_from("scenario = b_diffusion\ndegree = 3\nnx = 128\nt_end = 1");
    let eta = s.model.params.eta;
    run_to(&mut s, 1.0, usize::MAX, |_| {});
    let (a, w) = (B_DIFFUSION_AMPLITUDE, B_DIFFUSION_WIDTH);
    let l2 = integrate_error(&s.grid, 6, 2, |u| u[6], |x| gaussian_heat(a, w, eta, x[0], 1.0)).sqrt();
    let (pass, t) = within(l2 < 1e-3, start.elapsed(), 120.0);
    outcome(pass, format!("L2(B_y) = {l2:.3e} at t = {:.3} (< 1e-3); {t}", s.t))
}

fn c6_limiter_silence() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for text in ["scenario = smooth_vortex\namr.lmax = 0", "scenario = mixing_layer"] {
        let mut s = solver_from(text);
        let mut worst = s.limited_fraction();
        run_to(&mut s, f64::INFINITY, 200, |s| worst = worst.max(s.limited_fraction()));
        ok &= worst == 0.0 && s.stats.troubled == 0;
        parts.push(format!("{}: max limited fraction {worst}, troubled {}", s.scenario.name, s.stats.troubled));
    }
    let (pass, t) = within(ok, start.elapsed(), f64::INFINITY);
    outcome(pass, format!("{} (= 0 over 200 steps); {t}", parts.join("; ")))
}

/// Largest nodal |∇ρ| of an active cell.
fn density_gradient(s: &Solver, id: usize) -> f64 {
    let c = &s.grid.cells[id];
    let ops = &s.grid.ops;
    let h = s.grid.geom.h(c.level);
    let nv = s.grid.nv;
    let rho: Vec<f64> = c.u.chunks_exact(nv).map(|q| q[0]).collect();
    let ext = vec![ops.n; 2];
    let mut g = [Vec::new(), Vec::new()];
    for a in 0..2 {
        aderdg::tensor::apply_axis(&rho, &ext, 1, a, &ops.diff, &mut g[a]);
    }
    (0..rho.len()).map(|k| (g[0][k] / h[0]).hypot(g[1][k] / h[1])).fold(0.0, f64::max)
}

fn c7_double_mach() -> Outcome {
    let start = Instant::now();
    let mut s = solver_from("scenario = double_mach_reflection\nnx = 80\nny = 20\namr.lmax = 1\namr.r = 2\nmu = 1e-4");
    let mut worst = s.limited_fraction();
    let mut completed = true;
    while s.t < 0.05 * (1.0 - 1e-14) {
        if let Err(e) = s.step(0.05 - s.t) {
            completed = false;
            eprintln!("criterion 7: {e}");
            break;
        }
        worst = worst.max(s.limited_fraction());
    }
    // Top decile of |∇ρ| over base cells, dilated by one base cell.
    let g = &s.grid.geom;
    let (nx, ny) = (g.base[0], g.base[1]);
    let r = g.refine as i64;
    let mut field = vec![0.0f64; nx * ny];
    let lmax = s.grid.max_level();
    for lvl in &s.grid.active {
        for &id in lvl {
            let c = &s.grid.cells[id];
            let f = r.pow(c.level as u32);
            let (i, j) = ((c.coords[0] / f) as usize, (c.coords[1] / f) as usize);
            field[j * nx + i] = field[j * nx + i].max(density_gradient(&s, id));
        }
    }
    let mut sorted = field.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[(0.9 * sorted.len() as f64) as usize];
    let hot = |i: i64, j: i64| {
        (-1..=1).any(|dj| {
            (-1..=1).any(|di| {
                let (a, b) = (i + di, j + dj);
                a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny && field[b as usize * nx + a as usize] >= cut
            })
        })
    };
    let finest = &s.grid.active[lmax];
    let f = r.pow(lmax as u32);
    let inside = finest
        .iter()
        .filter(|&&id| {
            let c = &s.grid.cells[id];
            hot(c.coords[0] / f, c.coords[1] / f)
        })
        .count();
    let share = if finest.is_empty() { 0.0 } else { inside as f64 / finest.len() as f64 };
    let ok = completed && s.stats.terminal_failures == 0 && worst < 0.2 && lmax >= 1 && share >= 0.8;
    let (pass, t) = within(ok, start.elapsed(), 1800.0);
    outcome(
        pass,
        format!(
            "t = {:.4}, terminal failures {} (= 0), max limited fraction {worst:.3} (< 0.2), finest cells in |∇ρ| band {inside}/{} = {share:.2} (≥ 0.8); {t}",
            s.t,
            s.stats.terminal_failures,
            finest.len()
        ),
    )
}

fn c8_mhd_consistency() -> Outcome {
    let start = Instant::now();
    let base = "scenario = sod\ndegree = 3\nnx = 100\namr.lmax = 1";
    let mut cns = solver_from(base);
    // With B = 0 there is nothing to clean; a nonzero c_h would only widen
    // the Rusanov wave speed bound.
    let mut mhd = solver_from(&format!("{base}\npde = vrmhd\nch = 0"));
    run_to(&mut cns, 0.2, usize::MAX, |_| {});
    run_to(&mut mhd, 0.2, usize::MAX, |_| {});
    let a = cns.grid.tree_order();
    let b = mhd.grid.tree_order();
    let mut diff = if a.len() == b.len() { 0.0f64 } else { f64::INFINITY };
    if diff == 0.0 {
        for (&i, &j) in a.iter().zip(&b) {
            let (x, y) = (cns.grid.cell_mean(i), mhd.grid.cell_mean(j));
            diff = diff.max(max_abs_diff(&x[..5], &y[..5]));
            diff = diff.max(y[5..9].iter().fold(0.0, |m, v| m.max(v.abs())));
            if cns.grid.cells[i].coords != mhd.grid.cells[j].coords {
                diff = f64::INFINITY;
            }
        }
    }
    let first = diff <= 1e-12 && cns.step == mhd.step;

    // The viscous bound in the ρ = 0.01 band (ν = 0.1) limits Δt to ~1e-5
    // at N = 3, r = 3; N = 1 with r = 2 is the cheapest setup reaching t = 3.
    let mut kh = solver_from("scenario = kelvin_helmholtz_mhd\nnx = 20\nny = 40\namr.lmax = 1\namr.r = 2\ndegree = 1");
    let mut ref_div = None;
    let mut peak = 0.0f64;
    let mut completed = true;
    while kh.t < 3.0 * (1.0 - 1e-14) {
        if let Err(e) = kh.step(3.0 - kh.t) {
            eprintln!("criterion 8: {e}");
            completed = false;
            break;
        }
        let d = diagnose(&kh.grid, &kh.model, kh.step, kh.t, 0.0, None).divb_max;
        if kh.t >= 0.5 - 1e-12 {
            ref_div.get_or_insert(d);
            peak = peak.max(d);
        }
    }
    let r0 = ref_div.unwrap_or(f64::NAN);
    let second = completed && peak <= 2.0 * r0;
    let (pass, t) = within(first && second, start.elapsed(), f64::INFINITY);
    outcome(
        pass,
        format!(
            "Sod VRMHD(B=0) vs CNS max cell diff {diff:.2e} (≤ 1e-12); KH MHD max|div B| t∈[0.5,{:.2}] peak {peak:.3e} vs 2×{r0:.3e}, ch = {:.3}; {t}",
            kh.t, kh.model.params.ch
        ),
    )
}

fn c9_conservation() -> Outcome {
    let start = Instant::now();
    let mut s = solver_from("scenario = kelvin_helmholtz_cns\nnx = 20\nny = 40\namr.lmax = 0");
    let t0 = s.grid.totals();
    run_to(&mut s, f64::INFINITY, 500, |_| {});
    let t1 = s.grid.totals();
    let names = ["mass", "mom_x", "mom_y", "mom_z", "energy"];
    // Momentum scale: total |ρv| is used where the net total vanishes.
    let scale = |v: usize| -> f64 {
        if t0[v].abs() > 1e-8 {
            t0[v].abs()
        } else {
            s.grid.totals()[0]
        }
    };
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for v in [0, 1, 2, 4] {
        let d = (t1[v] - t0[v]).abs() / scale(v);
        worst = worst.max(d);
        parts.push(format!("{} {d:.1e}", names[v]));
    }
    let ok = worst < 1e-11 && s.stats.troubled > 0 && s.step == 500;
    let (pass, t) = within(ok, start.elapsed(), f64::INFINITY);
    outcome(
        pass,
        format!("{} steps, troubled cell-updates {}, drifts: {} (< 1e-11); {t}", s.step, s.stats.troubled, parts.join(", ")),
    )
}

fn c10_determinism() -> Outcome {
    let start = Instant::now();
    let text = "scenario = sod\nnx = 50\namr.lmax = 1\namr.interval = 5\nmax_steps = 60\noutput.every = 20";
    let run = |threads: usize| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::from_text(text).unwrap();
        cfg.output.dir = dir.path().to_path_buf();
        cfg.threads = Some(threads);
        driver::run(&cfg).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let a = run(1);
    let b = run(1);
    let identical = a == b;
    let c = run(4);
    let diag = |f: &[(String, Vec<u8>)]| -> Vec<f64> {
        let (_, bytes) = f.iter().find(|(n, _)| n == "diagnostics.csv").unwrap();
        let mut rd = csv::Reader::from_reader(bytes.as_slice());
        let mut out = Vec::new();
        for rec in rd.records() {
            for x in rec.unwrap().iter() {
                if let Ok(v) = x.parse::<f64>() {
                    out.push(v);
                }
            }
        }
        out
    };
    let (da, dc) = (diag(&a), diag(&c));
    let rel = if da.len() == dc.len() {
        da.iter().zip(&dc).map(|(x, y)| (x - y).abs() / x.abs().max(1.0)).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let ok = identical && rel <= 1e-12 && !a.is_empty();
    let (pass, t) = within(ok, start.elapsed(), f64::INFINITY);
    outcome(
        pass,
        format!("{} files byte-identical: {identical}; 1 vs 4 threads diagnostics max diff {rel:.1e} (≤ 1e-12); {t}", a.len()),
    )
}

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("operator identities", c1_operators),
        ("convergence order", c2_convergence),
        ("Sod shock tube", c3_sod),
        ("2D Taylor-Green decay", c4_taylor_green),
        ("resistive diffusion", c5_resistive_diffusion),
        ("limiter silence", c6_limiter_silence),
        ("double Mach reflection", c7_double_mach),
        ("MHD consistency", c8_mhd_consistency),
        ("conservation audit", c9_conservation),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !args.is_empty() && !args.contains(&(i + 1)) {
            continue;
        }
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {:2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
