//! Initial and boundary conditions of the benchmark problems, plus three
//! calibration problems (`sod`, `smooth_vortex`, `b_diffusion`) used only
//! for oracle-based checks.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::amr::Indicator;
use crate::error::{Error, Result};
use crate::limiter::FvScheme;
use crate::pde::{Grad, PdeModel, PdeParams, State, ZERO_STATE};

/// Boundary condition of one domain face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bc {
    Periodic,
    NoSlip { wall_velocity: [f64; 3] },
    Slip,
    Outflow,
    /// State given by the scenario's boundary function at `(x, t)`.
    Analytic,
}

/// Primitive state `(ρ, v, p, B, ψ)` as a function of position and time.
pub type PrimFn = Arc<dyn Fn(&[f64; 3], f64) -> State + Send + Sync>;

#[derive(Clone, Debug)]
pub struct ScenarioDefaults {
    pub degree: usize,
    pub lmax: usize,
    pub refine: usize,
    pub indicator: Indicator,
    pub scheme: FvScheme,
}

#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub model: PdeModel,
    pub dim: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub base: [usize; 3],
    /// `bcs[axis][side]`, side 0 the lower face.
    pub bcs: [[Bc; 2]; 3],
    pub t_end: f64,
    pub initial: PrimFn,
    pub boundary: PrimFn,
    /// Take the cleaning speed from the initial data.
    pub ch_auto: bool,
    pub defaults: ScenarioDefaults,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("model", &self.model)
            .field("dim", &self.dim)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("base", &self.base)
            .field("bcs", &self.bcs)
            .field("t_end", &self.t_end)
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForcedComponent {
    Vertical,
    Streamwise,
}

/// Overrides accepted by [`build_scenario`].
#[derive(Clone, Debug, Default)]
pub struct ScenarioOverrides {
    pub base: [Option<usize>; 3],
    pub t_end: Option<f64>,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub pr: Option<f64>,
    pub eta: Option<f64>,
    pub ch: Option<f64>,
    /// `cns` or `vrmhd`.
    pub pde: Option<String>,
    pub forcing: Option<ForcedComponent>,
}

pub const SCENARIOS: &[(&str, &str)] = &[
    ("sod", "1D shock tube (calibration)"),
    ("smooth_vortex", "2D isentropic vortex in uniform flow, periodic (calibration)"),
    ("b_diffusion", "1D resistive diffusion of a Gaussian B_y (calibration)"),
    ("taylor_green_2d", "2D viscous Taylor-Green vortex, M = 0.1"),
    ("taylor_green_3d", "3D Taylor-Green vortex, M = 0.1"),
    ("lid_driven_cavity", "2D lid-driven cavity, M = 0.1, Re = 100"),
    ("mixing_layer", "2D compressible mixing layer with inflow forcing"),
    ("shock_vortex", "2D shock-vortex interaction, M_S = 1.5"),
    ("double_mach_reflection", "2D viscous double Mach reflection, M_S = 10"),
    ("kelvin_helmholtz_cns", "2D Kelvin-Helmholtz instability, Navier-Stokes"),
    ("kelvin_helmholtz_mhd", "2D Kelvin-Helmholtz instability, viscous resistive MHD"),
    ("magnetic_reconnection", "2D Harris-sheet tearing mode, S = 1e6"),
];

pub fn scenario_names() -> Vec<&'static str> {
    SCENARIOS.iter().map(|(n, _)| *n).collect()
}

fn prim(rho: f64, v: [f64; 3], p: f64) -> State {
    let mut s = ZERO_STATE;
    s[0] = rho;
    s[1..4].copy_from_slice(&v);
    s[4] = p;
    s
}

fn prim_mhd(rho: f64, v: [f64; 3], p: f64, b: [f64; 3]) -> State {
    let mut s = prim(rho, v, p);
    s[5..8].copy_from_slice(&b);
    s
}

const PERIODIC: [[Bc; 2]; 3] = [[Bc::Periodic; 2]; 3];

struct Spec {
    mhd: bool,
    params: PdeParams,
    dim: usize,
    lo: [f64; 3],
    hi: [f64; 3],
    base: [usize; 3],
    bcs: [[Bc; 2]; 3],
    t_end: f64,
    initial: PrimFn,
    boundary: Option<PrimFn>,
    defaults: ScenarioDefaults,
}

fn defaults(degree: usize, lmax: usize, refine: usize, indicator: Indicator, scheme: FvScheme) -> ScenarioDefaults {
    ScenarioDefaults { degree, lmax, refine, indicator, scheme }
}

pub fn build_scenario(name: &str, ov: &ScenarioOverrides) -> Result<Scenario> {
    let forcing = ov.forcing.unwrap_or(ForcedComponent::Vertical);
    let mut spec = match name {
        "sod" => sod(),
        "smooth_vortex" => smooth_vortex(ov.gamma.unwrap_or(1.4)),
        "b_diffusion" => b_diffusion(),
        "taylor_green_2d" => taylor_green_2d(ov.gamma.unwrap_or(1.4)),
        "taylor_green_3d" => taylor_green_3d(ov.gamma.unwrap_or(1.4)),
        "lid_driven_cavity" => lid_driven_cavity(ov.gamma.unwrap_or(1.4)),
        "mixing_layer" => mixing_layer(ov.gamma.unwrap_or(1.4), forcing),
        "shock_vortex" => shock_vortex(ov.gamma.unwrap_or(1.4))?,
        "double_mach_reflection" => double_mach(ov.gamma.unwrap_or(1.4)),
        "kelvin_helmholtz_cns" => kelvin_helmholtz(false),
        "kelvin_helmholtz_mhd" => kelvin_helmholtz(true),
        "magnetic_reconnection" => reconnection(),
        _ => return Err(Error::UnknownScenario(name.to_string())),
    };
    if let Some(g) = ov.gamma {
        spec.params.gamma = g;
    }
    if let Some(m) = ov.mu {
        spec.params.mu = m;
    }
    if let Some(p) = ov.pr {
        spec.params.pr = p;
    }
    if let Some(e) = ov.eta {
        spec.params.eta = e;
    }
    let mut ch_auto = spec.mhd;
    if let Some(c) = ov.ch {
        spec.params.ch = c;
        ch_auto = false;
    }
    match ov.pde.as_deref() {
        None => {}
        Some("cns") => {
            spec.mhd = false;
            ch_auto = false;
        }
        Some("vrmhd") => {
            if !spec.mhd {
                spec.mhd = true;
                ch_auto = ov.ch.is_none();
            }
        }
        Some(p) => return Err(Error::Config(format!("unknown pde `{p}` (cns | vrmhd)"))),
    }
    spec.params.validate()?;
    for a in 0..spec.dim {
        if let Some(n) = ov.base[a] {
            if n == 0 {
                return Err(Error::Config(format!("grid extent on axis {a} must be positive")));
            }
            spec.base[a] = n;
        }
    }
    if let Some(t) = ov.t_end {
        if !(t >= 0.0) {
            return Err(Error::Config(format!("t_end = {t} must be non-negative")));
        }
        spec.t_end = t;
    }
    let model = if spec.mhd { PdeModel::vrmhd(spec.params) } else { PdeModel::cns(spec.params) };
    let boundary = spec.boundary.unwrap_or_else(|| spec.initial.clone());
    let sc = Scenario {
        name: name.to_string(),
        model,
        dim: spec.dim,
        lo: spec.lo,
        hi: spec.hi,
        base: spec.base,
        bcs: spec.bcs,
        t_end: spec.t_end,
        initial: spec.initial,
        boundary,
        ch_auto,
        defaults: spec.defaults,
    };
    sc.validate()?;
    Ok(sc)
}

impl Scenario {
    pub fn periodic(&self) -> [bool; 3] {
        let mut p = [false; 3];
        for a in 0..self.dim {
            p[a] = self.bcs[a][0] == Bc::Periodic;
        }
        p
    }

    fn validate(&self) -> Result<()> {
        for a in 0..self.dim {
            let (l, r) = (self.bcs[a][0], self.bcs[a][1]);
            if (l == Bc::Periodic) != (r == Bc::Periodic) {
                return Err(Error::Config(format!("axis {a}: periodic boundaries must be paired")));
            }
        }
        Ok(())
    }

    pub fn initial_cons(&self, x: &[f64; 3]) -> State {
        self.model.prim_to_cons(&(self.initial)(x, 0.0))
    }

    /// Ghost state and gradient at a boundary point of face `(axis, side)`
    /// given the interior conserved state `q` and gradient `g`.
    pub fn ghost(&self, axis: usize, side: usize, x: &[f64; 3], t: f64, q: &State, g: &Grad) -> Result<(State, Grad)> {
        let m = &self.model;
        match self.bcs[axis][side] {
            Bc::Periodic => Err(Error::Grid(format!("periodic face on axis {axis} reached the boundary handler"))),
            Bc::Outflow => Ok((*q, *g)),
            Bc::Analytic => Ok((m.prim_to_cons(&(self.boundary)(x, t)), *g)),
            Bc::Slip | Bc::NoSlip { .. } => {
                let w = m.cons_to_prim(q)?;
                let pg = m.prim_gradient(q, g);
                let mut sign = [1.0; crate::pde::MAX_VARS];
                let mut wg = w;
                match self.bcs[axis][side] {
                    Bc::Slip => {
                        sign[1 + axis] = -1.0;
                        wg[1 + axis] = -w[1 + axis];
                    }
                    Bc::NoSlip { wall_velocity } => {
                        for c in 0..3 {
                            sign[1 + c] = -1.0;
                            wg[1 + c] = 2.0 * wall_velocity[c] - w[1 + c];
                        }
                    }
                    _ => unreachable!(),
                }
                let mut pgg = pg;
                for b in 0..self.dim {
                    for k in 0..m.nvars() {
                        pgg[b][k] = if b == axis { -sign[k] * pg[b][k] } else { sign[k] * pg[b][k] };
                    }
                }
                Ok((m.prim_to_cons(&wg), m.cons_gradient(&wg, &pgg)))
            }
        }
    }

    /// Ghost subcell average for the finite-volume patch.
    pub fn ghost_average(&self, axis: usize, side: usize, x: &[f64; 3], t: f64, q: &State) -> Result<State> {
        Ok(self.ghost(axis, side, x, t, q, &crate::pde::ZERO_GRAD)?.0)
    }
}

fn sod() -> Spec {
    Spec {
        mhd: false,
        params: PdeParams::default(),
        dim: 1,
        lo: [0.0; 3],
        hi: [1.0, 1.0, 1.0],
        base: [100, 1, 1],
        bcs: [[Bc::Outflow; 2], [Bc::Periodic; 2], [Bc::Periodic; 2]],
        t_end: 0.2,
        initial: Arc::new(|x: &[f64; 3], _t| {
            if x[0] < 0.5 {
                prim(1.0, [0.0; 3], 1.0)
            } else {
                prim(0.125, [0.0; 3], 0.1)
            }
        }),
        boundary: None,
        defaults: defaults(3, 1, 2, Indicator::Density, FvScheme::Weno3),
    }
}

/// Isentropic vortex of strength 5 centred at (5, 5) + (1, 1)t; the state
/// at time `t` is the exact solution of the Euler equations.
fn smooth_vortex(gamma: f64) -> Spec {
    let eps = 5.0;
    let f = move |x: &[f64; 3], t: f64| {
        let l = 10.0;
        let dx = (x[0] - 5.0 - t).rem_euclid(l);
        let dy = (x[1] - 5.0 - t).rem_euclid(l);
        let dx = if dx > 0.5 * l { dx - l } else { dx };
        let dy = if dy > 0.5 * l { dy - l } else { dy };
        let r2 = dx * dx + dy * dy;
        let e = (0.5 * (1.0 - r2)).exp();
        let dt = -(gamma - 1.0) * eps * eps / (8.0 * gamma * PI * PI) * (1.0 - r2).exp();
        let rho = (1.0 + dt).powf(1.0 / (gamma - 1.0));
        let u = 1.0 - eps / (2.0 * PI) * e * dy;
        let v = 1.0 + eps / (2.0 * PI) * e * dx;
        prim(rho, [u, v, 0.0], rho.powf(gamma))
    };
    Spec {
        mhd: false,
        params: PdeParams { gamma, ..PdeParams::default() },
        dim: 2,
        lo: [0.0; 3],
        hi: [10.0, 10.0, 1.0],
        base: [40, 40, 1],
        bcs: PERIODIC,
        t_end: 10.0,
        initial: Arc::new(f),
        boundary: None,
        defaults: defaults(3, 0, 2, Indicator::Density, FvScheme::Weno3),
    }
}

/// Gaussian `B_y` of amplitude 0.1 and width 0.1 in total-pressure balance.
pub const B_DIFFUSION_AMPLITUDE: f64 = 0.1;
pub const B_DIFFUSION_WIDTH: f64 = 0.1;

fn b_diffusion() -> Spec {
    let f = |x: &[f64; 3], _t: f64| {
        let s = B_DIFFUSION_WIDTH;
        let by = B_DIFFUSION_AMPLITUDE * (-x[0] * x[0] / (2.0 * s * s)).exp();
        prim_mhd(1.0, [0.0; 3], 1.0 - by * by / (8.0 * PI), [0.0, by, 0.0])
    };
    Spec {
        mhd: true,
        params: PdeParams { eta: 1e-2, ..PdeParams::default() },
        dim: 1,
        lo: [-2.0, 0.0, 0.0],
        hi: [2.0, 1.0, 1.0],
        base: [128, 1, 1],
        bcs: PERIODIC,
        t_end: 1.0,
        initial: Arc::new(f),
        boundary: None,
        defaults: defaults(3, 0, 2, Indicator::Density, FvScheme::Weno3),
    }
}

fn taylor_green_2d(gamma: f64) -> Spec {
    let c0 = 10.0;
    let f = move |x: &[f64; 3], _t: f64| {
        let rho = 1.0;
        let p = rho * c0 * c0 / gamma + rho / 4.0 * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos());
        prim(rho, [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin(), 0.0], p)
    };
    Spec {
        mhd: false,
        params: PdeParams { gamma, mu: 0.01, pr: 0.71, ..PdeParams::default() },
        dim: 2,
        lo: [0.0; 3],
        hi: [2.0 * PI, 2.0 * PI, 1.0],
        base: [12, 12, 1],
        bcs: PERIODIC,
        t_end: 1.5,
        initial: Arc::new(f),
        boundary: None,
        defaults: defaults(3, 0, 2, Indicator::Vorticity, FvScheme::Weno3),
    }
}

fn taylor_green_3d(gamma: f64) -> Spec {
    let c0 = 10.0;
    let f = move |x: &[f64; 3], _t: f64| {
        let rho = 1.0;
        let p = rho * c0 * c0 / gamma
            + ((2.0 * x[0]).cos() + (2.0 * x[1]).cos()) * ((2.0 * x[2]).cos() + 2.0) / 16.0;
        prim(
            rho,
            [x[0].sin() * x[1].cos() * x[2].cos(), -x[0].cos() * x[1].sin() * x[2].cos(), 0.0],
            p,
        )
    };
    Spec {
        mhd: false,
        params: PdeParams { gamma, mu: 1.0 / 800.0, pr: 0.71, ..PdeParams::default() },
        dim: 3,
        lo: [0.0; 3],
        hi: [2.0 * PI; 3],
        base: [8, 8, 8],
        bcs: PERIODIC,
        t_end: 10.0,
        initial: Arc::new(f),
        boundary: None,
        defaults: defaults(2, 0, 2, Indicator::Vorticity, FvScheme::Weno3),
    }
}

fn lid_driven_cavity(gamma: f64) -> Spec {
    let mach = 0.1;
    let f = move |_x: &[f64; 3], _t: f64| prim(1.0, [0.0; 3], 1.0 / (gamma * mach * mach));
    let wall = Bc::NoSlip { wall_velocity: [0.0; 3] };
    Spec {
        mhd: false,
        params: PdeParams { gamma, mu: 0.02, pr: 0.71, ..PdeParams::default() },
        dim: 2,
        lo: [-1.0, -1.0, 0.0],
        hi: [1.0, 1.0, 1.0],
        base: [10, 10, 1],
        bcs: [[wall, wall], [wall, Bc::NoSlip { wall_velocity: [1.0, 0.0, 0.0] }], [Bc::Periodic; 2]],
        t_end: 10.0,
        initial: Arc::new(f),
        boundary: None,
        defaults: defaults(3, 2, 3, Indicator::VelocityMagnitude, FvScheme::Weno3),
    }
}

pub const MIXING_OMEGA0: f64 = -0.3147876;
pub const MIXING_PHASES: [f64; 3] = [-0.028, 0.141, 0.391];
pub const MIXING_AMPLITUDE: f64 = -1e-3;

/// Inflow perturbation `δ(y, t)`.
pub fn mixing_forcing(y: f64, t: f64) -> f64 {
    let w0 = MIXING_OMEGA0;
    let a = MIXING_AMPLITUDE * (-y * y / 4.0).exp();
    a * ((w0 * t).cos()
        + (w0 / 2.0 * t + MIXING_PHASES[0]).cos()
        + (w0 / 4.0 * t + MIXING_PHASES[1]).cos()
        + (w0 / 8.0 * t + MIXING_PHASES[2]).cos())
}

/// Streamwise direction along `x ∈ [0, 400]`, cross-stream `y ∈ [−50, 50]`.
fn mixing_layer(gamma: f64, forcing: ForcedComponent) -> Spec {
    let base = move |x: &[f64; 3], _t: f64| prim(1.0, [((2.0 * x[1]).tanh() + 3.0) / 8.0, 0.0, 0.0], 1.0 / gamma);
    let inflow = move |x: &[f64; 3], t: f64| {
        let mut s = base(x, t);
        let d = mixing_forcing(x[1], t);
        match forcing {
            ForcedComponent::Vertical => s[2] += d,
            ForcedComponent::Streamwise => s[1] += d,
        }
        s
    };
    Spec {
        mhd: false,
        params: PdeParams { gamma, mu: 1e-3, pr: 0.71, ..PdeParams::default() },
        dim: 2,
        lo: [0.0, -50.0, 0.0],
        hi: [400.0, 50.0, 1.0],
        base: [40, 20, 1],
        bcs: [[Bc::Analytic, Bc::Outflow], [Bc::Outflow, Bc::Outflow], [Bc::Periodic; 2]],
        t_end: 1596.8,
        initial: Arc::new(base),
        boundary: Some(Arc::new(inflow)),
        defaults: defaults(3, 2, 3, Indicator::VelocityMagnitude, FvScheme::Weno3),
    }
}

/// Parameters of the shock-vortex problem.
#[derive(Clone, Copy, Debug)]
pub struct ShockVortex {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub omega_m: f64,
    pub center: [f64; 2],
    pub shock_x: f64,
    pub mach_shock: f64,
    pub t0: f64,
}

impl ShockVortex {
    pub fn new(gamma: f64) -> Self {
        let c0 = gamma.sqrt();
        ShockVortex {
            gamma,
            a: 0.0075,
            b: 0.175,
            omega_m: 0.7 * c0,
            center: [0.25, 0.5],
            shock_x: 0.5,
            mach_shock: 1.5,
            t0: 1.0,
        }
    }

    pub fn omega(&self, r: f64) -> f64 {
        if r <= self.a {
            self.omega_m * r / self.a
        } else if r <= self.b {
            self.omega_m * self.a / (self.a * self.a - self.b * self.b) * (r - self.b * self.b / r)
        } else {
            0.0
        }
    }

    /// `T(r)` from `dT/dr = (γ−1)/(Rγ) ω²/r`, `T = T0` for `r ≥ b`.
    pub fn temperature(&self, r: f64) -> f64 {
        if r >= self.b {
            return self.t0;
        }
        let c = (self.gamma - 1.0) / self.gamma;
        let rhs = |s: f64| {
            if s <= 0.0 {
                0.0
            } else {
                let w = self.omega(s);
                c * w * w / s
            }
        };
        // Integrate inward in two pieces so the kink at r = a is a node.
        let mut t = self.t0;
        if r < self.a {
            t += dopri5_quadrature(&rhs, self.b, self.a, 1e-10);
            t += dopri5_quadrature(&rhs, self.a, r, 1e-10);
        } else {
            t += dopri5_quadrature(&rhs, self.b, r, 1e-10);
        }
        t
    }

    /// Upstream primitive state plus the vortex translated by `u0 t`.
    pub fn upstream(&self, x: &[f64; 3], t: f64) -> State {
        let g = self.gamma;
        let u0 = self.mach_shock * g.sqrt();
        let dx = x[0] - self.center[0] - u0 * t;
        let dy = x[1] - self.center[1];
        let r = (dx * dx + dy * dy).sqrt();
        if r >= self.b {
            return prim(1.0, [u0, 0.0, 0.0], 1.0);
        }
        let w = self.omega(r);
        let (ux, uy) = if r > 0.0 { (-w * dy / r, w * dx / r) } else { (0.0, 0.0) };
        let tr = self.temperature(r) / self.t0;
        prim(tr.powf(1.0 / (g - 1.0)), [u0 + ux, uy, 0.0], tr.powf(g / (g - 1.0)))
    }

    /// Downstream state of the stationary normal shock.
    pub fn downstream(&self) -> State {
        let g = self.gamma;
        let m2 = self.mach_shock * self.mach_shock;
        let u0 = self.mach_shock * g.sqrt();
        let rr = (g + 1.0) * m2 / ((g - 1.0) * m2 + 2.0);
        let pr = 1.0 + 2.0 * g / (g + 1.0) * (m2 - 1.0);
        prim(rr, [u0 / rr, 0.0, 0.0], pr)
    }
}

/// `∫_{x0}^{x1} f` by the embedded Dormand-Prince 5(4) pair with step
/// control on the absolute/relative error.
fn dopri5_quadrature(f: &dyn Fn(f64) -> f64, x0: f64, x1: f64, tol: f64) -> f64 {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let span = x1 - x0;
    if span == 0.0 {
        return 0.0;
    }
    let dir = span.signum();
    let mut x = x0;
    let mut y: f64 = 0.0;
    let mut h = span / 16.0;
    while (x1 - x) * dir > 0.0 {
        if (x + h - x1) * dir > 0.0 {
            h = x1 - x;
        }
        let k: Vec<f64> = C.iter().map(|c| f(x + c * h)).collect();
        let y5: f64 = B5.iter().zip(&k).map(|(b, k)| b * k).sum::<f64>() * h;
        let y4: f64 = B4.iter().zip(&k).map(|(b, k)| b * k).sum::<f64>() * h;
        let err = (y5 - y4).abs();
        let scale = tol * (1.0 + y.abs());
        if err <= scale {
            x += h;
            y += y5;
        }
        let fac = if err > 0.0 { 0.9 * (scale / err).powf(0.2) } else { 5.0 };
        h *= fac.clamp(0.2, 5.0);
    }
    y
}

fn shock_vortex(gamma: f64) -> Result<Spec> {
    let sv = ShockVortex::new(gamma);
    let down = sv.downstream();
    let f = move |x: &[f64; 3], t: f64| {
        if x[0] < sv.shock_x {
            sv.upstream(x, t)
        } else {
            down
        }
    };
    let g = move |x: &[f64; 3], t: f64| sv.upstream(x, t);
    Ok(Spec {
        mhd: false,
        params: PdeParams { gamma, mu: 1e-3, pr: 0.7, ..PdeParams::default() },
        dim: 2,
        lo: [0.0; 3],
        hi: [2.0, 1.0, 1.0],
        base: [40, 20, 1],
        bcs: [[Bc::Analytic, Bc::Outflow], [Bc::Periodic; 2], [Bc::Periodic; 2]],
        t_end: 0.7,
        initial: Arc::new(f),
        boundary: Some(Arc::new(g)),
        defaults: defaults(3, 2, 3, Indicator::Density, FvScheme::TvdPrim),
    })
}

/// Exact moving oblique shock: post-shock state left of
/// `x_s = (y + 20t)/√3`, quiescent gas to the right.
pub fn double_mach_state(gamma: f64, x: &[f64; 3], t: f64) -> State {
    let xs = (x[1] + 20.0 * t) / 3f64.sqrt();
    if x[0] < xs {
        // Post-shock gas moves along the front normal (cos 30°, −sin 30°).
        let vs = 8.25;
        prim(8.0 / gamma, [vs * 0.75f64.sqrt(), -vs * 0.5, 0.0], 116.5 / gamma)
    } else {
        prim(1.0, [0.0; 3], 1.0 / gamma)
    }
}

fn double_mach(gamma: f64) -> Spec {
    let f = move |x: &[f64; 3], t: f64| double_mach_state(gamma, x, t);
    Spec {
        mhd: false,
        params: PdeParams { gamma, mu: 1e-4, pr: 0.75, ..PdeParams::default() },
        dim: 2,
        lo: [0.0; 3],
        hi: [4.0, 1.0, 1.0],
        base: [80, 20, 1],
        bcs: [
            [Bc::Analytic, Bc::Outflow],
            [Bc::NoSlip { wall_velocity: [0.0; 3] }, Bc::Analytic],
            [Bc::Periodic; 2],
        ],
        t_end: 0.2,
        initial: Arc::new(f),
        boundary: None,
        defaults: defaults(3, 2, 3, Indicator::Density, FvScheme::Weno3),
    }
}

fn kelvin_helmholtz(mhd: bool) -> Spec {
    let (vs, a, eta0, sigma, rho0, rho1) = (1.0, 0.01, 0.1, 0.1, 1.005, 0.995);
    let f = move |x: &[f64; 3], _t: f64| {
        let (xx, y) = (x[0], x[1]);
        let (u, v, rho) = if y > 0.0 {
            let th = ((y - 0.5) / a).tanh();
            (vs * th, eta0 * vs * (2.0 * PI * xx).sin() * (-(y - 0.5).powi(2) / sigma).exp(), rho0 + rho1 * th)
        } else {
            let th = ((y + 0.5) / a).tanh();
            (-vs * th, -eta0 * vs * (2.0 * PI * xx).sin() * (-(y + 0.5).powi(2) / sigma).exp(), rho0 - rho1 * th)
        };
        prim_mhd(rho, [u, v, 0.0], 1.0, [0.1, 0.0, 0.0])
    };
    Spec {
        mhd,
        params: PdeParams { mu: 1e-3, eta: if mhd { 1e-2 } else { 0.0 }, ..PdeParams::default() },
        dim: 2,
        lo: [-0.5, -1.0, 0.0],
        hi: [0.5, 1.0, 1.0],
        base: [20, 40, 1],
        bcs: PERIODIC,
        t_end: 7.0,
        initial: Arc::new(f),
        boundary: None,
        defaults: defaults(3, 2, 3, Indicator::Density, FvScheme::Weno3),
    }
}

fn reconnection() -> Spec {
    let s: f64 = 1e6;
    let gamma = 5.0 / 3.0;
    let mach = 0.7;
    let a = 1.0 / s.cbrt();
    let b0 = (4.0 * PI).sqrt();
    let k = 2.0 * PI * 10.0;
    let eps = 1e-3;
    let f = move |x: &[f64; 3], _t: f64| {
        let rho = 1.0;
        let xi = x[0] * s.sqrt();
        let sech = 1.0 / (x[0] / a).cosh();
        let sechxi = 1.0 / xi.cosh();
        let g = (-xi * xi).exp();
        let vx = eps * xi.tanh() * g * (k * x[1]).cos();
        let vy = eps * (2.0 * xi * xi.tanh() - sechxi * sechxi) * g * s.sqrt() * (k * x[1]).sin() / k;
        prim_mhd(rho, [vx, vy, 0.0], rho / (gamma * mach * mach), [0.0, b0 * (x[0] / a).tanh(), b0 * sech])
    };
    Spec {
        mhd: true,
        params: PdeParams { gamma, mu: 0.0, eta: 1.0 / s, ..PdeParams::default() },
        dim: 2,
        lo: [-20.0 * a, -0.5, 0.0],
        hi: [20.0 * a, 0.5, 1.0],
        base: [20, 50, 1],
        bcs: [[Bc::Outflow; 2], [Bc::Periodic; 2], [Bc::Periodic; 2]],
        t_end: 8.7,
        initial: Arc::new(f),
        boundary: None,
        defaults: defaults(3, 2, 3, Indicator::Density, FvScheme::Weno3),
    }
}
