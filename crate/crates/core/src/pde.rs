//! Governing equations: compressible Navier–Stokes, viscous/resistive MHD
//! with GLM divergence cleaning, and a scalar advection–diffusion model used
//! for verification.
//!
//! States are fixed-size arrays of [`MAX_VARS`] entries of which only the
//! first [`PdeModel::nvars`] are meaningful. Gradients and fluxes always
//! carry three spatial axes; axes beyond the run dimension are zero.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const MAX_VARS: usize = 9;

pub type State = [f64; MAX_VARS];
pub type Grad = [[f64; MAX_VARS]; 3];
pub type Flux = [[f64; MAX_VARS]; 3];

pub const ZERO_STATE: State = [0.0; MAX_VARS];
pub const ZERO_GRAD: Grad = [[0.0; MAX_VARS]; 3];

/// Indices of the conserved variables.
pub mod var {
    pub const RHO: usize = 0;
    pub const MX: usize = 1;
    pub const MY: usize = 2;
    pub const MZ: usize = 3;
    pub const E: usize = 4;
    pub const BX: usize = 5;
    pub const BY: usize = 6;
    pub const BZ: usize = 7;
    pub const PSI: usize = 8;
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeParams {
    pub gamma: f64,
    pub mu: f64,
    pub pr: f64,
    /// Heat conductivity; derived from `mu` and `pr` when `None`.
    pub kappa: Option<f64>,
    pub eta: f64,
    pub ch: f64,
    pub rgas: f64,
}

impl Default for PdeParams {
    fn default() -> Self {
        PdeParams { gamma: 1.4, mu: 0.0, pr: 0.75, kappa: None, eta: 0.0, ch: 0.0, rgas: 1.0 }
    }
}

impl PdeParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 1.0
            && self.mu >= 0.0
            && self.pr > 0.0
            && self.eta >= 0.0
            && self.ch >= 0.0
            && self.rgas > 0.0
            && self.kappa.map_or(true, |k| k >= 0.0);
        if ok && [self.gamma, self.mu, self.pr, self.eta, self.ch, self.rgas].iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("inadmissible PDE parameters {self:?}")))
        }
    }

    /// κ = γ R μ / (Pr (γ−1)) unless set explicitly.
    pub fn kappa(&self) -> f64 {
        self.kappa
            .unwrap_or(self.gamma * self.rgas * self.mu / (self.pr * (self.gamma - 1.0)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    Cns,
    Vrmhd,
    /// Scalar `u_t + ∇·(a u − ν ∇u) = 0`.
    Advection { velocity: [f64; 3], diffusivity: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeModel {
    pub kind: ModelKind,
    pub params: PdeParams,
}

/// Primitive variables: `(ρ, v, p)` plus `(B, ψ)` for MHD; the advected
/// scalar for the advection model.
pub type Prim = State;

impl PdeModel {
    pub fn cns(params: PdeParams) -> Self {
        PdeModel { kind: ModelKind::Cns, params }
    }

    pub fn vrmhd(params: PdeParams) -> Self {
        PdeModel { kind: ModelKind::Vrmhd, params }
    }

    pub fn advection(velocity: [f64; 3], diffusivity: f64) -> Self {
        PdeModel { kind: ModelKind::Advection { velocity, diffusivity }, params: PdeParams::default() }
    }

    pub fn nvars(&self) -> usize {
        match self.kind {
            ModelKind::Cns => 5,
            ModelKind::Vrmhd => 9,
            ModelKind::Advection { .. } => 1,
        }
    }

    pub fn is_mhd(&self) -> bool {
        matches!(self.kind, ModelKind::Vrmhd)
    }

    pub fn is_fluid(&self) -> bool {
        !matches!(self.kind, ModelKind::Advection { .. })
    }

    pub fn var_names(&self) -> &'static [&'static str] {
        match self.kind {
            ModelKind::Cns => &["rho", "mx", "my", "mz", "E"],
            ModelKind::Vrmhd => &["rho", "mx", "my", "mz", "E", "Bx", "By", "Bz", "psi"],
            ModelKind::Advection { .. } => &["u"],
        }
    }

    fn mag_energy(&self, u: &State) -> f64 {
        if self.is_mhd() {
            (u[5] * u[5] + u[6] * u[6] + u[7] * u[7]) / (8.0 * PI)
        } else {
            0.0
        }
    }

    /// Pressure from the EOS; no admissibility check.
    pub fn pressure(&self, u: &State) -> f64 {
        let rho = u[0];
        let ke = 0.5 * (u[1] * u[1] + u[2] * u[2] + u[3] * u[3]) / rho;
        (self.params.gamma - 1.0) * (u[4] - ke - self.mag_energy(u))
    }

    /// True iff every entry is finite and, for fluid models, ρ > 0 and p > 0.
    pub fn admissible(&self, u: &[f64]) -> bool {
        let nv = self.nvars();
        if u.len() < nv || !u[..nv].iter().all(|x| x.is_finite()) {
            return false;
        }
        if !self.is_fluid() {
            return true;
        }
        let mut s = ZERO_STATE;
        s[..nv].copy_from_slice(&u[..nv]);
        s[0] > 0.0 && self.pressure(&s) > 0.0
    }

    pub fn cons_to_prim(&self, u: &State) -> Result<Prim> {
        let nv = self.nvars();
        if !u[..nv].iter().all(|x| x.is_finite()) {
            return Err(Error::Inadmissible("non-finite conserved state".into()));
        }
        if !self.is_fluid() {
            return Ok(*u);
        }
        let rho = u[0];
        if rho <= 0.0 {
            return Err(Error::Inadmissible(format!("density {rho} <= 0")));
        }
        let p = self.pressure(u);
        if p <= 0.0 {
            return Err(Error::Inadmissible(format!("pressure {p} <= 0")));
        }
        let mut w = *u;
        w[1] = u[1] / rho;
        w[2] = u[2] / rho;
        w[3] = u[3] / rho;
        w[4] = p;
        Ok(w)
    }

    pub fn prim_to_cons(&self, w: &Prim) -> State {
        if !self.is_fluid() {
            return *w;
        }
        let rho = w[0];
        let mut u = *w;
        u[1] = rho * w[1];
        u[2] = rho * w[2];
        u[3] = rho * w[3];
        let ke = 0.5 * rho * (w[1] * w[1] + w[2] * w[2] + w[3] * w[3]);
        u[4] = w[4] / (self.params.gamma - 1.0) + ke + self.mag_energy(w);
        u
    }

    /// Gradient of the primitive variables from a conserved state/gradient.
    pub fn prim_gradient(&self, u: &State, g: &Grad) -> Grad {
        if !self.is_fluid() {
            return *g;
        }
        let nv = self.nvars();
        let rho = u[0];
        let v = [u[1] / rho, u[2] / rho, u[3] / rho];
        let gm1 = self.params.gamma - 1.0;
        let mut out = *g;
        for a in 0..3 {
            let ga = &g[a];
            let dr = ga[0];
            for b in 0..3 {
                out[a][1 + b] = (ga[1 + b] - v[b] * dr) / rho;
            }
            let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let mut dp = ga[4] - (v[0] * ga[1] + v[1] * ga[2] + v[2] * ga[3]) + 0.5 * v2 * dr;
            if nv == 9 {
                dp -= (u[5] * ga[5] + u[6] * ga[6] + u[7] * ga[7]) / (4.0 * PI);
            }
            out[a][4] = gm1 * dp;
        }
        out
    }

    /// Inverse of [`prim_gradient`](Self::prim_gradient) at primitive state `w`.
    pub fn cons_gradient(&self, w: &Prim, pg: &Grad) -> Grad {
        if !self.is_fluid() {
            return *pg;
        }
        let nv = self.nvars();
        let rho = w[0];
        let v = [w[1], w[2], w[3]];
        let gm1 = self.params.gamma - 1.0;
        let mut out = *pg;
        for a in 0..3 {
            let p = &pg[a];
            let dr = p[0];
            for b in 0..3 {
                out[a][1 + b] = rho * p[1 + b] + v[b] * dr;
            }
            let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let mut de = p[4] / gm1 + 0.5 * v2 * dr + rho * (v[0] * p[1] + v[1] * p[2] + v[2] * p[3]);
            if nv == 9 {
                de += (w[5] * p[5] + w[6] * p[6] + w[7] * p[7]) / (4.0 * PI);
            }
            out[a][4] = de;
        }
        out
    }

    /// Physical flux `F(u, ∇u)` for the first `dim` axes.
    pub fn flux(&self, u: &State, g: &Grad, dim: usize) -> Result<Flux> {
        let nv = self.nvars();
        if !u[..nv].iter().all(|x| x.is_finite()) || !g[..dim].iter().all(|r| r[..nv].iter().all(|x| x.is_finite())) {
            return Err(Error::Inadmissible("non-finite flux input".into()));
        }
        let mut f = [[0.0; MAX_VARS]; 3];
        match &self.kind {
            ModelKind::Advection { velocity, diffusivity } => {
                for a in 0..dim {
                    f[a][0] = velocity[a] * u[0] - diffusivity * g[a][0];
                }
                Ok(f)
            }
            _ => {
                if u[0] <= 0.0 {
                    return Err(Error::Inadmissible(format!("density {} <= 0", u[0])));
                }
                self.fluid_flux(u, g, dim, &mut f);
                Ok(f)
            }
        }
    }

    fn fluid_flux(&self, u: &State, g: &Grad, dim: usize, f: &mut Flux) {
        let mhd = self.is_mhd();
        let prm = &self.params;
        let rho = u[0];
        let irho = 1.0 / rho;
        let v = [u[1] * irho, u[2] * irho, u[3] * irho];
        let p = self.pressure(u);
        let b = if mhd { [u[5], u[6], u[7]] } else { [0.0; 3] };
        let b2 = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];

        // Velocity gradient dv[a][c] = ∂_a v_c.
        let mut dv = [[0.0; 3]; 3];
        let viscous = prm.mu > 0.0;
        let kappa = prm.kappa();
        let conduct = kappa > 0.0;
        if viscous || conduct {
            for a in 0..dim {
                for c in 0..3 {
                    dv[a][c] = (g[a][1 + c] - v[c] * g[a][0]) * irho;
                }
            }
        }
        let mut sigma = [[0.0; 3]; 3];
        if viscous {
            let div = dv[0][0] + dv[1][1] + dv[2][2];
            for a in 0..3 {
                for c in 0..3 {
                    sigma[a][c] = prm.mu * (dv[a][c] + dv[c][a]);
                }
                sigma[a][a] -= prm.mu * 2.0 / 3.0 * div;
            }
        }
        let gm1 = prm.gamma - 1.0;
        let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let e_tot = u[4];
        for a in 0..dim {
            let ga = &g[a];
            let fa = &mut f[a];
            fa[0] = u[1 + a];
            for c in 0..3 {
                let mut t = u[1 + a] * v[c] - sigma[a][c];
                if mhd {
                    t -= b[a] * b[c] / (4.0 * PI);
                }
                fa[1 + c] = t;
            }
            fa[1 + a] += p;
            if mhd {
                fa[1 + a] += b2 / (8.0 * PI);
            }
            // v · ((ρE + p) I − σ − β) along axis a.
            let mut en = v[a] * (e_tot + p);
            for c in 0..3 {
                en -= v[c] * sigma[c][a];
            }
            if mhd {
                let vb = v[0] * b[0] + v[1] * b[1] + v[2] * b[2];
                en += v[a] * b2 / (8.0 * PI) - vb * b[a] / (4.0 * PI);
            }
            if conduct {
                let mut dp = ga[4] - (v[0] * ga[1] + v[1] * ga[2] + v[2] * ga[3]) + 0.5 * v2 * ga[0];
                if mhd {
                    dp -= (b[0] * ga[5] + b[1] * ga[6] + b[2] * ga[7]) / (4.0 * PI);
                }
                dp *= gm1;
                let dt = (dp * rho - p * ga[0]) / (rho * rho * prm.rgas);
                en -= kappa * dt;
            }
            if mhd {
                for c in 0..3 {
                    let curl = g[a][5 + c] - if c < dim { g[c][5 + a] } else { 0.0 };
                    fa[5 + c] = b[c] * v[a] - v[c] * b[a] - prm.eta * curl;
                    en -= prm.eta / (4.0 * PI) * b[c] * curl;
                }
                fa[5 + a] += u[8];
                fa[8] = prm.ch * prm.ch * b[a];
            }
            fa[4] = en;
        }
    }

    /// Largest convective signal speed along the unit normal `n`.
    pub fn max_convective_speed(&self, u: &State, n: &[f64; 3]) -> Result<f64> {
        match &self.kind {
            ModelKind::Advection { velocity, .. } => {
                Ok((velocity[0] * n[0] + velocity[1] * n[1] + velocity[2] * n[2]).abs())
            }
            _ => {
                let w = self.cons_to_prim(u)?;
                let rho = w[0];
                let vn = w[1] * n[0] + w[2] * n[1] + w[3] * n[2];
                let c2 = self.params.gamma * w[4] / rho;
                if !self.is_mhd() {
                    return Ok(vn.abs() + c2.sqrt());
                }
                let b2 = (w[5] * w[5] + w[6] * w[6] + w[7] * w[7]) / (4.0 * PI * rho);
                let bn = w[5] * n[0] + w[6] * n[1] + w[7] * n[2];
                let bn2 = bn * bn / (4.0 * PI * rho);
                let s = c2 + b2;
                let disc = (s * s - 4.0 * c2 * bn2).max(0.0);
                let cf = (0.5 * (s + disc.sqrt())).sqrt();
                Ok((vn.abs() + cf).max(self.params.ch))
            }
        }
    }

    /// Upper bound of the parabolic eigenvalues.
    pub fn max_viscous_speed(&self, u: &State) -> Result<f64> {
        match &self.kind {
            ModelKind::Advection { diffusivity, .. } => Ok(*diffusivity),
            _ => {
                let w = self.cons_to_prim(u)?;
                let rho = w[0];
                let prm = &self.params;
                let visc = 4.0 * prm.mu / (3.0 * rho);
                let heat = prm.kappa() * (prm.gamma - 1.0) / (rho * prm.rgas);
                let res = if self.is_mhd() { prm.eta } else { 0.0 };
                Ok(visc.max(heat).max(res))
            }
        }
    }

    /// Axis-aligned convenience wrapper.
    pub fn max_convective_speed_axis(&self, u: &State, axis: usize) -> Result<f64> {
        let mut n = [0.0; 3];
        n[axis] = 1.0;
        self.max_convective_speed(u, &n)
    }

    /// Variables whose extrema drive the discrete maximum principle when the
    /// default subset is selected.
    pub fn dmp_default_vars(&self) -> &'static [usize] {
        match self.kind {
            ModelKind::Cns => &[0, 4],
            ModelKind::Vrmhd => &[0, 4],
            ModelKind::Advection { .. } => &[0],
        }
    }
}

pub fn state_from(slice: &[f64]) -> State {
    let mut s = ZERO_STATE;
    s[..slice.len()].copy_from_slice(slice);
    s
}
