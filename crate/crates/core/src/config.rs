//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::amr::Indicator;
use crate::error::{Error, Result};
use crate::limiter::{DmpVars, FvScheme};
use crate::scenarios::{build_scenario, ForcedComponent, Scenario, ScenarioOverrides};
use crate::solver::SolverOptions;

/// Diagnostics columns that can be selected with `diagnostics`.
pub const DIAGNOSTIC_COLUMNS: &[&str] = &[
    "mass",
    "momentum",
    "energy",
    "kinetic",
    "dissipation",
    "divb",
    "limited_fraction",
    "active_cells",
];

#[derive(Clone, Debug)]
pub struct OutputOptions {
    pub dir: PathBuf,
    /// Snapshot every this many coarse steps; 0 disables step-based output.
    pub every: usize,
    /// Snapshot whenever simulated time crosses a multiple of this; 0 disables.
    pub interval: f64,
    /// Diagnostics row every this many steps.
    pub diagnostics_every: usize,
    pub diagnostics: Vec<String>,
    pub snapshots: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions {
            dir: PathBuf::from("out"),
            every: 0,
            interval: 0.0,
            diagnostics_every: 1,
            diagnostics: DIAGNOSTIC_COLUMNS.iter().map(|s| s.to_string()).collect(),
            snapshots: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scenario: String,
    pub overrides: ScenarioOverrides,
    pub solver: SolverOptions,
    pub t_end: Option<f64>,
    pub max_steps: Option<usize>,
    pub threads: Option<usize>,
    pub output: OutputOptions,
}

const KEYS: &[&str] = &[
    "scenario",
    "degree",
    "order",
    "cfl",
    "t_end",
    "max_steps",
    "threads",
    "nx",
    "ny",
    "nz",
    "gamma",
    "mu",
    "pr",
    "eta",
    "ch",
    "pde",
    "forcing",
    "limiter.enabled",
    "limiter.scheme",
    "limiter.delta0",
    "limiter.eps",
    "limiter.dmp_vars",
    "predictor.max_iter",
    "predictor.tol",
    "amr.lmax",
    "amr.r",
    "amr.chiref",
    "amr.chirec",
    "amr.eps",
    "amr.indicator",
    "amr.interval",
    "output.dir",
    "output.every",
    "output.dt",
    "output.snapshots",
    "diagnostics",
    "diagnostics.every",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", ln + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", ln + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", ln + 1)));
        }
    }
    Ok(map)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<RunConfig> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    /// Applies `key=value` overrides on top of a parsed file.
    pub fn from_text_with(text: &str, overrides: &[String]) -> Result<RunConfig> {
        let mut map = parse_pairs(text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not `key=value`")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_pairs(&map)
    }

    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<RunConfig> {
        for k in map.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        if map.contains_key("degree") && map.contains_key("order") {
            return Err(Error::Config("`degree` and `order` are synonyms; give only one".into()));
        }
        let get = |k: &str| map.get(k).map(|s| s.as_str());
        let name = get("scenario").ok_or_else(|| Error::Config("missing `scenario`".into()))?;
        let probe = build_scenario(name, &ScenarioOverrides::default())?;
        let d = &probe.defaults;

        let mut ov = ScenarioOverrides::default();
        for (a, k) in ["nx", "ny", "nz"].iter().enumerate() {
            if let Some(v) = get(k) {
                ov.base[a] = Some(parse(k, v)?);
            }
        }
        let f = |k: &str| -> Result<Option<f64>> { get(k).map(|v| parse::<f64>(k, v)).transpose() };
        ov.t_end = f("t_end")?;
        ov.gamma = f("gamma")?;
        ov.mu = f("mu")?;
        ov.pr = f("pr")?;
        ov.eta = f("eta")?;
        ov.ch = f("ch")?;
        ov.pde = get("pde").map(str::to_string);
        ov.forcing = match get("forcing") {
            None => None,
            Some("vertical") => Some(ForcedComponent::Vertical),
            Some("streamwise") => Some(ForcedComponent::Streamwise),
            Some(v) => return Err(Error::Config(format!("`forcing`: expected vertical | streamwise, got `{v}`"))),
        };

        let mut s = SolverOptions { degree: d.degree, refine: d.refine, ..SolverOptions::default() };
        s.limiter.scheme = d.scheme;
        s.amr.lmax = d.lmax;
        s.amr.indicator = d.indicator;
        if let Some(v) = get("degree").or(get("order")) {
            s.degree = parse("degree", v)?;
        }
        s.cfl = match get("cfl") {
            Some(v) => parse("cfl", v)?,
            None => crate::corrector::default_cfl(s.degree),
        };
        if let Some(v) = get("limiter.enabled") {
            s.limiter.enabled = parse_bool("limiter.enabled", v)?;
        }
        if let Some(v) = get("limiter.scheme") {
            s.limiter.scheme = FvScheme::from_str(v).map_err(Error::Config)?;
        }
        if let Some(v) = f("limiter.delta0")? {
            s.limiter.delta0 = v;
        }
        if let Some(v) = f("limiter.eps")? {
            s.limiter.eps = v;
        }
        if let Some(v) = get("limiter.dmp_vars") {
            s.limiter.dmp_vars = match v {
                "default" => DmpVars::Default,
                "all" => DmpVars::All,
                _ => return Err(Error::Config(format!("`limiter.dmp_vars`: expected default | all, got `{v}`"))),
            };
        }
        if let Some(v) = get("predictor.max_iter") {
            s.predictor.max_iter = Some(parse("predictor.max_iter", v)?);
        }
        if let Some(v) = f("predictor.tol")? {
            s.predictor.tol = v;
        }
        if let Some(v) = get("amr.lmax") {
            s.amr.lmax = parse("amr.lmax", v)?;
        }
        if let Some(v) = get("amr.r") {
            s.refine = parse("amr.r", v)?;
        }
        if let Some(v) = f("amr.chiref")? {
            s.amr.chi_ref = v;
        }
        if let Some(v) = f("amr.chirec")? {
            s.amr.chi_rec = v;
        }
        if let Some(v) = f("amr.eps")? {
            s.amr.eps = v;
        }
        if let Some(v) = get("amr.indicator") {
            s.amr.indicator = Indicator::from_str(v).map_err(Error::Config)?;
        }
        if let Some(v) = get("amr.interval") {
            s.amr.interval = parse("amr.interval", v)?;
        }
        s.validate()?;

        let mut out = OutputOptions::default();
        if let Some(v) = get("output.dir") {
            out.dir = PathBuf::from(v);
        }
        if let Some(v) = get("output.every") {
            out.every = parse("output.every", v)?;
        }
        if let Some(v) = f("output.dt")? {
            if !(v >= 0.0) {
                return Err(Error::Config("`output.dt` must be non-negative".into()));
            }
            out.interval = v;
        }
        if let Some(v) = get("output.snapshots") {
            out.snapshots = parse_bool("output.snapshots", v)?;
        }
        if let Some(v) = get("diagnostics.every") {
            out.diagnostics_every = parse("diagnostics.every", v)?;
            if out.diagnostics_every == 0 {
                return Err(Error::Config("`diagnostics.every` must be positive".into()));
            }
        }
        if let Some(v) = get("diagnostics") {
            let cols: Vec<String> = v.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect();
            if cols.len() == 1 && cols[0] == "all" {
                out.diagnostics = DIAGNOSTIC_COLUMNS.iter().map(|s| s.to_string()).collect();
            } else {
                for c in &cols {
                    if !DIAGNOSTIC_COLUMNS.contains(&c.as_str()) {
                        return Err(Error::Config(format!("unknown diagnostics column `{c}`")));
                    }
                }
                out.diagnostics = cols;
            }
        }

        let max_steps = get("max_steps").map(|v| parse("max_steps", v)).transpose()?;
        let threads = get("threads").map(|v| parse::<usize>("threads", v)).transpose()?;
        if threads == Some(0) {
            return Err(Error::Config("`threads` must be positive".into()));
        }
        let cfg = RunConfig {
            scenario: name.to_string(),
            t_end: ov.t_end,
            overrides: ov,
            solver: s,
            max_steps,
            threads,
            output: out,
        };
        cfg.scenario()?;
        Ok(cfg)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        build_scenario(&self.scenario, &self.overrides)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_applies_defaults() {
        let c = RunConfig::from_text("# sod\nscenario = sod\nnx = 64  # cells\namr.lmax=1\n").unwrap();
        assert_eq!(c.scenario, "sod");
        assert_eq!(c.overrides.base[0], Some(64));
        assert_eq!(c.solver.amr.lmax, 1);
        assert_eq!(c.solver.degree, 3);
        assert_eq!(c.scenario().unwrap().base[0], 64);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(RunConfig::from_text("scenario = sod\nfoo = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("scenario = sod\ncfl"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("scenario = sod\ncfl = 1.5"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("scenario = nope"), Err(Error::UnknownScenario(_))));
        assert!(RunConfig::from_text("scenario = sod\ngamma = 0.9").is_err());
        assert!(RunConfig::from_text("scenario = sod\ndegree = 2\norder = 2").is_err());
        assert!(RunConfig::from_text("scenario = sod\namr.chiref = 0.01").is_err());
    }

    #[test]
    fn command_line_overrides_win() {
        let c = RunConfig::from_text_with("scenario = sod\nnx = 10", &["nx=20".into(), "limiter.scheme=tvd_prim".into()]).unwrap();
        assert_eq!(c.overrides.base[0], Some(20));
        assert_eq!(c.solver.limiter.scheme, FvScheme::TvdPrim);
    }
}
