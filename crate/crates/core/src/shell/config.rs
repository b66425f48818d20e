//! Sectioned `key = value` run configuration.
//!
//! Grammar (one item per line, `#` starts a comment anywhere):
//!
//! ```text
//! line    = blank | section | entry
//! section = "[" name "]"
//! entry   = key "=" value
//! value   = word { whitespace word }
//! ```
//!
//! Vectors are whitespace-separated numbers with one entry per axis. Keys may
//! appear in any order within their section; `ball` and `box` in `[geometry]`
//! may repeat, every other key at most once. Absent keys keep their default;
//! a `[geometry]` section, even an empty one, replaces the default solids.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::constitutive::{
    auto_cutoff_eps, FluidParams, MaterialSpec, PhaseGeometry, Region, SolidModel, SolidParams,
};
use crate::engine::{CouplingConfig, SimConfig};
use crate::fields::{Grid, Interpolation};
use crate::kinematics::{Mat, Point};
use crate::momentum::SolverConfig;
use crate::transport::TransportConfig;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{field}: {constraint}")]
    Validation { field: String, constraint: String },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Every problem found in one configuration.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct ConfigErrors(pub Vec<ConfigError>);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CutoffEps {
    /// A quarter of `min(det F0, 1/|F0|)` over the initial state.
    Auto,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegionSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// A run configuration before it is fixed to a dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub dt: f64,
    pub n_steps: usize,
    pub dump_every: usize,
    pub solid: SolidParams,
    pub fluid: FluidParams,
    pub nu: f64,
    pub s_exp: f64,
    pub eps: CutoffEps,
    pub gravity: Vec<f64>,
    pub solids: Vec<RegionSpec>,
    pub solver: SolverConfig,
    pub transport: TransportConfig,
    pub coupling: CouplingConfig,
    pub out_dir: PathBuf,
    pub audit_subsamples: usize,
}

impl Default for RunConfig {
    /// The solid-disk-in-fluid setup.
    fn default() -> Self {
        Self {
            dim: 2,
            cells: vec![32, 32],
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
            dt: 0.02,
            n_steps: 10,
            dump_every: 5,
            solid: SolidParams::default(),
            fluid: FluidParams::default(),
            nu: 1e-3,
            s_exp: 4.0,
            eps: CutoffEps::Auto,
            gravity: vec![0.0, -1.0],
            solids: vec![RegionSpec::Ball {
                center: vec![0.5, 0.6],
                radius: 0.2,
            }],
            solver: SolverConfig::default(),
            transport: TransportConfig::default(),
            coupling: CouplingConfig::default(),
            out_dir: PathBuf::from("out"),
            audit_subsamples: 8,
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["dim", "cells", "lower", "upper"]),
    ("time", &["dt", "n_steps", "dump_every"]),
    (
        "solid",
        &["model", "bulk_modulus", "shear_modulus", "mu", "lambda", "density"],
    ),
    ("fluid", &["stiffness", "kappa", "mu", "lambda", "density"]),
    ("material", &["nu", "s_exp", "eps", "gravity"]),
    ("geometry", &["ball", "box"]),
    (
        "solver",
        &["tol_abs", "tol_rel", "max_iters", "line_search", "hessian_floor", "cg_max_iters"],
    ),
    ("transport", &["cfl_max", "interpolation"]),
    ("coupling", &["picard_iters", "picard_tol"]),
    ("output", &["dir", "audit_subsamples"]),
];

struct Entry {
    line: usize,
    section: &'static str,
    key: &'static str,
    value: String,
}

fn lex(text: &str, errors: &mut Vec<ConfigError>) -> (Vec<Entry>, Vec<&'static str>) {
    let mut out: Vec<Entry> = Vec::new();
    let mut seen = Vec::new();
    let mut section: Option<(&'static str, &'static [&'static str])> = None;
    let mut err = |line: usize, message: String| errors.push(ConfigError::Parse { line, message });
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                err(line, format!("malformed section header `{body}`"));
                continue;
            };
            match SECTIONS.iter().find(|(s, _)| *s == name.trim()) {
                Some(&(s, keys)) => {
                    section = Some((s, keys));
                    seen.push(s);
                }
                None => {
                    err(line, format!("unknown section [{}]", name.trim()));
                    section = None;
                }
            }
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            err(line, format!("expected `key = value`, found `{body}`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some((sname, keys)) = section else {
            err(line, format!("`{key}` appears outside a known section"));
            continue;
        };
        let Some(&key) = keys.iter().find(|k| **k == key) else {
            err(line, format!("unknown key `{key}` in [{sname}]"));
            continue;
        };
        if value.is_empty() {
            err(line, format!("`{key}` has no value"));
            continue;
        }
        let repeatable = sname == "geometry";
        if !repeatable {
            if let Some(prev) = out.iter().find(|e| e.section == sname && e.key == key) {
                err(line, format!("duplicate key `{key}` in [{sname}] (first on line {})", prev.line));
                continue;
            }
        }
        out.push(Entry {
            line,
            section: sname,
            key,
            value: value.to_string(),
        });
    }
    (out, seen)
}

fn number<T: std::str::FromStr>(e: &Entry) -> Result<T, ConfigError> {
    e.value.parse().map_err(|_| ConfigError::Parse {
        line: e.line,
        message: format!("`{}`: cannot parse `{}` as a number", e.key, e.value),
    })
}

fn numbers(e: &Entry, len: usize) -> Result<Vec<f64>, ConfigError> {
    let v: Result<Vec<f64>, _> = e.value.split_whitespace().map(str::parse).collect();
    match v {
        Ok(v) if v.len() == len => Ok(v),
        Ok(v) => Err(ConfigError::Parse {
            line: e.line,
            message: format!("`{}`: expected {len} numbers, found {}", e.key, v.len()),
        }),
        Err(_) => Err(ConfigError::Parse {
            line: e.line,
            message: format!("`{}`: cannot parse `{}` as numbers", e.key, e.value),
        }),
    }
}

fn boolean(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::Parse {
            line: e.line,
            message: format!("`{}`: expected true or false, found `{}`", e.key, e.value),
        }),
    }
}

fn apply(cfg: &mut RunConfig, e: &Entry) -> Result<(), ConfigError> {
    let d = cfg.dim;
    match (e.section, e.key) {
        ("grid", "dim") => {}
        ("grid", "cells") => {
            let v: Result<Vec<usize>, _> = e.value.split_whitespace().map(str::parse).collect();
            cfg.cells = match v {
                Ok(v) if v.len() == 1 => vec![v[0]; d],
                Ok(v) if v.len() == d => v,
                _ => {
                    return Err(ConfigError::Parse {
                        line: e.line,
                        message: format!("`cells`: expected 1 or {d} non-negative integers"),
                    })
                }
            };
        }
        ("grid", "lower") => cfg.lower = numbers(e, d)?,
        ("grid", "upper") => cfg.upper = numbers(e, d)?,
        ("time", "dt") => cfg.dt = number(e)?,
        ("time", "n_steps") => cfg.n_steps = number(e)?,
        ("time", "dump_every") => cfg.dump_every = number(e)?,
        ("solid", "model") => {
            cfg.solid.model = SolidModel::from_name(&e.value).ok_or_else(|| ConfigError::Parse {
                line: e.line,
                message: format!(
                    "`model`: unknown solid model `{}` (neo_hookean, neo_hookean_log, st_venant_kirchhoff)",
                    e.value
                ),
            })?
        }
        ("solid", "bulk_modulus") => cfg.solid.bulk_modulus = number(e)?,
        ("solid", "shear_modulus") => cfg.solid.shear_modulus = number(e)?,
        ("solid", "mu") => cfg.solid.mu = number(e)?,
        ("solid", "lambda") => cfg.solid.lambda = number(e)?,
        ("solid", "density") => cfg.solid.density = number(e)?,
        ("fluid", "stiffness") => cfg.fluid.stiffness = number(e)?,
        ("fluid", "kappa") => cfg.fluid.kappa = number(e)?,
        ("fluid", "mu") => cfg.fluid.mu = number(e)?,
        ("fluid", "lambda") => cfg.fluid.lambda = number(e)?,
        ("fluid", "density") => cfg.fluid.density = number(e)?,
        ("material", "nu") => cfg.nu = number(e)?,
        ("material", "s_exp") => cfg.s_exp = number(e)?,
        ("material", "eps") => {
            cfg.eps = if e.value == "auto" {
                CutoffEps::Auto
            } else {
                CutoffEps::Value(number(e)?)
            }
        }
        ("material", "gravity") => cfg.gravity = numbers(e, d)?,
        ("geometry", "ball") => {
            let v = numbers(e, d + 1)?;
            cfg.solids.push(RegionSpec::Ball {
                center: v[..d].to_vec(),
                radius: v[d],
            });
        }
        ("geometry", "box") => {
            let v = numbers(e, 2 * d)?;
            cfg.solids.push(RegionSpec::Box {
                lo: v[..d].to_vec(),
                hi: v[d..].to_vec(),
            });
        }
        ("solver", "tol_abs") => cfg.solver.tol_abs = number(e)?,
        ("solver", "tol_rel") => cfg.solver.tol_rel = number(e)?,
        ("solver", "max_iters") => cfg.solver.max_iters = number(e)?,
        ("solver", "line_search") => cfg.solver.line_search = boolean(e)?,
        ("solver", "hessian_floor") => cfg.solver.hessian_floor = number(e)?,
        ("solver", "cg_max_iters") => cfg.solver.cg_max_iters = number(e)?,
        ("transport", "cfl_max") => cfg.transport.cfl_max = number(e)?,
        ("transport", "interpolation") => {
            cfg.transport.interpolation =
                Interpolation::from_name(&e.value).ok_or_else(|| ConfigError::Parse {
                    line: e.line,
                    message: format!("`interpolation`: expected linear or cubic, found `{}`", e.value),
                })?
        }
        ("coupling", "picard_iters") => cfg.coupling.picard_iters = number(e)?,
        ("coupling", "picard_tol") => cfg.coupling.picard_tol = number(e)?,
        ("output", "dir") => cfg.out_dir = PathBuf::from(&e.value),
        ("output", "audit_subsamples") => cfg.audit_subsamples = number(e)?,
        _ => unreachable!("lexer only admits listed keys"),
    }
    Ok(())
}

/// Defaults for dimension `d`: the disk setup, lifted to 3D as a ball.
pub fn defaults(dim: usize) -> RunConfig {
    let base = RunConfig::default();
    if dim == 2 {
        return base;
    }
    let mut gravity = vec![0.0; dim];
    gravity[dim - 1] = -1.0;
    let mut center = vec![0.5; dim];
    center[dim - 1] = 0.6;
    RunConfig {
        dim,
        cells: vec![32; dim],
        lower: vec![0.0; dim],
        upper: vec![1.0; dim],
        gravity,
        solids: vec![RegionSpec::Ball {
            center,
            radius: 0.2,
        }],
        ..base
    }
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let (entries, seen) = lex(text, &mut errors);
    let dim = match entries.iter().find(|e| e.section == "grid" && e.key == "dim") {
        None => 2,
        Some(e) => match e.value.as_str() {
            "2" => 2,
            "3" => 3,
            other => {
                errors.push(ConfigError::Parse {
                    line: e.line,
                    message: format!("`dim`: expected 2 or 3, found `{other}`"),
                });
                return Err(ConfigErrors(errors));
            }
        },
    };
    let mut cfg = defaults(dim);
    // an explicit [geometry] section replaces the default solids
    if seen.contains(&"geometry") {
        cfg.solids.clear();
    }
    for e in &entries {
        if let Err(err) = apply(&mut cfg, e) {
            errors.push(err);
        }
    }
    errors.extend(cfg.violations());
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }])
    })?;
    parse_config_str(&text)
}

fn validation(field: &str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        constraint: constraint.into(),
    }
}

fn point<const D: usize>(v: &[f64]) -> Point<D> {
    std::array::from_fn(|k| v[k])
}

impl RunConfig {
    /// Constraint violations; shape errors are reported by the parser.
    pub fn violations(&self) -> Vec<ConfigError> {
        let mut v = Vec::new();
        let d = self.dim;
        if self.cells.len() != d || self.lower.len() != d || self.upper.len() != d || self.gravity.len() != d {
            v.push(validation("grid", format!("vectors must have {d} entries")));
            return v;
        }
        if self.cells.iter().any(|&c| c < 4) {
            v.push(validation("grid.cells", "cells must be at least 4 per axis"));
        }
        if (0..d).any(|k| !(self.upper[k] > self.lower[k])) {
            v.push(validation("grid.upper", "upper must exceed lower on every axis"));
        }
        if !(self.dt > 0.0) {
            v.push(validation("time.dt", "dt must be positive"));
        }
        if self.n_steps == 0 {
            v.push(validation("time.n_steps", "n_steps must be at least 1"));
        }
        if !(self.transport.cfl_max > 0.0) {
            v.push(validation("transport.cfl_max", "cfl_max must be positive"));
        }
        if self.coupling.picard_iters == 0 {
            v.push(validation("coupling.picard_iters", "picard_iters must be at least 1"));
        }
        if !(self.coupling.picard_tol >= 0.0) {
            v.push(validation("coupling.picard_tol", "picard_tol must be non-negative"));
        }
        if self.audit_subsamples > 64 {
            v.push(validation("output.audit_subsamples", "audit_subsamples must not exceed 64"));
        }
        for r in &self.solids {
            let ok = match r {
                RegionSpec::Ball { center, radius } => center.len() == d && *radius > 0.0,
                RegionSpec::Box { lo, hi } => lo.len() == d && hi.len() == d && (0..d).all(|k| hi[k] > lo[k]),
            };
            if !ok {
                v.push(validation("geometry", "solid regions must be non-empty"));
            }
        }
        for (field, what) in self.solver.violations() {
            v.push(validation(field, what));
        }
        let material = match d {
            2 => self.material::<2>().violations(),
            _ => self.material::<3>().violations(),
        };
        for (field, what) in material {
            v.push(validation(field, what));
        }
        v
    }

    fn material<const D: usize>(&self) -> MaterialSpec<D> {
        let eps = match self.eps {
            CutoffEps::Value(e) => e,
            // the initial map is the identity
            CutoffEps::Auto => auto_cutoff_eps(&[Mat::<D>::identity()]),
        };
        MaterialSpec {
            solid: self.solid,
            fluid: self.fluid,
            nu: self.nu,
            s_exp: self.s_exp,
            eps,
            gravity: point(&self.gravity),
            geometry: PhaseGeometry {
                lo: point(&self.lower),
                hi: point(&self.upper),
                solids: self
                    .solids
                    .iter()
                    .map(|r| match r {
                        RegionSpec::Ball { center, radius } => Region::Ball {
                            center: point(center),
                            radius: *radius,
                        },
                        RegionSpec::Box { lo, hi } => Region::Box {
                            lo: point(lo),
                            hi: point(hi),
                        },
                    })
                    .collect(),
            },
        }
    }

    /// Resolve to a fixed dimension. Panics if `D != self.dim`; only call on
    /// validated configs.
    pub fn to_sim<const D: usize>(&self) -> SimConfig<D> {
        assert_eq!(D, self.dim, "config is {}-dimensional", self.dim);
        SimConfig {
            grid: Grid::new(std::array::from_fn(|k| self.cells[k]), point(&self.lower), point(&self.upper)),
            material: self.material(),
            solver: self.solver.clone(),
            transport: self.transport.clone(),
            coupling: self.coupling.clone(),
            dt: self.dt,
            n_steps: self.n_steps,
            dump_every: self.dump_every,
            audit_subsamples: self.audit_subsamples,
        }
    }

    /// Annotated text that parses back to `self`.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "# reftrack run configuration\n");
        let _ = writeln!(w, "[grid]");
        let _ = writeln!(w, "dim = {}            # 2 or 3", self.dim);
        let cells: Vec<String> = self.cells.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(w, "cells = {}     # cells per axis (one value applies to all)", cells.join(" "));
        let _ = writeln!(w, "lower = {}", join(&self.lower));
        let _ = writeln!(w, "upper = {}\n", join(&self.upper));
        let _ = writeln!(w, "[time]");
        let _ = writeln!(w, "dt = {:?}", self.dt);
        let _ = writeln!(w, "n_steps = {}", self.n_steps);
        let _ = writeln!(w, "dump_every = {}     # field dump period in steps, 0 = never\n", self.dump_every);
        let _ = writeln!(w, "[solid]");
        let _ = writeln!(w, "model = {}     # neo_hookean | neo_hookean_log | st_venant_kirchhoff", self.solid.model.name());
        let _ = writeln!(w, "bulk_modulus = {:?}", self.solid.bulk_modulus);
        let _ = writeln!(w, "shear_modulus = {:?}", self.solid.shear_modulus);
        let _ = writeln!(w, "mu = {:?}             # Kelvin-Voigt shear viscosity", self.solid.mu);
        let _ = writeln!(w, "lambda = {:?}", self.solid.lambda);
        let _ = writeln!(w, "density = {:?}        # referential\n", self.solid.density);
        let _ = writeln!(w, "[fluid]");
        let _ = writeln!(w, "stiffness = {:?}      # p = stiffness / J^kappa", self.fluid.stiffness);
        let _ = writeln!(w, "kappa = {:?}          # must exceed 2", self.fluid.kappa);
        let _ = writeln!(w, "mu = {:?}", self.fluid.mu);
        let _ = writeln!(w, "lambda = {:?}", self.fluid.lambda);
        let _ = writeln!(w, "density = {:?}\n", self.fluid.density);
        let _ = writeln!(w, "[material]");
        let _ = writeln!(w, "nu = {:?}         # hyperviscosity", self.nu);
        let _ = writeln!(w, "s_exp = {:?}          # hyperviscosity exponent, must exceed dim", self.s_exp);
        match self.eps {
            CutoffEps::Auto => {
                let _ = writeln!(w, "eps = auto         # cut-off parameter or `auto`");
            }
            CutoffEps::Value(e) => {
                let _ = writeln!(w, "eps = {e:?}       # cut-off parameter or `auto`");
            }
        }
        let _ = writeln!(w, "gravity = {}\n", join(&self.gravity));
        let _ = writeln!(w, "[geometry]");
        let _ = writeln!(w, "# solid regions, repeatable; everything else is fluid");
        let _ = writeln!(w, "# ball = center... radius");
        let _ = writeln!(w, "# box = lo... hi...");
        for r in &self.solids {
            let _ = match r {
                RegionSpec::Ball { center, radius } => writeln!(w, "ball = {} {radius:?}", join(center)),
                RegionSpec::Box { lo, hi } => writeln!(w, "box = {} {}", join(lo), join(hi)),
            };
        }
        let _ = writeln!(w);
        let _ = writeln!(w, "[solver]");
        let _ = writeln!(w, "tol_abs = {:?}", self.solver.tol_abs);
        let _ = writeln!(w, "tol_rel = {:?}", self.solver.tol_rel);
        let _ = writeln!(w, "max_iters = {}", self.solver.max_iters);
        let _ = writeln!(w, "line_search = {}", self.solver.line_search);
        let _ = writeln!(w, "hessian_floor = {:?}", self.solver.hessian_floor);
        let _ = writeln!(w, "cg_max_iters = {}\n", self.solver.cg_max_iters);
        let _ = writeln!(w, "[transport]");
        let _ = writeln!(w, "cfl_max = {:?}", self.transport.cfl_max);
        let _ = writeln!(w, "interpolation = {}   # linear | cubic\n", self.transport.interpolation.name());
        let _ = writeln!(w, "[coupling]");
        let _ = writeln!(w, "picard_iters = {}", self.coupling.picard_iters);
        let _ = writeln!(w, "picard_tol = {:?}\n", self.coupling.picard_tol);
        let _ = writeln!(w, "[output]");
        let _ = writeln!(w, "dir = {}", self.out_dir.display());
        let _ = writeln!(w, "audit_subsamples = {}   # per-axis phase samples in the stored energy", self.audit_subsamples);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for d in [2, 3] {
            let cfg = defaults(d);
            assert!(cfg.violations().is_empty(), "{:?}", cfg.violations());
            assert_eq!(parse_config_str(&cfg.to_text()).unwrap(), cfg);
        }
    }

    #[test]
    fn kappa_and_s_exp_constraints_are_named() {
        let text = "[fluid]\nkappa = 1.5\n[material]\ns_exp = 2\n";
        let errs = parse_config_str(text).unwrap_err().0;
        let msgs: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
        assert!(msgs.iter().any(|m| m.contains("kappa must exceed 2")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("s_exp must exceed d = 2")), "{msgs:?}");
    }

    #[test]
    fn all_errors_are_collected() {
        let text = "[grid]\ncells = 2\nbogus = 1\n[time]\ndt = -1\ndt = 3\n[nowhere]\n[solver]\nline_search = maybe\n";
        let errs = parse_config_str(text).unwrap_err().0;
        let lines: Vec<usize> = errs
            .iter()
            .filter_map(|e| match e {
                ConfigError::Parse { line, .. } => Some(*line),
                _ => None,
            })
            .collect();
        assert_eq!(lines, vec![3, 6, 7, 9]);
        let fields: Vec<&str> = errs
            .iter()
            .filter_map(|e| match e {
                ConfigError::Validation { field, .. } => Some(field.as_str()),
                _ => None,
            })
            .collect();
        assert!(fields.contains(&"grid.cells") && fields.contains(&"time.dt"), "{fields:?}");
    }

    #[test]
    fn vectors_follow_dim() {
        assert!(parse_config_str("[grid]\ndim = 3\n[material]\ngravity = 0 -1\n").is_err());
        let cfg = parse_config_str(
            "[grid]\ndim = 3\ncells = 8\n[material]\ngravity = 0 0 -2\n[geometry]\nbox = 0.2 0.2 0.2 0.4 0.4 0.4\n",
        )
        .unwrap();
        assert_eq!(cfg.cells, vec![8, 8, 8]);
        let sim = cfg.to_sim::<3>();
        assert_eq!(sim.material.gravity, [0.0, 0.0, -2.0]);
        assert_eq!(sim.material.geometry.solids.len(), 1);
        assert!(parse_config_str("[grid]\ndim = 4\n").is_err());
    }

    #[test]
    fn auto_eps_at_identity() {
        let sim = defaults(2).to_sim::<2>();
        assert!((sim.material.eps - 0.25 / 2f64.sqrt()).abs() < 1e-15);
        let cfg = parse_config_str("[material]\neps = 0.05\n").unwrap();
        assert_eq!(cfg.to_sim::<2>().material.eps, 0.05);
    }
}
