//! Run configuration: flat `key = value` text with `#` comments, merged
//! with command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::Transform;
use crate::error::{Error, Result};

pub const DEFAULT_P_MAX: usize = 4;
pub const DEFAULT_NU_TARGET_VAR: f64 = 25.0;
pub const DEFAULT_HDI_MASS: f64 = 0.95;

/// Where the dof priors are centred.
#[derive(Clone, Debug, PartialEq)]
pub enum NuCenter {
    /// Profile estimates from a short pilot run under a nearly flat dof prior.
    Auto,
    /// One value shared by all components, or one per component.
    Fixed(Vec<f64>),
}

impl FromStr for NuCenter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        parse_list::<f64>(s).map(Self::Fixed)
    }
}

impl fmt::Display for NuCenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Fixed(v) => f.write_str(&join(v)),
        }
    }
}

/// Comma- or whitespace-separated list.
pub fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    let items: Vec<&str> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect();
    if items.is_empty() {
        return Err("empty list".into());
    }
    items
        .iter()
        .map(|t| t.parse::<T>().map_err(|_| format!("cannot parse '{t}'")))
        .collect()
}

/// `"-0.5, 0.5; 1.1; -0.4"` → one coefficient list per component.
pub fn parse_ar_blocks(s: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    s.split(';').map(parse_list::<f64>).collect()
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Every setting a command may read. `None` means "not given"; defaults are
/// applied by the accessors so that merging can tell the two apart.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub column: Option<usize>,
    pub transform: Option<Transform>,
    pub g: Option<Vec<usize>>,
    pub orders: Option<Vec<usize>>,
    pub p_max: Option<usize>,
    pub iterations: Option<usize>,
    pub burnin: Option<usize>,
    pub seed: Option<u64>,
    /// Initial random-walk steps for the AR blocks.
    pub gamma: Option<Vec<f64>>,
    pub adapt: Option<bool>,
    pub nu_center: Option<NuCenter>,
    pub nu_target_var: Option<f64>,
    pub fix_means_to_zero: Option<bool>,
    pub sweeps_per_move: Option<usize>,
    pub reduced_iterations: Option<usize>,
    pub pilot_iterations: Option<usize>,
    pub hdi_mass: Option<f64>,
    pub relabel: Option<bool>,
    pub output: Option<PathBuf>,
    // simulate
    pub preset: Option<String>,
    pub n: Option<usize>,
    pub sim_burnin: Option<usize>,
    /// Custom model, used when no preset is named.
    pub sim_weights: Option<Vec<f64>>,
    pub sim_means: Option<Vec<f64>>,
    pub sim_scales: Option<Vec<f64>>,
    /// AR coefficients per component, components separated by `;`.
    pub sim_ar: Option<Vec<Vec<f64>>>,
    pub sim_dofs: Option<Vec<f64>>,
    // report
    pub trace: Option<PathBuf>,
    pub bins: Option<usize>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("invalid value '{value}' for '{key}'"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("invalid boolean '{value}' for '{key}'")),
    }
}

impl RunConfig {
    /// Parse config text. Unknown keys and duplicate keys are errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', found '{line}'")))?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key '{key}'")));
            }
            cfg.set(key, value).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "column" => self.column = Some(parse_value(key, value)?),
            "transform" => self.transform = Some(value.parse().map_err(|e: Error| e.to_string())?),
            "g" => self.g = Some(parse_list(value)?),
            "orders" => self.orders = Some(parse_list(value)?),
            "p_max" => self.p_max = Some(parse_value(key, value)?),
            "iterations" => self.iterations = Some(parse_value(key, value)?),
            "burnin" => self.burnin = Some(parse_value(key, value)?),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "gamma" => self.gamma = Some(parse_list(value)?),
            "adapt" => self.adapt = Some(parse_bool(key, value)?),
            "nu_center" => self.nu_center = Some(value.parse()?),
            "nu_target_var" => self.nu_target_var = Some(parse_value(key, value)?),
            "fix_means_to_zero" => self.fix_means_to_zero = Some(parse_bool(key, value)?),
            "sweeps_per_move" => self.sweeps_per_move = Some(parse_value(key, value)?),
            "reduced_iterations" => self.reduced_iterations = Some(parse_value(key, value)?),
            "pilot_iterations" => self.pilot_iterations = Some(parse_value(key, value)?),
            "hdi_mass" => self.hdi_mass = Some(parse_value(key, value)?),
            "relabel" => self.relabel = Some(parse_bool(key, value)?),
            "output" => self.output = Some(PathBuf::from(value)),
            "preset" => self.preset = Some(value.to_string()),
            "n" => self.n = Some(parse_value(key, value)?),
            "sim_burnin" => self.sim_burnin = Some(parse_value(key, value)?),
            "sim_weights" => self.sim_weights = Some(parse_list(value)?),
            "sim_means" => self.sim_means = Some(parse_list(value)?),
            "sim_scales" => self.sim_scales = Some(parse_list(value)?),
            "sim_ar" => self.sim_ar = Some(parse_ar_blocks(value)?),
            "sim_dofs" => self.sim_dofs = Some(parse_list(value)?),
            "trace" => self.trace = Some(PathBuf::from(value)),
            "bins" => self.bins = Some(parse_value(key, value)?),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// `self` overridden by every field set in `overrides`.
    pub fn merged(&self, overrides: &RunConfig) -> RunConfig {
        let mut out = self.clone();
        merge_fields!(out, overrides;
            data, column, transform, g, orders, p_max, iterations, burnin, seed, gamma,
            adapt, nu_center, nu_target_var, fix_means_to_zero, sweeps_per_move,
            reduced_iterations, pilot_iterations, hdi_mass, relabel, output, preset, n,
            sim_burnin, sim_weights, sim_means, sim_scales, sim_ar, sim_dofs, trace, bins);
        out
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Usage("a seed is required (--seed or 'seed = ...')".into()))
    }

    pub fn output(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| Error::Usage("an output directory is required (--output)".into()))
    }

    pub fn data(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Usage("an input series is required (--data)".into()))
    }

    pub fn p_max(&self) -> usize {
        self.p_max.unwrap_or(DEFAULT_P_MAX)
    }

    pub fn iterations(&self, default: usize) -> usize {
        self.iterations.unwrap_or(default)
    }

    pub fn burnin(&self, default: usize) -> usize {
        self.burnin.unwrap_or(default)
    }

    pub fn nu_center(&self) -> NuCenter {
        self.nu_center.clone().unwrap_or(NuCenter::Auto)
    }

    pub fn nu_target_var(&self) -> f64 {
        self.nu_target_var.unwrap_or(DEFAULT_NU_TARGET_VAR)
    }

    pub fn hdi_mass(&self) -> f64 {
        self.hdi_mass.unwrap_or(DEFAULT_HDI_MASS)
    }

    pub fn transform(&self) -> Transform {
        self.transform.unwrap_or(Transform::None)
    }

    /// Checks shared by every command: `iterations > burnin`, `p_max ≥ 1`.
    pub fn validate(&self) -> Result<()> {
        if let (Some(it), Some(burn)) = (self.iterations, self.burnin) {
            if it <= burn {
                return Err(Error::Usage(format!(
                    "iterations ({it}) must exceed burnin ({burn})"
                )));
            }
        }
        if self.p_max == Some(0) {
            return Err(Error::Usage("p_max must be at least 1".into()));
        }
        if let Some(g) = &self.g {
            if g.contains(&0) {
                return Err(Error::Usage("g values must be at least 1".into()));
            }
        }
        if let Some(m) = self.hdi_mass {
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::Usage(format!("hdi_mass {m} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// `key = value` text that parses back to the same configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push_str(&format!("{k} = {v}\n"));
            }
        };
        put("data", self.data.as_ref().map(|p| p.display().to_string()));
        put("column", self.column.map(|v| v.to_string()));
        put("transform", self.transform.map(|v| v.to_string()));
        put("g", self.g.as_deref().map(join));
        put("orders", self.orders.as_deref().map(join));
        put("p_max", self.p_max.map(|v| v.to_string()));
        put("iterations", self.iterations.map(|v| v.to_string()));
        put("burnin", self.burnin.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("gamma", self.gamma.as_deref().map(join));
        put("adapt", self.adapt.map(|v| v.to_string()));
        put("nu_center", self.nu_center.as_ref().map(|v| v.to_string()));
        put("nu_target_var", self.nu_target_var.map(|v| v.to_string()));
        put("fix_means_to_zero", self.fix_means_to_zero.map(|v| v.to_string()));
        put("sweeps_per_move", self.sweeps_per_move.map(|v| v.to_string()));
        put("reduced_iterations", self.reduced_iterations.map(|v| v.to_string()));
        put("pilot_iterations", self.pilot_iterations.map(|v| v.to_string()));
        put("hdi_mass", self.hdi_mass.map(|v| v.to_string()));
        put("relabel", self.relabel.map(|v| v.to_string()));
        put("output", self.output.as_ref().map(|p| p.display().to_string()));
        put("preset", self.preset.clone());
        put("n", self.n.map(|v| v.to_string()));
        put("sim_burnin", self.sim_burnin.map(|v| v.to_string()));
        put("sim_weights", self.sim_weights.as_deref().map(join));
        put("sim_means", self.sim_means.as_deref().map(join));
        put("sim_scales", self.sim_scales.as_deref().map(join));
        put(
            "sim_ar",
            self.sim_ar
                .as_ref()
                .map(|b| b.iter().map(|c| join(c)).collect::<Vec<_>>().join("; ")),
        );
        put("sim_dofs", self.sim_dofs.as_deref().map(join));
        put("trace", self.trace.as_ref().map(|p| p.display().to_string()));
        put("bins", self.bins.map(|v| v.to_string()));
        out
    }
}
