//! Experiment configuration: one JSON object, unknown keys rejected.

use std::fmt;
use std::path::Path;

use korteweg::spectral::PeriodicGrid;
use korteweg::PhysicalParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Thresholds,
    PropagatorVerify,
    NormEquivalence,
    FlowCommutator,
    Converge,
    AprioriCheck,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Thresholds => "thresholds",
            Experiment::PropagatorVerify => "propagator_verify",
            Experiment::NormEquivalence => "norm_equivalence",
            Experiment::FlowCommutator => "flow_commutator",
            Experiment::Converge => "converge",
            Experiment::AprioriCheck => "apriori_check",
        }
    }
}

/// A config error tied to the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.reason)
        } else {
            write!(f, "{}: {}", self.path, self.reason)
        }
    }
}

fn usage(path: impl Into<String>, reason: impl Into<String>) -> UsageError {
    UsageError { path: path.into(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSpec {
    pub mu: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub p: f64,
    pub eps: f64,
}

impl Default for ParamsSpec {
    fn default() -> Self {
        ParamsSpec { mu: 1.0, lambda: 0.0, kappa: 1.0, p: 1.0, eps: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { dim: 1, n: 64 }
    }
}

/// Every key is optional; see `docs/config.md` for the per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub params: ParamsSpec,
    #[serde(default)]
    pub grid: GridSpec,
    pub seed: Option<u64>,
    pub eps_list: Option<Vec<f64>>,
    pub j_range: Option<[i32; 2]>,
    pub t_samples: Option<Vec<f64>>,
    /// propagator_verify: sampled modes, and which table to emit.
    pub modes: Option<usize>,
    pub table: Option<String>,
    /// norm_equivalence
    pub fields: Option<usize>,
    pub s: Option<f64>,
    pub norm_gamma: Option<f64>,
    /// flow_commutator
    pub flows: Option<Vec<String>>,
    pub t: Option<f64>,
    pub sigma: Option<f64>,
    /// converge and apriori_check
    pub amplitude: Option<f64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub gamma: Option<f64>,
    pub nu_list: Option<Vec<f64>>,
    pub kappa_list: Option<Vec<f64>>,
    pub p_list: Option<Vec<f64>>,
    pub v_amp: Option<f64>,
}

pub const FLOW_NAMES: [&str; 5] = ["identity", "constant", "shear", "rotation", "random"];
pub const TABLE_NAMES: [&str; 3] = ["modes", "pointwise", "time"];

impl Config {
    pub fn parse(text: &str) -> Result<Config, UsageError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { String::new() } else { path };
            usage(path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Config, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| usage("", format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn physical(&self) -> Result<PhysicalParams, UsageError> {
        let p = &self.params;
        positive("params.mu", p.mu)?;
        if !p.lambda.is_finite() {
            return Err(usage("params.lambda", "must be finite"));
        }
        if !(p.lambda + 2.0 * p.mu > 0.0) {
            return Err(usage("params.lambda", "lambda + 2 mu must be > 0"));
        }
        positive("params.kappa", p.kappa)?;
        positive("params.p", p.p)?;
        positive("params.eps", p.eps)?;
        PhysicalParams::new(p.mu, p.lambda, p.kappa, p.p, p.eps).map_err(|e| usage("params", e.to_string()))
    }

    pub fn periodic_grid(&self) -> Result<PeriodicGrid, UsageError> {
        let g = &self.grid;
        if g.dim != 1 && g.dim != 2 {
            return Err(usage("grid.dim", format!("must be 1 or 2, got {}", g.dim)));
        }
        if g.n < 8 || !g.n.is_power_of_two() {
            return Err(usage("grid.n", format!("must be a power of two >= 8, got {}", g.n)));
        }
        PeriodicGrid::standard(g.dim, g.n).map_err(|e| usage("grid", e.to_string()))
    }

    /// Checks every key before any compute.
    pub fn validate(&self, exp: Experiment) -> Result<(), UsageError> {
        if let Some(e) = self.experiment {
            if e != exp {
                return Err(usage("experiment", format!("config is for {}, not {}", e.name(), exp.name())));
            }
        }
        self.physical()?;
        self.periodic_grid()?;
        for (name, list) in [("eps_list", &self.eps_list), ("nu_list", &self.nu_list), ("kappa_list", &self.kappa_list), ("p_list", &self.p_list)] {
            if let Some(l) = list {
                if l.is_empty() {
                    return Err(usage(name, "must not be empty"));
                }
                for (i, v) in l.iter().enumerate() {
                    positive(&format!("{name}[{i}]"), *v)?;
                }
            }
        }
        if let Some([lo, hi]) = self.j_range {
            if lo > hi {
                return Err(usage("j_range", format!("lower bound {lo} exceeds upper bound {hi}")));
            }
        }
        if let Some(ts) = &self.t_samples {
            for (i, t) in ts.iter().enumerate() {
                if !(t.is_finite() && *t >= 0.0) {
                    return Err(usage(format!("t_samples[{i}]"), format!("must be finite and >= 0, got {t}")));
                }
            }
        }
        for (name, v) in [("t", self.t), ("amplitude", self.amplitude), ("t_end", self.t_end), ("dt", self.dt), ("gamma", self.gamma), ("norm_gamma", self.norm_gamma)] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        for (name, v) in [("s", self.s), ("sigma", self.sigma), ("v_amp", self.v_amp)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(usage(name, "must be finite"));
                }
            }
        }
        if let Some(t) = &self.table {
            if !TABLE_NAMES.contains(&t.as_str()) {
                return Err(usage("table", format!("unknown table {t:?}, expected one of {TABLE_NAMES:?}")));
            }
        }
        if let Some(fl) = &self.flows {
            for (i, f) in fl.iter().enumerate() {
                if !FLOW_NAMES.contains(&f.as_str()) {
                    return Err(usage(format!("flows[{i}]"), format!("unknown flow {f:?}, expected one of {FLOW_NAMES:?}")));
                }
                if f == "rotation" && self.grid.dim != 2 {
                    return Err(usage(format!("flows[{i}]"), "rotation needs grid.dim = 2"));
                }
            }
        }
        if let (Some(dt), Some(t_end)) = (self.dt, self.t_end) {
            if dt > t_end {
                return Err(usage("dt", "must not exceed t_end"));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical serialization (with the effective seed).
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn positive(path: &str, v: f64) -> Result<(), UsageError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(usage(path, format!("must be finite and > 0, got {v}")))
    }
}
