//! Run configuration, read from TOML.
//!
//! ```toml
//! [model]
//! preset = "remark27"
//! l1 = 2.0
//! l2 = 1.0
//! v = "constant_one"
//! c = "tuned"
//! u0 = 1.0
//!
//! [grid]
//! n = 16
//! graded_gamma = 3
//! ```
//!
//! Every section except `model` is optional; unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::efimov::{
    DEFAULT_ELL_MAX, DEFAULT_LEGENDRE_POINTS, DEFAULT_POINTS_PER_UNIT, DEFAULT_Y_MAX,
};
use crate::error::{Error, Result};
use crate::model::{Channel, ModelParams, Preset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingKeyword {
    Tuned,
}

/// Either a literal coupling or `"tuned"`, meaning `c = c*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coupling {
    Value(f64),
    Keyword(CouplingKeyword),
}

impl Coupling {
    pub fn is_tuned(&self) -> bool {
        matches!(self, Coupling::Keyword(CouplingKeyword::Tuned))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Preset,
    pub c: Coupling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Channel>,
    #[serde(default = "one")]
    pub u0: f64,
}

fn one() -> f64 {
    1.0
}

impl ModelSection {
    /// Model with the literal coupling, or `c = 0` placeholder when tuned.
    pub fn to_params(&self) -> Result<ModelParams> {
        let c = match self.c {
            Coupling::Value(c) => c,
            Coupling::Keyword(_) => 0.0,
        };
        let m = match self.preset {
            Preset::Remark24 => {
                let mut m = ModelParams::remark24(c);
                m.l1 = self.l1.unwrap_or(1.0);
                m.l2 = self.l2.unwrap_or(1.0);
                m.v = self.v.unwrap_or(Channel::Epsilon);
                m
            }
            Preset::Remark27 => ModelParams::remark27(
                self.l1
                    .ok_or_else(|| Error::InvalidModel("remark27 needs l1".into()))?,
                self.l2
                    .ok_or_else(|| Error::InvalidModel("remark27 needs l2".into()))?,
                self.v.unwrap_or(Channel::ConstantOne),
                c,
            )?,
        };
        let m = m.with_u0(self.u0);
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub graded_gamma: u32,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n: 16,
            graded_gamma: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BsSection {
    pub nystrom_n: usize,
    pub z_list: Vec<f64>,
    /// Grid size of the dense Fock-space oracle.
    pub oracle_n: usize,
    pub oracle_z: Vec<f64>,
}

impl Default for BsSection {
    fn default() -> Self {
        BsSection {
            nystrom_n: 10,
            z_list: vec![-1e-1, -1e-2, -1e-3, -1e-4],
            oracle_n: 4,
            oracle_z: vec![-0.5, -0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EfimovSection {
    pub ell_max: usize,
    pub y_max: f64,
    pub legendre_points: usize,
    pub sr_r_list: Vec<f64>,
    pub points_per_unit: usize,
}

impl Default for EfimovSection {
    fn default() -> Self {
        EfimovSection {
            ell_max: DEFAULT_ELL_MAX,
            y_max: DEFAULT_Y_MAX,
            legendre_points: DEFAULT_LEGENDRE_POINTS,
            sr_r_list: vec![100.0, 200.0, 400.0],
            points_per_unit: DEFAULT_POINTS_PER_UNIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolerancesSection {
    /// Defaults to `1e-8 (1 + |c|)` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classify_tol: Option<f64>,
    pub root_tol: f64,
}

impl Default for TolerancesSection {
    fn default() -> Self {
        TolerancesSection {
            classify_tol: None,
            root_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub bs: BsSection,
    #[serde(default)]
    pub efimov: EfimovSection,
    #[serde(default)]
    pub tolerances: TolerancesSection,
}

const KNOWN_KEYS: &[&str] = &[
    "model",
    "grid",
    "bs",
    "efimov",
    "tolerances",
    "preset",
    "c",
    "l1",
    "l2",
    "v",
    "u0",
    "n",
    "graded_gamma",
    "nystrom_n",
    "z_list",
    "oracle_n",
    "oracle_z",
    "ell_max",
    "y_max",
    "legendre_points",
    "sr_r_list",
    "points_per_unit",
    "classify_tol",
    "root_tol",
];

/// Closest known key to an unknown one, if any is near.
fn suggestion(unknown: &str) -> Option<&'static str> {
    KNOWN_KEYS
        .iter()
        .map(|k| (strsim::levenshtein(unknown, k), *k))
        .filter(|(d, _)| *d <= 2)
        .min()
        .map(|(_, k)| k)
}

fn decorate(err: toml::de::Error) -> Error {
    let msg = err.to_string();
    let hint = msg
        .split("unknown field `")
        .nth(1)
        .and_then(|rest| rest.split('`').next())
        .and_then(suggestion)
        .map(|k| format!("\ndid you mean `{k}`?"))
        .unwrap_or_default();
    Error::Config(format!("{}{hint}", msg.trim_end()))
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {x} is not finite")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if let Coupling::Value(c) = m.c {
            check_finite("model.c", c)?;
        }
        for (name, x) in [("model.l1", m.l1), ("model.l2", m.l2)] {
            if let Some(x) = x {
                check_finite(name, x)?;
            }
        }
        check_finite("model.u0", m.u0)?;
        m.to_params().map_err(|e| Error::Config(e.to_string()))?;
        if self.grid.n < 2 {
            return Err(Error::Config(format!("grid.n = {} must be >= 2", self.grid.n)));
        }
        if self.grid.graded_gamma == 0 || self.grid.graded_gamma % 2 == 0 {
            return Err(Error::Config(format!(
                "grid.graded_gamma = {} must be odd",
                self.grid.graded_gamma
            )));
        }
        for (name, n) in [("bs.nystrom_n", self.bs.nystrom_n), ("bs.oracle_n", self.bs.oracle_n)] {
            if n < 2 {
                return Err(Error::Config(format!("{name} = {n} must be >= 2")));
            }
        }
        if self.bs.oracle_n > crate::birman_schwinger::MAX_FOCK_N {
            return Err(Error::Config(format!(
                "bs.oracle_n = {} exceeds {}",
                self.bs.oracle_n,
                crate::birman_schwinger::MAX_FOCK_N
            )));
        }
        for (name, list) in [("bs.z_list", &self.bs.z_list), ("bs.oracle_z", &self.bs.oracle_z)] {
            for z in list {
                check_finite(name, *z)?;
                if *z >= 0.0 {
                    return Err(Error::Config(format!(
                        "{name} entries must be strictly negative, got {z}"
                    )));
                }
            }
        }
        let e = &self.efimov;
        check_finite("efimov.y_max", e.y_max)?;
        if e.ell_max < 2 || e.y_max <= 0.0 || e.legendre_points < 8 || e.points_per_unit < 8 {
            return Err(Error::Config(
                "efimov needs ell_max >= 2, y_max > 0, legendre_points >= 8, points_per_unit >= 8"
                    .into(),
            ));
        }
        for r in &e.sr_r_list {
            check_finite("efimov.sr_r_list", *r)?;
            if *r <= 0.0 {
                return Err(Error::Config(format!(
                    "efimov.sr_r_list entries must be positive, got {r}"
                )));
            }
        }
        if let Some(t) = self.tolerances.classify_tol {
            check_finite("tolerances.classify_tol", t)?;
            if t <= 0.0 {
                return Err(Error::Config("tolerances.classify_tol must be positive".into()));
            }
        }
        check_finite("tolerances.root_tol", self.tolerances.root_tol)?;
        if self.tolerances.root_tol <= 0.0 {
            return Err(Error::Config("tolerances.root_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(decorate)?;
    cfg.validate()?;
    Ok(cfg)
}
