//! Orchestration of the computations behind each CLI subcommand.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::birman_schwinger::{assemble_discrete_h, count_h_below, n_of_z, n_of_z_with};
use crate::config::RunConfig;
use crate::efimov::{log_slope_fit, sr_count, u_of_mu, EfimovParams, EfimovResult};
use crate::error::{Error, Result};
use crate::friedrichs::{
    bound_state_with_tol, classify, default_classify_tol, delta_exponent_fit, delta_extrema,
    essential_spectrum_from, sqrt_coefficient_measure, tune_coupling, ClassificationReport,
    DeltaRule, SpectralBands, SqrtCoefficient, Verdict,
};
use crate::model::{assumption_params, ModelParams};
use crate::torus::{make_graded_grid, make_grid, Grid, TorusPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Classify,
    EssSpectrum,
    BoundStates,
    Count,
    FockOracle,
    EfimovCoef,
    SrConvergence,
    Report,
}

impl Stage {
    fn includes(self, other: Stage) -> bool {
        self == other || self == Stage::Report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub c: f64,
    pub c_star: f64,
    #[serde(flatten)]
    pub report: ClassificationReport,
    /// Log-log slope of `Delta(p, 0)` at small `|p|`; only at criticality.
    pub threshold_exponent: Option<f64>,
    pub sqrt_coefficient: Option<SqrtCoefficient>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberBoundState {
    pub p: [f64; 3],
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bands {
    #[serde(flatten)]
    pub bands: SpectralBands,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_states: Option<Vec<FiberBoundState>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NRow {
    pub z: f64,
    pub log_abs_z: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NTable {
    pub grid_n: usize,
    pub graded_gamma: u32,
    pub rows: Vec<NRow>,
    /// Slope of `N` against `|log|z||`, when at least three rows exist.
    pub log_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrRow {
    pub r: f64,
    pub count: usize,
    pub half_count_over_r: f64,
    pub u0_reference: f64,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Efimov {
    #[serde(flatten)]
    pub result: EfimovResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sr_convergence: Option<Vec<SrRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub n: usize,
    pub z: f64,
    pub count_direct: usize,
    pub count_bs: usize,
    pub equal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: RunConfig,
    pub classification: Option<Classification>,
    pub bands: Option<Bands>,
    pub n_table: Option<NTable>,
    pub efimov: Option<Efimov>,
    pub oracle: Option<Vec<OracleRow>>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<BTreeMap<String, f64>>,
}

/// Tags a failure with the stage it came from; configuration and I/O
/// errors pass through unchanged.
fn in_stage<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(_) | Error::Io(_) | Error::Numerical { .. } => e,
        other => Error::numerical(stage, other.to_string()),
    })
}

struct Timer {
    times: BTreeMap<String, f64>,
}

impl Timer {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = in_stage(stage, f());
        self.times
            .insert(stage.to_string(), t.elapsed().as_secs_f64());
        out
    }
}

/// Points on the diagonal `p = (t, t, t)` used for the fiber bound-state table.
fn diagonal_samples() -> Vec<TorusPoint> {
    (0..=8)
        .map(|k| {
            let t = std::f64::consts::PI * k as f64 / 8.0;
            TorusPoint::new([t, t, t]).expect("finite")
        })
        .collect()
}

fn friedrichs_grid(cfg: &RunConfig) -> Result<Grid> {
    make_graded_grid(cfg.grid.n, cfg.grid.graded_gamma)
}

/// Model with the coupling resolved (`"tuned"` replaced by `c*`) and `c*` itself.
pub fn resolve_model(cfg: &RunConfig, grid: &Grid) -> Result<(ModelParams, f64)> {
    let m = cfg.model.to_params()?;
    let c_star = in_stage("tune_coupling", tune_coupling(&m, grid))?;
    let m = if cfg.model.c.is_tuned() {
        m.with_c(c_star)
    } else {
        m
    };
    Ok((m, c_star))
}

pub fn run_pipeline(cfg: &RunConfig, stage: Stage) -> Result<Report> {
    cfg.validate()?;
    let mut timer = Timer {
        times: BTreeMap::new(),
    };
    let mut warnings = Vec::new();
    let grid = timer.run("grid", || friedrichs_grid(cfg))?;
    let (m, c_star) = timer.run("tune_coupling", || resolve_model(cfg, &grid))?;

    let mut classification = None;
    if stage.includes(Stage::Classify) {
        classification = Some(timer.run("classify", || {
            let tol = cfg
                .tolerances
                .classify_tol
                .unwrap_or_else(|| default_classify_tol(&m));
            let report = classify(&m, &grid, tol)?;
            let critical = matches!(report.verdict, Verdict::Resonance | Verdict::ZeroEigenvalue);
            let (threshold_exponent, sqrt_coefficient) = if critical && report.delta00.abs() < 1e-8 {
                (
                    Some(delta_exponent_fit(&m, &grid)?),
                    Some(sqrt_coefficient_measure(&m, &grid)?),
                )
            } else {
                (None, None)
            };
            Ok(Classification {
                c: m.c,
                c_star,
                report,
                threshold_exponent,
                sqrt_coefficient,
            })
        })?);
    }

    let mut bands = None;
    if stage.includes(Stage::EssSpectrum) || stage.includes(Stage::BoundStates) {
        let sb = timer.run("ess_spectrum", || {
            let ext = delta_extrema(&m, &grid)?;
            essential_spectrum_from(&m, &grid, &ext)
        })?;
        if !sb.hypothesis_ok {
            warnings.push(format!(
                "hypothesis_ok = false: Delta(p, M) > 0 somewhere (case {})",
                serde_json::to_value(sb.case).expect("case serializes")
            ));
        }
        let bound_states = if stage.includes(Stage::BoundStates) {
            Some(timer.run("bound_states", || {
                diagonal_samples()
                    .iter()
                    .map(|p| {
                        Ok(FiberBoundState {
                            p: p.coords(),
                            z: bound_state_with_tol(&m, p, &grid, cfg.tolerances.root_tol)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })?)
        } else {
            None
        };
        bands = Some(Bands {
            bands: sb,
            bound_states,
        });
    }

    let mut n_table = None;
    if stage.includes(Stage::Count) {
        n_table = Some(timer.run("count", || {
            let bs_grid = make_graded_grid(cfg.bs.nystrom_n, cfg.grid.graded_gamma)?;
            let mut rows = Vec::with_capacity(cfg.bs.z_list.len());
            for &z in &cfg.bs.z_list {
                let c = n_of_z(&m, z, &bs_grid)?;
                rows.push(NRow {
                    z,
                    log_abs_z: z.abs().ln(),
                    n: c.count,
                    ambiguous: c.ambiguous,
                });
            }
            let samples: Vec<(f64, usize)> = rows.iter().map(|r| (r.z, r.n)).collect();
            let log_slope = if samples.len() >= 3 {
                log_slope_fit(&samples).ok()
            } else {
                None
            };
            Ok(NTable {
                grid_n: cfg.bs.nystrom_n,
                graded_gamma: cfg.grid.graded_gamma,
                rows,
                log_slope,
            })
        })?);
        for r in &n_table.as_ref().expect("set above").rows {
            if r.ambiguous {
                warnings.push(format!(
                    "N({}) is ambiguous: an eigenvalue of T lies within 1e-9 of 1",
                    r.z
                ));
            }
        }
    }

    let mut oracle = None;
    if stage.includes(Stage::FockOracle) {
        oracle = Some(timer.run("fock_oracle", || {
            let g = make_grid(cfg.bs.oracle_n)?;
            let fock = assemble_discrete_h(&m, &g)?;
            cfg.bs
                .oracle_z
                .iter()
                .map(|&z| {
                    let direct = count_h_below(&fock, z)?.count;
                    let bs = n_of_z_with(&m, z, &g, DeltaRule::Nystrom)?.count;
                    Ok(OracleRow {
                        n: cfg.bs.oracle_n,
                        z,
                        count_direct: direct,
                        count_bs: bs,
                        equal: direct == bs,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?);
        for r in oracle.as_ref().expect("set above") {
            if !r.equal {
                warnings.push(format!(
                    "discrete Birman-Schwinger mismatch at z = {}: direct {} vs {}",
                    r.z, r.count_direct, r.count_bs
                ));
            }
        }
    }

    let mut efimov = None;
    if stage.includes(Stage::EfimovCoef) || stage.includes(Stage::SrConvergence) {
        let ep = timer.run("efimov_params", || {
            let a = assumption_params(&m)?;
            EfimovParams::from_assumption(
                &a,
                cfg.efimov.ell_max,
                cfg.efimov.y_max,
                cfg.efimov.legendre_points,
            )
        })?;
        let result = timer.run("efimov_coef", || u_of_mu(&ep, 1.0))?;
        let sr_convergence = if stage.includes(Stage::SrConvergence) {
            let u0 = result.u0_coefficient;
            Some(timer.run("sr_convergence", || {
                cfg.efimov
                    .sr_r_list
                    .iter()
                    .map(|&r| {
                        let c = sr_count(&ep, 1.0, r, cfg.efimov.points_per_unit, ep.ell_max)?;
                        Ok(SrRow {
                            r,
                            count: c.count,
                            half_count_over_r: c.half_count_over_r(),
                            u0_reference: u0,
                            ambiguous: c.ambiguous,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })?)
        } else {
            None
        };
        if let Some(rows) = &sr_convergence {
            for r in rows.iter().filter(|r| r.ambiguous) {
                warnings.push(format!("n(1, S_r) at r = {} is ambiguous", r.r));
            }
        }
        efimov = Some(Efimov {
            result,
            sr_convergence,
        });
    }

    Ok(Report {
        config: cfg.clone(),
        classification,
        bands,
        n_table,
        efimov,
        oracle,
        warnings,
        timing: Some(timer.times),
    })
}

pub fn render_json(rep: &Report) -> String {
    let mut s = serde_json::to_string_pretty(rep).expect("report serializes");
    s.push('\n');
    s
}

fn fmt_f64(x: f64) -> String {
    // shortest round-trip representation
    format!("{x:?}")
}

pub fn render_csv(rep: &Report) -> Result<String> {
    let mut out = String::new();
    if let Some(t) = &rep.n_table {
        out.push_str("z,log_abs_z,N\n");
        for r in &t.rows {
            let _ = writeln!(out, "{},{},{}", fmt_f64(r.z), fmt_f64(r.log_abs_z), r.n);
        }
        return Ok(out);
    }
    if let Some(rows) = rep.efimov.as_ref().and_then(|e| e.sr_convergence.as_ref()) {
        out.push_str("r,count,half_count_over_r,u0_reference\n");
        for r in rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(r.r),
                r.count,
                fmt_f64(r.half_count_over_r),
                fmt_f64(r.u0_reference)
            );
        }
        return Ok(out);
    }
    Err(Error::Config(
        "CSV output is only available for `count` and `sr-convergence`".into(),
    ))
}

/// Writes the report atomically: a sibling temporary file renamed into place.
pub fn write_report(rep: &Report, format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Json => render_json(rep),
        Format::Csv => render_csv(rep)?,
    };
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::Io(format!("{}: {e}", path.display()))
    })
}
