//! Evaluation: principal angles, identifiability bounds and the seeded trial
//! runner behind the benchmark grids.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulants::{Reference, SystemMode};
use crate::error::{Error, Result};
use crate::linalg;
use crate::pipeline::{solve, Method as SolveMethod, SolveOptions};
use crate::polyspace::triangular;
use crate::ssa::SsaConfig;
use crate::synthgen::{generate, trial_seed, InstanceSpec};

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Largest principal angle between the column spans of two orthonormal
/// frames, over the `min(p, q)` principal pairs: the arccosine of the smallest
/// singular value of `AᵀB`.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    if a.ncols() == 0 || b.ncols() == 0 {
        return Err(Error::InvalidArgument("empty frame".into()));
    }
    for m in [a, b] {
        let dev = linalg::gram_deviation(m);
        if !(dev <= ORTHONORMAL_TOL) {
            return Err(Error::NotOrthonormal(dev));
        }
    }
    let (wide, narrow) = if a.ncols() >= b.ncols() { (a, b) } else { (b, a) };
    // Small angles come from the sine, which unlike the cosine keeps full
    // relative accuracy near zero.
    let residual = narrow - wide * (wide.transpose() * narrow);
    let sine = linalg::singular_values(&residual)?[0].clamp(0.0, 1.0);
    if sine < 0.5 {
        return Ok(sine.asin());
    }
    let s = linalg::singular_values(&(wide.transpose() * narrow))?;
    let cosine = s[narrow.ncols() - 1].clamp(0.0, 1.0);
    Ok(cosine.acos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Identifiable,
    NotGuaranteed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    #[serde(rename = "D")]
    pub dim: usize,
    pub d: usize,
    pub requested_m: usize,
    pub min_m_identifiable: usize,
    pub min_quadrics_exact_alg: usize,
    pub verdict: Verdict,
    /// `m - 1 ≥ Δ(D) - Δ(d)`: enough quadrics for the algebraic estimators.
    pub algebraic_regime: bool,
}

pub fn identifiability(dim: usize, d: usize, m: usize) -> Result<IdentifiabilityReport> {
    if d == 0 || d >= dim || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < d < D and m ≥ 1, got D={dim} d={d} m={m}"
        )));
    }
    let min_m = (dim - d + 1).div_ceil(2) + 1;
    let min_q = triangular(dim) - triangular(d);
    Ok(IdentifiabilityReport {
        dim,
        d,
        requested_m: m,
        min_m_identifiable: min_m,
        min_quadrics_exact_alg: min_q,
        verdict: if m >= min_m {
            Verdict::Identifiable
        } else {
            Verdict::NotGuaranteed
        },
        algebraic_regime: m - 1 >= min_q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Algebraic,
    Ssa,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Algebraic => "algebraic",
            Method::Ssa => "ssa",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algebraic" => Ok(Method::Algebraic),
            "ssa" => Ok(Method::Ssa),
            other => Err(Error::InvalidArgument(format!("unknown benchmark method {other:?}"))),
        }
    }
}

/// Noise level label: a number, or `free` for undisturbed instances.
pub fn sigma_label(sigma: Option<f64>) -> String {
    match sigma {
        Some(s) => format!("{s}"),
        None => "free".to_string(),
    }
}

fn parse_sigma(s: &str) -> Result<Option<f64>> {
    if s == "free" {
        return Ok(None);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::InvalidArgument(format!("bad sigma {s:?}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub method: Method,
    #[serde(rename = "D")]
    pub dim: usize,
    pub d: usize,
    pub m: usize,
    pub sigma: Option<f64>,
    pub seed: u64,
    /// Radians; `π/2` for failed trials.
    pub angle: f64,
    pub runtime: f64,
    pub converged: bool,
}

fn default_trials() -> usize {
    50
}

fn default_methods() -> Vec<Method> {
    vec![Method::Algebraic, Method::Ssa]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "d")]
    pub sub_dims: Vec<usize>,
    pub m: usize,
    /// `null` entries are noise-free cells.
    pub sigmas: Vec<Option<f64>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ssa: SsaConfig,
}

impl GridConfig {
    /// `D=10, d=1..9, m=110, σ ∈ {-8, -4, -2}`.
    pub fn standard(trials: usize) -> Self {
        GridConfig {
            dim: 10,
            sub_dims: (1..10).collect(),
            m: 110,
            sigmas: vec![Some(-8.0), Some(-4.0), Some(-2.0)],
            trials,
            methods: default_methods(),
            seed: 0,
            ssa: SsaConfig::default(),
        }
    }

    /// Parses `key=value` pairs separated by `;`, e.g.
    /// `D=10;d=1..9;m=110;sigma=-8,-4,free;trials=50;methods=algebraic,ssa;seed=1`.
    pub fn parse_inline(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(msg);
        let mut fields = BTreeMap::new();
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {part:?}")))?;
            if fields.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(bad(format!("duplicate key {k:?}")));
            }
        }
        let take = |fields: &mut BTreeMap<String, String>, key: &str| {
            fields.remove(key).ok_or_else(|| bad(format!("missing key {key:?}")))
        };
        let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| bad(format!("bad integer {s:?}"))) };
        let dim = int(&take(&mut fields, "D")?)?;
        let sub_dims = parse_int_list(&take(&mut fields, "d")?)?;
        let m = int(&take(&mut fields, "m")?)?;
        let sigmas = take(&mut fields, "sigma")?
            .split(',')
            .map(|s| parse_sigma(s.trim()))
            .collect::<Result<Vec<_>>>()?;
        let mut config = GridConfig {
            dim,
            sub_dims,
            m,
            sigmas,
            trials: default_trials(),
            methods: default_methods(),
            seed: 0,
            ssa: SsaConfig::default(),
        };
        if let Some(t) = fields.remove("trials") {
            config.trials = int(&t)?;
        }
        if let Some(s) = fields.remove("seed") {
            config.seed = s.parse().map_err(|_| bad(format!("bad seed {s:?}")))?;
        }
        if let Some(ms) = fields.remove("methods") {
            config.methods = ms.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?;
        }
        if let Some(r) = fields.remove("restarts") {
            config.ssa.restarts = int(&r)?;
        }
        if let Some(key) = fields.keys().next() {
            return Err(bad(format!("unknown key {key:?}")));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.dim < 2 {
            return bad(format!("D must be at least 2, got {}", self.dim));
        }
        if self.sub_dims.is_empty() || self.sigmas.is_empty() || self.methods.is_empty() {
            return bad("grid has an empty axis".into());
        }
        if let Some(&d) = self.sub_dims.iter().find(|&&d| d == 0 || d >= self.dim) {
            return bad(format!("d={d} outside 1..{}", self.dim));
        }
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.sigmas.iter().flatten().any(|s| !s.is_finite()) {
            return bad("sigma must be finite".into());
        }
        Ok(())
    }
}

fn parse_int_list(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("bad integer list {s:?}"));
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim) {
        if let Some((lo, hi)) = item.split_once("..") {
            let lo: usize = lo.parse().map_err(|_| bad())?;
            let hi: usize = hi.parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            out.extend(lo..=hi);
        } else {
            out.push(item.parse().map_err(|_| bad())?);
        }
    }
    Ok(out)
}

/// One cell of the grid that was not run.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedCell {
    #[serde(rename = "D")]
    pub dim: usize,
    pub d: usize,
    pub m: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

/// Linear-interpolation quantiles; `None` for an empty sample.
pub fn quantiles(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Quantiles {
        q25: at(0.25),
        q50: at(0.5),
        q75: at(0.75),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub method: Method,
    #[serde(rename = "D")]
    pub dim: usize,
    pub d: usize,
    pub m: usize,
    pub sigma: Option<f64>,
    pub trials: usize,
    pub failed: usize,
    pub angle: Option<Quantiles>,
    pub runtime: Option<Quantiles>,
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub results: Vec<TrialResult>,
    pub cells: Vec<CellSummary>,
    pub skipped: Vec<SkippedCell>,
}

/// How the runner treats wall-clock timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    Measure,
    /// Record zero runtimes so output bytes depend only on the seed.
    Omit,
}

/// Settings that the benchmark applies to every trial.
pub fn algebraic_options() -> SolveOptions {
    SolveOptions::new(SolveMethod::Approx, Reference::Last)
}

pub fn ssa_options(config: &SsaConfig, seed: u64) -> SolveOptions {
    SolveOptions {
        method: SolveMethod::Ssa,
        reference: Reference::Average,
        mode: SystemMode::Reference,
        ssa: *config,
        seed,
        use_means: true,
    }
}

/// Generates the instance for `seed` and runs every method in `methods` on it.
pub fn run_trial(
    spec: &InstanceSpec,
    seed: u64,
    methods: &[Method],
    ssa: &SsaConfig,
    timing: Timing,
) -> Vec<TrialResult> {
    let instance = generate(spec, seed);
    methods
        .iter()
        .map(|&method| {
            let mut result = TrialResult {
                method,
                dim: spec.dim,
                d: spec.sub_dim,
                m: spec.epochs,
                sigma: spec.sigma,
                seed,
                angle: std::f64::consts::FRAC_PI_2,
                runtime: 0.0,
                converged: false,
            };
            let Ok(instance) = &instance else {
                return result;
            };
            let cumulants = instance.cumulants();
            let options = match method {
                Method::Algebraic => algebraic_options(),
                Method::Ssa => ssa_options(ssa, seed),
            };
            let start = Instant::now();
            let solution = solve(&cumulants, spec.sub_dim, &options);
            let elapsed = start.elapsed().as_secs_f64();
            if timing == Timing::Measure {
                result.runtime = elapsed;
            }
            match solution.and_then(|s| {
                let angle = principal_angle(&s.estimate.basis, &instance.true_basis)?;
                Ok((angle, s.ssa.is_none_or(|r| r.converged)))
            }) {
                Ok((angle, converged)) => {
                    result.angle = angle;
                    result.converged = converged;
                }
                Err(e) => log::debug!("{} trial seed {seed} failed: {e}", method.name()),
            }
            result
        })
        .collect()
}

/// Runs every identifiable cell of the grid. Results are ordered by
/// `(d, sigma, trial, method)` regardless of `jobs`.
pub fn run_grid(config: &GridConfig, jobs: usize, timing: Timing) -> Result<GridReport> {
    config.validate()?;
    let mut skipped = Vec::new();
    let mut tasks = Vec::new();
    for &d in &config.sub_dims {
        let report = identifiability(config.dim, d, config.m)?;
        if report.verdict == Verdict::NotGuaranteed {
            let reason = format!(
                "m={} below identifiability bound {}",
                config.m, report.min_m_identifiable
            );
            log::warn!("skipping D={} d={d}: {reason}", config.dim);
            skipped.push(SkippedCell {
                dim: config.dim,
                d,
                m: config.m,
                reason,
            });
            continue;
        }
        for &sigma in &config.sigmas {
            for t in 0..config.trials {
                let spec = InstanceSpec::new(config.dim, d, config.m, sigma);
                let seed = trial_seed(config.seed, cell_offset(d, sigma) ^ t as u64);
                tasks.push((spec, seed));
            }
        }
    }
    let work = |(spec, seed): &(InstanceSpec, u64)| run_trial(spec, *seed, &config.methods, &config.ssa, timing);
    let nested: Vec<Vec<TrialResult>> = if jobs <= 1 {
        tasks.iter().map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(work).collect())
    };
    let results: Vec<TrialResult> = nested.into_iter().flatten().collect();
    let cells = summarize(config, &results);
    Ok(GridReport {
        results,
        cells,
        skipped,
    })
}

/// Distinct per-cell seed offsets so cells do not share instances.
fn cell_offset(d: usize, sigma: Option<f64>) -> u64 {
    let s = sigma.map_or(u64::MAX, f64::to_bits);
    crate::synthgen::mix64(s ^ ((d as u64) << 48))
}

fn summarize(config: &GridConfig, results: &[TrialResult]) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for &d in &config.sub_dims {
        for &sigma in &config.sigmas {
            for &method in &config.methods {
                let rows: Vec<&TrialResult> = results
                    .iter()
                    .filter(|r| r.method == method && r.d == d && r.sigma == sigma)
                    .collect();
                if rows.is_empty() {
                    continue;
                }
                let ok: Vec<&&TrialResult> = rows.iter().filter(|r| r.converged).collect();
                let angles: Vec<f64> = ok.iter().map(|r| r.angle).collect();
                let runtimes: Vec<f64> = ok.iter().map(|r| r.runtime).collect();
                cells.push(CellSummary {
                    method,
                    dim: config.dim,
                    d,
                    m: config.m,
                    sigma,
                    trials: rows.len(),
                    failed: rows.len() - ok.len(),
                    angle: quantiles(&angles),
                    runtime: quantiles(&runtimes),
                });
            }
        }
    }
    cells
}

pub const CSV_HEADER: [&str; 9] = [
    "method",
    "D",
    "d",
    "m",
    "sigma",
    "seed",
    "angle_rad",
    "runtime_s",
    "converged",
];

pub fn write_csv<W: Write>(results: &[TrialResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in results {
        w.write_record([
            r.method.name().to_string(),
            r.dim.to_string(),
            r.d.to_string(),
            r.m.to_string(),
            sigma_label(r.sigma),
            r.seed.to_string(),
            format!("{:e}", r.angle),
            format!("{:e}", r.runtime),
            r.converged.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// JSON summary: per-cell quantiles, skipped cells and run settings.
pub fn summary_json(config: &GridConfig, report: &GridReport, jobs: usize, timing: Timing) -> serde_json::Value {
    serde_json::json!({
        "grid": config,
        "settings": {
            "jobs": jobs,
            "timing": timing == Timing::Measure,
            "algebraic": {"estimator": "approx", "reference": "last", "mode": "reference"},
            "ssa": {"reference": "average", "config": config.ssa},
        },
        "cells": report.cells,
        "skipped": report.skipped,
    })
}
