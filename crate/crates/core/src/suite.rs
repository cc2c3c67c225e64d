//! Grid certification: the cross product of engines, operators, schedules and
//! error models, run in parallel, plus slope, Markov and evolution checks.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::MainBound;
use crate::engines::EngineKind;
use crate::error::{Error, Result};
use crate::experiment::{
    run_evolve, run_experiment, BoundCheck, CheckStatus, ErrorsConfig, EvolveConfig, ExperimentConfig,
    OperatorConfig,
};
use crate::fit::{default_window, fit_rate};
use crate::markov::{dp_w, simulate_race, RaceConfig};
use crate::schedules::{Magnitude, StepSchedule};
use crate::spaces::{ConvexSet, NormKind};

pub const MAX_CELLS: usize = 10_000;

/// Environment variable that caps the worker count.
pub const WORKERS_ENV: &str = "KM_LAB_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOperator {
    pub name: String,
    pub operator: OperatorConfig,
    #[serde(default)]
    pub domain: Option<ConvexSet>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovGrid {
    #[serde(default = "default_markov_n")]
    pub n: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_markov_n() -> usize {
    200
}

fn default_trials() -> usize {
    100_000
}

fn default_seed() -> u64 {
    1
}

fn default_engines() -> Vec<EngineKind> {
    vec![EngineKind::Km, EngineKind::Ikm]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_engines")]
    pub engines: Vec<EngineKind>,
    #[serde(default)]
    pub norm: NormKind,
    pub operators: Vec<GridOperator>,
    pub schedules: Vec<String>,
    #[serde(default)]
    pub errors: Vec<ErrorsConfig>,
    pub n_max: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub bounds: Vec<String>,
    #[serde(default = "yes")]
    pub slopes: bool,
    #[serde(default)]
    pub markov: Option<MarkovGrid>,
    #[serde(default)]
    pub evolution: Vec<EvolveConfig>,
}

impl GridSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// One experiment config per cell; KM cells ignore the error models.
    pub fn cells(&self) -> Result<Vec<(String, ExperimentConfig)>> {
        let errors = if self.errors.is_empty() {
            vec![ErrorsConfig::default()]
        } else {
            self.errors.clone()
        };
        let mut out = Vec::new();
        for &engine in &self.engines {
            if !matches!(engine, EngineKind::Km | EngineKind::Ikm) {
                return Err(Error::Config(format!(
                    "grid cells support km and ikm; run {engine} through a single config"
                )));
            }
            for op in &self.operators {
                for schedule in &self.schedules {
                    let models: &[ErrorsConfig] = if engine == EngineKind::Km { &errors[..1] } else { &errors };
                    for e in models {
                        let label = match engine {
                            EngineKind::Km => format!("km/{}/{schedule}", op.name),
                            _ => format!("{engine}/{}/{schedule}/{}/{}", op.name, e.eps, e.dir),
                        };
                        let cfg = ExperimentConfig {
                            engine,
                            operator: Some(op.operator.clone()),
                            domain: op.domain.clone(),
                            norm: self.norm,
                            x0: op.x0.clone(),
                            schedule: schedule.clone(),
                            errors: (engine == EngineKind::Ikm).then(|| e.clone()),
                            gamma: None,
                            set: None,
                            beta: None,
                            sequence: None,
                            n_max: self.n_max,
                            seeds: self.seeds.clone(),
                            kappa: op.kappa,
                            rate: None,
                            phi_power: None,
                            bounds: self.bounds.clone(),
                            snapshot_every: None,
                            cauchy_tol: 1e-3,
                            output: None,
                        };
                        out.push((label, cfg));
                        if out.len() > MAX_CELLS {
                            return Err(Error::SizeLimit {
                                requested: out.len(),
                                limit: MAX_CELLS,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub label: String,
    /// Worst status per bound across seeds.
    pub checks: Vec<BoundCheck>,
    pub final_residual: Option<f64>,
    pub magnitude: Option<String>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn pass(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub label: String,
    pub a: f64,
    pub slope: Option<f64>,
    /// −(min(a, 1) − 1/2) + 0.1.
    pub threshold: f64,
    pub status: CheckStatus,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCheck {
    pub label: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub cells: Vec<CellResult>,
    pub slopes: Vec<SlopeRow>,
    pub markov: Vec<NamedCheck>,
    pub evolution: Vec<NamedCheck>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(CellResult::pass)
            && self.slopes.iter().all(|s| s.status != CheckStatus::Fail)
            && self.markov.iter().all(|c| c.status != CheckStatus::Fail)
            && self.evolution.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            match &c.error {
                Some(e) => out.push_str(&format!("[ERROR] {} ({e})\n", c.label)),
                None => {
                    out.push_str(&format!("[{}] {}\n", if c.pass() { "PASS" } else { "FAIL" }, c.label));
                    for check in &c.checks {
                        out.push_str(&format!("    {check}\n"));
                    }
                }
            }
        }
        if !self.slopes.is_empty() {
            out.push_str("slopes:\n");
            for s in &self.slopes {
                let slope = s.slope.map_or("-".into(), |v| format!("{v:.4}"));
                out.push_str(&format!(
                    "  [{}] {} a={} slope={slope} threshold={:.4}{}\n",
                    s.status,
                    s.label,
                    s.a,
                    s.threshold,
                    s.note.as_ref().map_or(String::new(), |n| format!(" ({n})"))
                ));
            }
        }
        for (title, list) in [("markov", &self.markov), ("evolution", &self.evolution)] {
            if !list.is_empty() {
                out.push_str(&format!("{title}:\n"));
                for c in list {
                    out.push_str(&format!("  [{}] {} {}\n", c.status, c.label, c.detail));
                }
            }
        }
        let failed = self.cells.iter().filter(|c| !c.pass()).count();
        out.push_str(&format!(
            "{} cells, {failed} failing; overall {}\n",
            self.cells.len(),
            if self.all_pass() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Worker count from `KM_LAB_WORKERS`, defaulting to the available cores.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every cell of the grid. A failing or erroring cell is recorded and
/// never stops the others; only an invalid grid returns an error.
pub fn certify_suite(grid: &GridSpec) -> Result<SuiteReport> {
    certify_suite_with(grid, workers_from_env())
}

pub fn certify_suite_with(grid: &GridSpec, workers: usize) -> Result<SuiteReport> {
    let cells = grid.cells()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<(CellResult, Option<Vec<f64>>)> =
        pool.install(|| cells.par_iter().map(|(label, cfg)| run_cell(label, cfg)).collect());
    let mut slopes = Vec::new();
    if grid.slopes {
        for ((label, cfg), (_, residuals)) in cells.iter().zip(&results) {
            if let Some(row) = slope_row(label, cfg, residuals.as_deref()) {
                slopes.push(row);
            }
        }
    }
    let markov = match &grid.markov {
        Some(m) => pool.install(|| markov_checks(grid, m)),
        None => Vec::new(),
    };
    let evolution = grid
        .evolution
        .iter()
        .enumerate()
        .map(|(i, cfg)| match run_evolve(cfg) {
            Ok(r) => NamedCheck {
                label: format!("evolution[{i}]"),
                status: if r.all_pass() { CheckStatus::Pass } else { CheckStatus::Fail },
                detail: r
                    .checks
                    .iter()
                    .map(|c| format!("{}={}", c.bound, c.status))
                    .collect::<Vec<_>>()
                    .join(" "),
            },
            Err(e) => NamedCheck {
                label: format!("evolution[{i}]"),
                status: CheckStatus::Fail,
                detail: e.to_string(),
            },
        })
        .collect();
    Ok(SuiteReport {
        cells: results.into_iter().map(|(c, _)| c).collect(),
        slopes,
        markov,
        evolution,
    })
}

fn run_cell(label: &str, cfg: &ExperimentConfig) -> (CellResult, Option<Vec<f64>>) {
    let magnitude = cfg.errors.as_ref().map(|e| e.eps.clone());
    match run_experiment(cfg) {
        Ok(out) => {
            let mut merged: BTreeMap<String, BoundCheck> = BTreeMap::new();
            let mut order = Vec::new();
            for run in &out.runs {
                for c in &run.report.checks {
                    match merged.get_mut(&c.bound) {
                        None => {
                            order.push(c.bound.clone());
                            merged.insert(c.bound.clone(), c.clone());
                        }
                        Some(m) => merge_check(m, c),
                    }
                }
            }
            let first = &out.runs[0];
            (
                CellResult {
                    label: label.to_string(),
                    checks: order.into_iter().map(|b| merged.remove(&b).expect("inserted")).collect(),
                    final_residual: Some(first.report.final_residual),
                    magnitude,
                    error: None,
                },
                Some(first.trace.residuals.clone()),
            )
        }
        Err(e) => (
            CellResult {
                label: label.to_string(),
                checks: Vec::new(),
                final_residual: None,
                magnitude,
                error: Some(e.to_string()),
            },
            None,
        ),
    }
}

fn merge_check(into: &mut BoundCheck, other: &BoundCheck) {
    let rank = |s: CheckStatus| match s {
        CheckStatus::NotApplicable => 0,
        CheckStatus::Pass => 1,
        CheckStatus::Fail => 2,
    };
    if rank(other.status) > rank(into.status) {
        into.status = other.status;
        into.note = other.note.clone();
    }
    if let Some(m) = other.worst_margin {
        if into.worst_margin.is_none_or(|w| m < w) {
            into.worst_margin = Some(m);
            into.worst_n = other.worst_n;
        }
    }
}

fn slope_row(label: &str, cfg: &ExperimentConfig, residuals: Option<&[f64]>) -> Option<SlopeRow> {
    let magnitude: Magnitude = cfg.errors.as_ref()?.eps.parse().ok()?;
    let Magnitude::PowerLaw { a, .. } = magnitude else {
        return None;
    };
    let threshold = -(a.min(1.0) - 0.5) + 0.1;
    let mut row = SlopeRow {
        label: label.to_string(),
        a,
        slope: None,
        threshold,
        status: CheckStatus::NotApplicable,
        note: None,
    };
    let Some(residuals) = residuals else {
        row.note = Some("run failed".into());
        return Some(row);
    };
    let schedule: StepSchedule = cfg.schedule.parse().ok()?;
    let window = default_window(&schedule.table(cfg.n_max), cfg.n_max);
    if residuals[window.0..=window.1].iter().any(|&r| r < 1e-12) {
        row.note = Some("residual at machine precision".into());
        return Some(row);
    }
    match fit_rate(residuals, window) {
        Ok(fit) => {
            row.slope = Some(fit.slope);
            row.status = if fit.slope <= threshold { CheckStatus::Pass } else { CheckStatus::Fail };
        }
        Err(e) => row.note = Some(e.to_string()),
    }
    Some(row)
}

/// For each schedule and error magnitude of the grid: the DP majorant
/// w_{n,n+1}/α_{n+1} stays below the main bound, and a simulated race agrees
/// with the DP within four standard errors.
fn markov_checks(grid: &GridSpec, m: &MarkovGrid) -> Vec<NamedCheck> {
    let mut magnitudes: Vec<String> = grid.errors.iter().map(|e| e.eps.clone()).collect();
    if magnitudes.is_empty() {
        magnitudes.push("zero".into());
    }
    magnitudes.dedup();
    let mut out = Vec::new();
    for s in &grid.schedules {
        for mag in &magnitudes {
            let label = format!("{s}/{mag}");
            match markov_check(s, mag, m) {
                Ok((status, detail)) => out.push(NamedCheck { label, status, detail }),
                Err(e) => out.push(NamedCheck {
                    label,
                    status: CheckStatus::Fail,
                    detail: e.to_string(),
                }),
            }
        }
    }
    out
}

fn markov_check(schedule: &str, magnitude: &str, m: &MarkovGrid) -> Result<(CheckStatus, String)> {
    let schedule: StepSchedule = schedule.parse()?;
    let magnitude: Magnitude = magnitude.parse()?;
    let n = m.n.max(4);
    let table = schedule.table(n + 1);
    let eps = magnitude.sequence(&table, n + 2);
    let kappa = 1.0;
    let dp = dp_w(&schedule, &eps[..=n], kappa, n)?;
    let main = MainBound::new(&table, &eps, n - 1);
    let mut worst = f64::INFINITY;
    for k in 0..n {
        worst = worst.min(main.value(kappa, k) - dp.w(k as isize, k + 1) / table.alpha(k + 1));
    }
    let (hm, fm) = (n / 4, n / 2);
    let race = simulate_race(
        &RaceConfig {
            schedule: schedule.clone(),
            eps: eps[..=n].to_vec(),
            kappa,
            m: hm,
            n: fm,
        },
        m.trials,
        m.seed,
    )?;
    let exact = dp.w(hm as isize, fm);
    let gap = (race.total_mean - exact).abs();
    let pass = worst >= -1e-9 && gap <= 4.0 * race.std_err + 1e-12;
    Ok((
        if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        format!(
            "dp_margin={worst:.3e} race({hm},{fm}) mc={:.6} dp={exact:.6} se={:.2e}",
            race.total_mean, race.std_err
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: &str = r#"{
        "operators": [
            {"name": "rot", "operator": {"id": "rotation", "angle": 1.0}, "x0": [1, 0]},
            {"name": "ball", "operator": {"id": "projection", "set": {"kind": "ball", "center": [0, 0], "radius": 1}}, "x0": [2, 2]}
        ],
        "schedules": ["const:0.5", "power:0.5"],
        "errors": [{"eps": "power:K=0.5,a=2"}, {"eps": "power:K=0.5,a=0.75", "dir": "adversarial"}],
        "n_max": 500,
        "seeds": [1, 2],
        "markov": {"n": 60, "trials": 20000}
    }"#;

    #[test]
    fn grid_expands_and_passes() {
        let grid = GridSpec::from_json(GRID).unwrap();
        let cells = grid.cells().unwrap();
        assert_eq!(cells.len(), 2 * 2 + 2 * 2 * 2);
        let report = certify_suite_with(&grid, 2).unwrap();
        assert!(report.all_pass(), "{}", report.render());
        assert_eq!(report.markov.len(), 4);
        assert!(report.slopes.iter().any(|s| s.status == CheckStatus::Pass));
    }

    #[test]
    fn bad_cells_do_not_abort_the_suite() {
        let grid = GridSpec::from_json(
            r#"{"engines": ["km"], "norm": "l1",
                "operators": [
                    {"name": "rot", "operator": {"id": "rotation", "angle": 1.0}, "x0": [1, 0]},
                    {"name": "id", "operator": {"id": "identity", "dim": 2}, "x0": [1, 0]}
                ],
                "schedules": ["const:0.5"], "n_max": 50}"#,
        )
        .unwrap();
        let report = certify_suite_with(&grid, 1).unwrap();
        assert_eq!(report.cells.len(), 2);
        assert!(report.cells[0].error.is_some());
        assert!(report.cells[1].pass());
        assert!(!report.all_pass());
    }

    #[test]
    fn cell_limit_is_enforced() {
        let mut grid = GridSpec::from_json(GRID).unwrap();
        grid.schedules = (0..5000).map(|i| format!("const:{}", 0.1 + i as f64 * 1e-5)).collect();
        assert!(matches!(grid.cells(), Err(Error::SizeLimit { .. })));
    }
}
