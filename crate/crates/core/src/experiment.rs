//! Config-driven experiments: build the operator and schedules from JSON,
//! run the engine for each seed, evaluate the requested bounds and write the
//! trace, bound and metadata artifacts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{
    check_domination, diagonal_curve, exact_curve, ishikawa_curve, projected_curve, rate_summable_curves,
    rate_tau_curve, BoundKind, BoundSeries, MainBound,
};
use crate::engines::{run_dkm, run_ikm, run_ikm_z, run_ishikawa, run_km, EngineKind, RunOptions, Trace};
use crate::error::{Error, Result};
use crate::evolution::{self, EvolutionProblem, Forcing};
use crate::operators::{resolve_kappa, Kappa, KappaSource, OperatorSequence, OperatorSpec};
use crate::schedules::{Direction, ErrorModel, Magnitude, StepSchedule, TauTable};
use crate::spaces::{ConvexSet, NormKind, Point};

/// Absolute slack allowed when comparing a measured residual with a bound.
pub const DOMINATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    Identity { dim: usize },
    Rotation { angle: f64 },
    Projection { set: ConvexSet },
    AveragedGradient { q: Vec<Vec<f64>>, b: Vec<f64>, step: f64 },
    Constant { c: Vec<f64> },
    Translation { v: Vec<f64> },
    Composition { ops: Vec<OperatorConfig> },
    ConvexCombination { weights: Vec<f64>, ops: Vec<OperatorConfig> },
}

impl OperatorConfig {
    pub fn build(&self, norm: NormKind) -> Result<OperatorSpec> {
        match self {
            OperatorConfig::Identity { dim } => {
                if *dim == 0 {
                    return Err(Error::Config("identity needs dim >= 1".into()));
                }
                Ok(OperatorSpec::identity(*dim, norm))
            }
            OperatorConfig::Rotation { angle } => {
                if norm != NormKind::L2 {
                    return Err(Error::UnsupportedCombination("rotation is only nonexpansive in l2".into()));
                }
                OperatorSpec::rotation(*angle)
            }
            OperatorConfig::Projection { set } => OperatorSpec::projection(set.clone(), norm),
            OperatorConfig::AveragedGradient { q, b, step } => {
                if norm != NormKind::L2 {
                    return Err(Error::UnsupportedCombination("averaged gradient maps are taken in l2".into()));
                }
                OperatorSpec::averaged_gradient(q.clone(), b.clone(), *step)
            }
            OperatorConfig::Constant { c } => Ok(OperatorSpec::constant(Point::new(c.clone(), norm)?)),
            OperatorConfig::Translation { v } => Ok(OperatorSpec::translation(Point::new(v.clone(), norm)?)),
            OperatorConfig::Composition { ops } => {
                OperatorSpec::composition(ops.iter().map(|o| o.build(norm)).collect::<Result<_>>()?)
            }
            OperatorConfig::ConvexCombination { weights, ops } => OperatorSpec::convex_combination(
                weights.clone(),
                ops.iter().map(|o| o.build(norm)).collect::<Result<_>>()?,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceConfig {
    /// T_n = T for the configured operator.
    Stationary,
    ShrinkingBall { center: Vec<f64>, radius: f64 },
    PerturbedRotation { angle: f64, shift: f64, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorsConfig {
    #[serde(default = "zero_str")]
    pub eps: String,
    #[serde(default = "random_str")]
    pub dir: String,
}

impl Default for ErrorsConfig {
    fn default() -> Self {
        ErrorsConfig {
            eps: zero_str(),
            dir: random_str(),
        }
    }
}

impl ErrorsConfig {
    pub fn model(&self) -> Result<ErrorModel> {
        let magnitude: Magnitude = self.eps.parse()?;
        magnitude.validate()?;
        let direction: Direction = self.dir.parse()?;
        Ok(ErrorModel::new(magnitude, direction))
    }
}

fn zero_str() -> String {
    "zero".into()
}

fn random_str() -> String {
    "random".into()
}

/// K and a of an envelope ε_n <= (1 − α_n)K/(τ_n + 1)^a.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub k: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_prefix() -> String {
    "run".into()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_cauchy_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub engine: EngineKind,
    /// Required for every engine except `dkm` with a non-stationary sequence.
    #[serde(default)]
    pub operator: Option<OperatorConfig>,
    #[serde(default)]
    pub domain: Option<ConvexSet>,
    #[serde(default)]
    pub norm: NormKind,
    pub x0: Vec<f64>,
    pub schedule: String,
    #[serde(default)]
    pub errors: Option<ErrorsConfig>,
    /// Projection slack γ_n for `ikm_z`.
    #[serde(default)]
    pub gamma: Option<String>,
    /// The set C for `ikm_z`.
    #[serde(default)]
    pub set: Option<ConvexSet>,
    /// Inner step β_n for `ishikawa`.
    #[serde(default)]
    pub beta: Option<String>,
    #[serde(default)]
    pub sequence: Option<SequenceConfig>,
    pub n_max: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub rate: Option<RateConfig>,
    /// φ(k) = k^p for the weighted rate bound.
    #[serde(default)]
    pub phi_power: Option<f64>,
    /// Bound names; empty selects the engine's defaults.
    #[serde(default)]
    pub bounds: Vec<String>,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default = "default_cauchy_tol")]
    pub cauchy_tol: f64,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the config serialized with sorted keys.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        // Where artifacts go does not change what is computed.
        value.as_object_mut().expect("config is an object").remove("output");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.norm.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.cauchy_tol > 0.0) {
            return Err(Error::Config("cauchy_tol must be positive".into()));
        }
        if let Some(k) = self.kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::Config("kappa must be finite and nonnegative".into()));
            }
        }
        self.schedule()?;
        self.bound_kinds()?;
        if let Some(e) = &self.errors {
            e.model()?;
        }
        match self.engine {
            EngineKind::Km | EngineKind::Ikm => {
                self.require_operator()?;
            }
            EngineKind::IkmZ => {
                self.require_operator()?;
                if self.set.is_none() {
                    return Err(Error::Config("ikm_z needs a set".into()));
                }
                self.gamma()?;
            }
            EngineKind::Ishikawa => {
                self.require_operator()?;
                self.beta()?;
            }
            EngineKind::Dkm => match &self.sequence {
                None => return Err(Error::Config("dkm needs a sequence".into())),
                Some(SequenceConfig::Stationary) => {
                    self.require_operator()?;
                }
                Some(_) => {}
            },
        }
        Ok(())
    }

    fn require_operator(&self) -> Result<&OperatorConfig> {
        self.operator
            .as_ref()
            .ok_or_else(|| Error::Config(format!("engine {} needs an operator", self.engine)))
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        self.schedule.parse()
    }

    pub fn error_model(&self) -> Result<ErrorModel> {
        self.errors.clone().unwrap_or_default().model()
    }

    fn gamma(&self) -> Result<Magnitude> {
        let g: Magnitude = self.gamma.as_deref().unwrap_or("zero").parse()?;
        g.validate()?;
        Ok(g)
    }

    fn beta(&self) -> Result<StepSchedule> {
        self.beta
            .as_deref()
            .ok_or_else(|| Error::Config("ishikawa needs beta".into()))?
            .parse()
    }

    pub fn bound_kinds(&self) -> Result<Vec<BoundKind>> {
        if self.bounds.is_empty() {
            return Ok(default_bounds(self.engine));
        }
        self.bounds.iter().map(|b| b.parse()).collect()
    }

    /// The operator with the configured domain attached.
    pub fn operator_spec(&self) -> Result<OperatorSpec> {
        let op = self.require_operator()?.build(self.norm)?;
        match &self.domain {
            Some(d) => op.with_domain(d.clone()),
            None => Ok(op),
        }
    }

    pub fn sequence_spec(&self) -> Result<OperatorSequence> {
        match self.sequence.as_ref().ok_or_else(|| Error::Config("dkm needs a sequence".into()))? {
            SequenceConfig::Stationary => Ok(OperatorSequence::stationary(self.operator_spec()?)),
            SequenceConfig::ShrinkingBall { center, radius } => {
                OperatorSequence::shrinking_ball(center.clone(), *radius)
            }
            SequenceConfig::PerturbedRotation { angle, shift, radius } => {
                OperatorSequence::perturbed_rotation(*angle, *shift, *radius)
            }
        }
    }
}

pub fn default_bounds(engine: EngineKind) -> Vec<BoundKind> {
    match engine {
        EngineKind::Km => vec![BoundKind::Exact, BoundKind::Main, BoundKind::RateSummable],
        EngineKind::Ikm => vec![BoundKind::Main, BoundKind::RateSummable],
        EngineKind::IkmZ => vec![BoundKind::Projected],
        EngineKind::Ishikawa => vec![BoundKind::Ishikawa],
        EngineKind::Dkm => vec![BoundKind::Diagonal],
    }
}

/// The bound written to the `bound_active` column for each engine.
pub fn active_bound(engine: EngineKind) -> BoundKind {
    match engine {
        EngineKind::Km => BoundKind::Exact,
        EngineKind::Ikm => BoundKind::Main,
        EngineKind::IkmZ => BoundKind::Projected,
        EngineKind::Ishikawa => BoundKind::Ishikawa,
        EngineKind::Dkm => BoundKind::Diagonal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "NA")]
    NotApplicable,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotApplicable => "NA",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound: String,
    pub status: CheckStatus,
    /// min over n of bound − measured.
    pub worst_margin: Option<f64>,
    pub worst_n: Option<usize>,
    pub note: Option<String>,
}

impl BoundCheck {
    fn na(bound: &str, note: impl Into<String>) -> Self {
        BoundCheck {
            bound: bound.to_string(),
            status: CheckStatus::NotApplicable,
            worst_margin: None,
            worst_n: None,
            note: Some(note.into()),
        }
    }

    fn compare(bound: &str, measured: &[f64], values: &[f64], tol: f64) -> Self {
        let d = check_domination(measured, values, tol);
        BoundCheck {
            bound: bound.to_string(),
            status: if d.pass { CheckStatus::Pass } else { CheckStatus::Fail },
            worst_margin: Some(d.worst_margin),
            worst_n: Some(d.worst_n),
            note: None,
        }
    }
}

impl fmt::Display for BoundCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.status, self.bound)?;
        if let (Some(m), Some(n)) = (self.worst_margin, self.worst_n) {
            write!(f, " worst_margin={m:.6e} at n={n}")?;
        }
        if let Some(note) = &self.note {
            write!(f, " ({note})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub engine: EngineKind,
    pub operator: String,
    pub kappa: Option<f64>,
    pub kappa_source: Option<String>,
    /// H0 violated or the anchor radius exceeded κ.
    pub flagged: bool,
    pub h0_violations: usize,
    pub max_anchor_distance: f64,
    pub final_residual: f64,
    /// max ∥x_n − x_m∥ over stored n, m in [N/2, N].
    pub tail_spread: f64,
    pub converged: bool,
    pub checks: Vec<BoundCheck>,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn render(&self) -> String {
        let kappa = match (self.kappa, &self.kappa_source) {
            (Some(k), Some(s)) => format!("{k:.6} ({s})"),
            _ => "unavailable".into(),
        };
        let mut out = format!(
            "seed={} engine={} operator={} kappa={kappa}\n  final_residual={:.6e} tail_spread={:.3e}{}{}\n",
            self.seed,
            self.engine,
            self.operator,
            self.final_residual,
            self.tail_spread,
            if self.converged { "" } else { " NONCONVERGENCE" },
            if self.flagged { " FLAGGED(H0)" } else { "" },
        );
        for c in &self.checks {
            out.push_str(&format!("  {c}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub trace: Trace,
    pub kappa: Kappa,
    /// The main bound in the engine's equivalent inexact form.
    pub main: Option<BoundSeries>,
    pub active: Option<BoundSeries>,
    /// Every requested bound that could be evaluated.
    pub bounds: Vec<BoundSeries>,
    pub report: RunReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config_hash: String,
    pub runs: Vec<RunResult>,
}

impl ExperimentOutcome {
    pub fn all_pass(&self) -> bool {
        self.runs.iter().all(|r| r.report.all_pass())
    }

    pub fn render(&self) -> String {
        let mut out = format!("config {}\n", &self.config_hash[..16]);
        for r in &self.runs {
            out.push_str(&r.report.render());
        }
        out.push_str(if self.all_pass() { "overall PASS\n" } else { "overall FAIL\n" });
        out
    }
}

enum Engine {
    Plain(OperatorSpec),
    Sequence(OperatorSequence),
}

impl Engine {
    fn limit(&self) -> &OperatorSpec {
        match self {
            Engine::Plain(op) => op,
            Engine::Sequence(seq) => seq.limit(),
        }
    }
}

/// Runs every seed of the experiment and writes artifacts when the config
/// names an output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let engine = match cfg.engine {
        EngineKind::Dkm => Engine::Sequence(cfg.sequence_spec()?),
        _ => Engine::Plain(cfg.operator_spec()?),
    };
    let x0 = Point::new(cfg.x0.clone(), engine.limit().norm())?;
    let schedule = cfg.schedule()?;
    let n = cfg.n_max;
    let table = schedule.table(n + 1);
    let kinds = cfg.bound_kinds()?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut opts = RunOptions::new(n).seed(seed);
        if let Some(s) = cfg.snapshot_every {
            opts = opts.snapshot_every(s);
        }
        let trace = match (&engine, cfg.engine) {
            (Engine::Plain(op), EngineKind::Km) => run_km(op, &x0, &schedule, &opts)?,
            (Engine::Plain(op), EngineKind::Ikm) => run_ikm(op, &x0, &schedule, &cfg.error_model()?, &opts)?,
            (Engine::Plain(op), EngineKind::IkmZ) => run_ikm_z(
                op,
                cfg.set.as_ref().expect("validated"),
                &x0,
                &schedule,
                &cfg.error_model()?,
                &cfg.gamma()?,
                &opts,
            )?,
            (Engine::Plain(op), EngineKind::Ishikawa) => run_ishikawa(op, &x0, &schedule, &cfg.beta()?, &opts)?,
            (Engine::Sequence(seq), _) => run_dkm(seq, &x0, &schedule, &opts)?,
            _ => unreachable!("engine and operator kinds are paired above"),
        };
        runs.push(evaluate_run(cfg, &engine, &x0, &schedule, &table, &kinds, seed, trace)?);
    }
    let outcome = ExperimentOutcome {
        config_hash: cfg.hash(),
        runs,
    };
    if let Some(out) = &cfg.output {
        write_artifacts(cfg, &outcome, &out.dir, &out.prefix)?;
    }
    Ok(outcome)
}

/// The error sequence ε_0..ε_{N+1} of the engine's equivalent inexact form.
fn equivalent_eps(cfg: &ExperimentConfig, engine: &Engine, table: &TauTable, trace: &Trace, kappa: f64) -> Result<Vec<f64>> {
    let n = trace.n_max();
    Ok(match cfg.engine {
        EngineKind::Km => vec![0.0; n + 2],
        EngineKind::Ikm => cfg.error_model()?.magnitude.sequence(table, n + 2),
        EngineKind::IkmZ => {
            let err = measured_errors(cfg, table, trace)?;
            let delta = trace.aux_column("delta").expect("ikm_z records delta");
            (0..=n + 1)
                .map(|i| if i == 0 { 0.0 } else { err[i] + delta[i - 1] })
                .collect()
        }
        EngineKind::Ishikawa => {
            let beta = cfg.beta()?;
            (0..=n + 1)
                .map(|i| if i == 0 { 0.0 } else { kappa * beta.alpha(i) })
                .collect()
        }
        EngineKind::Dkm => match engine {
            Engine::Sequence(seq) => (0..=n + 1).map(|i| if i == 0 { 0.0 } else { seq.rho(i) }).collect(),
            Engine::Plain(_) => unreachable!("dkm always runs a sequence"),
        },
    })
}

/// ∥e_0∥..∥e_N∥ from the trace, extended by the magnitude bound ε_{N+1}.
fn measured_errors(cfg: &ExperimentConfig, table: &TauTable, trace: &Trace) -> Result<Vec<f64>> {
    let n = trace.n_max();
    let mut err = trace.err_norms.clone();
    let next = match cfg.engine {
        EngineKind::Ikm | EngineKind::IkmZ => cfg.error_model()?.magnitude.value(n + 1, table),
        _ => 0.0,
    };
    err.push(next);
    Ok(err)
}

fn resolve_run_kappa(cfg: &ExperimentConfig, engine: &Engine, x0: &Point, table: &TauTable, s_eps: &[f64]) -> Kappa {
    let op = engine.limit();
    match cfg.engine {
        EngineKind::Ishikawa => match (cfg.kappa, op.domain().diameter(op.norm())) {
            (Some(value), _) => Kappa::Value {
                value,
                source: KappaSource::UserSupplied,
            },
            (None, Some(value)) => Kappa::Value {
                value,
                source: KappaSource::Diameter,
            },
            (None, None) => Kappa::Unavailable,
        },
        EngineKind::IkmZ => {
            if let Some(value) = cfg.kappa {
                return Kappa::Value {
                    value,
                    source: KappaSource::UserSupplied,
                };
            }
            if let Some(value) = op.range_radius(x0) {
                return Kappa::Value {
                    value,
                    source: KappaSource::RangeBound,
                };
            }
            match cfg.set.as_ref().and_then(|c| c.sup_distance_from(x0)) {
                Some(value) => Kappa::Value {
                    value,
                    source: KappaSource::BoundedDomain,
                },
                None => Kappa::Unavailable,
            }
        }
        _ => {
            let s: f64 = (1..s_eps.len()).map(|k| table.alpha(k.min(table.n_max())) * s_eps[k]).sum();
            resolve_kappa(op, x0, s, cfg.kappa)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate_run(
    cfg: &ExperimentConfig,
    engine: &Engine,
    x0: &Point,
    schedule: &StepSchedule,
    table: &TauTable,
    kinds: &[BoundKind],
    seed: u64,
    trace: Trace,
) -> Result<RunResult> {
    let n = trace.n_max();
    let s_eps: Vec<f64> = match (cfg.engine, engine) {
        (EngineKind::Ikm, _) => cfg.error_model()?.magnitude.sequence(table, n + 1),
        (EngineKind::Dkm, Engine::Sequence(seq)) => (0..=n).map(|i| if i == 0 { 0.0 } else { seq.rho(i) }).collect(),
        _ => vec![0.0; n + 1],
    };
    let kappa = resolve_run_kappa(cfg, engine, x0, table, &s_eps);
    let measured = &trace.residuals;
    let (tail_spread, converged) = tail_spread(&trace, cfg.cauchy_tol);
    let mut report = RunReport {
        seed,
        engine: cfg.engine,
        operator: trace.provenance.operator.clone(),
        kappa: kappa.value(),
        kappa_source: match kappa {
            Kappa::Value { source, .. } => Some(source.to_string()),
            Kappa::Unavailable => None,
        },
        flagged: false,
        h0_violations: trace.h0_violations.len(),
        max_anchor_distance: trace.max_anchor_distance,
        final_residual: *measured.last().expect("trace has n = 0"),
        tail_spread,
        converged,
        checks: Vec::new(),
    };
    let Some(k) = kappa.value() else {
        report.checks = kinds.iter().map(|b| BoundCheck::na(b.name(), "kappa unavailable")).collect();
        return Ok(RunResult {
            seed,
            trace,
            kappa,
            main: None,
            active: None,
            bounds: Vec::new(),
            report,
        });
    };
    report.flagged = trace.is_flagged(k);
    let eps = equivalent_eps(cfg, engine, table, &trace, k)?;
    let main = MainBound::new(table, &eps, n).curve(k);
    let errs = measured_errors(cfg, table, &trace)?;
    let zero_errors = eps.iter().all(|&e| e == 0.0);

    let phi_power = cfg.phi_power;
    let phi = move |x: f64| x.powf(phi_power.unwrap_or(0.0));
    let phi_ref: Option<&dyn Fn(f64) -> f64> = if phi_power.is_some() { Some(&phi) } else { None };

    let mut series = Vec::new();
    let evaluate = |kind: BoundKind| -> std::result::Result<BoundSeries, String> {
        use EngineKind as E;
        let engine_only = |want: E| {
            if cfg.engine == want {
                Ok(())
            } else {
                Err(format!("applies to the {want} engine only"))
            }
        };
        match kind {
            BoundKind::Exact => {
                if zero_errors && cfg.engine != E::IkmZ {
                    Ok(exact_curve(k, table, n))
                } else {
                    Err("errors are nonzero".into())
                }
            }
            BoundKind::Main => {
                if cfg.engine == E::IkmZ {
                    Err("controls the x-steps, not the residual at z".into())
                } else {
                    Ok(main.clone())
                }
            }
            BoundKind::RateSummable | BoundKind::RateWeighted => {
                if cfg.engine == E::IkmZ {
                    return Err("not defined for inexact projections".into());
                }
                let (plain, weighted) =
                    rate_summable_curves(k, schedule, &errs, phi_ref, n).map_err(|e| e.to_string())?;
                if kind == BoundKind::RateSummable {
                    Ok(plain)
                } else {
                    weighted.ok_or_else(|| "phi_power not set".to_string())
                }
            }
            BoundKind::RateTau => {
                let params = match (cfg.rate, cfg.error_model().map(|m| m.magnitude)) {
                    (Some(r), _) => (r.k, r.a),
                    (None, Ok(Magnitude::TauPower { k, a })) if cfg.engine == E::Ikm => (k, a),
                    (None, _) if zero_errors => (0.0, 1.0),
                    _ => return Err("needs rate parameters K and a".into()),
                };
                if !matches!(cfg.engine, E::Km | E::Ikm) {
                    return Err("applies to km and ikm".into());
                }
                rate_tau_curve(k, table, params.0, params.1, &eps, n).map_err(|e| e.to_string())
            }
            BoundKind::Ishikawa => {
                engine_only(E::Ishikawa)?;
                Ok(ishikawa_curve(k, table, &beta_values(cfg, n), n))
            }
            BoundKind::Diagonal => {
                engine_only(E::Dkm)?;
                Ok(diagonal_curve(k, table, &eps, n))
            }
            BoundKind::Projected => {
                engine_only(E::IkmZ)?;
                let delta = trace.aux_column("delta").expect("ikm_z records delta");
                Ok(projected_curve(k, table, &errs, delta, n))
            }
        }
    };
    let mut active = None;
    let want_active = active_bound(cfg.engine);
    for &kind in kinds {
        match evaluate(kind) {
            Ok(s) => {
                let check = if report.flagged {
                    BoundCheck::na(kind.name(), "H0 violated or anchor radius exceeds kappa")
                } else {
                    BoundCheck::compare(kind.name(), measured, &s.values, DOMINATION_TOL)
                };
                report.checks.push(check);
                series.push(s);
            }
            Err(note) => report.checks.push(BoundCheck::na(kind.name(), note)),
        }
    }
    if let Some(s) = series.iter().find(|s| s.kind == want_active) {
        active = Some(s.clone());
    } else if let Ok(s) = evaluate(want_active) {
        active = Some(s);
    }
    Ok(RunResult {
        seed,
        trace,
        kappa,
        main: Some(main),
        active,
        bounds: series,
        report,
    })
}

fn beta_values(cfg: &ExperimentConfig, n: usize) -> Vec<f64> {
    let beta = cfg.beta().expect("validated");
    (0..=n + 1).map(|i| if i == 0 { 0.0 } else { beta.alpha(i) }).collect()
}

fn tail_spread(trace: &Trace, tol: f64) -> (f64, bool) {
    const MAX_POINTS: usize = 256;
    let n = trace.n_max();
    let stored: Vec<&Point> = (n / 2..=n).filter_map(|i| trace.point(i)).collect();
    let step = stored.len().div_ceil(MAX_POINTS).max(1);
    let mut pts: Vec<&Point> = stored.iter().step_by(step).copied().collect();
    pts.push(trace.final_point());
    let mut spread = 0.0f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            spread = spread.max(a.dist(b));
        }
    }
    (spread, spread <= tol)
}

fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

/// Writes `<prefix>_seed<s>_trace.csv`, `_bounds.csv`, `_meta.json` per seed
/// and `<prefix>_report.txt`.
pub fn write_artifacts(cfg: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path, prefix: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    for run in &outcome.runs {
        let stem = dir.join(format!("{prefix}_seed{}", run.seed));
        write_trace_csv(run, &with_suffix(&stem, "_trace.csv"))?;
        write_bounds_csv(run, &with_suffix(&stem, "_bounds.csv"))?;
        let meta = Metadata {
            config_hash: &outcome.config_hash,
            config: cfg,
            provenance: &run.trace.provenance,
            kappa: run.kappa.value(),
            kappa_source: run.report.kappa_source.as_deref(),
            h0_violations: &run.trace.h0_violations,
            report: &run.report,
        };
        fs::write(with_suffix(&stem, "_meta.json"), serde_json::to_string_pretty(&meta)?)?;
    }
    fs::write(dir.join(format!("{prefix}_report.txt")), outcome.render())?;
    Ok(())
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Serialize)]
struct Metadata<'a> {
    config_hash: &'a str,
    config: &'a ExperimentConfig,
    provenance: &'a crate::engines::Provenance,
    kappa: Option<f64>,
    kappa_source: Option<&'a str>,
    h0_violations: &'a [usize],
    report: &'a RunReport,
}

fn write_trace_csv(run: &RunResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let aux: Vec<(&String, &Vec<f64>)> = run.trace.aux.iter().collect();
    let mut header = vec!["n".to_string(), "residual".into(), "err_norm".into(), "bound_main".into(), "bound_active".into()];
    header.extend(aux.iter().map(|(k, _)| k.to_string()));
    w.write_record(&header)?;
    let col = |s: &Option<BoundSeries>, i: usize| s.as_ref().map_or(String::new(), |s| fmt_f(s.values[i]));
    for i in 0..run.trace.len() {
        let mut row = vec![
            i.to_string(),
            fmt_f(run.trace.residuals[i]),
            fmt_f(run.trace.err_norms[i]),
            col(&run.main, i),
            col(&run.active, i),
        ];
        row.extend(aux.iter().map(|(_, v)| v.get(i).map_or(String::new(), |x| fmt_f(*x))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_bounds_csv(run: &RunResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["n".to_string()];
    header.extend(run.bounds.iter().map(|b| b.column()));
    w.write_record(&header)?;
    for i in 0..run.trace.len() {
        let mut row = vec![i.to_string()];
        row.extend(run.bounds.iter().map(|b| fmt_f(b.values[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one numeric column of a CSV with a header, paired with its `n` (or
/// `t`) column when present and the row index otherwise.
pub fn read_csv_column(path: &Path, column: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let yi = find(column).ok_or_else(|| Error::Config(format!("no column '{column}' in {}", path.display())))?;
    let xi = find("n").or_else(|| find("t"));
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("row {row}: column {i} is not a number")))
        };
        ys.push(parse(yi)?);
        xs.push(match xi {
            Some(i) => parse(i)?,
            None => row as f64,
        });
    }
    Ok((xs, ys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    Zero,
    PowerLaw { k: f64, a: f64, direction: Vec<f64> },
    Custom { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl Default for ForcingConfig {
    fn default() -> Self {
        ForcingConfig::Zero
    }
}

impl ForcingConfig {
    pub fn build(&self, norm: NormKind) -> Result<Forcing> {
        match self {
            ForcingConfig::Zero => Ok(Forcing::Zero),
            ForcingConfig::PowerLaw { k, a, direction } => {
                Forcing::power_law(*k, *a, Point::new(direction.clone(), norm)?)
            }
            ForcingConfig::Custom { times, values } => Forcing::custom(
                times.clone(),
                values.iter().map(|v| Point::new(v.clone(), norm)).collect::<Result<_>>()?,
            ),
        }
    }
}

fn default_checks() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub operator: OperatorConfig,
    #[serde(default)]
    pub norm: NormKind,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub forcing: ForcingConfig,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Number of sample times at which the bound is evaluated.
    #[serde(default = "default_checks")]
    pub checks: usize,
    /// Step counts n for the discretization comparison at t_end.
    #[serde(default)]
    pub discretize: Vec<usize>,
    #[serde(default)]
    pub phi_power: Option<f64>,
    /// CSV of t, residual, deriv_norm, bound.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl EvolveConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationRow {
    pub n: usize,
    /// ∥x_n^n − u(t)∥.
    pub state_gap: f64,
    /// ∥(x_{n+1}^n − x_n^n)/λ − u′(t)∥.
    pub derivative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveReport {
    pub kappa: Option<f64>,
    pub kappa_source: Option<String>,
    pub max_local_error: f64,
    pub final_residual: f64,
    pub checks: Vec<BoundCheck>,
    pub discretization: Vec<DiscretizationRow>,
}

impl EvolveReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "kappa={} max_local_error={:.3e} final_residual={:.6e}\n",
            self.kappa.map_or("unavailable".into(), |k| format!("{k:.6}")),
            self.max_local_error,
            self.final_residual
        );
        for c in &self.checks {
            out.push_str(&format!("  {c}\n"));
        }
        for d in &self.discretization {
            out.push_str(&format!(
                "  n={} state_gap={:.3e} derivative_gap={:.3e}\n",
                d.n, d.state_gap, d.derivative_gap
            ));
        }
        out
    }
}

/// Integrates the evolution equation and checks ∥u − Tu∥ against the
/// continuous bound and, for integrable forcing, the rate bounds.
pub fn run_evolve(cfg: &EvolveConfig) -> Result<EvolveReport> {
    let op = cfg.operator.build(cfg.norm)?;
    let x0 = Point::new(cfg.x0.clone(), cfg.norm)?;
    let forcing = cfg.forcing.build(cfg.norm)?;
    let problem = EvolutionProblem::new(op.clone(), forcing.clone(), x0.clone())?;
    let trace = evolution::integrate(&problem, cfg.t_end, cfg.dt)?;
    let s = forcing.tail_integral(0.0).ok();
    let kappa = resolve_kappa(&op, &x0, s.unwrap_or(0.0), cfg.kappa);
    let kappa = match (kappa, s, cfg.kappa) {
        (Kappa::Value { source: KappaSource::FixedPointDistance, .. }, None, None) => Kappa::Unavailable,
        (k, _, _) => k,
    };
    let mut checks = Vec::new();
    let samples: Vec<usize> = {
        let len = trace.times.len();
        let step = len.div_ceil(cfg.checks.max(1)).max(1);
        let mut v: Vec<usize> = (0..len).step_by(step).collect();
        if v.last() != Some(&(len - 1)) {
            v.push(len - 1);
        }
        v
    };
    if let Some(k) = kappa.value() {
        let anchor = trace
            .points
            .iter()
            .map(|u| op.apply_unchecked(u).dist(&x0))
            .fold(0.0f64, f64::max);
        let eps = |t: f64| forcing.epsilon(t);
        let measured: Vec<f64> = samples.iter().map(|&i| trace.deriv_norms[i]).collect();
        let bound: Vec<f64> = samples
            .iter()
            .map(|&i| evolution::bound_continuous(k, &eps, trace.times[i], 1e-10))
            .collect();
        let tol = 1e-6;
        if anchor > k * (1.0 + 1e-9) + 1e-9 {
            checks.push(BoundCheck::na("continuous", "anchor radius exceeds kappa"));
        } else {
            let mut c = BoundCheck::compare("continuous", &measured, &bound, tol);
            c.worst_n = c.worst_n.map(|j| samples[j]);
            checks.push(c);
            let phi_power = cfg.phi_power;
            let phi = move |x: f64| x.powf(phi_power.unwrap_or(0.0));
            let phi_ref: Option<&dyn Fn(f64) -> f64> = if phi_power.is_some() { Some(&phi) } else { None };
            match s {
                Some(s) => {
                    let late: Vec<usize> = samples.iter().copied().filter(|&i| trace.times[i] >= 1.0).collect();
                    let rates: Result<Vec<_>> = late
                        .iter()
                        .map(|&i| evolution::bound_continuous_rate(k, s, &forcing, phi_ref, trace.times[i]))
                        .collect();
                    match rates {
                        Ok(rates) if !rates.is_empty() => {
                            let m: Vec<f64> = late.iter().map(|&i| trace.deriv_norms[i]).collect();
                            let plain: Vec<f64> = rates.iter().map(|r| r.plain).collect();
                            let mut c = BoundCheck::compare("continuous_rate", &m, &plain, tol);
                            c.worst_n = c.worst_n.map(|j| late[j]);
                            checks.push(c);
                            if let Some(w) = rates.iter().map(|r| r.weighted).collect::<Option<Vec<f64>>>() {
                                let mut c = BoundCheck::compare("continuous_rate_weighted", &m, &w, tol);
                                c.worst_n = c.worst_n.map(|j| late[j]);
                                checks.push(c);
                            }
                        }
                        Ok(_) => checks.push(BoundCheck::na("continuous_rate", "horizon shorter than t = 1")),
                        Err(e) => checks.push(BoundCheck::na("continuous_rate", e.to_string())),
                    }
                }
                None => checks.push(BoundCheck::na("continuous_rate", "forcing is not integrable")),
            }
        }
        if let Some(path) = &cfg.output {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["t", "residual", "deriv_norm", "bound"])?;
            for (j, &i) in samples.iter().enumerate() {
                w.write_record([
                    fmt_f(trace.times[i]),
                    fmt_f(trace.residuals[i]),
                    fmt_f(trace.deriv_norms[i]),
                    fmt_f(bound[j]),
                ])?;
            }
            w.flush()?;
        }
    } else {
        checks.push(BoundCheck::na("continuous", "kappa unavailable"));
    }
    let u_end = trace.points.last().expect("trace has t = 0");
    let t_end = *trace.times.last().expect("trace has t = 0");
    let du = problem.velocity(t_end, u_end);
    let mut discretization = Vec::new();
    if t_end > 0.0 {
        for &n in &cfg.discretize {
            let d = evolution::discretize_scheme(&problem, t_end, n)?;
            discretization.push(DiscretizationRow {
                n,
                state_gap: d.x.dist(u_end),
                derivative_gap: d.quotient.dist(&du),
            });
        }
    }
    Ok(EvolveReport {
        kappa: kappa.value(),
        kappa_source: match kappa {
            Kappa::Value { source, .. } => Some(source.to_string()),
            Kappa::Unavailable => None,
        },
        max_local_error: trace.max_local_error,
        final_residual: *trace.residuals.last().expect("trace has t = 0"),
        checks,
        discretization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation_cfg() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"engine":"ikm","operator":{"id":"rotation","angle":1.0},
                "x0":[1.0,0.0],"schedule":"const:0.5",
                "errors":{"eps":"power:K=0.5,a=2","dir":"random"},
                "n_max":400,"seeds":[1,2],"bounds":["main","rate_summable","exact"]}"#,
        )
        .unwrap()
    }

    #[test]
    fn config_round_trips_and_hash_is_stable() {
        let cfg = rotation_cfg();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn rejects_unknown_fields_and_missing_parts() {
        assert!(ExperimentConfig::from_json(r#"{"engine":"km","x0":[0],"schedule":"const:0.5","n_max":3,"bogus":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"engine":"km","x0":[0],"schedule":"const:0.5","n_max":3}"#).is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"engine":"ishikawa","operator":{"id":"identity","dim":1},"x0":[0],"schedule":"const:0.5","n_max":3}"#
        )
        .is_err());
    }

    #[test]
    fn ikm_rotation_passes_main_and_flags_exact_na() {
        let out = run_experiment(&rotation_cfg()).unwrap();
        assert_eq!(out.runs.len(), 2);
        for run in &out.runs {
            let checks: Vec<_> = run.report.checks.iter().map(|c| (c.bound.as_str(), c.status)).collect();
            assert_eq!(
                checks,
                vec![
                    ("main", CheckStatus::Pass),
                    ("rate_summable", CheckStatus::Pass),
                    ("exact", CheckStatus::NotApplicable)
                ]
            );
            assert_eq!(run.report.kappa_source.as_deref(), Some("fixed-point-distance"));
        }
        assert!(out.all_pass());
    }

    #[test]
    fn identity_with_harmonic_steps_is_flagged_nonconvergent() {
        let cfg = ExperimentConfig::from_json(
            r#"{"engine":"ikm","operator":{"id":"identity","dim":2},"x0":[0,0],
                "schedule":"const:0.5","errors":{"eps":"power:K=1,a=1","dir":"fixed:1,0"},
                "n_max":2000,"kappa":20.0,"bounds":["main"]}"#,
        )
        .unwrap();
        let out = run_experiment(&cfg).unwrap();
        let r = &out.runs[0].report;
        assert!(!r.converged);
        assert_eq!(r.checks[0].status, CheckStatus::Pass);
    }

    #[test]
    fn artifacts_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = rotation_cfg();
        cfg.seeds = vec![7];
        cfg.output = Some(OutputConfig {
            dir: dir.path().to_path_buf(),
            prefix: "rot".into(),
        });
        run_experiment(&cfg).unwrap();
        let trace = dir.path().join("rot_seed7_trace.csv");
        let (xs, ys) = read_csv_column(&trace, "residual").unwrap();
        assert_eq!(xs.len(), 401);
        assert_eq!(xs[400], 400.0);
        assert!(ys.iter().all(|y| *y >= 0.0));
        let header = fs::read_to_string(&trace).unwrap();
        assert!(header.starts_with("n,residual,err_norm,bound_main,bound_active"));
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("rot_seed7_meta.json")).unwrap()).unwrap();
        assert_eq!(meta["config_hash"].as_str().unwrap(), cfg.hash());
        assert!(dir.path().join("rot_report.txt").exists());
    }

    #[test]
    fn every_engine_runs_from_config() {
        let configs = [
            r#"{"engine":"km","operator":{"id":"projection","set":{"kind":"ball","center":[0,0],"radius":1}},
                "x0":[3,4],"schedule":"power:1","n_max":200}"#,
            r#"{"engine":"ikm_z","operator":{"id":"rotation","angle":0.7},
                "set":{"kind":"ball","center":[0,0],"radius":2},"x0":[1,1],"schedule":"const:0.5",
                "errors":{"eps":"power:K=0.1,a=2"},"gamma":"power:K=0.1,a=2","n_max":200}"#,
            r#"{"engine":"ishikawa","operator":{"id":"projection","set":{"kind":"ball","center":[0,0],"radius":1}},
                "domain":{"kind":"box","lower":[-2,-2],"upper":[2,2]},
                "x0":[2,2],"schedule":"const:0.5","beta":"power:2","n_max":200}"#,
            r#"{"engine":"dkm","sequence":{"family":"shrinking_ball","center":[0,0],"radius":1},
                "x0":[1.5,0],"schedule":"const:0.5","n_max":200}"#,
        ];
        for text in configs {
            let cfg = ExperimentConfig::from_json(text).unwrap();
            let out = run_experiment(&cfg).unwrap();
            assert!(out.all_pass(), "{}", out.render());
            assert!(out.runs[0].report.checks.iter().any(|c| c.status == CheckStatus::Pass));
        }
    }

    #[test]
    fn evolve_rotation_is_dominated() {
        let cfg = EvolveConfig::from_json(
            r#"{"operator":{"id":"rotation","angle":1.5707963267948966},"x0":[1,0],
                "forcing":{"kind":"power_law","k":0.5,"a":2,"direction":[0,1]},
                "t_end":20,"dt":0.01,"discretize":[100,1000],"phi_power":1.0}"#,
        )
        .unwrap();
        let r = run_evolve(&cfg).unwrap();
        assert!(r.all_pass(), "{}", r.render());
        assert_eq!(r.checks.len(), 3);
        assert!(r.discretization[1].state_gap < r.discretization[0].state_gap);
    }
}
