//! Iteration drivers: KM, inexact KM, KM with inexact projections, Ishikawa
//! and diagonal KM. Every driver returns a [`Trace`].
//!
//! All averaging steps are evaluated as `x + α(y − x)`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{OperatorSequence, OperatorSpec};
use crate::schedules::{ErrorModel, ErrorStream, Magnitude, StepSchedule};
use crate::spaces::{ConvexSet, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Km,
    Ikm,
    IkmZ,
    Ishikawa,
    Dkm,
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EngineKind::Km => "km",
            EngineKind::Ikm => "ikm",
            EngineKind::IkmZ => "ikm_z",
            EngineKind::Ishikawa => "ishikawa",
            EngineKind::Dkm => "dkm",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine: EngineKind,
    pub operator: String,
    pub schedule: String,
    pub error_model: String,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub n_max: usize,
    pub seed: u64,
    /// Stride between stored iterates; defaults to 1 up to 10^4 steps, else 16.
    pub snapshot_every: Option<usize>,
    /// Keep the operator outputs y_{n−1} fed into each averaging step.
    pub record_outputs: bool,
}

impl RunOptions {
    pub fn new(n_max: usize) -> Self {
        RunOptions {
            n_max,
            seed: 0,
            snapshot_every: None,
            record_outputs: false,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn snapshot_every(mut self, stride: usize) -> Self {
        self.snapshot_every = Some(stride.max(1));
        self
    }

    pub fn record_outputs(mut self) -> Self {
        self.record_outputs = true;
        self
    }

    fn stride(&self) -> usize {
        self.snapshot_every
            .unwrap_or(if self.n_max <= 10_000 { 1 } else { 16 })
    }
}

/// Per-step scalars plus strided snapshots of the iterates.
#[derive(Debug, Clone)]
pub struct Trace {
    pub provenance: Provenance,
    /// The residual the engine controls, indexed by n.
    pub residuals: Vec<f64>,
    /// ∥e_n∥ with e_0 = 0.
    pub err_norms: Vec<f64>,
    /// Extra scalar columns, each indexed by n.
    pub aux: BTreeMap<String, Vec<f64>>,
    /// y_{−1} = x_0, y_0, ..., y_{n_max−1} when recorded.
    pub outputs: Vec<Point>,
    /// Steps at which an iterate was outside the operator domain.
    pub h0_violations: Vec<usize>,
    /// max_n ∥Tx_n − x_0∥, the smallest κ the run is consistent with.
    pub max_anchor_distance: f64,
    stride: usize,
    snapshots: Vec<Point>,
    aux_points: BTreeMap<String, Vec<Point>>,
    last: Point,
    last_aux: BTreeMap<String, Point>,
}

impl Trace {
    fn start(provenance: Provenance, x0: &Point, opts: &RunOptions) -> Self {
        let cap = opts.n_max + 1;
        Trace {
            provenance,
            residuals: Vec::with_capacity(cap),
            err_norms: Vec::with_capacity(cap),
            aux: BTreeMap::new(),
            outputs: if opts.record_outputs {
                vec![x0.clone()]
            } else {
                Vec::new()
            },
            h0_violations: Vec::new(),
            max_anchor_distance: 0.0,
            stride: opts.stride(),
            snapshots: Vec::new(),
            aux_points: BTreeMap::new(),
            last: x0.clone(),
            last_aux: BTreeMap::new(),
        }
    }

    fn record(&mut self, n: usize, x: &Point, residual: f64, err_norm: f64, anchor: f64) {
        debug_assert_eq!(self.residuals.len(), n);
        if n % self.stride == 0 {
            self.snapshots.push(x.clone());
        }
        self.last = x.clone();
        self.residuals.push(residual);
        self.err_norms.push(err_norm);
        self.max_anchor_distance = self.max_anchor_distance.max(anchor);
    }

    fn record_aux(&mut self, key: &str, value: f64) {
        self.aux.entry(key.to_string()).or_default().push(value);
    }

    fn record_aux_point(&mut self, n: usize, key: &str, p: &Point) {
        if n % self.stride == 0 {
            self.aux_points.entry(key.to_string()).or_default().push(p.clone());
        }
        self.last_aux.insert(key.to_string(), p.clone());
    }

    pub fn n_max(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn snapshot_every(&self) -> usize {
        self.stride
    }

    /// x_n when it was stored.
    pub fn point(&self, n: usize) -> Option<&Point> {
        if n == self.n_max() {
            Some(&self.last)
        } else if n % self.stride == 0 {
            self.snapshots.get(n / self.stride)
        } else {
            None
        }
    }

    /// An auxiliary point such as z_n or y_n when it was stored.
    pub fn aux_point(&self, key: &str, n: usize) -> Option<&Point> {
        if n == self.n_max() {
            self.last_aux.get(key)
        } else if n % self.stride == 0 {
            self.aux_points.get(key)?.get(n / self.stride)
        } else {
            None
        }
    }

    pub fn final_point(&self) -> &Point {
        &self.last
    }

    pub fn aux_column(&self, key: &str) -> Option<&[f64]> {
        self.aux.get(key).map(Vec::as_slice)
    }

    /// True when the run leaves the domain or exceeds the anchor radius κ,
    /// so residual bounds built on κ do not apply to it.
    pub fn is_flagged(&self, kappa: f64) -> bool {
        !self.h0_violations.is_empty() || self.max_anchor_distance > kappa * (1.0 + 1e-12) + 1e-12
    }

    /// Residual at n recomputed from the stored point, for self-consistency
    /// checks. Uses z_n for the projected engine.
    pub fn recompute_residual(&self, op: &OperatorSpec, n: usize) -> Option<f64> {
        let p = match self.provenance.engine {
            EngineKind::IkmZ => self.aux_point("z", n)?,
            _ => self.point(n)?,
        };
        Some(p.dist(&op.apply_unchecked(p)))
    }
}

fn check_start(op: &OperatorSpec, x0: &Point) -> Result<()> {
    if x0.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: x0.dim(),
        });
    }
    if x0.norm_kind() != op.norm() {
        return Err(Error::UnsupportedCombination(format!(
            "x0 is tagged {} but the operator works in {}",
            x0.norm_kind(),
            op.norm()
        )));
    }
    if !op.domain().contains(x0) {
        return Err(Error::DomainViolation { step: Some(0) });
    }
    Ok(())
}

fn provenance(
    engine: EngineKind,
    op: &OperatorSpec,
    schedule: &StepSchedule,
    error_model: String,
    seed: u64,
) -> Provenance {
    Provenance {
        engine,
        operator: op.to_string(),
        schedule: schedule.to_string(),
        error_model,
        seed,
    }
}

fn describe_errors(model: &ErrorModel) -> String {
    format!("eps={} dir={}", model.magnitude, model.direction)
}

/// x_{n+1} = x_n + α_{n+1}(Tx_n − x_n).
pub fn run_km(op: &OperatorSpec, x0: &Point, schedule: &StepSchedule, opts: &RunOptions) -> Result<Trace> {
    check_start(op, x0)?;
    let prov = provenance(EngineKind::Km, op, schedule, "none".into(), opts.seed);
    let mut trace = Trace::start(prov, x0, opts);
    let mut x = x0.clone();
    for n in 0..=opts.n_max {
        if !op.domain().contains(&x) {
            return Err(Error::DomainViolation { step: Some(n) });
        }
        let tx = op.apply_unchecked(&x);
        trace.record(n, &x, x.dist(&tx), 0.0, tx.dist(x0));
        if n == opts.n_max {
            break;
        }
        x = x.lerp(&tx, schedule.alpha(n + 1));
        if opts.record_outputs {
            trace.outputs.push(tx);
        }
    }
    Ok(trace)
}

/// x_{n+1} = x_n + α_{n+1}(Tx_n + e_{n+1} − x_n) with ∥e_n∥ = ε_n.
///
/// Iterates outside the domain are recorded in `h0_violations` and the run
/// continues with T evaluated by formula.
pub fn run_ikm(
    op: &OperatorSpec,
    x0: &Point,
    schedule: &StepSchedule,
    errors: &ErrorModel,
    opts: &RunOptions,
) -> Result<Trace> {
    check_start(op, x0)?;
    errors.magnitude.validate()?;
    let table = schedule.table(opts.n_max + 1);
    let mut stream = ErrorStream::new(&errors.direction, op.dim(), op.norm(), opts.seed)?;
    let prov = provenance(EngineKind::Ikm, op, schedule, describe_errors(errors), opts.seed);
    let mut trace = Trace::start(prov, x0, opts);
    let mut x = x0.clone();
    let mut err = 0.0;
    for n in 0..=opts.n_max {
        if !op.domain().contains(&x) {
            trace.h0_violations.push(n);
        }
        let tx = op.apply_unchecked(&x);
        trace.record(n, &x, x.dist(&tx), err, tx.dist(x0));
        if n == opts.n_max {
            break;
        }
        let eps = errors.magnitude.value(n + 1, &table);
        let y = if eps > 0.0 {
            let e = stream.emit(eps, Some(&x.sub(&tx)));
            err = e.norm();
            tx.add(&e)
        } else {
            err = 0.0;
            tx
        };
        x = x.lerp(&y, table.alpha(n + 1));
        if opts.record_outputs {
            trace.outputs.push(y);
        }
    }
    Ok(trace)
}

/// KM with inexact projections: z_n ∈ C with ∥z_n − x_n∥ <= d(x_n, C) + γ_n,
/// then x_{n+1} = x_n + α_{n+1}(Tz_n + e_{n+1} − x_n).
///
/// The residual column holds ∥z_n − Tz_n∥. Aux columns: `delta` (δ_n =
/// d(x_n, C) + γ_n), `dist`, `gamma` and `x_gap` (∥x_n − z_n∥); z_n is stored
/// as the aux point `z`.
pub fn run_ikm_z(
    op: &OperatorSpec,
    set: &ConvexSet,
    x0: &Point,
    schedule: &StepSchedule,
    errors: &ErrorModel,
    gamma: &Magnitude,
    opts: &RunOptions,
) -> Result<Trace> {
    check_start(op, x0)?;
    if !set.contains(x0) {
        return Err(Error::DomainViolation { step: Some(0) });
    }
    errors.magnitude.validate()?;
    gamma.validate()?;
    let table = schedule.table(opts.n_max + 1);
    let mut stream = ErrorStream::new(&errors.direction, op.dim(), op.norm(), opts.seed)?;
    let prov = provenance(
        EngineKind::IkmZ,
        op,
        schedule,
        format!("{} gamma={gamma}", describe_errors(errors)),
        opts.seed,
    );
    let mut trace = Trace::start(prov, x0, opts);
    let mut x = x0.clone();
    let mut err = 0.0;
    for n in 0..=opts.n_max {
        let g = gamma.value(n, &table);
        let d = set.distance(&x)?;
        let z = set.project(&x, g)?;
        if !op.domain().contains(&z) {
            trace.h0_violations.push(n);
        }
        let tz = op.apply_unchecked(&z);
        trace.record(n, &x, z.dist(&tz), err, tz.dist(x0));
        trace.record_aux("delta", d + g);
        trace.record_aux("dist", d);
        trace.record_aux("gamma", g);
        trace.record_aux("x_gap", x.dist(&z));
        trace.record_aux_point(n, "z", &z);
        if n == opts.n_max {
            break;
        }
        let eps = errors.magnitude.value(n + 1, &table);
        let y = if eps > 0.0 {
            let e = stream.emit(eps, Some(&z.sub(&tz)));
            err = e.norm();
            tz.add(&e)
        } else {
            err = 0.0;
            tz
        };
        x = x.lerp(&y, table.alpha(n + 1));
        if opts.record_outputs {
            trace.outputs.push(y);
        }
    }
    Ok(trace)
}

/// y_n = x_n + β_{n+1}(Tx_n − x_n), x_{n+1} = x_n + α_{n+1}(Ty_n − x_n).
///
/// The error column holds ∥e_n∥ for the equivalent inexact iteration,
/// e_{n+1} = Ty_n − Tx_n; y_n is stored as the aux point `y`.
pub fn run_ishikawa(
    op: &OperatorSpec,
    x0: &Point,
    alpha: &StepSchedule,
    beta: &StepSchedule,
    opts: &RunOptions,
) -> Result<Trace> {
    check_start(op, x0)?;
    let prov = provenance(
        EngineKind::Ishikawa,
        op,
        alpha,
        format!("beta={beta}"),
        opts.seed,
    );
    let mut trace = Trace::start(prov, x0, opts);
    let mut x = x0.clone();
    let mut err = 0.0;
    for n in 0..=opts.n_max {
        if !op.domain().contains(&x) {
            return Err(Error::DomainViolation { step: Some(n) });
        }
        let tx = op.apply_unchecked(&x);
        trace.record(n, &x, x.dist(&tx), err, tx.dist(x0));
        if n == opts.n_max {
            trace.record_aux_point(n, "y", &x);
            break;
        }
        let b = beta.alpha(n + 1);
        let (y, ty) = if b == 0.0 {
            (x.clone(), tx.clone())
        } else {
            let y = x.lerp(&tx, b);
            let ty = op.apply_unchecked(&y);
            (y, ty)
        };
        err = ty.dist(&tx);
        trace.record_aux_point(n, "y", &y);
        x = x.lerp(&ty, alpha.alpha(n + 1));
        if opts.record_outputs {
            trace.outputs.push(ty);
        }
    }
    Ok(trace)
}

/// x_{n+1} = x_n + α_{n+1}(T_{n+1}x_n − x_n).
///
/// Residuals are measured against the limit T, and the error column holds
/// ∥T_n x_{n−1} − Tx_{n−1}∥. The aux column `rho` holds ρ_n with ρ_0 = 0.
pub fn run_dkm(
    seq: &OperatorSequence,
    x0: &Point,
    schedule: &StepSchedule,
    opts: &RunOptions,
) -> Result<Trace> {
    let limit = seq.limit();
    check_start(limit, x0)?;
    let prov = provenance(EngineKind::Dkm, limit, schedule, format!("{seq:?}"), opts.seed);
    let mut trace = Trace::start(prov, x0, opts);
    let mut x = x0.clone();
    let mut err = 0.0;
    for n in 0..=opts.n_max {
        if !limit.domain().contains(&x) {
            return Err(Error::DomainViolation { step: Some(n) });
        }
        let tx = limit.apply_unchecked(&x);
        trace.record(n, &x, x.dist(&tx), err, tx.dist(x0));
        trace.record_aux("rho", if n == 0 { 0.0 } else { seq.rho(n) });
        if n == opts.n_max {
            break;
        }
        let tnx = seq.operator(n + 1).apply_unchecked(&x);
        err = tnx.dist(&tx);
        x = x.lerp(&tnx, schedule.alpha(n + 1));
        if opts.record_outputs {
            trace.outputs.push(tnx);
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::Direction;
    use crate::spaces::NormKind;

    fn l2(c: &[f64]) -> Point {
        Point::new(c.to_vec(), NormKind::L2).unwrap()
    }

    #[test]
    fn km_constant_zero_contracts_geometrically() {
        let op = OperatorSpec::constant(Point::new(vec![0.0], NormKind::L2).unwrap());
        let x0 = Point::new(vec![1.0], NormKind::L2).unwrap();
        let tr = run_km(&op, &x0, &StepSchedule::constant(0.5).unwrap(), &RunOptions::new(3)).unwrap();
        assert_eq!(tr.final_point().coords(), &[0.125]);
        assert_eq!(tr.len(), 4);
    }

    #[test]
    fn km_identity_is_stationary() {
        let op = OperatorSpec::identity(2, NormKind::L2);
        let x0 = l2(&[1.0, 2.0]);
        let tr = run_km(&op, &x0, &StepSchedule::constant(0.3).unwrap(), &RunOptions::new(50)).unwrap();
        assert!(tr.residuals.iter().all(|r| *r == 0.0));
        assert_eq!(tr.final_point(), &x0);
    }

    #[test]
    fn ikm_identity_accumulates_weighted_errors() {
        let op = OperatorSpec::identity(2, NormKind::L2);
        let x0 = l2(&[0.0, 0.0]);
        let sched = StepSchedule::constant(0.5).unwrap();
        let model = ErrorModel::new(
            Magnitude::PowerLaw { k: 1.0, a: 1.0 },
            Direction::FixedUnit(vec![1.0, 0.0]),
        );
        let tr = run_ikm(&op, &x0, &sched, &model, &RunOptions::new(20)).unwrap();
        let expected: f64 = (1..=20).map(|k| 0.5 / k as f64).sum();
        assert!((tr.final_point().coords()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn ikm_with_zero_errors_matches_km_bitwise() {
        let op = OperatorSpec::rotation(0.9).unwrap();
        let x0 = l2(&[1.0, 0.5]);
        let sched = StepSchedule::constant(0.3).unwrap();
        let a = run_km(&op, &x0, &sched, &RunOptions::new(200)).unwrap();
        let b = run_ikm(&op, &x0, &sched, &ErrorModel::zero(), &RunOptions::new(200)).unwrap();
        assert_eq!(a.residuals, b.residuals);
        assert_eq!(a.final_point(), b.final_point());
    }

    #[test]
    fn snapshots_follow_stride() {
        let op = OperatorSpec::rotation(0.9).unwrap();
        let x0 = l2(&[1.0, 0.5]);
        let sched = StepSchedule::constant(0.5).unwrap();
        let tr = run_km(&op, &x0, &sched, &RunOptions::new(100).snapshot_every(16)).unwrap();
        assert!(tr.point(32).is_some());
        assert!(tr.point(33).is_none());
        assert!(tr.point(100).is_some());
        for n in (0..=100).filter(|n| n % 16 == 0) {
            let r = tr.recompute_residual(&op, n).unwrap();
            assert!((r - tr.residuals[n]).abs() <= 1e-12);
        }
    }

    #[test]
    fn ikm_flags_domain_exits() {
        let op = OperatorSpec::rotation(0.0)
            .unwrap()
            .with_domain(ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap())
            .unwrap();
        let x0 = l2(&[0.9, 0.0]);
        let model = ErrorModel::new(Magnitude::Custom(vec![1.0; 5]), Direction::FixedUnit(vec![]));
        let tr = run_ikm(
            &op,
            &x0,
            &StepSchedule::constant(0.5).unwrap(),
            &model,
            &RunOptions::new(5),
        )
        .unwrap();
        assert!(!tr.h0_violations.is_empty());
        assert!(tr.is_flagged(10.0));
    }

    #[test]
    fn ishikawa_error_is_bounded_by_beta_residual() {
        let op = OperatorSpec::rotation(1.3).unwrap();
        let x0 = l2(&[1.0, 0.0]);
        let alpha = StepSchedule::constant(0.5).unwrap();
        let beta = StepSchedule::power(2.0).unwrap();
        let tr = run_ishikawa(&op, &x0, &alpha, &beta, &RunOptions::new(100)).unwrap();
        for n in 0..100 {
            assert!(tr.err_norms[n + 1] <= beta.alpha(n + 1) * tr.residuals[n] + 1e-15);
        }
    }

    #[test]
    fn dkm_errors_respect_rho() {
        let seq = OperatorSequence::shrinking_ball(vec![0.0, 0.0], 1.0).unwrap();
        let x0 = l2(&[1.9, 0.0]);
        let tr = run_dkm(&seq, &x0, &StepSchedule::constant(0.5).unwrap(), &RunOptions::new(100)).unwrap();
        let rho = tr.aux_column("rho").unwrap();
        for n in 1..=100 {
            assert!(tr.err_norms[n] <= rho[n] + 1e-12);
        }
    }

    #[test]
    fn ikm_z_without_slack_inside_set_matches_ikm() {
        let op = OperatorSpec::projection(
            ConvexSet::boxed(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            NormKind::L2,
        )
        .unwrap();
        let set = ConvexSet::ball(vec![0.0, 0.0], 10.0).unwrap();
        let x0 = l2(&[3.0, 0.5]);
        let sched = StepSchedule::constant(0.5).unwrap();
        let a = run_ikm(&op, &x0, &sched, &ErrorModel::zero(), &RunOptions::new(50)).unwrap();
        let b = run_ikm_z(
            &op,
            &set,
            &x0,
            &sched,
            &ErrorModel::zero(),
            &Magnitude::Zero,
            &RunOptions::new(50),
        )
        .unwrap();
        assert_eq!(a.residuals, b.residuals);
        assert!(b.aux_column("delta").unwrap().iter().all(|d| *d == 0.0));
    }
}
