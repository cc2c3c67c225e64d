//! Step sizes α_n, the clock τ_n = Σ α_k(1−α_k), the averaging weights π_i^n,
//! the envelope σ, and the error models that generate perturbations e_n.
//!
//! Indexing follows the iteration: α_0 = 1 is an artificial first step kept
//! apart from the user schedule, which starts at n = 1. Error magnitudes use
//! ε_0 = 0.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spaces::{NormKind, Point};

/// σ(y) = min{1, 1/√(πy)}, with σ(0) = 1.
///
/// Panics on negative or NaN input; see [`sigma_checked`].
pub fn sigma(y: f64) -> f64 {
    assert!(y >= 0.0, "sigma requires y >= 0, got {y}");
    if y * PI <= 1.0 {
        1.0
    } else {
        1.0 / (PI * y).sqrt()
    }
}

pub fn sigma_checked(y: f64) -> Result<f64> {
    if y >= 0.0 {
        Ok(sigma(y))
    } else {
        Err(Error::InvalidInput(format!("sigma requires y >= 0, got {y}")))
    }
}

/// A step-size sequence α_1, α_2, ... (α_0 = 1 is implied).
#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    /// α_n = α for n >= 1.
    Constant(f64),
    /// α_n = 1/n^c.
    Power(f64),
    /// α_1..α_L listed explicitly; later steps repeat α_L.
    Custom(Vec<f64>),
}

impl StepSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        let s = StepSchedule::Constant(alpha);
        s.validate()?;
        Ok(s)
    }

    pub fn power(c: f64) -> Result<Self> {
        let s = StepSchedule::Power(c);
        s.validate()?;
        Ok(s)
    }

    pub fn custom(values: Vec<f64>) -> Result<Self> {
        let s = StepSchedule::Custom(values);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StepSchedule::Constant(a) if !(*a > 0.0 && *a < 1.0) => Err(Error::InvalidInput(
                format!("constant step must lie in (0, 1), got {a}"),
            )),
            StepSchedule::Power(c) if !(c.is_finite() && *c > 0.0) => Err(Error::InvalidInput(
                format!("power exponent must be > 0, got {c}"),
            )),
            StepSchedule::Custom(v) if v.is_empty() => {
                Err(Error::InvalidInput("custom schedule is empty".into()))
            }
            StepSchedule::Custom(v) if v.iter().any(|a| !(0.0..=1.0).contains(a)) => Err(
                Error::InvalidInput("custom steps must lie in [0, 1]".into()),
            ),
            _ => Ok(()),
        }
    }

    /// α_n, with α_0 = 1.
    pub fn alpha(&self, n: usize) -> f64 {
        if n == 0 {
            return 1.0;
        }
        match self {
            StepSchedule::Constant(a) => *a,
            StepSchedule::Power(c) => (n as f64).powf(-c),
            StepSchedule::Custom(v) => v[(n - 1).min(v.len() - 1)],
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            StepSchedule::Constant(a) => Some(*a),
            _ => None,
        }
    }

    /// τ_n by direct summation (closed form for constant steps).
    pub fn tau(&self, n: usize) -> f64 {
        match self {
            StepSchedule::Constant(a) => n as f64 * a * (1.0 - a),
            _ => (1..=n).map(|k| {
                let a = self.alpha(k);
                a * (1.0 - a)
            })
            .sum(),
        }
    }

    /// inf_{1<=n<=horizon} α_n(1−α_n).
    pub fn beta_inf(&self, horizon: usize) -> f64 {
        match self {
            StepSchedule::Constant(a) => a * (1.0 - a),
            _ => (1..=horizon.max(1))
                .map(|k| {
                    let a = self.alpha(k);
                    a * (1.0 - a)
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn table(&self, n_max: usize) -> TauTable {
        TauTable::build(self, n_max)
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSchedule::Constant(a) => write!(f, "const:{a}"),
            StepSchedule::Power(c) => write!(f, "power:{c}"),
            StepSchedule::Custom(v) => {
                let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "custom:{}", items.join(","))
            }
        }
    }
}

fn strip_key<'a>(s: &'a str, keys: &[&str]) -> &'a str {
    let s = s.trim();
    for k in keys {
        if let Some(rest) = s.strip_prefix(k).and_then(|r| r.strip_prefix('=')) {
            return rest.trim();
        }
    }
    s
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{t}'")))
        })
        .collect()
}

impl FromStr for StepSchedule {
    type Err = Error;

    /// Accepts `const:0.5`, `power:1.0`, `custom:0.5,0.3,...`, optionally
    /// prefixed by `alpha=` or `beta=`.
    fn from_str(s: &str) -> Result<Self> {
        let body = strip_key(s, &["alpha", "beta"]);
        let (kind, arg) = body
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad schedule '{s}'")))?;
        let num = |a: &str| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad schedule '{s}'")))
        };
        match kind.trim() {
            "const" | "constant" => StepSchedule::constant(num(arg)?),
            "power" => StepSchedule::power(num(arg)?),
            "custom" => StepSchedule::custom(parse_list(arg)?),
            _ => Err(Error::Config(format!("unknown schedule kind in '{s}'"))),
        }
    }
}

/// α_0..α_N together with the prefix sums τ_0..τ_N.
#[derive(Debug, Clone)]
pub struct TauTable {
    alpha: Vec<f64>,
    tau: Vec<f64>,
    constant: Option<f64>,
}

impl TauTable {
    pub fn build(schedule: &StepSchedule, n_max: usize) -> Self {
        let alpha: Vec<f64> = (0..=n_max).map(|n| schedule.alpha(n)).collect();
        let mut tau = Vec::with_capacity(n_max + 1);
        let mut acc = 0.0;
        tau.push(0.0);
        for a in &alpha[1..] {
            acc += a * (1.0 - a);
            tau.push(acc);
        }
        TauTable {
            alpha,
            tau,
            constant: schedule.constant_value(),
        }
    }

    pub fn n_max(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.alpha[n]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn tau(&self, n: usize) -> f64 {
        self.tau[n]
    }

    pub fn taus(&self) -> &[f64] {
        &self.tau
    }

    /// The common value of α_n (n >= 1) for constant schedules.
    pub fn constant_alpha(&self) -> Option<f64> {
        self.constant
    }
}

/// τ_n = Σ_{k=1}^n α_k(1−α_k).
pub fn tau(schedule: &StepSchedule, n: usize) -> f64 {
    schedule.tau(n)
}

/// π_i^n = α_i ∏_{k=i+1}^n (1−α_k) for i = 0..=n.
pub fn pi_weights(schedule: &StepSchedule, n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    let mut tail = 1.0;
    for i in (0..=n).rev() {
        let a = schedule.alpha(i);
        w[i] = a * tail;
        tail *= 1.0 - a;
    }
    w
}

/// The magnitude sequence ε_n >= ∥e_n∥.
#[derive(Debug, Clone, PartialEq)]
pub enum Magnitude {
    Zero,
    /// K / n^a
    PowerLaw { k: f64, a: f64 },
    /// K / log^a(n+1)
    LogPower { k: f64, a: f64 },
    /// K (1−α_n) / (τ_n + 1)^a
    TauPower { k: f64, a: f64 },
    /// ε_1..ε_L listed explicitly; zero afterwards.
    Custom(Vec<f64>),
}

impl Magnitude {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Magnitude::Zero => true,
            Magnitude::PowerLaw { k, a } | Magnitude::LogPower { k, a } | Magnitude::TauPower { k, a } => {
                k.is_finite() && *k >= 0.0 && a.is_finite() && *a >= 0.0
            }
            Magnitude::Custom(v) => v.iter().all(|e| e.is_finite() && *e >= 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid error magnitude {self}")))
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Magnitude::Zero => true,
            Magnitude::PowerLaw { k, .. }
            | Magnitude::LogPower { k, .. }
            | Magnitude::TauPower { k, .. } => *k == 0.0,
            Magnitude::Custom(v) => v.iter().all(|e| *e == 0.0),
        }
    }

    /// ε_n; `table` must cover n for the τ-based kind.
    pub fn value(&self, n: usize, table: &TauTable) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let nf = n as f64;
        match self {
            Magnitude::Zero => 0.0,
            Magnitude::PowerLaw { k, a } => k * nf.powf(-a),
            Magnitude::LogPower { k, a } => k * (nf + 1.0).ln().powf(-a),
            Magnitude::TauPower { k, a } => {
                k * (1.0 - table.alpha(n)) * (table.tau(n) + 1.0).powf(-a)
            }
            Magnitude::Custom(v) => v.get(n - 1).copied().unwrap_or(0.0),
        }
    }

    /// ε_0..ε_{len−1}.
    pub fn sequence(&self, table: &TauTable, len: usize) -> Vec<f64> {
        (0..len).map(|n| self.value(n, table)).collect()
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Magnitude::Zero => write!(f, "zero"),
            Magnitude::PowerLaw { k, a } => write!(f, "power:K={k},a={a}"),
            Magnitude::LogPower { k, a } => write!(f, "logpower:K={k},a={a}"),
            Magnitude::TauPower { k, a } => write!(f, "taupower:K={k},a={a}"),
            Magnitude::Custom(v) => {
                let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "custom:{}", items.join(","))
            }
        }
    }
}

impl FromStr for Magnitude {
    type Err = Error;

    /// Accepts `zero`, `power:K=1,a=1.5`, `logpower:K=..,a=..`,
    /// `taupower:K=..,a=..` and `custom:e1,e2,...`, optionally prefixed by
    /// `eps=` or `gamma=`.
    fn from_str(s: &str) -> Result<Self> {
        let body = strip_key(s, &["eps", "gamma"]);
        if body == "zero" || body == "0" {
            return Ok(Magnitude::Zero);
        }
        let (kind, args) = body
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad error magnitude '{s}'")))?;
        let kind = kind.trim();
        if kind == "custom" {
            let m = Magnitude::Custom(parse_list(args)?);
            m.validate()?;
            return Ok(m);
        }
        let mut k = None;
        let mut a = None;
        for part in args.split(',') {
            let (key, val) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad parameter '{part}' in '{s}'")))?;
            let val: f64 = val
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad number in '{s}'")))?;
            match key.trim() {
                "K" | "k" => k = Some(val),
                "a" => a = Some(val),
                other => return Err(Error::Config(format!("unknown parameter '{other}' in '{s}'"))),
            }
        }
        let k = k.unwrap_or(1.0);
        let a = a.ok_or_else(|| Error::Config(format!("missing exponent a in '{s}'")))?;
        let m = match kind {
            "power" => Magnitude::PowerLaw { k, a },
            "logpower" => Magnitude::LogPower { k, a },
            "taupower" => Magnitude::TauPower { k, a },
            _ => return Err(Error::Config(format!("unknown magnitude kind in '{s}'"))),
        };
        m.validate()?;
        Ok(m)
    }
}

/// How the direction of each perturbation is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    /// A fixed vector, normalized in the ambient norm. Empty means the first axis.
    FixedUnit(Vec<f64>),
    /// Gaussian draws normalized in the ambient norm, from a seeded stream.
    RandomUnit,
    /// Along x_n − Tx_n when it is nonzero, else the first axis.
    Adversarial,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::FixedUnit(v) if v.is_empty() => write!(f, "fixed"),
            Direction::FixedUnit(v) => {
                let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "fixed:{}", items.join(","))
            }
            Direction::RandomUnit => write!(f, "random"),
            Direction::Adversarial => write!(f, "adversarial"),
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let body = strip_key(s, &["dir"]);
        match body {
            "random" => Ok(Direction::RandomUnit),
            "adversarial" => Ok(Direction::Adversarial),
            "fixed" => Ok(Direction::FixedUnit(Vec::new())),
            other => match other.strip_prefix("fixed:") {
                Some(list) => Ok(Direction::FixedUnit(parse_list(list)?)),
                None => Err(Error::Config(format!("unknown direction '{s}'"))),
            },
        }
    }
}

/// Magnitudes plus directions: the full description of e_n.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    pub magnitude: Magnitude,
    pub direction: Direction,
}

impl ErrorModel {
    pub fn new(magnitude: Magnitude, direction: Direction) -> Self {
        ErrorModel { magnitude, direction }
    }

    pub fn zero() -> Self {
        ErrorModel::new(Magnitude::Zero, Direction::FixedUnit(Vec::new()))
    }
}

/// Emits the perturbations e_n of one trace, with ∥e_n∥ = ε_n.
#[derive(Debug, Clone)]
pub struct ErrorStream {
    direction: Direction,
    fixed: Point,
    rng: ChaCha8Rng,
    dim: usize,
    norm: NormKind,
}

impl ErrorStream {
    pub fn new(direction: &Direction, dim: usize, norm: NormKind, seed: u64) -> Result<Self> {
        let fixed = match direction {
            Direction::FixedUnit(v) if !v.is_empty() => {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: v.len(),
                    });
                }
                Point::new(v.clone(), norm)?
                    .normalized()
                    .ok_or_else(|| Error::InvalidInput("fixed direction must be nonzero".into()))?
            }
            _ => Point::basis(dim, 0, norm),
        };
        Ok(ErrorStream {
            direction: direction.clone(),
            fixed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            dim,
            norm,
        })
    }

    /// The next perturbation with magnitude `eps`. `residual` is x_n − Tx_n,
    /// used by the adversarial mode.
    pub fn emit(&mut self, eps: f64, residual: Option<&Point>) -> Point {
        let unit = match &self.direction {
            Direction::FixedUnit(_) => self.fixed.clone(),
            Direction::RandomUnit => loop {
                let coords: Vec<f64> = (0..self.dim)
                    .map(|_| StandardNormal.sample(&mut self.rng))
                    .collect();
                if let Some(u) = Point::from_raw(coords, self.norm).normalized() {
                    break u;
                }
            },
            Direction::Adversarial => residual
                .and_then(Point::normalized)
                .unwrap_or_else(|| self.fixed.clone()),
        };
        unit.scale(eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(0.0), 1.0);
        assert!((sigma(4.0 / PI) - 0.5).abs() < 1e-15);
        assert!((sigma(100.0 / PI) - 0.1).abs() < 1e-15);
        assert!(sigma_checked(-1.0).is_err());
        assert_eq!(sigma(1.0 / PI), 1.0);
    }

    #[test]
    fn tau_examples() {
        let half = StepSchedule::constant(0.5).unwrap();
        assert_eq!(tau(&half, 8), 2.0);
        assert_eq!(tau(&half, 0), 0.0);
        let harmonic = StepSchedule::power(1.0).unwrap();
        assert_eq!(tau(&harmonic, 2), 0.25);
        assert_eq!(harmonic.alpha(0), 1.0);
        assert_eq!(harmonic.alpha(1), 1.0);
    }

    #[test]
    fn tau_table_matches_direct_sum() {
        let s = StepSchedule::power(0.7).unwrap();
        let t = s.table(100_000);
        for n in [0, 1, 17, 999, 100_000] {
            let direct = s.tau(n);
            assert!((t.tau(n) - direct).abs() <= 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn pi_weight_examples() {
        let half = StepSchedule::constant(0.5).unwrap();
        assert_eq!(pi_weights(&half, 2), vec![0.25, 0.25, 0.5]);
        assert_eq!(pi_weights(&half, 0), vec![1.0]);
    }

    #[test]
    fn parses_config_syntax() {
        assert_eq!(
            "alpha=const:0.5".parse::<StepSchedule>().unwrap(),
            StepSchedule::Constant(0.5)
        );
        assert_eq!(
            "alpha=power:1.0".parse::<StepSchedule>().unwrap(),
            StepSchedule::Power(1.0)
        );
        assert_eq!(
            "eps=power:K=1,a=1.5".parse::<Magnitude>().unwrap(),
            Magnitude::PowerLaw { k: 1.0, a: 1.5 }
        );
        assert_eq!(
            "dir=adversarial".parse::<Direction>().unwrap(),
            Direction::Adversarial
        );
        assert!("const:1.5".parse::<StepSchedule>().is_err());
        assert!("power:K=1".parse::<Magnitude>().is_err());
        let custom = StepSchedule::custom(vec![0.25, 0.5]).unwrap();
        assert_eq!(custom.to_string().parse::<StepSchedule>().unwrap(), custom);
    }

    #[test]
    fn custom_schedule_repeats_last_value() {
        let s = StepSchedule::custom(vec![0.2, 0.4]).unwrap();
        assert_eq!(s.alpha(1), 0.2);
        assert_eq!(s.alpha(2), 0.4);
        assert_eq!(s.alpha(50), 0.4);
    }

    #[test]
    fn magnitudes_start_at_zero() {
        let t = StepSchedule::constant(0.5).unwrap().table(10);
        for m in [
            Magnitude::PowerLaw { k: 1.0, a: 1.0 },
            Magnitude::LogPower { k: 1.0, a: 1.0 },
            Magnitude::TauPower { k: 1.0, a: 1.0 },
            Magnitude::Custom(vec![3.0]),
        ] {
            assert_eq!(m.value(0, &t), 0.0);
        }
        assert_eq!(Magnitude::Custom(vec![3.0]).value(2, &t), 0.0);
        assert_eq!(Magnitude::PowerLaw { k: 2.0, a: 2.0 }.value(2, &t), 0.5);
    }

    #[test]
    fn emitted_errors_have_exact_magnitude() {
        for norm in [NormKind::L1, NormKind::L2, NormKind::LInf, NormKind::Lp(3.0)] {
            for dir in [
                Direction::FixedUnit(vec![1.0, -2.0, 0.5]),
                Direction::RandomUnit,
                Direction::Adversarial,
            ] {
                let mut stream = ErrorStream::new(&dir, 3, norm, 11).unwrap();
                let r = Point::new(vec![0.3, 0.1, -4.0], norm).unwrap();
                for (i, eps) in [0.0, 1e-3, 0.7, 12.0].into_iter().enumerate() {
                    let res = (i % 2 == 0).then_some(&r);
                    let e = stream.emit(eps, res);
                    assert!((e.norm() - eps).abs() <= 1e-12 * eps.max(1.0));
                }
            }
        }
    }

    #[test]
    fn random_stream_is_seed_reproducible() {
        let mut a = ErrorStream::new(&Direction::RandomUnit, 2, NormKind::L2, 5).unwrap();
        let mut b = ErrorStream::new(&Direction::RandomUnit, 2, NormKind::L2, 5).unwrap();
        for _ in 0..10 {
            assert_eq!(a.emit(1.0, None), b.emit(1.0, None));
        }
    }
}
