//! Residual bounds for the KM family, evaluated as curves over n so they can
//! be laid next to a [`crate::engines::Trace`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quadrature;
use crate::schedules::{sigma, StepSchedule, TauTable};

/// Relative tolerance used for I_a unless a caller asks otherwise.
pub const QUAD_TOL: f64 = 1e-10;

/// √(1 + 4/π).
pub fn eta() -> f64 {
    (1.0 + 4.0 / PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundKind {
    /// κσ(τ_n).
    Exact,
    /// κσ(τ_n) + Σ 2α_iε_iσ(τ_n − τ_i) + 2ε_{n+1}.
    Main,
    /// ν/√n + Σ_{i ≥ ⌊n/2⌋} 2∥e_i∥.
    RateSummable,
    /// ν/√n + 2μ/φ(⌊n/2⌋).
    RateWeighted,
    /// κσ(τ_n) + ηK·I_a(τ_n) + 2ε_{n+1}.
    RateTau,
    /// κ[σ(τ_n) + Σ α_iβ_iσ(τ_n − τ_i) + 2β_{n+1}].
    Ishikawa,
    /// The main bound with ε replaced by the uniform modulus ρ.
    Diagonal,
    /// δ_n plus the main bound with ε'_n = ∥e_n∥ + δ_{n−1}, for ∥z_n − Tz_n∥.
    Projected,
}

impl BoundKind {
    pub const ALL: [BoundKind; 8] = [
        BoundKind::Exact,
        BoundKind::Main,
        BoundKind::RateSummable,
        BoundKind::RateWeighted,
        BoundKind::RateTau,
        BoundKind::Ishikawa,
        BoundKind::Diagonal,
        BoundKind::Projected,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::Exact => "exact",
            BoundKind::Main => "main",
            BoundKind::RateSummable => "rate_summable",
            BoundKind::RateWeighted => "rate_weighted",
            BoundKind::RateTau => "rate_tau",
            BoundKind::Ishikawa => "ishikawa",
            BoundKind::Diagonal => "diagonal",
            BoundKind::Projected => "projected",
        }
    }

    /// CSV column name, `bound_<kind>`.
    pub fn column(&self) -> String {
        format!("bound_{}", self.name())
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.strip_prefix("bound_").unwrap_or(s);
        BoundKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown bound kind '{s}'")))
    }
}

/// A bound evaluated for n = 0..=n_max.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSeries {
    pub kind: BoundKind,
    pub values: Vec<f64>,
    pub kappa: f64,
    pub params: BTreeMap<String, f64>,
}

impl BoundSeries {
    pub fn new(kind: BoundKind, values: Vec<f64>, kappa: f64) -> Self {
        debug_assert!(
            values.iter().all(|v| v.is_finite() && *v >= 0.0),
            "{kind} bound produced a negative or non-finite value"
        );
        BoundSeries {
            kind,
            values,
            kappa,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn column(&self) -> String {
        self.kind.column()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dominates(&self, measured: &[f64], tol: f64) -> Domination {
        check_domination(measured, &self.values, tol)
    }
}

/// Outcome of comparing a measured series with a bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domination {
    pub pass: bool,
    /// min_n (bound_n − measured_n).
    pub worst_margin: f64,
    pub worst_n: usize,
}

/// Checks measured_n <= bound_n + tol on the common prefix.
pub fn check_domination(measured: &[f64], bound: &[f64], tol: f64) -> Domination {
    let mut worst_margin = f64::INFINITY;
    let mut worst_n = 0;
    for (n, (m, b)) in measured.iter().zip(bound).enumerate() {
        let margin = b - m;
        // NaN margins must fail.
        if !(margin >= worst_margin) {
            worst_margin = margin;
            worst_n = n;
        }
    }
    Domination {
        pass: worst_margin + tol >= 0.0,
        worst_margin,
        worst_n,
    }
}

/// κσ(τ_n).
pub fn bound_exact(kappa: f64, schedule: &StepSchedule, n: usize) -> f64 {
    kappa * sigma(schedule.tau(n))
}

pub fn exact_curve(kappa: f64, table: &TauTable, n_max: usize) -> BoundSeries {
    let values = (0..=n_max).map(|n| kappa * sigma(table.tau(n))).collect();
    BoundSeries::new(BoundKind::Exact, values, kappa)
}

/// s_n = Σ_{i=1}^n w_i σ(τ_n − τ_i) for n = 0..=n_max, skipping zero weights.
/// With constant α the σ values come from a table indexed by n − i.
fn sigma_weighted_sums(table: &TauTable, weights: &[f64], n_max: usize) -> Vec<f64> {
    assert!(table.n_max() >= n_max, "tau table too short");
    let active: Vec<(usize, f64)> = (1..=n_max)
        .filter_map(|i| {
            let w = weights.get(i).copied().unwrap_or(0.0);
            (w != 0.0).then_some((i, w))
        })
        .collect();
    let mut out = vec![0.0; n_max + 1];
    if active.is_empty() {
        return out;
    }
    match table.constant_alpha() {
        Some(a) => {
            let b = a * (1.0 - a);
            let sig: Vec<f64> = (0..=n_max).map(|k| sigma(k as f64 * b)).collect();
            for (n, slot) in out.iter_mut().enumerate().skip(1) {
                *slot = active
                    .iter()
                    .take_while(|(i, _)| *i <= n)
                    .map(|(i, w)| w * sig[n - i])
                    .sum();
            }
        }
        None => {
            let taus = table.taus();
            for (n, slot) in out.iter_mut().enumerate().skip(1) {
                let tn = taus[n];
                *slot = active
                    .iter()
                    .take_while(|(i, _)| *i <= n)
                    .map(|(i, w)| w * sigma((tn - taus[*i]).max(0.0)))
                    .sum();
            }
        }
    }
    out
}

/// The main inexact bound as a curve. The bound is affine in κ, so the
/// κ-free parts are computed once and [`MainBound::curve`] is cheap.
#[derive(Debug, Clone)]
pub struct MainBound {
    sigma_tau: Vec<f64>,
    middle: Vec<f64>,
    tail: Vec<f64>,
}

impl MainBound {
    /// `eps` holds ε_0..ε_{n_max+1} (ε_0 is ignored).
    pub fn new(table: &TauTable, eps: &[f64], n_max: usize) -> Self {
        assert!(eps.len() >= n_max + 2, "need eps up to index n_max + 1");
        let weights: Vec<f64> = (0..=n_max)
            .map(|i| if i == 0 { 0.0 } else { 2.0 * table.alpha(i) * eps[i] })
            .collect();
        MainBound {
            sigma_tau: (0..=n_max).map(|n| sigma(table.tau(n))).collect(),
            middle: sigma_weighted_sums(table, &weights, n_max),
            tail: (0..=n_max).map(|n| 2.0 * eps[n + 1]).collect(),
        }
    }

    pub fn n_max(&self) -> usize {
        self.middle.len() - 1
    }

    /// Σ_{i=1}^n 2α_iε_iσ(τ_n − τ_i).
    pub fn middle(&self) -> &[f64] {
        &self.middle
    }

    pub fn value(&self, kappa: f64, n: usize) -> f64 {
        kappa * self.sigma_tau[n] + self.middle[n] + self.tail[n]
    }

    pub fn curve(&self, kappa: f64) -> BoundSeries {
        self.curve_as(BoundKind::Main, kappa)
    }

    pub fn curve_as(&self, kind: BoundKind, kappa: f64) -> BoundSeries {
        let values = (0..=self.n_max()).map(|n| self.value(kappa, n)).collect();
        BoundSeries::new(kind, values, kappa)
    }
}

/// κσ(τ_n) + Σ_{i=1}^n 2α_iε_iσ(τ_n − τ_i) + 2ε_{n+1}, evaluated directly.
/// `eps` holds ε_0..ε_{n+1}.
pub fn bound_main(kappa: f64, schedule: &StepSchedule, eps: &[f64], n: usize) -> f64 {
    assert!(eps.len() >= n + 2, "need eps up to index n + 1");
    let table = schedule.table(n);
    let tn = table.tau(n);
    let middle: f64 = (1..=n)
        .map(|i| 2.0 * table.alpha(i) * eps[i] * sigma((tn - table.tau(i)).max(0.0)))
        .sum();
    kappa * sigma(tn) + middle + 2.0 * eps[n + 1]
}

/// Both variants of the rate bound for summable errors at one n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSummable {
    pub nu: f64,
    pub beta: f64,
    pub plain: f64,
    pub weighted: Option<f64>,
}

struct RateParams {
    nu: f64,
    beta: f64,
    mu: Option<f64>,
}

fn rate_params(
    kappa: f64,
    schedule: &StepSchedule,
    errs: &[f64],
    phi: Option<&dyn Fn(f64) -> f64>,
    horizon: usize,
) -> Result<RateParams> {
    let beta = schedule.beta_inf(horizon.max(1));
    if !(beta > 0.0) {
        return Err(Error::BetaDegenerate);
    }
    let total: f64 = errs.iter().skip(1).sum();
    let nu = (kappa + 2.0 * 2f64.sqrt() * total) / (PI * beta).sqrt();
    let mu = phi.map(|p| {
        errs.iter()
            .enumerate()
            .skip(1)
            .map(|(k, e)| p(k as f64) * e)
            .sum()
    });
    Ok(RateParams { nu, beta, mu })
}

/// ν/√n + Σ_{i ≥ ⌊n/2⌋} 2∥e_i∥ and, given φ, ν/√n + 2μ/φ(⌊n/2⌋), with
/// ν = (κ + 2√2 Σ∥e_k∥)/√(πβ) and β = inf α_k(1 − α_k).
///
/// `errs` holds ∥e_0∥..∥e_H∥ and stands in for the full error sequence; both
/// β and the sums are taken over that horizon. φ(0) is replaced by φ(1),
/// which is valid since e_0 = 0.
pub fn bound_rate_summable(
    kappa: f64,
    schedule: &StepSchedule,
    errs: &[f64],
    phi: Option<&dyn Fn(f64) -> f64>,
    n: usize,
) -> Result<RateSummable> {
    if n == 0 {
        return Err(Error::InvalidInput("rate bounds start at n = 1".into()));
    }
    let horizon = errs.len().saturating_sub(1).max(n + 1);
    let p = rate_params(kappa, schedule, errs, phi, horizon)?;
    let m = n / 2;
    let lead = p.nu / (n as f64).sqrt();
    let tail: f64 = errs.iter().skip(m.max(1)).map(|e| 2.0 * e).sum();
    let weighted = match (phi, p.mu) {
        (Some(f), Some(mu)) => Some(lead + 2.0 * mu / f(m.max(1) as f64)),
        _ => None,
    };
    Ok(RateSummable {
        nu: p.nu,
        beta: p.beta,
        plain: lead + tail,
        weighted,
    })
}

/// Curves of the summable-error rate bounds for n = 0..=n_max. At n = 0 the
/// value is the trivial κ + 2∥e_1∥.
pub fn rate_summable_curves(
    kappa: f64,
    schedule: &StepSchedule,
    errs: &[f64],
    phi: Option<&dyn Fn(f64) -> f64>,
    n_max: usize,
) -> Result<(BoundSeries, Option<BoundSeries>)> {
    let horizon = errs.len().saturating_sub(1).max(n_max + 1);
    let p = rate_params(kappa, schedule, errs, phi, horizon)?;
    let mut suffix = vec![0.0; errs.len() + 1];
    for i in (0..errs.len()).rev() {
        suffix[i] = suffix[i + 1] + if i == 0 { 0.0 } else { 2.0 * errs[i] };
    }
    let start = kappa + 2.0 * errs.get(1).copied().unwrap_or(0.0);
    let lead = |n: usize| p.nu / (n as f64).sqrt();
    let plain: Vec<f64> = (0..=n_max)
        .map(|n| {
            if n == 0 {
                start
            } else {
                lead(n) + suffix[(n / 2).min(errs.len())]
            }
        })
        .collect();
    let plain = BoundSeries::new(BoundKind::RateSummable, plain, kappa)
        .with_param("nu", p.nu)
        .with_param("beta", p.beta);
    let weighted = match (phi, p.mu) {
        (Some(f), Some(mu)) => {
            let values = (0..=n_max)
                .map(|n| {
                    if n == 0 {
                        start
                    } else {
                        lead(n) + 2.0 * mu / f((n / 2).max(1) as f64)
                    }
                })
                .collect();
            Some(
                BoundSeries::new(BoundKind::RateWeighted, values, kappa)
                    .with_param("nu", p.nu)
                    .with_param("mu", mu),
            )
        }
        _ => None,
    };
    Ok((plain, weighted))
}

/// I_a(t) = ∫_0^t (s+1)^{−a} (t−s)^{−1/2} ds, computed as
/// ∫_0^{√t} 2 (t − u² + 1)^{−a} du to remove the endpoint singularity.
pub fn integral_ia(a: f64, t: f64, rel_tol: f64) -> f64 {
    assert!(t > 0.0 && a >= 0.0, "I_a needs t > 0 and a >= 0");
    let r = t.sqrt();
    let f = move |u: f64| 2.0 * ((r - u) * (r + u) + 1.0).powf(-a);
    quadrature::integrate(f, 0.0, r, rel_tol, 0.0).value
}

/// I_1(t) = 2 asinh(√t)/√(t+1).
pub fn integral_i1_closed(t: f64) -> f64 {
    2.0 * t.sqrt().asinh() / (t + 1.0).sqrt()
}

/// κσ(τ) + ηK·I_a(τ) + 2ε_next at a single clock value τ = τ_n.
pub fn rate_tau_value(kappa: f64, tau: f64, k: f64, a: f64, eps_next: f64) -> f64 {
    let integral = if k == 0.0 || tau == 0.0 {
        0.0
    } else {
        integral_ia(a, tau, QUAD_TOL)
    };
    kappa * sigma(tau) + eta() * k * integral + 2.0 * eps_next
}

fn check_envelope(table: &TauTable, eps: &[f64], k: f64, a: f64, upto: usize) -> Result<()> {
    for (n, &e) in eps.iter().enumerate().take(upto + 1).skip(1) {
        let envelope = (1.0 - table.alpha(n)) * k * (table.tau(n) + 1.0).powf(-a);
        if e > envelope * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::MonotonicityViolation { n, eps: e, envelope });
        }
    }
    Ok(())
}

/// κσ(τ_n) + ηK·I_a(τ_n) + 2ε_{n+1}, valid when ε_i <= (1−α_i)K/(τ_i+1)^a.
/// `eps` holds ε_0..ε_{n+1} and `table` must reach n + 1.
pub fn bound_rate_tau(kappa: f64, table: &TauTable, k: f64, a: f64, eps: &[f64], n: usize) -> Result<f64> {
    assert!(eps.len() >= n + 2, "need eps up to index n + 1");
    check_envelope(table, eps, k, a, n + 1)?;
    Ok(rate_tau_value(kappa, table.tau(n), k, a, eps[n + 1]))
}

/// Curve form of [`bound_rate_tau`]; `table` must reach n_max + 1.
pub fn rate_tau_curve(
    kappa: f64,
    table: &TauTable,
    k: f64,
    a: f64,
    eps: &[f64],
    n_max: usize,
) -> Result<BoundSeries> {
    assert!(eps.len() >= n_max + 2, "need eps up to index n_max + 1");
    check_envelope(table, eps, k, a, n_max + 1)?;
    let values = (0..=n_max)
        .map(|n| rate_tau_value(kappa, table.tau(n), k, a, eps[n + 1]))
        .collect();
    Ok(BoundSeries::new(BoundKind::RateTau, values, kappa)
        .with_param("K", k)
        .with_param("a", a))
}

/// κ[σ(τ_n) + Σ_{i=1}^n α_iβ_iσ(τ_n − τ_i) + 2β_{n+1}] for n = 0..=n_max.
/// `beta` holds β_0..β_{n_max+1}.
pub fn ishikawa_curve(kappa: f64, table: &TauTable, beta: &[f64], n_max: usize) -> BoundSeries {
    assert!(beta.len() >= n_max + 2, "need beta up to index n_max + 1");
    let weights: Vec<f64> = (0..=n_max)
        .map(|i| if i == 0 { 0.0 } else { table.alpha(i) * beta[i] })
        .collect();
    let middle = sigma_weighted_sums(table, &weights, n_max);
    let values = (0..=n_max)
        .map(|n| kappa * (sigma(table.tau(n)) + middle[n] + 2.0 * beta[n + 1]))
        .collect();
    BoundSeries::new(BoundKind::Ishikawa, values, kappa)
}

pub fn bound_ishikawa(kappa: f64, alpha: &StepSchedule, beta: &StepSchedule, n: usize) -> f64 {
    let table = alpha.table(n);
    let betas: Vec<f64> = (0..=n + 1).map(|i| if i == 0 { 0.0 } else { beta.alpha(i) }).collect();
    *ishikawa_curve(kappa, &table, &betas, n)
        .values
        .last()
        .expect("curve has n + 1 entries")
}

/// The diagonal-iteration bound: the main bound with ε_i = ρ_i.
/// `rho` holds ρ_0..ρ_{n_max+1}.
pub fn diagonal_curve(kappa: f64, table: &TauTable, rho: &[f64], n_max: usize) -> BoundSeries {
    MainBound::new(table, rho, n_max).curve_as(BoundKind::Diagonal, kappa)
}

/// Σ_{i=0}^n α_iξ_i ρ_n/ρ_i with ρ_n = ∏_{j≤n}(1 − α_j), the ratios taken as
/// sums of logs. `xi` holds ξ_0..ξ_n.
pub fn delta_recursion_bound(table: &TauTable, xi: &[f64], n: usize) -> f64 {
    assert!(xi.len() > n, "need xi up to index n");
    let mut log_ratio = 0.0f64;
    let mut total = 0.0;
    for i in (0..=n).rev() {
        total += table.alpha(i) * xi[i] * log_ratio.exp();
        if i > 0 {
            log_ratio += (-table.alpha(i)).ln_1p();
        }
    }
    total
}

/// The same majorant for every n via δ̄_n = (1 − α_n)δ̄_{n−1} + α_nξ_n.
pub fn delta_recursion_curve(table: &TauTable, xi: &[f64], n_max: usize) -> Vec<f64> {
    assert!(xi.len() > n_max, "need xi up to index n_max");
    let mut out = Vec::with_capacity(n_max + 1);
    let mut d = table.alpha(0) * xi[0];
    out.push(d);
    for n in 1..=n_max {
        let a = table.alpha(n);
        d = (1.0 - a) * d + a * xi[n];
        out.push(d);
    }
    out
}

/// Bound on ∥z_n − Tz_n∥ for inexact projections:
/// δ_n + κσ(τ_n) + Σ 2α_iε'_iσ(τ_n − τ_i) + ε'_{n+1} + ∥e_{n+1}∥ with
/// ε'_n = ∥e_n∥ + δ_{n−1}. `err` holds ∥e_0∥..∥e_{n_max+1}∥ (a magnitude
/// bound may stand in for the last entry), `delta` holds δ_0..δ_{n_max}.
pub fn projected_curve(kappa: f64, table: &TauTable, err: &[f64], delta: &[f64], n_max: usize) -> BoundSeries {
    assert!(err.len() >= n_max + 2 && delta.len() > n_max);
    let eps_prime: Vec<f64> = (0..=n_max + 1)
        .map(|n| if n == 0 { 0.0 } else { err[n] + delta[n - 1] })
        .collect();
    let main = MainBound::new(table, &eps_prime, n_max);
    let values = (0..=n_max)
        .map(|n| {
            delta[n] + kappa * main.sigma_tau[n] + main.middle[n] + eps_prime[n + 1] + err[n + 1]
        })
        .collect();
    BoundSeries::new(BoundKind::Projected, values, kappa)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> StepSchedule {
        StepSchedule::constant(0.5).unwrap()
    }

    #[test]
    fn exact_examples() {
        assert!((bound_exact(1.0, &half(), 8) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert_eq!(bound_exact(1.0, &half(), 1), 1.0);
        assert_eq!(bound_exact(0.0, &half(), 100), 0.0);
    }

    #[test]
    fn main_examples() {
        let zero = vec![0.0; 12];
        for n in 0..=10 {
            assert_eq!(bound_main(1.0, &half(), &zero, n), bound_exact(1.0, &half(), n));
        }
        assert_eq!(bound_main(1.0, &half(), &zero, 1), 1.0);
        // Hand expansion: σ(1/2) + 2·½·0.1·σ(¼) + 2·½·0.1·σ(0) + 2·0.1.
        let eps = [0.0, 0.1, 0.1, 0.1];
        let expected = (2.0 / PI).sqrt() + 0.1 + 0.1 + 0.2;
        assert!((bound_main(1.0, &half(), &eps, 2) - expected).abs() < 1e-14);
        assert!((expected - 1.19788).abs() < 1e-5);
    }

    #[test]
    fn cached_curve_matches_direct_evaluation() {
        for sched in [
            half(),
            StepSchedule::power(0.7).unwrap(),
            StepSchedule::custom(vec![0.9, 0.2, 0.6, 0.4, 0.35]).unwrap(),
        ] {
            let eps: Vec<f64> = (0..=52).map(|n| if n == 0 { 0.0 } else { 1.0 / n as f64 }).collect();
            let table = sched.table(51);
            let curve = MainBound::new(&table, &eps, 50).curve(2.0);
            for n in 0..=50 {
                let direct = bound_main(2.0, &sched, &eps, n);
                assert!((curve.values[n] - direct).abs() <= 1e-12 * direct.max(1.0));
            }
        }
    }

    #[test]
    fn rate_summable_examples() {
        let zero = vec![0.0; 10];
        let r = bound_rate_summable(1.0, &half(), &zero, None, 4).unwrap();
        assert!((r.plain - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert!((r.nu - 1.0 / (PI / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(
            bound_rate_summable(1.0, &StepSchedule::power(1.0).unwrap(), &zero, None, 4),
            Err(Error::BetaDegenerate)
        );
    }

    #[test]
    fn rate_summable_curve_matches_pointwise() {
        let errs: Vec<f64> = (0..=200).map(|k| if k == 0 { 0.0 } else { (k as f64).powf(-1.6) }).collect();
        let phi = |k: f64| k.powf(0.5);
        let (plain, weighted) = rate_summable_curves(1.5, &half(), &errs, Some(&phi), 150).unwrap();
        let weighted = weighted.unwrap();
        for n in 1..=150 {
            let p = bound_rate_summable(1.5, &half(), &errs, Some(&phi), n).unwrap();
            assert!((plain.values[n] - p.plain).abs() < 1e-12);
            assert!((weighted.values[n] - p.weighted.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn integral_examples() {
        let expected = 2.0 * (2.0 + 5f64.sqrt()).ln() / 5f64.sqrt();
        assert!((integral_ia(1.0, 4.0, QUAD_TOL) - expected).abs() < 1e-8);
        assert!((integral_i1_closed(4.0) - 1.29123).abs() < 1e-5);
        assert!((integral_ia(0.0, 1.0, QUAD_TOL) - 2.0).abs() < 1e-12);
        let t = 1e6f64;
        assert!((t.sqrt() * integral_ia(2.0, t, QUAD_TOL) - 1.0).abs() < 0.05);
    }

    #[test]
    fn rate_tau_reduces_and_checks_envelope() {
        let table = half().table(21);
        let zero = vec![0.0; 22];
        let c = rate_tau_curve(1.0, &table, 0.0, 1.0, &zero, 20).unwrap();
        assert_eq!(c.values, exact_curve(1.0, &table, 20).values);
        let mut eps = zero.clone();
        eps[3] = 1.0;
        assert!(matches!(
            rate_tau_curve(1.0, &table, 1.0, 1.0, &eps, 20),
            Err(Error::MonotonicityViolation { n: 3, .. })
        ));
    }

    #[test]
    fn ishikawa_reduces_to_exact() {
        let table = half().table(30);
        let beta = vec![0.0; 32];
        assert_eq!(
            ishikawa_curve(2.0, &table, &beta, 30).values,
            exact_curve(2.0, &table, 30).values
        );
    }

    #[test]
    fn delta_examples() {
        let table = half().table(3);
        assert_eq!(delta_recursion_bound(&table, &[0.0; 4], 3), 0.0);
        let xi = [0.0, 1.0, 0.0, 0.0];
        assert!((delta_recursion_bound(&table, &xi, 3) - 0.125).abs() < 1e-15);
        let curve = delta_recursion_curve(&table, &xi, 3);
        assert!((curve[3] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in BoundKind::ALL {
            assert_eq!(k.column().parse::<BoundKind>().unwrap(), k);
        }
    }
}
