//! The evolution equation u′(t) + (I − T)u(t) = f(t), u(0) = x_0, integrated
//! with classical RK4, plus its explicit Euler-type discretization and the
//! continuous-time bounds on ∥u′(t)∥.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::operators::OperatorSpec;
use crate::quadrature;
use crate::schedules::sigma;
use crate::spaces::{ConvexSet, Point};

/// Step-doubling budget, per unit time.
pub const LOCAL_ERROR_BUDGET: f64 = 1e-6;

/// The forcing term f(t) together with its envelope ε(t) >= ∥f(t)∥.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Zero,
    /// f(t) = K/(t+1)^a · v with v a unit vector.
    PowerLaw { k: f64, a: f64, direction: Point },
    /// Piecewise-linear interpolation of samples (t_k, f_k); zero after the
    /// last sample.
    Custom { times: Vec<f64>, values: Vec<Point> },
}

impl Forcing {
    /// K/(t+1)^a along `direction`, normalized in its own norm.
    pub fn power_law(k: f64, a: f64, direction: Point) -> Result<Self> {
        if !(k >= 0.0 && a >= 0.0 && k.is_finite() && a.is_finite()) {
            return Err(Error::InvalidInput("power-law forcing needs K, a >= 0".into()));
        }
        let direction = direction
            .normalized()
            .ok_or_else(|| Error::InvalidInput("forcing direction must be nonzero".into()))?;
        Ok(Forcing::PowerLaw { k, a, direction })
    }

    pub fn custom(times: Vec<f64>, values: Vec<Point>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidInput("need one value per sample time".into()));
        }
        if times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("sample times must increase from t >= 0".into()));
        }
        Ok(Forcing::Custom { times, values })
    }

    fn check_shape(&self, like: &Point) -> Result<()> {
        let check = |p: &Point| {
            if p.dim() != like.dim() {
                Err(Error::DimensionMismatch {
                    expected: like.dim(),
                    got: p.dim(),
                })
            } else if p.norm_kind() != like.norm_kind() {
                Err(Error::InvalidInput("forcing and x0 use different norms".into()))
            } else {
                Ok(())
            }
        };
        match self {
            Forcing::Zero => Ok(()),
            Forcing::PowerLaw { direction, .. } => check(direction),
            Forcing::Custom { values, .. } => values.iter().try_for_each(check),
        }
    }

    /// f(t) as a coordinate vector of the given dimension.
    pub fn value(&self, t: f64, dim: usize) -> Vec<f64> {
        match self {
            Forcing::Zero => vec![0.0; dim],
            Forcing::PowerLaw { k, a, direction } => {
                let s = k * (t + 1.0).powf(-a);
                direction.coords().iter().map(|v| s * v).collect()
            }
            Forcing::Custom { times, values } => match locate(times, t) {
                Some((i, w)) => {
                    let lo = values[i].coords();
                    let hi = values[(i + 1).min(values.len() - 1)].coords();
                    lo.iter().zip(hi).map(|(a, b)| a + w * (b - a)).collect()
                }
                None => vec![0.0; dim],
            },
        }
    }

    /// ε(t) >= ∥f(t)∥. Exact for the power law; for samples it interpolates
    /// the sample norms, which dominates ∥f∥ by the triangle inequality.
    pub fn epsilon(&self, t: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::PowerLaw { k, a, .. } => k * (t + 1.0).powf(-a),
            Forcing::Custom { times, values } => match locate(times, t) {
                Some((i, w)) => {
                    let lo = values[i].norm();
                    lo + w * (values[(i + 1).min(values.len() - 1)].norm() - lo)
                }
                None => 0.0,
            },
        }
    }

    /// Errors with `H2Violation` unless ε is nonincreasing.
    pub fn check_nonincreasing(&self) -> Result<()> {
        if let Forcing::Custom { times, values } = self {
            let norms: Vec<f64> = values.iter().map(Point::norm).collect();
            if times[0] > 0.0 && norms[0] > 0.0 {
                return Err(Error::H2Violation { t: times[0] });
            }
            for (i, w) in norms.windows(2).enumerate() {
                if w[1] > w[0] {
                    return Err(Error::H2Violation { t: times[i + 1] });
                }
            }
        }
        Ok(())
    }

    /// ∫_from^∞ ε(s) ds.
    pub fn tail_integral(&self, from: f64) -> Result<f64> {
        match self {
            Forcing::Zero => Ok(0.0),
            Forcing::PowerLaw { k, a, .. } => {
                if *k == 0.0 {
                    Ok(0.0)
                } else if *a <= 1.0 {
                    Err(Error::InvalidInput(format!("K/(t+1)^{a} is not integrable")))
                } else {
                    Ok(k * (from + 1.0).powf(1.0 - a) / (a - 1.0))
                }
            }
            Forcing::Custom { times, .. } => {
                let end = *times.last().expect("validated nonempty");
                if from >= end {
                    return Ok(0.0);
                }
                let start = from.max(times[0]);
                let mut total = 0.0;
                let mut knots: Vec<f64> = vec![start];
                knots.extend(times.iter().copied().filter(|t| *t > start));
                for w in knots.windows(2) {
                    total += quadrature::integrate(|s| self.epsilon(s), w[0], w[1], 1e-10, 1e-14).value;
                }
                Ok(total)
            }
        }
    }
}

/// Interval index and interpolation weight for t, or None past the samples.
fn locate(times: &[f64], t: f64) -> Option<(usize, f64)> {
    let last = *times.last()?;
    if t > last || t < times[0] {
        return None;
    }
    if times.len() == 1 {
        return Some((0, 0.0));
    }
    let i = match times.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => i.min(times.len() - 2),
        Err(i) => i - 1,
    };
    let w = (t - times[i]) / (times[i + 1] - times[i]);
    Some((i, w))
}

#[derive(Debug, Clone)]
pub struct EvolutionProblem {
    pub op: OperatorSpec,
    pub forcing: Forcing,
    pub x0: Point,
}

impl EvolutionProblem {
    /// T must be defined on the whole space since u(t) may leave any domain.
    pub fn new(op: OperatorSpec, forcing: Forcing, x0: Point) -> Result<Self> {
        if op.domain() != &ConvexSet::WholeSpace {
            return Err(Error::InvalidInput(
                "the evolution equation needs an operator defined on the whole space".into(),
            ));
        }
        if x0.dim() != op.dim() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                got: x0.dim(),
            });
        }
        forcing.check_shape(&x0)?;
        Ok(EvolutionProblem { op, forcing, x0 })
    }

    /// u′ = Tu − u + f(t).
    pub fn velocity(&self, t: f64, u: &Point) -> Point {
        let tu = self.op.apply_unchecked(u);
        let f = self.forcing.value(t, u.dim());
        let coords = tu
            .coords()
            .iter()
            .zip(u.coords())
            .zip(&f)
            .map(|((a, b), c)| a - b + c)
            .collect();
        Point::from_raw(coords, u.norm_kind())
    }

    fn rk4(&self, t: f64, u: &Point, h: f64) -> Point {
        let k1 = self.velocity(t, u);
        let k2 = self.velocity(t + h / 2.0, &u.add(&k1.scale(h / 2.0)));
        let k3 = self.velocity(t + h / 2.0, &u.add(&k2.scale(h / 2.0)));
        let k4 = self.velocity(t + h, &u.add(&k3.scale(h)));
        let incr = k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4);
        u.add(&incr.scale(h / 6.0))
    }
}

/// Samples of a solution at t_k = k·dt.
#[derive(Debug, Clone)]
pub struct ContinuousTrace {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    /// ∥u′(t_k)∥ from the right-hand side of the equation.
    pub deriv_norms: Vec<f64>,
    /// ∥u(t_k) − Tu(t_k)∥.
    pub residuals: Vec<f64>,
    /// Largest step-doubling estimate per unit time seen along the run.
    pub max_local_error: f64,
}

/// Integrates with fixed RK4 steps of size dt, checking each step against
/// two half steps.
pub fn integrate(problem: &EvolutionProblem, t_end: f64, dt: f64) -> Result<ContinuousTrace> {
    if !(dt > 0.0 && t_end >= 0.0 && dt.is_finite() && t_end.is_finite()) {
        return Err(Error::InvalidInput("need dt > 0 and t_end >= 0".into()));
    }
    let steps = (t_end / dt).round() as usize;
    let mut out = ContinuousTrace {
        times: Vec::with_capacity(steps + 1),
        points: Vec::with_capacity(steps + 1),
        deriv_norms: Vec::with_capacity(steps + 1),
        residuals: Vec::with_capacity(steps + 1),
        max_local_error: 0.0,
    };
    let mut u = problem.x0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        let v = problem.velocity(t, &u);
        out.times.push(t);
        out.deriv_norms.push(v.norm());
        out.residuals.push(u.dist(&problem.op.apply_unchecked(&u)));
        out.points.push(u.clone());
        if k == steps {
            break;
        }
        let full = problem.rk4(t, &u, dt);
        let half = problem.rk4(t, &u, dt / 2.0);
        let twice = problem.rk4(t + dt / 2.0, &half, dt / 2.0);
        let estimate = full.dist(&twice) / dt;
        out.max_local_error = out.max_local_error.max(estimate);
        if estimate > LOCAL_ERROR_BUDGET {
            return Err(Error::StepTooLarge { t, estimate });
        }
        u = full;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    /// x_n^n ≈ u(t).
    pub x: Point,
    /// (x_{n+1}^n − x_n^n)/λ ≈ u′(t).
    pub quotient: Point,
}

/// x_{k+1} = x_k + λ(Tx_k − x_k + f((k+1)λ)) with λ = t/n, i.e. inexact KM
/// with constant step λ and errors f(kλ).
pub fn discretize_scheme(problem: &EvolutionProblem, t: f64, n: usize) -> Result<Discretized> {
    if n == 0 || !(t > 0.0) {
        return Err(Error::InvalidInput("need n >= 1 and t > 0".into()));
    }
    let lambda = t / n as f64;
    let dim = problem.x0.dim();
    let norm = problem.x0.norm_kind();
    let target = |k: usize, x: &Point| {
        let tx = problem.op.apply_unchecked(x);
        let f = problem.forcing.value(k as f64 * lambda, dim);
        Point::from_raw(tx.coords().iter().zip(&f).map(|(a, b)| a + b).collect(), norm)
    };
    let mut x = problem.x0.clone();
    for k in 0..n {
        x = x.lerp(&target(k + 1, &x), lambda);
    }
    let quotient = target(n + 1, &x).sub(&x);
    Ok(Discretized { x, quotient })
}

/// κσ(t) + ∫_0^t 2ε(s)σ(t−s) ds + ε(t).
///
/// With t − s = u² the integral becomes ∫_0^{√t} 2ε(t−u²)·min(2u, 2/√π) du,
/// split at the kink u = 1/√π.
pub fn bound_continuous(kappa: f64, epsilon: &dyn Fn(f64) -> f64, t: f64, quad_tol: f64) -> f64 {
    assert!(t >= 0.0, "t must be nonnegative");
    let root = t.sqrt();
    let kink = 1.0 / PI.sqrt();
    let g = |u: f64| 2.0 * epsilon((root - u) * (root + u)) * (2.0 * u).min(2.0 * kink);
    let mut integral = 0.0;
    if root > 0.0 {
        let mid = kink.min(root);
        integral += quadrature::integrate(g, 0.0, mid, quad_tol, 1e-15).value;
        if root > mid {
            integral += quadrature::integrate(g, mid, root, quad_tol, 1e-15).value;
        }
    }
    kappa * sigma(t) + integral + epsilon(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousRate {
    pub nu: f64,
    /// ν/√t + 4∫_{t/2}^∞ ε.
    pub plain: f64,
    /// ν/√t + 4μ/φ(t/2), μ = ∫_0^∞ φε.
    pub weighted: Option<f64>,
}

/// Rate bounds for t >= 1 under a nonincreasing, integrable envelope ε,
/// with ν = (κ + 2√2·S)/√π.
pub fn bound_continuous_rate(
    kappa: f64,
    s: f64,
    forcing: &Forcing,
    phi: Option<&dyn Fn(f64) -> f64>,
    t: f64,
) -> Result<ContinuousRate> {
    if t < 1.0 {
        return Err(Error::InvalidInput("rate bounds hold for t >= 1".into()));
    }
    forcing.check_nonincreasing()?;
    let nu = (kappa + 2.0 * 2f64.sqrt() * s) / PI.sqrt();
    let lead = nu / t.sqrt();
    let plain = lead + 4.0 * forcing.tail_integral(t / 2.0)?;
    let weighted = match phi {
        Some(p) => {
            let mu = quadrature::integrate_to_infinity(|x| p(x) * forcing.epsilon(x), 0.0, 1e-10, 1e-14).value;
            Some(lead + 4.0 * mu / p(t / 2.0))
        }
        None => None,
    };
    Ok(ContinuousRate { nu, plain, weighted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::integral_i1_closed;
    use crate::spaces::NormKind;

    fn l2(c: &[f64]) -> Point {
        Point::new(c.to_vec(), NormKind::L2).unwrap()
    }

    #[test]
    fn scalar_decay() {
        let p = EvolutionProblem::new(OperatorSpec::constant(l2(&[0.0])), Forcing::Zero, l2(&[1.0])).unwrap();
        let tr = integrate(&p, 1.0, 1e-3).unwrap();
        let e = (-1.0f64).exp();
        let u1 = tr.points.last().unwrap().coords()[0];
        assert!((u1 - e).abs() / e <= 1e-8);
        assert!((tr.deriv_norms.last().unwrap() - e).abs() / e <= 1e-8);

        let d = discretize_scheme(&p, 1.0, 1000).unwrap();
        assert!((d.x.coords()[0] - (1.0 - 1e-3f64).powi(1000)).abs() < 1e-14);
    }

    #[test]
    fn identity_is_stationary() {
        let x0 = l2(&[0.3, -2.0]);
        let p = EvolutionProblem::new(OperatorSpec::identity(2, NormKind::L2), Forcing::Zero, x0.clone()).unwrap();
        let tr = integrate(&p, 2.0, 0.01).unwrap();
        assert!(tr.deriv_norms.iter().all(|v| *v == 0.0));
        assert_eq!(tr.points.last().unwrap(), &x0);
    }

    #[test]
    fn step_too_large_is_reported() {
        let p = EvolutionProblem::new(OperatorSpec::constant(l2(&[0.0])), Forcing::Zero, l2(&[1.0])).unwrap();
        assert!(matches!(integrate(&p, 5.0, 0.5), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn continuous_bound_examples() {
        let zero = |_: f64| 0.0;
        assert_eq!(bound_continuous(2.0, &zero, 9.0, 1e-10), 2.0 * sigma(9.0));
        let eps = |s: f64| 0.5 / (s + 1.0);
        for t in [0.5, 3.0, 50.0, 1e3] {
            let b = bound_continuous(0.0, &eps, t, 1e-10) - eps(t);
            assert!(b <= 2.0 * 0.5 * integral_i1_closed(t) / PI.sqrt() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn continuous_rate_examples() {
        let r = bound_continuous_rate(1.0, 0.0, &Forcing::Zero, None, 4.0).unwrap();
        assert!((r.plain - 1.0 / PI.sqrt() / 2.0).abs() < 1e-15);
        let f = Forcing::power_law(1.0, 2.0, l2(&[1.0, 0.0])).unwrap();
        let t = 10.0;
        assert!((f.tail_integral(t / 2.0).unwrap() - 1.0 / (t / 2.0 + 1.0)).abs() < 1e-15);
        let bad = Forcing::custom(vec![0.0, 1.0], vec![l2(&[0.1]), l2(&[0.2])]).unwrap();
        assert!(matches!(
            bound_continuous_rate(1.0, 0.0, &bad, None, 2.0),
            Err(Error::H2Violation { .. })
        ));
    }

    #[test]
    fn custom_forcing_interpolates() {
        let f = Forcing::custom(vec![0.0, 1.0, 3.0], vec![l2(&[1.0]), l2(&[0.5]), l2(&[0.0])]).unwrap();
        assert_eq!(f.value(0.5, 1), vec![0.75]);
        assert_eq!(f.value(2.0, 1), vec![0.25]);
        assert_eq!(f.value(4.0, 1), vec![0.0]);
        assert!((f.tail_integral(0.0).unwrap() - (0.75 + 0.5)).abs() < 1e-12);
    }
}
