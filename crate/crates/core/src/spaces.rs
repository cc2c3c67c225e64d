//! Finite-dimensional normed spaces: vectors tagged with a p-norm, and the
//! closed convex sets (balls, boxes, halfspaces) the operators live on.
//!
//! Balls are balls of the ambient norm. Under that convention every set kind
//! has a closed-form nearest point in every supported norm: radial scaling for
//! balls, coordinate clamping for boxes (any monotone norm), and a Hölder-dual
//! step for halfspaces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative allowance used by [`ConvexSet::contains`] to absorb the last-bit
/// rounding of the closed-form projections.
pub const MEMBERSHIP_RTOL: f64 = 1e-12;

/// The norm of the ambient space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NormKind {
    L1,
    #[default]
    L2,
    LInf,
    /// General p-norm, `p > 1`.
    Lp(f64),
}

impl NormKind {
    pub fn lp(p: f64) -> Result<Self> {
        let kind = NormKind::Lp(p);
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NormKind::Lp(p) if !(p.is_finite() && p > 1.0) => Err(Error::InvalidInput(format!(
                "Lp norm requires finite p > 1, got {p}"
            ))),
            _ => Ok(()),
        }
    }

    /// The exponent p (`f64::INFINITY` for the max norm).
    pub fn exponent(&self) -> f64 {
        match *self {
            NormKind::L1 => 1.0,
            NormKind::L2 => 2.0,
            NormKind::LInf => f64::INFINITY,
            NormKind::Lp(p) => p,
        }
    }

    /// The dual norm, i.e. the q-norm with 1/p + 1/q = 1.
    pub fn dual(&self) -> NormKind {
        match *self {
            NormKind::L1 => NormKind::LInf,
            NormKind::L2 => NormKind::L2,
            NormKind::LInf => NormKind::L1,
            NormKind::Lp(p) => NormKind::Lp(p / (p - 1.0)),
        }
    }

    /// Evaluates the norm of a raw coordinate slice.
    pub fn eval(&self, v: &[f64]) -> f64 {
        match *self {
            NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
            NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            NormKind::Lp(p) => {
                let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if scale == 0.0 {
                    return 0.0;
                }
                let s: f64 = v.iter().map(|x| (x.abs() / scale).powf(p)).sum();
                scale * s.powf(1.0 / p)
            }
        }
    }

    /// A vector `v` with `eval(v) == 1` and `<a, v> = dual.eval(a)`.
    /// Returns `None` for `a == 0`.
    fn dual_direction(&self, a: &[f64]) -> Option<Vec<f64>> {
        let dual_norm = self.dual().eval(a);
        if dual_norm == 0.0 {
            return None;
        }
        let v = match *self {
            NormKind::L2 => a.iter().map(|ai| ai / dual_norm).collect(),
            NormKind::L1 => {
                let (j, _) = a
                    .iter()
                    .enumerate()
                    .fold((0, 0.0f64), |(bj, bv), (i, x)| {
                        if x.abs() > bv {
                            (i, x.abs())
                        } else {
                            (bj, bv)
                        }
                    });
                let mut v = vec![0.0; a.len()];
                v[j] = a[j].signum();
                v
            }
            NormKind::LInf => a
                .iter()
                .map(|ai| if *ai == 0.0 { 0.0 } else { ai.signum() })
                .collect(),
            NormKind::Lp(p) => {
                let q = p / (p - 1.0);
                a.iter()
                    .map(|ai| {
                        if *ai == 0.0 {
                            0.0
                        } else {
                            ai.signum() * (ai.abs() / dual_norm).powf(q - 1.0)
                        }
                    })
                    .collect()
            }
        };
        Some(v)
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormKind::L1 => write!(f, "l1"),
            NormKind::L2 => write!(f, "l2"),
            NormKind::LInf => write!(f, "linf"),
            NormKind::Lp(p) => write!(f, "lp:{p}"),
        }
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            "linf" | "inf" => Ok(NormKind::LInf),
            other => {
                let p = other
                    .strip_prefix("lp:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown norm '{s}'")))?;
                NormKind::lp(p)
            }
        }
    }
}

impl TryFrom<String> for NormKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NormKind> for String {
    fn from(n: NormKind) -> String {
        n.to_string()
    }
}

/// A point of ℝ^d carrying the norm it is measured in.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
    norm: NormKind,
}

impl Point {
    /// Builds a point, rejecting empty or non-finite coordinates.
    pub fn new(coords: Vec<f64>, norm: NormKind) -> Result<Self> {
        norm.validate()?;
        if coords.is_empty() {
            return Err(Error::InvalidInput("point must have dimension >= 1".into()));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "coordinate {i} is not finite ({})",
                coords[i]
            )));
        }
        Ok(Point { coords, norm })
    }

    pub fn zeros(dim: usize, norm: NormKind) -> Self {
        assert!(dim >= 1, "dimension must be >= 1");
        Point {
            coords: vec![0.0; dim],
            norm,
        }
    }

    /// Unit vector along axis `i`.
    pub fn basis(dim: usize, i: usize, norm: NormKind) -> Self {
        let mut p = Point::zeros(dim, norm);
        p.coords[i] = 1.0;
        p
    }

    pub(crate) fn from_raw(coords: Vec<f64>, norm: NormKind) -> Self {
        Point { coords, norm }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm
    }

    pub fn norm(&self) -> f64 {
        self.norm.eval(&self.coords)
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    fn check_compatible(&self, other: &Point) {
        assert_eq!(
            self.coords.len(),
            other.coords.len(),
            "point dimensions differ"
        );
        assert_eq!(self.norm, other.norm, "point norm tags differ");
    }

    pub fn add(&self, other: &Point) -> Point {
        self.check_compatible(other);
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a + b)
            .collect();
        Point::from_raw(coords, self.norm)
    }

    pub fn sub(&self, other: &Point) -> Point {
        self.check_compatible(other);
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a - b)
            .collect();
        Point::from_raw(coords, self.norm)
    }

    pub fn scale(&self, factor: f64) -> Point {
        Point::from_raw(self.coords.iter().map(|c| c * factor).collect(), self.norm)
    }

    /// `self + weight * (target - self)`, the convex combination used by
    /// every averaging step.
    pub fn lerp(&self, target: &Point, weight: f64) -> Point {
        self.check_compatible(target);
        let coords = self
            .coords
            .iter()
            .zip(&target.coords)
            .map(|(x, y)| x + weight * (y - x))
            .collect();
        Point::from_raw(coords, self.norm)
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.check_compatible(other);
        let diff: Vec<f64> = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a - b)
            .collect();
        self.norm.eval(&diff)
    }

    /// Euclidean inner product of the coordinates.
    pub fn dot(&self, other: &[f64]) -> f64 {
        self.coords.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    /// Rescales to unit norm; `None` for the zero vector.
    pub fn normalized(&self) -> Option<Point> {
        let n = self.norm();
        (n > 0.0).then(|| self.scale(1.0 / n))
    }
}

/// Realizes ∥x∥ in the point's own norm.
pub fn norm(x: &Point) -> f64 {
    x.norm()
}

/// Closed convex subsets of ℝ^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexSet {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{x : <normal, x> <= offset}`.
    Halfspace { normal: Vec<f64>, offset: f64 },
    WholeSpace,
}

impl ConvexSet {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let set = ConvexSet::Ball { center, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = ConvexSet::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let set = ConvexSet::Halfspace { normal, offset };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            ConvexSet::Ball { center, radius } => {
                if center.is_empty() || !finite(center) {
                    return Err(Error::InvalidInput("ball center must be finite".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "ball radius must be > 0, got {radius}"
                    )));
                }
            }
            ConvexSet::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::InvalidInput("box bounds must have equal length".into()));
                }
                if !finite(lower) || !finite(upper) {
                    return Err(Error::InvalidInput("box bounds must be finite".into()));
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return Err(Error::InvalidInput("box requires lower <= upper".into()));
                }
            }
            ConvexSet::Halfspace { normal, offset } => {
                if normal.is_empty() || !finite(normal) || !offset.is_finite() {
                    return Err(Error::InvalidInput("halfspace data must be finite".into()));
                }
                if normal.iter().all(|a| *a == 0.0) {
                    return Err(Error::InvalidInput("halfspace normal must be nonzero".into()));
                }
            }
            ConvexSet::WholeSpace => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            ConvexSet::Ball { center, .. } => Some(center.len()),
            ConvexSet::Box { lower, .. } => Some(lower.len()),
            ConvexSet::Halfspace { normal, .. } => Some(normal.len()),
            ConvexSet::WholeSpace => None,
        }
    }

    fn check_dim(&self, x: &Point) -> Result<()> {
        match self.dim() {
            Some(d) if d != x.dim() => Err(Error::DimensionMismatch {
                expected: d,
                got: x.dim(),
            }),
            _ => Ok(()),
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, ConvexSet::Ball { .. } | ConvexSet::Box { .. })
    }

    /// Membership, exact up to [`MEMBERSHIP_RTOL`] of the set's scale.
    pub fn contains(&self, x: &Point) -> bool {
        if self.check_dim(x).is_err() {
            return false;
        }
        let slack = |scale: f64| MEMBERSHIP_RTOL * scale.abs().max(1.0);
        match self {
            ConvexSet::Ball { center, radius } => {
                let d = x.norm_kind().eval(&diff(x.coords(), center));
                d <= radius + slack(*radius)
            }
            ConvexSet::Box { lower, upper } => x
                .coords()
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(xi, (l, u))| *xi >= l - slack(*l) && *xi <= u + slack(*u)),
            ConvexSet::Halfspace { normal, offset } => {
                let scale = offset
                    .abs()
                    .max(NormKind::L2.eval(normal) * NormKind::L2.eval(x.coords()));
                x.dot(normal) <= offset + slack(scale)
            }
            ConvexSet::WholeSpace => true,
        }
    }

    /// `d(x, C) = inf_{z in C} ∥x − z∥` in the norm of `x`.
    pub fn distance(&self, x: &Point) -> Result<f64> {
        self.check_dim(x)?;
        let norm = x.norm_kind();
        Ok(match self {
            ConvexSet::Ball { center, radius } => {
                (norm.eval(&diff(x.coords(), center)) - radius).max(0.0)
            }
            ConvexSet::Box { lower, upper } => {
                let gap: Vec<f64> = x
                    .coords()
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(xi, (l, u))| xi - xi.clamp(*l, *u))
                    .collect();
                norm.eval(&gap)
            }
            ConvexSet::Halfspace { normal, offset } => {
                let gap = x.dot(normal) - offset;
                if gap <= 0.0 {
                    0.0
                } else {
                    gap / norm.dual().eval(normal)
                }
            }
            ConvexSet::WholeSpace => 0.0,
        })
    }

    /// Returns `z ∈ C` with `∥z − x∥ <= d(x, C) + slack`.
    ///
    /// With `slack == 0` this is a nearest point (the metric projection under
    /// L2). A positive slack is spent pushing `z` deeper into `C`, which is the
    /// worst admissible answer of an approximate projection oracle. Points
    /// already in `C` are returned unchanged.
    pub fn project(&self, x: &Point, slack: f64) -> Result<Point> {
        self.check_dim(x)?;
        if !(slack >= 0.0 && slack.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "projection slack must be finite and >= 0, got {slack}"
            )));
        }
        let norm = x.norm_kind();
        match self {
            ConvexSet::WholeSpace => Ok(x.clone()),
            ConvexSet::Ball { center, radius } => {
                let offset = diff(x.coords(), center);
                let d = norm.eval(&offset);
                if d <= *radius {
                    return Ok(x.clone());
                }
                let target = (radius - slack).max(0.0);
                let mut factor = target / d;
                // keep the rounded result inside the closed ball
                loop {
                    let coords: Vec<f64> = center
                        .iter()
                        .zip(&offset)
                        .map(|(c, o)| c + factor * o)
                        .collect();
                    if norm.eval(&diff(&coords, center)) <= *radius || factor == 0.0 {
                        return Ok(Point::from_raw(coords, norm));
                    }
                    factor *= 1.0 - f64::EPSILON;
                }
            }
            ConvexSet::Box { lower, upper } => {
                let clamped: Vec<f64> = x
                    .coords()
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(xi, (l, u))| xi.clamp(*l, *u))
                    .collect();
                if slack == 0.0 || clamped == x.coords() {
                    return Ok(Point::from_raw(clamped, norm));
                }
                let mid: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
                let to_mid = diff(&mid, &clamped);
                let len = norm.eval(&to_mid);
                if len == 0.0 {
                    return Ok(Point::from_raw(clamped, norm));
                }
                let theta = (slack / len).min(1.0);
                let coords = clamped
                    .iter()
                    .zip(&to_mid)
                    .map(|(c, m)| c + theta * m)
                    .zip(lower.iter().zip(upper))
                    .map(|(v, (l, u))| v.clamp(*l, *u))
                    .collect();
                Ok(Point::from_raw(coords, norm))
            }
            ConvexSet::Halfspace { normal, offset } => {
                let gap = x.dot(normal) - offset;
                if gap <= 0.0 {
                    return Ok(x.clone());
                }
                let v = norm
                    .dual_direction(normal)
                    .expect("validated halfspace normal is nonzero");
                let dual_norm = norm.dual().eval(normal);
                let step = gap / dual_norm + slack;
                let mut coords: Vec<f64> =
                    x.coords().iter().zip(&v).map(|(xi, vi)| xi - step * vi).collect();
                // nudge along v until the rounded point satisfies the constraint
                let mut extra = f64::EPSILON * (offset.abs().max(1.0));
                while coords.iter().zip(normal).map(|(c, a)| c * a).sum::<f64>() > *offset {
                    coords = coords
                        .iter()
                        .zip(&v)
                        .map(|(c, vi)| c - extra * vi / dual_norm)
                        .collect();
                    extra *= 2.0;
                }
                Ok(Point::from_raw(coords, norm))
            }
        }
    }

    /// `sup_{z in C} ∥z − x0∥`, when finite.
    pub fn sup_distance_from(&self, x0: &Point) -> Option<f64> {
        self.check_dim(x0).ok()?;
        let norm = x0.norm_kind();
        match self {
            ConvexSet::Ball { center, radius } => Some(norm.eval(&diff(x0.coords(), center)) + radius),
            ConvexSet::Box { lower, upper } => {
                let far: Vec<f64> = x0
                    .coords()
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(x, (l, u))| (l - x).abs().max((u - x).abs()))
                    .collect();
                Some(norm.eval(&far))
            }
            _ => None,
        }
    }

    /// Diameter in the given norm, when bounded.
    pub fn diameter(&self, norm: NormKind) -> Option<f64> {
        match self {
            ConvexSet::Ball { radius, .. } => Some(2.0 * radius),
            ConvexSet::Box { lower, upper } => Some(norm.eval(&diff(upper, lower))),
            _ => None,
        }
    }

    /// A bounding box for sampling: the set's own box, a box around the ball,
    /// or `[-extent, extent]^d` centered at the origin for unbounded sets.
    pub(crate) fn sampling_box(&self, dim: usize, extent: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            ConvexSet::Ball { center, radius } => (
                center.iter().map(|c| c - 1.5 * radius).collect(),
                center.iter().map(|c| c + 1.5 * radius).collect(),
            ),
            ConvexSet::Box { lower, upper } => {
                let pad: Vec<f64> = lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| 0.25 * (u - l) + 1e-3)
                    .collect();
                (
                    lower.iter().zip(&pad).map(|(l, p)| l - p).collect(),
                    upper.iter().zip(&pad).map(|(u, p)| u + p).collect(),
                )
            }
            _ => (vec![-extent; dim], vec![extent; dim]),
        }
    }
}

/// Realizes d(x, C).
pub fn distance_to_set(x: &Point, set: &ConvexSet) -> Result<f64> {
    set.distance(x)
}

/// Approximate projection oracle: `z ∈ C` with `∥z − x∥ <= d(x, C) + slack`.
pub fn project(x: &Point, set: &ConvexSet, slack: f64) -> Result<Point> {
    set.project(x, slack)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
