//! A catalog of nonexpansive maps with known structure, a sampling certifier
//! for nonexpansivity, κ estimates for the standing assumption, and operator
//! sequences for the diagonal iteration.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spaces::{ConvexSet, NormKind, Point};

/// Ratio above which a sampled pair counts as expansive.
pub const NONEXPANSIVE_TOL: f64 = 1e-9;

/// Extent of the sampling cube used for unbounded domains.
const SAMPLING_EXTENT: f64 = 5.0;

#[derive(Debug, Clone)]
pub enum OperatorKind {
    Projection(ConvexSet),
    /// Planar rotation about the origin.
    Rotation { angle: f64 },
    /// x ↦ x − step·(Qx − b).
    AveragedGradient {
        q: DMatrix<f64>,
        b: DVector<f64>,
        step: f64,
    },
    Constant(Vec<f64>),
    Identity,
    Translation(Vec<f64>),
    /// Applied first to last.
    Composition(Vec<OperatorSpec>),
    ConvexCombination {
        weights: Vec<f64>,
        ops: Vec<OperatorSpec>,
    },
}

/// What is known about Fix(T).
#[derive(Debug, Clone, PartialEq)]
pub enum FixedPoints {
    Empty,
    Point(Vec<f64>),
    Set(ConvexSet),
    Unknown,
}

/// A set known to contain T(C).
#[derive(Debug, Clone, PartialEq)]
pub enum RangeSet {
    Point(Vec<f64>),
    Set(ConvexSet),
}

#[derive(Debug, Clone, Default)]
pub struct OperatorMetadata {
    pub fixed_points: Option<FixedPoints>,
    pub range: Option<RangeSet>,
}

/// A nonexpansive map T : C → C on ℝ^d with a fixed norm.
#[derive(Debug, Clone)]
pub struct OperatorSpec {
    kind: OperatorKind,
    domain: ConvexSet,
    dim: usize,
    norm: NormKind,
    metadata: OperatorMetadata,
}

impl OperatorSpec {
    fn whole(kind: OperatorKind, dim: usize, norm: NormKind) -> Self {
        OperatorSpec {
            kind,
            domain: ConvexSet::WholeSpace,
            dim,
            norm,
            metadata: OperatorMetadata::default(),
        }
    }

    pub fn identity(dim: usize, norm: NormKind) -> Self {
        OperatorSpec::whole(OperatorKind::Identity, dim, norm)
    }

    /// Rotation of the Euclidean plane.
    pub fn rotation(angle: f64) -> Result<Self> {
        if !angle.is_finite() {
            return Err(Error::InvalidInput("rotation angle must be finite".into()));
        }
        Ok(OperatorSpec::whole(
            OperatorKind::Rotation { angle },
            2,
            NormKind::L2,
        ))
    }

    /// Nearest-point map onto `set`. Balls and halfspaces require L2, where
    /// the projection is nonexpansive; boxes are accepted in any p-norm.
    pub fn projection(set: ConvexSet, norm: NormKind) -> Result<Self> {
        set.validate()?;
        let dim = set
            .dim()
            .ok_or_else(|| Error::InvalidInput("projection onto the whole space".into()))?;
        match (&set, norm) {
            (ConvexSet::Box { .. }, _) | (_, NormKind::L2) => {}
            _ => {
                return Err(Error::UnsupportedCombination(format!(
                    "projection onto {set:?} is not nonexpansive in {norm}"
                )))
            }
        }
        Ok(OperatorSpec::whole(OperatorKind::Projection(set), dim, norm))
    }

    /// Gradient step for ½xᵀQx − bᵀx, nonexpansive for step ∈ (0, 2/λ_max(Q)].
    pub fn averaged_gradient(q: Vec<Vec<f64>>, b: Vec<f64>, step: f64) -> Result<Self> {
        let op = OperatorSpec::averaged_gradient_unchecked(q, b, step)?;
        if let OperatorKind::AveragedGradient { q, step, .. } = &op.kind {
            let lmax = max_eigenvalue(q);
            if !(*step > 0.0 && *step <= 2.0 / lmax * (1.0 + 1e-12)) {
                return Err(Error::NotNonexpansive(format!(
                    "step {step} outside (0, 2/λ_max] with λ_max = {lmax}"
                )));
            }
        }
        Ok(op)
    }

    /// Same as [`OperatorSpec::averaged_gradient`] without the step-size check.
    pub fn averaged_gradient_unchecked(q: Vec<Vec<f64>>, b: Vec<f64>, step: f64) -> Result<Self> {
        let d = b.len();
        if d == 0 || q.len() != d || q.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidInput("Q must be a d x d matrix matching b".into()));
        }
        let q = DMatrix::from_fn(d, d, |i, j| q[i][j]);
        if (&q - q.transpose()).abs().max() > 1e-12 * q.abs().max().max(1.0) {
            return Err(Error::InvalidInput("Q must be symmetric".into()));
        }
        let eig = q.clone().symmetric_eigen();
        if eig.eigenvalues.min() < -1e-12 {
            return Err(Error::InvalidInput("Q must be positive semidefinite".into()));
        }
        if !step.is_finite() {
            return Err(Error::InvalidInput("step must be finite".into()));
        }
        Ok(OperatorSpec::whole(
            OperatorKind::AveragedGradient {
                q,
                b: DVector::from_vec(b),
                step,
            },
            d,
            NormKind::L2,
        ))
    }

    pub fn constant(c: Point) -> Self {
        let (dim, norm) = (c.dim(), c.norm_kind());
        OperatorSpec::whole(OperatorKind::Constant(c.into_coords()), dim, norm)
    }

    /// x ↦ x + v; fixed-point free when v ≠ 0.
    pub fn translation(v: Point) -> Self {
        let (dim, norm) = (v.dim(), v.norm_kind());
        OperatorSpec::whole(OperatorKind::Translation(v.into_coords()), dim, norm)
    }

    pub fn composition(ops: Vec<OperatorSpec>) -> Result<Self> {
        let (dim, norm) = common_shape(&ops)?;
        Ok(OperatorSpec::whole(OperatorKind::Composition(ops), dim, norm))
    }

    pub fn convex_combination(weights: Vec<f64>, ops: Vec<OperatorSpec>) -> Result<Self> {
        let (dim, norm) = common_shape(&ops)?;
        if weights.len() != ops.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be nonnegative, one per operator".into()));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("weights must sum to 1".into()));
        }
        Ok(OperatorSpec::whole(
            OperatorKind::ConvexCombination { weights, ops },
            dim,
            norm,
        ))
    }

    /// Restricts T to `domain`, spot-checking that T maps it into itself.
    pub fn with_domain(mut self, domain: ConvexSet) -> Result<Self> {
        domain.validate()?;
        if let Some(d) = domain.dim() {
            if d != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: d,
                });
            }
        }
        self.domain = domain;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d0a1);
        for _ in 0..512 {
            let x = self.sample_domain(&mut rng);
            let tx = self.apply_unchecked(&x);
            if self.domain.distance(&tx)? > 1e-9 * tx.norm().max(1.0) {
                return Err(Error::DomainNotInvariant(format!(
                    "T{:?} = {:?} leaves the domain",
                    x.coords(),
                    tx.coords()
                )));
            }
        }
        Ok(self)
    }

    pub fn with_fixed_points(mut self, fp: FixedPoints) -> Self {
        self.metadata.fixed_points = Some(fp);
        self
    }

    pub fn with_range(mut self, range: RangeSet) -> Self {
        self.metadata.range = Some(range);
        self
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn domain(&self) -> &ConvexSet {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> NormKind {
        self.norm
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        if x.norm_kind() != self.norm {
            return Err(Error::UnsupportedCombination(format!(
                "operator works in {} but the point is tagged {}",
                self.norm,
                x.norm_kind()
            )));
        }
        Ok(())
    }

    /// Tx, rejecting points outside the declared domain.
    pub fn apply(&self, x: &Point) -> Result<Point> {
        self.check_point(x)?;
        if !self.domain.contains(x) {
            return Err(Error::DomainViolation { step: None });
        }
        Ok(self.apply_unchecked(x))
    }

    /// Tx evaluated by formula, without the domain check.
    pub fn apply_unchecked(&self, x: &Point) -> Point {
        let norm = x.norm_kind();
        match &self.kind {
            OperatorKind::Identity => x.clone(),
            OperatorKind::Projection(set) => set
                .project(x, 0.0)
                .expect("projection set dimension checked at construction"),
            OperatorKind::Rotation { angle } => {
                let (s, c) = angle.sin_cos();
                let v = x.coords();
                Point::from_raw(vec![c * v[0] - s * v[1], s * v[0] + c * v[1]], norm)
            }
            OperatorKind::AveragedGradient { q, b, step } => {
                let xv = DVector::from_column_slice(x.coords());
                let grad = q * &xv - b;
                Point::from_raw((xv - grad * *step).as_slice().to_vec(), norm)
            }
            OperatorKind::Constant(c) => Point::from_raw(c.clone(), norm),
            OperatorKind::Translation(v) => {
                Point::from_raw(x.coords().iter().zip(v).map(|(a, b)| a + b).collect(), norm)
            }
            OperatorKind::Composition(ops) => ops
                .iter()
                .fold(x.clone(), |acc, op| op.apply_unchecked(&acc)),
            OperatorKind::ConvexCombination { weights, ops } => {
                let mut acc = vec![0.0; x.dim()];
                for (w, op) in weights.iter().zip(ops) {
                    for (a, t) in acc.iter_mut().zip(op.apply_unchecked(x).coords()) {
                        *a += w * t;
                    }
                }
                Point::from_raw(acc, norm)
            }
        }
    }

    /// Fix(T), from metadata or from the operator's structure.
    pub fn fixed_points(&self) -> FixedPoints {
        if let Some(fp) = &self.metadata.fixed_points {
            return fp.clone();
        }
        match &self.kind {
            OperatorKind::Projection(set) => FixedPoints::Set(set.clone()),
            OperatorKind::Rotation { angle } => {
                if (angle / (2.0 * PI)).fract() == 0.0 {
                    FixedPoints::Set(ConvexSet::WholeSpace)
                } else {
                    FixedPoints::Point(vec![0.0, 0.0])
                }
            }
            OperatorKind::AveragedGradient { q, b, .. } => match q.clone().lu().solve(b) {
                Some(x) if x.iter().all(|v| v.is_finite()) && q.clone().lu().determinant() != 0.0 => {
                    FixedPoints::Point(x.as_slice().to_vec())
                }
                _ => FixedPoints::Unknown,
            },
            OperatorKind::Constant(c) => FixedPoints::Point(c.clone()),
            OperatorKind::Identity => FixedPoints::Set(ConvexSet::WholeSpace),
            OperatorKind::Translation(v) => {
                if v.iter().all(|x| *x == 0.0) {
                    FixedPoints::Set(ConvexSet::WholeSpace)
                } else {
                    FixedPoints::Empty
                }
            }
            OperatorKind::Composition(_) | OperatorKind::ConvexCombination { .. } => {
                FixedPoints::Unknown
            }
        }
    }

    /// dist(x0, Fix T), when Fix T is known and nonempty.
    pub fn distance_to_fixed_points(&self, x0: &Point) -> Option<f64> {
        match self.fixed_points() {
            FixedPoints::Point(p) => Some(x0.dist(&Point::from_raw(p, x0.norm_kind()))),
            FixedPoints::Set(set) => set.distance(x0).ok(),
            FixedPoints::Empty | FixedPoints::Unknown => None,
        }
    }

    /// An upper bound on sup_x ∥Tx − x0∥ coming from a bounded range.
    pub fn range_radius(&self, x0: &Point) -> Option<f64> {
        if let Some(range) = &self.metadata.range {
            return match range {
                RangeSet::Point(p) => Some(x0.dist(&Point::from_raw(p.clone(), x0.norm_kind()))),
                RangeSet::Set(set) => set.sup_distance_from(x0),
            };
        }
        match &self.kind {
            OperatorKind::Projection(set) => set.sup_distance_from(x0),
            OperatorKind::Constant(c) => Some(x0.dist(&Point::from_raw(c.clone(), x0.norm_kind()))),
            OperatorKind::Composition(ops) => ops.last().and_then(|op| op.range_radius(x0)),
            OperatorKind::ConvexCombination { weights, ops } => weights
                .iter()
                .zip(ops)
                .map(|(w, op)| op.range_radius(x0).map(|r| w * r))
                .sum(),
            _ => None,
        }
    }

    /// Uniform sample from a box around the domain, projected into it.
    pub fn sample_domain<R: Rng>(&self, rng: &mut R) -> Point {
        let (lo, hi) = self.domain.sampling_box(self.dim, SAMPLING_EXTENT);
        let coords: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| if h > l { rng.random_range(*l..*h) } else { *l })
            .collect();
        let x = Point::from_raw(coords, self.norm);
        self.domain
            .project(&x, 0.0)
            .expect("sampling box matches the domain dimension")
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            OperatorKind::Projection(set) => write!(f, "projection({set:?})"),
            OperatorKind::Rotation { angle } => write!(f, "rotation({angle})"),
            OperatorKind::AveragedGradient { step, .. } => {
                write!(f, "averaged_gradient(d={}, step={step})", self.dim)
            }
            OperatorKind::Constant(c) => write!(f, "constant({c:?})"),
            OperatorKind::Identity => write!(f, "identity(d={})", self.dim),
            OperatorKind::Translation(v) => write!(f, "translation({v:?})"),
            OperatorKind::Composition(ops) => {
                let parts: Vec<String> = ops.iter().map(|o| o.to_string()).collect();
                write!(f, "composition[{}]", parts.join(", "))
            }
            OperatorKind::ConvexCombination { weights, ops } => {
                let parts: Vec<String> = weights
                    .iter()
                    .zip(ops)
                    .map(|(w, o)| format!("{w}*{o}"))
                    .collect();
                write!(f, "combination[{}]", parts.join(" + "))
            }
        }
    }
}

fn common_shape(ops: &[OperatorSpec]) -> Result<(usize, NormKind)> {
    let first = ops
        .first()
        .ok_or_else(|| Error::InvalidInput("need at least one operator".into()))?;
    for op in ops {
        if op.dim != first.dim || op.norm != first.norm {
            return Err(Error::InvalidInput("operators must share dimension and norm".into()));
        }
    }
    Ok((first.dim, first.norm))
}

fn max_eigenvalue(q: &DMatrix<f64>) -> f64 {
    q.clone().symmetric_eigen().eigenvalues.max()
}

/// Result of [`certify_nonexpansive`].
#[derive(Debug, Clone)]
pub struct NonexpansiveReport {
    pub max_ratio: f64,
    pub witness: Option<(Point, Point)>,
    pub pass: bool,
}

/// Samples pairs from the domain and records max ∥Tx−Ty∥/∥x−y∥.
///
/// Half the pairs are independent draws, half are close pairs, which catches
/// local expansion.
pub fn certify_nonexpansive(op: &OperatorSpec, samples: usize, seed: u64) -> NonexpansiveReport {
    assert!(samples >= 2, "need at least two samples");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    let mut witness = None;
    for k in 0..samples {
        let x = op.sample_domain(&mut rng);
        let y = if k % 2 == 0 {
            op.sample_domain(&mut rng)
        } else {
            let scale = 10f64.powf(rng.random_range(-2.0..0.0));
            let coords: Vec<f64> = x
                .coords()
                .iter()
                .map(|c| c + scale * rng.random_range(-1.0..1.0))
                .collect();
            op.domain
                .project(&Point::from_raw(coords, op.norm), 0.0)
                .expect("dimension checked")
        };
        let d = x.dist(&y);
        if d == 0.0 {
            continue;
        }
        let ratio = op.apply_unchecked(&x).dist(&op.apply_unchecked(&y)) / d;
        if ratio > max_ratio {
            max_ratio = ratio;
            witness = Some((x, y));
        }
    }
    NonexpansiveReport {
        max_ratio,
        witness,
        pass: max_ratio <= 1.0 + NONEXPANSIVE_TOL,
    }
}

/// Where a κ value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaSource {
    UserSupplied,
    /// sup ∥Tx − x0∥ over a bounded range.
    RangeBound,
    /// 2·dist(x0, Fix T) + S.
    FixedPointDistance,
    /// sup ∥z − x0∥ over a bounded domain.
    BoundedDomain,
    /// diam(C).
    Diameter,
}

impl fmt::Display for KappaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KappaSource::UserSupplied => "user-supplied",
            KappaSource::RangeBound => "range-bound",
            KappaSource::FixedPointDistance => "fixed-point-distance",
            KappaSource::BoundedDomain => "bounded-domain",
            KappaSource::Diameter => "diameter",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    Value { value: f64, source: KappaSource },
    Unavailable,
}

impl Kappa {
    pub fn value(&self) -> Option<f64> {
        match self {
            Kappa::Value { value, .. } => Some(*value),
            Kappa::Unavailable => None,
        }
    }
}

/// κ for the standing assumption: the range bound when T has a bounded range,
/// else 2·dist(x0, Fix T) + S with S = Σ α_k ∥e_k∥.
pub fn kappa_estimate(op: &OperatorSpec, x0: &Point, s: f64) -> Kappa {
    if let Some(value) = op.range_radius(x0) {
        return Kappa::Value {
            value,
            source: KappaSource::RangeBound,
        };
    }
    if let Some(d) = op.distance_to_fixed_points(x0) {
        return Kappa::Value {
            value: 2.0 * d + s,
            source: KappaSource::FixedPointDistance,
        };
    }
    Kappa::Unavailable
}

/// κ following the full sourcing order: explicit value, range bound,
/// fixed-point distance, then a bounded domain.
pub fn resolve_kappa(op: &OperatorSpec, x0: &Point, s: f64, explicit: Option<f64>) -> Kappa {
    if let Some(value) = explicit {
        return Kappa::Value {
            value,
            source: KappaSource::UserSupplied,
        };
    }
    match kappa_estimate(op, x0, s) {
        Kappa::Unavailable => match op.domain().sup_distance_from(x0) {
            Some(value) => Kappa::Value {
                value,
                source: KappaSource::BoundedDomain,
            },
            None => Kappa::Unavailable,
        },
        k => k,
    }
}

type Generator = Arc<dyn Fn(usize) -> OperatorSpec + Send + Sync>;
type Modulus = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

#[derive(Clone)]
enum SequenceFamily {
    Stationary,
    ShrinkingBall { center: Vec<f64>, radius: f64 },
    PerturbedRotation { angle: f64, shift: f64, radius: f64 },
    Custom { generator: Generator, rho: Modulus },
}

/// T_n → T uniformly on C with sup_{x∈C} ∥T_n x − Tx∥ <= ρ(n).
#[derive(Clone)]
pub struct OperatorSequence {
    family: SequenceFamily,
    limit: OperatorSpec,
}

impl fmt::Debug for OperatorSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.family {
            SequenceFamily::Stationary => "stationary",
            SequenceFamily::ShrinkingBall { .. } => "shrinking-ball",
            SequenceFamily::PerturbedRotation { .. } => "perturbed-rotation",
            SequenceFamily::Custom { .. } => "custom",
        };
        f.debug_struct("OperatorSequence")
            .field("family", &name)
            .field("limit", &self.limit)
            .finish()
    }
}

impl OperatorSequence {
    /// T_n = T for all n.
    pub fn stationary(op: OperatorSpec) -> Self {
        OperatorSequence {
            family: SequenceFamily::Stationary,
            limit: op,
        }
    }

    /// T_n = P onto Ball(c, r(1 + 1/n)) with limit P onto Ball(c, r), on the
    /// domain Ball(c, 2r); ρ(n) = r/n.
    pub fn shrinking_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let limit = OperatorSpec::projection(ConvexSet::ball(center.clone(), radius)?, NormKind::L2)?
            .with_domain(ConvexSet::ball(center.clone(), 2.0 * radius)?)?;
        Ok(OperatorSequence {
            family: SequenceFamily::ShrinkingBall { center, radius },
            limit,
        })
    }

    /// T_n = rotation by angle + shift/n with limit rotation by angle, on the
    /// disc of the given radius; ρ(n) = 2R·sin(|shift|/(2n)).
    pub fn perturbed_rotation(angle: f64, shift: f64, radius: f64) -> Result<Self> {
        let limit = OperatorSpec::rotation(angle)?.with_domain(ConvexSet::ball(vec![0.0, 0.0], radius)?)?;
        Ok(OperatorSequence {
            family: SequenceFamily::PerturbedRotation {
                angle,
                shift,
                radius,
            },
            limit,
        })
    }

    pub fn custom(
        limit: OperatorSpec,
        generator: impl Fn(usize) -> OperatorSpec + Send + Sync + 'static,
        rho: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        OperatorSequence {
            family: SequenceFamily::Custom {
                generator: Arc::new(generator),
                rho: Arc::new(rho),
            },
            limit,
        }
    }

    pub fn limit(&self) -> &OperatorSpec {
        &self.limit
    }

    /// T_n for n >= 1.
    pub fn operator(&self, n: usize) -> OperatorSpec {
        let n = n.max(1);
        match &self.family {
            SequenceFamily::Stationary => self.limit.clone(),
            SequenceFamily::ShrinkingBall { center, radius } => {
                let set = ConvexSet::Ball {
                    center: center.clone(),
                    radius: radius * (1.0 + 1.0 / n as f64),
                };
                OperatorSpec::projection(set, NormKind::L2)
                    .expect("valid ball")
                    .with_domain_unchecked(self.limit.domain.clone())
            }
            SequenceFamily::PerturbedRotation { angle, shift, .. } => {
                OperatorSpec::rotation(angle + shift / n as f64)
                    .expect("finite angle")
                    .with_domain_unchecked(self.limit.domain.clone())
            }
            SequenceFamily::Custom { generator, .. } => generator(n),
        }
    }

    pub fn rho(&self, n: usize) -> f64 {
        let n = n.max(1);
        match &self.family {
            SequenceFamily::Stationary => 0.0,
            SequenceFamily::ShrinkingBall { radius, .. } => radius / n as f64,
            SequenceFamily::PerturbedRotation { shift, radius, .. } => {
                2.0 * radius * (shift.abs() / (2.0 * n as f64)).sin()
            }
            SequenceFamily::Custom { rho, .. } => rho(n),
        }
    }

    /// max over sampled x of ∥T_n x − Tx∥ − ρ(n), for each requested n.
    pub fn certify_rho(&self, samples: usize, seed: u64, ns: &[usize]) -> Vec<(usize, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ns.iter()
            .map(|&n| {
                let tn = self.operator(n);
                let worst = (0..samples)
                    .map(|_| {
                        let x = self.limit.sample_domain(&mut rng);
                        tn.apply_unchecked(&x).dist(&self.limit.apply_unchecked(&x))
                    })
                    .fold(0.0, f64::max);
                (n, worst - self.rho(n))
            })
            .collect()
    }
}

impl OperatorSpec {
    fn with_domain_unchecked(mut self, domain: ConvexSet) -> Self {
        self.domain = domain;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2(c: &[f64]) -> Point {
        Point::new(c.to_vec(), NormKind::L2).unwrap()
    }

    #[test]
    fn apply_examples() {
        let id = OperatorSpec::identity(2, NormKind::L2);
        assert_eq!(id.apply(&l2(&[1.0, 2.0])).unwrap(), l2(&[1.0, 2.0]));

        let rot = OperatorSpec::rotation(PI / 2.0).unwrap();
        let y = rot.apply(&l2(&[1.0, 0.0])).unwrap();
        assert!(y.dist(&l2(&[0.0, 1.0])) < 1e-15);

        let proj =
            OperatorSpec::projection(ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(), NormKind::L2).unwrap();
        assert_eq!(proj.apply(&l2(&[0.0, 3.0])).unwrap(), l2(&[0.0, 1.0]));
    }

    #[test]
    fn domain_violation() {
        let rot = OperatorSpec::rotation(1.0)
            .unwrap()
            .with_domain(ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap())
            .unwrap();
        assert!(matches!(
            rot.apply(&l2(&[2.0, 0.0])),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn domain_invariance_is_spot_checked() {
        let shift = OperatorSpec::translation(l2(&[1.0, 0.0]));
        let r = shift.with_domain(ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap());
        assert!(matches!(r, Err(Error::DomainNotInvariant(_))));
    }

    #[test]
    fn certify_examples() {
        let rot = OperatorSpec::rotation(0.7).unwrap();
        let rep = certify_nonexpansive(&rot, 2000, 1);
        assert!((rep.max_ratio - 1.0).abs() <= 1e-12);
        assert!(rep.pass);

        let c = OperatorSpec::constant(l2(&[1.0, -1.0]));
        assert_eq!(certify_nonexpansive(&c, 100, 1).max_ratio, 0.0);

        let bad = OperatorSpec::averaged_gradient_unchecked(
            vec![vec![1.0, 0.0], vec![0.0, 10.0]],
            vec![0.0, 0.0],
            0.25,
        )
        .unwrap();
        let rep = certify_nonexpansive(&bad, 1000, 3);
        assert!(!rep.pass);
        assert!(rep.witness.is_some());
        assert!(rep.max_ratio > 1.0 && rep.max_ratio <= 1.5 + 1e-12);
    }

    #[test]
    fn averaged_gradient_step_is_validated() {
        let q = vec![vec![1.0, 0.0], vec![0.0, 10.0]];
        assert!(OperatorSpec::averaged_gradient(q.clone(), vec![0.0, 0.0], 0.25).is_err());
        assert!(OperatorSpec::averaged_gradient(q, vec![0.0, 0.0], 0.2).is_ok());
        assert!(OperatorSpec::averaged_gradient_unchecked(
            vec![vec![1.0, 2.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            0.1
        )
        .is_err());
    }

    #[test]
    fn kappa_examples() {
        let proj =
            OperatorSpec::projection(ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(), NormKind::L2).unwrap();
        assert_eq!(kappa_estimate(&proj, &l2(&[3.0, 0.0]), 0.0).value(), Some(4.0));

        let c = OperatorSpec::constant(l2(&[1.0, 1.0]));
        let x0 = l2(&[4.0, 5.0]);
        assert_eq!(kappa_estimate(&c, &x0, 0.0).value(), Some(5.0));

        let id = OperatorSpec::identity(2, NormKind::L2);
        assert_eq!(kappa_estimate(&id, &x0, 0.5).value(), Some(0.5));

        let shift = OperatorSpec::translation(l2(&[1.0, 0.0]));
        assert_eq!(kappa_estimate(&shift, &x0, 0.0), Kappa::Unavailable);
        assert_eq!(
            resolve_kappa(&shift, &x0, 0.0, Some(3.0)),
            Kappa::Value {
                value: 3.0,
                source: KappaSource::UserSupplied
            }
        );
    }

    #[test]
    fn averaged_gradient_fixed_point() {
        let op = OperatorSpec::averaged_gradient(
            vec![vec![2.0, 0.5], vec![0.5, 1.0]],
            vec![1.0, -1.0],
            0.5,
        )
        .unwrap();
        let FixedPoints::Point(x) = op.fixed_points() else {
            panic!("expected a unique fixed point")
        };
        let xs = l2(&x);
        assert!(op.apply(&xs).unwrap().dist(&xs) < 1e-12);
    }

    #[test]
    fn sequences_reduce_and_converge() {
        let seq = OperatorSequence::shrinking_ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!((seq.rho(4) - 0.25).abs() < 1e-15);
        for (_, excess) in seq.certify_rho(1000, 9, &[1, 2, 4, 8, 16, 32, 64, 128, 256]) {
            assert!(excess <= 1e-9);
        }
        let rot = OperatorSequence::perturbed_rotation(1.0, 0.5, 2.0).unwrap();
        for (_, excess) in rot.certify_rho(1000, 9, &[1, 2, 4, 8, 16, 32, 64, 128, 256]) {
            assert!(excess <= 1e-9);
        }
        assert!(rot.rho(2) < rot.rho(1));
    }

    #[test]
    fn non_l2_ball_projection_is_rejected() {
        let ball = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(matches!(
            OperatorSpec::projection(ball, NormKind::L1),
            Err(Error::UnsupportedCombination(_))
        ));
        let b = ConvexSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let op = OperatorSpec::projection(b, NormKind::LInf).unwrap();
        assert!(certify_nonexpansive(&op, 4000, 2).pass);
    }
}
