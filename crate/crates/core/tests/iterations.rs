//! Properties of the iteration drivers, the fox-and-hare DP and the
//! continuous-time solver.

use proptest::prelude::*;

use km_lab::bounds::MainBound;
use km_lab::engines::{run_dkm, run_ikm, run_ishikawa, run_km, RunOptions, Trace};
use km_lab::evolution::{discretize_scheme, integrate, EvolutionProblem, Forcing};
use km_lab::markov::dp_w;
use km_lab::operators::{resolve_kappa, FixedPoints};
use km_lab::schedules::{pi_weights, Direction};
use km_lab::{ConvexSet, ErrorModel, Magnitude, NormKind, OperatorSequence, OperatorSpec, Point, StepSchedule};

fn p(v: &[f64]) -> Point {
    Point::new(v.to_vec(), NormKind::L2).unwrap()
}

fn ops() -> Vec<OperatorSpec> {
    let ball = ConvexSet::ball(vec![1.0, 0.0], 1.5).unwrap();
    let boxed = ConvexSet::boxed(vec![-1.0, -1.0], vec![1.0, 0.5]).unwrap();
    vec![
        OperatorSpec::rotation(1.0).unwrap(),
        OperatorSpec::projection(ball, NormKind::L2).unwrap(),
        OperatorSpec::projection(boxed, NormKind::L2).unwrap(),
        OperatorSpec::averaged_gradient(vec![vec![2.0, 0.5], vec![0.5, 1.0]], vec![1.0, -1.0], 0.8).unwrap(),
    ]
}

fn schedules() -> Vec<StepSchedule> {
    vec![
        StepSchedule::constant(0.3).unwrap(),
        StepSchedule::constant(0.7).unwrap(),
        StepSchedule::power(0.6).unwrap(),
        StepSchedule::custom(vec![0.9, 0.2, 0.6, 0.45, 0.8, 0.35]).unwrap(),
    ]
}

fn same_points(a: &Trace, b: &Trace) -> bool {
    a.residuals == b.residuals && (0..=a.n_max()).all(|n| a.point(n) == b.point(n))
}

#[test]
fn reductions_to_exact_km() {
    let x0 = p(&[3.0, -2.0]);
    for op in ops() {
        for s in schedules() {
            let opts = RunOptions::new(300);
            let km = run_km(&op, &x0, &s, &opts).unwrap();
            let ikm = run_ikm(&op, &x0, &s, &ErrorModel::zero(), &opts).unwrap();
            assert!(same_points(&km, &ikm), "{op}");
            let ish = run_ishikawa(&op, &x0, &s, &StepSchedule::custom(vec![0.0]).unwrap(), &opts).unwrap();
            assert!(same_points(&km, &ish), "{op}");
            let dkm = run_dkm(&OperatorSequence::stationary(op.clone()), &x0, &s, &opts).unwrap();
            assert!(same_points(&km, &dkm), "{op}");
        }
    }
}

fn fixed_samples(op: &OperatorSpec) -> Vec<Point> {
    match op.fixed_points() {
        FixedPoints::Point(v) => vec![p(&v)],
        FixedPoints::Set(set) => [[0.0, 0.0], [5.0, 5.0], [-4.0, 1.0], [1.0, -7.0]]
            .iter()
            .map(|c| set.project(&p(c), 0.0).unwrap())
            .collect(),
        _ => Vec::new(),
    }
}

#[test]
fn fejer_monotonicity_along_ikm() {
    let x0 = p(&[3.0, -2.0]);
    for op in ops() {
        let stars = fixed_samples(&op);
        assert!(!stars.is_empty(), "{op} declares its fixed points");
        for s in schedules() {
            for dir in [Direction::RandomUnit, Direction::Adversarial, Direction::FixedUnit(vec![0.0, 1.0])] {
                let model = ErrorModel::new(Magnitude::PowerLaw { k: 0.5, a: 1.0 }, dir);
                let t = run_ikm(&op, &x0, &s, &model, &RunOptions::new(500).seed(9)).unwrap();
                for star in &stars {
                    for n in 1..=500 {
                        let prev = t.point(n - 1).unwrap().dist(star);
                        let cur = t.point(n).unwrap().dist(star);
                        assert!(cur <= prev + s.alpha(n) * t.err_norms[n] + 1e-12, "{op} n={n}");
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn averaging_identity(
        op_idx in 0usize..4,
        values in prop::collection::vec(0.05f64..=1.0, 1..12),
        k in 0.0f64..2.0,
        a in 0.3f64..2.0,
        seed in any::<u64>(),
        x in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let op = &ops()[op_idx];
        let s = StepSchedule::custom(values).unwrap();
        let model = ErrorModel::new(Magnitude::PowerLaw { k, a }, Direction::RandomUnit);
        let t = run_ikm(op, &p(&x), &s, &model, &RunOptions::new(200).seed(seed).record_outputs()).unwrap();
        for n in [0usize, 1, 2, 7, 50, 199, 200] {
            let w = pi_weights(&s, n);
            let mut sum = vec![0.0; 2];
            for (i, wi) in w.iter().enumerate() {
                for (acc, c) in sum.iter_mut().zip(t.outputs[i].coords()) {
                    *acc += wi * c;
                }
            }
            let xn = t.point(n).unwrap();
            prop_assert!(p(&sum).dist(xn) <= 1e-10, "n = {}", n);
        }
    }

    #[test]
    fn differences_bounded_by_dp(
        op_idx in 0usize..4,
        s_idx in 0usize..4,
        k in 0.0f64..1.0,
        a in 0.5f64..2.0,
        seed in any::<u64>(),
    ) {
        let op = &ops()[op_idx];
        let s = &schedules()[s_idx];
        let x0 = p(&[2.5, 2.0]);
        let n = 200;
        let mag = Magnitude::PowerLaw { k, a };
        let table = s.table(n + 1);
        let eps = mag.sequence(&table, n + 1);
        let model = ErrorModel::new(mag, Direction::RandomUnit);
        let t = run_ikm(op, &x0, s, &model, &RunOptions::new(n).seed(seed)).unwrap();
        let sum: f64 = (1..=n).map(|i| table.alpha(i) * eps[i]).sum();
        let kappa = resolve_kappa(op, &x0, sum, None).value().unwrap();
        prop_assert!(!t.is_flagged(kappa));
        let dp = dp_w(s, &eps, kappa, n).unwrap();
        for m in 0..=n {
            for j in m..=n {
                let d = t.point(m).unwrap().dist(t.point(j).unwrap());
                prop_assert!(d <= dp.w(m as isize, j) + 1e-9, "m={} n={}", m, j);
            }
        }
    }

    #[test]
    fn residuals_dominated_by_main_bound(
        op_idx in 0usize..4,
        alpha in 0.05f64..0.95,
        k in 0.0f64..2.0,
        a in 0.5f64..2.5,
        dir in 0usize..3,
        seed in any::<u64>(),
        x in prop::collection::vec(-6.0f64..6.0, 2),
    ) {
        let op = &ops()[op_idx];
        let s = StepSchedule::constant(alpha).unwrap();
        let n = 1500;
        let mag = Magnitude::PowerLaw { k, a };
        let table = s.table(n + 1);
        let eps = mag.sequence(&table, n + 2);
        let direction = [Direction::RandomUnit, Direction::Adversarial, Direction::FixedUnit(vec![1.0, 1.0])][dir].clone();
        let x0 = p(&x);
        let t = run_ikm(op, &x0, &s, &ErrorModel::new(mag, direction), &RunOptions::new(n).seed(seed)).unwrap();
        let sum: f64 = (1..=n).map(|i| table.alpha(i) * eps[i]).sum();
        let kappa = resolve_kappa(op, &x0, sum, None).value().unwrap();
        prop_assume!(!t.is_flagged(kappa));
        let bound = MainBound::new(&table, &eps, n).curve(kappa);
        let d = bound.dominates(&t.residuals, 1e-9);
        prop_assert!(d.pass, "worst margin {} at {}", d.worst_margin, d.worst_n);
    }
}

#[test]
fn summable_errors_give_cauchy_tails() {
    let x0 = p(&[3.0, -2.0]);
    let n = 10_000;
    for op in ops() {
        let model = ErrorModel::new(Magnitude::PowerLaw { k: 1.0, a: 2.0 }, Direction::RandomUnit);
        let t = run_ikm(&op, &x0, &StepSchedule::constant(0.5).unwrap(), &model, &RunOptions::new(2 * n).snapshot_every(1))
            .unwrap();
        let tail: Vec<&Point> = (n..=2 * n).step_by(50).map(|i| t.point(i).unwrap()).collect();
        let spread = tail
            .iter()
            .flat_map(|a| tail.iter().map(move |b| a.dist(b)))
            .fold(0.0f64, f64::max);
        assert!(spread < 1e-3, "{op}: {spread}");
    }
}

#[test]
fn harmonic_errors_on_identity_drift_away() {
    let x0 = p(&[0.0, 0.0]);
    let model = ErrorModel::new(Magnitude::PowerLaw { k: 1.0, a: 1.0 }, Direction::FixedUnit(vec![1.0, 0.0]));
    let op = OperatorSpec::identity(2, NormKind::L2);
    let t = run_ikm(&op, &x0, &StepSchedule::constant(0.5).unwrap(), &model, &RunOptions::new(4000).snapshot_every(1))
        .unwrap();
    let drift: Vec<f64> = (0..=4000).map(|n| t.point(n).unwrap().dist(&x0)).collect();
    assert!(drift.windows(2).all(|w| w[1] > w[0]));
    let h: f64 = (1..=4000).map(|k| 0.5 / k as f64).sum();
    assert!((drift[4000] - h).abs() < 1e-9);
}

#[test]
fn dp_depends_on_schedule_only_through_weights() {
    for s in schedules() {
        let n = 80;
        let eps = Magnitude::PowerLaw { k: 0.3, a: 1.2 }.sequence(&s.table(n), n + 1);
        let a = dp_w(&s, &eps, 1.5, n).unwrap();
        let listed = StepSchedule::custom((1..=n).map(|k| s.alpha(k)).collect()).unwrap();
        let b = dp_w(&listed, &eps, 1.5, n).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn dp_dominated_by_main_bound() {
    for s in schedules() {
        for mag in [Magnitude::Zero, Magnitude::PowerLaw { k: 0.5, a: 2.0 }, Magnitude::PowerLaw { k: 1.0, a: 0.75 }] {
            let n = 300;
            let table = s.table(n + 1);
            let eps = mag.sequence(&table, n + 2);
            let dp = dp_w(&s, &eps[..=n], 2.0, n).unwrap();
            let main = MainBound::new(&table, &eps, n - 1);
            for k in 0..n {
                let lhs = dp.w(k as isize, k + 1) / table.alpha(k + 1) + eps[k + 1];
                assert!(lhs <= main.value(2.0, k) + 1e-9, "{mag} n={k}");
            }
        }
    }
}

#[test]
fn continuous_fejer_quantity_is_nonincreasing() {
    let op = OperatorSpec::rotation(0.9).unwrap();
    let forcing = Forcing::power_law(0.4, 2.0, p(&[1.0, 1.0])).unwrap();
    let problem = EvolutionProblem::new(op, forcing.clone(), p(&[2.0, -1.0])).unwrap();
    let trace = integrate(&problem, 30.0, 0.01).unwrap();
    let g: Vec<f64> = trace
        .times
        .iter()
        .zip(&trace.points)
        .map(|(t, u)| (u.norm().powi(2) + 1.0).sqrt() + forcing.tail_integral(*t).unwrap())
        .collect();
    for w in g.windows(2) {
        assert!(w[1] <= w[0] + 1e-9);
    }
}

#[test]
fn discretization_converges_to_the_flow() {
    let op = OperatorSpec::projection(ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(), NormKind::L2).unwrap();
    let forcing = Forcing::power_law(0.5, 1.5, p(&[1.0, 0.0])).unwrap();
    let problem = EvolutionProblem::new(op, forcing, p(&[3.0, 0.5])).unwrap();
    let t_end = 2.0;
    let flow = integrate(&problem, t_end, 1e-3).unwrap();
    let u = flow.points.last().unwrap();
    let gaps: Vec<f64> = [100, 1000, 10_000]
        .iter()
        .map(|&n| discretize_scheme(&problem, t_end, n).unwrap().x.dist(u))
        .collect();
    assert!(gaps[1] < gaps[0] / 5.0 && gaps[2] < gaps[1] / 5.0, "{gaps:?}");
    assert!(gaps[2] < 1e-3);
}
