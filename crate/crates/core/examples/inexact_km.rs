//! Inexact KM with power-law errors in three directions, checked against the
//! main bound and the summable-error rate bound.

use km_lab::bounds::{rate_summable_curves, MainBound};
use km_lab::engines::{run_ikm, RunOptions};
use km_lab::schedules::Direction;
use km_lab::{ErrorModel, Magnitude, NormKind, OperatorSpec, Point, StepSchedule};

fn main() -> km_lab::Result<()> {
    let op = OperatorSpec::averaged_gradient(vec![vec![2.0, 0.5], vec![0.5, 1.0]], vec![1.0, -1.0], 0.5)?;
    let x0 = Point::new(vec![4.0, -3.0], NormKind::L2)?;
    let schedule = StepSchedule::constant(0.5)?;
    let magnitude = Magnitude::PowerLaw { k: 0.5, a: 1.5 };
    let n_max = 5000;
    let table = schedule.table(n_max + 1);
    let eps = magnitude.sequence(&table, n_max + 2);
    let s: f64 = (1..=n_max).map(|k| table.alpha(k) * eps[k]).sum();
    let kappa = km_lab::kappa_estimate(&op, &x0, s).value().expect("fixed point is known");
    let main = MainBound::new(&table, &eps, n_max).curve(kappa);
    for direction in [Direction::RandomUnit, Direction::Adversarial, Direction::FixedUnit(vec![1.0, 0.0])] {
        let model = ErrorModel::new(magnitude.clone(), direction.clone());
        let trace = run_ikm(&op, &x0, &schedule, &model, &RunOptions::new(n_max).seed(3))?;
        let (rate, _) = rate_summable_curves(kappa, &schedule, &trace.err_norms, None, n_max)?;
        let d_main = main.dominates(&trace.residuals, 1e-9);
        let d_rate = rate.dominates(&trace.residuals, 1e-9);
        println!(
            "{direction:?}: final residual {:.3e}, main {} ({:.2e}), rate {} ({:.2e})",
            trace.residuals[n_max], d_main.pass, d_main.worst_margin, d_rate.pass, d_rate.worst_margin
        );
    }
    Ok(())
}
