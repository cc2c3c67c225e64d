//! KM with inexact projections onto a ball, against the projected bound.

use km_lab::bounds::projected_curve;
use km_lab::engines::{run_ikm_z, RunOptions};
use km_lab::schedules::Direction;
use km_lab::{ConvexSet, ErrorModel, Magnitude, NormKind, OperatorSpec, Point, StepSchedule};

fn main() -> km_lab::Result<()> {
    let set = ConvexSet::ball(vec![0.0, 0.0], 2.0)?;
    let op = OperatorSpec::rotation(0.8)?;
    let x0 = Point::new(vec![1.5, 1.0], NormKind::L2)?;
    let schedule = StepSchedule::constant(0.5)?;
    let errors = ErrorModel::new(Magnitude::PowerLaw { k: 0.2, a: 2.0 }, Direction::RandomUnit);
    let gamma = Magnitude::PowerLaw { k: 0.2, a: 2.0 };
    let n_max = 3000;
    let trace = run_ikm_z(&op, &set, &x0, &schedule, &errors, &gamma, &RunOptions::new(n_max).seed(11))?;
    let kappa = set.sup_distance_from(&x0).expect("ball is bounded");
    let table = schedule.table(n_max + 1);
    let mut err = trace.err_norms.clone();
    err.push(errors.magnitude.value(n_max + 1, &table));
    let delta = trace.aux_column("delta").expect("delta is recorded");
    let bound = projected_curve(kappa, &table, &err, delta, n_max);
    for n in [0, 10, 100, 1000, 3000] {
        println!("n={n:>5} |z-Tz|={:.4e} delta={:.2e} bound={:.4e}", trace.residuals[n], delta[n], bound.values[n]);
    }
    println!("dominated: {}", bound.dominates(&trace.residuals, 1e-9).pass);
    Ok(())
}
