//! Exact KM on a planar rotation, with the residual against κσ(τ_n).

use km_lab::bounds::exact_curve;
use km_lab::engines::{run_km, RunOptions};
use km_lab::operators::kappa_estimate;
use km_lab::{NormKind, OperatorSpec, Point, StepSchedule};

fn main() -> km_lab::Result<()> {
    let op = OperatorSpec::rotation(2.0)?;
    let x0 = Point::new(vec![1.0, 1.0], NormKind::L2)?;
    let schedule = StepSchedule::constant(0.5)?;
    let n_max = 2000;
    let kappa = kappa_estimate(&op, &x0, 0.0).value().expect("rotation has a fixed point");
    let trace = run_km(&op, &x0, &schedule, &RunOptions::new(n_max))?;
    let bound = exact_curve(kappa, &schedule.table(n_max), n_max);
    println!("kappa = {kappa:.4}");
    println!("{:>6} {:>14} {:>14}", "n", "residual", "bound");
    for n in [0, 1, 2, 5, 10, 50, 100, 500, 1000, 2000] {
        println!("{n:>6} {:>14.6e} {:>14.6e}", trace.residuals[n], bound.values[n]);
    }
    let d = bound.dominates(&trace.residuals, 1e-12);
    println!("dominated: {} (worst margin {:.3e} at n = {})", d.pass, d.worst_margin, d.worst_n);
    Ok(())
}
