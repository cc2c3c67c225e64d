//! Log-log slopes of IKM residuals for power-law errors K/n^a.

use km_lab::engines::{run_ikm, RunOptions};
use km_lab::fit::{default_window, fit_rate};
use km_lab::schedules::Direction;
use km_lab::{ErrorModel, Magnitude, NormKind, OperatorSpec, Point, StepSchedule};

fn main() -> km_lab::Result<()> {
    let op = OperatorSpec::rotation(1.0)?;
    let x0 = Point::new(vec![1.0, 0.0], NormKind::L2)?;
    let schedule = StepSchedule::constant(0.5)?;
    let n_max = 20_000;
    let window = default_window(&schedule.table(n_max), n_max);
    println!("window {}..{}", window.0, window.1);
    for a in [0.6, 0.75, 1.0, 1.5, 2.0] {
        let model = ErrorModel::new(Magnitude::PowerLaw { k: 0.5, a }, Direction::Adversarial);
        let trace = run_ikm(&op, &x0, &schedule, &model, &RunOptions::new(n_max))?;
        let fit = fit_rate(&trace.residuals, window)?;
        println!("a = {a:<4} slope {:+.4} (r2 {:.5})", fit.slope, fit.r2);
    }
    Ok(())
}
