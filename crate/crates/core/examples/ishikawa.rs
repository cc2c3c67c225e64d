//! Ishikawa iteration of a ball projection on a box, with the bound for
//! β_n = 1/n² and the check that β = 0 reproduces KM exactly.

use km_lab::bounds::ishikawa_curve;
use km_lab::engines::{run_ishikawa, run_km, RunOptions};
use km_lab::{ConvexSet, NormKind, OperatorSpec, Point, StepSchedule};

fn main() -> km_lab::Result<()> {
    let domain = ConvexSet::boxed(vec![-2.0, -2.0], vec![2.0, 2.0])?;
    let op = OperatorSpec::projection(ConvexSet::ball(vec![0.0, 0.0], 1.0)?, NormKind::L2)?.with_domain(domain.clone())?;
    let x0 = Point::new(vec![2.0, -1.5], NormKind::L2)?;
    let alpha = StepSchedule::constant(0.5)?;
    let beta = StepSchedule::power(2.0)?;
    let n_max = 1000;
    let kappa = domain.diameter(NormKind::L2).expect("box is bounded");
    let trace = run_ishikawa(&op, &x0, &alpha, &beta, &RunOptions::new(n_max))?;
    let betas: Vec<f64> = (0..=n_max + 1).map(|i| if i == 0 { 0.0 } else { beta.alpha(i) }).collect();
    let bound = ishikawa_curve(kappa, &alpha.table(n_max), &betas, n_max);
    println!("bound at n = {n_max}: {:.6}", bound.values[n_max]);
    println!("dominated: {}", bound.dominates(&trace.residuals, 1e-9).pass);

    let zero = StepSchedule::custom(vec![0.0])?;
    let ish = run_ishikawa(&op, &x0, &alpha, &zero, &RunOptions::new(200))?;
    let km = run_km(&op, &x0, &alpha, &RunOptions::new(200))?;
    println!("beta = 0 matches KM bitwise: {}", ish.residuals == km.residuals && ish.final_point() == km.final_point());
    Ok(())
}
