//! The continuous-time equation u' = Tu − u + f(t) and its Euler
//! discretization, which is inexact KM with constant step.

use km_lab::evolution::{bound_continuous, discretize_scheme, integrate, EvolutionProblem, Forcing};
use km_lab::{NormKind, OperatorSpec, Point};

fn main() -> km_lab::Result<()> {
    let op = OperatorSpec::rotation(std::f64::consts::FRAC_PI_2)?;
    let x0 = Point::new(vec![1.0, 0.0], NormKind::L2)?;
    let forcing = Forcing::power_law(0.5, 2.0, Point::new(vec![0.0, 1.0], NormKind::L2)?)?;
    let problem = EvolutionProblem::new(op.clone(), forcing.clone(), x0.clone())?;
    let t_end = 40.0;
    let trace = integrate(&problem, t_end, 0.01)?;
    let kappa = 2.0 * x0.norm() + forcing.tail_integral(0.0)?;
    let eps = |t: f64| forcing.epsilon(t);
    for k in [0, 100, 500, 1000, 4000] {
        let t = trace.times[k];
        println!(
            "t={t:>5.1} |u'|={:.4e} bound={:.4e}",
            trace.deriv_norms[k],
            bound_continuous(kappa, &eps, t, 1e-10)
        );
    }
    let u = trace.points.last().expect("nonempty");
    for n in [40, 400, 4000] {
        let d = discretize_scheme(&problem, t_end, n)?;
        println!("n={n:>5}: |x_n - u(T)| = {:.3e}", d.x.dist(u));
    }
    Ok(())
}
