//! Diagonal KM: operators converging uniformly to their limit.

use km_lab::bounds::diagonal_curve;
use km_lab::engines::{run_dkm, RunOptions};
use km_lab::{NormKind, OperatorSequence, Point, StepSchedule};

fn main() -> km_lab::Result<()> {
    let schedule = StepSchedule::constant(0.5)?;
    let n_max = 4000;
    let families = [
        ("shrinking ball", OperatorSequence::shrinking_ball(vec![0.0, 0.0], 1.0)?, vec![1.8, 0.3]),
        ("perturbed rotation", OperatorSequence::perturbed_rotation(1.0, 0.5, 2.0)?, vec![1.0, 1.0]),
    ];
    for (name, seq, x0) in families {
        let x0 = Point::new(x0, NormKind::L2)?;
        let excess = seq.certify_rho(2000, 5, &[1, 10, 100]);
        let trace = run_dkm(&seq, &x0, &schedule, &RunOptions::new(n_max))?;
        let rho: Vec<f64> = (0..=n_max + 1).map(|n| if n == 0 { 0.0 } else { seq.rho(n) }).collect();
        let s: f64 = rho.iter().skip(1).take(n_max).map(|r| 0.5 * r).sum();
        let kappa = km_lab::operators::resolve_kappa(seq.limit(), &x0, s, None)
            .value()
            .expect("limit has a known fixed-point set or bounded domain");
        let bound = diagonal_curve(kappa, &schedule.table(n_max), &rho, n_max);
        let d = bound.dominates(&trace.residuals, 1e-9);
        println!(
            "{name}: max rho excess {:.1e}, final residual {:.3e}, dominated {} (margin {:.2e})",
            excess.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max),
            trace.residuals[n_max],
            d.pass,
            d.worst_margin
        );
    }
    Ok(())
}
