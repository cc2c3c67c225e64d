//! The fox-and-hare race: dynamic program, Monte Carlo estimate and the
//! probability that the hare is never overtaken.

use km_lab::markov::{ballot_bound_check, dp_w, simulate_race, RaceConfig};
use km_lab::{Magnitude, StepSchedule};

fn main() -> km_lab::Result<()> {
    let schedule = StepSchedule::constant(0.4)?;
    let n = 120;
    let eps = Magnitude::PowerLaw { k: 0.5, a: 1.5 }.sequence(&schedule.table(n), n + 1);
    let dp = dp_w(&schedule, &eps, 1.0, n)?;
    for (m, at) in [(0, 1), (10, 20), (40, 120)] {
        let cfg = RaceConfig {
            schedule: schedule.clone(),
            eps: eps.clone(),
            kappa: 1.0,
            m,
            n: at,
        };
        let mc = simulate_race(&cfg, 200_000, 42)?;
        println!(
            "w[{m},{at}] = {:.6}  simulated {:.6} ± {:.1e}",
            dp.w(m as isize, at),
            mc.total_mean,
            mc.std_err
        );
    }
    for (i, at) in [(0, 10), (5, 50), (20, 40)] {
        let b = ballot_bound_check(&schedule, i, at, 200_000, 7)?;
        println!("ballot i={i} n={at}: p = {:.5} <= sigma = {:.5}: {}", b.p_hat, b.bound, b.pass);
    }
    Ok(())
}
