//! The fox-and-hare race: an exact dynamic program for the majorants w_{m,n}
//! and a Monte Carlo simulation of the race itself.
//!
//! The simulation follows the race narrative (hurdle by hurdle) and never
//! touches the DP transition weights, so agreement between the two is a real
//! cross-check of the reward semantics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::schedules::{sigma, StepSchedule};

/// Largest N accepted by [`dp_w`].
pub const DP_LIMIT: usize = 2000;

/// Trials per independently seeded Monte Carlo chunk.
const CHUNK: usize = 1 << 14;

/// w_{m,n} for −1 <= m <= n <= N.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTable {
    n_max: usize,
    kappa: f64,
    /// Row m + 1, column n.
    w: Vec<f64>,
}

impl DpTable {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn idx(&self, m: isize, n: usize) -> usize {
        (m + 1) as usize * (self.n_max + 1) + n
    }

    /// w_{m,n}; m = −1 gives the boundary value κ.
    pub fn w(&self, m: isize, n: usize) -> f64 {
        assert!(m >= -1 && n <= self.n_max && m <= n as isize, "index out of range");
        self.w[self.idx(m, n)]
    }
}

/// Solves the recursion
/// w_{m,n} = Σ_{i=0}^m Σ_{j=m+1}^n π_i^m π_j^n (w_{i−1,j−1} + ε_i + ε_j)
/// with w_{−1,n} = κ and w_{m,m} = 0.
///
/// Since Σ_i π_i^m = 1 the double sum splits as Σ_j π_j^n (B_{m,j} + E_m + ε_j)
/// with B_{m,j} = Σ_i π_i^m w_{i−1,j−1} and E_m = Σ_i π_i^m ε_i. Rows are
/// filled in increasing m, and the sum over j uses π_j^n = (1 − α_n)π_j^{n−1},
/// so the whole table costs O(N³).
///
/// `eps` holds ε_0..ε_N; ε_0 is treated as 0.
pub fn dp_w(schedule: &StepSchedule, eps: &[f64], kappa: f64, n_max: usize) -> Result<DpTable> {
    if n_max > DP_LIMIT {
        return Err(Error::SizeLimit {
            requested: n_max,
            limit: DP_LIMIT,
        });
    }
    if eps.len() <= n_max {
        return Err(Error::InvalidInput(format!(
            "need eps up to index {n_max}, got {} values",
            eps.len()
        )));
    }
    if !(kappa >= 0.0) || eps.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::InvalidInput("kappa and eps must be nonnegative".into()));
    }
    let alpha: Vec<f64> = (0..=n_max).map(|k| schedule.alpha(k)).collect();
    let eps_at = |i: usize| if i == 0 { 0.0 } else { eps[i] };

    let width = n_max + 1;
    let mut table = DpTable {
        n_max,
        kappa,
        w: vec![0.0; (n_max + 2) * width],
    };
    for n in 0..=n_max {
        let k = table.idx(-1, n);
        table.w[k] = kappa;
    }

    // π^m_i for i = 0..=m, updated in place as m grows.
    let mut pi_m: Vec<f64> = Vec::with_capacity(width);
    let mut b = vec![0.0; width];
    for m in 0..=n_max {
        for p in pi_m.iter_mut() {
            *p *= 1.0 - alpha[m];
        }
        pi_m.push(alpha[m]);

        let e_m: f64 = pi_m.iter().enumerate().map(|(i, p)| p * eps_at(i)).sum();
        for j in m + 1..=n_max {
            b[j] = pi_m
                .iter()
                .enumerate()
                .map(|(i, p)| p * table.w[table.idx(i as isize - 1, j - 1)])
                .sum();
        }
        let mut s = 0.0;
        for n in m + 1..=n_max {
            s = (1.0 - alpha[n]) * s + alpha[n] * (b[n] + e_m + eps_at(n));
            let k = table.idx(m as isize, n);
            table.w[k] = s;
        }
    }
    Ok(table)
}

/// A race started with the hare at m and the fox at n.
#[derive(Debug, Clone)]
pub struct RaceConfig {
    pub schedule: StepSchedule,
    /// ε_0..ε_n; ε_0 is treated as 0.
    pub eps: Vec<f64>,
    pub kappa: f64,
    pub m: usize,
    pub n: usize,
}

impl RaceConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.m > self.n {
            return Err(Error::InvalidInput("race needs m <= n".into()));
        }
        if self.eps.len() <= self.n {
            return Err(Error::InvalidInput("need eps up to index n".into()));
        }
        if !(self.kappa >= 0.0) || self.eps.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::InvalidInput("kappa and eps must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaceEstimate {
    pub hare_reward_mean: f64,
    pub fox_reward_mean: f64,
    pub total_mean: f64,
    /// Standard error of `total_mean`.
    pub std_err: f64,
    pub trials: usize,
}

/// The hurdle at which a runner starting at `pos` first falls: hurdle k is
/// cleared with probability 1 − α_k, and α_0 = 1.
fn fall_hurdle<R: Rng>(alpha: &[f64], pos: usize, rng: &mut R) -> usize {
    let mut k = pos;
    loop {
        if k == 0 || rng.random::<f64>() < alpha[k] {
            return k;
        }
        k -= 1;
    }
}

/// One race; returns (hare reward, fox reward).
fn run_race<R: Rng>(cfg: &RaceConfig, alpha: &[f64], rng: &mut R) -> (f64, f64) {
    let (mut hare, mut fox) = (cfg.m, cfg.n);
    let (mut rh, mut rf) = (0.0, 0.0);
    if hare == fox {
        return (0.0, 0.0);
    }
    loop {
        let j = fall_hurdle(alpha, fox, rng);
        if j <= hare {
            // Caught.
            return (rh, rf);
        }
        rf += cfg.eps[j];
        let i = fall_hurdle(alpha, hare, rng);
        if i == 0 {
            return (rh + cfg.kappa, rf);
        }
        rh += cfg.eps[i];
        hare = i - 1;
        fox = j - 1;
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    hare: f64,
    fox: f64,
    total: f64,
    total_sq: f64,
    count: usize,
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunk_sizes(trials: usize) -> Vec<usize> {
    let mut sizes = vec![CHUNK; trials / CHUNK];
    if trials % CHUNK != 0 {
        sizes.push(trials % CHUNK);
    }
    sizes
}

/// Monte Carlo estimate of the expected rewards of the race. Trials run in
/// fixed chunks seeded by (seed, chunk index) and are combined in chunk order,
/// so the result does not depend on the thread count.
pub fn simulate_race(cfg: &RaceConfig, trials: usize, seed: u64) -> Result<RaceEstimate> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let alpha: Vec<f64> = (0..=cfg.n).map(|k| cfg.schedule.alpha(k)).collect();
    let parts: Vec<Moments> = chunk_sizes(trials)
        .into_par_iter()
        .enumerate()
        .map(|(c, size)| {
            let mut rng = chunk_rng(seed, c);
            let mut acc = Moments::default();
            for _ in 0..size {
                let (h, f) = run_race(cfg, &alpha, &mut rng);
                acc.hare += h;
                acc.fox += f;
                acc.total += h + f;
                acc.total_sq += (h + f) * (h + f);
                acc.count += 1;
            }
            acc
        })
        .collect();
    let sum = parts.iter().fold(Moments::default(), |a, p| Moments {
        hare: a.hare + p.hare,
        fox: a.fox + p.fox,
        total: a.total + p.total,
        total_sq: a.total_sq + p.total_sq,
        count: a.count + p.count,
    });
    let t = sum.count as f64;
    let mean = sum.total / t;
    let var = if sum.count > 1 {
        ((sum.total_sq - t * mean * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(RaceEstimate {
        hare_reward_mean: sum.hare / t,
        fox_reward_mean: sum.fox / t,
        total_mean: mean,
        std_err: (var / t).sqrt(),
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallotCheck {
    pub p_hat: f64,
    pub std_err: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Estimates P(Σ_{k=j}^n Z_k >= 0 for all j = i+1..n) with Z_k = F_k − H_k,
/// F_k, H_k independent Bernoulli(α_k), and compares it with σ(τ_n − τ_i).
/// Passes iff p_hat <= bound + 4·std_err.
pub fn ballot_bound_check(schedule: &StepSchedule, i: usize, n: usize, trials: usize, seed: u64) -> Result<BallotCheck> {
    schedule.validate()?;
    if i > n {
        return Err(Error::InvalidInput("ballot check needs i <= n".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let alpha: Vec<f64> = (0..=n).map(|k| schedule.alpha(k)).collect();
    let hits: usize = chunk_sizes(trials)
        .into_par_iter()
        .enumerate()
        .map(|(c, size)| {
            let mut rng = chunk_rng(seed, c);
            (0..size)
                .filter(|_| {
                    let mut s: i64 = 0;
                    for k in (i + 1..=n).rev() {
                        let f = rng.random::<f64>() < alpha[k];
                        let h = rng.random::<f64>() < alpha[k];
                        s += f as i64 - h as i64;
                        if s < 0 {
                            return false;
                        }
                    }
                    true
                })
                .count()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let t = trials as f64;
    let p_hat = hits as f64 / t;
    let std_err = (p_hat * (1.0 - p_hat) / t).sqrt();
    let bound = sigma((schedule.tau(n) - schedule.tau(i)).max(0.0));
    Ok(BallotCheck {
        p_hat,
        std_err,
        bound,
        pass: p_hat <= bound + 4.0 * std_err,
    })
}
