use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use km_lab::bounds::MainBound;
use km_lab::experiment::{read_csv_column, run_evolve, run_experiment, EvolveConfig, ExperimentConfig, OutputConfig};
use km_lab::fit::fit_loglog;
use km_lab::markov::{ballot_bound_check, dp_w, simulate_race, RaceConfig};
use km_lab::suite::{certify_suite, GridSpec};
use km_lab::{Magnitude, Result, StepSchedule};

#[derive(Parser)]
#[command(name = "km-lab", version, about = "Krasnosel'skii-Mann iterations with certified residual bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and check its bounds.
    Run {
        config: PathBuf,
        /// Write artifacts here, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        prefix: String,
    },
    /// Run a certification grid.
    Certify {
        grid: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Fox-and-hare dynamic program, race simulation and ballot check.
    Markov {
        #[command(subcommand)]
        command: MarkovCommand,
    },
    /// Integrate the continuous-time evolution equation.
    Evolve { config: PathBuf },
    /// Log-log slope of a CSV column.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value = "residual")]
        col: String,
        /// Inclusive range of the n column, as lo:hi.
        #[arg(long)]
        window: Option<String>,
    },
}

#[derive(Subcommand)]
enum MarkovCommand {
    /// w_{m,n} from the dynamic program, compared with the main bound.
    Dp {
        #[arg(long, default_value = "const:0.5")]
        schedule: String,
        #[arg(long, default_value = "zero")]
        eps: String,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Report w_{m,at} for this m (with --at).
        #[arg(long)]
        m: Option<isize>,
        #[arg(long)]
        at: Option<usize>,
    },
    /// Monte Carlo estimate of the race reward against the dynamic program.
    Simulate {
        #[arg(long, default_value = "const:0.5")]
        schedule: String,
        #[arg(long, default_value = "zero")]
        eps: String,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1_000_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// P(hare never passes the fox) against σ(τ_n − τ_i).
    Ballot {
        #[arg(long, default_value = "const:0.5")]
        schedule: String,
        #[arg(long)]
        i: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1_000_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, out, prefix } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(dir) = out {
                cfg.output = Some(OutputConfig { dir, prefix });
            }
            let outcome = run_experiment(&cfg)?;
            print!("{}", outcome.render());
            Ok(outcome.all_pass())
        }
        Command::Certify { grid, json } => {
            let report = certify_suite(&GridSpec::load(&grid)?)?;
            print!("{}", report.render());
            if let Some(path) = json {
                std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(report.all_pass())
        }
        Command::Markov { command } => markov(command),
        Command::Evolve { config } => {
            let report = run_evolve(&EvolveConfig::load(&config)?)?;
            print!("{}", report.render());
            Ok(report.all_pass())
        }
        Command::Fit { csv, col, window } => {
            let (xs, ys) = read_csv_column(&csv, &col)?;
            let (lo, hi) = match window {
                Some(w) => parse_window(&w)?,
                None => (f64::MIN_POSITIVE, f64::INFINITY),
            };
            let (xs, ys): (Vec<f64>, Vec<f64>) = xs
                .into_iter()
                .zip(ys)
                .filter(|(x, _)| *x >= lo && *x <= hi)
                .unzip();
            let fit = fit_loglog(&xs, &ys)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(true)
        }
    }
}

fn parse_window(w: &str) -> Result<(f64, f64)> {
    let bad = || km_lab::Error::Config(format!("window '{w}' is not lo:hi"));
    let (a, b) = w.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn eps_sequence(schedule: &StepSchedule, eps: &str, n: usize) -> Result<Vec<f64>> {
    let magnitude: Magnitude = eps.parse()?;
    magnitude.validate()?;
    Ok(magnitude.sequence(&schedule.table(n + 1), n + 2))
}

fn markov(command: MarkovCommand) -> Result<bool> {
    match command {
        MarkovCommand::Dp { schedule, eps, kappa, n, m, at } => {
            let s: StepSchedule = schedule.parse()?;
            let e = eps_sequence(&s, &eps, n)?;
            let dp = dp_w(&s, &e[..=n], kappa, n)?;
            let table = s.table(n + 1);
            let main = MainBound::new(&table, &e, n.saturating_sub(1));
            let mut worst = f64::INFINITY;
            let mut worst_n = 0;
            for k in 0..n {
                let margin = main.value(kappa, k) - dp.w(k as isize, k + 1) / table.alpha(k + 1);
                if margin < worst {
                    worst = margin;
                    worst_n = k;
                }
            }
            let pass = n == 0 || worst >= -1e-9;
            let mut out = json!({
                "schedule": schedule, "eps": eps, "kappa": kappa, "n": n,
                "main_bound_margin": if n == 0 { None } else { Some(worst) },
                "worst_n": worst_n,
                "pass": pass,
            });
            if let (Some(m), Some(at)) = (m, at) {
                if m < -1 || at > n || m > at as isize {
                    return Err(km_lab::Error::InvalidInput("need -1 <= m <= at <= n".into()));
                }
                out["w"] = json!({"m": m, "n": at, "value": dp.w(m, at)});
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(pass)
        }
        MarkovCommand::Simulate { schedule, eps, kappa, m, n, trials, seed } => {
            let s: StepSchedule = schedule.parse()?;
            let e = eps_sequence(&s, &eps, n)?;
            let cfg = RaceConfig {
                schedule: s.clone(),
                eps: e[..=n].to_vec(),
                kappa,
                m,
                n,
            };
            let race = simulate_race(&cfg, trials, seed)?;
            let exact = dp_w(&s, &e[..=n], kappa, n)?.w(m as isize, n);
            let z = if race.std_err > 0.0 {
                (race.total_mean - exact).abs() / race.std_err
            } else if race.total_mean == exact {
                0.0
            } else {
                f64::INFINITY
            };
            let pass = z <= 4.0;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "schedule": schedule, "eps": eps, "kappa": kappa, "m": m, "n": n,
                    "trials": race.trials, "seed": seed,
                    "hare_reward_mean": race.hare_reward_mean,
                    "fox_reward_mean": race.fox_reward_mean,
                    "total_mean": race.total_mean,
                    "std_err": race.std_err,
                    "dp": exact,
                    "z": z,
                    "pass": pass,
                }))?
            );
            Ok(pass)
        }
        MarkovCommand::Ballot { schedule, i, n, trials, seed } => {
            let s: StepSchedule = schedule.parse()?;
            let r = ballot_bound_check(&s, i, n, trials, seed)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "schedule": schedule, "i": i, "n": n, "trials": trials, "seed": seed,
                    "p_hat": r.p_hat, "std_err": r.std_err, "bound": r.bound, "pass": r.pass,
                }))?
            );
            Ok(r.pass)
        }
    }
}
