use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ransom::config::{BetaRule, RunConfig, TheorySpec};
use ransom::error::{HarnessError, EXIT_NUMERIC};
use ransom::{rate_suite, run_experiment};
use ransom_core::rng::RngState;
use ransom_core::steps::{beta_mw_closed_form, estimate_moments, exponential_mws_closed_form, verify_stein};
use ransom_core::{Consumer, Method, StepDistribution};

#[derive(Parser)]
#[command(name = "ransom", version, about = "Randomized second-order momentum experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every optimizer in a config over its seeds.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Monte Carlo check of the Stein identity with g(s) = s².
    VerifyStein {
        #[arg(long, value_enum, default_value_t = Dist::Exp)]
        dist: Dist,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a config at several horizons and fit the rate slope.
    RateSuite {
        config: PathBuf,
        #[arg(long = "T", value_delimiter = ',', required = true)]
        horizons: Vec<u64>,
        #[arg(long, default_value_t = 0.5)]
        burn_in: f64,
        #[arg(long, default_value_t = 1000)]
        eval_points: u64,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Empirical step-distribution constants next to their closed forms.
    Moments {
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Exp,
    Beta,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Diagnostics {
    FullGrad,
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Derive eta and beta from the horizon (p, q from annotations, default 2).
    #[arg(long)]
    theory_schedule: bool,
    /// With --theory-schedule: use beta = T^(-q(p-1)/(2q(p-1)+p)).
    #[arg(long)]
    beta_as_printed: bool,
    /// Step along -m instead of the LMO direction (unconstrained baselines only).
    #[arg(long)]
    plain_step: bool,
    #[arg(long, value_enum)]
    diagnostics: Option<Diagnostics>,
    /// Record wall-clock milliseconds (makes CSVs run-dependent).
    #[arg(long)]
    timing: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), HarnessError> {
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if self.theory_schedule {
            let mut spec = cfg.theory_schedule.unwrap_or(TheorySpec {
                p: cfg.annotations.get("p").copied().unwrap_or(2.0),
                q: cfg.annotations.get("q").copied().unwrap_or(2.0),
                beta_rule: BetaRule::Balanced,
            });
            if self.beta_as_printed {
                spec.beta_rule = BetaRule::AsPrinted;
            }
            cfg.theory_schedule = Some(spec);
        }
        if self.plain_step {
            cfg.optimizers
                .iter_mut()
                .filter(|o| Method::from_name(&o.method).map_or(true, |m| !m.is_stein()))
                .for_each(|o| o.plain_step = true);
        }
        if self.diagnostics == Some(Diagnostics::FullGrad) {
            cfg.diagnostics = true;
        }
        if self.timing {
            cfg.timing = true;
        }
        cfg.validate()
    }
}

fn load(path: &PathBuf, overrides: &Overrides) -> Result<RunConfig, HarnessError> {
    let mut cfg = RunConfig::load(path)?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<i32, HarnessError> {
    match command {
        Command::Run { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let report = run_experiment(&cfg)?;
            for (label, s) in &report.summary.optimizers {
                let metric = s
                    .final_test_metric
                    .map(|m| format!("{:.4} ± {:.4}", m.mean, m.std.unwrap_or(0.0)))
                    .unwrap_or_else(|| "-".into());
                println!("{label}: steps={} runs={} aborted={} test_metric={metric}", s.steps, s.n_runs, s.aborted_runs);
            }
            println!("wrote {}", report.output_dir.display());
            Ok(if report.summary.any_aborted() { EXIT_NUMERIC } else { 0 })
        }
        Command::RateSuite { config, horizons, burn_in, eval_points, overrides } => {
            let cfg = load(&config, &overrides)?;
            let report = rate_suite(&cfg, &horizons, burn_in, eval_points)?;
            for (label, entry) in &report.labels {
                for (t, v) in &entry.points {
                    println!("{label}: T={t} avg_stationarity={v:.6}");
                }
                println!("{label}: slope={:.4} r2={:.4}", entry.fit.slope, entry.fit.r2);
            }
            Ok(if report.aborted_runs > 0 { EXIT_NUMERIC } else { 0 })
        }
        Command::VerifyStein { dist, eta, n, seed } => {
            let (d, closed) = match dist {
                Dist::Exp => (StepDistribution::exponential(eta)?, 2.0 * eta * eta),
                Dist::Beta => {
                    let d = StepDistribution::beta(eta)?;
                    let k = d.parameter();
                    (d, 2.0 / ((k + 1.0) * (k + 2.0)))
                }
            };
            let mut rng = RngState::new(seed).split(Consumer::Step).rng();
            let c = verify_stein(&d, |s| s * s, |s| 2.0 * s, n, &mut rng);
            let ok = c.abs_err <= 4.0 * c.std_err;
            println!("lhs={:.8e} rhs={:.8e} closed_form={closed:.8e}", c.lhs, c.rhs);
            println!("abs_err={:.3e} std_err={:.3e} n={} {}", c.abs_err, c.std_err, c.n, if ok { "PASS" } else { "FAIL" });
            Ok(if ok { 0 } else { 1 })
        }
        Command::Moments { q, eta, n, seed } => {
            let root = RngState::new(seed).split(Consumer::Step);
            let exp = StepDistribution::exponential(eta)?;
            let beta = StepDistribution::beta(eta)?;
            let re = estimate_moments(&exp, q, n, &mut root.fork(0).rng())?;
            let rb = estimate_moments(&beta, q, n, &mut root.fork(1).rng())?;
            println!("distribution  C_s(emp)  C_s(closed)  M_w(emp)  M_w(closed)  M_ws(emp)  C_delta");
            println!(
                "exponential   {:.5}   {:.5}      {:.5}   {:.5}      {:.5}    {:.5}   (M_ws closed {:.5})",
                re.c_s,
                exp.descent_constant(),
                re.m_w,
                1.0,
                re.m_ws,
                re.c_delta,
                exponential_mws_closed_form(q)
            );
            println!(
                "beta(K={:.3})  {:.5}   {:.5}      {:.5}   {:.5}      {:.5}    {:.5}",
                beta.parameter(),
                rb.c_s,
                beta.descent_constant(),
                rb.m_w,
                beta_mw_closed_form(eta, q),
                rb.m_ws,
                rb.c_delta
            );
            Ok(0)
        }
    }
}
