use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wrinkle::error::{Result, WrinkleError};
use wrinkle::experiments::{self, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "wrinkle", version, about = "Wrinkling energy-scaling numerical lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of all random choices.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated half-periods.
    #[arg(long = "L", global = true, value_delimiter = ',')]
    l: Option<Vec<f64>>,
    /// Number of x-grid intervals.
    #[arg(long = "grid-n", global = true)]
    grid_n: Option<usize>,
    /// Fourier modes per unit of L.
    #[arg(long, global = true)]
    modes: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coefficient problem at each configured L.
    Solve,
    /// Scan sigma_L over the configured L list and check its inequalities.
    Scan,
    /// Assemble plate deformations from the L0 minimizer and report the excess.
    Scaling,
    /// Repair the scaled cascade at each configured L.
    RepairTest,
    /// Build report.md and report.json from the output directory.
    Report,
}

fn config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    cfg.apply(&Overrides {
        l_values: c.l.clone(),
        grid_n: c.grid_n,
        modes_per_unit: c.modes,
        seed: c.seed,
        out_dir: c.out.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

fn nonconverged(what: &str) -> WrinkleError {
    WrinkleError::NonConvergence(format!("{what} did not converge; partial outputs were written"))
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(&cli.common)?;
    match cli.command {
        Command::Solve => {
            let mut all = true;
            for &l in &cfg.l_values {
                let r = experiments::solve_and_persist(&cfg, l)?;
                println!(
                    "L={} sigma={:.10} iterations={} converged={} checks={}/{}",
                    r.l,
                    r.sigma.unwrap_or(f64::NAN),
                    r.iterations,
                    r.converged,
                    r.checks_passed,
                    r.checks_total
                );
                all &= r.converged;
            }
            if !all {
                return Err(nonconverged("a solve"));
            }
        }
        Command::Scan => {
            let out = experiments::sigma_scan(&cfg)?;
            for r in &out.records {
                match (&r.sigma, &r.error) {
                    (Some(s), _) => println!("L={} sigma={s:.10} converged={}", r.l, r.converged),
                    (None, e) => println!("L={} failed: {}", r.l, e.as_deref().unwrap_or("")),
                }
            }
            let failed = out.inequalities.iter().filter(|c| !c.passed).count();
            println!("inequalities: {} checked, {failed} failed", out.inequalities.len());
            if !out.all_converged() {
                return Err(nonconverged("a scan solve"));
            }
        }
        Command::Scaling => {
            let out = experiments::scaling_law(&cfg)?;
            println!("L0={} sigma_L0={:.8}", out.l0, out.sigma_l0);
            for r in &out.rows {
                println!(
                    "h={:.6e} L={} delta={:.6} E_L={:.10} excess={:.6} certificate={:.6}",
                    r.h, r.l, r.delta, r.e_l, r.excess_scaled, r.certificate
                );
            }
            if !out.converged {
                return Err(nonconverged("the base solve"));
            }
        }
        Command::RepairTest => {
            let out = experiments::repair_test(&cfg)?;
            for r in &out.rows {
                println!(
                    "L={} eta={:.4e} margin={:.3e} g0={} delta_hat={:.6}",
                    r.l, r.eta, r.feasibility_margin, r.g_at_zero, r.delta_hat
                );
            }
            println!("delta_hat decreasing: {}", out.delta_hat_decreasing);
        }
        Command::Report => {
            experiments::report(&cfg.out_dir)?;
            println!("wrote {}", cfg.out_dir.join("report.md").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiments::exit_code(&e) as u8)
        }
    }
}
