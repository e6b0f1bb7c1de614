use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use transim_core::convergence::{convergence_study, ConvergenceProblem};
use transim_core::scenario::{policy_from, Scenario};
use transim_core::{compare, read_csv, run_scenario, write_csv, DiscontinuityPolicy, Integrator, ScenarioConfig};

#[derive(Parser)]
#[command(name = "transim", version, about = "Transient simulation with discontinuity handling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its reportable records as CSV.
    Run(RunArgs),
    /// Compare one signal of a run against a reference run.
    Compare {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        signal: String,
        /// Window as `t0,t1` in seconds.
        #[arg(long, value_parser = parse_window)]
        window: (f64, f64),
    },
    /// Observed order of accuracy under step halving.
    Converge {
        /// `decay` or `fig1`.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        integrator: String,
        /// Comma-separated step sizes, each half the previous.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        steps: Vec<f64>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Config file with a `[run]` section; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// `cda`, `preliminary` or `improved`.
    #[arg(long)]
    method: Option<String>,
    /// `itm` or `obreshkov22`.
    #[arg(long)]
    integrator: Option<String>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    eps_fraction: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected t0,t1")?;
    let a = a.trim().parse::<f64>().map_err(|e| format!("bad t0: {e}"))?;
    let b = b.trim().parse::<f64>().map_err(|e| format!("bad t1: {e}"))?;
    Ok((a, b))
}

fn build_config(args: &RunArgs) -> Result<ScenarioConfig> {
    let base = match &args.config {
        Some(p) => Some(ScenarioConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let scenario: Scenario = match (&args.scenario, &base) {
        (Some(s), _) => s.parse()?,
        (None, Some(b)) => b.scenario,
        (None, None) => bail!("--scenario is required"),
    };
    let integrator: Integrator = match (&args.integrator, &base) {
        (Some(s), _) => s.parse()?,
        (None, Some(b)) => b.integrator.clone(),
        (None, None) => bail!("--integrator is required"),
    };
    let base_eps = base.as_ref().and_then(|b| b.eps_fraction());
    let method: DiscontinuityPolicy = match (&args.method, &base) {
        (Some(m), _) => policy_from(m, args.eps_fraction.or(base_eps))?,
        (None, Some(b)) => policy_from(b.method.label(), args.eps_fraction.or(base_eps))?,
        (None, None) => bail!("--method is required"),
    };
    if args.eps_fraction.is_some() && !matches!(method, DiscontinuityPolicy::Improved { .. }) {
        bail!("--eps-fraction only applies to the improved method");
    }
    let step_size = args
        .step_size
        .or(base.as_ref().map(|b| b.step_size))
        .ok_or_else(|| anyhow!("--step-size is required"))?;
    let mut cfg = ScenarioConfig::new(scenario, method, integrator, step_size);
    if let Some(b) = &base {
        cfg.newton = b.newton;
        cfg.t_end = b.t_end;
        cfg.output_path = b.output_path.clone();
    }
    if args.t_end.is_some() {
        cfg.t_end = args.t_end;
    }
    if args.out.is_some() {
        cfg.output_path = args.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = build_config(&args)?;
            let out = cfg.output_path.clone().ok_or_else(|| anyhow!("--out is required"))?;
            let series = run_scenario(&cfg)?;
            write_csv(&series, &out)?;
            println!(
                "{} {} {} h={} -> {} ({} records)",
                cfg.scenario,
                cfg.method,
                cfg.integrator,
                cfg.step_size,
                out.display(),
                series.len()
            );
        }
        Command::Compare {
            run,
            reference,
            signal,
            window,
        } => {
            let a = read_csv(&run)?;
            let b = read_csv(&reference)?;
            let r = compare(&a, &b, &signal, window)?;
            println!("signal {} window [{}, {}] samples {}", r.signal, r.window.0, r.window.1, r.samples);
            println!("max_abs {:.6e}", r.max_abs);
            println!("rms {:.6e}", r.rms);
        }
        Command::Converge {
            scenario,
            integrator,
            steps,
        } => {
            let problem: ConvergenceProblem = scenario.parse()?;
            let integ: Integrator = integrator.parse()?;
            let r = convergence_study(problem, &integ, &steps)?;
            println!("{:>12} {:>14} {:>8}", "h", "error", "slope");
            for (k, (h, e)) in r.steps.iter().zip(&r.errors).enumerate() {
                let slope = if k == 0 { String::new() } else { format!("{:.3}", r.slopes[k - 1]) };
                println!("{h:>12.6e} {e:>14.6e} {slope:>8}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
