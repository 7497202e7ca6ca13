use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tmar::commands;
use tmar::config::{NuCenter, RunConfig};
use tmar::data::Transform;
use tmar::output::join_orders;
use tmar::Error;

#[derive(Parser)]
#[command(name = "tmar", version, about = "Bayesian mixture autoregressions with Student-t innovations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series from a preset or a custom model
    Simulate(Flags),
    /// Sample the posterior for fixed component orders
    Fit(Flags),
    /// Reversible-jump order selection for each g
    Select(Flags),
    /// Order selection, fit and marginal likelihood per g, ranked
    Evidence(Flags),
    /// Trace and histogram files from a trace
    Report(Flags),
}

fn transform(s: &str) -> Result<Transform, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Flags mirror the configuration keys; any flag given overrides the file.
#[derive(Args)]
struct Flags {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Zero-based column of a delimited input file
    #[arg(long)]
    column: Option<usize>,
    /// none | diff
    #[arg(long, value_parser = transform)]
    transform: Option<Transform>,
    /// Component counts, e.g. 2,3
    #[arg(long)]
    g: Option<String>,
    /// Component orders for fit, e.g. 2,1,1
    #[arg(long)]
    orders: Option<String>,
    #[arg(long)]
    p_max: Option<usize>,
    /// Total iterations including burn-in
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Initial AR random-walk steps (one value or one per component)
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    adapt: Option<bool>,
    /// auto, or dof prior modes (one value or one per component)
    #[arg(long, value_parser = |s: &str| s.parse::<NuCenter>())]
    nu_center: Option<NuCenter>,
    #[arg(long)]
    nu_target_var: Option<f64>,
    #[arg(long)]
    fix_means_to_zero: Option<bool>,
    #[arg(long)]
    sweeps_per_move: Option<usize>,
    #[arg(long)]
    reduced_iterations: Option<usize>,
    #[arg(long)]
    pilot_iterations: Option<usize>,
    #[arg(long)]
    hdi_mass: Option<f64>,
    #[arg(long)]
    relabel: Option<bool>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// tmar-3-211 | ar1
    #[arg(long)]
    preset: Option<String>,
    /// Series length for simulate
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sim_burnin: Option<usize>,
    #[arg(long)]
    sim_weights: Option<String>,
    #[arg(long)]
    sim_means: Option<String>,
    #[arg(long)]
    sim_scales: Option<String>,
    /// Coefficients per component separated by ';', e.g. "-0.5,0.5;1.1;-0.4"
    #[arg(long)]
    sim_ar: Option<String>,
    #[arg(long)]
    sim_dofs: Option<String>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
}

impl Flags {
    fn into_config(self) -> Result<RunConfig, Error> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let mut overrides = RunConfig {
            data: self.data,
            column: self.column,
            transform: self.transform,
            p_max: self.p_max,
            iterations: self.iterations,
            burnin: self.burnin,
            seed: self.seed,
            adapt: self.adapt,
            nu_center: self.nu_center,
            nu_target_var: self.nu_target_var,
            fix_means_to_zero: self.fix_means_to_zero,
            sweeps_per_move: self.sweeps_per_move,
            reduced_iterations: self.reduced_iterations,
            pilot_iterations: self.pilot_iterations,
            hdi_mass: self.hdi_mass,
            relabel: self.relabel,
            output: self.output,
            preset: self.preset,
            n: self.n,
            sim_burnin: self.sim_burnin,
            trace: self.trace,
            bins: self.bins,
            ..RunConfig::default()
        };
        let lists = [
            ("g", self.g),
            ("orders", self.orders),
            ("gamma", self.gamma),
            ("sim_weights", self.sim_weights),
            ("sim_means", self.sim_means),
            ("sim_scales", self.sim_scales),
            ("sim_ar", self.sim_ar),
            ("sim_dofs", self.sim_dofs),
        ];
        for (key, value) in lists {
            if let Some(v) = value {
                overrides.set(key, &v).map_err(Error::Usage)?;
            }
        }
        Ok(base.merged(&overrides))
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(f) => {
            let out = commands::simulate(&f.into_config()?)?;
            if !out.stable {
                eprintln!("warning: the simulated model is not stable");
            }
            println!("series: {}", out.series_path.display());
            println!("truth: {}", out.truth_path.display());
        }
        Command::Fit(f) => {
            let out = commands::fit(&f.into_config()?)?;
            println!("trace: {}", out.trace_path.display());
            println!("summary: {}", out.summary_path.display());
        }
        Command::Select(f) => {
            for s in commands::select(&f.into_config()?)? {
                println!(
                    "g={} preferred={} share={:.4} table={}",
                    s.g,
                    join_orders(&s.selection.preferred),
                    s.selection.preferred_share(),
                    s.table_path.display()
                );
            }
        }
        Command::Evidence(f) => {
            let out = commands::evidence(&f.into_config()?)?;
            for o in &out.outcomes {
                if let Err(e) = &o.result {
                    eprintln!("g={}: {e}", o.g);
                }
            }
            print!("{}", std::fs::read_to_string(&out.verdict_path).unwrap_or_default());
            if out.ranking.is_empty() {
                return Err(Error::Numerical("no component count produced a valid estimate".into()));
            }
        }
        Command::Report(f) => {
            let files = commands::report(&f.into_config()?)?;
            println!("{} files written", files.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

