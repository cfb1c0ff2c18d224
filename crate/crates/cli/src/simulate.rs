//! `simulate` and `sweep`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use lcm_core::sim::{run_scenario, ScenarioConfig, ScenarioRun};

use crate::common::{load_config, load_raw, output_dir, usage, write_bytes};

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config override, `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Config key to vary, e.g. `monitoring.period`.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn execute(cfg: &ScenarioConfig, dir: &Path) -> Result<ScenarioRun> {
    let run = run_scenario(cfg).context("simulation failed")?;
    run.write_outputs(dir).with_context(|| format!("writing outputs to {}", dir.display()))?;
    Ok(run)
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = load_config(&a.config, &a.overrides)?;
    let dir = output_dir(a.out.as_deref(), &cfg, &a.config);
    let run = execute(&cfg, &dir)?;
    if !a.quiet {
        print!("{}", run.summary.to_text());
        println!("outputs = {}", dir.display());
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let base = load_raw(&a.config, &a.overrides)?;
    let root = match &a.out {
        Some(p) => p.clone(),
        None => {
            let cfg = ScenarioConfig::from_raw(&base)?;
            let mut d = output_dir(None, &cfg, &a.config);
            d.as_mut_os_string().push("-sweep");
            d
        }
    };
    let mut table = String::from("value,evaluations,monitor_overhead_bits,alarms,actions,mean_sgcs\n");
    println!("{:>10} {:>12} {:>14} {:>7} {:>8} {:>10}", a.param, "evaluations", "overhead_bits", "alarms", "actions", "mean_sgcs");
    for v in &a.values {
        let mut raw = base.clone();
        raw.set(&a.param, v);
        let mut cfg = ScenarioConfig::from_raw(&raw).with_context(|| format!("{} = {v}", a.param))?;
        cfg.output_dir = None;
        if v.contains(['/', '\\']) {
            return Err(usage(format!("sweep value {v:?} cannot be used as a directory name")));
        }
        let run = execute(&cfg, &root.join(format!("{}={v}", a.param)))?;
        let s = &run.summary;
        let actions: u64 = s.actions.values().sum();
        println!(
            "{v:>10} {:>12} {:>14} {:>7} {actions:>8} {:>10.6}",
            s.evaluations, s.monitor_overhead_bits, s.alarms, s.mean_sgcs
        );
        let _ = writeln!(table, "{v},{},{},{},{actions},{:.6}", s.evaluations, s.monitor_overhead_bits, s.alarms, s.mean_sgcs);
    }
    write_bytes(&root.join("sweep.csv"), table.as_bytes())?;
    println!("outputs = {}", root.display());
    Ok(())
}
