mod args;
mod digest;
mod run;

use std::collections::BTreeMap;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use qqe::io::{read_points, write_points};
use qqe::metrics::{hsic, kl_divergence_with, mmd_squared, recall_at_k};
use qqe::reference::{resize_reference, shape_sampler};
use qqe::StopReason;
use serde::Serialize;

use args::{Cli, Command, MetricsArgs, SampleArgs};

const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            // one line: the whole context chain joined
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    let outcome = match command {
        Command::Transform(args) => run::run(&args, None)?,
        Command::Embed(args) => run::run(&args.run, Some(&args.init))?,
        Command::Metrics(args) => return metrics(&args).map(|()| ExitCode::SUCCESS),
        Command::Sample(args) => return sample(&args).map(|()| ExitCode::SUCCESS),
    };
    if outcome.stop_reason == StopReason::Diverged {
        eprintln!(
            "error: optimisation diverged after {} iterations; partial results in {}",
            outcome.iterations,
            outcome.out.display()
        );
        return Ok(ExitCode::from(EXIT_DIVERGED));
    }
    println!(
        "{} after {} iterations; results in {}",
        match outcome.stop_reason {
            StopReason::CostConverged => "converged",
            _ => "stopped at the iteration limit",
        },
        outcome.iterations,
        outcome.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct MetricsOutput {
    n: usize,
    d: usize,
    kl: f64,
    mmd2: f64,
    hsic: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    recall_at: BTreeMap<usize, f64>,
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    args.kernel.validate()?;
    let a = read_points(&args.a).with_context(|| format!("reading {}", args.a.display()))?;
    let b = read_points(&args.b).with_context(|| format!("reading {}", args.b.display()))?;
    let (n, d) = a.points.shape();
    if b.points.cols() != d {
        bail!("--a has {d} columns but --b has {}", b.points.cols());
    }
    for (name, m) in [("--a", &a.points), ("--b", &b.points)] {
        if let Some((row, col)) = m.first_non_finite() {
            bail!("{name} has a non-finite value at row {row}, column {col}");
        }
    }
    let y = if b.points.rows() == n { b.points } else { resize_reference(&b.points, n, args.seed)? };

    let mut recall = BTreeMap::new();
    if let Some(source) = &args.labels {
        let labels = match source {
            None => a.labels.clone().context("--labels given without a path but --a has no label column")?,
            Some(path) => {
                let t = read_points(path).with_context(|| format!("reading {}", path.display()))?;
                match t.labels {
                    Some(l) => l,
                    None if t.points.cols() == 1 => t
                        .points
                        .as_slice()
                        .iter()
                        .map(|&v| if v.fract() == 0.0 { Ok(v as i64) } else { bail!("label {v} is not an integer") })
                        .collect::<Result<_>>()?,
                    None => bail!("label file must have one column or a `label` column"),
                }
            }
        };
        if labels.len() != n {
            bail!("{} labels for {n} points", labels.len());
        }
        let ks: Vec<usize> = args.ks.iter().copied().filter(|&k| k >= 1 && k < n).collect();
        recall = ks.iter().copied().zip(recall_at_k(&a.points, &labels, &ks)?).collect();
    }

    let out = MetricsOutput {
        n,
        d,
        kl: kl_divergence_with(&a.points, &y, args.pairing.into())?,
        mmd2: mmd_squared(&a.points, &y, args.kernel)?,
        hsic: hsic(&a.points, &y, args.kernel)?,
        recall_at: recall,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn sample(args: &SampleArgs) -> Result<()> {
    let m = shape_sampler::<f64>(&args.ref_dist, args.n, args.d, args.seed)?;
    write_points(&args.out, &m, None).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}
