use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use noisyda::config::{ExperimentConfig, OutputFormat};
use noisyda::deconv::build_deconv_kernel;
use noisyda::instance::margin_diagnostic;
use noisyda::lower_bound::default_margin_scan;
use noisyda::rates::{run_rate_experiment, tau, Experiment, Metric};
use noisyda::report::emit_report;

#[derive(Parser)]
#[command(name = "noisyda", version, about = "Deconvolution ERM for noisy discriminant analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and print its risk report as JSON.
    Simulate {
        config: PathBuf,
        /// Sample size per class; defaults to the first size of the grid.
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        common: Overrides,
    },
    /// Run the full rate experiment and write the report.
    Rates {
        config: PathBuf,
        #[command(flatten)]
        common: Overrides,
    },
    /// Tabulate K and K_eta on the kernel grid.
    KernelDump {
        config: PathBuf,
        /// Bandwidth; defaults to the tuned value at the first sample size.
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        common: Overrides,
    },
    /// Print the instance invariants as JSON.
    InstanceCheck { config: PathBuf },
    /// Print the rate exponent.
    Tau {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// One noise exponent per dimension; zeros when omitted.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        beta: Vec<f64>,
        #[arg(long, value_enum, default_value_t = MetricArg::DFg)]
        metric: MetricArg,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    #[value(name = "d_fg")]
    DFg,
    #[value(name = "d_delta")]
    DDelta,
}

fn load(path: &Path, overrides: Option<&Overrides>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    if let Some(o) = overrides {
        if let Some(seed) = o.seed {
            config.seed = seed;
        }
        if let Some(out) = &o.out {
            config.output.path = Some(out.clone());
        }
        if let Some(format) = o.format {
            config.output.format = match format {
                FormatArg::Csv => OutputFormat::Csv,
                FormatArg::Json => OutputFormat::Json,
            };
        }
    }
    Ok(config)
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => match std::io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, n, common } => {
            let config = load(&config, Some(&common))?;
            let n = n.unwrap_or(config.sizes()[0]);
            let report = Experiment::new(config.clone())?.run_trial(n, config.seed)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            write_or_print(&text, common.out.as_deref())?;
        }
        Command::Rates { config, common } => {
            let config = load(&config, Some(&common))?;
            let (result, manifest) = run_rate_experiment(&config)?;
            let path = config
                .output
                .path
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("{}.{}", config.experiment_id, ext(config.output.format))));
            let files = emit_report(&result, Some(&manifest), &path, config.output.format)?;
            for row in &result.summary {
                println!(
                    "{} {}: slope {:.4} ± {:.4}, target {:.4}, {}",
                    row.experiment_id,
                    row.metric.as_str(),
                    row.slope,
                    row.slope_stderr,
                    -row.tau_target,
                    if row.pass { "pass" } else { "FAIL" }
                );
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            if !result.pass {
                return Ok(ExitCode::from(2));
            }
        }
        Command::KernelDump {
            config,
            lambda,
            common,
        } => {
            let config = load(&config, Some(&common))?;
            let experiment = Experiment::new(config.clone())?;
            let lambda = match lambda {
                Some(l) => vec![l; experiment.pair.dim()],
                None => experiment.tuning(config.sizes()[0])?.lambda,
            };
            let kernel = build_deconv_kernel(
                &experiment.spec,
                &experiment.noise,
                &lambda,
                experiment.pair.grid.step(),
                config.kernel.half_width,
            )?;
            for w in &kernel.warnings {
                eprintln!("warning: {w}");
            }
            let table = &kernel.dims[0];
            let rows: Vec<(f64, f64, f64)> = (0..=table.reach)
                .map(|k| {
                    let t = k as f64 * kernel.step / table.lambda;
                    (t, experiment.spec.real_space(t), table.values[k])
                })
                .collect();
            let text = match common.format.unwrap_or(FormatArg::Csv) {
                FormatArg::Csv => {
                    let mut s = String::from("t,K,K_eta\n");
                    for (t, k, ke) in rows {
                        s.push_str(&format!("{t},{k},{ke}\n"));
                    }
                    s
                }
                FormatArg::Json => {
                    let rows: Vec<_> = rows
                        .into_iter()
                        .map(|(t, k, ke)| json!({ "t": t, "K": k, "K_eta": ke }))
                        .collect();
                    serde_json::to_string_pretty(&json!({
                        "lambda": table.lambda,
                        "quadrature_error": table.quadrature_error,
                        "truncated_mass": table.truncated_mass,
                        "rows": rows,
                    }))? + "\n"
                }
            };
            write_or_print(&text, common.out.as_deref())?;
        }
        Command::InstanceCheck { config } => {
            let config = load(&config, None)?;
            let (pair, lower_bound) = config.build_instance()?;
            let checks = pair.check();
            let scan: Vec<f64> = match &lower_bound {
                Some(lb) => default_margin_scan(&lb.shape),
                None => {
                    let top = pair.sup_nu();
                    (0..=20).map(|i| top * 0.01 * 20f64.powf(i as f64 / 20.0)).collect()
                }
            };
            let diagnostic = margin_diagnostic(&pair, &scan)?;
            let (anchored_c2, anchored_ok) = diagnostic.anchored_bound(pair.margin.alpha);
            // the declared constant, allowing one cell of Q-mass per boundary node
            let cell = pair.q_weights().into_iter().fold(0.0, f64::max);
            let slack = cell * pair.boundary_cells().max(1) as f64;
            let declared_ok = pair.margin.c2.is_finite()
                && diagnostic
                    .t
                    .iter()
                    .zip(&diagnostic.measure)
                    .filter(|(t, _)| **t <= pair.margin.t0)
                    .all(|(t, m)| *m <= pair.margin.c2 * t.powf(pair.margin.alpha) + slack);
            let mut out = json!({
                "checks": checks,
                "margin": pair.margin,
                "regularity": pair.regularity,
                "margin_scan": {
                    "alpha_hat": diagnostic.alpha_hat,
                    "c2_hat": diagnostic.c2_hat,
                    "anchored_c2": anchored_c2,
                    "anchored_ok": anchored_ok,
                    "declared_ok": declared_ok,
                },
                "boundary_cells": pair.boundary_cells(),
                "resolution_slack": pair.resolution_slack(),
            });
            let mut pass = checks.pass && (declared_ok || anchored_ok);
            if let Some(lb) = &lower_bound {
                let coherence = lb.sign_coherence(7);
                pass &= coherence.violations == 0;
                out["lower_bound"] = json!({
                    "total_mass": lb.shape.total_mass(),
                    "sign_coherence": coherence,
                    "difference_gap": lb.difference_gap(),
                });
            }
            out["pass"] = json!(pass);
            println!("{}", serde_json::to_string_pretty(&out)?);
            if !pass {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Tau {
            alpha,
            gamma,
            d,
            beta,
            metric,
        } => {
            let beta = if beta.is_empty() { vec![0.0; d] } else { beta };
            if beta.len() != d {
                bail!("--beta needs {d} values, got {}", beta.len());
            }
            let metric = match metric {
                MetricArg::DFg => Metric::DFg,
                MetricArg::DDelta => Metric::DDelta,
            };
            let t = tau(alpha, &beta, gamma, d, metric)?;
            match t.exact {
                Some((p, q)) if q == 1 => println!("{p} ({})", t.value),
                Some((p, q)) => println!("{p}/{q} ({})", t.value),
                None => println!("{}", t.value),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn ext(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
