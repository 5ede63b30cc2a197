mod check;
mod evaluate;
mod failure;
mod generate;
mod manifest;
mod phantom;
mod postprocess;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sulcikit::postproc::{Connectivity, PostprocConfig};
use sulcikit::synth::phantom::DEFAULT_SHAPE;

use crate::failure::{Failure, EXIT_CHECK_FAILED, EXIT_CONFIG};

/// Synthetic MRI generation, sulcus mask post-processing and evaluation.
#[derive(Parser)]
#[command(name = "sulcikit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic image / label pairs for every manifest subject.
    Generate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Master seed; overrides the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores). SULCIKIT_JOBS takes precedence.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Keep the original voxels inside the largest components of the
    /// dilated mask; writes `<name>_pp.nii[.gz]`.
    Postprocess {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        radius: usize,
        #[arg(long, default_value_t = 26, value_parser = parse_connectivity)]
        connectivity: u8,
        #[arg(long, default_value_t = 2)]
        keep: usize,
        /// Comma-separated labels forming the mask (default: any nonzero).
        #[arg(long, value_delimiter = ',')]
        labels: Vec<u16>,
        /// Directory for outputs (default: next to each input).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Pair predictions with ground truth by file stem and report metrics.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// JSON report path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Comma-separated labels forming the mask (default: any nonzero).
        #[arg(long, value_delimiter = ',')]
        labels: Vec<u16>,
    },
    /// Run the built-in numerical self-checks.
    Check {
        /// Only run checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        /// List check names and exit.
        #[arg(long)]
        list: bool,
        #[arg(long, hide = true)]
        inject_fault: Option<check::Fault>,
    },
    /// Write a phantom dataset (label maps, manifest and config).
    Phantom {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        subjects: usize,
        /// Samples per subject recorded in the config.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Grid shape as `x,y,z`.
        #[arg(long, value_parser = parse_shape)]
        shape: Option<[usize; 3]>,
    },
}

fn parse_connectivity(s: &str) -> Result<u8, String> {
    match s {
        "6" => Ok(6),
        "18" => Ok(18),
        "26" => Ok(26),
        _ => Err(format!("connectivity must be 6, 18 or 26, got {s}")),
    }
}

fn parse_shape(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("invalid shape component {p:?}")))
        .collect::<Result<_, _>>()?;
    <[usize; 3]>::try_from(v).map_err(|v| format!("shape needs 3 components, got {}", v.len()))
}

fn jobs_setting(flag: usize) -> Result<usize, Failure> {
    match std::env::var("SULCIKIT_JOBS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::config(format!("SULCIKIT_JOBS must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate {
            manifest,
            config,
            seed,
            out,
            jobs,
        } => {
            let opts = generate::GenerateOptions {
                manifest,
                config,
                seed,
                out,
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs_setting(jobs)?)
                .build()
                .map_err(|e| Failure::config(format!("cannot start worker pool: {e}")))?;
            pool.install(|| generate::run(&opts))
        }
        Command::Postprocess {
            inputs,
            radius,
            connectivity,
            keep,
            labels,
            out_dir,
        } => {
            let connectivity = Connectivity::try_from(connectivity).map_err(Failure::config)?;
            postprocess::run(&postprocess::PostprocessOptions {
                inputs,
                config: PostprocConfig {
                    dilation_radius: radius,
                    connectivity,
                    keep,
                },
                labels: labels.into_iter().collect::<BTreeSet<_>>(),
                out_dir,
            })
        }
        Command::Evaluate {
            pred,
            gt,
            out,
            csv,
            labels,
        } => evaluate::run(&evaluate::EvaluateOptions {
            pred,
            gt,
            out,
            csv,
            labels: labels.into_iter().collect(),
        }),
        Command::Check {
            filter,
            list,
            inject_fault,
        } => {
            if list {
                check::check_names().iter().for_each(|n| println!("{n}"));
                return Ok(());
            }
            let report = check::run_checks(filter.as_deref(), inject_fault);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
            for c in &report.checks {
                eprintln!(
                    "{} {} (observed {:e}, tolerance {:e})",
                    if c.pass { "pass" } else { "FAIL" },
                    c.name,
                    c.observed,
                    c.tolerance
                );
            }
            if report.checks.is_empty() {
                return Err(Failure::config(format!(
                    "no check matches {:?}",
                    filter.unwrap_or_default()
                )));
            }
            if report.failed > 0 {
                let names: Vec<_> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
                return Err(Failure {
                    code: EXIT_CHECK_FAILED,
                    message: format!("failed checks: {}", names.join(", ")),
                });
            }
            Ok(())
        }
        Command::Phantom {
            out,
            subjects,
            samples,
            shape,
        } => phantom::run(&phantom::PhantomOptions {
            out,
            subjects,
            shape: shape.unwrap_or(DEFAULT_SHAPE),
            samples,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; exit code 2 means I/O
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
