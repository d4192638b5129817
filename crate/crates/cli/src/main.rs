//! `crowdmix` — simulate crowdsourced multi-label annotations, fit the
//! aggregation models, evaluate them, and sweep one experimental parameter.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use crowdmix::experiments::{
    self, fit_model, report_components, run_sweep, write_sweep_csv, ModelChoice, PriorOverrides,
    ResultFile, RunPoint, SweepAxis, SweepSpec, TruthSource,
};
use crowdmix::ingest::{
    load_label_matrix_csv, load_mulan_arff, read_annotations, read_label_names, read_profiles,
    write_annotations, write_label_matrix_csv, write_profiles, AnnotationDims,
};
use crowdmix::sim::{Ratio, SimConfig};
use crowdmix::{FitConfig, LabelMatrix};

#[derive(Parser)]
#[command(
    name = "crowdmix",
    version,
    about = "Aggregate noisy multi-label crowd annotations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw an annotator pool and its annotations of a ground truth.
    Simulate(SimulateArgs),
    /// Fit mv, bnc or bmmb to an annotation file.
    Fit(FitArgs),
    /// Score a result file against the ground truth.
    Eval(EvalArgs),
    /// Simulate, fit and evaluate over a grid of one parameter.
    Sweep(SweepArgs),
    /// List the mixture components of a bmmb result by weight.
    ReportComponents(ReportArgs),
}

/// `N:C:K` — instances, labels and components of a random planted mixture.
#[derive(Debug, Clone, Copy)]
struct Planted {
    instances: usize,
    labels: usize,
    components: usize,
}

impl FromStr for Planted {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split(':')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| format!("'{p}' is not a count"))
            })
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [instances, labels, components] if instances > 0 && labels > 0 && components > 0 => {
                Ok(Self {
                    instances,
                    labels,
                    components,
                })
            }
            _ => Err(format!("expected three positive counts N:C:K, got '{s}'")),
        }
    }
}

#[derive(Args)]
struct TruthArgs {
    /// Ground-truth labels: a label-matrix CSV, or an ARFF file with --labels-file.
    #[arg(long, conflicts_with = "planted")]
    dataset: Option<PathBuf>,
    /// Label attribute names for an ARFF dataset, one per line.
    #[arg(long)]
    labels_file: Option<PathBuf>,
    /// Random planted-mixture truth instead of a dataset, as N:C:K.
    #[arg(long)]
    planted: Option<Planted>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    truth: TruthArgs,
    /// Heterogeneity ratio reliable:normal:random.
    #[arg(short = 'R', default_value = "1:1:1")]
    ratio: Ratio,
    /// Instances labeled by each annotator.
    #[arg(short = 'T', default_value_t = 5)]
    per_annotator: usize,
    /// Number of annotators.
    #[arg(short = 'L', default_value_t = 900)]
    annotators: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for annotations.csv, profiles.csv (and truth.csv when planted).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_parser = parse_model)]
    model: ModelChoice,
    /// Annotation CSV.
    #[arg(long)]
    annotations: PathBuf,
    /// Number of instances (default: one past the largest id).
    #[arg(short = 'N')]
    instances: Option<usize>,
    /// Number of labels (default: length of the label strings).
    #[arg(short = 'C')]
    labels: Option<usize>,
    /// Mixture components (bmmb only).
    #[arg(short = 'K', default_value_t = 6, value_parser = parse_components)]
    components: usize,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Result JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PriorArgs {
    /// Reliability prior pseudo-count for agreement.
    #[arg(long = "prior-a")]
    a: Option<f64>,
    /// Reliability prior pseudo-count for disagreement.
    #[arg(long = "prior-b")]
    b: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative ELBO improvement below which a fit stops.
    #[arg(long, default_value_t = 1e-4)]
    eta: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Random restarts (default: 3 for bmmb, 1 otherwise).
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    truth: TruthArgs,
    /// Result JSON written by `fit`.
    #[arg(long)]
    result: PathBuf,
    /// Annotator profiles written by `simulate`; enables type recovery.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Report JSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    truth: TruthArgs,
    #[arg(long, value_delimiter = ',', default_value = "mv,bnc,bmmb", value_parser = parse_model)]
    model: Vec<ModelChoice>,
    /// Ratios; give several (comma-separated) to sweep R.
    #[arg(short = 'R', value_delimiter = ',', default_value = "1:1:1")]
    ratio: Vec<Ratio>,
    #[arg(short = 'T', value_delimiter = ',', default_value = "5")]
    per_annotator: Vec<usize>,
    #[arg(short = 'L', value_delimiter = ',', default_value = "900")]
    annotators: Vec<usize>,
    #[arg(short = 'K', value_delimiter = ',', default_value = "6", value_parser = parse_components)]
    components: Vec<usize>,
    /// Base seeds; run seed = base + grid index.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result JSON written by `fit --model bmmb`.
    #[arg(long)]
    result: PathBuf,
    /// CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_components(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err(format!("K must be a positive integer, got '{s}'")),
    }
}

fn parse_model(s: &str) -> Result<ModelChoice, String> {
    s.parse().map_err(|e: crowdmix::Error| e.to_string())
}

/// A problem with how the command was invoked rather than with the data.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn load_dataset(path: &Path, labels_file: Option<&Path>) -> Result<LabelMatrix> {
    let is_arff = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("arff"));
    if is_arff {
        let Some(names) = labels_file else {
            return usage("an ARFF dataset needs --labels-file");
        };
        let names = read_label_names(names)?;
        Ok(load_mulan_arff(path, &names)?.1)
    } else {
        Ok(load_label_matrix_csv(path)?.1)
    }
}

impl TruthArgs {
    fn source(&self) -> Result<TruthSource> {
        match (&self.dataset, self.planted) {
            (Some(path), _) => Ok(TruthSource::Labels(load_dataset(
                path,
                self.labels_file.as_deref(),
            )?)),
            (None, Some(p)) => Ok(TruthSource::Planted {
                instances: p.instances,
                labels: p.labels,
                components: p.components,
            }),
            (None, None) => usage("give the ground truth with --dataset or --planted"),
        }
    }

    fn labels(&self) -> Result<LabelMatrix> {
        match &self.dataset {
            Some(path) => load_dataset(path, self.labels_file.as_deref()),
            None => usage("give the ground truth with --dataset"),
        }
    }
}

fn default_names(c: usize) -> Vec<String> {
    (0..c).map(|j| format!("label{j}")).collect()
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let source = args.truth.source()?;
    let truth = source.materialize(args.seed)?;
    let cfg = SimConfig {
        ratio: args.ratio,
        per_annotator: args.per_annotator,
        num_annotators: args.annotators,
        seed: args.seed,
    };
    let (y, profiles) = experiments::simulate(&truth, &cfg)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_annotations(&y, args.out.join("annotations.csv"))?;
    write_profiles(&profiles, args.out.join("profiles.csv"))?;
    if matches!(source, TruthSource::Planted { .. }) {
        write_label_matrix_csv(
            args.out.join("truth.csv"),
            &default_names(truth.cols()),
            &truth,
        )?;
    }
    eprintln!(
        "{} annotations from {} annotators over {} instances",
        y.len(),
        y.num_annotators(),
        y.num_instances()
    );
    Ok(())
}

fn fit_config(model: ModelChoice, solver: &SolverArgs, seed: u64) -> FitConfig {
    let base = if model == ModelChoice::Bmmb {
        FitConfig::bmmb()
    } else {
        FitConfig::bnc()
    };
    FitConfig {
        eta: solver.eta,
        max_iter: solver.max_iter,
        restarts: solver.restarts.unwrap_or(base.restarts),
        seed,
    }
}

fn fit(args: FitArgs) -> Result<()> {
    let dims = AnnotationDims {
        instances: args.instances,
        labels: args.labels,
        annotators: None,
    };
    let y = read_annotations(&args.annotations, dims)?;
    let overrides = PriorOverrides {
        a: args.prior.a,
        b: args.prior.b,
        alpha: args.prior.alpha,
        beta: args.prior.beta,
        gamma: args.prior.gamma,
    };
    let cfg = fit_config(args.model, &args.solver, args.seed);
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    let result = fit_model(args.model, &y, args.components, &overrides, &cfg)?;
    result.save(&args.out)?;
    if let (Some(it), Some(conv)) = (result.iterations, result.converged) {
        eprintln!(
            "{}: {it} iterations, {}",
            args.model,
            if conv {
                "converged"
            } else {
                "stopped at max-iter"
            }
        );
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout()
            .write_all(text.as_bytes())
            .context("writing to stdout"),
    }
}

fn eval(args: EvalArgs) -> Result<()> {
    let truth = args.truth.labels()?;
    let result = ResultFile::load(&args.result)?;
    let profiles = args.profiles.as_deref().map(read_profiles).transpose()?;
    let report = experiments::evaluate(&truth, &result, profiles.as_deref())?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    emit(args.out.as_deref(), &text)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let lists = [
        ("R", args.ratio.len()),
        ("T", args.per_annotator.len()),
        ("L", args.annotators.len()),
        ("K", args.components.len()),
    ];
    let swept: Vec<&str> = lists
        .iter()
        .filter(|(_, n)| *n > 1)
        .map(|(a, _)| *a)
        .collect();
    let axis = match swept[..] {
        ["R"] => SweepAxis::Ratio(args.ratio.clone()),
        ["T"] => SweepAxis::T(args.per_annotator.clone()),
        ["L"] => SweepAxis::L(args.annotators.clone()),
        ["K"] => SweepAxis::K(args.components.clone()),
        [] => return usage("give several values for exactly one of -R, -T, -L, -K"),
        _ => {
            return usage(format!(
                "only one axis can be swept, got {}",
                swept.join(", ")
            ))
        }
    };
    let spec = SweepSpec {
        truth: args.truth.source()?,
        models: args.model,
        axis,
        fixed: RunPoint {
            ratio: args.ratio[0],
            per_annotator: args.per_annotator[0],
            num_annotators: args.annotators[0],
            k: args.components[0],
        },
        seeds: args.seed,
        eta: args.solver.eta,
        max_iter: args.solver.max_iter,
        restarts: args.solver.restarts.unwrap_or(FitConfig::bmmb().restarts),
        workers: args.workers,
    };
    spec.validate().map_err(|e| Usage(e.to_string()))?;
    let rows = run_sweep(&spec)?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &spec, &rows)?;
    emit(args.out.as_deref(), &String::from_utf8(buf)?)
}

fn components(args: ReportArgs) -> Result<()> {
    let result = ResultFile::load(&args.result)?;
    let rows = report_components(&result)?;
    let c = rows.first().map_or(0, |r| r.tau.len());
    let mut text = String::from("rank,component,weight");
    for j in 0..c {
        text.push_str(&format!(",tau_{j}"));
    }
    text.push('\n');
    for (rank, r) in rows.iter().enumerate() {
        text.push_str(&format!("{},{},{}", rank + 1, r.component, r.weight));
        for t in &r.tau {
            text.push_str(&format!(",{t}"));
        }
        text.push('\n');
    }
    emit(args.out.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::ReportComponents(a) => components(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already embed their cause; skip repeated links.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let text = cause.to_string();
                if !msg.contains(&text) {
                    msg = format!("{msg}: {text}");
                }
            }
            eprintln!("error: {msg}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
