//! roblab: verification and experiment front-end.
//!
//! Exit codes: 0 success, 1 verification/inequality failure, 2 usage or
//! configuration error.

mod config;
mod grid;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use roblab_core::bounds::{
    a_rho, gap_bound, gen_bound_rhs, rad_lower_bound, rad_lower_bound_overfit, theoretical_l,
    ScalingLaw,
};
use roblab_core::dataset::ImageDataset;
use roblab_core::lipestimate::{filter_zero_estimates, pairwise_lip, DroppedRecord};
use roblab_core::scalefit::{
    compare_to_theory, fit_joint, fit_slices, FitResult, SlicesFit, TheoryComparison,
};
use roblab_core::trainer::Mlp;
use roblab_core::verify::{run_verification, VerifyOptions, VerifyReport};

use crate::config::ExperimentConfig;
use crate::grid::read_results_csv;

#[derive(Parser)]
#[command(
    name = "roblab",
    version,
    about = "Robust-generalization verification suites and Lipschitz scaling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized inequality suites against exact oracles.
    Verify(VerifyArgs),
    /// Run the (n, width, seed) training grid and emit the results CSV.
    RunGrid(RunGridArgs),
    /// Estimate the pairwise Lipschitz lower bound for a checkpoint.
    Lipschitz(LipschitzArgs),
    /// Fit power-law scaling exponents from a results CSV.
    Fit(FitArgs),
    /// Evaluate the closed-form bounds for given inputs.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Randomized trials per suite.
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum vector-set dimension (exact enumeration stays 2^dim).
    #[arg(long, default_value_t = 8)]
    max_dim: usize,
    /// Maximum vector-set member count.
    #[arg(long, default_value_t = 8)]
    max_set: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Negative control: understate contraction constants; the run must
    /// then report violations and exit nonzero.
    #[arg(long, hide = true)]
    inject_faulty_contraction: bool,
}

#[derive(Args)]
struct RunGridArgs {
    /// Experiment manifest (TOML, schema_version = 1).
    #[arg(long)]
    config: PathBuf,
    /// Override grid.seeds with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override run.jobs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct LipschitzArgs {
    /// Model checkpoint written by the trainer API.
    #[arg(long)]
    checkpoint: PathBuf,
    /// IDX image file to evaluate over.
    #[arg(long)]
    images: PathBuf,
    /// IDX label file (sample count must match the image file).
    #[arg(long)]
    labels: PathBuf,
    /// Optional subset size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use raw logits instead of tanh-squashed outputs (analytic-oracle hook).
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Results CSV produced by run-grid.
    #[arg(long)]
    csv: PathBuf,
    /// Effective dimension for the theory comparison.
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Report directory (defaults to the CSV's directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Lipschitz constant L.
    #[arg(long = "lipschitz")]
    l: f64,
    #[arg(long)]
    rho: f64,
    /// Clean empirical error for the gap bound.
    #[arg(long, default_value_t = 0.0)]
    r_hat: f64,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    delta_conf: Option<f64>,
    #[arg(long)]
    expected_rad: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Effective dimension for the theoretical laws.
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Parameter count for the Bubeck-style value.
    #[arg(long)]
    p: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::RunGrid(args) => cmd_run_grid(args),
        Command::Lipschitz(args) => cmd_lipschitz(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Bounds(args) => cmd_bounds(args),
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    if args.trials == 0 {
        bail!("--trials must be at least 1");
    }
    if args.max_dim == 0 || args.max_dim > 20 {
        bail!("--max-dim must be in 1..=20 (exact enumeration cutoff)");
    }
    let opts = VerifyOptions {
        trials: args.trials,
        seed: args.seed,
        max_dim: args.max_dim,
        max_set: args.max_set.max(1),
        understate_contraction: args.inject_faulty_contraction,
    };
    let report: VerifyReport = run_verification(&opts);
    for s in &report.summaries {
        eprintln!(
            "verify {:<28} trials={:<5} checks={:<6} violations={}",
            s.suite, s.trials, s.checks, s.violations
        );
    }
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => {
            fs::write(path, json).with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{json}"),
    }
    Ok(if report.all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_run_grid(args: RunGridArgs) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.grid.seeds = vec![seed];
    }
    if let Some(out) = args.out {
        cfg.output.dir = out;
    }
    if let Some(jobs) = args.jobs {
        cfg.run.jobs = jobs.max(1);
    }
    cfg.validate()?;
    let path = grid::run_grid(&cfg)?;
    println!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_lipschitz(args: LipschitzArgs) -> Result<ExitCode> {
    let model = Mlp::load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let ds = ImageDataset::from_idx_files(&args.images, &args.labels)?;
    let ds = match args.n {
        Some(n) => ds.sample_subset(n, args.seed)?,
        None => ds,
    };
    let outputs = if args.raw {
        model.forward_batch(ds.features())?
    } else {
        model.predict_squashed(ds.features())?
    };
    let estimate = pairwise_lip(&outputs, ds.features())?;
    println!("{}", serde_json::to_string_pretty(&estimate)?);
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct FitReport {
    csv: String,
    records_total: usize,
    records_used: usize,
    dropped: Vec<DroppedRecord>,
    slices: SlicesFit,
    joint: FitResult,
    comparison: TheoryComparison,
}

fn cmd_fit(args: FitArgs) -> Result<ExitCode> {
    let rows = read_results_csv(&args.csv)?;
    let records: Vec<_> = rows.iter().filter_map(|r| r.to_scaling_record()).collect();
    if records.is_empty() {
        bail!("no successful rows in {}", args.csv.display());
    }
    let (kept, dropped) = filter_zero_estimates(&records);
    for d in &dropped {
        eprintln!(
            "fit: dropping zero estimate at n={} width={} (L_emp={})",
            d.n, d.width, d.l_emp
        );
    }
    if kept.is_empty() {
        bail!("all records dropped by the zero-estimate filter");
    }
    let slices = fit_slices(&kept)?;
    let joint = fit_joint(&kept)?;
    let comparison = compare_to_theory(&joint, args.d);

    let out_dir = args
        .out
        .clone()
        .or_else(|| args.csv.parent().map(|p| p.to_path_buf()))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;

    let report = FitReport {
        csv: args.csv.display().to_string(),
        records_total: records.len(),
        records_used: kept.len(),
        dropped,
        slices,
        joint,
        comparison,
    };
    fs::write(
        out_dir.join("fit.json"),
        serde_json::to_string_pretty(&report)?,
    )?;

    let text = render_fit_text(&report);
    fs::write(out_dir.join("fit.txt"), &text)?;
    print!("{text}");

    // per-slice estimates for plotting
    let mut slice_csv = String::from("axis,fixed,slope,points\n");
    if let Some(axis) = &report.slices.alpha {
        for s in &axis.per_slice {
            slice_csv.push_str(&format!("alpha,{},{},{}\n", s.fixed, s.slope, s.points));
        }
    }
    if let Some(axis) = &report.slices.beta {
        for s in &axis.per_slice {
            slice_csv.push_str(&format!("beta,{},{},{}\n", s.fixed, s.slope, s.points));
        }
    }
    fs::write(out_dir.join("slices.csv"), slice_csv)?;
    Ok(ExitCode::SUCCESS)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn render_fit_text(report: &FitReport) -> String {
    let mut out = String::new();
    out.push_str("power-law fit: L = C * n^alpha * p^beta\n");
    out.push_str(&format!(
        "records: {} used of {} ({} dropped as zero)\n\n",
        report.records_used,
        report.records_total,
        report.dropped.len()
    ));
    out.push_str("method   alpha      beta       logC       R^2\n");
    if let Some(s) = report.slices.to_fit_result() {
        out.push_str(&format!(
            "slices   {:<10.4} {:<10.4} {:<10.4} {:<10.4}\n",
            s.alpha, s.beta, s.log_c, s.r_squared
        ));
    } else {
        out.push_str("slices   (partial: one axis unavailable)\n");
    }
    let j = &report.joint;
    out.push_str(&format!(
        "joint    {:<10.4} {:<10.4} {:<10.4} {:<10.4}\n\n",
        j.alpha, j.beta, j.log_c, j.r_squared
    ));
    out.push_str(&format!(
        "joint alpha: {:.4} +- {} (stderr), 95% CI [{}, {}], p = {}\n",
        j.alpha,
        fmt_opt(j.stderr_alpha),
        fmt_opt(j.ci95_alpha.map(|c| c.0)),
        fmt_opt(j.ci95_alpha.map(|c| c.1)),
        fmt_opt(j.p_value_alpha),
    ));
    out.push_str(&format!(
        "joint beta:  {:.4} +- {} (stderr), 95% CI [{}, {}], p = {}\n\n",
        j.beta,
        fmt_opt(j.stderr_beta),
        fmt_opt(j.ci95_beta.map(|c| c.0)),
        fmt_opt(j.ci95_beta.map(|c| c.1)),
        fmt_opt(j.p_value_beta),
    ));
    out.push_str(&format!(
        "theory comparison at d = {}\n",
        report.comparison.effective_dim
    ));
    out.push_str("law      alpha_th   beta_th    |d_alpha|  |d_beta|\n");
    for law in &report.comparison.laws {
        out.push_str(&format!(
            "{:<8} {:<10.4} {:<10.4} {:<10.4} {:<10.4}\n",
            format!("{:?}", law.law).to_lowercase(),
            law.alpha_theory,
            law.beta_theory,
            law.alpha_distance,
            law.beta_distance
        ));
    }
    out.push_str(&format!(
        "closer on alpha: {:?}; closer on beta: {:?}\n",
        report.comparison.closer_alpha, report.comparison.closer_beta
    ));
    out
}

#[derive(Serialize)]
struct LawOutput {
    alpha: f64,
    beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
}

#[derive(Serialize)]
struct BoundsInputs {
    l: f64,
    rho: f64,
    r_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_conf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
}

#[derive(Serialize)]
struct BoundsOutput {
    inputs: BoundsInputs,
    gap_bound: f64,
    a_rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gen_bound_rhs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rad_lower_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rad_lower_bound_vacuous: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rad_lower_bound_overfit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rad_lower_bound_overfit_vacuous: Option<bool>,
    theoretical: std::collections::BTreeMap<String, LawOutput>,
}

fn cmd_bounds(args: BoundsArgs) -> Result<ExitCode> {
    if args.l < 0.0 || args.rho < 0.0 || args.r_hat < 0.0 {
        bail!("--lipschitz, --rho, and --r-hat must be nonnegative");
    }
    if let Some(d) = args.delta_conf {
        if !(d > 0.0 && d < 1.0) {
            bail!("--delta-conf must lie strictly in (0, 1)");
        }
    }
    let conf = args.n.zip(args.delta_conf);
    let gen_rhs = match (args.expected_rad, conf) {
        (Some(rad), Some((n, delta))) => Some(gen_bound_rhs(rad, args.l, args.rho, n, delta)?),
        _ => None,
    };
    let lower = match (args.gamma, conf) {
        (Some(gamma), Some((n, delta))) => {
            Some(rad_lower_bound(gamma, args.l, args.rho, n, delta)?)
        }
        _ => None,
    };
    let lower_overfit = match (args.epsilon, args.sigma, conf) {
        (Some(eps), Some(sigma), Some((n, delta))) => Some(rad_lower_bound_overfit(
            eps, args.l, args.rho, sigma, n, delta,
        )?),
        _ => None,
    };
    let mut theoretical = std::collections::BTreeMap::new();
    for law in [ScalingLaw::Bubeck, ScalingLaw::Wu] {
        let exponents = theoretical_l(law, 1, 1, args.d);
        let value = args
            .n
            .zip(args.p)
            .map(|(n, p)| theoretical_l(law, n, p, args.d).value);
        theoretical.insert(
            format!("{law:?}").to_lowercase(),
            LawOutput {
                alpha: exponents.alpha,
                beta: exponents.beta,
                value,
            },
        );
    }
    let output = BoundsOutput {
        inputs: BoundsInputs {
            l: args.l,
            rho: args.rho,
            r_hat: args.r_hat,
            n: args.n,
            delta_conf: args.delta_conf,
            expected_rad: args.expected_rad,
            gamma: args.gamma,
            epsilon: args.epsilon,
            sigma: args.sigma,
            d: args.d,
            p: args.p,
        },
        gap_bound: gap_bound(args.l, args.rho, args.r_hat),
        a_rho: a_rho(args.l, args.rho),
        gen_bound_rhs: gen_rhs,
        rad_lower_bound: lower,
        rad_lower_bound_vacuous: lower.map(|v| v < 0.0),
        rad_lower_bound_overfit: lower_overfit,
        rad_lower_bound_overfit_vacuous: lower_overfit.map(|v| v < 0.0),
        theoretical,
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(ExitCode::SUCCESS)
}
