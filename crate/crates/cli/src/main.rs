//! `zdlab`: coupled stochastic/deterministic particle systems in convex
//! domains, with exact bottleneck-distance studies.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use zdlab::config::{
    load_plan_file, parse_scaled_f64, resolve_plan, resolve_weak_error, threads_from_env,
    CommandDefaults, PlanFile, PlanOverrides, Profile,
};
use zdlab::output::{
    self, emit_files, fmt_f64, read_point_cloud, to_json, weak_error_csv, FitsDoc, RunManifest,
};
use zdlab_core::{
    bottleneck_w_inf_sq, envelope_violations, fit_growth, fit_rate, rng::derive_seed,
    run_experiment, simulate_pair, weak_error_study, ConvexDomain, ExperimentPlan, FitResult,
    PotentialKind,
};

#[derive(Parser)]
#[command(
    name = "zdlab",
    version,
    about = "Coupled particle systems in convex domains: convergence, growth, weak-error and transport-distance studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo study of E[W_inf^2] against the diffusion coefficient
    Convergence(ConvergenceArgs),
    /// Divergence-in-time study at fixed diffusion, with the growth-curve fit
    Growth(GrowthArgs),
    /// Weak-error study of the reflected Euler scheme against a fine grid
    WeakError(WeakErrorArgs),
    /// Run one coupled trajectory and dump particle snapshots
    Simulate(SimulateArgs),
    /// Exact squared bottleneck distance between two point-cloud CSVs
    Wasserstein(WassersteinArgs),
}

fn parse_domain(s: &str) -> std::result::Result<ConvexDomain, String> {
    match s {
        "half_plane" => Ok(ConvexDomain::half_plane()),
        "disk" => Ok(ConvexDomain::Disk {
            center: [0.0, 0.0],
            radius: 0.2,
        }),
        other => Err(format!(
            "unknown domain '{other}' (use half_plane or disk; customize geometry in the config file)"
        )),
    }
}

fn parse_potential(s: &str) -> std::result::Result<PotentialKind, String> {
    match s {
        "K2" | "k2" => Ok(PotentialKind::K2),
        "K32" | "k32" => Ok(PotentialKind::K32),
        other => Err(format!("unknown potential '{other}' (use K2 or K32)")),
    }
}

#[derive(Args)]
struct SharedArgs {
    /// TOML config file; flags override file keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Built-in study size (particles and sample count)
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
    /// Domain override: half_plane or disk
    #[arg(long, value_parser = parse_domain)]
    domain: Option<ConvexDomain>,
    /// Interaction potential override: K2 or K32
    #[arg(long, value_parser = parse_potential)]
    potential: Option<PotentialKind>,
    #[arg(long)]
    n_particles: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Comma-separated diffusion coefficients; accepts 2^-k
    #[arg(long, value_delimiter = ',', value_parser = parse_scaled_f64)]
    nu_list: Option<Vec<f64>>,
    /// Comma-separated snapshot times; accepts 2^-k
    #[arg(long, value_delimiter = ',', value_parser = parse_scaled_f64)]
    snapshot_times: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_scaled_f64)]
    horizon: Option<f64>,
    /// Fixed time step (replaces the sqrt-nu rule)
    #[arg(long, value_parser = parse_scaled_f64)]
    dt: Option<f64>,
    /// Scale c of the dt = c sqrt(nu) rule
    #[arg(long, value_parser = parse_scaled_f64)]
    sqrt_nu_c: Option<f64>,
    /// Assert the study's acceptance conditions; exit code 2 on violation
    #[arg(long)]
    check: bool,
}

impl SharedArgs {
    fn plan(&self, defaults: &CommandDefaults, nu_single: Option<f64>) -> Result<ExperimentPlan> {
        let file = match &self.config {
            Some(path) => load_plan_file(path)?,
            None => PlanFile::default(),
        };
        let overrides = PlanOverrides {
            domain: self.domain.clone(),
            potential: self.potential,
            n_particles: self.n_particles,
            samples: self.samples,
            nu_list: nu_single.map(|v| vec![v]).or_else(|| self.nu_list.clone()),
            dt_fixed: self.dt,
            sqrt_nu_c: self.sqrt_nu_c,
            horizon: self.horizon,
            snapshot_times: self.snapshot_times.clone(),
            master_seed: self.seed,
        };
        resolve_plan(&file, &overrides, self.profile, defaults)
    }
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    shared: SharedArgs,
    /// Snapshot time at which the rate is fitted (must be a snapshot time)
    #[arg(long, value_parser = parse_scaled_f64)]
    fit_time: Option<f64>,
}

#[derive(Args)]
struct GrowthArgs {
    #[command(flatten)]
    shared: SharedArgs,
    /// Single diffusion coefficient for the study; accepts 2^-k
    #[arg(long, value_parser = parse_scaled_f64)]
    nu: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    shared: SharedArgs,
    /// Diffusion coefficient of the dumped trajectory; accepts 2^-k
    #[arg(long, value_parser = parse_scaled_f64)]
    nu: Option<f64>,
}

#[derive(Args)]
struct WeakErrorArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_domain)]
    domain: Option<ConvexDomain>,
    #[arg(long, value_parser = parse_potential)]
    potential: Option<PotentialKind>,
    #[arg(long, value_parser = parse_scaled_f64)]
    epsilon: Option<f64>,
    #[arg(long, value_parser = parse_scaled_f64)]
    nu: Option<f64>,
    #[arg(long)]
    n_particles: Option<usize>,
    /// Monte Carlo samples of the Brownian path
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_parser = parse_scaled_f64)]
    horizon: Option<f64>,
    /// Comma-separated coarse steps; accepts 2^-k
    #[arg(long, value_delimiter = ',', value_parser = parse_scaled_f64)]
    dt_list: Option<Vec<f64>>,
    /// Reference fine step; accepts 2^-k
    #[arg(long, value_parser = parse_scaled_f64)]
    fine_dt: Option<f64>,
    /// Assert slope in [0.7, 1.3]; exit code 2 on violation
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct WassersteinArgs {
    /// First point cloud (CSV: particle_id,x1,...,xd)
    a: PathBuf,
    /// Second point cloud, same size and dimension
    b: PathBuf,
}

fn pick_fit_time(plan: &ExperimentPlan, requested: Option<f64>) -> Result<f64> {
    let candidate = match requested {
        Some(t) => t,
        None if plan.snapshot_times.contains(&0.25) => 0.25,
        None => *plan.snapshot_times.last().expect("validated nonempty"),
    };
    if !plan.snapshot_times.contains(&candidate) {
        bail!(
            "--fit-time {candidate} is not a snapshot time of this plan ({:?})",
            plan.snapshot_times
        );
    }
    Ok(candidate)
}

fn run_convergence(args: &ConvergenceArgs) -> Result<ExitCode> {
    let plan = args.shared.plan(&CommandDefaults::convergence(), None)?;
    let started = chrono::Utc::now().to_rfc3339();
    eprintln!(
        "convergence: {} nu values x {} samples, N = {}",
        plan.nu_list.len(),
        plan.samples,
        plan.n_particles
    );
    let out = run_experiment(&plan, threads_from_env())?;
    let fit_time = pick_fit_time(&plan, args.fit_time)?;
    let fit = match fit_rate(&out.stats.rate_points(fit_time), plan.nu_fit_threshold) {
        Ok(fit) => {
            println!(
                "rate fit at t = {}: p = {:.4} (stderr {:.4}), r^2 = {:.6}, {} points",
                fit_time, fit.p, fit.stderr, fit.r2, fit.points
            );
            Some(fit)
        }
        Err(e) => {
            eprintln!("warning: rate fit skipped: {e} (nu_fit_threshold = {})", plan.nu_fit_threshold);
            None
        }
    };
    let fits: Vec<FitResult> = fit.iter().cloned().map(FitResult::PowerLaw).collect();
    output::emit_results(
        &args.shared.out,
        "convergence",
        &plan,
        &out.stats,
        &out.raw,
        &fits,
        started,
    )?;
    println!("wrote stats.csv, samples.csv, fit.json, manifest.json to {}", args.shared.out.display());

    if args.shared.check {
        let mut failures = Vec::new();
        if !out.skipped.is_empty() {
            failures.push(format!("{} samples skipped", out.skipped.len()));
        }
        let spec = plan.potential_spec()?;
        for cell in envelope_violations(&out.stats, &spec, plan.domain.dim()) {
            failures.push(format!(
                "envelope violated at nu = {}, t = {}: mean - ci = {} > {}",
                cell.nu,
                cell.time,
                cell.mean_w_sq - cell.ci_half_width,
                spec.theorem_envelope(plan.domain.dim(), cell.nu, cell.time)
            ));
        }
        match &fit {
            Some(fit) => {
                if !(0.8..=1.2).contains(&fit.p) {
                    failures.push(format!("fitted rate p = {} outside [0.8, 1.2]", fit.p));
                }
                if fit.r2 < 0.98 {
                    failures.push(format!("fit r^2 = {} below 0.98", fit.r2));
                }
            }
            None => failures.push("rate fit could not be computed".into()),
        }
        return finish_check(failures);
    }
    Ok(ExitCode::SUCCESS)
}

fn run_growth(args: &GrowthArgs) -> Result<ExitCode> {
    let plan = args.shared.plan(&CommandDefaults::growth(), args.nu)?;
    let started = chrono::Utc::now().to_rfc3339();
    let nu = plan.nu_list[0];
    eprintln!(
        "growth: nu = {nu:e}, {} samples, N = {}, {} snapshot times",
        plan.samples,
        plan.n_particles,
        plan.snapshot_times.len()
    );
    let out = run_experiment(&plan, threads_from_env())?;
    let cells: Vec<_> = out
        .stats
        .for_nu(nu)
        .into_iter()
        .filter(|c| c.time > 0.0)
        .map(|c| (c.time, c.mean_w_sq))
        .collect();
    let times: Vec<f64> = cells.iter().map(|&(t, _)| t).collect();
    let means: Vec<f64> = cells.iter().map(|&(_, y)| y).collect();
    let spec = plan.potential_spec()?;
    let b_max = -2.0 * spec.lambda_k_minus;
    let fit = fit_growth(&times, &means, b_max)?;
    let sum_sq: f64 = means.iter().map(|y| y * y).sum();
    let rel_residual = if sum_sq > 0.0 {
        fit.residual_sum_sq / sum_sq
    } else {
        0.0
    };
    println!(
        "growth fit: a = {:e}, b = {:.4}, residual = {:e} (relative {:e}), refined = {}",
        fit.a, fit.b, fit.residual_sum_sq, rel_residual, fit.refined
    );
    output::emit_results(
        &args.shared.out,
        "growth",
        &plan,
        &out.stats,
        &out.raw,
        &[FitResult::Growth(fit.clone())],
        started,
    )?;
    println!("wrote stats.csv, samples.csv, fit.json, manifest.json to {}", args.shared.out.display());

    if args.shared.check {
        let mut failures = Vec::new();
        if rel_residual > 1e-2 {
            failures.push(format!("relative residual {rel_residual:e} above 1e-2"));
        }
        if !(fit.b > 0.0 && fit.b <= b_max) {
            failures.push(format!("fitted b = {} outside (0, {b_max:.3}]", fit.b));
        }
        return finish_check(failures);
    }
    Ok(ExitCode::SUCCESS)
}

fn run_weak_error(args: &WeakErrorArgs) -> Result<ExitCode> {
    let study = resolve_weak_error(
        args.domain.clone(),
        args.potential,
        args.epsilon,
        args.nu,
        args.n_particles,
        args.samples,
        args.horizon,
        args.dt_list.clone(),
        args.fine_dt,
        args.seed,
    )?;
    let started = chrono::Utc::now().to_rfc3339();
    eprintln!(
        "weak-error: nu = {}, N = {}, {} step sizes vs fine dt = {:e}, {} samples",
        study.nu,
        study.n_particles,
        study.dt_list.len(),
        study.fine_dt,
        study.samples
    );
    let result = weak_error_study(&study, threads_from_env())?;
    println!(
        "weak-error slope: p = {:.4} (stderr {:.4}), r^2 = {:.6}",
        result.fit.p, result.fit.stderr, result.fit.r2
    );
    let files = [
        ("weak_error.csv", weak_error_csv(&result)),
        (
            "fit.json",
            format!(
                "{}\n",
                to_json(&FitsDoc::from_fits(&[FitResult::PowerLaw(result.fit.clone())]))?
            ),
        ),
    ];
    let digests = emit_files(&args.out, &files)?;
    let plan_json = serde_json::json!({
        "domain": study.domain,
        "potential": study.potential.kind,
        "epsilon": study.potential.epsilon,
        "nu": study.nu,
        "n_particles": study.n_particles,
        "horizon": study.horizon,
        "dt_list": study.dt_list,
        "fine_dt": study.fine_dt,
        "samples": study.samples,
        "init_region": study.init_region,
        "master_seed": study.master_seed,
    });
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "weak-error",
        master_seed: study.master_seed,
        plan: plan_json,
        started_at: started,
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs: digests,
    };
    output::atomic_write(
        &args.out.join("manifest.json"),
        format!("{}\n", to_json(&manifest)?).as_bytes(),
    )?;
    println!("wrote weak_error.csv, fit.json, manifest.json to {}", args.out.display());

    if args.check {
        let mut failures = Vec::new();
        if !(0.7..=1.3).contains(&result.fit.p) {
            failures.push(format!("weak-error slope {} outside [0.7, 1.3]", result.fit.p));
        }
        return finish_check(failures);
    }
    Ok(ExitCode::SUCCESS)
}

fn run_simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let plan = args.shared.plan(&CommandDefaults::simulate(), args.nu)?;
    let started = chrono::Utc::now().to_rfc3339();
    let cfg = plan.trajectory_config(0)?;
    eprintln!(
        "simulate: nu = {:e}, dt = {:e}, N = {}, {} snapshots",
        cfg.nu,
        cfg.dt,
        cfg.n_particles,
        cfg.snapshot_times.len()
    );
    let seed = derive_seed(plan.master_seed, 0, 0);
    let snapshots = simulate_pair(&cfg, seed)?;
    let files = [("snapshots.csv", output::snapshots_csv(&snapshots, 0))];
    let digests = emit_files(&args.shared.out, &files)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "simulate",
        master_seed: plan.master_seed,
        plan: serde_json::to_value(&plan).context("plan to JSON")?,
        started_at: started,
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs: digests,
    };
    output::atomic_write(
        &args.shared.out.join("manifest.json"),
        format!("{}\n", to_json(&manifest)?).as_bytes(),
    )?;
    println!("wrote snapshots.csv, manifest.json to {}", args.shared.out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_wasserstein(args: &WassersteinArgs) -> Result<ExitCode> {
    let (xs, dx) = read_point_cloud(&args.a)?;
    let (ys, dy) = read_point_cloud(&args.b)?;
    if dx != dy {
        bail!("dimension mismatch: {} vs {}", dx, dy);
    }
    let result = bottleneck_w_inf_sq(&xs, &ys, dx)?;
    println!("{{\"w_inf_sq\":{}}}", fmt_f64(result.bottleneck_sq));
    Ok(ExitCode::SUCCESS)
}

fn finish_check(failures: Vec<String>) -> Result<ExitCode> {
    if failures.is_empty() {
        println!("check: all assertions hold");
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &failures {
            eprintln!("check failed: {f}");
        }
        Ok(ExitCode::from(2))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Convergence(args) => run_convergence(args),
        Command::Growth(args) => run_growth(args),
        Command::WeakError(args) => run_weak_error(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Wasserstein(args) => run_wasserstein(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
