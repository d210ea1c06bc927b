//! Monte Carlo orchestration: sample coupled trajectories, aggregate the
//! expected squared bottleneck distance with Student-t confidence
//! intervals, estimate the convergence rate in the diffusion coefficient,
//! fit the divergence growth curve in time, and run the weak-error study
//! of the reflected Euler scheme.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    sample_initial, simulate_pair, step_stochastic, ParticleEnsemble, Rect, TrajectoryConfig,
};
use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;
use crate::potentials::{ExternalPotential, PotentialKind, PotentialSpec};
use crate::rng::{derive_seed, stream_rng};
use crate::stats::{ols, student_t_quantile};
use crate::transport::bottleneck_w_inf_sq;

/// Time-step selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtRule {
    /// The same step for every diffusion coefficient.
    Fixed { dt: f64 },
    /// `dt = c sqrt(nu)`: refines the grid as the diffusion vanishes so the
    /// discretization bias stays below the quantity being measured.
    SqrtNu { c: f64 },
}

impl DtRule {
    pub fn dt_for(&self, nu: f64) -> f64 {
        match *self {
            DtRule::Fixed { dt } => dt,
            DtRule::SqrtNu { c } => c * nu.sqrt(),
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            DtRule::Fixed { dt } => dt,
            DtRule::SqrtNu { c } => c,
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidPlan(format!(
                "dt rule parameter must be positive, got {v}"
            )));
        }
        Ok(())
    }
}

/// What to do when a single sample trajectory fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPolicy {
    FailFast,
    SkipAndCount,
}

/// Fully resolved Monte Carlo experiment description. Serializes to the
/// flat config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub domain: ConvexDomain,
    pub potential: PotentialKind,
    pub epsilon: f64,
    pub external: ExternalPotential,
    pub n_particles: usize,
    /// Monte Carlo sample count M.
    pub samples: usize,
    /// Diffusion coefficients, sorted strictly descending.
    pub nu_list: Vec<f64>,
    pub dt_rule: DtRule,
    /// Time horizon; snapshots may not exceed it.
    pub horizon: f64,
    /// Sorted strictly ascending; every entry must lie on each step grid.
    pub snapshot_times: Vec<f64>,
    pub init_region: Rect,
    pub master_seed: u64,
    /// Only `nu <= nu_fit_threshold` enters the rate fit.
    pub nu_fit_threshold: f64,
    pub on_error: ErrorPolicy,
}

/// Initial sampling rectangle used by the experiments for a given domain:
/// a box hugging the boundary, scaled to the domain.
pub fn default_init_region(domain: &ConvexDomain) -> Rect {
    match *domain {
        ConvexDomain::HalfPlane { offset, .. } => Rect {
            min: vec![offset, -0.125],
            max: vec![offset + 0.25, 0.125],
        },
        ConvexDomain::Disk { center, radius } => Rect {
            min: vec![center[0] - radius / 4.0, center[1]],
            max: vec![center[0] + radius / 4.0, center[1] + radius / 2.0],
        },
    }
}

/// Diffusion threshold below which the pair-separation floor is invisible
/// and the rate fit is trustworthy.
pub fn default_nu_fit_threshold(domain: &ConvexDomain) -> f64 {
    match domain {
        ConvexDomain::HalfPlane { .. } => 1e-6,
        ConvexDomain::Disk { .. } => 1e-7,
    }
}

impl ExperimentPlan {
    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        PotentialSpec::new(self.potential, self.epsilon, self.external)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let _ = self.potential_spec()?;
        if self.n_particles < 2 {
            return Err(Error::TooFewParticles {
                got: self.n_particles,
                min: 2,
            });
        }
        if self.samples < 2 {
            return Err(Error::TooFewSamples {
                got: self.samples,
                min: 2,
            });
        }
        if self.nu_list.is_empty() {
            return Err(Error::InvalidPlan("nu_list must be nonempty".into()));
        }
        for &nu in &self.nu_list {
            if !(nu > 0.0) || !nu.is_finite() {
                return Err(Error::InvalidPlan(format!(
                    "nu values must be positive, got {nu}"
                )));
            }
        }
        for w in self.nu_list.windows(2) {
            if w[0] <= w[1] {
                return Err(Error::InvalidPlan(
                    "nu_list must be sorted strictly descending".into(),
                ));
            }
        }
        self.dt_rule.validate()?;
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidPlan(format!(
                "horizon must be >= 0, got {}",
                self.horizon
            )));
        }
        if let Some(&last) = self.snapshot_times.last() {
            if last > self.horizon {
                return Err(Error::InvalidPlan(format!(
                    "snapshot time {last} exceeds horizon {}",
                    self.horizon
                )));
            }
        }
        if !(self.nu_fit_threshold > 0.0) {
            return Err(Error::InvalidPlan(
                "nu_fit_threshold must be positive".into(),
            ));
        }
        self.init_region.validate()?;
        if !self
            .domain
            .contains_rect(&self.init_region.min, &self.init_region.max)?
        {
            return Err(Error::RegionOutsideDomain);
        }
        // Grid alignment of snapshots, for every nu.
        for k in 0..self.nu_list.len() {
            self.trajectory_config(k)?.snapshot_steps()?;
        }
        Ok(())
    }

    /// Per-trajectory configuration for the k-th diffusion coefficient.
    pub fn trajectory_config(&self, nu_index: usize) -> Result<TrajectoryConfig> {
        let nu = self.nu_list[nu_index];
        Ok(TrajectoryConfig {
            domain: self.domain.clone(),
            potential: self.potential_spec()?,
            n_particles: self.n_particles,
            nu,
            dt: self.dt_rule.dt_for(nu),
            snapshot_times: self.snapshot_times.clone(),
            init_region: self.init_region.clone(),
        })
    }
}

/// Aggregated statistics for one `(nu, time)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StatCell {
    pub nu: f64,
    pub time: f64,
    pub mean_w_sq: f64,
    /// Two-sided 95% half width, `t_{0.975, M-1} s / sqrt(M)`.
    pub ci_half_width: f64,
    pub samples: usize,
}

/// Per-time statistics, ordered by the plan's nu order and ascending time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatSeries {
    pub cells: Vec<StatCell>,
}

impl StatSeries {
    /// Cells for one diffusion coefficient, in snapshot order.
    pub fn for_nu(&self, nu: f64) -> Vec<&StatCell> {
        self.cells.iter().filter(|c| c.nu == nu).collect()
    }

    /// (nu, mean) pairs at a fixed snapshot time.
    pub fn rate_points(&self, time: f64) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .filter(|c| c.time == time)
            .map(|c| (c.nu, c.mean_w_sq))
            .collect()
    }
}

/// One squared-distance observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub nu: f64,
    pub sample: usize,
    pub time: f64,
    pub w_sq: f64,
}

/// A sample that was skipped under [`ErrorPolicy::SkipAndCount`].
#[derive(Debug, Clone)]
pub struct SkippedSample {
    pub nu: f64,
    pub sample: usize,
    pub reason: String,
}

/// Full experiment output: aggregated series plus raw per-sample records.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub stats: StatSeries,
    pub raw: Vec<SampleRecord>,
    pub skipped: Vec<SkippedSample>,
}

fn build_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))
}

/// Squared bottleneck distances of one sample trajectory at every snapshot.
fn run_sample(plan: &ExperimentPlan, nu_index: usize, sample: usize) -> Result<Vec<f64>> {
    let cfg = plan.trajectory_config(nu_index)?;
    let seed = derive_seed(plan.master_seed, nu_index as u64, sample as u64);
    let snaps = simulate_pair(&cfg, seed)?;
    snaps
        .iter()
        .map(|s| {
            Ok(bottleneck_w_inf_sq(
                s.diffusive.coords(),
                s.deterministic.coords(),
                s.diffusive.dim(),
            )?
            .bottleneck_sq)
        })
        .collect()
}

/// Run the full Monte Carlo experiment.
///
/// Sample trajectories are independent and run concurrently on a dedicated
/// pool (`threads = None` uses the hardware default). Results are reduced
/// in `(nu_index, sample)` order, so the output is identical for any
/// worker count.
pub fn run_experiment(plan: &ExperimentPlan, threads: Option<usize>) -> Result<ExperimentOutput> {
    plan.validate()?;
    let pool = build_pool(threads)?;
    let n_nu = plan.nu_list.len();
    let m = plan.samples;
    let tasks: Vec<(usize, usize)> = (0..n_nu)
        .flat_map(|k| (0..m).map(move |s| (k, s)))
        .collect();
    let results: Vec<Result<Vec<f64>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(k, s)| run_sample(plan, k, s))
            .collect()
    });

    let mut output = ExperimentOutput::default();
    let mut results_iter = results.into_iter();
    for &nu in &plan.nu_list {
        // Gather successes in sample order.
        let mut per_time: Vec<Vec<f64>> = vec![Vec::new(); plan.snapshot_times.len()];
        for s in 0..m {
            match results_iter.next().expect("one result per task") {
                Ok(w) => {
                    for (t_idx, &w_sq) in w.iter().enumerate() {
                        per_time[t_idx].push(w_sq);
                        output.raw.push(SampleRecord {
                            nu,
                            sample: s,
                            time: plan.snapshot_times[t_idx],
                            w_sq,
                        });
                    }
                }
                Err(e) => match plan.on_error {
                    ErrorPolicy::FailFast => {
                        return Err(Error::SampleFailed {
                            nu,
                            sample: s,
                            source: Box::new(e),
                        });
                    }
                    ErrorPolicy::SkipAndCount => {
                        output.skipped.push(SkippedSample {
                            nu,
                            sample: s,
                            reason: e.to_string(),
                        });
                    }
                },
            }
        }
        for (t_idx, values) in per_time.iter().enumerate() {
            let (mean, half_width) = confidence_interval(values, 0.95)?;
            output.stats.cells.push(StatCell {
                nu,
                time: plan.snapshot_times[t_idx],
                mean_w_sq: mean,
                ci_half_width: half_width,
                samples: values.len(),
            });
        }
    }
    Ok(output)
}

/// Sample mean and two-sided Student-t confidence half width at `level`.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::TooFewSamples { got: m, min: 2 });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidFitInput(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let mf = m as f64;
    let mean = samples.iter().sum::<f64>() / mf;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (mf - 1.0);
    let q = student_t_quantile(0.5 + 0.5 * level, mf - 1.0)?;
    Ok((mean, q * var.sqrt() / mf.sqrt()))
}

/// Power-law fit `mean = exp(intercept) nu^p` from OLS in log-log space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub p: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Number of admissible points entering the fit.
    pub points: usize,
}

/// Nonlinear fit of the growth curve `y(t) = a t (1 + b t exp(b t))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthFit {
    pub a: f64,
    pub b: f64,
    #[serde(rename = "residual")]
    pub residual_sum_sq: f64,
    /// False when the refinement stopped at the iteration cap; the returned
    /// parameters are then the best grid/descent point seen.
    pub refined: bool,
}

/// Either fit, for serialization keyed by kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitResult {
    PowerLaw(RateFit),
    Growth(GrowthFit),
}

/// OLS of `ln mean` on `ln nu` over the points with `nu <= nu_threshold`.
/// All admissible means must be positive.
pub fn fit_rate(points: &[(f64, f64)], nu_threshold: f64) -> Result<RateFit> {
    let admissible: Vec<&(f64, f64)> = points.iter().filter(|(nu, _)| *nu <= nu_threshold).collect();
    for &&(nu, mean) in &admissible {
        if !(mean > 0.0) {
            return Err(Error::NonpositiveMean { nu, value: mean });
        }
    }
    if admissible.len() < 2 {
        return Err(Error::TooFewFitPoints {
            got: admissible.len(),
        });
    }
    let xs: Vec<f64> = admissible.iter().map(|(nu, _)| nu.ln()).collect();
    let ys: Vec<f64> = admissible.iter().map(|(_, mean)| mean.ln()).collect();
    let (slope, intercept, r2, stderr) = ols(&xs, &ys)?;
    Ok(RateFit {
        p: slope,
        stderr,
        intercept,
        r2,
        points: admissible.len(),
    })
}

#[inline]
fn growth_basis(b: f64, t: f64) -> f64 {
    t * (1.0 + b * t * (b * t).exp())
}

fn growth_rss(times: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    times
        .iter()
        .zip(ys)
        .map(|(&t, &y)| {
            let r = y - a * growth_basis(b, t);
            r * r
        })
        .sum()
}

/// For fixed b the model is linear in a; the non-negative optimum is closed
/// form.
fn growth_best_a(times: &[f64], ys: &[f64], b: f64) -> f64 {
    let mut syf = 0.0;
    let mut sff = 0.0;
    for (&t, &y) in times.iter().zip(ys) {
        let f = growth_basis(b, t);
        syf += y * f;
        sff += f * f;
    }
    if sff == 0.0 || !sff.is_finite() {
        0.0
    } else {
        (syf / sff).max(0.0)
    }
}

/// Fit `y(t) = a t (1 + b t exp(b t))` over `a >= 0`, `b` real.
///
/// Strategy: coarse grid over `b` in `[0, b_grid_max]` with `a` solved in
/// closed form, then damped Gauss-Newton refinement of `(a, b)`. When the
/// refinement hits the iteration cap, the best point seen is returned with
/// `refined = false`.
pub fn fit_growth(times: &[f64], ys: &[f64], b_grid_max: f64) -> Result<GrowthFit> {
    if times.len() != ys.len() || times.len() < 3 {
        return Err(Error::InvalidFitInput(format!(
            "growth fit needs >= 3 paired points, got {} and {}",
            times.len(),
            ys.len()
        )));
    }
    if times.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidFitInput(
            "growth fit times must be positive".into(),
        ));
    }
    if !(b_grid_max >= 0.0) || !b_grid_max.is_finite() {
        return Err(Error::InvalidFitInput(format!(
            "b_grid_max must be >= 0, got {b_grid_max}"
        )));
    }
    if ys.iter().all(|&y| y == 0.0) {
        return Ok(GrowthFit {
            a: 0.0,
            b: 0.0,
            residual_sum_sq: 0.0,
            refined: true,
        });
    }

    // Coarse grid.
    const GRID: usize = 512;
    let mut best = (f64::INFINITY, 0.0, 0.0); // (rss, a, b)
    for i in 0..=GRID {
        let b = b_grid_max * i as f64 / GRID as f64;
        let a = growth_best_a(times, ys, b);
        let rss = growth_rss(times, ys, a, b);
        if rss < best.0 {
            best = (rss, a, b);
        }
    }
    let (mut rss, mut a, mut b) = best;

    // Damped Gauss-Newton on (a, b).
    let mut damping = 1e-3;
    let mut refined = false;
    'outer: for _ in 0..200 {
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for (&t, &y) in times.iter().zip(ys) {
            let ebt = (b * t).exp();
            let f = t * (1.0 + b * t * ebt);
            let dfdb = t * t * ebt * (1.0 + b * t);
            let r = y - a * f;
            let ja = -f;
            let jb = -a * dfdb;
            jtj[0][0] += ja * ja;
            jtj[0][1] += ja * jb;
            jtj[1][1] += jb * jb;
            jtr[0] += ja * r;
            jtr[1] += jb * r;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let a00 = jtj[0][0] * (1.0 + damping);
            let a11 = jtj[1][1] * (1.0 + damping);
            let a01 = jtj[0][1];
            let det = a00 * a11 - a01 * a01;
            if det == 0.0 || !det.is_finite() {
                damping *= 10.0;
                continue;
            }
            let da = (-jtr[0] * a11 + jtr[1] * a01) / det;
            let db = (-jtr[1] * a00 + jtr[0] * a01) / det;
            let a_new = (a + da).max(0.0);
            let b_new = b + db;
            let rss_new = growth_rss(times, ys, a_new, b_new);
            if rss_new.is_finite() && rss_new <= rss {
                let step = (da.abs() / (1.0 + a.abs())).max(db.abs() / (1.0 + b.abs()));
                a = a_new;
                b = b_new;
                let done = step < 1e-12 || rss_new <= 1e-30 * rss.max(1.0) || rss - rss_new <= 1e-16 * rss;
                rss = rss_new;
                damping = (damping * 0.3).max(1e-12);
                if done {
                    refined = true;
                    break 'outer;
                }
                accepted = true;
                break;
            }
            damping *= 10.0;
            if damping > 1e14 {
                // Stuck in a flat region: treat the current point as final.
                refined = true;
                break 'outer;
            }
        }
        if !accepted && !refined {
            refined = true;
            break;
        }
    }

    Ok(GrowthFit {
        a,
        b,
        residual_sum_sq: rss,
        refined,
    })
}

/// Cells whose lower confidence bound exceeds the theoretical envelope.
pub fn envelope_violations<'a>(
    stats: &'a StatSeries,
    spec: &PotentialSpec,
    dim: usize,
) -> Vec<&'a StatCell> {
    stats
        .cells
        .iter()
        .filter(|c| c.mean_w_sq - c.ci_half_width > spec.theorem_envelope(dim, c.nu, c.time))
        .collect()
}

/// Weak-error study configuration: the diffusive scheme alone, compared
/// across step sizes against a shared fine-grid solution.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakErrorStudy {
    pub domain: ConvexDomain,
    pub potential: PotentialSpec,
    pub nu: f64,
    pub n_particles: usize,
    pub horizon: f64,
    /// Coarse steps; each must be an integer multiple of `fine_dt`.
    pub dt_list: Vec<f64>,
    pub fine_dt: f64,
    pub samples: usize,
    pub init_region: Rect,
    pub master_seed: u64,
}

/// One row of the weak-error table.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakErrorPoint {
    pub dt: f64,
    pub mean_g: f64,
    pub weak_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakErrorOutput {
    pub points: Vec<WeakErrorPoint>,
    pub fine_mean_g: f64,
    pub fit: RateFit,
}

/// Mean squared radius: the test functional whose expectation is compared
/// across step sizes.
fn mean_sq_norm(ensemble: &ParticleEnsemble) -> f64 {
    let d = ensemble.dim();
    ensemble
        .coords()
        .chunks(d)
        .map(|p| p.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / ensemble.len() as f64
}

impl WeakErrorStudy {
    fn validate(&self) -> Result<(u64, Vec<usize>)> {
        if !(self.fine_dt > 0.0) || !self.fine_dt.is_finite() {
            return Err(Error::InvalidPlan("fine_dt must be positive".into()));
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(Error::InvalidPlan("nu must be >= 0".into()));
        }
        if self.samples == 0 {
            return Err(Error::TooFewSamples { got: 0, min: 1 });
        }
        if self.dt_list.is_empty() {
            return Err(Error::InvalidPlan("dt_list must be nonempty".into()));
        }
        let fine_steps = self.horizon / self.fine_dt;
        let fine_steps_rounded = fine_steps.round();
        if (fine_steps - fine_steps_rounded).abs() > 1e-9 * fine_steps.max(1.0) {
            return Err(Error::SnapshotOffGrid {
                time: self.horizon,
                dt: self.fine_dt,
            });
        }
        let mut ratios = Vec::with_capacity(self.dt_list.len());
        for &dt in &self.dt_list {
            let ratio = dt / self.fine_dt;
            let rounded = ratio.round();
            if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
                return Err(Error::InvalidPlan(format!(
                    "dt {dt} is not an integer multiple of fine_dt {}",
                    self.fine_dt
                )));
            }
            let r = rounded as usize;
            if !(fine_steps_rounded as u64).is_multiple_of(r as u64) {
                return Err(Error::InvalidPlan(format!(
                    "dt {dt} does not divide the horizon grid"
                )));
            }
            ratios.push(r);
        }
        Ok((fine_steps_rounded as u64, ratios))
    }
}

/// Estimate the weak error `|E g(X^dt) - E g(X^fine)|` per coarse step and
/// fit its log-log slope against dt.
///
/// All step sizes consume the same underlying Brownian increments: a coarse
/// step aggregates the fine Gaussian block, which couples the estimators
/// and makes the `dt = fine_dt` error exactly zero. Initial positions are
/// drawn once and shared by every sample.
pub fn weak_error_study(study: &WeakErrorStudy, threads: Option<usize>) -> Result<WeakErrorOutput> {
    let (fine_steps, ratios) = study.validate()?;
    let initial = sample_initial(
        &study.domain,
        &study.init_region,
        study.n_particles,
        derive_seed(study.master_seed, u64::MAX, u64::MAX),
    )?;
    let n = study.n_particles;
    let d = study.domain.dim();
    let pool = build_pool(threads)?;

    // Per sample: g at the horizon for each coarse dt, fine last.
    let per_sample: Vec<Result<Vec<f64>>> = pool.install(|| {
        (0..study.samples)
            .into_par_iter()
            .map(|m| {
                let mut rng = stream_rng(derive_seed(study.master_seed, u64::MAX, m as u64));
                let block = n * d;
                let mut fine_noise = vec![0.0; fine_steps as usize * block];
                for v in fine_noise.iter_mut() {
                    *v = rng.sample::<f64, _>(StandardNormal);
                }
                let mut out = Vec::with_capacity(ratios.len() + 1);
                let mut coarse = vec![0.0; block];
                for (&dt, &ratio) in study.dt_list.iter().zip(&ratios).chain(
                    std::iter::once((&study.fine_dt, &1usize)),
                ) {
                    let mut ens = initial.clone();
                    let steps = fine_steps as usize / ratio;
                    let inv_sqrt_ratio = 1.0 / (ratio as f64).sqrt();
                    for step in 0..steps {
                        // Aggregate the fine Gaussians of this window into one
                        // standard Gaussian block for the coarse step.
                        for v in coarse.iter_mut() {
                            *v = 0.0;
                        }
                        for sub in 0..ratio {
                            let base = (step * ratio + sub) * block;
                            for (c, &xi) in coarse.iter_mut().zip(&fine_noise[base..base + block]) {
                                *c += xi;
                            }
                        }
                        for c in coarse.iter_mut() {
                            *c *= inv_sqrt_ratio;
                        }
                        ens = step_stochastic(
                            &ens,
                            &study.potential,
                            &study.domain,
                            study.nu,
                            dt,
                            &coarse,
                        )?;
                    }
                    out.push(mean_sq_norm(&ens));
                }
                Ok(out)
            })
            .collect()
    });

    let mut sums = vec![0.0; study.dt_list.len() + 1];
    for (m, res) in per_sample.iter().enumerate() {
        match res {
            Ok(gs) => {
                for (acc, g) in sums.iter_mut().zip(gs) {
                    *acc += g;
                }
            }
            Err(e) => {
                return Err(Error::SampleFailed {
                    nu: study.nu,
                    sample: m,
                    source: Box::new(Error::InvalidPlan(e.to_string())),
                });
            }
        }
    }
    let inv_m = 1.0 / study.samples as f64;
    let fine_mean_g = sums[study.dt_list.len()] * inv_m;
    let points: Vec<WeakErrorPoint> = study
        .dt_list
        .iter()
        .enumerate()
        .map(|(i, &dt)| {
            let mean_g = sums[i] * inv_m;
            WeakErrorPoint {
                dt,
                mean_g,
                weak_error: (mean_g - fine_mean_g).abs(),
            }
        })
        .collect();
    let fit = fit_rate(
        &points
            .iter()
            .map(|p| (p.dt, p.weak_error))
            .collect::<Vec<_>>(),
        f64::INFINITY,
    )?;
    Ok(WeakErrorOutput {
        points,
        fine_mean_g,
        fit,
    })
}
