//! Coupled stochastic (reflected) and deterministic (projected) N-particle
//! systems advanced in lockstep from shared initial data.
//!
//! One explicit Euler step of the diffusive system is
//!
//! ```text
//! x_i <- R( x_i + dt * drift_i + sqrt(2 nu dt) * xi_i ),   xi_i ~ N(0, I_d)
//! ```
//!
//! with `R` the mirror reflection of [`crate::geometry::ConvexDomain`]; the
//! non-diffusive system replaces the reflection with the closest-point
//! endpoint projection and carries no noise. Both share the drift
//!
//! ```text
//! drift_i = -( 1/(N-1) sum_{k != i} grad K(x_i - x_k) + grad V(x_i) ).
//! ```
//!
//! The pairwise sum is accumulated over ordered pairs `(i, k)`, `i < k`,
//! exploiting the antisymmetry of `grad K`. The order is fixed, so a
//! trajectory is bit-reproducible regardless of how many trajectories run
//! concurrently. The per-particle [`drift`] evaluates the textbook
//! ascending-index sum; it agrees with the batched kernel up to
//! floating-point reassociation.

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;
use crate::potentials::{ExternalPotential, PairKernel, PotentialSpec};
use crate::rng::stream_rng;

/// Positions of N particles in R^d at a time stamp; the support of the
/// empirical measure.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    coords: Vec<f64>,
    dim: usize,
    time: f64,
}

impl ParticleEnsemble {
    /// Wrap a flat row-major coordinate buffer (`n * dim` values).
    pub fn new(coords: Vec<f64>, dim: usize, time: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coords.len() % dim,
            });
        }
        if coords.is_empty() {
            return Err(Error::TooFewParticles { got: 0, min: 1 });
        }
        Ok(ParticleEnsemble { coords, dim, time })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Flat row-major coordinates.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

/// Axis-aligned sampling rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Rect {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        let r = Rect { min, max };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.len() != self.max.len() || self.min.is_empty() {
            return Err(Error::InvalidRegion(format!(
                "min/max lengths {} and {} must match and be nonzero",
                self.min.len(),
                self.max.len()
            )));
        }
        for (lo, hi) in self.min.iter().zip(&self.max) {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidRegion(format!(
                    "invalid interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }
}

/// N i.i.d. uniform draws from `region`, which must be contained in the
/// domain. Deterministic in `seed`.
pub fn sample_initial(
    domain: &ConvexDomain,
    region: &Rect,
    n: usize,
    seed: u64,
) -> Result<ParticleEnsemble> {
    let mut rng = stream_rng(seed);
    sample_initial_with_rng(domain, region, n, &mut rng)
}

/// Uniform draw consuming the caller's stream: coordinates are drawn
/// particle-major, axis-minor.
pub fn sample_initial_with_rng(
    domain: &ConvexDomain,
    region: &Rect,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ParticleEnsemble> {
    region.validate()?;
    if region.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: region.dim(),
        });
    }
    if !domain.contains_rect(&region.min, &region.max)? {
        return Err(Error::RegionOutsideDomain);
    }
    if n == 0 {
        return Err(Error::TooFewParticles { got: 0, min: 1 });
    }
    let dists: Vec<Uniform<f64>> = region
        .min
        .iter()
        .zip(&region.max)
        .map(|(&lo, &hi)| {
            Uniform::new_inclusive(lo, hi)
                .map_err(|e| Error::InvalidRegion(format!("uniform on [{lo}, {hi}]: {e}")))
        })
        .collect::<Result<_>>()?;
    let d = region.dim();
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        for dist in &dists {
            coords.push(dist.sample(rng));
        }
    }
    ParticleEnsemble::new(coords, d, 0.0)
}

/// Pairwise interaction forces accumulated over ordered pairs, using
/// `grad K(-x) = -grad K(x)`.
fn pair_accumulate_2d(pos: &[f64], n: usize, kernel: &PairKernel, acc: &mut [f64]) {
    for i in 0..n {
        let xi = pos[2 * i];
        let yi = pos[2 * i + 1];
        let mut fx = 0.0;
        let mut fy = 0.0;
        for k in (i + 1)..n {
            let dx = xi - pos[2 * k];
            let dy = yi - pos[2 * k + 1];
            let f = kernel.factor(dx * dx + dy * dy);
            let gx = f * dx;
            let gy = f * dy;
            fx += gx;
            fy += gy;
            acc[2 * k] -= gx;
            acc[2 * k + 1] -= gy;
        }
        acc[2 * i] += fx;
        acc[2 * i + 1] += fy;
    }
}

fn pair_accumulate_nd(pos: &[f64], n: usize, d: usize, kernel: &PairKernel, acc: &mut [f64]) {
    let mut diff = vec![0.0; d];
    for i in 0..n {
        for k in (i + 1)..n {
            let mut r2 = 0.0;
            for j in 0..d {
                let v = pos[i * d + j] - pos[k * d + j];
                diff[j] = v;
                r2 += v * v;
            }
            let f = kernel.factor(r2);
            for j in 0..d {
                let g = f * diff[j];
                acc[i * d + j] += g;
                acc[k * d + j] -= g;
            }
        }
    }
}

/// Drift of every particle: `-(1/(N-1) sum_{k != i} grad K(x_i - x_k) +
/// grad V(x_i))`, flattened row-major. A singleton ensemble has an empty
/// pair sum.
pub fn drift_all(ensemble: &ParticleEnsemble, spec: &PotentialSpec) -> Vec<f64> {
    let n = ensemble.len();
    let d = ensemble.dim();
    let pos = ensemble.coords();
    let mut acc = vec![0.0; n * d];
    let kernel = spec.pair_kernel();
    if d == 2 {
        pair_accumulate_2d(pos, n, &kernel, &mut acc);
    } else {
        pair_accumulate_nd(pos, n, d, &kernel, &mut acc);
    }
    let scale = if n > 1 { -1.0 / (n as f64 - 1.0) } else { 0.0 };
    for v in acc.iter_mut() {
        *v *= scale;
    }
    match spec.external {
        // grad V = 0: nothing to subtract.
        ExternalPotential::Zero => {}
    }
    acc
}

/// Drift of particle `i` alone, summing over partners in ascending index
/// order.
pub fn drift(ensemble: &ParticleEnsemble, spec: &PotentialSpec, i: usize) -> Vec<f64> {
    let n = ensemble.len();
    let d = ensemble.dim();
    let xi = ensemble.position(i);
    let mut sum = vec![0.0; d];
    let mut diff = vec![0.0; d];
    for k in 0..n {
        if k == i {
            continue;
        }
        let xk = ensemble.position(k);
        for j in 0..d {
            diff[j] = xi[j] - xk[j];
        }
        let g = spec.grad_interaction(&diff);
        for j in 0..d {
            sum[j] += g[j];
        }
    }
    let scale = if n > 1 { 1.0 / (n as f64 - 1.0) } else { 0.0 };
    let ext = spec.grad_external(xi);
    (0..d).map(|j| -(scale * sum[j] + ext[j])).collect()
}

fn check_step_inputs(
    ensemble: &ParticleEnsemble,
    domain: &ConvexDomain,
    dt: f64,
) -> Result<()> {
    if ensemble.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: ensemble.dim(),
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidPlan(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

/// One symmetrized Euler step of the diffusive system. `noise` holds `n * d`
/// standard Gaussians consumed in particle-major order.
pub fn step_stochastic(
    ensemble: &ParticleEnsemble,
    spec: &PotentialSpec,
    domain: &ConvexDomain,
    nu: f64,
    dt: f64,
    noise: &[f64],
) -> Result<ParticleEnsemble> {
    check_step_inputs(ensemble, domain, dt)?;
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::InvalidPlan(format!("nu must be >= 0, got {nu}")));
    }
    if noise.len() != ensemble.coords().len() {
        return Err(Error::SizeMismatch {
            left: noise.len(),
            right: ensemble.coords().len(),
        });
    }
    let d = ensemble.dim();
    let drifts = drift_all(ensemble, spec);
    let amp = (2.0 * nu * dt).sqrt();
    let mut coords = ensemble.coords().to_vec();
    for ((c, dr), xi) in coords.iter_mut().zip(&drifts).zip(noise) {
        *c += dt * dr + amp * xi;
    }
    for chunk in coords.chunks_mut(d) {
        domain.reflect_in_place(chunk)?;
        debug_assert!(domain.contains_unchecked(chunk));
    }
    ParticleEnsemble::new(coords, d, ensemble.time() + dt)
}

/// One projected Euler step of the non-diffusive system.
pub fn step_deterministic(
    ensemble: &ParticleEnsemble,
    spec: &PotentialSpec,
    domain: &ConvexDomain,
    dt: f64,
) -> Result<ParticleEnsemble> {
    check_step_inputs(ensemble, domain, dt)?;
    let d = ensemble.dim();
    let drifts = drift_all(ensemble, spec);
    let mut coords = ensemble.coords().to_vec();
    for (c, dr) in coords.iter_mut().zip(&drifts) {
        *c += dt * dr;
    }
    for chunk in coords.chunks_mut(d) {
        domain.project_endpoint_in_place(chunk)?;
        debug_assert!(domain.contains_unchecked(chunk));
    }
    ParticleEnsemble::new(coords, d, ensemble.time() + dt)
}

/// Diffusive and non-diffusive ensembles sharing initial data, advanced in
/// lockstep. The noise stream feeds only the diffusive system and is
/// consumed every step, including at `nu = 0`.
#[derive(Debug, Clone)]
pub struct CoupledTrajectoryPair {
    diffusive: ParticleEnsemble,
    deterministic: ParticleEnsemble,
    nu: f64,
    rng: ChaCha8Rng,
}

impl CoupledTrajectoryPair {
    pub fn new(initial: ParticleEnsemble, nu: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(Error::InvalidPlan(format!("nu must be >= 0, got {nu}")));
        }
        Ok(CoupledTrajectoryPair {
            deterministic: initial.clone(),
            diffusive: initial,
            nu,
            rng,
        })
    }

    pub fn diffusive(&self) -> &ParticleEnsemble {
        &self.diffusive
    }

    pub fn deterministic(&self) -> &ParticleEnsemble {
        &self.deterministic
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Advance both systems by `dt`, drawing one fresh `n * d` Gaussian
    /// block for the diffusive update.
    pub fn step(&mut self, spec: &PotentialSpec, domain: &ConvexDomain, dt: f64) -> Result<()> {
        let len = self.diffusive.coords().len();
        let mut noise = Vec::with_capacity(len);
        for _ in 0..len {
            noise.push(self.rng.sample::<f64, _>(StandardNormal));
        }
        self.diffusive = step_stochastic(&self.diffusive, spec, domain, self.nu, dt, &noise)?;
        self.deterministic = step_deterministic(&self.deterministic, spec, domain, dt)?;
        Ok(())
    }
}

/// Per-trajectory simulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub domain: ConvexDomain,
    pub potential: PotentialSpec,
    pub n_particles: usize,
    pub nu: f64,
    pub dt: f64,
    /// Must be sorted strictly ascending; every entry must sit on the step
    /// grid `{k dt}`.
    pub snapshot_times: Vec<f64>,
    pub init_region: Rect,
}

impl TrajectoryConfig {
    /// Map each snapshot time to its step index, rejecting off-grid times.
    pub fn snapshot_steps(&self) -> Result<Vec<u64>> {
        if self.snapshot_times.is_empty() {
            return Err(Error::InvalidPlan("snapshot_times must be nonempty".into()));
        }
        let mut steps = Vec::with_capacity(self.snapshot_times.len());
        let mut prev: Option<f64> = None;
        for &t in &self.snapshot_times {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::InvalidPlan(format!(
                    "snapshot time must be >= 0, got {t}"
                )));
            }
            if let Some(p) = prev {
                if t <= p {
                    return Err(Error::InvalidPlan(
                        "snapshot_times must be strictly increasing".into(),
                    ));
                }
            }
            prev = Some(t);
            let k = (t / self.dt).round();
            if (t - k * self.dt).abs() > 1e-9 * t.max(1.0) {
                return Err(Error::SnapshotOffGrid { time: t, dt: self.dt });
            }
            steps.push(k as u64);
        }
        Ok(steps)
    }
}

/// A coupled pair of ensembles captured at a requested time.
#[derive(Debug, Clone)]
pub struct PairSnapshot {
    pub time: f64,
    pub diffusive: ParticleEnsemble,
    pub deterministic: ParticleEnsemble,
}

/// Run one coupled trajectory and capture the requested snapshots.
///
/// The seed determines the initial draw and the noise stream; rerunning
/// with the same configuration and seed reproduces the snapshots bitwise.
pub fn simulate_pair(cfg: &TrajectoryConfig, seed: u64) -> Result<Vec<PairSnapshot>> {
    let steps = cfg.snapshot_steps()?;
    let mut rng = stream_rng(seed);
    let initial = sample_initial_with_rng(&cfg.domain, &cfg.init_region, cfg.n_particles, &mut rng)?;
    let mut pair = CoupledTrajectoryPair::new(initial, cfg.nu, rng)?;
    let mut snapshots = Vec::with_capacity(steps.len());
    let mut next = 0;
    if steps[next] == 0 {
        snapshots.push(PairSnapshot {
            time: cfg.snapshot_times[next],
            diffusive: pair.diffusive().clone(),
            deterministic: pair.deterministic().clone(),
        });
        next += 1;
    }
    let last = *steps.last().expect("nonempty");
    for step in 1..=last {
        pair.step(&cfg.potential, &cfg.domain, cfg.dt)?;
        if next < steps.len() && steps[next] == step {
            snapshots.push(PairSnapshot {
                time: cfg.snapshot_times[next],
                diffusive: pair.diffusive().clone(),
                deterministic: pair.deterministic().clone(),
            });
            next += 1;
        }
    }
    Ok(snapshots)
}
