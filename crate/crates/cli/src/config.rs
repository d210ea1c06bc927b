//! Declarative experiment configuration: TOML file keys, CLI overrides,
//! per-command defaults, and resolution into a validated plan.
//!
//! Precedence: command-line flags override file keys, which override the
//! built-in defaults. The resolved plan is what lands in the run manifest;
//! re-parsing an emitted resolved plan reproduces it exactly.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use zdlab_core::{
    default_init_region, default_nu_fit_threshold, ConvexDomain, DtRule, ErrorPolicy,
    ExperimentPlan, ExternalPotential, PotentialKind, PotentialSpec, Rect, WeakErrorStudy,
};

/// Seed used when neither the config nor the flags provide one.
pub const DEFAULT_MASTER_SEED: u64 = 7919;

/// Built-in study sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// Laptop-scale: N = 200 particles, M = 64 samples.
    Desk,
    /// Publication-scale: N = 1000 particles, M = 250 samples.
    Paper,
}

impl Profile {
    pub fn n_particles(self) -> usize {
        match self {
            Profile::Desk => 200,
            Profile::Paper => 1000,
        }
    }

    pub fn samples(self) -> usize {
        match self {
            Profile::Desk => 64,
            Profile::Paper => 250,
        }
    }
}

/// Raw config-file contents; every key optional, unknown keys rejected.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub domain: Option<ConvexDomain>,
    pub potential: Option<PotentialKind>,
    pub epsilon: Option<f64>,
    pub external: Option<ExternalPotential>,
    pub n_particles: Option<usize>,
    pub samples: Option<usize>,
    pub nu_list: Option<Vec<f64>>,
    pub dt_rule: Option<DtRule>,
    pub horizon: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,
    pub init_region: Option<Rect>,
    pub master_seed: Option<u64>,
    pub nu_fit_threshold: Option<f64>,
    pub on_error: Option<ErrorPolicy>,
}

/// Parse a TOML plan file.
pub fn load_plan_file(path: &Path) -> Result<PlanFile> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
}

/// Values supplied on the command line.
#[derive(Debug, Default, Clone)]
pub struct PlanOverrides {
    pub domain: Option<ConvexDomain>,
    pub potential: Option<PotentialKind>,
    pub n_particles: Option<usize>,
    pub samples: Option<usize>,
    pub nu_list: Option<Vec<f64>>,
    pub dt_fixed: Option<f64>,
    pub sqrt_nu_c: Option<f64>,
    pub horizon: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,
    pub master_seed: Option<u64>,
}

/// Study-shape defaults that differ between subcommands.
#[derive(Debug, Clone)]
pub struct CommandDefaults {
    pub nu_list: Vec<f64>,
    pub horizon: f64,
    pub snapshot_times: Vec<f64>,
    pub dt_rule: DtRule,
}

impl CommandDefaults {
    /// Rate study over four dyadic diffusion values with dt = sqrt(nu).
    pub fn convergence() -> Self {
        CommandDefaults {
            nu_list: vec![
                2f64.powi(-20),
                2f64.powi(-22),
                2f64.powi(-24),
                2f64.powi(-26),
            ],
            horizon: 0.5,
            snapshot_times: vec![2f64.powi(-5), 0.25, 0.5],
            dt_rule: DtRule::SqrtNu { c: 1.0 },
        }
    }

    /// Divergence-in-time study at a single small diffusion value.
    pub fn growth() -> Self {
        CommandDefaults {
            nu_list: vec![2f64.powi(-28)],
            horizon: 1.0,
            snapshot_times: (1..=16).map(|k| k as f64 / 16.0).collect(),
            dt_rule: DtRule::SqrtNu { c: 1.0 },
        }
    }

    /// Single-pair snapshot dump on a fixed grid.
    pub fn simulate() -> Self {
        CommandDefaults {
            nu_list: vec![2f64.powi(-16)],
            horizon: 1.0,
            snapshot_times: vec![0.0, 1.0],
            dt_rule: DtRule::Fixed { dt: 2f64.powi(-8) },
        }
    }
}

/// Merge flags, file keys and defaults into a validated plan.
pub fn resolve_plan(
    file: &PlanFile,
    over: &PlanOverrides,
    profile: Profile,
    defaults: &CommandDefaults,
) -> Result<ExperimentPlan> {
    let domain = over
        .domain
        .clone()
        .or_else(|| file.domain.clone())
        .unwrap_or_else(ConvexDomain::half_plane);
    let potential = over.potential.or(file.potential).unwrap_or(PotentialKind::K32);
    let epsilon = file.epsilon.unwrap_or(0.05);
    let external = file.external.unwrap_or(ExternalPotential::Zero);
    let n_particles = over
        .n_particles
        .or(file.n_particles)
        .unwrap_or_else(|| profile.n_particles());
    let samples = over
        .samples
        .or(file.samples)
        .unwrap_or_else(|| profile.samples());

    let mut nu_list = over
        .nu_list
        .clone()
        .or_else(|| file.nu_list.clone())
        .unwrap_or_else(|| defaults.nu_list.clone());
    nu_list.sort_by(|a, b| b.total_cmp(a));
    if nu_list.windows(2).any(|w| w[0] == w[1]) {
        bail!("nu_list contains duplicate values");
    }

    let dt_rule = match (over.dt_fixed, over.sqrt_nu_c) {
        (Some(_), Some(_)) => bail!("--dt and --sqrt-nu-c are mutually exclusive"),
        (Some(dt), None) => DtRule::Fixed { dt },
        (None, Some(c)) => DtRule::SqrtNu { c },
        (None, None) => file.dt_rule.unwrap_or(defaults.dt_rule),
    };

    let mut snapshot_times = over
        .snapshot_times
        .clone()
        .or_else(|| file.snapshot_times.clone())
        .unwrap_or_else(|| defaults.snapshot_times.clone());
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup();

    let max_snapshot = snapshot_times.last().copied().unwrap_or(0.0);
    let horizon = over
        .horizon
        .or(file.horizon)
        .unwrap_or_else(|| defaults.horizon.max(max_snapshot));

    let init_region = file
        .init_region
        .clone()
        .unwrap_or_else(|| default_init_region(&domain));
    let master_seed = over
        .master_seed
        .or(file.master_seed)
        .unwrap_or(DEFAULT_MASTER_SEED);
    let nu_fit_threshold = file
        .nu_fit_threshold
        .unwrap_or_else(|| default_nu_fit_threshold(&domain));
    let on_error = file.on_error.unwrap_or(ErrorPolicy::FailFast);

    let plan = ExperimentPlan {
        domain,
        potential,
        epsilon,
        external,
        n_particles,
        samples,
        nu_list,
        dt_rule,
        horizon,
        snapshot_times,
        init_region,
        master_seed,
        nu_fit_threshold,
        on_error,
    };
    plan.validate()?;
    Ok(plan)
}

/// Serialize a resolved plan back to TOML. Parsing the result reproduces
/// the plan exactly.
pub fn emit_resolved_toml(plan: &ExperimentPlan) -> Result<String> {
    toml::to_string(plan).context("serializing resolved plan")
}

/// Weak-error command configuration (flags only; there is no file form).
#[derive(Debug, Clone)]
pub struct WeakErrorArgsResolved {
    pub study: WeakErrorStudy,
}

#[allow(clippy::too_many_arguments)]
pub fn resolve_weak_error(
    domain: Option<ConvexDomain>,
    potential: Option<PotentialKind>,
    epsilon: Option<f64>,
    nu: Option<f64>,
    n_particles: Option<usize>,
    samples: Option<usize>,
    horizon: Option<f64>,
    dt_list: Option<Vec<f64>>,
    fine_dt: Option<f64>,
    master_seed: Option<u64>,
) -> Result<WeakErrorStudy> {
    let domain = domain.unwrap_or(ConvexDomain::Disk {
        center: [0.0, 0.0],
        radius: 0.2,
    });
    let potential = PotentialSpec::new(
        potential.unwrap_or(PotentialKind::K32),
        epsilon.unwrap_or(0.05),
        ExternalPotential::Zero,
    )?;
    let mut dt_list = dt_list.unwrap_or_else(|| {
        (6..=10).map(|k| 2f64.powi(-k)).collect()
    });
    dt_list.sort_by(|a, b| b.total_cmp(a));
    dt_list.dedup();
    let init_region = default_init_region(&domain);
    Ok(WeakErrorStudy {
        init_region,
        potential,
        domain,
        nu: nu.unwrap_or(0.01),
        n_particles: n_particles.unwrap_or(5),
        horizon: horizon.unwrap_or(0.25),
        dt_list,
        fine_dt: fine_dt.unwrap_or_else(|| 2f64.powi(-12)),
        samples: samples.unwrap_or(20_000),
        master_seed: master_seed.unwrap_or(DEFAULT_MASTER_SEED),
    })
}

/// Parse a float, also accepting the dyadic form `B^E` (e.g. `2^-26`).
pub fn parse_scaled_f64(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    if let Some((base, exp)) = t.split_once('^') {
        let base: f64 = base
            .trim()
            .parse()
            .map_err(|e| format!("bad base in '{t}': {e}"))?;
        let exp: f64 = exp
            .trim()
            .parse()
            .map_err(|e| format!("bad exponent in '{t}': {e}"))?;
        if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
            Ok(base.powi(exp as i32))
        } else {
            Ok(base.powf(exp))
        }
    } else {
        t.parse().map_err(|e| format!("bad number '{t}': {e}"))
    }
}

/// Worker cap from the `ZDLAB_THREADS` environment variable.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("ZDLAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}
