//! Result persistence: deterministic CSV/JSON rendering, atomic writes,
//! digests, and the run manifest.
//!
//! Every float is rendered with 17 significant digits, enough to round-trip
//! an IEEE double exactly, so reruns of the same plan are byte-identical.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use zdlab_core::{
    ExperimentPlan, FitResult, GrowthFit, PairSnapshot, RateFit, SampleRecord, StatSeries,
    WeakErrorOutput,
};

/// 17-significant-digit rendering (lossless double round-trip).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// serde_json formatter that renders every f64 with 17 significant digits.
struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Compact JSON with deterministic float rendering.
pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits);
    value
        .serialize(&mut ser)
        .context("serializing JSON output")?;
    Ok(String::from_utf8(out)?)
}

/// `stats.csv`: one row per (nu, time) cell.
pub fn stats_csv(series: &StatSeries) -> String {
    let mut s = String::from("nu,time,mean_w_sq,ci_half_width,M\n");
    for c in &series.cells {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(c.nu),
            fmt_f64(c.time),
            fmt_f64(c.mean_w_sq),
            fmt_f64(c.ci_half_width),
            c.samples
        ));
    }
    s
}

/// `samples.csv`: raw per-sample squared distances.
pub fn samples_csv(records: &[SampleRecord]) -> String {
    let mut s = String::from("nu,sample,time,w_sq\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(r.nu),
            r.sample,
            fmt_f64(r.time),
            fmt_f64(r.w_sq)
        ));
    }
    s
}

/// `snapshots.csv`: particle positions of both systems at the snapshot
/// times.
pub fn snapshots_csv(snapshots: &[PairSnapshot], traj_id: u64) -> String {
    let dim = snapshots
        .first()
        .map(|s| s.diffusive.dim())
        .unwrap_or(2);
    let mut s = String::from("traj_id,time,system,particle_id");
    for j in 1..=dim {
        s.push_str(&format!(",x{j}"));
    }
    s.push('\n');
    for snap in snapshots {
        for (label, ens) in [("stoch", &snap.diffusive), ("det", &snap.deterministic)] {
            for i in 0..ens.len() {
                s.push_str(&format!("{},{},{},{}", traj_id, fmt_f64(snap.time), label, i));
                for v in ens.position(i) {
                    s.push(',');
                    s.push_str(&fmt_f64(*v));
                }
                s.push('\n');
            }
        }
    }
    s
}

/// `weak_error.csv`: one row per coarse step size.
pub fn weak_error_csv(out: &WeakErrorOutput) -> String {
    let mut s = String::from("dt,mean_g,fine_mean_g,weak_error\n");
    for p in &out.points {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(p.dt),
            fmt_f64(p.mean_g),
            fmt_f64(out.fine_mean_g),
            fmt_f64(p.weak_error)
        ));
    }
    s
}

/// `fit.json` document, keyed by fit kind.
#[derive(Debug, Default, Serialize)]
pub struct FitsDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_law: Option<RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthFit>,
}

impl FitsDoc {
    pub fn from_fits(fits: &[FitResult]) -> Self {
        let mut doc = FitsDoc::default();
        for fit in fits {
            match fit {
                FitResult::PowerLaw(f) => doc.power_law = Some(f.clone()),
                FitResult::Growth(f) => doc.growth = Some(f.clone()),
            }
        }
        doc
    }
}

/// Write-temp-then-rename so partially written files never appear under
/// the final name.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Reproducibility record for one run. Output digests cover the data files
/// only; the timestamps live here and are excluded from any digest.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool_version: &'a str,
    pub command: &'a str,
    pub master_seed: u64,
    pub plan: serde_json::Value,
    pub started_at: String,
    pub finished_at: String,
    /// file name -> sha256 of the exact bytes written.
    pub outputs: BTreeMap<String, String>,
}

/// Write named outputs atomically into `out_dir` and return their digests.
pub fn emit_files(out_dir: &Path, files: &[(&str, String)]) -> Result<BTreeMap<String, String>> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let mut digests = BTreeMap::new();
    for (name, contents) in files {
        let path = out_dir.join(name);
        atomic_write(&path, contents.as_bytes())?;
        digests.insert(name.to_string(), format!("sha256:{}", sha256_hex(contents.as_bytes())));
    }
    Ok(digests)
}

/// Experiment outputs: stats, raw samples, fits, then the manifest.
pub fn emit_results(
    out_dir: &Path,
    command: &str,
    plan: &ExperimentPlan,
    series: &StatSeries,
    raw: &[SampleRecord],
    fits: &[FitResult],
    started_at: String,
) -> Result<BTreeMap<String, String>> {
    let mut files = vec![
        ("stats.csv", stats_csv(series)),
        ("samples.csv", samples_csv(raw)),
    ];
    if !fits.is_empty() {
        files.push(("fit.json", format!("{}\n", to_json(&FitsDoc::from_fits(fits))?)));
    }
    let digests = emit_files(out_dir, &files)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        master_seed: plan.master_seed,
        plan: serde_json::to_value(plan).context("plan to JSON")?,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs: digests.clone(),
    };
    atomic_write(
        &out_dir.join("manifest.json"),
        format!("{}\n", to_json(&manifest)?).as_bytes(),
    )?;
    Ok(digests)
}

/// Read a point cloud CSV with header `particle_id,x1,...,xd`. Returns the
/// flat coordinates (file order) and the dimension.
pub fn read_point_cloud(path: &Path) -> Result<(Vec<f64>, usize)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading point cloud {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = match lines.next() {
        Some(h) => h,
        None => bail!("{}: empty file", path.display()),
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "particle_id" {
        bail!(
            "{}: expected header 'particle_id,x1,...,xd', got '{header}'",
            path.display()
        );
    }
    let dim = cols.len() - 1;
    let mut coords = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            bail!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                lineno + 2,
                fields.len(),
                dim + 1
            );
        }
        for f in &fields[1..] {
            let v: f64 = f
                .parse()
                .with_context(|| format!("{}: line {}: bad number '{f}'", path.display(), lineno + 2))?;
            coords.push(v);
        }
    }
    if coords.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok((coords, dim))
}
