//! Replication studies: simulate replicates under a rate schedule, fit every
//! requested prior, and aggregate the per-day error metrics.
//!
//! Layout of a study directory:
//!
//! ```text
//! manifest.json                   design, seeds, completed replicates
//! replicates/rep_003_data.csv     simulated series (load_csv schema)
//! replicates/rep_003_t.csv        point estimate `t,beta,gamma`
//! estimates_t.csv                 all replicates `replicate,t,beta,gamma`
//! metrics_t.csv                   `t,param,mab,mse,sd,sd_sqrt`
//! band_t.csv                      pointwise min/max of the estimates
//! ```
//!
//! Replicate `ℓ` (1-based) simulates with seed `base_seed + ℓ`; the fit for a
//! prior uses the same seed on a separate RNG stream. Files are written under
//! a `.partial` name and renamed when complete, and the manifest is updated
//! after each replicate so an interrupted study resumes where it stopped.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::Utc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{moving_average, write_csv};
use crate::error::{Error, Result};
use crate::likelihood::{Param, RatePath};
use crate::posterior::{point_estimate, replication_metrics, write_metrics_csv, MetricSeries, PointEstimate};
use crate::priors::{PriorKind, PriorSpec};
use crate::sampler::{fit_chain, McmcConfig};
use crate::simulator::{simulate, RateSchedule, SimConfig, SimMode};

pub const DESIGN_HORIZON: usize = 80;
pub const DESIGN_PIECE: usize = 20;
/// Desk-scale replicate count.
pub const DEFAULT_REPLICATES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub name: String,
    pub schedule: RateSchedule,
    pub population: u64,
    /// Initial infectious count.
    pub i0: u64,
    pub horizon: usize,
    pub replicates: usize,
    pub priors: Vec<PriorSpec>,
    pub mcmc: McmcConfig,
    pub generator: SimMode,
    pub point_estimate: PointEstimate,
    /// Apply the 3-point moving average to each replicate before fitting.
    #[serde(default)]
    pub smooth: bool,
}

impl StudyDesign {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("a study needs at least one replicate".into()));
        }
        if self.priors.is_empty() {
            return Err(Error::Config("a study needs at least one prior".into()));
        }
        let kinds: BTreeSet<_> = self.priors.iter().map(|p| p.kind.name()).collect();
        if kinds.len() != self.priors.len() {
            return Err(Error::Config("each prior kind may appear once per study".into()));
        }
        self.schedule.validate()?;
        self.mcmc.validate()?;
        for p in &self.priors {
            p.validate()?;
        }
        SimConfig::new(self.population, self.i0, self.horizon, 0, self.generator).validate()
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        self.mcmc.seed.wrapping_add(replicate as u64)
    }

    pub fn with_priors(mut self, kinds: &[PriorKind]) -> Self {
        self.priors = kinds.iter().map(|&k| PriorSpec::new(k)).collect();
        self
    }
}

/// Initial infections for a built-in design: one per thousand people.
pub fn default_i0(population: u64) -> u64 {
    (population / 1_000).max(1)
}

/// The four 80-day designs with 20-day pieces.
pub fn builtin_designs() -> Vec<StudyDesign> {
    let rows: [(&str, [f64; 4], [f64; 4], u64); 4] = [
        ("design1", [0.15, 0.20, 0.10, 0.05], [0.05, 0.09, 0.10, 0.08], 1_000_000),
        ("design2", [0.10, 0.15, 0.10, 0.05], [0.05, 0.09, 0.10, 0.08], 1_000_000),
        ("design3", [0.07, 0.09, 0.08, 0.05], [0.02, 0.04, 0.06, 0.07], 10_000_000),
        ("design4", [0.05, 0.08, 0.05, 0.07], [0.02, 0.05, 0.04, 0.03], 10_000_000),
    ];
    rows.iter()
        .map(|(name, beta, gamma, n)| StudyDesign {
            name: name.to_string(),
            schedule: RateSchedule::equal_pieces(DESIGN_PIECE, beta.to_vec(), gamma.to_vec())
                .expect("built-in schedule is valid"),
            population: *n,
            i0: default_i0(*n),
            horizon: DESIGN_HORIZON,
            replicates: DEFAULT_REPLICATES,
            priors: PriorKind::ALL.iter().map(|&k| PriorSpec::new(k)).collect(),
            mcmc: McmcConfig::default(),
            generator: SimMode::Poisson,
            point_estimate: PointEstimate::Mean,
            smooth: false,
        })
        .collect()
}

/// Built-in design by 1-based number.
pub fn builtin_design(number: usize) -> Result<StudyDesign> {
    builtin_designs()
        .into_iter()
        .nth(number.wrapping_sub(1))
        .ok_or_else(|| Error::Config(format!("no built-in design {number}; choose 1-4")))
}

#[derive(Debug, Clone, Default)]
pub struct StudyOptions {
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Compute at most this many new replicates in this invocation.
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: u32,
    version: String,
    design: StudyDesign,
    seeds: Vec<(usize, u64)>,
    completed: Vec<usize>,
    created: String,
    updated: String,
}

const MANIFEST: &str = "manifest.json";
const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Clone)]
pub struct PriorResult {
    pub kind: PriorKind,
    /// Point estimates ordered by replicate.
    pub estimates: Vec<RatePath>,
    pub metrics: MetricSeries,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub computed: Vec<usize>,
    pub skipped: Vec<usize>,
    pub complete: bool,
    /// Empty unless every replicate is done.
    pub results: Vec<PriorResult>,
}

impl StudyOutcome {
    pub fn result(&self, kind: PriorKind) -> Option<&PriorResult> {
        self.results.iter().find(|r| r.kind == kind)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    fs::write(&partial, bytes).map_err(|e| Error::io(&partial, e))?;
    fs::rename(&partial, path).map_err(|e| Error::io(path, e))
}

fn rep_file(out: &Path, replicate: usize, tag: &str) -> PathBuf {
    out.join("replicates").join(format!("rep_{replicate:03}_{tag}.csv"))
}

fn prior_stream(kind: PriorKind) -> u64 {
    1 + PriorKind::ALL.iter().position(|&k| k == kind).expect("known kind") as u64
}

fn write_estimate(path: &Path, est: &RatePath) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "beta", "gamma"])?;
    for (k, (b, g)) in est.beta.iter().zip(&est.gamma).enumerate() {
        w.write_record([(k + 1).to_string(), b.to_string(), g.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn read_estimate(path: &Path) -> Result<RatePath> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut est = RatePath {
        beta: Vec::new(),
        gamma: Vec::new(),
    };
    for row in rdr.deserialize::<(usize, f64, f64)>() {
        let (_, b, g) = row?;
        est.beta.push(b);
        est.gamma.push(g);
    }
    Ok(est)
}

fn load_manifest(out: &Path, design: &StudyDesign) -> Result<Option<Manifest>> {
    let path = out.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Resume {
        dir: out.to_path_buf(),
        message: format!("manifest is corrupted ({e})"),
    })?;
    if manifest.format != MANIFEST_FORMAT || manifest.design != *design {
        return Err(Error::Resume {
            dir: out.to_path_buf(),
            message: "manifest belongs to a different study configuration".into(),
        });
    }
    Ok(Some(manifest))
}

fn save_manifest(out: &Path, manifest: &Manifest) -> Result<()> {
    let json = serde_json::to_vec_pretty(manifest)?;
    write_atomic(&out.join(MANIFEST), &json)
}

fn run_replicate(design: &StudyDesign, out: &Path, replicate: usize) -> Result<()> {
    let seed = design.replicate_seed(replicate);
    let mut sim = SimConfig::new(design.population, design.i0, design.horizon, seed, design.generator);
    sim.r0 = 0;
    let series = simulate(&design.schedule, &sim)?;
    let mut buf = Vec::new();
    write_csv(&series, &mut buf)?;
    write_atomic(&rep_file(out, replicate, "data"), &buf)?;
    let series = if design.smooth { moving_average(&series)? } else { series };
    let mut cfg = design.mcmc.clone();
    cfg.seed = seed;
    for spec in &design.priors {
        let draws = fit_chain(&series, spec, &cfg, prior_stream(spec.kind))?;
        let est = point_estimate(&draws, design.point_estimate);
        write_estimate(&rep_file(out, replicate, spec.kind.name()), &est)?;
    }
    Ok(())
}

/// Runs (or resumes) a study in `out`.
pub fn run_study(design: &StudyDesign, out: impl AsRef<Path>, options: &StudyOptions) -> Result<StudyOutcome> {
    design.validate()?;
    let out = out.as_ref();
    fs::create_dir_all(out.join("replicates")).map_err(|e| Error::io(out, e))?;

    let now = Utc::now().to_rfc3339();
    let manifest = match load_manifest(out, design)? {
        Some(m) => m,
        None => {
            let m = Manifest {
                format: MANIFEST_FORMAT,
                version: env!("CARGO_PKG_VERSION").to_string(),
                design: design.clone(),
                seeds: (1..=design.replicates).map(|l| (l, design.replicate_seed(l))).collect(),
                completed: Vec::new(),
                created: now.clone(),
                updated: now,
            };
            save_manifest(out, &m)?;
            m
        }
    };

    let done: BTreeSet<usize> = manifest
        .completed
        .iter()
        .copied()
        .filter(|&l| design.priors.iter().all(|p| rep_file(out, l, p.kind.name()).exists()))
        .collect();
    let skipped: Vec<usize> = done.iter().copied().collect();
    let mut pending: Vec<usize> = (1..=design.replicates).filter(|l| !done.contains(l)).collect();
    if let Some(budget) = options.budget {
        pending.truncate(budget);
    }

    let state = Mutex::new((manifest, done));
    let work = || -> Result<()> {
        pending.par_iter().try_for_each(|&l| {
            run_replicate(design, out, l)?;
            let mut guard = state.lock().expect("manifest lock");
            let (manifest, done) = &mut *guard;
            done.insert(l);
            manifest.completed = done.iter().copied().collect();
            manifest.updated = Utc::now().to_rfc3339();
            save_manifest(out, manifest)
        })
    };
    match options.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    }
    let (_, done) = state.into_inner().expect("manifest lock");

    let complete = done.len() == design.replicates;
    let mut results = Vec::new();
    if complete {
        for spec in &design.priors {
            let name = spec.kind.name();
            let estimates = (1..=design.replicates)
                .map(|l| read_estimate(&rep_file(out, l, name)))
                .collect::<Result<Vec<_>>>()?;
            let metrics = replication_metrics(&estimates, &design.schedule)?;
            let mut buf = Vec::new();
            write_metrics_csv(&metrics, &mut buf)?;
            write_atomic(&out.join(format!("metrics_{name}.csv")), &buf)?;
            write_atomic(&out.join(format!("estimates_{name}.csv")), &estimates_csv(&estimates)?)?;
            write_atomic(&out.join(format!("band_{name}.csv")), &band_csv(&estimates, &design.schedule)?)?;
            results.push(PriorResult {
                kind: spec.kind,
                estimates,
                metrics,
            });
        }
    }
    Ok(StudyOutcome {
        computed: pending,
        skipped,
        complete,
        results,
    })
}

fn estimates_csv(estimates: &[RatePath]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["replicate", "t", "beta", "gamma"])?;
    for (l, est) in estimates.iter().enumerate() {
        for (k, (b, g)) in est.beta.iter().zip(&est.gamma).enumerate() {
            w.write_record([(l + 1).to_string(), (k + 1).to_string(), b.to_string(), g.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// Pointwise minimum and maximum of the replicate estimates.
pub fn estimate_band(estimates: &[RatePath], which: Param) -> Vec<(f64, f64)> {
    let t = estimates.first().map_or(0, RatePath::len);
    (0..t)
        .map(|day| {
            estimates.iter().map(|e| e.get(which)[day]).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), v| (lo.min(v), hi.max(v)),
            )
        })
        .collect()
}

fn band_csv(estimates: &[RatePath], truth: &RateSchedule) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "param", "min", "max", "truth"])?;
    let t = estimates.first().map_or(0, RatePath::len);
    let true_path = truth.to_path(t);
    for which in Param::BOTH {
        for (day, (lo, hi)) in estimate_band(estimates, which).into_iter().enumerate() {
            w.write_record([
                (day + 1).to_string(),
                which.to_string(),
                lo.to_string(),
                hi.to_string(),
                true_path.get(which)[day].to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}
