//! Metropolis-within-Gibbs over rate paths and latent scales.
//!
//! One sweep updates every `β(t)` then every `γ(t)` with a single-site
//! Gaussian random walk (proposals below zero are rejected outright), then
//! draws the local scales and the global variances from their exact full
//! conditionals. Per-site step sizes follow a Robbins-Monro recursion on
//! `log s` with gain `1 / sweep^0.6` until `adapt_until`, and stay frozen
//! from then on.

mod chain;
pub mod io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use chain::Chain;

use crate::data::{to_increments, CompartmentSeries, IncrementSeries};
use crate::error::{Error, Result};
use crate::likelihood::{MeanLag, Param, RatePath};
use crate::math::moving_average3;
use crate::priors::{LatentScales, PriorSpec};

pub const RATE_FLOOR: f64 = 1e-6;
pub const RATE_CEIL: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    #[default]
    FromData,
    FromPrior,
    Fixed(RatePath),
}

/// What the chain targets. `PriorOnly` drops the likelihood and the
/// nonnegativity constraint and exists to check the sampler against
/// ancestral prior draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    #[default]
    Posterior,
    PriorOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Total sweeps.
    pub iterations: usize,
    pub thin: usize,
    /// Number of thinned samples discarded at the start.
    pub burn_in: usize,
    pub seed: u64,
    /// Last sweep at which step sizes adapt.
    pub adapt_until: usize,
    pub target_accept: f64,
    pub initial_step: f64,
    pub init: Init,
    pub mean_lag: MeanLag,
    pub target: Target,
}

impl Default for McmcConfig {
    /// 50,000 sweeps, thinning 10, burn-in 3,000 → 2,000 kept samples.
    fn default() -> Self {
        Self {
            iterations: 50_000,
            thin: 10,
            burn_in: 3_000,
            seed: 0,
            adapt_until: 30_000,
            target_accept: 0.44,
            initial_step: 0.01,
            init: Init::FromData,
            mean_lag: MeanLag::Previous,
            target: Target::Posterior,
        }
    }
}

impl McmcConfig {
    /// A shorter chain with the same proportions: adaptation runs through the
    /// whole burn-in.
    pub fn with_length(iterations: usize, thin: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            iterations,
            thin,
            burn_in,
            seed,
            adapt_until: burn_in * thin,
            ..Self::default()
        }
    }

    pub fn kept(&self) -> usize {
        (self.iterations / self.thin).saturating_sub(self.burn_in)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin < 1 || self.iterations < self.thin {
            return Err(Error::Config(format!(
                "need iterations ≥ thin ≥ 1, got iterations {} thin {}",
                self.iterations, self.thin
            )));
        }
        if self.burn_in >= self.iterations / self.thin {
            return Err(Error::Config(format!(
                "burn-in {} leaves no samples out of {}",
                self.burn_in,
                self.iterations / self.thin
            )));
        }
        if self.adapt_until > self.burn_in * self.thin {
            return Err(Error::Config(format!(
                "adaptation must stop within burn-in: adapt_until {} > {}",
                self.adapt_until,
                self.burn_in * self.thin
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!("target acceptance {} outside (0, 1)", self.target_accept)));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::Config("initial step must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major `samples × T` matrix of draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawMatrix {
    cols: usize,
    data: Vec<f64>,
}

impl DrawMatrix {
    pub fn new(cols: usize) -> Self {
        Self { cols, data: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::new(cols);
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::Shape(format!("row of {} values, expected {}", row.len(), self.cols)));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.cols).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    /// All draws of column `c` (0-based day index).
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[c]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub chain: u64,
    pub config: McmcConfig,
    pub prior: PriorSpec,
    pub prior_digest: String,
    pub version: String,
}

/// Per-site acceptance rates (or step sizes), indexed by 0-based day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SiteStats {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl SiteStats {
    pub fn get(&self, which: Param) -> &[f64] {
        match which {
            Param::Beta => &self.beta,
            Param::Gamma => &self.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub beta: DrawMatrix,
    pub gamma: DrawMatrix,
    pub scales: Vec<LatentScales>,
    /// Acceptance rates measured after adaptation stopped.
    pub acceptance: SiteStats,
    pub step_sizes: SiteStats,
    pub provenance: Option<Provenance>,
    pub warnings: Vec<String>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.beta.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.rows() == 0
    }

    /// Number of days `T`.
    pub fn days(&self) -> usize {
        self.beta.cols()
    }

    pub fn matrix(&self, which: Param) -> &DrawMatrix {
        match which {
            Param::Beta => &self.beta,
            Param::Gamma => &self.gamma,
        }
    }

    /// Posterior mean path.
    pub fn mean_path(&self) -> RatePath {
        let mean = |m: &DrawMatrix| -> Vec<f64> {
            (0..m.cols()).map(|c| crate::math::mean(&m.column(c))).collect()
        };
        RatePath {
            beta: mean(&self.beta),
            gamma: mean(&self.gamma),
        }
    }
}

/// Method-of-moments starting path: `β(t) = ΔM(t) N / (S I)` and
/// `γ(t) = ΔR(t) / I` at the lagged state, clamped to `[1e-6, 10]` and
/// smoothed with the 3-point filter. Day 1 copies day 2.
pub fn init_from_data(series: &CompartmentSeries, increments: &IncrementSeries, lag: MeanLag) -> RatePath {
    let t = series.len();
    let guard = |num: f64, den: f64| -> f64 {
        if den > 0.0 {
            (num / den).clamp(RATE_FLOOR, RATE_CEIL)
        } else {
            RATE_FLOOR
        }
    };
    let mut beta = vec![0.0; t];
    let mut gamma = vec![0.0; t];
    for day in 1..t {
        let src = match lag {
            MeanLag::Same => day,
            MeanLag::Previous => day - 1,
        };
        beta[day] = guard(increments.dm[day] * series.n, series.s[src] * series.i[src]);
        gamma[day] = guard(increments.dr[day], series.i[src]);
    }
    beta[0] = beta[1];
    gamma[0] = gamma[1];
    RatePath {
        beta: moving_average3(&beta),
        gamma: moving_average3(&gamma),
    }
}

/// Runs one chain (stream 0 of `config.seed`).
pub fn fit(series: &CompartmentSeries, spec: &PriorSpec, config: &McmcConfig) -> Result<PosteriorDraws> {
    fit_chain(series, spec, config, 0)
}

/// Runs chain number `chain`, seeded from stream `chain` of `config.seed`.
pub fn fit_chain(
    series: &CompartmentSeries,
    spec: &PriorSpec,
    config: &McmcConfig,
    chain: u64,
) -> Result<PosteriorDraws> {
    if series.len() < 3 {
        return Err(Error::Length(format!("fitting needs T ≥ 3, got {}", series.len())));
    }
    let increments = to_increments(series);
    let mut chain = Chain::new(series, &increments, spec, config, chain)?;
    chain.run()
}

/// Independent chains; output order follows the chain index.
pub fn run_chains(
    series: &CompartmentSeries,
    spec: &PriorSpec,
    config: &McmcConfig,
    n_chains: usize,
) -> Result<Vec<PosteriorDraws>> {
    if n_chains == 0 {
        return Err(Error::Config("need at least one chain".into()));
    }
    (0..n_chains as u64)
        .into_par_iter()
        .map(|k| fit_chain(series, spec, config, k))
        .collect()
}
