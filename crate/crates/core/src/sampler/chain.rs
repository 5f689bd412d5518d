use rand::Rng;

use super::{
    init_from_data, DrawMatrix, Init, McmcConfig, PosteriorDraws, Provenance, SiteStats, Target, RATE_CEIL,
    RATE_FLOOR,
};
use crate::data::{CompartmentSeries, IncrementSeries};
use crate::error::{Error, Result};
use crate::likelihood::{Param, PoissonModel, RatePath};
use crate::math::std_normal;
use crate::priors::{
    differences, gibbs_update_global, gibbs_update_scales, sample_prior_path, LatentScales, PriorSpec,
};
use crate::rng::{seeded, ChainRng};

const ADAPT_EXPONENT: f64 = 0.6;

/// A single Markov chain. Exposed so that callers can step it manually.
pub struct Chain<'a> {
    model: Option<PoissonModel>,
    spec: &'a PriorSpec,
    config: &'a McmcConfig,
    chain: u64,
    rng: ChainRng,
    path: RatePath,
    scales: LatentScales,
    /// Cached conditional variances of the differences, per series.
    diff_var: [Vec<f64>; 2],
    log_step: [Vec<f64>; 2],
    accepted: [Vec<u64>; 2],
    counted_sweeps: u64,
    sweep: usize,
    warnings: Vec<String>,
}

fn slot(which: Param) -> usize {
    match which {
        Param::Beta => 0,
        Param::Gamma => 1,
    }
}

impl<'a> Chain<'a> {
    pub fn new(
        series: &CompartmentSeries,
        increments: &IncrementSeries,
        spec: &'a PriorSpec,
        config: &'a McmcConfig,
        chain: u64,
    ) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        let t = series.len();
        let mut rng = seeded(config.seed, chain);
        let mut warnings = Vec::new();

        let model = match config.target {
            Target::Posterior => {
                let model = PoissonModel::new(series, increments, config.mean_lag)?;
                if let Some((which, day)) = model.impossible_day() {
                    return Err(Error::Domain(format!(
                        "day {day}: positive {which} count with zero exposure has zero likelihood for any rate"
                    )));
                }
                Some(model)
            }
            Target::PriorOnly => None,
        };

        let mut init = config.init.clone();
        if init == Init::FromData && config.target == Target::PriorOnly {
            init = Init::FromPrior;
        }
        if init == Init::FromData && increments.all_zero_after_first() {
            let msg = "all increments are zero; initializing from the prior instead of the data".to_string();
            log::warn!("{msg}");
            warnings.push(msg);
            init = Init::FromPrior;
        }
        let (path, scales) = match init {
            Init::FromData => {
                let path = init_from_data(series, increments, config.mean_lag);
                let scales = scales_for(&path, spec, t);
                (path, scales)
            }
            Init::FromPrior => {
                let (mut path, scales) = sample_prior_path(spec, t, &mut rng)?;
                if model.is_some() {
                    for v in path.beta.iter_mut().chain(path.gamma.iter_mut()) {
                        *v = v.abs().clamp(RATE_FLOOR, RATE_CEIL);
                    }
                }
                (path, scales)
            }
            Init::Fixed(path) => {
                if path.len() != t || path.gamma.len() != t {
                    return Err(Error::Shape(format!("fixed initial path must have {t} days")));
                }
                if path.beta.iter().chain(&path.gamma).any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::Domain("fixed initial path must be nonnegative".into()));
                }
                let scales = scales_for(&path, spec, t);
                (path, scales)
            }
        };
        if let Some(model) = &model {
            if !model.loglik(&path).is_finite() {
                return Err(Error::Domain("initial rate path has zero likelihood".into()));
            }
        }

        let log_step0 = config.initial_step.ln();
        let mut chain = Self {
            model,
            spec,
            config,
            chain,
            rng,
            path,
            scales,
            diff_var: [vec![0.0; t - 1], vec![0.0; t - 1]],
            log_step: [vec![log_step0; t], vec![log_step0; t]],
            accepted: [vec![0; t], vec![0; t]],
            counted_sweeps: 0,
            sweep: 0,
            warnings,
        };
        chain.refresh_variances();
        Ok(chain)
    }

    pub fn path(&self) -> &RatePath {
        &self.path
    }

    pub fn scales(&self) -> &LatentScales {
        &self.scales
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweep
    }

    pub fn step_sizes(&self) -> SiteStats {
        SiteStats {
            beta: self.log_step[0].iter().map(|v| v.exp()).collect(),
            gamma: self.log_step[1].iter().map(|v| v.exp()).collect(),
        }
    }

    fn refresh_variances(&mut self) {
        for which in Param::BOTH {
            let k = slot(which);
            for j in 0..self.diff_var[k].len() {
                self.diff_var[k][j] = self.scales.diff_variance(which, j, self.spec);
            }
        }
    }

    /// Log prior change when `x[idx]` moves from `old` to `new`.
    #[inline]
    fn prior_delta(&self, which: Param, idx: usize, old: f64, new: f64) -> f64 {
        let k = slot(which);
        let x = self.path.get(which);
        let var = &self.diff_var[k];
        let mut delta = 0.0;
        if idx == 0 {
            let v0 = self.scales.sigma2(which) * self.spec.series(which).init_mult;
            delta -= (new * new - old * old) / (2.0 * v0);
        } else {
            let left = x[idx - 1];
            let (dn, dold) = (new - left, old - left);
            delta -= (dn * dn - dold * dold) / (2.0 * var[idx - 1]);
        }
        if idx + 1 < x.len() {
            let right = x[idx + 1];
            let (dn, dold) = (right - new, right - old);
            delta -= (dn * dn - dold * dold) / (2.0 * var[idx]);
        }
        delta
    }

    fn update_sites(&mut self, which: Param, adapting: bool, counting: bool) {
        let k = slot(which);
        let t = self.path.len();
        let gain = (self.sweep as f64).powf(-ADAPT_EXPONENT);
        for idx in 0..t {
            let old = self.path.get(which)[idx];
            let step = self.log_step[k][idx].exp();
            let proposal = old + step * std_normal(&mut self.rng);
            // Rates must stay nonnegative; the prior-only target has no such
            // constraint.
            let accepted = if proposal < 0.0 && self.model.is_some() {
                false
            } else {
                let mut log_ratio = self.prior_delta(which, idx, old, proposal);
                if let Some(model) = &self.model {
                    log_ratio += model.delta(which, idx, old, proposal);
                }
                log_ratio >= 0.0 || self.rng.random::<f64>().ln() < log_ratio
            };
            if accepted {
                self.path.get_mut(which)[idx] = proposal;
            }
            if adapting {
                let a = if accepted { 1.0 } else { 0.0 };
                self.log_step[k][idx] += gain * (a - self.config.target_accept);
            }
            if counting && accepted {
                self.accepted[k][idx] += 1;
            }
        }
    }

    /// One full systematic-scan sweep.
    pub fn sweep(&mut self) {
        self.sweep += 1;
        let adapting = self.sweep <= self.config.adapt_until;
        let counting = !adapting || self.config.adapt_until >= self.config.iterations;
        if counting {
            self.counted_sweeps += 1;
        }
        self.update_sites(Param::Beta, adapting, counting);
        self.update_sites(Param::Gamma, adapting, counting);
        gibbs_update_scales(&self.path, &mut self.scales, self.spec, &mut self.rng);
        gibbs_update_global(&self.path, &mut self.scales, self.spec, &mut self.rng);
        self.refresh_variances();
    }

    /// Runs the configured number of sweeps and collects the kept samples.
    pub fn run(&mut self) -> Result<PosteriorDraws> {
        let cfg = self.config;
        let t = self.path.len();
        let mut beta = DrawMatrix::new(t);
        let mut gamma = DrawMatrix::new(t);
        let mut scales = Vec::with_capacity(cfg.kept());
        while self.sweep < cfg.iterations {
            self.sweep();
            if self.sweep.is_multiple_of(cfg.thin) && self.sweep / cfg.thin > cfg.burn_in {
                beta.push_row(&self.path.beta)?;
                gamma.push_row(&self.path.gamma)?;
                scales.push(self.scales.clone());
            }
        }
        let rate = |counts: &[u64]| -> Vec<f64> {
            counts
                .iter()
                .map(|&c| c as f64 / self.counted_sweeps.max(1) as f64)
                .collect()
        };
        Ok(PosteriorDraws {
            beta,
            gamma,
            scales,
            acceptance: SiteStats {
                beta: rate(&self.accepted[0]),
                gamma: rate(&self.accepted[1]),
            },
            step_sizes: self.step_sizes(),
            provenance: Some(Provenance {
                seed: cfg.seed,
                chain: self.chain,
                config: cfg.clone(),
                prior: self.spec.clone(),
                prior_digest: self.spec.digest(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            }),
            warnings: self.warnings.clone(),
        })
    }
}

/// Starting scales matched to a path: unit locals and global variances set
/// to the mean squared difference.
fn scales_for(path: &RatePath, spec: &PriorSpec, t: usize) -> LatentScales {
    let spread = |x: &[f64]| -> f64 {
        let d = differences(x);
        (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).max(1e-8)
    };
    LatentScales::initial(spec.kind, t, spread(&path.beta), spread(&path.gamma))
}
