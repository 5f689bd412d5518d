//! Poisson-increment log-likelihood of a rate path.
//!
//! For `t = 2..T`:
//!
//! ```text
//! ΔM(t) ~ Poisson(β(t) S(t-lag) I(t-lag) / N)
//! ΔR(t) ~ Poisson(γ(t) I(t-lag))
//! ```
//!
//! with `lag ∈ {0, 1}`. [`PoissonModel`] caches the exposures and `ln k!`
//! once so that single-site updates cost O(1).

use serde::{Deserialize, Serialize};

use crate::data::{CompartmentSeries, IncrementSeries};
use crate::error::{Error, Result};
use crate::math::ln_factorial;

/// Latent daily rates `β(1..T)`, `γ(1..T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePath {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl RatePath {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn get(&self, which: Param) -> &[f64] {
        match which {
            Param::Beta => &self.beta,
            Param::Gamma => &self.gamma,
        }
    }

    pub fn get_mut(&mut self, which: Param) -> &mut Vec<f64> {
        match which {
            Param::Beta => &mut self.beta,
            Param::Gamma => &mut self.gamma,
        }
    }

    fn check(&self, t: usize) -> Result<()> {
        if self.beta.len() != t || self.gamma.len() != t {
            return Err(Error::Shape(format!(
                "rate path has {}/{} days, data has {t}",
                self.beta.len(),
                self.gamma.len()
            )));
        }
        if let Some(v) = self.beta.iter().chain(&self.gamma).find(|v| !(**v >= 0.0)) {
            return Err(Error::Domain(format!("rates must be nonnegative, found {v}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Beta,
    Gamma,
}

impl Param {
    pub const BOTH: [Param; 2] = [Param::Beta, Param::Gamma];

    pub fn name(self) -> &'static str {
        match self {
            Param::Beta => "beta",
            Param::Gamma => "gamma",
        }
    }
}

impl std::fmt::Display for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which state enters the Poisson mean of day `t`: `t` itself or `t - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MeanLag {
    Same,
    #[default]
    Previous,
}

impl MeanLag {
    pub fn from_int(v: u8) -> Result<Self> {
        match v {
            0 => Ok(MeanLag::Same),
            1 => Ok(MeanLag::Previous),
            _ => Err(Error::Config(format!("mean lag must be 0 or 1, got {v}"))),
        }
    }

    pub fn as_int(self) -> u8 {
        match self {
            MeanLag::Same => 0,
            MeanLag::Previous => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Term {
    count: f64,
    exposure: f64,
    ln_fact: f64,
}

impl Term {
    #[inline]
    fn eval(&self, rate: f64) -> f64 {
        let mu = rate * self.exposure;
        if mu == 0.0 {
            if self.count == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            self.count * mu.ln() - mu - self.ln_fact
        }
    }
}

/// Precomputed per-day Poisson terms for one data set.
#[derive(Debug, Clone)]
pub struct PoissonModel {
    infection: Vec<Term>,
    removal: Vec<Term>,
}

impl PoissonModel {
    pub fn new(series: &CompartmentSeries, increments: &IncrementSeries, lag: MeanLag) -> Result<Self> {
        let t = series.len();
        if increments.dm.len() != t || increments.dr.len() != t {
            return Err(Error::Shape(format!(
                "increments have {}/{} days, series has {t}",
                increments.dm.len(),
                increments.dr.len()
            )));
        }
        let empty = Term {
            count: 0.0,
            exposure: 0.0,
            ln_fact: 0.0,
        };
        let mut infection = vec![empty; t];
        let mut removal = vec![empty; t];
        for day in 1..t {
            let src = match lag {
                MeanLag::Same => day,
                MeanLag::Previous => day - 1,
            };
            let km = increments.dm[day];
            let kr = increments.dr[day];
            infection[day] = Term {
                count: km,
                exposure: series.s[src] * series.i[src] / series.n,
                ln_fact: ln_factorial(km),
            };
            removal[day] = Term {
                count: kr,
                exposure: series.i[src],
                ln_fact: ln_factorial(kr),
            };
        }
        Ok(Self { infection, removal })
    }

    pub fn len(&self) -> usize {
        self.infection.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infection.is_empty()
    }

    fn terms(&self, which: Param) -> &[Term] {
        match which {
            Param::Beta => &self.infection,
            Param::Gamma => &self.removal,
        }
    }

    /// Observed count on 0-based day index `idx`.
    pub fn count(&self, which: Param, idx: usize) -> f64 {
        self.terms(which)[idx].count
    }

    /// Exposure multiplying the rate on 0-based day index `idx`.
    pub fn exposure(&self, which: Param, idx: usize) -> f64 {
        self.terms(which)[idx].exposure
    }

    /// First 1-based day whose count is positive while its exposure is zero,
    /// i.e. a term that is `-inf` for every rate.
    pub fn impossible_day(&self) -> Option<(Param, usize)> {
        for which in Param::BOTH {
            for (idx, term) in self.terms(which).iter().enumerate().skip(1) {
                if term.exposure == 0.0 && term.count > 0.0 {
                    return Some((which, idx + 1));
                }
            }
        }
        None
    }

    /// Contribution of one rate on 0-based day index `idx` (zero for day 1).
    #[inline]
    pub fn term(&self, which: Param, idx: usize, rate: f64) -> f64 {
        if idx == 0 {
            return 0.0;
        }
        self.terms(which)[idx].eval(rate)
    }

    pub fn loglik(&self, path: &RatePath) -> f64 {
        let mut total = 0.0;
        for idx in 1..self.len() {
            total += self.infection[idx].eval(path.beta[idx]);
            total += self.removal[idx].eval(path.gamma[idx]);
        }
        total
    }

    /// `loglik(after) - loglik(before)` when one rate moves from `old` to `new`.
    #[inline]
    pub fn delta(&self, which: Param, idx: usize, old: f64, new: f64) -> f64 {
        if idx == 0 || old == new {
            return 0.0;
        }
        let term = &self.terms(which)[idx];
        if term.exposure == 0.0 {
            // rate does not enter the mean
            return 0.0;
        }
        if old == 0.0 || new == 0.0 {
            return term.eval(new) - term.eval(old);
        }
        term.count * (new / old).ln() - (new - old) * term.exposure
    }
}

/// Full log-likelihood of `path`.
pub fn loglik(
    path: &RatePath,
    series: &CompartmentSeries,
    increments: &IncrementSeries,
    lag: MeanLag,
) -> Result<f64> {
    path.check(series.len())?;
    Ok(PoissonModel::new(series, increments, lag)?.loglik(path))
}

/// Change in log-likelihood when rate `which` on 1-based day `day` is set to
/// `new_value`, computed from the single affected term.
pub fn loglik_term_delta(
    path: &RatePath,
    series: &CompartmentSeries,
    increments: &IncrementSeries,
    day: usize,
    which: Param,
    new_value: f64,
    lag: MeanLag,
) -> Result<f64> {
    path.check(series.len())?;
    if day < 2 || day > series.len() {
        return Err(Error::Domain(format!("day {day} outside 2..={}", series.len())));
    }
    if !(new_value >= 0.0) {
        return Err(Error::Domain(format!("rate must be nonnegative, got {new_value}")));
    }
    let model = PoissonModel::new(series, increments, lag)?;
    let old = path.get(which)[day - 1];
    Ok(model.delta(which, day - 1, old, new_value))
}
