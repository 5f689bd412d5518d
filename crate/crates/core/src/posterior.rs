//! Posterior summaries, change-point reports and replication metrics.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{Param, RatePath};
use crate::math::{mean, quantile_sorted, sorted_copy};
use crate::priors::PriorKind;
use crate::sampler::PosteriorDraws;
use crate::simulator::RateSchedule;

pub const MIN_HPD_SAMPLES: usize = 10;

/// Number of order statistics an HPD window of `level` spans.
fn window_len(n: usize, level: f64) -> usize {
    // guard against level * n landing a hair above an integer
    let w = (level * n as f64 - 1e-9).ceil() as usize;
    w.clamp(1, n)
}

/// Start and end index (inclusive) of the shortest window in `sorted`;
/// ties go to the smallest start.
pub fn hpd_window(sorted: &[f64], level: f64) -> Result<(usize, usize)> {
    if sorted.len() < MIN_HPD_SAMPLES {
        return Err(Error::Size(format!(
            "HPD needs at least {MIN_HPD_SAMPLES} samples, got {}",
            sorted.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("HPD level {level} outside (0, 1)")));
    }
    let w = window_len(sorted.len(), level);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for start in 0..=sorted.len() - w {
        let width = sorted[start + w - 1] - sorted[start];
        if width < best_width {
            best_width = width;
            best = start;
        }
    }
    Ok((best, best + w - 1))
}

/// Shortest interval holding at least `level` of the samples.
pub fn hpd_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    let sorted = sorted_copy(samples);
    let (lo, hi) = hpd_window(&sorted, level)?;
    Ok((sorted[lo], sorted[hi]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryBand {
    /// 1-based day.
    pub t: usize,
    pub param: Param,
    pub mean: f64,
    pub median: f64,
    pub hpd_lo: f64,
    pub hpd_hi: f64,
}

impl SummaryBand {
    pub fn width(&self) -> f64 {
        self.hpd_hi - self.hpd_lo
    }
}

/// Per-day mean, median and HPD band of β then γ.
pub fn summarize(draws: &PosteriorDraws, level: f64) -> Result<Vec<SummaryBand>> {
    if draws.is_empty() {
        return Err(Error::Size("no draws to summarize".into()));
    }
    let t = draws.days();
    let jobs: Vec<(Param, usize)> = Param::BOTH
        .iter()
        .flat_map(|&p| (0..t).map(move |c| (p, c)))
        .collect();
    jobs.into_par_iter()
        .map(|(param, c)| {
            let col = draws.matrix(param).column(c);
            let sorted = sorted_copy(&col);
            let (lo, hi) = if sorted.len() >= MIN_HPD_SAMPLES {
                let (a, b) = hpd_window(&sorted, level)?;
                (sorted[a], sorted[b])
            } else {
                (sorted[0], sorted[sorted.len() - 1])
            };
            Ok(SummaryBand {
                t: c + 1,
                param,
                mean: mean(&col),
                median: quantile_sorted(&sorted, 0.5),
                hpd_lo: lo,
                hpd_hi: hi,
            })
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(bands: &[SummaryBand], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "param", "mean", "median", "hpd_lo", "hpd_hi"])?;
    for b in bands {
        w.write_record([
            b.t.to_string(),
            b.param.to_string(),
            b.mean.to_string(),
            b.median.to_string(),
            b.hpd_lo.to_string(),
            b.hpd_hi.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<summary csv>", e))?;
    Ok(())
}

/// Which per-replicate point estimate feeds the replication metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PointEstimate {
    #[default]
    Mean,
    Median,
}

pub fn point_estimate(draws: &PosteriorDraws, kind: PointEstimate) -> RatePath {
    match kind {
        PointEstimate::Mean => draws.mean_path(),
        PointEstimate::Median => {
            let med = |p: Param| -> Vec<f64> {
                let m = draws.matrix(p);
                (0..m.cols())
                    .map(|c| quantile_sorted(&sorted_copy(&m.column(c)), 0.5))
                    .collect()
            };
            RatePath {
                beta: med(Param::Beta),
                gamma: med(Param::Gamma),
            }
        }
    }
}

/// MAB, MSE and the across-replicate dispersion for one parameter.
///
/// `sd` follows the replication-study definition literally: the sum of
/// squared deviations from the replicate mean divided by `L - 1` (a
/// variance). [`ParamMetrics::sd_sqrt`] gives its square root. Both are
/// `None` with a single replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMetrics {
    pub mab: Vec<f64>,
    pub mse: Vec<f64>,
    pub sd: Option<Vec<f64>>,
}

impl ParamMetrics {
    pub fn sd_sqrt(&self) -> Option<Vec<f64>> {
        self.sd.as_ref().map(|v| v.iter().map(|x| x.sqrt()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub beta: ParamMetrics,
    pub gamma: ParamMetrics,
}

impl MetricSeries {
    pub fn get(&self, which: Param) -> &ParamMetrics {
        match which {
            Param::Beta => &self.beta,
            Param::Gamma => &self.gamma,
        }
    }
}

/// Per-day replication metrics of point estimates against the true schedule.
pub fn replication_metrics(estimates: &[RatePath], truth: &RateSchedule) -> Result<MetricSeries> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::Size("need at least one replicate".into()))?;
    let t = first.len();
    if estimates.iter().any(|e| e.beta.len() != t || e.gamma.len() != t) {
        return Err(Error::Shape("replicate estimates differ in length".into()));
    }
    let truth = truth.to_path(t);
    let l = estimates.len() as f64;
    let one = |which: Param| -> ParamMetrics {
        let true_values = truth.get(which);
        let mut mab = vec![0.0; t];
        let mut mse = vec![0.0; t];
        let mut sd = vec![0.0; t];
        for day in 0..t {
            let vals: Vec<f64> = estimates.iter().map(|e| e.get(which)[day]).collect();
            let bar = vals.iter().sum::<f64>() / l;
            for v in &vals {
                let err = v - true_values[day];
                mab[day] += err.abs() / l;
                mse[day] += err * err / l;
                if estimates.len() > 1 {
                    sd[day] += (v - bar) * (v - bar) / (l - 1.0);
                }
            }
        }
        ParamMetrics {
            mab,
            mse,
            sd: (estimates.len() > 1).then_some(sd),
        }
    };
    Ok(MetricSeries {
        beta: one(Param::Beta),
        gamma: one(Param::Gamma),
    })
}

pub fn write_metrics_csv<W: Write>(metrics: &MetricSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "param", "mab", "mse", "sd", "sd_sqrt"])?;
    for which in Param::BOTH {
        let m = metrics.get(which);
        let root = m.sd_sqrt();
        for day in 0..m.mab.len() {
            let (sd, sq) = match (&m.sd, &root) {
                (Some(sd), Some(sq)) => (sd[day].to_string(), sq[day].to_string()),
                _ => ("NA".to_string(), "NA".to_string()),
            };
            w.write_record([
                (day + 1).to_string(),
                which.to_string(),
                m.mab[day].to_string(),
                m.mse[day].to_string(),
                sd,
                sq,
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<metrics csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Evidence {
    /// Equal-tailed 95% interval of the difference, excluding zero.
    Interval { lo: f64, hi: f64 },
    /// Posterior slab-inclusion frequency.
    Inclusion(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePoint {
    /// 1-based day of the jump `x(t) - x(t-1)`.
    pub t: usize,
    pub param: Param,
    pub evidence: Evidence,
}

/// Flags days whose difference is credibly nonzero: for continuous priors
/// when the equal-tailed 95% interval of `x(t) - x(t-1)` excludes zero, for
/// spike-and-slab when the slab-inclusion frequency exceeds `threshold`.
pub fn change_point_report(draws: &PosteriorDraws, kind: PriorKind, threshold: f64) -> Result<Vec<ChangePoint>> {
    if draws.is_empty() {
        return Err(Error::Size("no draws".into()));
    }
    let t = draws.days();
    let mut out = Vec::new();
    for which in Param::BOTH {
        let m = draws.matrix(which);
        for day in 2..=t {
            let evidence = match kind {
                PriorKind::SpikeSlab => {
                    if draws.scales.len() != draws.len() {
                        return Err(Error::Size("spike-and-slab report needs the indicator draws".into()));
                    }
                    let freq = draws
                        .scales
                        .iter()
                        .map(|s| s.local(which)[day - 2])
                        .sum::<f64>()
                        / draws.len() as f64;
                    (freq > threshold).then_some(Evidence::Inclusion(freq))
                }
                PriorKind::StudentT | PriorKind::Horseshoe => {
                    let diffs: Vec<f64> = m.iter_rows().map(|r| r[day - 1] - r[day - 2]).collect();
                    let sorted = sorted_copy(&diffs);
                    let lo = quantile_sorted(&sorted, 0.025);
                    let hi = quantile_sorted(&sorted, 0.975);
                    (lo > 0.0 || hi < 0.0).then_some(Evidence::Interval { lo, hi })
                }
            };
            if let Some(evidence) = evidence {
                out.push(ChangePoint {
                    t: day,
                    param: which,
                    evidence,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_change_points_csv<W: Write>(points: &[ChangePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "param", "kind", "lo_or_freq", "hi"])?;
    for p in points {
        let (kind, a, b) = match p.evidence {
            Evidence::Interval { lo, hi } => ("interval", lo.to_string(), hi.to_string()),
            Evidence::Inclusion(f) => ("inclusion", f.to_string(), String::new()),
        };
        w.write_record([p.t.to_string(), p.param.to_string(), kind.to_string(), a, b])?;
    }
    w.flush().map_err(|e| Error::io("<change point csv>", e))?;
    Ok(())
}

/// Potential scale reduction factor of a scalar summary across chains.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::Size("R-hat needs at least two chains".into()));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Shape("chains must share a length ≥ 2".into()));
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let b = n as f64 / (m as f64 - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0))
        .sum::<f64>()
        / m as f64;
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    Ok((var_plus / w).sqrt())
}
