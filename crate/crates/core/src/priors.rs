//! Fusion priors on successive rate differences.
//!
//! Every prior is handled in its Gaussian scale-mixture form. Writing
//! `d_t = x(t) - x(t-1)` for `x ∈ {β, γ}` and `t = 2..T`:
//!
//! ```text
//! student-t   d_t | s_t, σ² ~ N(0, s_t σ²)           s_t ~ IG(a, b)
//! horseshoe   d_t | s_t, σ² ~ N(0, s_t σ²)           s_t = λ_t²,  λ_t² | ν_t ~ IG(1/2, 1/ν_t),  ν_t ~ IG(1/2, 1)
//! spike-slab  d_t | z_t, σ² ~ z_t N(0, σ²) + (1 - z_t) N(0, ε²),   z_t ~ Ber(p)
//! all         x(1) | σ² ~ N(0, σ² m₁),  σ² ~ IG(a_σ, b_σ)
//! ```
//!
//! The horseshoe pair `(λ², ν)` integrates to `λ ~ C⁺(0, 1)`. For `γ` the
//! local hyperparameters are `(c, d)`, the inclusion probability is `π` and
//! the initial-value multiplier is `η₁`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::likelihood::{Param, RatePath};
use crate::math::{ln_normal0, std_normal, InvGamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum PriorKind {
    #[serde(rename = "t", alias = "student-t")]
    #[value(name = "t", alias = "student-t")]
    StudentT,
    #[serde(rename = "horseshoe")]
    #[value(name = "horseshoe")]
    Horseshoe,
    #[serde(rename = "spikeslab", alias = "spike-slab")]
    #[value(name = "spikeslab", alias = "spike-slab")]
    SpikeSlab,
}

impl PriorKind {
    pub const ALL: [PriorKind; 3] = [PriorKind::StudentT, PriorKind::Horseshoe, PriorKind::SpikeSlab];

    pub fn name(self) -> &'static str {
        match self {
            PriorKind::StudentT => "t",
            PriorKind::Horseshoe => "horseshoe",
            PriorKind::SpikeSlab => "spikeslab",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "t" | "student-t" => Ok(PriorKind::StudentT),
            "horseshoe" => Ok(PriorKind::Horseshoe),
            "spikeslab" | "spike-slab" => Ok(PriorKind::SpikeSlab),
            other => Err(Error::Spec(format!("unknown prior `{other}`"))),
        }
    }
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Prior choice and hyperparameters, flat so that it maps one-to-one onto
/// the TOML config file. Fields not used by `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub kind: PriorKind,
    /// IG shape of the β local scales (student-t); `df_β = 2a`.
    pub a: f64,
    /// IG scale of the β local scales (student-t); `l_β = sqrt(b/a)`.
    pub b: f64,
    /// IG shape of the γ local scales (student-t).
    pub c: f64,
    /// IG scale of the γ local scales (student-t).
    pub d: f64,
    pub a_sigma_beta: f64,
    pub b_sigma_beta: f64,
    pub a_sigma_gamma: f64,
    pub b_sigma_gamma: f64,
    /// Slab inclusion probability for Δβ.
    pub p: f64,
    /// Slab inclusion probability for Δγ.
    pub pi: f64,
    /// Spike standard deviation; the spike variance is `epsilon²`.
    pub epsilon: f64,
    /// Variance multiplier of the β(1) prior.
    pub lambda1: f64,
    /// Variance multiplier of the γ(1) prior.
    pub eta1: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::new(PriorKind::StudentT)
    }
}

pub const MAX_EPSILON: f64 = 1e-2;

/// Scale of the global-variance priors. Rate differences live on the
/// 1e-3..1e-1 scale, so a larger value would dominate the posterior of σ².
pub const DEFAULT_B_SIGMA: f64 = 1e-3;

/// Hyperparameters seen by one of the two rate series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPrior {
    pub kind: PriorKind,
    pub local_shape: f64,
    pub local_scale: f64,
    pub inclusion: f64,
    pub epsilon: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub init_mult: f64,
}

impl PriorSpec {
    /// Defaults: `a = b = c = d = 1`, IG(0.1, 0.001) globals, `p = π = 0.5`,
    /// `ε = 1e-4`, `λ₁ = η₁ = 100`.
    pub fn new(kind: PriorKind) -> Self {
        Self {
            kind,
            a: 1.0,
            b: 1.0,
            c: 1.0,
            d: 1.0,
            a_sigma_beta: 0.1,
            b_sigma_beta: DEFAULT_B_SIGMA,
            a_sigma_gamma: 0.1,
            b_sigma_gamma: DEFAULT_B_SIGMA,
            p: 0.5,
            pi: 0.5,
            epsilon: 1e-4,
            lambda1: 100.0,
            eta1: 100.0,
        }
    }

    pub fn series(&self, which: Param) -> SeriesPrior {
        match which {
            Param::Beta => SeriesPrior {
                kind: self.kind,
                local_shape: self.a,
                local_scale: self.b,
                inclusion: self.p,
                epsilon: self.epsilon,
                a_sigma: self.a_sigma_beta,
                b_sigma: self.b_sigma_beta,
                init_mult: self.lambda1,
            },
            Param::Gamma => SeriesPrior {
                kind: self.kind,
                local_shape: self.c,
                local_scale: self.d,
                inclusion: self.pi,
                epsilon: self.epsilon,
                a_sigma: self.a_sigma_gamma,
                b_sigma: self.b_sigma_gamma,
                init_mult: self.eta1,
            },
        }
    }

    /// Degrees of freedom and scale multiplier `(2a, sqrt(b/a))` of the
    /// marginal t law of Δβ (or Δγ) given σ².
    pub fn t_marginal(&self, which: Param) -> (f64, f64) {
        let s = self.series(which);
        (2.0 * s.local_shape, (s.local_scale / s.local_shape).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_common()?;
        if self.kind == PriorKind::SpikeSlab {
            for (name, v) in [("p", self.p), ("pi", self.pi)] {
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::Spec(format!("{name} must lie in (0, 1), got {v}")));
                }
            }
        }
        Ok(())
    }

    /// Checks everything except the open-interval constraint on inclusion
    /// probabilities, which generative use may take to 0 or 1.
    fn validate_common(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Spec(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("a_sigma_beta", self.a_sigma_beta)?;
        positive("b_sigma_beta", self.b_sigma_beta)?;
        positive("a_sigma_gamma", self.a_sigma_gamma)?;
        positive("b_sigma_gamma", self.b_sigma_gamma)?;
        positive("lambda1", self.lambda1)?;
        positive("eta1", self.eta1)?;
        match self.kind {
            PriorKind::StudentT => {
                positive("a", self.a)?;
                positive("b", self.b)?;
                positive("c", self.c)?;
                positive("d", self.d)?;
            }
            PriorKind::Horseshoe => {}
            PriorKind::SpikeSlab => {
                positive("epsilon", self.epsilon)?;
                if self.epsilon > MAX_EPSILON {
                    return Err(Error::Spec(format!(
                        "epsilon must be ≤ {MAX_EPSILON} so the spike stays narrow, got {}",
                        self.epsilon
                    )));
                }
                for (name, v) in [("p", self.p), ("pi", self.pi)] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Spec(format!("{name} must lie in [0, 1], got {v}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: PriorSpec = toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat struct serializes")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("flat struct serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Latent scales of both series. `lambda[j]`/`eta[j]` belong to day `j + 2`.
///
/// - student-t: the IG variance multipliers `s_t`;
/// - horseshoe: the squared local scales `λ_t²` (`nu`, `xi` hold the
///   auxiliary IG variables);
/// - spike-slab: inclusion indicators stored as `0.0`/`1.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentScales {
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub sigma2_beta: f64,
    pub sigma2_gamma: f64,
    pub nu: Vec<f64>,
    pub xi: Vec<f64>,
}

impl LatentScales {
    /// Unit local scales (all slabs included) with the given global variances.
    pub fn initial(kind: PriorKind, t: usize, sigma2_beta: f64, sigma2_gamma: f64) -> Self {
        let m = t.saturating_sub(1);
        let aux = if kind == PriorKind::Horseshoe { vec![1.0; m] } else { Vec::new() };
        Self {
            lambda: vec![1.0; m],
            eta: vec![1.0; m],
            sigma2_beta,
            sigma2_gamma,
            nu: aux.clone(),
            xi: aux,
        }
    }

    pub fn local(&self, which: Param) -> &[f64] {
        match which {
            Param::Beta => &self.lambda,
            Param::Gamma => &self.eta,
        }
    }

    pub fn local_mut(&mut self, which: Param) -> &mut Vec<f64> {
        match which {
            Param::Beta => &mut self.lambda,
            Param::Gamma => &mut self.eta,
        }
    }

    pub fn aux(&self, which: Param) -> &[f64] {
        match which {
            Param::Beta => &self.nu,
            Param::Gamma => &self.xi,
        }
    }

    pub fn aux_mut(&mut self, which: Param) -> &mut Vec<f64> {
        match which {
            Param::Beta => &mut self.nu,
            Param::Gamma => &mut self.xi,
        }
    }

    pub fn sigma2(&self, which: Param) -> f64 {
        match which {
            Param::Beta => self.sigma2_beta,
            Param::Gamma => self.sigma2_gamma,
        }
    }

    pub fn set_sigma2(&mut self, which: Param, value: f64) {
        match which {
            Param::Beta => self.sigma2_beta = value,
            Param::Gamma => self.sigma2_gamma = value,
        }
    }

    /// Conditional variance of difference `j` (day `j + 2`).
    #[inline]
    pub fn diff_variance(&self, which: Param, j: usize, spec: &PriorSpec) -> f64 {
        let local = self.local(which)[j];
        let sigma2 = self.sigma2(which);
        match spec.kind {
            PriorKind::StudentT | PriorKind::Horseshoe => local * sigma2,
            PriorKind::SpikeSlab => {
                if local == 1.0 {
                    sigma2
                } else {
                    spec.epsilon * spec.epsilon
                }
            }
        }
    }

    pub fn check(&self, spec: &PriorSpec, t: usize) -> Result<()> {
        let m = t - 1;
        if self.lambda.len() != m || self.eta.len() != m {
            return Err(Error::Spec(format!(
                "need {m} local scales per series, got {}/{}",
                self.lambda.len(),
                self.eta.len()
            )));
        }
        if !(self.sigma2_beta > 0.0 && self.sigma2_gamma > 0.0) {
            return Err(Error::Spec("global variances must be positive".into()));
        }
        match spec.kind {
            PriorKind::StudentT => {
                if self.lambda.iter().chain(&self.eta).any(|v| !(*v > 0.0)) {
                    return Err(Error::Spec("student-t scales must be positive".into()));
                }
            }
            PriorKind::Horseshoe => {
                if self.nu.len() != m || self.xi.len() != m {
                    return Err(Error::Spec("horseshoe needs auxiliary ν and ξ per day".into()));
                }
                if self
                    .lambda
                    .iter()
                    .chain(&self.eta)
                    .chain(&self.nu)
                    .chain(&self.xi)
                    .any(|v| !(*v > 0.0))
                {
                    return Err(Error::Spec("horseshoe scales must be positive".into()));
                }
            }
            PriorKind::SpikeSlab => {
                if self.lambda.iter().chain(&self.eta).any(|v| *v != 0.0 && *v != 1.0) {
                    return Err(Error::Spec("spike-slab indicators must be 0 or 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Full conditional of one local scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalConditional {
    InvGamma(InvGamma),
    /// Probability that the difference belongs to the slab.
    Bernoulli(f64),
}

/// Successive differences `x(t) - x(t-1)`, `t = 2..T`.
pub fn differences(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Joint log-density of the path, local scales and global variances.
pub fn log_prior(path: &RatePath, scales: &LatentScales, spec: &PriorSpec) -> Result<f64> {
    scales.check(spec, path.len())?;
    let mut total = 0.0;
    for which in Param::BOTH {
        let sp = spec.series(which);
        let x = path.get(which);
        let sigma2 = scales.sigma2(which);
        let local = scales.local(which);
        total += ln_normal0(x[0], sigma2 * sp.init_mult);
        total += InvGamma::new(sp.a_sigma, sp.b_sigma).ln_pdf(sigma2);
        for (j, d) in differences(x).into_iter().enumerate() {
            total += ln_normal0(d, scales.diff_variance(which, j, spec));
            total += match spec.kind {
                PriorKind::StudentT => InvGamma::new(sp.local_shape, sp.local_scale).ln_pdf(local[j]),
                PriorKind::Horseshoe => {
                    let nu = scales.aux(which)[j];
                    InvGamma::new(0.5, 1.0 / nu).ln_pdf(local[j]) + InvGamma::new(0.5, 1.0).ln_pdf(nu)
                }
                PriorKind::SpikeSlab => {
                    if local[j] == 1.0 {
                        sp.inclusion.ln()
                    } else {
                        (1.0 - sp.inclusion).ln()
                    }
                }
            };
        }
    }
    Ok(total)
}

/// Full conditional of local scale `j` (day `j + 2`) given everything else.
pub fn local_conditional(
    which: Param,
    j: usize,
    diff: f64,
    scales: &LatentScales,
    spec: &PriorSpec,
) -> LocalConditional {
    let sp = spec.series(which);
    let sigma2 = scales.sigma2(which);
    let half_sq = 0.5 * diff * diff / sigma2;
    match spec.kind {
        PriorKind::StudentT => {
            LocalConditional::InvGamma(InvGamma::new(sp.local_shape + 0.5, sp.local_scale + half_sq))
        }
        PriorKind::Horseshoe => {
            let nu = scales.aux(which)[j];
            LocalConditional::InvGamma(InvGamma::new(1.0, 1.0 / nu + half_sq))
        }
        PriorKind::SpikeSlab => {
            let eps2 = sp.epsilon * sp.epsilon;
            let slab = sp.inclusion.ln() + ln_normal0(diff, sigma2);
            let spike = (1.0 - sp.inclusion).ln() + ln_normal0(diff, eps2);
            LocalConditional::Bernoulli(1.0 / (1.0 + (spike - slab).exp()))
        }
    }
}

/// Horseshoe auxiliary conditional `ν | λ² ~ IG(1, 1 + 1/λ²)`.
pub fn aux_conditional(local: f64) -> InvGamma {
    InvGamma::new(1.0, 1.0 + 1.0 / local)
}

/// Full conditional of the global variance of `which`.
pub fn global_conditional(which: Param, path: &RatePath, scales: &LatentScales, spec: &PriorSpec) -> InvGamma {
    let sp = spec.series(which);
    let x = path.get(which);
    let local = scales.local(which);
    let mut shape = sp.a_sigma + 0.5;
    let mut rate = sp.b_sigma + 0.5 * x[0] * x[0] / sp.init_mult;
    for (j, w) in x.windows(2).enumerate() {
        let d = w[1] - w[0];
        match spec.kind {
            PriorKind::StudentT | PriorKind::Horseshoe => {
                shape += 0.5;
                rate += 0.5 * d * d / local[j];
            }
            PriorKind::SpikeSlab => {
                if local[j] == 1.0 {
                    shape += 0.5;
                    rate += 0.5 * d * d;
                }
            }
        }
    }
    InvGamma::new(shape, rate)
}

/// One exact Gibbs pass over all local scales (and horseshoe auxiliaries).
pub fn gibbs_update_scales<R: Rng + ?Sized>(
    path: &RatePath,
    scales: &mut LatentScales,
    spec: &PriorSpec,
    rng: &mut R,
) {
    for which in Param::BOTH {
        let x = path.get(which);
        for j in 0..x.len() - 1 {
            let diff = x[j + 1] - x[j];
            match local_conditional(which, j, diff, scales, spec) {
                LocalConditional::InvGamma(ig) => {
                    let v = ig.sample(rng);
                    scales.local_mut(which)[j] = v;
                    if spec.kind == PriorKind::Horseshoe {
                        scales.aux_mut(which)[j] = aux_conditional(v).sample(rng);
                    }
                }
                LocalConditional::Bernoulli(w) => {
                    scales.local_mut(which)[j] = if rng.random::<f64>() < w { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

/// Exact Gibbs draws of both global variances.
pub fn gibbs_update_global<R: Rng + ?Sized>(
    path: &RatePath,
    scales: &mut LatentScales,
    spec: &PriorSpec,
    rng: &mut R,
) {
    for which in Param::BOTH {
        let v = global_conditional(which, path, scales, spec).sample(rng);
        scales.set_sigma2(which, v);
    }
}

/// Ancestral draw of globals, local scales, differences and the cumulative
/// path. No positivity constraint is applied.
pub fn sample_prior_path<R: Rng + ?Sized>(
    spec: &PriorSpec,
    t: usize,
    rng: &mut R,
) -> Result<(RatePath, LatentScales)> {
    if t < 2 {
        return Err(Error::Length(format!("prior path needs T ≥ 2, got {t}")));
    }
    spec.validate_common()?;
    let mut scales = LatentScales::initial(spec.kind, t, 1.0, 1.0);
    let mut path = RatePath {
        beta: Vec::with_capacity(t),
        gamma: Vec::with_capacity(t),
    };
    for which in Param::BOTH {
        let sp = spec.series(which);
        let sigma2 = InvGamma::new(sp.a_sigma, sp.b_sigma).sample(rng);
        scales.set_sigma2(which, sigma2);
        for j in 0..t - 1 {
            match spec.kind {
                PriorKind::StudentT => {
                    scales.local_mut(which)[j] = InvGamma::new(sp.local_shape, sp.local_scale).sample(rng);
                }
                PriorKind::Horseshoe => {
                    let nu = InvGamma::new(0.5, 1.0).sample(rng);
                    scales.aux_mut(which)[j] = nu;
                    scales.local_mut(which)[j] = InvGamma::new(0.5, 1.0 / nu).sample(rng);
                }
                PriorKind::SpikeSlab => {
                    scales.local_mut(which)[j] = if rng.random::<f64>() < sp.inclusion { 1.0 } else { 0.0 };
                }
            }
        }
        let x = path.get_mut(which);
        let mut current = (sigma2 * sp.init_mult).sqrt() * std_normal(rng);
        x.push(current);
        for j in 0..t - 1 {
            current += scales.diff_variance(which, j, spec).sqrt() * std_normal(rng);
            x.push(current);
        }
    }
    Ok((path, scales))
}
