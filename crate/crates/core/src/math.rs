//! Numerical helpers shared by the likelihood, priors and sampler.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// Lanczos approximation, g = 7, 9 terms.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ln(k!)` for a nonnegative integer count stored as `f64`.
pub fn ln_factorial(k: f64) -> f64 {
    if k < 2.0 {
        0.0
    } else {
        ln_gamma(k + 1.0)
    }
}

/// Poisson log-pmf with the conventions `log p(0; 0) = 0` and `log p(k > 0; 0) = -inf`.
pub fn log_poisson(k: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k * mu.ln() - mu - ln_factorial(k)
}

/// Log-density of `N(0, var)` at `x`.
#[inline]
pub fn ln_normal0(x: f64, var: f64) -> f64 {
    -0.5 * (x * x / var) - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Inverse-gamma distribution with density `b^a / Γ(a) x^{-a-1} exp(-b/x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGamma {
    pub shape: f64,
    pub scale: f64,
}

impl InvGamma {
    pub fn new(shape: f64, scale: f64) -> Self {
        debug_assert!(shape > 0.0 && scale > 0.0, "IG({shape}, {scale})");
        Self { shape, scale }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.scale.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * x.ln()
            - self.scale / x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // 1/X with X ~ Gamma(shape, rate = scale)
        let g = Gamma::new(self.shape, 1.0 / self.scale)
            .expect("inverse-gamma parameters validated upstream");
        let x: f64 = g.sample(rng);
        // Guard against underflow of the gamma draw for tiny shapes.
        1.0 / x.max(f64::MIN_POSITIVE)
    }
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Centered 3-point moving average; the two endpoints use the 2-point mean
/// of the values available to them. Inputs shorter than 3 are returned as is.
pub fn moving_average3(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 3 {
        return values.to_vec();
    }
    let mut out = Vec::with_capacity(n);
    out.push(0.5 * (values[0] + values[1]));
    for w in values.windows(3) {
        out.push((w[0] + w[1] + w[2]) / 3.0);
    }
    out.push(0.5 * (values[n - 2] + values[n - 1]));
    out
}

/// Empirical quantile by linear interpolation between order statistics
/// (`sorted` must be ascending).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Mean computed around the first value, exact for constant input.
pub fn mean(values: &[f64]) -> f64 {
    let Some(&x0) = values.first() else {
        return f64::NAN;
    };
    x0 + values.iter().map(|v| v - x0).sum::<f64>() / values.len() as f64
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
