#![allow(dead_code)]

use std::path::{Path, PathBuf};

use tfsir::math::sorted_copy;

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let xs = sorted_copy(sample);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted_copy(a), sorted_copy(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Student t CDF for the degrees of freedom with elementary closed forms.
pub fn t_cdf(df: u32, x: f64) -> f64 {
    match df {
        1 => 0.5 + x.atan() / std::f64::consts::PI,
        2 => 0.5 + x / (2.0 * (2.0 + x * x).sqrt()),
        4 => {
            let u = x * x / (4.0 + x * x);
            0.5 + 0.5 * x.signum() * u.sqrt() * (1.0 + 0.5 * (1.0 - u))
        }
        _ => panic!("no closed form for df {df}"),
    }
}

pub fn half_cauchy_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        2.0 / std::f64::consts::PI * x.atan()
    }
}

/// Normalizes two log-densities evaluated on the same grid and returns their
/// total-variation distance.
pub fn grid_tv(log_p: &[f64], log_q: &[f64]) -> f64 {
    let norm = |l: &[f64]| -> Vec<f64> {
        let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    };
    let (p, q) = (norm(log_p), norm(log_q));
    0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Log-spaced grid of `n` points covering where `log_density` (taken with
/// respect to `log v`) lies within 40 nats of its maximum.
pub fn adaptive_log_grid(log_density: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
    let scan: Vec<f64> = (0..=4000).map(|k| -30.0 + 60.0 * k as f64 / 4000.0).collect();
    let vals: Vec<f64> = scan.iter().map(|&u| log_density(u.exp()) + u).collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<f64> = scan
        .iter()
        .zip(&vals)
        .filter(|(_, v)| **v > max - 40.0)
        .map(|(u, _)| *u)
        .collect();
    let (lo, hi) = (keep[0] - 0.015, keep[keep.len() - 1] + 0.015);
    (0..n)
        .map(|k| (lo + (hi - lo) * (k as f64 + 0.5) / n as f64).exp())
        .collect()
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn median(values: &[f64]) -> f64 {
    tfsir::math::quantile_sorted(&sorted_copy(values), 0.5)
}
