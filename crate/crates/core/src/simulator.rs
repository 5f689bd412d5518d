//! Synthetic epidemics under piecewise-constant rate schedules.
//!
//! Day `t` (1-based) is continuous time `t - 1`; the rates `β(t)`, `γ(t)` act
//! on the interval from day `t - 1` to day `t`. Three generators share that
//! convention:
//!
//! - [`simulate_poisson`]: the discrete Poisson-increment recursion the
//!   likelihood is built on,
//! - [`simulate_ssa`]: Gillespie's direct method for the continuous-time
//!   Markov jump process,
//! - [`solve_ode`]: fixed-step RK4 on the deterministic equations.

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::CompartmentSeries;
use crate::error::{Error, Result};
use crate::likelihood::RatePath;
use crate::rng::seeded;

/// Piecewise-constant `β(t)`, `γ(t)`.
///
/// `breakpoints` holds the first day of every segment after the first, so
/// `[21, 41, 61]` splits `1..=80` into four 20-day pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub breakpoints: Vec<usize>,
    pub beta_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
}

impl RateSchedule {
    pub fn new(breakpoints: Vec<usize>, beta_values: Vec<f64>, gamma_values: Vec<f64>) -> Result<Self> {
        let schedule = Self {
            breakpoints,
            beta_values,
            gamma_values,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// `pieces` segments of `piece_len` days each.
    pub fn equal_pieces(piece_len: usize, beta_values: Vec<f64>, gamma_values: Vec<f64>) -> Result<Self> {
        let breakpoints = (1..beta_values.len()).map(|k| 1 + k * piece_len).collect();
        Self::new(breakpoints, beta_values, gamma_values)
    }

    pub fn constant(beta: f64, gamma: f64) -> Self {
        Self {
            breakpoints: Vec::new(),
            beta_values: vec![beta],
            gamma_values: vec![gamma],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let segments = self.breakpoints.len() + 1;
        if self.beta_values.len() != segments || self.gamma_values.len() != segments {
            return Err(Error::Shape(format!(
                "{} breakpoints need {segments} β and γ values, got {} and {}",
                self.breakpoints.len(),
                self.beta_values.len(),
                self.gamma_values.len()
            )));
        }
        if self.breakpoints.windows(2).any(|w| w[1] <= w[0]) || self.breakpoints.first() == Some(&0) {
            return Err(Error::Shape("breakpoints must be strictly increasing days ≥ 1".into()));
        }
        if self
            .beta_values
            .iter()
            .chain(&self.gamma_values)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Domain("rates must be finite and nonnegative".into()));
        }
        Ok(())
    }

    fn segment(&self, day: usize) -> usize {
        self.breakpoints.partition_point(|&b| b <= day)
    }

    pub fn beta_at(&self, day: usize) -> f64 {
        self.beta_values[self.segment(day)]
    }

    pub fn gamma_at(&self, day: usize) -> f64 {
        self.gamma_values[self.segment(day)]
    }

    /// Rates for days `1..=horizon`.
    pub fn to_path(&self, horizon: usize) -> RatePath {
        RatePath {
            beta: (1..=horizon).map(|d| self.beta_at(d)).collect(),
            gamma: (1..=horizon).map(|d| self.gamma_at(d)).collect(),
        }
    }

    /// Distance in days from `day` to the nearest breakpoint (`usize::MAX` if none).
    pub fn distance_to_breakpoint(&self, day: usize) -> usize {
        self.breakpoints
            .iter()
            .map(|&b| b.abs_diff(day))
            .min()
            .unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Discrete Poisson increments (matches the fitted likelihood).
    Poisson,
    /// Continuous-time stochastic simulation (Gillespie direct method).
    Ssa,
    /// Deterministic ODE solved with RK4.
    Ode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u64,
    pub i0: u64,
    pub r0: u64,
    pub horizon: usize,
    pub seed: u64,
    pub mode: SimMode,
    pub start_date: NaiveDate,
}

impl SimConfig {
    pub fn new(n: u64, i0: u64, horizon: usize, seed: u64, mode: SimMode) -> Self {
        Self {
            n,
            i0,
            r0: 0,
            horizon,
            seed,
            mode,
            start_date: default_start_date(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.i0 + self.r0 > self.n {
            return Err(Error::Config(format!(
                "i0 + r0 = {} exceeds population {}",
                self.i0 + self.r0,
                self.n
            )));
        }
        if self.horizon < 2 {
            return Err(Error::Config(format!("horizon must be ≥ 2, got {}", self.horizon)));
        }
        Ok(())
    }

    fn dates(&self) -> Vec<NaiveDate> {
        self.start_date
            .iter_days()
            .take(self.horizon)
            .collect()
    }
}

pub fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date")
}

/// Dispatches on `config.mode`.
pub fn simulate(schedule: &RateSchedule, config: &SimConfig) -> Result<CompartmentSeries> {
    match config.mode {
        SimMode::Poisson => simulate_poisson(schedule, config),
        SimMode::Ssa => simulate_ssa(schedule, config),
        SimMode::Ode => solve_ode(schedule, config),
    }
}

fn poisson_draw<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    draw as u64
}

/// Poisson-increment forward recursion. Conservation is exact; draws larger
/// than the donor compartment are clamped.
pub fn simulate_poisson(schedule: &RateSchedule, config: &SimConfig) -> Result<CompartmentSeries> {
    simulate_poisson_with_report(schedule, config).map(|(s, _)| s)
}

/// As [`simulate_poisson`], also returning the number of clamping events.
pub fn simulate_poisson_with_report(
    schedule: &RateSchedule,
    config: &SimConfig,
) -> Result<(CompartmentSeries, usize)> {
    schedule.validate()?;
    config.validate()?;
    let mut rng = seeded(config.seed, 0);
    let n = config.n as f64;
    let (mut s, mut i, mut r) = (config.n - config.i0 - config.r0, config.i0, config.r0);
    let mut out = Trajectory::with_capacity(config.horizon);
    out.push(s, i, r);
    let mut clamped = 0;
    for day in 2..=config.horizon {
        let mu_m = schedule.beta_at(day) * s as f64 * i as f64 / n;
        let mut dm = poisson_draw(&mut rng, mu_m);
        if dm > s {
            dm = s;
            clamped += 1;
        }
        let mu_r = schedule.gamma_at(day) * i as f64;
        let mut dr = poisson_draw(&mut rng, mu_r);
        if dr > i + dm {
            dr = i + dm;
            clamped += 1;
        }
        s -= dm;
        i = i + dm - dr;
        r += dr;
        out.push(s, i, r);
    }
    if clamped > 0 {
        log::warn!("{clamped} Poisson draws clamped to compartment sizes");
    }
    Ok((out.finish(config)?, clamped))
}

/// Gillespie direct method over S→I (rate `β S I / N`) and I→R (rate `γ I`),
/// with rates frozen within each day and the state recorded at integer days.
pub fn simulate_ssa(schedule: &RateSchedule, config: &SimConfig) -> Result<CompartmentSeries> {
    schedule.validate()?;
    config.validate()?;
    let mut rng = seeded(config.seed, 0);
    let n = config.n as f64;
    let (mut s, mut i, mut r) = (config.n - config.i0 - config.r0, config.i0, config.r0);
    let mut out = Trajectory::with_capacity(config.horizon);
    out.push(s, i, r);
    for day in 2..=config.horizon {
        let beta = schedule.beta_at(day) / n;
        let gamma = schedule.gamma_at(day);
        // time remaining until the next integer day
        let mut remaining = 1.0_f64;
        loop {
            let infect = beta * s as f64 * i as f64;
            let remove = gamma * i as f64;
            let total = infect + remove;
            if total <= 0.0 {
                break;
            }
            let wait: f64 = Exp1.sample(&mut rng);
            let wait = wait / total;
            if wait >= remaining {
                break;
            }
            remaining -= wait;
            if rng.random::<f64>() * total < infect {
                s -= 1;
                i += 1;
            } else {
                i -= 1;
                r += 1;
            }
        }
        out.push(s, i, r);
    }
    out.finish(config)
}

/// RK4 at step 0.01 day, reported daily.
pub fn solve_ode(schedule: &RateSchedule, config: &SimConfig) -> Result<CompartmentSeries> {
    solve_ode_with_step(schedule, config, 0.01)
}

/// RK4 with a step that must divide one day into a whole number of steps.
pub fn solve_ode_with_step(schedule: &RateSchedule, config: &SimConfig, step: f64) -> Result<CompartmentSeries> {
    schedule.validate()?;
    config.validate()?;
    let steps = (1.0 / step).round() as usize;
    if steps == 0 || ((steps as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("ODE step {step} must divide one day evenly")));
    }
    let h = 1.0 / steps as f64;
    let n = config.n as f64;
    let mut y = [
        (config.n - config.i0 - config.r0) as f64,
        config.i0 as f64,
        config.r0 as f64,
    ];
    let mut days = vec![y];
    for day in 2..=config.horizon {
        let beta = schedule.beta_at(day);
        let gamma = schedule.gamma_at(day);
        let f = |y: [f64; 3]| -> [f64; 3] {
            let inf = beta * y[0] * y[1] / n;
            let rem = gamma * y[1];
            [-inf, inf - rem, rem]
        };
        for _ in 0..steps {
            let k1 = f(y);
            let k2 = f(axpy(y, 0.5 * h, k1));
            let k3 = f(axpy(y, 0.5 * h, k2));
            let k4 = f(axpy(y, h, k3));
            for c in 0..3 {
                y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
        }
        days.push(y);
    }
    let series = CompartmentSeries {
        dates: config.dates(),
        s: days.iter().map(|y| y[0].max(0.0)).collect(),
        i: days.iter().map(|y| y[1].max(0.0)).collect(),
        r: days.iter().map(|y| y[2].max(0.0)).collect(),
        n,
    };
    series.validate()?;
    Ok(series)
}

fn axpy(y: [f64; 3], a: f64, k: [f64; 3]) -> [f64; 3] {
    [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2]]
}

struct Trajectory {
    s: Vec<f64>,
    i: Vec<f64>,
    r: Vec<f64>,
}

impl Trajectory {
    fn with_capacity(n: usize) -> Self {
        Self {
            s: Vec::with_capacity(n),
            i: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, s: u64, i: u64, r: u64) {
        self.s.push(s as f64);
        self.i.push(i as f64);
        self.r.push(r as f64);
    }

    fn finish(self, config: &SimConfig) -> Result<CompartmentSeries> {
        CompartmentSeries::new(config.dates(), self.s, self.i, self.r, config.n as f64)
    }
}
