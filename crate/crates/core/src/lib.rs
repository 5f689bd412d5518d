//! Time-fused SIR modelling: a Poisson-increment observation model for
//! epidemic counts with shrinkage priors on day-to-day changes of the
//! transmission rate β(t) and removal rate γ(t), fitted by
//! Metropolis-within-Gibbs.

pub mod cli;
pub mod data;
pub mod error;
pub mod likelihood;
pub mod math;
pub mod posterior;
pub mod priors;
pub mod rng;
pub mod sampler;
pub mod simulator;
pub mod study;

pub use data::{load_csv, moving_average, to_increments, CompartmentSeries, IncrementSeries};
pub use error::{Error, Result};
pub use likelihood::{loglik, loglik_term_delta, MeanLag, Param, RatePath};
pub use posterior::{hpd_interval, replication_metrics, summarize, MetricSeries, SummaryBand};
pub use priors::{LatentScales, PriorKind, PriorSpec};
pub use sampler::{fit, run_chains, McmcConfig, PosteriorDraws};
pub use simulator::{simulate, RateSchedule, SimConfig, SimMode};
pub use study::{builtin_designs, run_study, StudyDesign};
