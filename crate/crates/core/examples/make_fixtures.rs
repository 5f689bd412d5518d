//! Regenerates the synthetic CSV fixtures under `fixtures/`.
//!
//! Each fixture is a 71-day Poisson-increment simulation starting
//! 2020-05-14 with populations and starting counts chosen to resemble the
//! corresponding region. County files carry deaths only.
//!
//! ```text
//! cargo run --example make_fixtures -- fixtures
//! ```

use std::path::PathBuf;

use chrono::NaiveDate;
use tfsir::simulator::{simulate, RateSchedule, SimConfig, SimMode};

struct Region {
    file: &'static str,
    population: u64,
    i0: u64,
    r0: u64,
    beta: [f64; 3],
    gamma: [f64; 3],
    /// Share of removals reported as deaths; 1.0 means deaths only.
    death_share: f64,
}

const REGIONS: &[Region] = &[
    Region { file: "us.csv", population: 328_239_523, i0: 1_050_000, r0: 330_000, beta: [0.030, 0.035, 0.045], gamma: [0.020, 0.018, 0.022], death_share: 0.25 },
    Region { file: "ny.csv", population: 19_453_561, i0: 250_000, r0: 90_000, beta: [0.006, 0.004, 0.003], gamma: [0.004, 0.003, 0.003], death_share: 0.3 },
    Region { file: "ca.csv", population: 39_512_223, i0: 60_000, r0: 17_000, beta: [0.040, 0.050, 0.045], gamma: [0.020, 0.020, 0.025], death_share: 0.1 },
    Region { file: "fl.csv", population: 21_477_737, i0: 35_000, r0: 9_000, beta: [0.030, 0.080, 0.060], gamma: [0.010, 0.012, 0.020], death_share: 0.2 },
    Region { file: "sd.csv", population: 884_659, i0: 1_500, r0: 2_500, beta: [0.030, 0.020, 0.040], gamma: [0.050, 0.040, 0.035], death_share: 0.02 },
    Region { file: "wy.csv", population: 578_759, i0: 200, r0: 500, beta: [0.030, 0.040, 0.050], gamma: [0.040, 0.030, 0.030], death_share: 0.03 },
    Region { file: "los_angeles.csv", population: 10_039_107, i0: 33_000, r0: 1_600, beta: [0.035, 0.050, 0.045], gamma: [0.0015, 0.0010, 0.0008], death_share: 1.0 },
    Region { file: "miami_dade.csv", population: 2_716_940, i0: 14_000, r0: 550, beta: [0.030, 0.050, 0.035], gamma: [0.0010, 0.0007, 0.0010], death_share: 1.0 },
    Region { file: "new_york_city.csv", population: 8_336_817, i0: 190_000, r0: 20_000, beta: [0.005, 0.003, 0.002], gamma: [0.0008, 0.0004, 0.0002], death_share: 1.0 },
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let start = NaiveDate::from_ymd_opt(2020, 5, 14).expect("valid date");

    for (k, region) in REGIONS.iter().enumerate() {
        let schedule = RateSchedule::new(vec![25, 49], region.beta.to_vec(), region.gamma.to_vec())?;
        let mut cfg = SimConfig::new(region.population, region.i0, 71, 2020 + k as u64, SimMode::Poisson);
        cfg.r0 = region.r0;
        cfg.start_date = start;
        let series = simulate(&schedule, &cfg)?;

        let mut w = csv::Writer::from_path(dir.join(region.file))?;
        w.write_record(["date", "confirmed", "recovered", "deaths", "population"])?;
        for t in 0..series.len() {
            let removed = series.r[t];
            let deaths = (removed * region.death_share).floor();
            w.write_record([
                series.dates[t].to_string(),
                (series.i[t] + removed).to_string(),
                (removed - deaths).to_string(),
                deaths.to_string(),
                region.population.to_string(),
            ])?;
        }
        w.flush()?;
    }

    let constant = RateSchedule::constant(0.1, 0.05);
    let cfg = SimConfig::new(1_000_000, 100, 80, 99, SimMode::Poisson);
    let series = simulate(&constant, &cfg)?;
    let mut out = std::fs::File::create(dir.join("constant_rate.csv"))?;
    tfsir::data::write_csv(&series, &mut out)?;
    Ok(())
}
