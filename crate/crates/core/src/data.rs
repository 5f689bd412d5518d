//! Epidemic count series: CSV ingest, smoothing and increment derivation.
//!
//! The on-disk schema is `date,confirmed,recovered,deaths[,population]` with
//! ISO-8601 dates. Infectious and removed counts are derived as
//! `I = confirmed - recovered - deaths` and `R = recovered + deaths`.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::moving_average3;

/// Daily S/I/R counts for a closed population of size `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentSeries {
    pub dates: Vec<NaiveDate>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    pub n: f64,
}

/// First differences of `M = I + R` and `R`, with `ΔM(1) = M(1)`, `ΔR(1) = R(1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSeries {
    pub dm: Vec<f64>,
    pub dr: Vec<f64>,
    /// Number of negative differences that were clamped to zero.
    pub clamped: usize,
}

impl IncrementSeries {
    pub fn len(&self) -> usize {
        self.dm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dm.is_empty()
    }

    /// True when every increment after day 1 is zero.
    pub fn all_zero_after_first(&self) -> bool {
        self.dm.iter().skip(1).all(|&x| x == 0.0) && self.dr.iter().skip(1).all(|&x| x == 0.0)
    }
}

impl CompartmentSeries {
    /// Builds a series and checks its invariants.
    pub fn new(dates: Vec<NaiveDate>, s: Vec<f64>, i: Vec<f64>, r: Vec<f64>, n: f64) -> Result<Self> {
        let series = Self { dates, s, i, r, n };
        series.validate()?;
        Ok(series)
    }

    /// Number of days `T`.
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Cumulative diagnosed cases `M(t) = I(t) + R(t)`.
    pub fn cumulative(&self) -> Vec<f64> {
        self.i.iter().zip(&self.r).map(|(i, r)| i + r).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.s.len();
        if self.i.len() != t || self.r.len() != t || self.dates.len() != t {
            return Err(Error::Shape(format!(
                "dates/S/I/R lengths differ: {}/{}/{}/{}",
                self.dates.len(),
                t,
                self.i.len(),
                self.r.len()
            )));
        }
        if t < 2 {
            return Err(Error::Length(format!("series needs at least 2 days, got {t}")));
        }
        if !(self.n.is_finite() && self.n > 0.0) {
            return Err(Error::Domain(format!("population must be positive, got {}", self.n)));
        }
        check_contiguous(&self.dates)?;
        let integral = [&self.s, &self.i, &self.r]
            .iter()
            .all(|v| v.iter().all(|x| x.fract() == 0.0));
        let tol = if integral { 0.0 } else { 1.0 };
        for k in 0..t {
            let date = self.dates[k].to_string();
            for (name, v) in [("S", self.s[k]), ("I", self.i[k]), ("R", self.r[k])] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::DataIntegrity {
                        row: k + 1,
                        date,
                        message: format!("{name} = {v} is negative or not finite"),
                    });
                }
            }
            let total = self.s[k] + self.i[k] + self.r[k];
            if (total - self.n).abs() > tol {
                return Err(Error::DataIntegrity {
                    row: k + 1,
                    date,
                    message: format!("S + I + R = {total} differs from N = {}", self.n),
                });
            }
        }
        Ok(())
    }
}

fn check_contiguous(dates: &[NaiveDate]) -> Result<()> {
    for w in dates.windows(2) {
        if w[1].signed_duration_since(w[0]).num_days() != 1 {
            return Err(Error::Gap {
                before: w[0].to_string(),
                after: w[1].to_string(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    date: String,
    confirmed: f64,
    #[serde(default)]
    recovered: Option<f64>,
    deaths: f64,
    #[serde(default)]
    population: Option<f64>,
}

/// Loads a series from a CSV file. `population` overrides the `population` column.
pub fn load_csv(path: impl AsRef<Path>, population: Option<f64>) -> Result<CompartmentSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, population)
}

/// Reads a series from any CSV source (file, stdin, buffer).
pub fn read_csv<R: Read>(reader: R, population: Option<f64>) -> Result<CompartmentSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for required in ["date", "confirmed", "deaths"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Schema(format!("missing column `{required}`")));
        }
    }
    let has_pop_column = headers.iter().any(|h| h == "population");
    if population.is_none() && !has_pop_column {
        return Err(Error::Schema(
            "no `population` column and no population given".to_string(),
        ));
    }

    let mut dates = Vec::new();
    let mut i = Vec::new();
    let mut r = Vec::new();
    let mut column_pop: Option<f64> = None;
    for (idx, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row_no = idx + 1;
        let row = row.map_err(|e| Error::Schema(format!("row {row_no}: {e}")))?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
            .map_err(|e| Error::Schema(format!("row {row_no}: bad date `{}`: {e}", row.date)))?;
        if let Some(p) = row.population {
            match column_pop {
                None => column_pop = Some(p),
                Some(prev) if prev != p => {
                    return Err(Error::DataIntegrity {
                        row: row_no,
                        date: row.date,
                        message: format!("population changes from {prev} to {p}"),
                    })
                }
                _ => {}
            }
        }
        let recovered = row.recovered.unwrap_or(0.0);
        let infectious = row.confirmed - recovered - row.deaths;
        let removed = recovered + row.deaths;
        if infectious < 0.0 || removed < 0.0 {
            return Err(Error::DataIntegrity {
                row: row_no,
                date: row.date,
                message: format!(
                    "derived counts I = {infectious}, R = {removed} (confirmed {}, recovered {recovered}, deaths {})",
                    row.confirmed, row.deaths
                ),
            });
        }
        dates.push(date);
        i.push(infectious);
        r.push(removed);
    }
    if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Schema(format!(
            "dates must be strictly increasing ({} followed by {})",
            w[0], w[1]
        )));
    }
    check_contiguous(&dates)?;

    let n = population
        .or(column_pop)
        .ok_or_else(|| Error::Schema("population column is empty".to_string()))?;
    let mut s = Vec::with_capacity(i.len());
    for (k, (ik, rk)) in i.iter().zip(&r).enumerate() {
        let sk = n - ik - rk;
        if sk < 0.0 {
            return Err(Error::DataIntegrity {
                row: k + 1,
                date: dates[k].to_string(),
                message: format!("I + R = {} exceeds population {n}", ik + rk),
            });
        }
        s.push(sk);
    }
    CompartmentSeries::new(dates, s, i, r, n)
}

/// Writes a series in the same schema [`read_csv`] accepts
/// (`confirmed = I + R`, `recovered = R`, `deaths = 0`).
pub fn write_csv<W: Write>(series: &CompartmentSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "confirmed", "recovered", "deaths", "population"])?;
    for k in 0..series.len() {
        w.write_record(&[
            series.dates[k].to_string(),
            (series.i[k] + series.r[k]).to_string(),
            series.r[k].to_string(),
            "0".to_string(),
            series.n.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Centered 3-point moving average of I and R (2-point means at the ends);
/// S is recomputed as `N - I - R`.
pub fn moving_average(series: &CompartmentSeries) -> Result<CompartmentSeries> {
    if series.len() < 3 {
        return Err(Error::Length(format!(
            "moving average needs at least 3 days, got {}",
            series.len()
        )));
    }
    let i = moving_average3(&series.i);
    let r = moving_average3(&series.r);
    let s = i.iter().zip(&r).map(|(i, r)| series.n - i - r).collect();
    Ok(CompartmentSeries {
        dates: series.dates.clone(),
        s,
        i,
        r,
        n: series.n,
    })
}

/// Daily increments of `M` and `R`. Negative differences are clamped to zero
/// and counted; every increment is rounded to the nearest integer.
pub fn to_increments(series: &CompartmentSeries) -> IncrementSeries {
    let m = series.cumulative();
    let mut clamped = 0;
    let mut diff = |v: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(v.len());
        out.push(v[0].round());
        for w in v.windows(2) {
            let d = w[1] - w[0];
            if d < 0.0 {
                clamped += 1;
                out.push(0.0);
            } else {
                out.push(d.round());
            }
        }
        out
    };
    let dm = diff(&m);
    let dr = diff(&series.r);
    if clamped > 0 {
        log::warn!("{clamped} negative daily increments clamped to zero");
    }
    IncrementSeries { dm, dr, clamped }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2020, 5, 14).unwrap();
        (0..n).map(|k| start + chrono::Duration::days(k as i64)).collect()
    }

    fn series_from_ir(i: &[f64], r: &[f64], n: f64) -> CompartmentSeries {
        let s = i.iter().zip(r).map(|(i, r)| n - i - r).collect();
        CompartmentSeries::new(dates(i.len()), s, i.to_vec(), r.to_vec(), n).unwrap()
    }

    #[test]
    fn csv_row_arithmetic() {
        let csv = "date,confirmed,recovered,deaths\n2020-05-14,10,3,1\n2020-05-15,12,3,1\n";
        let s = read_csv(csv.as_bytes(), Some(1000.0)).unwrap();
        assert_eq!((s.s[0], s.i[0], s.r[0]), (990.0, 6.0, 4.0));
    }

    #[test]
    fn negative_infectious_is_rejected_with_row() {
        let csv = "date,confirmed,recovered,deaths,population\n2020-05-14,5,4,2,1000\n2020-05-15,5,4,2,1000\n";
        match read_csv(csv.as_bytes(), None) {
            Err(Error::DataIntegrity { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_gap() {
        let csv = "date,confirmed,deaths\n2020-05-14,5,1\n";
        assert!(matches!(read_csv(csv.as_bytes(), None), Err(Error::Schema(_))));
        let csv = "date,confirmed,deaths,population\n2020-05-14,5,1,100\n2020-05-14,5,1,100\n";
        assert!(matches!(read_csv(csv.as_bytes(), None), Err(Error::Schema(_))));
        let csv = "date,deaths,population\n2020-05-14,1,100\n";
        assert!(matches!(read_csv(csv.as_bytes(), None), Err(Error::Schema(_))));
        let csv = "date,confirmed,deaths,population\n2020-05-14,5,1,100\n2020-05-16,5,1,100\n";
        assert!(matches!(read_csv(csv.as_bytes(), None), Err(Error::Gap { .. })));
    }

    #[test]
    fn recovered_column_is_optional() {
        let csv = "date,confirmed,deaths,population\n2020-05-14,5,1,100\n2020-05-15,7,2,100\n";
        let s = read_csv(csv.as_bytes(), None).unwrap();
        assert_eq!(s.i, vec![4.0, 5.0]);
        assert_eq!(s.r, vec![1.0, 2.0]);
    }

    #[test]
    fn moving_average_cases() {
        let s = series_from_ir(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], 100.0);
        let m = moving_average(&s).unwrap();
        assert_eq!(m.i, vec![1.5, 2.0, 3.0, 4.0, 4.5]);
        assert_eq!(m.s[0], 98.5);
        assert_eq!(s.i, vec![1.0, 2.0, 3.0, 4.0, 5.0]);

        let c = series_from_ir(&[7.0; 4], &[1.0; 4], 100.0);
        assert_eq!(moving_average(&c).unwrap(), c);

        let z = series_from_ir(&[0.0, 3.0, 0.0, 3.0, 0.0], &[0.0; 5], 100.0);
        assert_eq!(moving_average(&z).unwrap().i, vec![1.5, 1.0, 2.0, 1.0, 1.5]);

        let short = series_from_ir(&[1.0, 2.0], &[0.0, 0.0], 10.0);
        assert!(matches!(moving_average(&short), Err(Error::Length(_))));
    }

    #[test]
    fn increments_cases() {
        // M = (4, 9, 9)
        let s = series_from_ir(&[4.0, 8.0, 7.0], &[0.0, 1.0, 2.0], 100.0);
        let inc = to_increments(&s);
        assert_eq!(inc.dm, vec![4.0, 5.0, 0.0]);
        assert_eq!(inc.clamped, 0);

        let s = series_from_ir(&[1.0, 2.0], &[5.0, 4.0], 100.0);
        let inc = to_increments(&s);
        assert_eq!(inc.dr, vec![5.0, 0.0]);
        assert_eq!(inc.clamped, 1);

        let s = series_from_ir(&[3.0; 5], &[2.0; 5], 100.0);
        let inc = to_increments(&s);
        assert!(inc.all_zero_after_first());
    }

    #[test]
    fn conservation_violation_detected() {
        let r = CompartmentSeries::new(dates(2), vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 2.0], 3.0);
        assert!(matches!(r, Err(Error::DataIntegrity { row: 2, .. })));
    }
}
