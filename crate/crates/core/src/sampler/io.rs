//! Persistence of posterior draws.
//!
//! Two formats:
//!
//! - long CSV `sample,param,t,value` (params `beta`, `gamma` for `t = 1..T`;
//!   `lambda`, `eta`, `nu`, `xi` for `t = 2..T`; `sigma2_beta`,
//!   `sigma2_gamma` with `t = 0`). Provenance is not carried.
//! - binary cache: magic `TFSIRDRW`, `u32` version, `u32` header length, a
//!   JSON header (provenance, acceptance, step sizes, warnings, dimensions),
//!   then little-endian `f64` blocks: β rows, γ rows, and per kept sample
//!   `lambda, eta, sigma2_beta, sigma2_gamma, nu, xi`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{DrawMatrix, PosteriorDraws, Provenance, SiteStats};
use crate::error::{Error, Result};
use crate::priors::LatentScales;

const MAGIC: &[u8; 8] = b"TFSIRDRW";
const VERSION: u32 = 1;

pub fn write_draws_csv<W: Write>(draws: &PosteriorDraws, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sample", "param", "t", "value"])?;
    for s in 0..draws.len() {
        let sample = (s + 1).to_string();
        let mut put = |param: &str, t: usize, v: f64| -> Result<()> {
            w.write_record([sample.as_str(), param, &t.to_string(), &v.to_string()])?;
            Ok(())
        };
        for (t, v) in draws.beta.row(s).iter().enumerate() {
            put("beta", t + 1, *v)?;
        }
        for (t, v) in draws.gamma.row(s).iter().enumerate() {
            put("gamma", t + 1, *v)?;
        }
        if let Some(sc) = draws.scales.get(s) {
            for (name, values) in [("lambda", &sc.lambda), ("eta", &sc.eta), ("nu", &sc.nu), ("xi", &sc.xi)] {
                for (j, v) in values.iter().enumerate() {
                    put(name, j + 2, *v)?;
                }
            }
            put("sigma2_beta", 0, sc.sigma2_beta)?;
            put("sigma2_gamma", 0, sc.sigma2_gamma)?;
        }
    }
    w.flush().map_err(|e| Error::io("<draws csv>", e))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct LongRow {
    sample: usize,
    param: String,
    t: usize,
    value: f64,
}

#[derive(Default)]
struct SampleAcc {
    fields: BTreeMap<String, BTreeMap<usize, f64>>,
}

impl SampleAcc {
    fn vector(&self, name: &str) -> Vec<f64> {
        self.fields
            .get(name)
            .map(|m| m.values().copied().collect())
            .unwrap_or_default()
    }

    fn scalar(&self, name: &str) -> Option<f64> {
        self.fields.get(name).and_then(|m| m.values().next().copied())
    }
}

pub fn read_draws_csv<R: Read>(reader: R) -> Result<PosteriorDraws> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut samples: BTreeMap<usize, SampleAcc> = BTreeMap::new();
    for row in rdr.deserialize::<LongRow>() {
        let row = row.map_err(|e| Error::Format(format!("draws csv: {e}")))?;
        samples
            .entry(row.sample)
            .or_default()
            .fields
            .entry(row.param)
            .or_default()
            .insert(row.t, row.value);
    }
    if samples.is_empty() {
        return Err(Error::Format("draws csv holds no samples".into()));
    }
    let first = samples.values().next().expect("nonempty");
    let t = first.vector("beta").len();
    let mut beta = DrawMatrix::new(t);
    let mut gamma = DrawMatrix::new(t);
    let mut scales = Vec::new();
    for acc in samples.values() {
        beta.push_row(&acc.vector("beta"))?;
        gamma.push_row(&acc.vector("gamma"))?;
        if let (Some(sb), Some(sg)) = (acc.scalar("sigma2_beta"), acc.scalar("sigma2_gamma")) {
            scales.push(LatentScales {
                lambda: acc.vector("lambda"),
                eta: acc.vector("eta"),
                sigma2_beta: sb,
                sigma2_gamma: sg,
                nu: acc.vector("nu"),
                xi: acc.vector("xi"),
            });
        }
    }
    if !scales.is_empty() && scales.len() != beta.rows() {
        return Err(Error::Format("some samples lack latent scales".into()));
    }
    Ok(PosteriorDraws {
        beta,
        gamma,
        scales,
        acceptance: SiteStats::default(),
        step_sizes: SiteStats::default(),
        provenance: None,
        warnings: Vec::new(),
    })
}

#[derive(Serialize, Deserialize)]
struct Header {
    samples: usize,
    days: usize,
    has_scales: bool,
    aux_len: usize,
    provenance: Option<Provenance>,
    acceptance: SiteStats,
    step_sizes: SiteStats,
    warnings: Vec<String>,
}

fn put_f64s<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_draws_binary<W: Write>(draws: &PosteriorDraws, mut w: W) -> Result<()> {
    let aux_len = draws.scales.first().map_or(0, |s| s.nu.len());
    let header = Header {
        samples: draws.len(),
        days: draws.days(),
        has_scales: !draws.scales.is_empty(),
        aux_len,
        provenance: draws.provenance.clone(),
        acceptance: draws.acceptance.clone(),
        step_sizes: draws.step_sizes.clone(),
        warnings: draws.warnings.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let io = |e| Error::io("<draws binary>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    put_f64s(&mut w, draws.beta.values()).map_err(io)?;
    put_f64s(&mut w, draws.gamma.values()).map_err(io)?;
    for sc in &draws.scales {
        put_f64s(&mut w, &sc.lambda).map_err(io)?;
        put_f64s(&mut w, &sc.eta).map_err(io)?;
        put_f64s(&mut w, &[sc.sigma2_beta, sc.sigma2_gamma]).map_err(io)?;
        put_f64s(&mut w, &sc.nu).map_err(io)?;
        put_f64s(&mut w, &sc.xi).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("draws binary is truncated".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn read_draws_binary<R: Read>(mut reader: R) -> Result<PosteriorDraws> {
    let mut buf = Vec::new();
    reader
        .read_to_end(&mut buf)
        .map_err(|e| Error::io("<draws binary>", e))?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Format("not a draws cache (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported draws cache version {version}")));
    }
    let len = cur.u32()? as usize;
    let header: Header = serde_json::from_slice(cur.take(len)?)?;
    let (n, t) = (header.samples, header.days);
    let beta = DrawMatrix::from_flat(t, cur.f64s(n * t)?)?;
    let gamma = DrawMatrix::from_flat(t, cur.f64s(n * t)?)?;
    let mut scales = Vec::new();
    if header.has_scales {
        let m = t.saturating_sub(1);
        for _ in 0..n {
            let lambda = cur.f64s(m)?;
            let eta = cur.f64s(m)?;
            let globals = cur.f64s(2)?;
            scales.push(LatentScales {
                lambda,
                eta,
                sigma2_beta: globals[0],
                sigma2_gamma: globals[1],
                nu: cur.f64s(header.aux_len)?,
                xi: cur.f64s(header.aux_len)?,
            });
        }
    }
    if cur.pos != buf.len() {
        return Err(Error::Format("trailing bytes after draws".into()));
    }
    Ok(PosteriorDraws {
        beta,
        gamma,
        scales,
        acceptance: header.acceptance,
        step_sizes: header.step_sizes,
        provenance: header.provenance,
        warnings: header.warnings,
    })
}

impl DrawMatrix {
    pub fn from_flat(cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 || !data.len().is_multiple_of(cols) {
            return Err(Error::Shape(format!("{} values do not fill rows of {cols}", data.len())));
        }
        Ok(Self { cols, data })
    }
}

/// Loads draws from either format, choosing by magic bytes.
pub fn load_draws(path: impl AsRef<std::path::Path>) -> Result<PosteriorDraws> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        read_draws_binary(bytes.as_slice())
    } else {
        read_draws_csv(bytes.as_slice())
    }
}
