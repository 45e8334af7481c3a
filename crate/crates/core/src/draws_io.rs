//! Serialization of [`PosteriorDraws`].
//!
//! Two formats:
//! * CSV, one row per kept draw with columns `chain, draw, <labels>, lambda2[, sigma2], tau2_sum`;
//! * binary: a little-endian `u64` header length, a JSON header, then every
//!   draw as little-endian `f64` rows in the same column order (minus the two
//!   index columns), chain after chain.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::gibbs::{Chain, PosteriorDraws};

const MAGIC: &str = "fusionlasso-draws/1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    family: Family,
    labels: Vec<String>,
    seed: u64,
    burnin: usize,
    thin: usize,
    unverified: bool,
    has_sigma: bool,
    chains: Vec<ChainHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainHeader {
    stream: u64,
    draws: usize,
}

fn has_sigma(d: &PosteriorDraws) -> bool {
    d.chains.first().is_some_and(|c| !c.sigma2.is_empty())
}

fn row(c: &Chain, s: usize, sigma: bool) -> Vec<f64> {
    let mut r = c.beta[s].clone();
    r.push(c.lambda2[s]);
    if sigma {
        r.push(c.sigma2[s]);
    }
    r.push(c.tau2_sum[s]);
    r
}

pub fn write_csv<W: Write>(draws: &PosteriorDraws, w: W) -> Result<()> {
    let sigma = has_sigma(draws);
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(draws.parameter_names());
    header.push("tau2_sum".into());
    out.write_record(&header)?;
    for (ci, c) in draws.chains.iter().enumerate() {
        for s in 0..c.len() {
            let mut rec = vec![ci.to_string(), s.to_string()];
            rec.extend(row(c, s, sigma).iter().map(|v| format!("{v:e}")));
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_binary<W: Write>(draws: &PosteriorDraws, mut w: W) -> Result<()> {
    let sigma = has_sigma(draws);
    let header = Header {
        format: MAGIC.into(),
        family: draws.family,
        labels: draws.labels.clone(),
        seed: draws.seed,
        burnin: draws.burnin,
        thin: draws.thin,
        unverified: draws.unverified,
        has_sigma: sigma,
        chains: draws.chains.iter().map(|c| ChainHeader { stream: c.stream, draws: c.len() }).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for c in &draws.chains {
        for s in 0..c.len() {
            for v in row(c, s, sigma) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<PosteriorDraws> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::Data("draws header length is implausible".into()));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let h: Header = serde_json::from_slice(&json)?;
    if h.format != MAGIC {
        return Err(Error::Data(format!("unknown draws format `{}`", h.format)));
    }
    let p = h.labels.len();
    let width = p + 2 + usize::from(h.has_sigma);
    let mut buf = vec![0u8; 8 * width];
    let mut chains = Vec::with_capacity(h.chains.len());
    for ch in &h.chains {
        let mut c = Chain {
            stream: ch.stream,
            beta: Vec::with_capacity(ch.draws),
            lambda2: Vec::with_capacity(ch.draws),
            sigma2: Vec::new(),
            tau2_sum: Vec::with_capacity(ch.draws),
        };
        for _ in 0..ch.draws {
            r.read_exact(&mut buf)?;
            let vals: Vec<f64> =
                buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
            c.beta.push(vals[..p].to_vec());
            c.lambda2.push(vals[p]);
            if h.has_sigma {
                c.sigma2.push(vals[p + 1]);
            }
            c.tau2_sum.push(vals[width - 1]);
        }
        chains.push(c);
    }
    Ok(PosteriorDraws {
        family: h.family,
        labels: h.labels,
        seed: h.seed,
        burnin: h.burnin,
        thin: h.thin,
        chains,
        unverified: h.unverified,
    })
}

/// Read draws written by [`write_csv`]. Metadata not stored in CSV (seed,
/// burn-in, thinning, family) must be supplied.
pub fn read_csv<R: Read>(r: R, family: Family) -> Result<PosteriorDraws> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let n = headers.len();
    if n < 5 || headers[0] != "chain" || headers[n - 1] != "tau2_sum" {
        return Err(Error::Data("not a draws CSV".into()));
    }
    let sigma = headers[n - 2] == "sigma2";
    let p = n - 4 - usize::from(sigma);
    if headers[2 + p] != "lambda2" {
        return Err(Error::Data("draws CSV lacks a lambda2 column".into()));
    }
    let mut chains: Vec<Chain> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let ci: usize = rec[0].parse().map_err(|_| Error::Data("bad chain index".into()))?;
        let vals = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map_err(|_| Error::Data(format!("bad number `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        while chains.len() <= ci {
            chains.push(Chain {
                stream: chains.len() as u64,
                beta: Vec::new(),
                lambda2: Vec::new(),
                sigma2: Vec::new(),
                tau2_sum: Vec::new(),
            });
        }
        let c = &mut chains[ci];
        c.beta.push(vals[..p].to_vec());
        c.lambda2.push(vals[p]);
        if sigma {
            c.sigma2.push(vals[p + 1]);
        }
        c.tau2_sum.push(vals[vals.len() - 1]);
    }
    Ok(PosteriorDraws {
        family,
        labels: headers[2..2 + p].to_vec(),
        seed: 0,
        burnin: 0,
        thin: 1,
        chains,
        unverified: false,
    })
}
