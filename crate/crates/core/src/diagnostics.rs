//! Convergence diagnostics: Gelman-Rubin potential scale reduction and the
//! Geweke first-versus-last window z-score.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::stats::{mean, spectral_density_zero, variance};

pub const RHAT_THRESHOLD: f64 = 1.1;
pub const GEWEKE_THRESHOLD: f64 = 1.96;
pub const MIN_RHAT_DRAWS: usize = 50;
pub const MIN_GEWEKE_DRAWS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rhat {
    pub point: f64,
    /// Upper limit of the 95% interval.
    pub upper: f64,
    /// Zero within-chain variance or bitwise identical chains.
    pub degenerate: bool,
}

/// Potential scale reduction factor. With `split`, every chain is halved
/// first. Values are clamped below at 1.
pub fn gelman_rubin(chains: &[Vec<f64>], split: bool) -> Result<Rhat> {
    if chains.len() < 2 {
        return Err(Error::InvalidArgument("Gelman-Rubin needs at least two chains".into()));
    }
    let n0 = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n0 < MIN_RHAT_DRAWS {
        return Err(Error::TooFewDraws { needed: MIN_RHAT_DRAWS, got: n0 });
    }
    let duplicated = chains.iter().all(|c| c[..n0] == chains[0][..n0]);
    let parts: Vec<&[f64]> = if split {
        let h = n0 / 2;
        chains.iter().flat_map(|c| [&c[..h], &c[h..2 * h]]).collect()
    } else {
        chains.iter().map(|c| &c[..n0]).collect()
    };
    let m = parts.len() as f64;
    let n = parts[0].len() as f64;
    let xbar: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let s2: Vec<f64> = parts.iter().map(|c| variance(c)).collect();
    let w = mean(&s2);
    let scale = xbar.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if duplicated || w <= 1e-28 * scale * scale {
        return Ok(Rhat { point: 1.0, upper: 1.0, degenerate: true });
    }
    let b = n * variance(&xbar);
    let cov = |a: &[f64], c: &[f64]| {
        let (ma, mc) = (mean(a), mean(c));
        a.iter().zip(c).map(|(x, y)| (x - ma) * (y - mc)).sum::<f64>() / (a.len() - 1) as f64
    };
    let xbar2: Vec<f64> = xbar.iter().map(|v| v * v).collect();
    let var_w = variance(&s2) / m;
    let var_b = 2.0 * b * b / (m - 1.0);
    let cov_wb = n / m * (cov(&s2, &xbar2) - 2.0 * mean(&xbar) * cov(&s2, &xbar));
    let v = (n - 1.0) / n * w + (1.0 + 1.0 / m) * b / n;
    let var_v = ((n - 1.0).powi(2) * var_w
        + (1.0 + 1.0 / m).powi(2) * var_b
        + 2.0 * (n - 1.0) * (1.0 + 1.0 / m) * cov_wb)
        / (n * n);
    let df_v = 2.0 * v * v / var_v;
    let df_adj = if df_v.is_finite() && df_v > 0.0 { (df_v + 3.0) / (df_v + 1.0) } else { 1.0 };
    let w_df = if var_w > 0.0 { (2.0 * w * w / var_w).min(1e12) } else { 1e12 };
    let r_fixed = (n - 1.0) / n;
    let r_random = (1.0 + 1.0 / m) / n * b / w;
    let q = FisherSnedecor::new(m - 1.0, w_df).map(|f| f.inverse_cdf(0.975)).unwrap_or(f64::NAN);
    let point = (df_adj * (r_fixed + r_random)).sqrt().max(1.0);
    let upper = (df_adj * (r_fixed + q * r_random)).sqrt().max(point);
    Ok(Rhat { point, upper, degenerate: false })
}

/// Geweke z-score comparing the mean of the first `first` fraction with the
/// mean of the last `last` fraction. Variances are spectral densities at
/// zero with a Bartlett window of 4% of the window length.
pub fn geweke_windows(chain: &[f64], first: f64, last: f64) -> Result<f64> {
    if chain.len() < MIN_GEWEKE_DRAWS {
        return Err(Error::TooFewDraws { needed: MIN_GEWEKE_DRAWS, got: chain.len() });
    }
    if !(first > 0.0 && last > 0.0 && first + last <= 1.0) {
        return Err(Error::InvalidArgument("Geweke windows must be positive and not overlap".into()));
    }
    let n = chain.len();
    let na = ((first * n as f64).round() as usize).max(2);
    let nb = ((last * n as f64).round() as usize).max(2);
    let a = &chain[..na];
    let b = &chain[n - nb..];
    let lag = |len: usize| ((0.04 * len as f64).floor() as usize).max(1);
    let var = spectral_density_zero(a, lag(na)) / na as f64 + spectral_density_zero(b, lag(nb)) / nb as f64;
    let scale = mean(chain).abs().max(1.0);
    if !(var > 1e-28 * scale * scale) {
        return Err(Error::Data("Geweke statistic undefined for a zero-variance chain".into()));
    }
    Ok((mean(a) - mean(b)) / var.sqrt())
}

/// Geweke z with the conventional 10% / 50% windows.
pub fn geweke(chain: &[f64]) -> Result<f64> {
    geweke_windows(chain, 0.1, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub rhat: f64,
    pub rhat_upper: f64,
    pub degenerate: bool,
    /// Per-chain Geweke z; absent for a zero-variance chain.
    pub geweke_z: Vec<Option<f64>>,
    pub geweke_mean_abs_z: Option<f64>,
    pub flag_rhat: bool,
    pub flag_geweke: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub split: bool,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub parameters: Vec<ParameterDiagnostics>,
}

impl DiagnosticsReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ParameterDiagnostics> {
        self.parameters.iter().filter(|p| p.flag_rhat || p.flag_geweke || p.degenerate)
    }

    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["parameter", "rhat", "rhat_upper", "geweke_mean_abs_z", "flag_rhat", "flag_geweke", "degenerate"])?;
        for p in self.flagged() {
            out.write_record([
                p.name.clone(),
                p.rhat.to_string(),
                p.rhat_upper.to_string(),
                p.geweke_mean_abs_z.map_or_else(|| "NA".into(), |v| v.to_string()),
                p.flag_rhat.to_string(),
                p.flag_geweke.to_string(),
                p.degenerate.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// R̂ and Geweke summaries for every monitored parameter.
pub fn diagnose(draws: &PosteriorDraws, split: bool) -> Result<DiagnosticsReport> {
    let names = draws.parameter_names();
    let parameters = names
        .iter()
        .enumerate()
        .map(|(idx, name)| {
            let tr = draws.traces(idx);
            let r = gelman_rubin(&tr, split)?;
            let zs = tr
                .iter()
                .map(|c| match geweke(c) {
                    Ok(z) => Ok(Some(z)),
                    Err(Error::Data(_)) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()?;
            let finite: Vec<f64> = zs.iter().flatten().map(|z| z.abs()).collect();
            let mean_abs = (!finite.is_empty()).then(|| mean(&finite));
            Ok(ParameterDiagnostics {
                name: name.clone(),
                rhat: r.point,
                rhat_upper: r.upper,
                degenerate: r.degenerate,
                geweke_z: zs,
                geweke_mean_abs_z: mean_abs,
                flag_rhat: r.point > RHAT_THRESHOLD,
                flag_geweke: mean_abs.is_some_and(|z| z > GEWEKE_THRESHOLD),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsReport {
        split,
        chains: draws.chains.len(),
        draws_per_chain: draws.chains.iter().map(|c| c.len()).min().unwrap_or(0),
        parameters,
    })
}
