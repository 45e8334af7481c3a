//! Heterogeneous treatment-effect benchmark.
//!
//! Units `g = 1..G` each contribute `r` observations `y = x + τ_g d + ε`
//! (or a Bernoulli draw on the logit scale), with exactly `⌊r/2⌋` treated
//! per unit. Four estimators are compared on RMSE of the per-unit effects:
//!
//! * `SSp`: unit intercepts and unit treatment effects; agnostic fusion of
//!   the effects with Gertheiss-Tutz weights, the intercepts shrunk toward
//!   their mean by a ridge whose strength is an empirical-Bayes estimate
//!   (a stand-in for a random effect), `λ` by AIC;
//! * `A-SSp`: as `SSp` with adaptive weights from a ridge-stabilized pilot;
//! * `FE`: the unpenalized interactive model `y ~ x + d * g`;
//! * `Pooled`: `y ~ x + d`.
//!
//! Effects are extracted by Monte Carlo over 1000 common standard normal
//! covariate draws.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{aic_grid, CalibrateOptions};
use crate::em::{ridge_pilot, EmOptions, PILOT_RIDGE};
use crate::error::{Error, Result};
use crate::family::{logistic, Family};
use crate::gibbs::chain_rng;
use crate::linalg;
use crate::propriety::monitored_newton;
use crate::stats;
use crate::structure::{adaptive_weights, ConstraintSet, LinearRow};

pub const MC_DRAWS: usize = 1000;
/// Stream offset separating covariate draws for effect extraction from the
/// replicate data streams.
const MC_STREAM: usize = 1 << 32;
/// Ridge strength (relative to `N`) of the adaptive pilot.
pub const ADAPTIVE_PILOT_RIDGE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimFamily {
    Linear,
    Binomial,
}

impl FromStr for SimFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "gaussian" => Ok(SimFamily::Linear),
            "binomial" | "logistic" => Ok(SimFamily::Binomial),
            _ => Err(Error::InvalidArgument(format!("unknown simulation family `{s}`"))),
        }
    }
}

impl SimFamily {
    pub fn family(self) -> Family {
        match self {
            SimFamily::Linear => Family::Linear,
            SimFamily::Binomial => Family::Logistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    /// Number of units.
    pub g: usize,
    /// Observations per unit.
    pub r: usize,
    /// Units at `−1` and at `+1`.
    pub s: usize,
    pub family: SimFamily,
    pub seed: u64,
    pub replicates: usize,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.g == 0 || 2 * self.s > self.g || self.r < 2 || self.replicates == 0 {
            return Err(Error::InvalidArgument("need G ≥ 1, 2S ≤ G, r ≥ 2 and at least one replicate".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.g * self.r
    }

    /// `S` copies of −1, `G − 2S` zeros, `S` copies of +1.
    pub fn true_tau(&self) -> Vec<f64> {
        let mut t = vec![-1.0; self.s];
        t.extend(std::iter::repeat_n(0.0, self.g - 2 * self.s));
        t.extend(std::iter::repeat_n(1.0, self.s));
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimData {
    pub x: Vec<f64>,
    pub d: Vec<f64>,
    pub unit: Vec<usize>,
    pub y: Vec<f64>,
    pub tau: Vec<f64>,
}

/// One dataset; observations are ordered by unit.
pub fn generate<R: Rng + ?Sized>(spec: &SimulationSpec, rng: &mut R) -> Result<SimData> {
    spec.validate()?;
    let tau = spec.true_tau();
    let n = spec.n();
    let mut data = SimData {
        x: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        unit: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        tau: tau.clone(),
    };
    for (g, t) in tau.iter().enumerate() {
        let mut treat: Vec<f64> = (0..spec.r).map(|i| f64::from(i < spec.r / 2)).collect();
        treat.shuffle(rng);
        for d in treat {
            let x: f64 = rng.sample(StandardNormal);
            let eta = x + t * d;
            let y = match spec.family {
                SimFamily::Linear => eta + rng.sample::<f64, _>(StandardNormal),
                SimFamily::Binomial => f64::from(rng.random::<f64>() < logistic(eta)),
            };
            data.x.push(x);
            data.d.push(d);
            data.unit.push(g);
            data.y.push(y);
        }
    }
    Ok(data)
}

/// A fitted model of the form `η = b_x·x + α_g + τ_g·d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitModel {
    pub family: SimFamily,
    pub beta_x: f64,
    pub alpha: Vec<f64>,
    pub tau: Vec<f64>,
}

impl UnitModel {
    pub fn mean(&self, d: f64, g: usize, x: f64) -> f64 {
        let eta = self.beta_x * x + self.alpha[g] + self.tau[g] * d;
        match self.family {
            SimFamily::Linear => eta,
            SimFamily::Binomial => logistic(eta),
        }
    }
}

/// Common standard normal covariate draws.
pub fn mc_covariates(count: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// Per unit, the average of `E[y | d=1, g, x̃] − E[y | d=0, g, x̃]` over `xs`.
pub fn mc_treatment_effects(model: &UnitModel, xs: &[f64]) -> Vec<f64> {
    (0..model.tau.len())
        .map(|g| xs.iter().map(|&x| model.mean(1.0, g, x) - model.mean(0.0, g, x)).sum::<f64>() / xs.len() as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SSp")]
    Ssp,
    #[serde(rename = "A-SSp")]
    AdaptiveSsp,
    #[serde(rename = "FE")]
    FixedEffects,
    #[serde(rename = "Pooled")]
    Pooled,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ssp, Method::AdaptiveSsp, Method::FixedEffects, Method::Pooled];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ssp => "SSp",
            Method::AdaptiveSsp => "A-SSp",
            Method::FixedEffects => "FE",
            Method::Pooled => "Pooled",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ssp" => Ok(Method::Ssp),
            "a-ssp" | "assp" | "adaptive" => Ok(Method::AdaptiveSsp),
            "fe" | "fixed-effects" => Ok(Method::FixedEffects),
            "pooled" => Ok(Method::Pooled),
            _ => Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        }
    }
}

/// Columns `[x, α_1..α_G, τ_1..τ_G]` with `α_g = 1{g}` and `τ_g = d·1{g}`.
pub fn unit_design(data: &SimData, g: usize) -> DMatrix<f64> {
    let n = data.y.len();
    let mut m = DMatrix::zeros(n, 1 + 2 * g);
    for i in 0..n {
        m[(i, 0)] = data.x[i];
        m[(i, 1 + data.unit[i])] = 1.0;
        m[(i, 1 + g + data.unit[i])] = data.d[i];
    }
    m
}

fn unit_model(family: SimFamily, beta: &[f64], g: usize) -> UnitModel {
    UnitModel { family, beta_x: beta[0], alpha: beta[1..1 + g].to_vec(), tau: beta[1 + g..].to_vec() }
}

/// Agnostic fusion over the treatment-effect columns with Gertheiss-Tutz
/// weights.
pub fn ssp_constraints(data: &SimData, g: usize) -> Result<ConstraintSet> {
    let p = 1 + 2 * g;
    let n = data.y.len();
    let mut rows = Vec::with_capacity(g * (g - 1) / 2);
    for a in 0..g {
        for b in a + 1..g {
            rows.push(LinearRow::difference(1 + g + a, 1 + g + b, 1.0));
        }
    }
    let mut counts = vec![0.0; p];
    for i in 0..n {
        counts[1 + data.unit[i]] += 1.0;
        if data.d[i] != 0.0 {
            counts[1 + g + data.unit[i]] += 1.0;
        }
    }
    ConstraintSet::new(p, rows, vec![])?.with_gertheiss_tutz(&counts, n)
}

/// Largest intercept precision used when the unit variance is estimated at 0.
pub const MAX_INTERCEPT_PRECISION: f64 = 1e6;

/// Random-effect stand-in for the unit intercepts: the precision `κ` of a
/// normal law on `α_g − ᾱ`, with the unit variance estimated by moments from
/// a lightly stabilized unpenalized fit (spread of `α̂` minus its mean sampling
/// variance). Returns `κ(I − 11ᵀ/G)` on the intercept block, in the units of
/// the EM ridge (multiplied by `σ̂²` for the linear family).
pub fn intercept_ridge(x: &DMatrix<f64>, y: &[f64], g: usize, family: SimFamily) -> Result<DMatrix<f64>> {
    let (n, p) = (x.nrows(), x.ncols());
    let fam = family.family();
    let beta = ridge_pilot(x, y, fam, PILOT_RIDGE * n as f64)?;
    let eta = x * &beta;
    let (w, sigma2): (Vec<f64>, f64) = match family {
        SimFamily::Linear => {
            let rss: f64 = eta.iter().zip(y).map(|(e, v)| (v - e).powi(2)).sum();
            (vec![1.0; n], rss / (n as f64 - p as f64).max(1.0))
        }
        SimFamily::Binomial => (eta.iter().map(|&e| (logistic(e) * (1.0 - logistic(e))).max(1e-10)).collect(), 1.0),
    };
    let mut xw = x.clone();
    for (i, wi) in w.iter().enumerate() {
        xw.row_mut(i).scale_mut(*wi);
    }
    let mut info = x.transpose() * xw;
    for k in 0..p {
        info[(k, k)] += PILOT_RIDGE * n as f64;
    }
    let cov = info.try_inverse().ok_or_else(|| Error::Data("intercept information is singular".into()))? * sigma2;
    let alpha: Vec<f64> = beta.as_slice()[1..=g].to_vec();
    let sampling = (1..=g).map(|k| cov[(k, k)]).sum::<f64>() / g as f64;
    let spread = (stats::variance(&alpha) - sampling).max(0.0);
    let precision = if spread > 0.0 { (1.0 / spread).min(MAX_INTERCEPT_PRECISION) } else { MAX_INTERCEPT_PRECISION };
    let kappa = precision * sigma2;
    let mut r = DMatrix::zeros(p, p);
    for a in 1..=g {
        for b in 1..=g {
            r[(a, b)] = kappa * (f64::from(a == b) - 1.0 / g as f64);
        }
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub methods: Vec<Method>,
    pub calibrate: CalibrateOptions,
    pub adaptive_gamma: f64,
    pub mc_draws: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            calibrate: CalibrateOptions { em: EmOptions::default(), ..Default::default() },
            adaptive_gamma: 1.0,
            mc_draws: MC_DRAWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFit {
    pub model: UnitModel,
    pub lambda: Option<f64>,
    pub df: Option<f64>,
    /// Largest post-clipping EM objective decrease over the `λ` grid.
    pub em_max_decrease: Option<f64>,
}

fn fit_unpenalized(x: &DMatrix<f64>, y: &[f64], family: SimFamily) -> Result<Vec<f64>> {
    match family {
        SimFamily::Linear => {
            let xt = x.transpose();
            Ok(linalg::solve_spd(&(&xt * x), &(&xt * DVector::from_column_slice(y))).x.iter().copied().collect())
        }
        SimFamily::Binomial => {
            let out = monitored_newton(Family::Logistic, x, y);
            if out.finite {
                Ok(out.coefficients.iter().copied().collect())
            } else {
                Err(Error::Data("maximum likelihood estimate does not exist (separation)".into()))
            }
        }
    }
}

/// Fit one method to one dataset.
pub fn fit_method(method: Method, data: &SimData, spec: &SimulationSpec, opts: &BenchOptions) -> Result<MethodFit> {
    let g = spec.g;
    match method {
        Method::FixedEffects => {
            let beta = fit_unpenalized(&unit_design(data, g), &data.y, spec.family)?;
            Ok(MethodFit { model: unit_model(spec.family, &beta, g), lambda: None, df: Some((1 + 2 * g) as f64), em_max_decrease: None })
        }
        Method::Pooled => {
            let n = data.y.len();
            let x = DMatrix::from_fn(n, 3, |i, j| match j {
                0 => 1.0,
                1 => data.x[i],
                _ => data.d[i],
            });
            let b = fit_unpenalized(&x, &data.y, spec.family)?;
            Ok(MethodFit {
                model: UnitModel { family: spec.family, beta_x: b[1], alpha: vec![b[0]; g], tau: vec![b[2]; g] },
                lambda: None,
                df: Some(3.0),
                em_max_decrease: None,
            })
        }
        Method::Ssp | Method::AdaptiveSsp => {
            let x = unit_design(data, g);
            let mut cset = ssp_constraints(data, g)?;
            let mut calibrate = opts.calibrate.clone();
            if g > 1 {
                calibrate.em.ridge = Some(intercept_ridge(&x, &data.y, g, spec.family)?);
            }
            if method == Method::AdaptiveSsp {
                let family = spec.family.family();
                let pilot = ridge_pilot(&x, &data.y, family, ADAPTIVE_PILOT_RIDGE * data.y.len() as f64)?;
                cset = adaptive_weights(&cset, pilot.as_slice(), opts.adaptive_gamma)?;
            }
            let fit = aic_grid(&x, &data.y, &cset, spec.family.family(), &calibrate)?;
            Ok(MethodFit {
                model: unit_model(spec.family, &fit.best.beta_hat, g),
                lambda: Some(fit.calibration.lambda_star),
                df: Some(fit.best.df),
                em_max_decrease: Some(fit.calibration.max_decrease()),
            })
        }
    }
}

pub fn rmse(estimate: &[f64], truth: &[f64]) -> f64 {
    (estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// Absent when the fit failed.
    pub rmse: Option<f64>,
    pub effects: Vec<f64>,
    pub lambda: Option<f64>,
    pub df: Option<f64>,
    pub em_max_decrease: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    /// True effects on the response scale.
    pub truth: Vec<f64>,
    pub outcomes: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_rmse: f64,
    /// `sd/√n` over the successful replicates.
    pub se: f64,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub spec: SimulationSpec,
    pub summaries: Vec<MethodSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

impl SimResult {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// One row per replicate and method.
    pub fn replicate_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["replicate", "method", "rmse", "lambda", "df", "error"])?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:e}"));
        for r in &self.replicates {
            for o in &r.outcomes {
                out.write_record([
                    r.replicate.to_string(),
                    o.method.to_string(),
                    opt(o.rmse),
                    opt(o.lambda),
                    opt(o.df),
                    o.error.clone().unwrap_or_default(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Per-unit effect estimates next to the truth, for plotting.
    pub fn effects_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["replicate", "method", "unit", "truth", "estimate"])?;
        for r in &self.replicates {
            for o in r.outcomes.iter().filter(|o| o.rmse.is_some()) {
                for (g, e) in o.effects.iter().enumerate() {
                    out.write_record([
                        r.replicate.to_string(),
                        o.method.to_string(),
                        g.to_string(),
                        format!("{:e}", r.truth[g]),
                        format!("{e:e}"),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Generate replicate `rep` and score every requested method on it.
pub fn run_replicate(spec: &SimulationSpec, rep: usize, opts: &BenchOptions) -> Result<ReplicateRecord> {
    let data = generate(spec, &mut chain_rng(spec.seed, rep))?;
    let xs = mc_covariates(opts.mc_draws, &mut chain_rng(spec.seed, MC_STREAM + rep));
    let truth_model = UnitModel { family: spec.family, beta_x: 1.0, alpha: vec![0.0; spec.g], tau: data.tau.clone() };
    let truth = mc_treatment_effects(&truth_model, &xs);
    let outcomes = opts
        .methods
        .iter()
        .map(|&method| match fit_method(method, &data, spec, opts) {
            Ok(fit) => {
                let effects = mc_treatment_effects(&fit.model, &xs);
                MethodOutcome {
                    method,
                    rmse: Some(rmse(&effects, &truth)),
                    effects,
                    lambda: fit.lambda,
                    df: fit.df,
                    em_max_decrease: fit.em_max_decrease,
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("replicate {rep}: {method} failed: {e}");
                MethodOutcome {
                    method,
                    rmse: None,
                    effects: vec![],
                    lambda: None,
                    df: None,
                    em_max_decrease: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    Ok(ReplicateRecord { replicate: rep, truth, outcomes })
}

/// All replicates (in parallel) and per-method RMSE summaries.
pub fn run_benchmark(spec: &SimulationSpec, opts: &BenchOptions) -> Result<SimResult> {
    spec.validate()?;
    if opts.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    let replicates =
        (0..spec.replicates).into_par_iter().map(|rep| run_replicate(spec, rep, opts)).collect::<Result<Vec<_>>>()?;
    let summaries = opts
        .methods
        .iter()
        .map(|&method| {
            let vals: Vec<f64> = replicates
                .iter()
                .filter_map(|r| r.outcomes.iter().find(|o| o.method == method).and_then(|o| o.rmse))
                .collect();
            let k = vals.len();
            MethodSummary {
                method,
                mean_rmse: if k > 0 { stats::mean(&vals) } else { f64::NAN },
                se: if k > 1 { stats::sd(&vals) / (k as f64).sqrt() } else { f64::NAN },
                succeeded: k,
                failed: replicates.len() - k,
            }
        })
        .collect();
    Ok(SimResult { spec: *spec, summaries, replicates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(g: usize, s: usize) -> SimulationSpec {
        SimulationSpec { g, r: 20, s, family: SimFamily::Linear, seed: 3, replicates: 1 }
    }

    #[test]
    fn truth_layout() {
        let t = spec(25, 12).true_tau();
        assert_eq!(t.iter().filter(|&&v| v == -1.0).count(), 12);
        assert_eq!(t.iter().filter(|&&v| v == 0.0).count(), 1);
        let t = spec(25, 6).true_tau();
        assert_eq!((t[5], t[6], t[18], t[19]), (-1.0, 0.0, 0.0, 1.0));
        assert!(spec(25, 13).validate().is_err());
    }

    #[test]
    fn generate_is_deterministic_and_balanced() {
        let s = spec(5, 2);
        let a = generate(&s, &mut chain_rng(1, 0)).unwrap();
        let b = generate(&s, &mut chain_rng(1, 0)).unwrap();
        assert_eq!(a, b);
        for g in 0..5 {
            let treated: f64 = (0..a.y.len()).filter(|&i| a.unit[i] == g).map(|i| a.d[i]).sum();
            assert_eq!(treated, 10.0);
        }
    }

    #[test]
    fn linear_effects_equal_coefficients() {
        let m = UnitModel { family: SimFamily::Linear, beta_x: 0.7, alpha: vec![0.3, -1.0], tau: vec![0.25, -2.0] };
        let xs = mc_covariates(100, &mut chain_rng(0, 0));
        let e = mc_treatment_effects(&m, &xs);
        assert!((e[0] - 0.25).abs() < 1e-12 && (e[1] + 2.0).abs() < 1e-12);
        let z = UnitModel { family: SimFamily::Binomial, beta_x: 1.0, alpha: vec![0.0], tau: vec![0.0] };
        assert_eq!(mc_treatment_effects(&z, &xs), vec![0.0]);
    }

    #[test]
    fn fixed_effects_are_residualized_differences_in_means() {
        let s = spec(4, 1);
        let data = generate(&s, &mut chain_rng(5, 0)).unwrap();
        let fit = fit_method(Method::FixedEffects, &data, &s, &BenchOptions::default()).unwrap();
        let b = fit.model.beta_x;
        for g in 0..4 {
            let idx: Vec<usize> = (0..data.y.len()).filter(|&i| data.unit[i] == g).collect();
            let mean_of = |t: f64| {
                let v: Vec<f64> = idx.iter().filter(|&&i| data.d[i] == t).map(|&i| data.y[i] - b * data.x[i]).collect();
                stats::mean(&v)
            };
            assert!((fit.model.tau[g] - (mean_of(1.0) - mean_of(0.0))).abs() < 1e-9);
        }
    }
}
