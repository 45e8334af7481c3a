//! Choosing `λ`, anchoring the Bayesian hyperprior, and model scoring.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{fit_em, EmOptions, EmSolution, Init};
use crate::error::{Error, Result};
use crate::family::{self, Family};
use crate::gibbs::PosteriorDraws;
use crate::linalg;
use crate::structure::ConstraintSet;

pub const DEFAULT_GRID_POINTS: usize = 50;
pub const ANCHOR_SHAPE: f64 = 2.0;
pub const MIN_WAIC_DRAWS: usize = 100;
/// Relative AIC difference treated as a tie.
pub const AIC_TIE_TOL: f64 = 1e-9;

/// `df = Σ_blocks (p − rank(binding rows))`.
pub fn df_estimate(sol: &EmSolution, cset: &ConstraintSet) -> f64 {
    let t = cset.n_terms().max(1);
    let blocks = sol.family.blocks();
    (0..blocks)
        .map(|c| {
            let terms: Vec<usize> =
                sol.binding_set.iter().filter(|&&b| b / t == c).map(|&b| b % t).collect();
            let rank = if terms.is_empty() { 0 } else { linalg::numerical_rank(&cset.binding_rows(&terms)) };
            (cset.p - rank) as f64
        })
        .sum()
}

/// `points` log-equally-spaced values over `[1e-3, 1e3]·‖Xᵀy‖∞/N`.
pub fn lambda_grid(x: &DMatrix<f64>, y: &[f64], points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::InvalidArgument("a lambda grid needs at least two points".into()));
    }
    let n = x.nrows().max(1) as f64;
    let xty = x.transpose() * DVector::from_column_slice(y);
    let mut scale = xty.amax() / n;
    if !(scale > 0.0 && scale.is_finite()) {
        scale = 1.0;
    }
    let (lo, hi) = ((1e-3 * scale).ln(), (1e3 * scale).ln());
    Ok((0..points).map(|k| (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum GridSpec {
    /// [`lambda_grid`] with this many points, computed on the data at hand.
    Auto(usize),
    Values(Vec<f64>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Auto(DEFAULT_GRID_POINTS)
    }
}

impl GridSpec {
    pub fn resolve(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            GridSpec::Auto(k) => lambda_grid(x, y, *k),
            GridSpec::Values(v) => {
                if v.len() < 2 {
                    return Err(Error::InvalidArgument("a lambda grid needs at least two points".into()));
                }
                if v.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                    return Err(Error::InvalidArgument("grid values must be positive".into()));
                }
                let mut s = v.clone();
                s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                s.dedup();
                if s.len() < 2 {
                    return Err(Error::InvalidArgument("a lambda grid needs at least two distinct points".into()));
                }
                Ok(s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub df: f64,
    pub log_lik: f64,
    pub aic: f64,
    pub converged: bool,
    /// Largest objective decrease after the clipping phase (0 if monotone).
    pub max_decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub grid: Vec<GridPoint>,
    pub lambda_star: f64,
    /// Gamma(shape, rate) hyperprior on `λ²`.
    pub anchored_prior: (f64, f64),
    pub waic: Option<f64>,
    pub cv_rmse: Option<f64>,
    /// Grid points whose fit failed.
    pub failures: Vec<(f64, String)>,
}

impl CalibrationResult {
    /// Largest post-clipping objective decrease over the grid.
    pub fn max_decrease(&self) -> f64 {
        self.grid.iter().map(|g| g.max_decrease).fold(0.0, f64::max)
    }

    pub fn grid_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lambda", "df", "log_lik", "aic", "converged"])?;
        for g in &self.grid {
            out.write_record([
                g.lambda.to_string(),
                g.df.to_string(),
                g.log_lik.to_string(),
                g.aic.to_string(),
                g.converged.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicFit {
    pub calibration: CalibrationResult,
    pub best: EmSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateOptions {
    pub grid: GridSpec,
    pub em: EmOptions,
    /// Fit the grid in increasing order, starting each fit at the previous
    /// solution. Otherwise every grid point starts from `em.init` and the
    /// points are fitted in parallel.
    pub warm_start: bool,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        Self { grid: GridSpec::default(), em: EmOptions::default(), warm_start: false }
    }
}

/// EM fits over a `λ` grid; `λ*` minimizes `AIC = −2·ℓ(β̂) + 2·df`.
pub fn aic_grid(
    x: &DMatrix<f64>,
    y: &[f64],
    cset: &ConstraintSet,
    family: Family,
    opts: &CalibrateOptions,
) -> Result<AicFit> {
    let lambdas = opts.grid.resolve(x, y)?;
    let fits: Vec<Result<EmSolution>> = if opts.warm_start {
        let mut em = opts.em.clone();
        lambdas
            .iter()
            .map(|&l| {
                let r = fit_em(x, y, cset, l, family, &em);
                if let Ok(s) = &r {
                    em.init = Init::Given(s.beta_hat.clone());
                }
                r
            })
            .collect()
    } else {
        lambdas.par_iter().map(|&l| fit_em(x, y, cset, l, family, &opts.em)).collect()
    };
    let mut grid = Vec::new();
    let mut failures = Vec::new();
    let mut sols = Vec::new();
    for (l, r) in lambdas.iter().zip(fits) {
        match r {
            Ok(s) if s.aic.is_finite() => {
                grid.push(GridPoint {
                    lambda: *l,
                    df: s.df,
                    log_lik: s.loglik,
                    aic: s.aic,
                    converged: s.converged,
                    max_decrease: s.max_decrease(),
                });
                sols.push(s);
            }
            Ok(_) => failures.push((*l, "non-finite AIC".to_string())),
            Err(e) => failures.push((*l, e.to_string())),
        }
    }
    if sols.is_empty() {
        return Err(Error::AllFitsFailed(failures.first().map(|f| f.1.clone()).unwrap_or_default()));
    }
    // Ties (identical fused fits) go to the largest λ.
    let min_aic = sols.iter().map(|s| s.aic).fold(f64::INFINITY, f64::min);
    let tie = AIC_TIE_TOL * min_aic.abs().max(1.0);
    let pick = sols.iter().rposition(|s| s.aic <= min_aic + tie).expect("non-empty");
    let best = sols.swap_remove(pick);
    for (l, why) in &failures {
        log::warn!("fit at lambda {l} failed: {why}");
    }
    let lambda_star = best.lambda;
    Ok(AicFit {
        calibration: CalibrationResult {
            grid,
            lambda_star,
            anchored_prior: anchor_prior(lambda_star)?,
            waic: None,
            cv_rmse: None,
            failures,
        },
        best,
    })
}

/// Gamma hyperprior on `λ²` with shape 2 and mean `(λ*)²`.
pub fn anchor_prior(lambda_star: f64) -> Result<(f64, f64)> {
    if !(lambda_star > 0.0 && lambda_star.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda_star must be positive, got {lambda_star}")));
    }
    Ok((ANCHOR_SHAPE, ANCHOR_SHAPE / (lambda_star * lambda_star)))
}

/// Pointwise log predictive densities accumulated draw by draw.
struct PointwiseAccumulator {
    max: Vec<f64>,
    sum_exp: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: usize,
}

impl PointwiseAccumulator {
    fn new(n: usize) -> Self {
        Self {
            max: vec![f64::NEG_INFINITY; n],
            sum_exp: vec![0.0; n],
            mean: vec![0.0; n],
            m2: vec![0.0; n],
            count: 0,
        }
    }

    fn push(&mut self, ll: &[f64]) {
        self.count += 1;
        let k = self.count as f64;
        for (i, &v) in ll.iter().enumerate() {
            if v > self.max[i] {
                self.sum_exp[i] = self.sum_exp[i] * (self.max[i] - v).exp() + 1.0;
                self.max[i] = v;
            } else {
                self.sum_exp[i] += (v - self.max[i]).exp();
            }
            let d = v - self.mean[i];
            self.mean[i] += d / k;
            self.m2[i] += d * (v - self.mean[i]);
        }
    }

    fn waic(&self) -> f64 {
        let s = self.count as f64;
        let lppd: f64 = self.max.iter().zip(&self.sum_exp).map(|(m, e)| m + e.ln() - s.ln()).sum();
        let p_waic: f64 = self.m2.iter().map(|v| v / (s - 1.0)).sum();
        -2.0 * (lppd - p_waic)
    }
}

/// `WAIC = −2·(lppd − p_waic)` with the variance form of `p_waic`.
pub fn waic(draws: &PosteriorDraws, x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    let total = draws.n_draws();
    if total < MIN_WAIC_DRAWS {
        return Err(Error::TooFewDraws { needed: MIN_WAIC_DRAWS, got: total });
    }
    if x.nrows() != y.len() {
        return Err(Error::Dimension("X rows differ from y length".into()));
    }
    let family = draws.family;
    let mut acc = PointwiseAccumulator::new(y.len());
    for c in &draws.chains {
        for s in 0..c.len() {
            let beta = DVector::from_column_slice(&c.beta[s]);
            let eta = family::linear_predictors(family, x, &beta)?;
            let sigma2 = c.sigma2.get(s).copied().unwrap_or(1.0);
            acc.push(&family::pointwise_loglik(family, &eta, y, sigma2));
        }
    }
    Ok(acc.waic())
}

/// Squared prediction errors on the response scale; multinomial uses the
/// squared distance between the one-hot outcome and the probability vector.
fn squared_errors(family: Family, eta: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    match family {
        Family::Multinomial { .. } => {
            let j = eta.ncols();
            (0..eta.nrows())
                .map(|i| {
                    let mut row = vec![0.0; j + 1];
                    for c in 0..j {
                        row[c + 1] = eta[(i, c)];
                    }
                    let lse = family::log_sum_exp(&row);
                    row.iter()
                        .enumerate()
                        .map(|(c, v)| {
                            let hit = f64::from(y[i] as usize == c);
                            (hit - (v - lse).exp()).powi(2)
                        })
                        .sum()
                })
                .collect()
        }
        _ => family::fitted_mean(family, eta).iter().zip(y).map(|(m, v)| (v - m).powi(2)).collect(),
    }
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Seeded fold labels: a random permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        out[i] = pos % folds;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub rmse: f64,
    pub folds_used: usize,
    pub skipped: Vec<usize>,
    /// `λ*` chosen in each used fold.
    pub lambda_star: Vec<f64>,
}

/// K-fold cross-validated RMSE of held-out predictions, each fold using its
/// own AIC-selected `λ`. Folds whose training outcome is constant are skipped.
pub fn kfold_cv(
    x: &DMatrix<f64>,
    y: &[f64],
    cset: &ConstraintSet,
    family: Family,
    folds: usize,
    seed: u64,
    opts: &CalibrateOptions,
) -> Result<CvResult> {
    let n = y.len();
    if folds < 2 || n < folds {
        return Err(Error::InvalidArgument(format!("need 2 ≤ folds ≤ N, got {folds} folds for {n} rows")));
    }
    if x.nrows() != n {
        return Err(Error::Dimension("X rows differ from y length".into()));
    }
    let labels = fold_assignment(n, folds, seed);
    let per_fold: Vec<std::result::Result<(Vec<f64>, f64), String>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
            let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            if ytr.iter().all(|v| *v == ytr[0]) {
                return Err("training outcome is constant".to_string());
            }
            let xtr = select_rows(x, &train);
            let fit = aic_grid(&xtr, &ytr, cset, family, opts).map_err(|e| e.to_string())?;
            let eta = family::linear_predictors(family, &select_rows(x, &test), &fit.best.beta())
                .map_err(|e| e.to_string())?;
            let yte: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            Ok((squared_errors(family, &eta, &yte), fit.calibration.lambda_star))
        })
        .collect();
    let (mut sse, mut count) = (0.0, 0usize);
    let mut skipped = Vec::new();
    let mut lambda_star = Vec::new();
    for (f, r) in per_fold.into_iter().enumerate() {
        match r {
            Ok((e, l)) => {
                sse += e.iter().sum::<f64>();
                count += e.len();
                lambda_star.push(l);
            }
            Err(why) => {
                log::warn!("fold {f} skipped: {why}");
                skipped.push(f);
            }
        }
    }
    if count == 0 {
        return Err(Error::AllFitsFailed("every fold was skipped".into()));
    }
    Ok(CvResult { rmse: (sse / count as f64).sqrt(), folds_used: folds - skipped.len(), skipped, lambda_star })
}
