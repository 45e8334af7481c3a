//! Gibbs samplers for the structured sparse posterior.
//!
//! The penalty is represented as a scale mixture of normals: each linear row
//! carries a latent `τ²_k` and each quadratic term a latent `ξ²_ℓ`, with
//! `1/τ²_k | · ∼ InvGaussian(λσ/|d_kᵀβ|, λ²)`. Binomial and multinomial
//! likelihoods are made conditionally Gaussian by Pólya-Gamma augmentation.
//!
//! Each chain owns a `ChaCha8Rng` seeded by the master seed with the chain
//! index as its stream, so chains are reproducible and run in parallel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{InverseGaussian, PolyaGamma};
use crate::error::{Error, Result};
use crate::family::{self, Family};
use crate::linalg;
use crate::propriety::check_posterior;
use crate::structure::ConstraintSet;

const GAP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LambdaPrior {
    Fixed { lambda: f64 },
    /// Gamma(shape, rate) on `λ²`.
    Gamma { shape: f64, rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SigmaPrior {
    /// Inverse-gamma(shape, rate) on `σ²`.
    InverseGamma { shape: f64, rate: f64 },
    Fixed { sigma2: f64 },
}

/// Shape of the `λ²` full conditional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda2Shape {
    /// `a + (K + L + m)/2` with `m = rank(D̄)`.
    Rank,
    /// `a + (p + K + L)/2`.
    Dimension,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub lambda: LambdaPrior,
    pub sigma: SigmaPrior,
    pub lambda2_shape: Lambda2Shape,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            lambda: LambdaPrior::Gamma { shape: 1.0, rate: 1.0 },
            sigma: SigmaPrior::InverseGamma { shape: 1.0, rate: 1.0 },
            lambda2_shape: Lambda2Shape::Rank,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let ok = match self.lambda {
            LambdaPrior::Fixed { lambda } => pos(lambda),
            LambdaPrior::Gamma { shape, rate } => pos(shape) && pos(rate),
        } && match self.sigma {
            SigmaPrior::InverseGamma { shape, rate } => pos(shape) && pos(rate),
            SigmaPrior::Fixed { sigma2 } => pos(sigma2),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("prior hyperparameters must be positive and finite".into()))
        }
    }

    fn initial_lambda2(&self) -> f64 {
        match self.lambda {
            LambdaPrior::Fixed { lambda } => lambda * lambda,
            LambdaPrior::Gamma { shape, rate } => shape / rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub chains: usize,
    /// Total iterations per chain, burn-in included.
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Sample even when posterior propriety is not established.
    pub force: bool,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self { chains: 4, iters: 10_000, burnin: 5_000, thin: 1, seed: 0, force: false }
    }
}

impl SamplerSettings {
    fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.thin == 0 || self.iters <= self.burnin {
            return Err(Error::InvalidArgument("need chains ≥ 1, thin ≥ 1 and iters > burnin".into()));
        }
        Ok(())
    }

    pub fn kept(&self) -> usize {
        (self.iters - self.burnin) / self.thin
    }
}

/// Kept draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub stream: u64,
    /// One row per kept draw.
    pub beta: Vec<Vec<f64>>,
    pub lambda2: Vec<f64>,
    /// Empty for families without `σ`.
    pub sigma2: Vec<f64>,
    /// `Σ τ²_k + Σ ξ²_ℓ` per kept draw.
    pub tau2_sum: Vec<f64>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub family: Family,
    pub labels: Vec<String>,
    pub seed: u64,
    pub burnin: usize,
    pub thin: usize,
    pub chains: Vec<Chain>,
    /// Set when sampling was forced past a failed propriety check.
    pub unverified: bool,
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(Chain::len).sum()
    }

    /// Names of every monitored scalar: coefficients, then `lambda2`, then
    /// `sigma2` when present.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = self.labels.clone();
        names.push("lambda2".into());
        if self.chains.first().is_some_and(|c| !c.sigma2.is_empty()) {
            names.push("sigma2".into());
        }
        names
    }

    /// Per-chain trace of parameter `idx` (indexing as in
    /// [`parameter_names`](Self::parameter_names)).
    pub fn traces(&self, idx: usize) -> Vec<Vec<f64>> {
        let p = self.labels.len();
        self.chains
            .iter()
            .map(|c| {
                if idx < p {
                    c.beta.iter().map(|b| b[idx]).collect()
                } else if idx == p {
                    c.lambda2.clone()
                } else {
                    c.sigma2.clone()
                }
            })
            .collect()
    }

    /// All coefficient draws pooled across chains.
    pub fn pooled_beta(&self) -> Vec<&Vec<f64>> {
        self.chains.iter().flat_map(|c| c.beta.iter()).collect()
    }

    pub fn pooled_sigma2(&self) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.sigma2.iter().copied()).collect()
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let p = self.labels.len();
        let draws = self.pooled_beta();
        let mut m = vec![0.0; p];
        for d in &draws {
            for j in 0..p {
                m[j] += d[j];
            }
        }
        m.iter_mut().for_each(|v| *v /= draws.len().max(1) as f64);
        m
    }
}

/// Shape and rate of the `λ²` full conditional. `blocks` counts coefficient
/// blocks sharing the structure (categories − 1 for multinomial).
#[allow(clippy::too_many_arguments)]
pub fn lambda2_conditional(
    tau2_sum: f64,
    k: usize,
    l: usize,
    m: usize,
    p: usize,
    blocks: usize,
    shape0: f64,
    rate0: f64,
    rule: Lambda2Shape,
) -> (f64, f64) {
    let per = match rule {
        Lambda2Shape::Rank => (k + l + m) as f64,
        Lambda2Shape::Dimension => (p + k + l) as f64,
    };
    (shape0 + blocks as f64 * per / 2.0, rate0 + 0.5 * tau2_sum)
}

/// Draw `λ²` from its Gamma full conditional.
#[allow(clippy::too_many_arguments)]
pub fn sample_lambda2<R: Rng + ?Sized>(
    taus: &[f64],
    xis: &[f64],
    m: usize,
    p: usize,
    shape0: f64,
    rate0: f64,
    rule: Lambda2Shape,
    rng: &mut R,
) -> f64 {
    let sum = taus.iter().sum::<f64>() + xis.iter().sum::<f64>();
    let (shape, rate) = lambda2_conditional(sum, taus.len(), xis.len(), m, p, 1, shape0, rate0, rule);
    gamma_draw(shape, rate, rng)
}

/// Draw from `N(A⁻¹b, scale²·A⁻¹)`.
fn draw_gaussian<R: Rng + ?Sized>(a: &DMatrix<f64>, b: &DVector<f64>, scale: f64, rng: &mut R) -> DVector<f64> {
    if !a.iter().chain(b.iter()).all(|v| v.is_finite()) || !scale.is_finite() {
        return DVector::from_element(b.len(), f64::NAN);
    }
    let (ch, _) = linalg::cholesky_jittered(a);
    let mean = ch.solve(b);
    let z = DVector::from_fn(a.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let dev = ch.l().tr_solve_lower_triangular(&z).expect("triangular solve");
    mean + dev * scale
}

/// Draw every `1/τ²`, `1/ξ²` for one coefficient block.
fn draw_inverse_scales<R: Rng + ?Sized>(
    cset: &ConstraintSet,
    beta: &[f64],
    lambda: f64,
    sigma: f64,
    out: &mut [f64],
    rng: &mut R,
) {
    let lam2 = lambda * lambda;
    for (t, g) in cset.term_magnitudes(beta).into_iter().enumerate() {
        let mu = lambda * sigma / g.max(GAP_FLOOR);
        out[t] = InverseGaussian::new(mu, lam2).map_or(f64::NAN, |d| d.sample(rng));
    }
}

fn check_finite(v: &[f64], chain: usize, iteration: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteDraw { chain, iteration, what: what.into() })
    }
}

/// Gamma(shape, rate) draw; NaN when the parameters have degenerated so the
/// finiteness check stops the chain.
fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate).map_or(f64::NAN, |g| g.sample(rng))
}

/// Mutable state of any of the samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    /// Stacked coefficients (`blocks · p`).
    pub beta: Vec<f64>,
    /// `1/τ²` then `1/ξ²` per block, block-major.
    pub inv_scales: Vec<f64>,
    pub lambda2: f64,
    pub sigma2: f64,
}

impl State {
    pub fn tau2_sum(&self) -> f64 {
        self.inv_scales.iter().map(|v| 1.0 / v).sum()
    }
}

/// Linear-family Gibbs kernel.
pub struct LinearGibbs<'a> {
    x: &'a DMatrix<f64>,
    cset: &'a ConstraintSet,
    prior: PriorSpec,
    m: usize,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    y: Vec<f64>,
    pub state: State,
}

impl<'a> LinearGibbs<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &[f64], cset: &'a ConstraintSet, prior: PriorSpec) -> Result<Self> {
        prior.validate()?;
        if x.ncols() != cset.p || x.nrows() != y.len() {
            return Err(Error::Dimension("X, y and constraints are not conformable".into()));
        }
        let sigma2 = match prior.sigma {
            SigmaPrior::Fixed { sigma2 } => sigma2,
            SigmaPrior::InverseGamma { .. } => 1.0,
        };
        let mut g = Self {
            x,
            cset,
            prior,
            m: cset.rank_dbar(),
            xtx: x.transpose() * x,
            xty: DVector::zeros(cset.p),
            y: Vec::new(),
            state: State {
                beta: vec![0.0; cset.p],
                inv_scales: vec![1.0; cset.n_terms()],
                lambda2: prior.initial_lambda2(),
                sigma2,
            },
        };
        g.set_y(y);
        Ok(g)
    }

    pub fn set_y(&mut self, y: &[f64]) {
        self.y = y.to_vec();
        self.xty = self.x.transpose() * DVector::from_column_slice(y);
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let s = &mut self.state;
        let pen = self.cset.weighted_precision(&s.inv_scales);
        let a = &self.xtx + &pen;
        let beta = draw_gaussian(&a, &self.xty, s.sigma2.sqrt(), rng);
        if let SigmaPrior::InverseGamma { shape, rate } = self.prior.sigma {
            let rss: f64 = (self.x * &beta).iter().zip(&self.y).map(|(e, y)| (y - e).powi(2)).sum();
            let quad = beta.dot(&(&pen * &beta));
            let sh = shape + 0.5 * (self.y.len() + self.m) as f64;
            let rt = rate + 0.5 * (rss + quad);
            s.sigma2 = 1.0 / gamma_draw(sh, rt, rng);
        }
        s.beta = beta.iter().copied().collect();
        draw_inverse_scales(self.cset, &s.beta, s.lambda2.sqrt(), s.sigma2.sqrt(), &mut s.inv_scales, rng);
        if let LambdaPrior::Gamma { shape, rate } = self.prior.lambda {
            let (sh, rt) = lambda2_conditional(
                s.tau2_sum(),
                self.cset.k(),
                self.cset.l(),
                self.m,
                self.cset.p,
                1,
                shape,
                rate,
                self.prior.lambda2_shape,
            );
            s.lambda2 = gamma_draw(sh, rt, rng);
        }
    }
}

/// Logistic-family Gibbs kernel (Pólya-Gamma augmentation, no offsets).
pub struct LogisticGibbs<'a> {
    x: &'a DMatrix<f64>,
    cset: &'a ConstraintSet,
    prior: PriorSpec,
    m: usize,
    y: Vec<f64>,
    xt_kappa: DVector<f64>,
    pub state: State,
}

impl<'a> LogisticGibbs<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &[f64], cset: &'a ConstraintSet, prior: PriorSpec) -> Result<Self> {
        prior.validate()?;
        if x.ncols() != cset.p || x.nrows() != y.len() {
            return Err(Error::Dimension("X, y and constraints are not conformable".into()));
        }
        let mut g = Self {
            x,
            cset,
            prior,
            m: cset.rank_dbar(),
            y: Vec::new(),
            xt_kappa: DVector::zeros(cset.p),
            state: State {
                beta: vec![0.0; cset.p],
                inv_scales: vec![1.0; cset.n_terms()],
                lambda2: prior.initial_lambda2(),
                sigma2: 1.0,
            },
        };
        g.set_y(y);
        Ok(g)
    }

    pub fn set_y(&mut self, y: &[f64]) {
        self.y = y.to_vec();
        let kappa = DVector::from_iterator(y.len(), y.iter().map(|v| v - 0.5));
        self.xt_kappa = self.x.transpose() * kappa;
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let s = &mut self.state;
        let eta = self.x * DVector::from_column_slice(&s.beta);
        let omega: Vec<f64> = eta.iter().map(|&e| PolyaGamma::new(e).sample(rng)).collect();
        let mut xw = self.x.clone();
        for (i, w) in omega.iter().enumerate() {
            xw.row_mut(i).scale_mut(*w);
        }
        let a = self.x.transpose() * xw + self.cset.weighted_precision(&s.inv_scales);
        let beta = draw_gaussian(&a, &self.xt_kappa, 1.0, rng);
        s.beta = beta.iter().copied().collect();
        draw_inverse_scales(self.cset, &s.beta, s.lambda2.sqrt(), 1.0, &mut s.inv_scales, rng);
        if let LambdaPrior::Gamma { shape, rate } = self.prior.lambda {
            let (sh, rt) = lambda2_conditional(
                s.tau2_sum(),
                self.cset.k(),
                self.cset.l(),
                self.m,
                self.cset.p,
                1,
                shape,
                rate,
                self.prior.lambda2_shape,
            );
            s.lambda2 = gamma_draw(sh, rt, rng);
        }
    }
}

/// Multinomial Gibbs kernel: categories `1..C` are updated in turn, each
/// conditionally logistic against the offset `O_ic = log Σ_{l≠c} exp(η_il)`;
/// category 0 is the reference.
pub struct MultinomialGibbs<'a> {
    x: &'a DMatrix<f64>,
    cset: &'a ConstraintSet,
    prior: PriorSpec,
    m: usize,
    blocks: usize,
    y: Vec<f64>,
    pub state: State,
}

impl<'a> MultinomialGibbs<'a> {
    pub fn new(
        x: &'a DMatrix<f64>,
        y: &[f64],
        categories: usize,
        cset: &'a ConstraintSet,
        prior: PriorSpec,
    ) -> Result<Self> {
        prior.validate()?;
        if categories < 2 {
            return Err(Error::InvalidArgument("multinomial needs at least two categories".into()));
        }
        if x.ncols() != cset.p || x.nrows() != y.len() {
            return Err(Error::Dimension("X, y and constraints are not conformable".into()));
        }
        let blocks = categories - 1;
        Ok(Self {
            x,
            cset,
            prior,
            m: cset.rank_dbar(),
            blocks,
            y: y.to_vec(),
            state: State {
                beta: vec![0.0; cset.p * blocks],
                inv_scales: vec![1.0; cset.n_terms() * blocks],
                lambda2: prior.initial_lambda2(),
                sigma2: 1.0,
            },
        })
    }

    pub fn set_y(&mut self, y: &[f64]) {
        self.y = y.to_vec();
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (p, j, t) = (self.cset.p, self.blocks, self.cset.n_terms());
        let n = self.x.nrows();
        let s = &mut self.state;
        let lambda = s.lambda2.sqrt();
        let mut others = Vec::with_capacity(j);
        for c in 0..j {
            let b = DMatrix::from_column_slice(p, j, &s.beta);
            let eta = self.x * b;
            let mut omega = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            for i in 0..n {
                others.clear();
                others.push(0.0);
                others.extend((0..j).filter(|&k| k != c).map(|k| eta[(i, k)]));
                let off = family::log_sum_exp(&others);
                let w = PolyaGamma::new(eta[(i, c)] - off).sample(rng);
                let kappa = f64::from(self.y[i] as usize == c + 1) - 0.5;
                omega[i] = w;
                rhs[i] = kappa + w * off;
            }
            let mut xw = self.x.clone();
            for (i, w) in omega.iter().enumerate() {
                xw.row_mut(i).scale_mut(*w);
            }
            let a = self.x.transpose() * xw + self.cset.weighted_precision(&s.inv_scales[c * t..(c + 1) * t]);
            let r = self.x.transpose() * DVector::from_vec(rhs);
            let bc = draw_gaussian(&a, &r, 1.0, rng);
            s.beta[c * p..(c + 1) * p].copy_from_slice(bc.as_slice());
            let (bs, scales) = (&s.beta[c * p..(c + 1) * p], &mut s.inv_scales[c * t..(c + 1) * t]);
            draw_inverse_scales(self.cset, bs, lambda, 1.0, scales, rng);
        }
        if let LambdaPrior::Gamma { shape, rate } = self.prior.lambda {
            let (sh, rt) = lambda2_conditional(
                s.tau2_sum(),
                self.cset.k(),
                self.cset.l(),
                self.m,
                self.cset.p,
                j,
                shape,
                rate,
                self.prior.lambda2_shape,
            );
            s.lambda2 = gamma_draw(sh, rt, rng);
        }
    }
}

/// Any of the kernels, for the shared chain driver.
pub enum Kernel<'a> {
    Linear(LinearGibbs<'a>),
    Logistic(LogisticGibbs<'a>),
    Multinomial(MultinomialGibbs<'a>),
}

impl Kernel<'_> {
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match self {
            Kernel::Linear(g) => g.step(rng),
            Kernel::Logistic(g) => g.step(rng),
            Kernel::Multinomial(g) => g.step(rng),
        }
    }

    pub fn state(&self) -> &State {
        match self {
            Kernel::Linear(g) => &g.state,
            Kernel::Logistic(g) => &g.state,
            Kernel::Multinomial(g) => &g.state,
        }
    }
}

/// RNG for chain `index` under master `seed`.
pub fn chain_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn run_chain(mut kernel: Kernel<'_>, settings: &SamplerSettings, index: usize, has_sigma: bool) -> Result<Chain> {
    let mut rng = chain_rng(settings.seed, index);
    let kept = settings.kept();
    let mut chain = Chain {
        stream: index as u64,
        beta: Vec::with_capacity(kept),
        lambda2: Vec::with_capacity(kept),
        sigma2: Vec::new(),
        tau2_sum: Vec::with_capacity(kept),
    };
    for it in 0..settings.iters {
        kernel.step(&mut rng);
        let s = kernel.state();
        check_finite(&s.beta, index, it, "beta")?;
        check_finite(&[s.lambda2, s.sigma2], index, it, "scale parameter")?;
        if it >= settings.burnin && (it - settings.burnin) % settings.thin == settings.thin - 1 {
            chain.beta.push(s.beta.clone());
            chain.lambda2.push(s.lambda2);
            if has_sigma {
                chain.sigma2.push(s.sigma2);
            }
            chain.tau2_sum.push(s.tau2_sum());
        }
    }
    Ok(chain)
}

fn ensure_proper(x: &DMatrix<f64>, y: &[f64], cset: &ConstraintSet, family: Family, force: bool) -> Result<bool> {
    let report = check_posterior(x, y, cset, family)?;
    match report.posterior_proper {
        Some(true) => Ok(false),
        _ if force => {
            log::warn!("sampling without established propriety: {}", report.details);
            Ok(true)
        }
        _ => Err(Error::ImproperPosterior(report.details)),
    }
}

fn block_labels(labels: &[String], family: Family) -> Vec<String> {
    match family {
        Family::Multinomial { categories } => (1..categories)
            .flat_map(|c| labels.iter().map(move |l| format!("[{c}]{l}")))
            .collect(),
        _ => labels.to_vec(),
    }
}

/// Sample the posterior for any family. `labels` names the columns of `x`.
pub fn sample(
    x: &DMatrix<f64>,
    y: &[f64],
    labels: &[String],
    cset: &ConstraintSet,
    family: Family,
    prior: &PriorSpec,
    settings: &SamplerSettings,
) -> Result<PosteriorDraws> {
    settings.validate()?;
    prior.validate()?;
    if labels.len() != x.ncols() {
        return Err(Error::Dimension("one label per column required".into()));
    }
    let unverified = ensure_proper(x, y, cset, family, settings.force)?;
    let chains: Vec<Result<Chain>> = (0..settings.chains)
        .into_par_iter()
        .map(|index| {
            let kernel = match family {
                Family::Linear => Kernel::Linear(LinearGibbs::new(x, y, cset, *prior)?),
                Family::Logistic => Kernel::Logistic(LogisticGibbs::new(x, y, cset, *prior)?),
                Family::Multinomial { categories } => {
                    Kernel::Multinomial(MultinomialGibbs::new(x, y, categories, cset, *prior)?)
                }
            };
            run_chain(kernel, settings, index, family.has_sigma())
        })
        .collect();
    Ok(PosteriorDraws {
        family,
        labels: block_labels(labels, family),
        seed: settings.seed,
        burnin: settings.burnin,
        thin: settings.thin,
        chains: chains.into_iter().collect::<Result<Vec<_>>>()?,
        unverified,
    })
}

pub fn sample_linear(
    x: &DMatrix<f64>,
    y: &[f64],
    labels: &[String],
    cset: &ConstraintSet,
    prior: &PriorSpec,
    settings: &SamplerSettings,
) -> Result<PosteriorDraws> {
    sample(x, y, labels, cset, Family::Linear, prior, settings)
}

pub fn sample_logistic(
    x: &DMatrix<f64>,
    y: &[f64],
    labels: &[String],
    cset: &ConstraintSet,
    prior: &PriorSpec,
    settings: &SamplerSettings,
) -> Result<PosteriorDraws> {
    sample(x, y, labels, cset, Family::Logistic, prior, settings)
}

pub fn sample_multinomial(
    x: &DMatrix<f64>,
    y: &[f64],
    categories: usize,
    labels: &[String],
    cset: &ConstraintSet,
    prior: &PriorSpec,
    settings: &SamplerSettings,
) -> Result<PosteriorDraws> {
    sample(x, y, labels, cset, Family::Multinomial { categories }, prior, settings)
}
