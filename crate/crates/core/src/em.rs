//! Posterior-mode (penalized MLE) fitting by EM.
//!
//! The E-step replaces each penalty term by its expected augmentation
//! precision, `E[1/τ²_k] = λs/|d_kᵀβ|` (with `s = σ` for the linear family and
//! 1 otherwise) and likewise `λs/sqrt(βᵀF_ℓβ)` for quadratic terms; for the
//! logistic and multinomial families the Pólya-Gamma weights
//! `E[ω_i] = tanh(ψ_i/2)/(2ψ_i)` give a quadratic minorizer of the
//! likelihood. The M-step is a generalized ridge solve.
//!
//! Terms whose gap falls below the binding threshold become exactly zero for
//! the rest of the fit: the coefficients are projected onto the nullspace of
//! the binding rows and every later M-step is solved in that nullspace.
//!
//! Multinomial coefficients are stacked by category (see [`crate::family`]);
//! penalty terms are indexed block-major, `block·(K+L) + t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::pg_mean;
use crate::error::{Error, Result};
use crate::family::{self, Family};
use crate::linalg;
use crate::structure::{connected_components, ConstraintSet};

/// Treatment of `σ` for the linear family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum SigmaMode {
    /// `σ` set to its conditional mode after every M-step; the objective is
    /// `−(N+m)/2·ln σ² − RSS/(2σ²) − (λ/σ)·Pen(β)`.
    Profile,
    /// `σ` held fixed; the objective is `−RSS/(2σ²) − (λ/σ)·Pen(β)`.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Relative change of the objective that counts as converged.
    pub tol: f64,
    /// Unweighted gap below which a term becomes binding.
    pub binding_threshold: f64,
    pub clip_cap: f64,
    /// Iterations with clipped weights and no binding.
    pub clip_phase: usize,
    pub sigma: SigmaMode,
    pub init: Init,
    /// Fixed extra precision `R` (one coefficient block): the objective gains
    /// `−βᵀRβ/(2σ²)` for the linear family and `−βᵀRβ/2` otherwise.
    #[serde(default)]
    pub ridge: Option<DMatrix<f64>>,
}

/// Starting point of the iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum Init {
    /// Ridge-stabilized MLE with strength `1e-4·N`: generically no
    /// restriction is binding at the start.
    Pilot,
    Zero,
    Given(Vec<f64>),
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-9,
            binding_threshold: 1e-6,
            clip_cap: 1e6,
            clip_phase: 5,
            sigma: SigmaMode::Profile,
            init: Init::Pilot,
            ridge: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmSolution {
    pub family: Family,
    pub lambda: f64,
    pub beta_hat: Vec<f64>,
    /// Term indices treated as exactly zero.
    pub binding_set: Vec<usize>,
    /// Group id per coefficient: connected components of binding difference
    /// rows (and binding quadratic groups).
    pub groups: Vec<usize>,
    pub df: f64,
    pub loglik: f64,
    pub aic: f64,
    /// Linear family: `σ²` at the mode (profiled or fixed).
    pub sigma2: Option<f64>,
    pub log_posterior_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub clip_phase: usize,
    /// How `σ` was treated (linear family).
    pub sigma_mode: Option<SigmaMode>,
}

impl EmSolution {
    /// Number of later-than-clipping iterations whose objective fell by more
    /// than `tol` from the previous iterate.
    pub fn monotonicity_violations(&self, tol: f64) -> usize {
        let t = &self.log_posterior_trace;
        (self.clip_phase.max(1)..t.len()).filter(|&i| t[i] < t[i - 1] - tol).count()
    }

    pub fn max_decrease(&self) -> f64 {
        let t = &self.log_posterior_trace;
        (self.clip_phase.max(1)..t.len()).map(|i| t[i - 1] - t[i]).fold(0.0, f64::max)
    }

    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_hat)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `E[1/τ²_k]` (linear rows first, then quadratic terms) for the linear
/// family: `λσ/|d_kᵀβ|` and `λσ/sqrt(βᵀF_ℓβ)`, clipped at `cap`.
pub fn estep_linear(beta: &[f64], sigma: f64, cset: &ConstraintSet, lambda: f64, cap: f64) -> Vec<f64> {
    cset.term_magnitudes(beta)
        .into_iter()
        .map(|g| if g > 0.0 { (lambda * sigma / g).min(cap) } else { cap })
        .collect()
}

/// Solve `(XᵀWX + P)β = Xᵀz`; `w = None` means unit weights. Returns the
/// solution and the ridge jitter that had to be added (0 if none).
pub fn mstep(x: &DMatrix<f64>, w: Option<&[f64]>, z: &[f64], penalty: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let (n, p) = (x.nrows(), x.ncols());
    let mut xw = x.clone();
    if let Some(w) = w {
        for i in 0..n {
            for j in 0..p {
                xw[(i, j)] *= w[i];
            }
        }
    }
    let a = x.transpose() * &xw + penalty;
    let b = x.transpose() * DVector::from_column_slice(z);
    let s = linalg::solve_spd(&a, &b);
    if s.jitter > 0.0 {
        log::warn!("M-step system singular; added ridge jitter {:.3e}", s.jitter);
    }
    (s.x, s.jitter)
}

/// Ridge strength of the pilot estimate, per observation.
pub const PILOT_RIDGE: f64 = 1e-4;

/// Ridge-stabilized MLE with penalty `strength·‖β‖²/2`.
pub fn ridge_pilot(x: &DMatrix<f64>, y: &[f64], family: Family, strength: f64) -> Result<DVector<f64>> {
    let p = x.ncols();
    let j = family.blocks();
    if x.nrows() != y.len() {
        return Err(Error::Dimension("X rows differ from y length".into()));
    }
    let ridge = DMatrix::identity(p, p) * strength;
    match family {
        Family::Linear => Ok(mstep(x, None, y, &ridge).0),
        _ => {
            // Newton on each category block in turn (one block for logistic).
            let mut beta = DVector::zeros(p * j);
            let mut prev = f64::NEG_INFINITY;
            for _ in 0..200 {
                for c in 0..j {
                    let eta = family::linear_predictors(family, x, &beta)?;
                    let (w, z) = newton_working(family, &eta, y, c);
                    // Working response for the Newton step: z + W·η_c.
                    let zc: Vec<f64> = (0..x.nrows()).map(|i| z[i] + w[i] * eta[(i, c)]).collect();
                    let (new, _) = mstep(x, Some(&w), &zc, &ridge);
                    beta.rows_mut(c * p, p).copy_from(&new);
                }
                let ll = family::log_likelihood(family, x, y, &beta, 1.0)? - 0.5 * strength * beta.norm_squared();
                if (ll - prev).abs() <= 1e-12 * (1.0 + ll.abs()) {
                    break;
                }
                prev = ll;
            }
            Ok(beta)
        }
    }
}

/// IRLS weights `π(1−π)` and residuals `y − π` for category block `c`.
fn newton_working(family: Family, eta: &DMatrix<f64>, y: &[f64], c: usize) -> (Vec<f64>, Vec<f64>) {
    let n = eta.nrows();
    let j = eta.ncols();
    let mut w = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut row = vec![0.0; j + 1];
    for i in 0..n {
        let pi = match family {
            Family::Multinomial { .. } => {
                for k in 0..j {
                    row[k + 1] = eta[(i, k)];
                }
                row[0] = 0.0;
                (eta[(i, c)] - family::log_sum_exp(&row)).exp()
            }
            _ => family::logistic(eta[(i, 0)]),
        };
        let yc = match family {
            Family::Multinomial { .. } => f64::from(y[i] as usize == c + 1),
            _ => y[i],
        };
        w[i] = (pi * (1.0 - pi)).max(1e-10);
        r[i] = yc - pi;
    }
    (w, r)
}

struct Block {
    /// Nullspace basis of this block's binding rows; `None` = identity.
    basis: Option<DMatrix<f64>>,
    bound: Vec<bool>,
    /// Coefficient sets tied by binding difference rows.
    fused: Vec<Vec<usize>>,
}

impl Block {
    /// Set members of each fused set to their common mean so that binding
    /// differences vanish exactly rather than to rounding error.
    fn equalize(&self, v: &mut [f64]) {
        for g in &self.fused {
            let m = g.iter().map(|&i| v[i]).sum::<f64>() / g.len() as f64;
            for &i in g {
                v[i] = m;
            }
        }
    }
}

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    family: Family,
    cset: &'a ConstraintSet,
    lambda: f64,
    n: usize,
    p: usize,
    j: usize,
    /// rank(D̄) for the linear profile objective.
    m: usize,
    xtx: Option<DMatrix<f64>>,
    xty: Option<DVector<f64>>,
    ridge: Option<&'a DMatrix<f64>>,
}

impl Problem<'_> {
    fn block<'b>(&self, beta: &'b DVector<f64>, c: usize) -> &'b [f64] {
        &beta.as_slice()[c * self.p..(c + 1) * self.p]
    }

    fn penalty(&self, beta: &DVector<f64>) -> f64 {
        (0..self.j).map(|c| self.cset.penalty(self.block(beta, c))).sum()
    }

    fn rss(&self, beta: &DVector<f64>) -> f64 {
        (self.x * beta).iter().zip(self.y).map(|(e, y)| (y - e).powi(2)).sum()
    }

    /// `Σ_c β_cᵀRβ_c`.
    fn ridge_quad(&self, beta: &DVector<f64>) -> f64 {
        self.ridge.map_or(0.0, |r| {
            (0..self.j)
                .map(|c| {
                    let b = DVector::from_column_slice(self.block(beta, c));
                    b.dot(&(r * &b))
                })
                .sum()
        })
    }

    fn sigma_mode(&self, beta: &DVector<f64>) -> f64 {
        let pen = self.lambda * self.penalty(beta);
        let nm = (self.n + self.m) as f64;
        let rss = self.rss(beta) + self.ridge_quad(beta);
        let s = (pen + (pen * pen + 4.0 * nm * rss).sqrt()) / (2.0 * nm);
        s.max(1e-150)
    }

    fn objective(&self, beta: &DVector<f64>, sigma: f64, mode: SigmaMode) -> f64 {
        let pen = self.lambda * self.penalty(beta);
        match self.family {
            Family::Linear => {
                let rss = self.rss(beta) + self.ridge_quad(beta);
                let s2 = sigma * sigma;
                match mode {
                    SigmaMode::Profile => -0.5 * (self.n + self.m) as f64 * s2.ln() - rss / (2.0 * s2) - pen / sigma,
                    SigmaMode::Fixed(_) => -rss / (2.0 * s2) - pen / sigma,
                }
            }
            _ => family::log_likelihood(self.family, self.x, self.y, beta, 1.0).unwrap() - pen - 0.5 * self.ridge_quad(beta),
        }
    }

    /// Unweighted magnitude used for the binding test.
    fn raw_magnitudes(&self, b: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.cset.rows.iter().map(|r| r.raw_dot(b).abs()).collect();
        out.extend(self.cset.quads.iter().map(|q| q.quad_form(b).sqrt()));
        out
    }

    fn rebuild_basis(&self, block: &mut Block) {
        let terms: Vec<usize> = (0..block.bound.len()).filter(|&t| block.bound[t]).collect();
        block.basis = if terms.is_empty() {
            None
        } else {
            Some(linalg::nullspace(&self.cset.binding_rows(&terms), self.p).0)
        };
        let cs = self.cset;
        // Terms annihilated by the nullspace are implied by the binding set
        // (e.g. transitive fusions) and are exactly zero from here on.
        if let Some(b) = &block.basis {
            for t in 0..block.bound.len() {
                if block.bound[t] {
                    continue;
                }
                let rows = cs.binding_rows(&[t]);
                let scale = rows.norm();
                if scale == 0.0 || (&rows * b).norm() <= 1e-10 * scale {
                    block.bound[t] = true;
                }
            }
        }
        let terms: Vec<usize> = (0..block.bound.len()).filter(|&t| block.bound[t]).collect();
        let mut edges = Vec::new();
        for &t in &terms {
            if t < cs.k() {
                if cs.rows[t].is_difference() {
                    edges.push((cs.rows[t].entries[0].0, cs.rows[t].entries[1].0));
                }
            } else {
                let sup = &cs.quads[t - cs.k()].support;
                edges.extend(sup.windows(2).map(|w| (w[0], w[1])));
            }
        }
        let comp = connected_components(self.p, &edges);
        let mut sets: Vec<Vec<usize>> = vec![Vec::new(); self.p];
        for (i, &c) in comp.iter().enumerate() {
            sets[c].push(i);
        }
        block.fused = sets.into_iter().filter(|g| g.len() > 1).collect();
    }

    /// Solve `(H + P)β = r` within the block's nullspace.
    fn solve(&self, block: &Block, h: &DMatrix<f64>, pen: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
        let a = h + pen;
        match &block.basis {
            None => linalg::solve_spd(&a, r).x,
            Some(b) => {
                if b.ncols() == 0 {
                    return DVector::zeros(self.p);
                }
                let bt = b.transpose();
                let theta = linalg::solve_spd(&(&bt * &a * b), &(&bt * r)).x;
                b * theta
            }
        }
    }
}

/// Fit the posterior mode at a single `λ`.
///
/// `cset` describes the constraints on one coefficient block of length
/// `x.ncols()`; for the multinomial family it is applied to every category.
pub fn fit_em(
    x: &DMatrix<f64>,
    y: &[f64],
    cset: &ConstraintSet,
    lambda: f64,
    family: Family,
    opts: &EmOptions,
) -> Result<EmSolution> {
    let (n, p) = (x.nrows(), x.ncols());
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if cset.p != p {
        return Err(Error::Dimension(format!("constraints cover {} coefficients, X has {p} columns", cset.p)));
    }
    if y.len() != n {
        return Err(Error::Dimension("X rows differ from y length".into()));
    }
    if let Family::Multinomial { categories } = family {
        if categories < 2 {
            return Err(Error::InvalidArgument("multinomial needs at least two categories".into()));
        }
    }
    if let SigmaMode::Fixed(s) = opts.sigma {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument("fixed sigma must be positive".into()));
        }
    }
    if let Some(r) = &opts.ridge {
        if r.nrows() != p || r.ncols() != p || !linalg::is_psd(r) {
            return Err(Error::InvalidArgument("ridge must be a symmetric PSD p × p matrix".into()));
        }
    }
    let j = family.blocks();
    let linear = family == Family::Linear;
    let prob = Problem {
        x,
        y,
        family,
        cset,
        lambda,
        n,
        p,
        j,
        m: if linear { cset.rank_dbar() } else { 0 },
        xtx: linear.then(|| x.transpose() * x),
        xty: linear.then(|| x.transpose() * DVector::from_column_slice(y)),
        ridge: opts.ridge.as_ref(),
    };
    let t_per = cset.n_terms();
    let mut beta = match &opts.init {
        Init::Given(v) if v.len() == p * j => DVector::from_column_slice(v),
        Init::Given(_) => return Err(Error::Dimension("init has the wrong length".into())),
        Init::Zero => DVector::zeros(p * j),
        Init::Pilot => ridge_pilot(x, y, family, PILOT_RIDGE * n as f64)?,
    };
    let mut blocks: Vec<Block> = (0..j).map(|_| Block { basis: None, bound: vec![false; t_per], fused: Vec::new() }).collect();
    let sigma_of = |prob: &Problem, beta: &DVector<f64>| match (family, opts.sigma) {
        (Family::Linear, SigmaMode::Profile) => prob.sigma_mode(beta),
        (Family::Linear, SigmaMode::Fixed(s)) => s,
        _ => 1.0,
    };
    let mut sigma = sigma_of(&prob, &beta);
    let mut trace = Vec::new();
    let mut prev = prob.objective(&beta, sigma, opts.sigma);
    let mut best: Option<(f64, DVector<f64>, f64, Vec<Vec<bool>>)> = None;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        let clip = it <= opts.clip_phase;
        if !clip {
            for c in 0..j {
                let mags = prob.raw_magnitudes(prob.block(&beta, c));
                let mut changed = false;
                for t in 0..t_per {
                    if !blocks[c].bound[t] && mags[t] < opts.binding_threshold {
                        blocks[c].bound[t] = true;
                        changed = true;
                    }
                }
                if changed {
                    prob.rebuild_basis(&mut blocks[c]);
                    if let Some(b) = &blocks[c].basis {
                        let bc = DVector::from_column_slice(prob.block(&beta, c));
                        let mut proj = b * (b.transpose() * bc);
                        blocks[c].equalize(proj.as_mut_slice());
                        beta.rows_mut(c * p, p).copy_from(&proj);
                    }
                }
            }
        }

        let s = if linear { sigma } else { 1.0 };
        for c in 0..j {
            let bc = prob.block(&beta, c).to_vec();
            let mags = cset.term_magnitudes(&bc);
            let weights: Vec<f64> = (0..t_per)
                .map(|t| {
                    if blocks[c].bound[t] {
                        0.0
                    } else if clip {
                        if mags[t] > 0.0 {
                            (lambda * s / mags[t]).min(opts.clip_cap)
                        } else {
                            opts.clip_cap
                        }
                    } else {
                        lambda * s / mags[t].max(f64::MIN_POSITIVE)
                    }
                })
                .collect();
            let mut pen = cset.weighted_precision(&weights);
            if let Some(r) = &opts.ridge {
                pen += r;
            }
            let new = match family {
                Family::Linear => {
                    prob.solve(&blocks[c], prob.xtx.as_ref().unwrap(), &pen, prob.xty.as_ref().unwrap())
                }
                _ => {
                    let eta = family::linear_predictors(family, x, &beta)?;
                    let (w, z) = pg_working(family, &eta, y, c);
                    let mut xw = x.clone();
                    for i in 0..n {
                        for k in 0..p {
                            xw[(i, k)] *= w[i];
                        }
                    }
                    let h = x.transpose() * xw;
                    let r = x.transpose() * DVector::from_vec(z);
                    prob.solve(&blocks[c], &h, &pen, &r)
                }
            };
            let mut new = new;
            blocks[c].equalize(new.as_mut_slice());
            beta.rows_mut(c * p, p).copy_from(&new);
        }
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("EM produced non-finite coefficients at iteration {it}")));
        }
        sigma = sigma_of(&prob, &beta);
        let f = prob.objective(&beta, sigma, opts.sigma);
        trace.push(f);
        if !clip {
            if best.as_ref().map_or(true, |(bf, ..)| f > *bf) {
                best = Some((f, beta.clone(), sigma, blocks.iter().map(|b| b.bound.clone()).collect()));
            }
            if (f - prev).abs() <= opts.tol * (prev.abs() + opts.tol) {
                converged = true;
                prev = f;
                break;
            }
        }
        prev = f;
    }
    let _ = prev;

    if !converged {
        if let Some((_, b, s, bound)) = best.take() {
            log::warn!("EM did not converge in {} iterations; returning best iterate", opts.max_iter);
            beta = b;
            sigma = s;
            for (blk, bd) in blocks.iter_mut().zip(bound) {
                blk.bound = bd;
                prob.rebuild_basis(blk);
            }
        }
    }

    // Report with binding gaps exactly zero.
    for c in 0..j {
        if let Some(b) = &blocks[c].basis {
            let bc = DVector::from_column_slice(prob.block(&beta, c));
            let mut proj = b * (b.transpose() * bc);
            blocks[c].equalize(proj.as_mut_slice());
            beta.rows_mut(c * p, p).copy_from(&proj);
        }
    }

    let df: usize = blocks.iter().map(|b| b.basis.as_ref().map_or(p, |m| m.ncols())).sum();
    let mut binding_set = Vec::new();
    let mut edges = Vec::new();
    for (c, blk) in blocks.iter().enumerate() {
        for t in 0..t_per {
            if !blk.bound[t] {
                continue;
            }
            binding_set.push(c * t_per + t);
            if t < cset.k() {
                let r = &cset.rows[t];
                if r.is_difference() {
                    edges.push((c * p + r.entries[0].0, c * p + r.entries[1].0));
                }
            } else {
                let sup = &cset.quads[t - cset.k()].support;
                for w in sup.windows(2) {
                    edges.push((c * p + w[0], c * p + w[1]));
                }
            }
        }
    }
    let groups = connected_components(p * j, &edges);
    let (loglik, sigma2) = match family {
        Family::Linear => {
            let rss = prob.rss(&beta);
            let s2 = (rss / n as f64).max(f64::MIN_POSITIVE);
            (family::log_likelihood(family, x, y, &beta, s2)?, Some(sigma * sigma))
        }
        _ => (family::log_likelihood(family, x, y, &beta, 1.0)?, None),
    };
    Ok(EmSolution {
        family,
        lambda,
        beta_hat: beta.iter().copied().collect(),
        binding_set,
        groups,
        df: df as f64,
        loglik,
        aic: -2.0 * loglik + 2.0 * df as f64,
        sigma2,
        log_posterior_trace: trace,
        iterations,
        converged,
        clip_phase: opts.clip_phase,
        sigma_mode: linear.then_some(opts.sigma),
    })
}

/// Pólya-Gamma weights and working responses for block `c`:
/// `ω_i = E[PG(1, ψ_i)]` and `s_i = κ_i + ω_i·O_i` where `ψ = η_c − O` and
/// `O` is the log-sum-exp of the other categories' predictors.
fn pg_working(family: Family, eta: &DMatrix<f64>, y: &[f64], c: usize) -> (Vec<f64>, Vec<f64>) {
    let n = eta.nrows();
    let j = eta.ncols();
    let mut w = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut others = Vec::with_capacity(j);
    for i in 0..n {
        let (offset, kappa) = match family {
            Family::Multinomial { .. } => {
                others.clear();
                others.push(0.0);
                others.extend((0..j).filter(|&k| k != c).map(|k| eta[(i, k)]));
                (family::log_sum_exp(&others), f64::from(y[i] as usize == c + 1) - 0.5)
            }
            _ => (0.0, y[i] - 0.5),
        };
        let psi = eta[(i, c)] - offset;
        w[i] = pg_mean(psi);
        s[i] = kappa + w[i] * offset;
    }
    (w, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{build_agnostic, compile_constraints, Cell, Edge, StructureGraph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn agnostic(p: usize, cols: std::ops::Range<usize>, total: usize) -> ConstraintSet {
        let cells: Vec<Cell> = cols.map(|i| Cell::new(i, format!("b{i}"))).collect();
        let _ = p;
        compile_constraints(&build_agnostic(total, &cells).unwrap()).unwrap()
    }

    #[test]
    fn estep_examples() {
        let g = StructureGraph { edges: vec![Edge { i: 0, j: 1, weight: 1.0 }], ..StructureGraph::empty(2) };
        let c = compile_constraints(&g).unwrap();
        assert_eq!(estep_linear(&[0.5, 0.0], 1.0, &c, 2.0, 1e6), vec![4.0]);
        assert_eq!(estep_linear(&[0.3, 0.3], 1.0, &c, 2.0, 1e6), vec![1e6]);
        let q = compile_constraints(&StructureGraph::empty(2).add_quad_group(vec![0, 1], 1.0)).unwrap();
        // βᵀFβ = (1 − 0)² = 1, λσ = 3.
        assert_eq!(estep_linear(&[1.0, 0.0], 1.0, &q, 3.0, 1e6), vec![3.0]);
    }

    #[test]
    fn mstep_ols_and_ridge() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = [1.0, 3.0, 5.1, 7.0];
        let (b, _) = mstep(&x, None, &y, &DMatrix::zeros(2, 2));
        let xt = x.transpose();
        let ols = (&xt * &x).try_inverse().unwrap() * &xt * DVector::from_column_slice(&y);
        assert!((b - &ols).norm() < 1e-12);
        let ridge = DMatrix::identity(2, 2) * 0.7;
        let (b, _) = mstep(&x, None, &y, &ridge);
        let closed = (&xt * &x + &ridge).try_inverse().unwrap() * &xt * DVector::from_column_slice(&y);
        assert!((b - closed).norm() < 1e-12);
    }

    #[test]
    fn tiny_lambda_orthonormal_design_gives_xty() {
        let x = DMatrix::<f64>::identity(3, 3);
        let y = [1.0, -2.0, 0.5];
        let c = agnostic(3, 0..3, 3);
        let sol = fit_em(&x, &y, &c, 1e-9, Family::Linear, &EmOptions::default()).unwrap();
        for k in 0..3 {
            assert!((sol.beta_hat[k] - y[k]).abs() < 1e-6, "{:?}", sol.beta_hat);
        }
        assert_eq!(sol.df, 3.0);
    }

    #[test]
    fn huge_lambda_fuses_to_pooled_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 60;
        let mut x = DMatrix::zeros(n, 3);
        let mut y = vec![0.0; n];
        for i in 0..n {
            x[(i, i % 3)] = 1.0;
            y[i] = (i % 3) as f64 + rng.sample::<f64, _>(StandardNormal);
        }
        let c = agnostic(3, 0..3, 3);
        let sol = fit_em(&x, &y, &c, 1e4, Family::Linear, &EmOptions::default()).unwrap();
        let pooled = y.iter().sum::<f64>() / n as f64;
        for k in 0..3 {
            assert!((sol.beta_hat[k] - pooled).abs() < 1e-6);
        }
        assert_eq!(sol.df, 1.0);
        assert_eq!(sol.groups, vec![0, 0, 0]);
        assert!(sol.converged);
    }

    #[test]
    fn binding_gaps_are_exactly_zero_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 80;
        let mut x = DMatrix::zeros(n, 5);
        let mut y = vec![0.0; n];
        for i in 0..n {
            x[(i, 0)] = rng.sample(StandardNormal);
            x[(i, 1 + i % 4)] = 1.0;
            y[i] = x[(i, 0)] + [0.0, 0.0, 1.0, 1.0][i % 4] + 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
        let c = agnostic(5, 1..5, 5);
        let sol = fit_em(&x, &y, &c, 8.0, Family::Linear, &EmOptions::default()).unwrap();
        for &t in &sol.binding_set {
            assert_eq!(c.rows[t].raw_dot(&sol.beta_hat), 0.0);
        }
        assert_eq!(sol.monotonicity_violations(1e-8), 0, "max decrease {}", sol.max_decrease());
        assert!(sol.binding_set.len() >= 2, "{:?} {:?} {} {}", sol.binding_set, sol.beta_hat, sol.iterations, sol.converged);
    }

    #[test]
    fn scale_invariance_of_weights_and_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 50;
        let mut x = DMatrix::zeros(n, 3);
        let mut y = vec![0.0; n];
        for i in 0..n {
            x[(i, i % 3)] = 1.0;
            y[i] = [0.0, 0.4, 2.0][i % 3] + rng.sample::<f64, _>(StandardNormal);
        }
        let c = agnostic(3, 0..3, 3);
        let a = fit_em(&x, &y, &c, 1.5, Family::Linear, &EmOptions::default()).unwrap();
        let b = fit_em(&x, &y, &c.scaled(3.0), 0.5, Family::Linear, &EmOptions::default()).unwrap();
        for k in 0..3 {
            assert!((a.beta_hat[k] - b.beta_hat[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn logistic_fit_is_monotone_and_matches_pilot_at_small_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 400;
        let mut x = DMatrix::zeros(n, 3);
        let mut y = vec![0.0; n];
        for i in 0..n {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = rng.sample(StandardNormal);
            x[(i, 2)] = rng.sample(StandardNormal);
            let eta = 0.3 + x[(i, 1)] - 0.5 * x[(i, 2)];
            y[i] = f64::from(rng.random::<f64>() < family::logistic(eta));
        }
        let c = ConstraintSet::empty(3);
        let sol = fit_em(&x, &y, &c, 1.0, Family::Logistic, &EmOptions::default()).unwrap();
        let mle = ridge_pilot(&x, &y, Family::Logistic, 1e-10).unwrap();
        let ll_em = family::log_likelihood(Family::Logistic, &x, &y, &sol.beta(), 1.0).unwrap();
        let ll_mle = family::log_likelihood(Family::Logistic, &x, &y, &mle, 1.0).unwrap();
        assert!((ll_em - ll_mle).abs() < 1e-6 * ll_mle.abs());
        assert!((sol.beta() - &mle).norm() < 1e-3);
        assert_eq!(sol.monotonicity_violations(1e-8), 0);
    }

    #[test]
    fn multinomial_two_categories_matches_logistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 120;
        let mut x = DMatrix::zeros(n, 4);
        let mut y = vec![0.0; n];
        for i in 0..n {
            x[(i, 0)] = 1.0;
            x[(i, 1 + i % 3)] = 1.0;
            y[i] = f64::from(rng.random::<f64>() < [0.3, 0.5, 0.55][i % 3]);
        }
        let c = agnostic(4, 1..4, 4);
        let a = fit_em(&x, &y, &c, 0.8, Family::Logistic, &EmOptions::default()).unwrap();
        let b = fit_em(&x, &y, &c, 0.8, Family::Multinomial { categories: 2 }, &EmOptions::default()).unwrap();
        for k in 0..4 {
            assert!((a.beta_hat[k] - b.beta_hat[k]).abs() < 1e-8);
        }
        assert_eq!(a.binding_set, b.binding_set);
    }

    #[test]
    fn multinomial_three_categories_runs_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 300;
        let mut x = DMatrix::zeros(n, 4);
        let mut y = vec![0.0; n];
        for i in 0..n {
            x[(i, 0)] = 1.0;
            x[(i, 1 + i % 3)] = 1.0;
            y[i] = (rng.random::<f64>() * 3.0).floor();
        }
        let c = agnostic(4, 1..4, 4);
        let sol = fit_em(&x, &y, &c, 2.0, Family::Multinomial { categories: 3 }, &EmOptions::default()).unwrap();
        assert_eq!(sol.beta_hat.len(), 8);
        assert_eq!(sol.monotonicity_violations(1e-8), 0);
        assert!(sol.groups.len() == 8);
    }

    #[test]
    fn rejects_bad_input() {
        let x = DMatrix::zeros(3, 2);
        let c = ConstraintSet::empty(2);
        assert!(fit_em(&x, &[0.0; 3], &c, 0.0, Family::Linear, &EmOptions::default()).is_err());
        assert!(fit_em(&x, &[0.0; 2], &c, 1.0, Family::Linear, &EmOptions::default()).is_err());
        assert!(fit_em(&x, &[0.0; 3], &ConstraintSet::empty(3), 1.0, Family::Linear, &EmOptions::default()).is_err());
    }
}
