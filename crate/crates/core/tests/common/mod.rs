//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use fusionlasso::em::EmSolution;
use fusionlasso::family::{logistic, Family};
use fusionlasso::gibbs::{chain_rng, LambdaPrior, Lambda2Shape, LinearGibbs, LogisticGibbs, PriorSpec, SigmaPrior};
use fusionlasso::stats;
use fusionlasso::structure::{ConstraintSet, LinearRow};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use std::f64::consts::PI;

/// `E[PG(1, c)]` from the infinite-convolution series truncated at `terms`,
/// plus the integral tail estimate.
pub fn pg_series_mean(c: f64, terms: usize) -> f64 {
    let a = c * c / (4.0 * PI * PI);
    let s: f64 = (1..=terms).map(|k| 1.0 / ((k as f64 - 0.5).powi(2) + a)).sum();
    let tail = 1.0 / (terms as f64);
    (s + tail) / (2.0 * PI * PI)
}

/// Approximate `PG(1, c)` draw: 200 exponential terms of the series and the
/// remaining mean.
pub fn pg_series_draw<R: Rng>(c: f64, rng: &mut R) -> f64 {
    let a = c * c / (4.0 * PI * PI);
    let mut s = 0.0;
    for k in 1..=200 {
        let e: f64 = rng.sample(Exp1);
        s += e / ((k as f64 - 0.5).powi(2) + a);
    }
    let tail: f64 = (201..=200_000).map(|k| 1.0 / ((k as f64 - 0.5).powi(2) + a)).sum();
    (s + tail) / (2.0 * PI * PI)
}

/// The inverse Gaussian density in its textbook form.
pub fn ig_density(x: f64, mu: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (lambda / (2.0 * PI * x.powi(3))).sqrt() * (-lambda * (x - mu).powi(2) / (2.0 * mu * mu * x)).exp()
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// CDF values at the (sorted) points `xs` by cumulative Simpson quadrature
/// of the density.
pub fn quadrature_cdf_sorted<F: Fn(f64) -> f64>(density: F, xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &x in xs {
        if x > prev {
            acc += simpson(&density, prev, x, 64);
            prev = x;
        }
        out.push(acc);
    }
    out
}

/// KS statistic and p-value against CDF values already evaluated at the
/// sorted sample.
pub fn ks_from_sorted_cdf(cdf: &[f64]) -> (f64, f64) {
    let n = cdf.len() as f64;
    let mut d = 0.0_f64;
    for (i, f) in cdf.iter().enumerate() {
        d = d.max(f - i as f64 / n).max((i as f64 + 1.0) / n - f);
    }
    let sn = n.sqrt();
    (d, stats::kolmogorov_q((sn + 0.12 + 0.11 / sn) * d))
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let s = ne.sqrt();
    (d, stats::kolmogorov_q((s + 0.12 + 0.11 / s) * d))
}

/// Gauss-Hermite nodes and weights (Golub-Welsch) for `∫ f(x) e^{−x²} dx`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let j = DMatrix::from_fn(n, n, |i, k| {
        if i + 1 == k || k + 1 == i {
            ((i.max(k)) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], PI.sqrt() * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// `E[g(Z)]` for standard normal `Z` by Gauss-Hermite quadrature.
pub fn normal_expectation<F: Fn(f64) -> f64>(g: F, nodes: usize) -> f64 {
    let (x, w) = gauss_hermite(nodes);
    x.iter().zip(&w).map(|(xi, wi)| wi * g(2f64.sqrt() * xi)).sum::<f64>() / PI.sqrt()
}

/// `−RSS/(2σ²) − (λ/σ)·Pen(β)`.
pub fn fixed_sigma_objective(x: &DMatrix<f64>, y: &[f64], cset: &ConstraintSet, lambda: f64, sigma: f64, beta: &[f64]) -> f64 {
    let fit = x * DVector::from_column_slice(beta);
    let rss: f64 = fit.iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum();
    -rss / (2.0 * sigma * sigma) - lambda / sigma * cset.penalty(beta)
}

fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    svd.solve(b, tol).expect("svd solve")
}

/// Global maximizer of the fixed-σ linear objective over every sign
/// pattern `a_k ∈ {−1, 0, +1}` of the linear rows: each pattern's face
/// maximizer solves an equality-constrained quadratic program (KKT system).
/// Returns `(objective, β)`.
pub fn enumeration_oracle(x: &DMatrix<f64>, y: &[f64], cset: &ConstraintSet, lambda: f64, sigma: f64) -> (f64, Vec<f64>) {
    let p = x.ncols();
    let k = cset.rows.len();
    assert!(cset.quads.is_empty());
    let xtx = x.transpose() * x / (sigma * sigma);
    let xty = x.transpose() * DVector::from_column_slice(y) / (sigma * sigma);
    let mut best = (f64::NEG_INFINITY, vec![0.0; p]);
    for code in 0..3usize.pow(k as u32) {
        let mut c = code;
        let mut signs = vec![0i32; k];
        for s in signs.iter_mut() {
            *s = (c % 3) as i32 - 1;
            c /= 3;
        }
        let zero: Vec<usize> = (0..k).filter(|&i| signs[i] == 0).collect();
        let m = zero.len();
        let mut kkt = DMatrix::zeros(p + m, p + m);
        kkt.view_mut((0, 0), (p, p)).copy_from(&xtx);
        let mut rhs = DVector::zeros(p + m);
        rhs.rows_mut(0, p).copy_from(&xty);
        for (r, row) in cset.rows.iter().enumerate() {
            let s = signs[r] as f64;
            for &(j, v) in &row.entries {
                rhs[j] -= lambda / sigma * s * row.weight * v;
            }
        }
        for (zi, &r) in zero.iter().enumerate() {
            for &(j, v) in &cset.rows[r].entries {
                kkt[(p + zi, j)] += v;
                kkt[(j, p + zi)] += v;
            }
        }
        let sol = pinv_solve(&kkt, &rhs);
        let beta: Vec<f64> = sol.rows(0, p).iter().copied().collect();
        let f = fixed_sigma_objective(x, y, cset, lambda, sigma, &beta);
        if f > best.0 {
            best = (f, beta);
        }
    }
    best
}

/// Chain (`β_j − β_{j+1}`) or complete-graph difference rows on `p`
/// coefficients, unit weights.
pub fn difference_set(p: usize, complete: bool) -> ConstraintSet {
    let mut rows = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            if complete || j == i + 1 {
                rows.push(LinearRow::difference(i, j, 1.0));
            }
        }
    }
    ConstraintSet::new(p, rows, vec![]).unwrap()
}

/// Max post-clip objective decrease of a set of EM fits.
pub fn worst_decrease<'a>(sols: impl IntoIterator<Item = &'a EmSolution>) -> f64 {
    sols.into_iter().map(|s| s.max_decrease()).fold(0.0, f64::max)
}

pub fn standard_normals<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// z-score of the difference of two means with their standard errors.
pub fn z_score(m1: f64, se1: f64, m2: f64, se2: f64) -> f64 {
    (m1 - m2) / (se1 * se1 + se2 * se2).sqrt()
}

/// Outcome of a joint-distribution ("getting it right") comparison.
pub struct JointTest {
    pub names: Vec<String>,
    pub z: Vec<f64>,
}

impl JointTest {
    pub fn max_abs(&self) -> f64 {
        self.z.iter().map(|z| z.abs()).fold(0.0, f64::max)
    }
}

/// Invertible two-row structure `[e_0; e_0 − e_1]` used by the joint tests.
pub fn joint_test_structure() -> ConstraintSet {
    ConstraintSet::new(
        2,
        vec![LinearRow { entries: vec![(0, 1.0)], weight: 1.0, base: 1.0 }, LinearRow::difference(0, 1, 1.0)],
        vec![],
    )
    .unwrap()
}

fn moments(beta: &[f64], lambda2: f64, sigma2: Option<f64>) -> Vec<f64> {
    let mut g = vec![beta[0], beta[1], beta[0] * beta[0], beta[1] * beta[1], lambda2, lambda2 * lambda2];
    if let Some(s) = sigma2 {
        g.push(s);
        g.push(s * s);
    }
    g
}

fn moment_names(sigma: bool) -> Vec<String> {
    let mut n: Vec<String> = ["beta0", "beta1", "beta0^2", "beta1^2", "lambda2", "lambda2^2"].iter().map(|s| s.to_string()).collect();
    if sigma {
        n.push("sigma2".into());
        n.push("sigma2^2".into());
    }
    n
}

/// Draw `(β, λ², σ²)` from the prior: `λ² ∼ Gamma`, `σ² ∼ InvGamma`,
/// `τ²_k ∼ Exp(λ²/2)`, `u = Dβ ∼ N(0, σ² diag τ²)`.
fn prior_draw<R: Rng>(a: (f64, f64), s: Option<(f64, f64)>, rng: &mut R) -> (Vec<f64>, f64, f64, Vec<f64>) {
    let lambda2 = Gamma::new(a.0, 1.0 / a.1).unwrap().sample(rng);
    let sigma2 = s.map_or(1.0, |(sa, sb)| 1.0 / Gamma::new(sa, 1.0 / sb).unwrap().sample(rng));
    let tau2: Vec<f64> = (0..2).map(|_| 2.0 / lambda2 * rng.sample::<f64, _>(Exp1)).collect();
    let u: Vec<f64> = tau2.iter().map(|t| (sigma2 * t).sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
    // D = [[1, 0], [1, −1]] ⇒ β0 = u0, β1 = u0 − u1.
    (vec![u[0], u[0] - u[1]], lambda2, sigma2, tau2.iter().map(|t| 1.0 / t).collect())
}

fn simulate_y<R: Rng>(x: &DMatrix<f64>, beta: &[f64], sigma2: f64, linear: bool, rng: &mut R) -> Vec<f64> {
    let eta = x * DVector::from_column_slice(beta);
    eta.iter()
        .map(|&e| {
            if linear {
                e + sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal)
            } else {
                f64::from(rng.random::<f64>() < logistic(e))
            }
        })
        .collect()
}

/// Joint-distribution test of the linear or logistic kernel: moments of
/// `cycles` independent prior draws against `cycles` alternating
/// (kernel step, fresh data) cycles.
pub fn geweke_joint_test(family: Family, cycles: usize, seed: u64) -> JointTest {
    let linear = family == Family::Linear;
    let n = if linear { 5 } else { 10 };
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 - 2.0) / 2.0 });
    let cset = joint_test_structure();
    let lam = (5.0, 5.0);
    let sig = linear.then_some((5.0, 4.0));
    let prior = PriorSpec {
        lambda: LambdaPrior::Gamma { shape: lam.0, rate: lam.1 },
        sigma: match sig {
            Some((a, b)) => SigmaPrior::InverseGamma { shape: a, rate: b },
            None => SigmaPrior::Fixed { sigma2: 1.0 },
        },
        lambda2_shape: Lambda2Shape::Rank,
    };
    let mut rng = chain_rng(seed, 0);
    let marginal: Vec<Vec<f64>> = (0..cycles)
        .map(|_| {
            let (b, l, s, _) = prior_draw(lam, sig, &mut rng);
            moments(&b, l, linear.then_some(s))
        })
        .collect();

    let (b0, l0, s0, inv0) = prior_draw(lam, sig, &mut rng);
    let y0 = simulate_y(&x, &b0, s0, linear, &mut rng);
    let mut successive = Vec::with_capacity(cycles);
    if linear {
        let mut k = LinearGibbs::new(&x, &y0, &cset, prior).unwrap();
        k.state.beta = b0;
        k.state.lambda2 = l0;
        k.state.sigma2 = s0;
        k.state.inv_scales = inv0;
        for _ in 0..cycles {
            k.step(&mut rng);
            let (b, s) = (k.state.beta.clone(), k.state.sigma2);
            successive.push(moments(&b, k.state.lambda2, Some(s)));
            let y = simulate_y(&x, &b, s, true, &mut rng);
            k.set_y(&y);
        }
    } else {
        let mut k = LogisticGibbs::new(&x, &y0, &cset, prior).unwrap();
        k.state.beta = b0;
        k.state.lambda2 = l0;
        k.state.inv_scales = inv0;
        for _ in 0..cycles {
            k.step(&mut rng);
            let b = k.state.beta.clone();
            successive.push(moments(&b, k.state.lambda2, None));
            let y = simulate_y(&x, &b, 1.0, false, &mut rng);
            k.set_y(&y);
        }
    }
    let names = moment_names(linear);
    let z = (0..names.len())
        .map(|i| {
            let a: Vec<f64> = marginal.iter().map(|g| g[i]).collect();
            let b: Vec<f64> = successive.iter().map(|g| g[i]).collect();
            let se_a = stats::sd(&a) / (a.len() as f64).sqrt();
            let se_b = stats::batch_means_se(&b, 50);
            z_score(stats::mean(&a), se_a, stats::mean(&b), se_b)
        })
        .collect();
    JointTest { names, z }
}
