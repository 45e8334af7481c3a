//! Acceptance criteria: one PASS/FAIL line each; exits non-zero on any failure.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use fusionlasso::diagnostics::{gelman_rubin, geweke};
use fusionlasso::distributions::{InverseGaussian, PolyaGamma};
use fusionlasso::em::{fit_em, EmOptions, SigmaMode};
use fusionlasso::gibbs::{chain_rng, sample_linear, LambdaPrior, Lambda2Shape, PriorSpec, SamplerSettings, SigmaPrior};
use fusionlasso::propriety::{check_posterior, check_prior, Status};
use fusionlasso::simulate::{run_benchmark, BenchOptions, Method, SimFamily, SimResult, SimulationSpec};
use fusionlasso::structure::{ConstraintSet, LinearRow, QuadPenalty};
use fusionlasso::{calibrate, stats, Family};
use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Collected post-clipping EM decreases from every fit made here.
#[derive(Default)]
struct EmLedger {
    fits: usize,
    worst: f64,
    violations: usize,
}

impl EmLedger {
    fn record(&mut self, decrease: f64) {
        self.fits += 1;
        self.worst = self.worst.max(decrease);
        if decrease > 1e-8 {
            self.violations += 1;
        }
    }

    fn record_benchmark(&mut self, res: &SimResult) {
        for rep in &res.replicates {
            for o in &rep.outcomes {
                if let Some(d) = o.em_max_decrease {
                    self.record(d);
                }
            }
        }
    }
}

fn summary(res: &SimResult, m: Method) -> (f64, f64) {
    let s = res.summary(m).expect("method was run");
    (s.mean_rmse, s.se)
}

fn combined(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0) / (a.1 * a.1 + b.1 * b.1).sqrt()
}

fn grouped_benchmark(em: &mut EmLedger) -> Outcome {
    let spec = SimulationSpec { g: 25, r: 20, s: 12, family: SimFamily::Linear, seed: 2024, replicates: 100 };
    let opts = BenchOptions {
        methods: vec![Method::Ssp, Method::AdaptiveSsp, Method::FixedEffects],
        ..BenchOptions::default()
    };
    let res = run_benchmark(&spec, &opts).expect("benchmark runs");
    em.record_benchmark(&res);
    let (a, s, f) = (summary(&res, Method::AdaptiveSsp), summary(&res, Method::Ssp), summary(&res, Method::FixedEffects));
    let failed: usize = res.summaries.iter().map(|m| m.failed).sum();
    let pass = (0.18..=0.28).contains(&a.0)
        && (0.23..=0.33).contains(&s.0)
        && (0.39..=0.50).contains(&f.0)
        && combined(s, a) > 2.0
        && combined(f, s) > 2.0
        && failed == 0;
    outcome(
        pass,
        format!(
            "grouped S=12: A-SSp {:.4} (SE {:.4}), SSp {:.4} (SE {:.4}), FE {:.4} (SE {:.4}); gaps {:.1} and {:.1} SEs; {failed} failed fits",
            a.0,
            a.1,
            s.0,
            s.1,
            f.0,
            f.1,
            combined(s, a),
            combined(f, s)
        ),
    )
}

fn sparse_benchmark(em: &mut EmLedger) -> Outcome {
    let spec = SimulationSpec { g: 25, r: 20, s: 6, family: SimFamily::Linear, seed: 2025, replicates: 100 };
    let opts = BenchOptions { methods: vec![Method::Ssp, Method::FixedEffects], ..BenchOptions::default() };
    let res = run_benchmark(&spec, &opts).expect("benchmark runs");
    em.record_benchmark(&res);
    let (s, f) = (summary(&res, Method::Ssp), summary(&res, Method::FixedEffects));
    let pass = (0.24..=0.34).contains(&s.0) && combined(f, s) > 2.0;
    outcome(
        pass,
        format!("sparse S=6: SSp {:.4} (SE {:.4}), FE {:.4} (SE {:.4}); gap {:.1} SEs", s.0, s.1, f.0, f.1, combined(f, s)),
    )
}

fn propriety_suite() -> Outcome {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let fusion = difference_set(4, true);
    checks.push(("D=I proper", check_prior(&ConstraintSet::identity(4))));
    checks.push(("fusion graph improper", !check_prior(&fusion)));
    let ridge = fusion.clone().with_quad(QuadPenalty::new(DMatrix::identity(4, 4) * 1e-3).unwrap()).unwrap();
    checks.push(("fusion + eps*I proper", check_prior(&ridge)));

    // Cell indicators sum to an intercept; fused cells leave X·B = 1.
    let n = 40;
    let mut rng = chain_rng(17, 0);
    let x = DMatrix::from_fn(n, 4, |i, j| f64::from(i % 4 == j));
    let y = standard_normals(n, &mut rng);
    let r = check_posterior(&x, &y, &fusion, Family::Linear).unwrap();
    checks.push((
        "intercepted linear proper",
        r.condition_a == Some(true) && r.condition_b == Status::Holds && r.posterior_proper == Some(true),
    ));

    // Pooled design [1, d] with d the fused treatment indicators; y = d.
    let mut xs = DMatrix::zeros(8, 3);
    let mut ys = vec![0.0; 8];
    for i in 0..8 {
        xs[(i, 0)] = 1.0;
        if i % 2 == 1 {
            xs[(i, 1 + (i / 2) % 2)] = 1.0;
            ys[i] = 1.0;
        }
    }
    let cset = ConstraintSet::new(3, vec![LinearRow::difference(1, 2, 1.0)], vec![]).unwrap();
    let r = check_posterior(&xs, &ys, &cset, Family::Logistic).unwrap();
    checks.push((
        "separated logistic fails (b)",
        r.condition_a == Some(true) && r.condition_b == Status::Fails && r.posterior_proper == Some(false),
    ));
    let bad: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(bad.is_empty(), format!("{} of {} propriety cases match; mismatched: {:?}", checks.len() - bad.len(), checks.len(), bad))
}

fn laplace_marginal() -> Outcome {
    let lambda = 1.5;
    let prior = PriorSpec {
        lambda: LambdaPrior::Fixed { lambda },
        sigma: SigmaPrior::Fixed { sigma2: 1.0 },
        lambda2_shape: Lambda2Shape::Rank,
    };
    let x = DMatrix::<f64>::zeros(0, 1);
    let mut ps = Vec::new();
    for seed in [101, 102, 103] {
        let settings = SamplerSettings { chains: 1, iters: 51_000, burnin: 1000, thin: 5, seed, force: false };
        let d = sample_linear(&x, &[], &["b".into()], &ConstraintSet::identity(1), &prior, &settings).unwrap();
        let draws = &d.traces(0)[0];
        let (_, p) = stats::ks_test(draws, |v| if v < 0.0 { 0.5 * (lambda * v).exp() } else { 1.0 - 0.5 * (-lambda * v).exp() });
        ps.push(p);
    }
    outcome(ps.iter().all(|p| *p > 0.01), format!("Laplace KS p-values on 10000 draws: {:.3?}", ps))
}

fn joint_tests() -> Outcome {
    let lin = geweke_joint_test(Family::Linear, 50_000, 5);
    let log = geweke_joint_test(Family::Logistic, 50_000, 6);
    let pass = lin.max_abs() < 4.0 && log.max_abs() < 4.0;
    let fmt = |t: &JointTest| t.names.iter().zip(&t.z).map(|(n, z)| format!("{n} {z:.2}")).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("joint test max |z|: linear {:.2}, logistic {:.2} [linear: {}] [logistic: {}]", lin.max_abs(), log.max_abs(), fmt(&lin), fmt(&log)))
}

fn kernels() -> Outcome {
    let mut rng = chain_rng(77, 0);
    let (mu, lam) = (2.0, 4.0);
    let ig = InverseGaussian::new(mu, lam).unwrap();
    let xs: Vec<f64> = (0..100_000).map(|_| ig.sample(&mut rng)).collect();
    let ig_z = (stats::mean(&xs) - mu) / ((mu.powi(3) / lam).sqrt() / (xs.len() as f64).sqrt());
    let mut sorted: Vec<f64> = xs[..20_000].to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (_, ks_p) = ks_from_sorted_cdf(&quadrature_cdf_sorted(|x| ig_density(x, mu, lam), &sorted));
    let mut pg_z = Vec::new();
    for c in [0.0, 0.1, 1.0, 5.0] {
        let pg = PolyaGamma::new(c);
        let d: Vec<f64> = (0..100_000).map(|_| pg.sample(&mut rng)).collect();
        let se = stats::sd(&d) / (d.len() as f64).sqrt();
        pg_z.push((stats::mean(&d) - pg_series_mean(c, 10_000)) / se);
    }
    let pass = ig_z.abs() < 3.0 && ks_p > 0.01 && pg_z.iter().all(|z| z.abs() < 3.0);
    outcome(pass, format!("IG mean z {ig_z:.2}, IG KS p {ks_p:.3}; PG mean z at c=0,0.1,1,5: {:.2?}", pg_z))
}

fn em_oracle(em: &mut EmLedger) -> Outcome {
    let mut worst = 0.0_f64;
    let mut count = 0;
    for inst in 0..20u64 {
        let p = if inst % 4 < 2 { 3 } else { 2 };
        let complete = inst % 2 == 1;
        let mut rng = chain_rng(5000 + inst, 0);
        let n = 15;
        let z = standard_normals(n * p, &mut rng);
        let x = DMatrix::from_fn(n, p, |i, j| z[i * p + j]);
        let truth: Vec<f64> = (0..p).map(|j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.5) }).collect();
        let e = standard_normals(n, &mut rng);
        let y: Vec<f64> = (0..n).map(|i| (0..p).map(|j| x[(i, j)] * truth[j]).sum::<f64>() + e[i]).collect();
        let cset = difference_set(p, complete);
        let lambda = 10f64.powf(rng.random_range(-1.0..1.5));
        let sol = fit_em(&x, &y, &cset, lambda, Family::Linear, &EmOptions { sigma: SigmaMode::Fixed(1.0), ..EmOptions::default() })
            .unwrap();
        em.record(sol.max_decrease());
        let (best, _) = enumeration_oracle(&x, &y, &cset, lambda, 1.0);
        let got = fixed_sigma_objective(&x, &y, &cset, lambda, 1.0, &sol.beta_hat);
        worst = worst.max((best - got) / best.abs().max(1e-300));
        count += 1;
    }
    outcome(worst <= 1e-6, format!("{count} instances; worst relative objective shortfall {worst:.2e}"))
}

fn limiting_fusion(em: &mut EmLedger) -> Outcome {
    let (g, r) = (5, 30);
    let n = g * r;
    let mut rng = chain_rng(88, 0);
    let xc = standard_normals(n, &mut rng);
    let e = standard_normals(n, &mut rng);
    let x = DMatrix::from_fn(n, g + 1, |i, j| if j < g { f64::from(i / r == j) } else { xc[i] });
    let y: Vec<f64> = (0..n).map(|i| 0.3 * (i / r) as f64 + 0.8 * xc[i] + e[i]).collect();
    let rows: Vec<LinearRow> = (0..g).flat_map(|i| (i + 1..g).map(move |j| LinearRow::difference(i, j, 1.0))).collect();
    let cset = ConstraintSet::new(g + 1, rows, vec![]).unwrap();
    let sol = fit_em(&x, &y, &cset, 1e4, Family::Linear, &EmOptions::default()).unwrap();
    em.record(sol.max_decrease());
    let b = &sol.beta_hat;
    let gap = (0..g).flat_map(|i| (0..g).map(move |j| (b[i] - b[j]).abs())).fold(0.0, f64::max);
    let pooled = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xc[i] });
    let xt = pooled.transpose();
    let mle = (&xt * &pooled).try_inverse().unwrap() * (&xt * DVector::from_column_slice(&y));
    let err = (b[0] - mle[0]).abs().max((b[g] - mle[1]).abs());
    outcome(gap < 1e-4 && err < 1e-6, format!("max pairwise gap {gap:.2e}; distance to pooled MLE {err:.2e}; df {}", sol.df))
}

fn monotonicity(em: &EmLedger) -> Outcome {
    outcome(
        em.violations == 0,
        format!("{} EM fits (grids count once); worst post-clipping decrease {:.2e}; {} above 1e-8", em.fits, em.worst, em.violations),
    )
}

fn diagnostics_calibration() -> Outcome {
    let mut rng = chain_rng(99, 0);
    let iid: Vec<Vec<f64>> = (0..4).map(|_| standard_normals(5000, &mut rng)).collect();
    let r_iid = gelman_rubin(&iid, true).unwrap().point;
    let shifted = vec![standard_normals(5000, &mut rng), standard_normals(5000, &mut rng).iter().map(|v| v + 5.0).collect()];
    let r_shift = gelman_rubin(&shifted, true).unwrap().point;
    let passes = (0..100)
        .filter(|&s| geweke(&standard_normals(2000, &mut chain_rng(1000 + s, 0))).unwrap().abs() < 1.96)
        .count();
    outcome(
        r_iid < 1.05 && r_shift > 1.5 && passes >= 90,
        format!("iid R-hat {r_iid:.4}; shifted R-hat {r_shift:.2}; Geweke null passes {passes}/100"),
    )
}

fn waic_ordering() -> Outcome {
    let (g, n) = (5, 500);
    let prior = PriorSpec::default();
    let settings = |seed| SamplerSettings { chains: 2, iters: 2000, burnin: 1000, thin: 1, seed, force: false };
    let mut wins = 0;
    let mut gaps = Vec::new();
    for rep in 0..20u64 {
        let mut rng = chain_rng(4000 + rep, 0);
        let xc = standard_normals(n, &mut rng);
        let e = standard_normals(n, &mut rng);
        let cell: Vec<usize> = (0..n).map(|i| i % g).collect();
        let y: Vec<f64> = (0..n).map(|i| [0.0, 0.0, 0.5, 0.5, 1.0][cell[i]] + 0.5 * xc[i] + e[i]).collect();
        let full = DMatrix::from_fn(n, g + 1, |i, j| if j < g { f64::from(cell[i] == j) } else { xc[i] });
        let short = DMatrix::from_fn(n, g, |i, j| f64::from(cell[i] == j));
        let rows: Vec<LinearRow> = (0..g).flat_map(|i| (i + 1..g).map(move |j| LinearRow::difference(i, j, 1.0))).collect();
        let c_full = ConstraintSet::new(g + 1, rows.clone(), vec![]).unwrap();
        let c_short = ConstraintSet::new(g, rows, vec![]).unwrap();
        let lf: Vec<String> = (0..=g).map(|j| format!("c{j}")).collect();
        let d_full = sample_linear(&full, &y, &lf, &c_full, &prior, &settings(rep)).unwrap();
        let d_short = sample_linear(&short, &y, &lf[..g], &c_short, &prior, &settings(rep)).unwrap();
        let w_full = calibrate::waic(&d_full, &full, &y).unwrap();
        let w_short = calibrate::waic(&d_short, &short, &y).unwrap();
        if w_full < w_short {
            wins += 1;
        }
        gaps.push(w_short - w_full);
    }
    outcome(wins >= 18, format!("true model has lower WAIC in {wins}/20 replicates (median gap {:.1})", stats::quantile(&gaps, 0.5)))
}

fn main() -> ExitCode {
    let mut em = EmLedger::default();
    let mut all = true;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        all &= o.pass;
        println!(
            "criterion {id:>2} {} {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    };
    report(1, "grouped benchmark", &mut || grouped_benchmark(&mut em));
    report(2, "sparse benchmark", &mut || sparse_benchmark(&mut em));
    report(3, "propriety suite", &mut propriety_suite);
    report(4, "prior marginal", &mut laplace_marginal);
    report(5, "sampler joint distribution", &mut joint_tests);
    report(6, "distribution kernels", &mut kernels);
    report(7, "EM vs enumeration", &mut || em_oracle(&mut em));
    report(8, "limiting fusion", &mut || limiting_fusion(&mut em));
    report(9, "EM monotonicity", &mut || monotonicity(&em));
    report(10, "diagnostics calibration", &mut diagnostics_calibration);
    report(11, "WAIC ordering", &mut waic_ordering);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
