//! Prior and posterior propriety checks expressed as rank computations.
//!
//! The prior is proper iff `D̄` has full column rank. The posterior is proper
//! for the linear, logistic and multinomial families iff (a) `[X; D̄]` has
//! full column rank and (b) the maximally sparse model, i.e. the regression
//! on `X·B` with `B` a basis of the nullspace of `D̄`, has a unique finite MLE.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{log_sum_exp, softplus, Family};
use crate::linalg;
use crate::structure::ConstraintSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Holds,
    Fails,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprietyReport {
    pub p: usize,
    pub prior_proper: bool,
    pub rank_dbar: usize,
    pub nullspace_dim: usize,
    /// `None` when no data were supplied.
    pub condition_a: Option<bool>,
    pub condition_b: Status,
    /// `Some(true/false)` when the conditions settle the question.
    pub posterior_proper: Option<bool>,
    pub details: String,
}

impl ProprietyReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Orthonormal basis `B` (`p × (p − m)`) of the nullspace of `D̄`.
pub fn nullspace_basis(cset: &ConstraintSet) -> DMatrix<f64> {
    linalg::nullspace(&cset.dbar(), cset.p).0
}

pub fn check_prior(cset: &ConstraintSet) -> bool {
    cset.rank_dbar() == cset.p
}

/// Report for the prior alone.
pub fn prior_report(cset: &ConstraintSet) -> ProprietyReport {
    let (basis, rank) = linalg::nullspace(&cset.dbar(), cset.p);
    let proper = rank == cset.p;
    ProprietyReport {
        p: cset.p,
        prior_proper: proper,
        rank_dbar: rank,
        nullspace_dim: basis.ncols(),
        condition_a: None,
        condition_b: Status::Undetermined,
        posterior_proper: proper.then_some(true),
        details: if proper {
            "prior proper: D̄ has full column rank".into()
        } else {
            format!("prior improper: rank(D̄) = {rank} < p = {}; nullspace dimension {}", cset.p, basis.ncols())
        },
    }
}

/// Outcome of the monitored Newton fit used to detect separation.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub finite: bool,
    pub coefficients: DVector<f64>,
    pub loglik: f64,
    pub iterations: usize,
}

const DIVERGENCE_BOUND: f64 = 1e4;

/// `ln(ln(1 + e^x))`, finite for every finite `x`.
fn ln_softplus(x: f64) -> f64 {
    if x < -30.0 {
        x - 0.5 * x.exp()
    } else {
        softplus(x).ln()
    }
}

/// Per-observation quantities of the negative log-likelihood `L = Σ ℓ_i` in
/// log space, so that separated fits can be followed far past the point
/// where `L` itself underflows.
struct LogLoss {
    /// Gradient of the log-likelihood divided by `L`.
    grad: DVector<f64>,
    /// Negative Hessian of the log-likelihood divided by `L`.
    hess: DMatrix<f64>,
}

fn category_etas(eta: &DMatrix<f64>, i: usize, row: &mut [f64]) {
    row[0] = 0.0;
    for c in 0..eta.ncols() {
        row[c + 1] = eta[(i, c)];
    }
}

fn ln_loss_total(family: Family, z: &DMatrix<f64>, y: &[f64], theta: &DVector<f64>) -> f64 {
    let q = z.ncols();
    let j = family.blocks();
    let eta = z * DMatrix::from_column_slice(q, j, theta.as_slice());
    let mut row = vec![0.0; j + 1];
    let mut others = Vec::with_capacity(j);
    let terms: Vec<f64> = (0..z.nrows())
        .map(|i| {
            category_etas(&eta, i, &mut row);
            let yi = y[i] as usize;
            others.clear();
            others.extend((0..=j).filter(|&c| c != yi).map(|c| row[c] - row[yi]));
            ln_softplus(log_sum_exp(&others))
        })
        .collect();
    log_sum_exp(&terms)
}

fn log_loss(family: Family, z: &DMatrix<f64>, y: &[f64], theta: &DVector<f64>) -> LogLoss {
    let (n, q) = (z.nrows(), z.ncols());
    let j = family.blocks();
    let ln_total = ln_loss_total(family, z, y, theta);
    let eta = z * DMatrix::from_column_slice(q, j, theta.as_slice());
    let mut grad = DVector::zeros(q * j);
    let mut hess = DMatrix::zeros(q * j, q * j);
    let mut row = vec![0.0; j + 1];
    let mut tmp = Vec::with_capacity(j + 1);
    let mut ln_pi = vec![0.0; j + 1];
    let mut ln_not = vec![0.0; j + 1];
    for i in 0..n {
        category_etas(&eta, i, &mut row);
        let lse = log_sum_exp(&row);
        for c in 0..=j {
            ln_pi[c] = row[c] - lse;
            tmp.clear();
            tmp.extend((0..=j).filter(|&d| d != c).map(|d| row[d]));
            ln_not[c] = log_sum_exp(&tmp) - lse;
        }
        let yi = y[i] as usize;
        let zi = z.row(i);
        for a in 0..j {
            let ca = a + 1;
            let g = if ca == yi { (ln_not[ca] - ln_total).exp() } else { -(ln_pi[ca] - ln_total).exp() };
            for u in 0..q {
                grad[a * q + u] += g * zi[u];
            }
            for b in 0..j {
                let cb = b + 1;
                let w = if a == b {
                    (ln_pi[ca] + ln_not[ca] - ln_total).exp()
                } else {
                    -(ln_pi[ca] + ln_pi[cb] - ln_total).exp()
                };
                if w == 0.0 {
                    continue;
                }
                for u in 0..q {
                    let wu = w * zi[u];
                    for v in 0..q {
                        hess[(a * q + u, b * q + v)] += wu * zi[v];
                    }
                }
            }
        }
    }
    LogLoss { grad, hess }
}

/// Damped Newton on the unpenalized likelihood with step sizes allowed to
/// expand. The MLE is declared infinite when the coefficients exceed `1e4`
/// in absolute value while the likelihood is still improving. Progress is
/// measured on `ln(−loglik)` so improvement stays visible after the
/// likelihood itself rounds to zero.
pub fn monitored_newton(family: Family, z: &DMatrix<f64>, y: &[f64]) -> NewtonOutcome {
    let dim = z.ncols() * family.blocks();
    let mut theta = DVector::zeros(dim);
    let mut cur = ln_loss_total(family, z, y, &theta);
    let steps = [1024.0, 256.0, 64.0, 16.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.125, 1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0];
    let outcome = |theta: DVector<f64>, cur: f64, finite: bool, it: usize| NewtonOutcome {
        finite,
        coefficients: theta,
        loglik: -cur.exp(),
        iterations: it,
    };
    for it in 1..=1000 {
        let sys = log_loss(family, z, y, &theta);
        let delta = linalg::solve_spd(&sys.hess, &sys.grad).x;
        let mut best: Option<(f64, DVector<f64>)> = None;
        for &t in &steps {
            let cand = &theta + &delta * t;
            let v = ln_loss_total(family, z, y, &cand);
            if v.is_finite() && best.as_ref().map_or(true, |(bv, _)| v < *bv) {
                best = Some((v, cand));
            }
        }
        match best {
            Some((v, cand)) if v < cur - 1e-12 => {
                theta = cand;
                cur = v;
                if theta.amax() > DIVERGENCE_BOUND {
                    return outcome(theta, cur, false, it);
                }
            }
            _ => return outcome(theta, cur, true, it),
        }
    }
    let finite = theta.amax() <= DIVERGENCE_BOUND;
    outcome(theta, cur, finite, 1000)
}

/// Posterior propriety report for design `x`, outcome `y` and constraints on
/// one coefficient block of length `x.ncols()`.
pub fn check_posterior(x: &DMatrix<f64>, y: &[f64], cset: &ConstraintSet, family: Family) -> Result<ProprietyReport> {
    let p = cset.p;
    if x.ncols() != p {
        return Err(Error::Dimension(format!("X has {} columns but constraints cover {p}", x.ncols())));
    }
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!("X has {} rows but y has {}", x.nrows(), y.len())));
    }
    let mut report = prior_report(cset);
    let dbar = cset.dbar();
    let stacked = linalg::vstack(&[x, &dbar], p);
    let cond_a = linalg::numerical_rank(&stacked) == p;
    report.condition_a = Some(cond_a);

    let basis = nullspace_basis(cset);
    let mut notes = vec![report.details.clone()];
    notes.push(format!("condition (a): rank([X; D̄]) {} p", if cond_a { "=" } else { "<" }));
    let status = if basis.ncols() == 0 {
        notes.push("condition (b): maximally sparse model has no free parameters".into());
        Status::Holds
    } else {
        let xb = x * &basis;
        let full = linalg::numerical_rank(&xb) == basis.ncols();
        if !full {
            notes.push(format!("condition (b): X·B ({} columns) is rank deficient", basis.ncols()));
            Status::Fails
        } else {
            match family {
                Family::Linear => {
                    notes.push("condition (b): X·B has full column rank".into());
                    Status::Holds
                }
                Family::Logistic | Family::Multinomial { .. } => {
                    let out = monitored_newton(family, &xb, y);
                    if out.finite {
                        notes.push(format!("condition (b): finite MLE on X·B after {} Newton steps", out.iterations));
                        Status::Holds
                    } else {
                        notes.push(format!(
                            "condition (b): MLE on X·B diverges (|coef| > 1e4 after {} steps, separation)",
                            out.iterations
                        ));
                        Status::Fails
                    }
                }
            }
        }
    };
    report.condition_b = status;
    report.posterior_proper = match (cond_a, status) {
        (false, _) => Some(false),
        (true, Status::Holds) => Some(true),
        (true, Status::Fails) => Some(false),
        (true, Status::Undetermined) => None,
    };
    notes.push(match report.posterior_proper {
        Some(true) => format!("posterior proper ({} family: conditions (a) and (b) hold)", family.name()),
        Some(false) => "posterior improper".into(),
        None => "posterior propriety undetermined".into(),
    });
    report.details = notes.join("; ");
    Ok(report)
}
