//! Dense linear-algebra helpers shared by the propriety checks, the EM solver
//! and the samplers.

use nalgebra::{DMatrix, DVector};

/// Singular values of `m`, sorted descending. An empty matrix has none.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Tolerance below which a singular value counts as zero:
/// `max(rows, cols) · ε · σ_max`.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    let Some(&smax) = sv.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    let tol = rank_tolerance(m.nrows(), m.ncols(), smax);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Orthonormal basis (as columns) of the nullspace of `m`, together with the
/// numerical rank of `m`. `m` is `r × p`; the basis is `p × (p − rank)`.
///
/// Rows are zero-padded up to `p` so the SVD always yields a complete right
/// singular basis.
pub fn nullspace(m: &DMatrix<f64>, p: usize) -> (DMatrix<f64>, usize) {
    if m.nrows() == 0 {
        return (DMatrix::identity(p, p), 0);
    }
    assert_eq!(m.ncols(), p, "nullspace: column count must equal p");
    let rows = m.nrows().max(p);
    let mut padded = DMatrix::zeros(rows, p);
    padded.view_mut((0, 0), (m.nrows(), p)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0_f64, f64::max);
    let tol = rank_tolerance(m.nrows(), m.ncols(), smax);
    let null_rows: Vec<usize> = (0..sv.len()).filter(|&i| smax == 0.0 || sv[i] <= tol).collect();
    let rank = p - null_rows.len();
    let mut basis = DMatrix::zeros(p, null_rows.len());
    for (c, &i) in null_rows.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    (basis, rank)
}

/// Vertically stack matrices with a common column count.
pub fn vstack(blocks: &[&DMatrix<f64>], cols: usize) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        if b.nrows() == 0 {
            continue;
        }
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(*b);
        at += b.nrows();
    }
    out
}

/// Result of a symmetric positive-definite solve.
pub struct SpdSolve {
    pub x: DVector<f64>,
    pub jitter: f64,
}

/// Solve `a·x = b` for symmetric positive (semi-)definite `a`. The system
/// is first scaled to unit diagonal. When the Cholesky factorization still
/// fails a ridge jitter starting at `1e-10` (of the unit diagonal) is added
/// and increased until it succeeds.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> SpdSolve {
    let n = a.nrows();
    if n == 0 {
        return SpdSolve { x: DVector::zeros(0), jitter: 0.0 };
    }
    let d = DVector::from_iterator(n, a.diagonal().iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }));
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * d[i] * d[j]);
    let rhs = b.component_mul(&d);
    if let Some(ch) = scaled.clone().cholesky() {
        return SpdSolve { x: ch.solve(&rhs).component_mul(&d), jitter: 0.0 };
    }
    let mut jitter = 1e-10;
    loop {
        let mut aj = scaled.clone();
        for i in 0..n {
            aj[(i, i)] += jitter;
        }
        if let Some(ch) = aj.cholesky() {
            return SpdSolve { x: ch.solve(&rhs).component_mul(&d), jitter };
        }
        jitter *= 10.0;
        assert!(jitter < 1e12, "solve_spd: matrix is not PSD");
    }
}

/// Lower Cholesky factor, with the same jitter fallback as [`solve_spd`].
pub fn cholesky_jittered(a: &DMatrix<f64>) -> (nalgebra::Cholesky<f64, nalgebra::Dyn>, f64) {
    if let Some(ch) = a.clone().cholesky() {
        return (ch, 0.0);
    }
    let scale = a.diagonal().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut jitter = 1e-10 * scale;
    loop {
        let mut aj = a.clone();
        for i in 0..aj.nrows() {
            aj[(i, i)] += jitter;
        }
        if let Some(ch) = aj.cholesky() {
            return (ch, jitter);
        }
        jitter *= 10.0;
        assert!(jitter.is_finite() && jitter < 1e12 * scale, "cholesky: matrix is not PSD");
    }
}

/// Symmetric eigenvalue check used for user-supplied quadratic penalties:
/// every eigenvalue must be `≥ −1e-10 · λ_max`.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let scale = m[(i, j)].abs().max(m[(j, i)].abs()).max(1.0);
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return false;
            }
        }
    }
    if n == 0 {
        return true;
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    min >= -1e-10 * max.abs().max(f64::MIN_POSITIVE)
}

/// A `q × p` matrix whose rows span the row space of a PSD matrix `f`
/// (`f = Rᵀ R`). Used to express `βᵀFβ = 0` as the linear system `Rβ = 0`.
pub fn psd_row_factor(f: &DMatrix<f64>) -> DMatrix<f64> {
    let p = f.nrows();
    let eig = f.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let tol = rank_tolerance(p, p, max);
    let keep: Vec<usize> = (0..p).filter(|&i| eig.eigenvalues[i] > tol).collect();
    let mut r = DMatrix::zeros(keep.len(), p);
    for (row, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        for j in 0..p {
            r[(row, j)] = s * eig.eigenvectors[(j, i)];
        }
    }
    r
}
