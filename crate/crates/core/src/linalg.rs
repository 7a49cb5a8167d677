//! Dense complex linear algebra helpers shared by the solvers.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`. Sizes stay in the
//! low thousands, so plain dense factorizations are used throughout.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Default iteration count for power-iteration norm estimates.
pub const POWER_ITERATIONS: usize = 50;
/// Fixed seed of the power-iteration start vector.
pub const POWER_SEED: u64 = 0x5eed_0f_9e11;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest row ℓ¹ norm, `sup_x Σ_y |M(x,y)|`.
pub fn max_row_sum(m: &CMat) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest column ℓ¹ norm.
pub fn max_col_sum(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Schur-test upper bound `sqrt(‖M‖₁‖M‖∞)` for the spectral norm.
pub fn schur_norm_bound(m: &CMat) -> f64 {
    (max_row_sum(m) * max_col_sum(m)).sqrt()
}

pub fn submatrix(m: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Outcome of an LU factorization with partial pivoting.
pub struct LuSolve {
    pub inverse: CMat,
    pub determinant: C64,
    pub min_pivot: f64,
    pub max_entry: f64,
}

/// Failure of [`lu_inverse`]: the smallest pivot and the matrix scale.
#[derive(Debug, Clone, Copy)]
pub struct PivotFailure {
    pub min_pivot: f64,
    pub max_entry: f64,
}

/// Inverts `m` by LU with partial pivoting, refusing when the smallest
/// pivot falls below `rel_threshold · max|entry|`.
pub fn lu_inverse(m: &CMat, rel_threshold: f64) -> Result<LuSolve, PivotFailure> {
    let n = m.nrows();
    let max_entry = max_abs(m);
    if n == 0 {
        return Ok(LuSolve {
            inverse: CMat::zeros(0, 0),
            determinant: c(1.0, 0.0),
            min_pivot: f64::INFINITY,
            max_entry,
        });
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let min_pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if !(min_pivot >= rel_threshold * max_entry) || min_pivot == 0.0 {
        return Err(PivotFailure { min_pivot, max_entry });
    }
    let determinant = lu.determinant();
    let mut inverse = CMat::identity(n, n);
    if !lu.solve_mut(&mut inverse) {
        return Err(PivotFailure { min_pivot, max_entry });
    }
    Ok(LuSolve { inverse, determinant, min_pivot, max_entry })
}

/// Solves `m X = rhs` by LU with the same pivot guard as [`lu_inverse`].
pub fn lu_solve(m: &CMat, rhs: &CMat, rel_threshold: f64) -> Result<CMat, PivotFailure> {
    let n = m.nrows();
    let max_entry = max_abs(m);
    if n == 0 {
        return Ok(rhs.clone());
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let min_pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if !(min_pivot >= rel_threshold * max_entry) || min_pivot == 0.0 {
        return Err(PivotFailure { min_pivot, max_entry });
    }
    lu.solve(rhs).ok_or(PivotFailure { min_pivot, max_entry })
}

pub fn determinant(m: &CMat) -> C64 {
    if m.nrows() == 0 {
        return c(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

/// Spectral norm estimate by power iteration on `M*M` from a seeded start.
pub fn power_norm(m: &CMat, iterations: usize, seed: u64) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let norm = v.norm();
    v /= c(norm, 0.0);
    let adj = m.adjoint();
    let mut estimate = 0.0;
    for _ in 0..iterations.max(1) {
        let w = m * &v;
        estimate = w.norm();
        let u = &adj * w;
        let un = u.norm();
        if un == 0.0 {
            return estimate;
        }
        v = u / c(un, 0.0);
    }
    estimate.max((m * &v).norm())
}

pub fn power_norm_default(m: &CMat) -> f64 {
    power_norm(m, POWER_ITERATIONS, POWER_SEED)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Exact spectral norm from the singular value decomposition.
pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn sigma_min(m: &CMat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Largest entry of `|M − M*|`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
///
/// Real symmetric input takes the faster real path.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let is_real = m.iter().all(|z| z.im == 0.0);
    let (values, vectors): (Vec<f64>, CMat) = if is_real {
        let re = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)].re + m[(j, i)].re));
        let eig = SymmetricEigen::new(re);
        let vecs = eig.eigenvectors.map(|x| c(x, 0.0));
        (eig.eigenvalues.iter().copied().collect(), vecs)
    } else {
        let sym = CMat::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
        let eig = SymmetricEigen::new(sym);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = CMat::from_fn(n, n, |r, k| vectors[(r, order[k])]);
    (sorted_values, sorted_vectors)
}

/// `‖A·B − I‖∞` (largest row sum of the defect).
pub fn identity_residual(a: &CMat, b: &CMat) -> f64 {
    let mut p = a * b;
    for i in 0..p.nrows().min(p.ncols()) {
        p[(i, i)] -= c(1.0, 0.0);
    }
    max_row_sum(&p)
}

/// Adjugate by explicit cofactors, each minor determinant taken separately.
pub fn adjugate_cofactor(m: &CMat) -> CMat {
    let n = m.nrows();
    if n == 1 {
        return CMat::from_element(1, 1, c(1.0, 0.0));
    }
    let mut adj = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let rows: Vec<usize> = (0..n).filter(|&r| r != j).collect();
            let cols: Vec<usize> = (0..n).filter(|&k| k != i).collect();
            let minor = submatrix(m, &rows, &cols);
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(i, j)] = determinant(&minor) * sign;
        }
    }
    adj
}

/// Random complex matrix with entries uniform in the unit disk.
pub fn random_disk_matrix<R: Rng>(rng: &mut R, n: usize) -> CMat {
    CMat::from_fn(n, n, |_, _| loop {
        let z = c(2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0);
        if z.norm() <= 1.0 {
            break z;
        }
    })
}

/// Random Hermitian matrix with entries of modulus at most `scale`.
pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize, scale: f64) -> CMat {
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = c(scale * (2.0 * rng.random::<f64>() - 1.0), 0.0);
        for j in (i + 1)..n {
            let z = c(2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0) * (scale / 2f64.sqrt());
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}
