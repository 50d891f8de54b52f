//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `ndarray` arrays of `Complex64` in standard (row-major)
//! layout. Decompositions that are not worth hand-rolling (general complex
//! eigensolver, SVD, Hermitian eigensolver, LU) are delegated to `faer`;
//! the matrix exponential is a Padé(13) scaling-and-squaring implementation.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{QmeError, Result};

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;
pub type CVector = Array1<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    Array2::from_diag_elem(n, ONE)
}

pub fn zeros(n: usize, m: usize) -> CMatrix {
    Array2::zeros((n, m))
}

/// Builds a matrix from real row-major rows.
pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Array2::from_shape_fn((n, m), |(i, j)| re(rows[i][j]))
}

pub fn diag(values: &[C64]) -> CMatrix {
    let mut m = zeros(values.len(), values.len());
    for (i, v) in values.iter().enumerate() {
        m[[i, i]] = *v;
    }
    m
}

/// Conjugate transpose.
pub fn dagger(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

pub fn conj(m: &CMatrix) -> CMatrix {
    m.mapv(|z| z.conj())
}

pub fn transpose(m: &CMatrix) -> CMatrix {
    m.t().to_owned()
}

/// Kronecker product: `(A⊗B)[i·p+k, j·q+l] = A[i,j]·B[k,l]` with `B` of shape `p×q`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) - b.dot(a)
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) + b.dot(a)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diag().iter().sum()
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vector_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Maximum absolute column sum.
pub fn one_norm(m: &CMatrix) -> f64 {
    m.columns()
        .into_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `‖m − m†‖_F`
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    frobenius_norm(&(m - &dagger(m)))
}

pub fn is_square(m: &CMatrix) -> bool {
    m.nrows() == m.ncols()
}

pub fn ensure_square(m: &CMatrix) -> Result<usize> {
    if is_square(m) {
        Ok(m.nrows())
    } else {
        Err(QmeError::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub(crate) fn to_faer(m: &CMatrix) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub(crate) fn from_faer(m: faer::MatRef<'_, C64>) -> CMatrix {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Solves `A X = B` by LU with partial pivoting.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    ensure_square(a)?;
    if a.nrows() != b.nrows() {
        return Err(QmeError::DimensionMismatch(format!(
            "solve: lhs is {}x{}, rhs has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let lu = to_faer(a).partial_piv_lu();
    let x = lu.solve(to_faer(b));
    let out = from_faer(x.as_ref());
    if !all_finite(&out) {
        return Err(QmeError::Decomposition("singular linear system".into()));
    }
    Ok(out)
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    solve(a, &identity(a.nrows()))
}

/// Eigendecomposition of a general complex matrix: `A R = R diag(λ)`.
pub fn eig(a: &CMatrix) -> Result<(Vec<C64>, CMatrix)> {
    ensure_square(a)?;
    let evd = to_faer(a)
        .eigen()
        .map_err(|e| QmeError::Decomposition(format!("eigen: {e:?}")))?;
    let values = (0..a.nrows()).map(|k| evd.S()[k]).collect();
    Ok((values, from_faer(evd.U())))
}

pub fn eigenvalues(a: &CMatrix) -> Result<Vec<C64>> {
    ensure_square(a)?;
    to_faer(a)
        .eigenvalues()
        .map_err(|e| QmeError::Decomposition(format!("eigenvalues: {e:?}")))
}

/// Hermitian eigendecomposition, eigenvalues ascending. Only the lower
/// triangle of `a` is read.
pub fn eigh(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    ensure_square(a)?;
    let evd = to_faer(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| QmeError::Decomposition(format!("self_adjoint_eigen: {e:?}")))?;
    let values = (0..a.nrows()).map(|k| evd.S()[k].re).collect();
    Ok((values, from_faer(evd.U())))
}

pub fn eigvalsh(a: &CMatrix) -> Result<Vec<f64>> {
    ensure_square(a)?;
    to_faer(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| QmeError::Decomposition(format!("self_adjoint_eigenvalues: {e:?}")))
}

/// Singular values (descending) and right singular vectors as columns of `V`,
/// so that `A = U diag(σ) V†`.
pub fn svd_right(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let svd = to_faer(a)
        .svd()
        .map_err(|e| QmeError::Decomposition(format!("svd: {e:?}")))?;
    let k = a.nrows().min(a.ncols());
    let s = (0..k).map(|i| svd.S()[i].re).collect();
    Ok((s, from_faer(svd.V())))
}

/// Largest singular value.
pub fn operator_norm(a: &CMatrix) -> Result<f64> {
    let s = to_faer(a)
        .singular_values()
        .map_err(|e| QmeError::Decomposition(format!("singular_values: {e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// Orthonormal basis (as columns) of `{v : ‖A v‖ ≤ rel_tol·‖A‖}`.
///
/// When `A` is identically zero the whole space is returned.
pub fn null_space(a: &CMatrix, rel_tol: f64) -> Result<CMatrix> {
    let n = a.ncols();
    let (s, v) = svd_right(a)?;
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(identity(n));
    }
    let threshold = rel_tol * smax;
    // Singular values beyond min(rows, cols) are implicitly zero.
    let rank = s.iter().filter(|&&x| x > threshold).count();
    let cols: Vec<usize> = (rank..n).collect();
    let mut out = zeros(n, cols.len());
    for (k, &j) in cols.iter().enumerate() {
        out.column_mut(k).assign(&v.column(j));
    }
    Ok(out)
}

// Padé(13) numerator coefficients, b_k = (26-k)! 13! / (26! (13-k)! k!) scaled by 26!/13!.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371_920_351_148_152;

/// Matrix exponential by scaling and squaring with a diagonal Padé(13)
/// approximant.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return zeros(0, 0);
    }
    if n == 1 {
        return Array2::from_elem((1, 1), a[[0, 0]].exp());
    }
    let norm = one_norm(a);
    if norm == 0.0 {
        return identity(n);
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.mapv(|z| z * 2f64.powi(-s));

    let b = &PADE13;
    let eye = identity(n);
    let a2 = scaled.dot(&scaled);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let inner_u = &a6 * re(b[13]) + &a4 * re(b[11]) + &a2 * re(b[9]);
    let u_poly = a6.dot(&inner_u) + &a6 * re(b[7]) + &a4 * re(b[5]) + &a2 * re(b[3]) + &eye * re(b[1]);
    let u = scaled.dot(&u_poly);

    let inner_v = &a6 * re(b[12]) + &a4 * re(b[10]) + &a2 * re(b[8]);
    let v = a6.dot(&inner_v) + &a6 * re(b[6]) + &a4 * re(b[4]) + &a2 * re(b[2]) + &eye * re(b[0]);

    let p = &v + &u;
    let q = &v - &u;
    // q is well conditioned for ‖scaled‖₁ ≤ θ13.
    let mut r = solve(&q, &p).expect("Padé denominator is nonsingular after scaling");
    for _ in 0..s {
        r = r.dot(&r);
    }
    r
}

/// Dense matrix power by repeated squaring.
pub fn matrix_power(a: &CMatrix, mut k: u64) -> CMatrix {
    let mut result = identity(a.nrows());
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = result.dot(&base);
        }
        k >>= 1;
        if k > 0 {
            base = base.dot(&base);
        }
    }
    result
}

/// Pauli matrices and ladder operators in the computational basis
/// `{|0⟩, |1⟩}` with `σ_z = diag(1, −1)`.
pub mod pauli {
    use super::*;

    pub fn sigma_x() -> CMatrix {
        from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    pub fn sigma_y() -> CMatrix {
        ndarray::array![[ZERO, -I], [I, ZERO]]
    }

    pub fn sigma_z() -> CMatrix {
        from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
    }

    /// `|i⟩⟨j|` in a `d`-dimensional space.
    pub fn ket_bra(d: usize, i: usize, j: usize) -> CMatrix {
        let mut m = zeros(d, d);
        m[[i, j]] = ONE;
        m
    }

    /// Truncated bosonic annihilation operator on `n_max + 1` Fock states.
    pub fn annihilation(n_max: usize) -> CMatrix {
        let d = n_max + 1;
        let mut a = zeros(d, d);
        for n in 1..d {
            a[[n - 1, n]] = re((n as f64).sqrt());
        }
        a
    }
}
