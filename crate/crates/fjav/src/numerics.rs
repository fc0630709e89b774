//! Dense linear-algebra kernel.
//!
//! Everything downstream (resolvents, steady-state covariances, Gramians) reduces to
//! the four operations in this module: linear solves with a conditioning guard,
//! discrete Lyapunov (Stein) equations, symmetric eigendecompositions, and spectral
//! radii. Matrices are dense `f64`; sizes are desk scale (N up to a few hundred).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Condition-number guard for [`solve_linear`]. Systems estimated worse than this
/// are rejected instead of returning silently inaccurate solutions.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative residual accepted from a linear solve, after at most one step of
/// iterative refinement.
const SOLVE_RESIDUAL_TOL: f64 = 1e-9;

/// Relative residual accepted from the Lyapunov solver.
const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-9;

/// Max-abs-entry norm. Used for all residual checks in this crate.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, &v| acc.max(v.abs()))
}

/// Induced infinity norm (max absolute row sum).
pub fn norm_inf(m: &Matrix) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Induced 1-norm (max absolute column sum).
fn norm_1(m: &Matrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = 1.0 + max_abs(m);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} contains NaN/Inf entries")))
    }
}

/// LU factorization bundled with the pieces needed for transpose solves.
struct LuFactors {
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    l: Matrix,
    u: Matrix,
}

impl LuFactors {
    fn new(a: &Matrix) -> Result<Self> {
        let lu = a.clone().lu();
        // Partial pivoting: a vanishing pivot relative to the matrix scale means
        // the matrix is singular to working precision.
        let scale = max_abs(a);
        let n = a.nrows();
        let u = lu.u();
        for i in 0..n {
            if u[(i, i)].abs() <= f64::EPSILON * scale * n as f64 {
                return Err(Error::Singular(format!(
                    "zero pivot at position {i} (|u_ii| = {:.3e})",
                    u[(i, i)].abs()
                )));
            }
        }
        let l = lu.l();
        Ok(Self { lu, l, u })
    }

    fn solve_vec(&self, b: &Vector) -> Result<Vector> {
        self.lu
            .solve(b)
            .ok_or_else(|| Error::Singular("LU solve failed".into()))
    }

    /// Solves `Aᵀ x = b` reusing the factors of `A = P⁻¹ L U`.
    fn solve_transpose_vec(&self, b: &Vector) -> Result<Vector> {
        // Aᵀ = Uᵀ Lᵀ P, hence Uᵀ z = b, Lᵀ w = z, x = P⁻¹ w.
        let z = self
            .u
            .tr_solve_upper_triangular(b)
            .ok_or_else(|| Error::Singular("transpose solve failed".into()))?;
        let mut w = self
            .l
            .tr_solve_lower_triangular(&z)
            .ok_or_else(|| Error::Singular("transpose solve failed".into()))?;
        self.lu.p().inv_permute_rows(&mut w);
        Ok(w)
    }

    /// Hager's 1-norm estimator for `‖A⁻¹‖₁`. A handful of O(n²) solves; the
    /// estimate is within a small factor of the truth, which is all the
    /// condition guard needs.
    fn inv_norm1_estimate(&self, n: usize) -> Result<f64> {
        let mut x = Vector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve_vec(&x)?;
            est = y.iter().map(|v| v.abs()).sum();
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose_vec(&xi)?;
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty");
            if zmax <= z.dot(&x) {
                break;
            }
            x = Vector::zeros(n);
            x[jmax] = 1.0;
        }
        Ok(est)
    }
}

/// Solves `A X = B` for square nonsingular `A`.
///
/// Rejects systems whose estimated condition number exceeds [`CONDITION_LIMIT`]
/// and guarantees `‖A X − B‖_max ≤ 1e-9 ‖B‖_max` on success (one step of
/// iterative refinement is applied if plain LU falls short).
pub fn solve_linear(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput(format!(
            "solve_linear: A must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() != b.nrows() {
        return Err(Error::InvalidInput(format!(
            "solve_linear: dimension mismatch A {}x{} vs B {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    check_finite(a, "A")?;
    check_finite(b, "B")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, b.ncols()));
    }

    let factors = LuFactors::new(a)?;
    let cond = norm_1(a) * factors.inv_norm1_estimate(n)?;
    if cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned {
            est: cond,
            limit: CONDITION_LIMIT,
        });
    }

    let mut x = factors
        .lu
        .solve(b)
        .ok_or_else(|| Error::Singular("LU solve failed".into()))?;

    let b_scale = max_abs(b).max(f64::MIN_POSITIVE);
    let mut residual = b - a * &x;
    if max_abs(&residual) > SOLVE_RESIDUAL_TOL * b_scale {
        // One step of iterative refinement.
        let correction = factors
            .lu
            .solve(&residual)
            .ok_or_else(|| Error::Singular("LU solve failed".into()))?;
        x += correction;
        residual = b - a * &x;
        if max_abs(&residual) > SOLVE_RESIDUAL_TOL * b_scale {
            return Err(Error::Numerical(format!(
                "linear solve residual {:.3e} exceeds {:.1e} (relative)",
                max_abs(&residual) / b_scale,
                SOLVE_RESIDUAL_TOL
            )));
        }
    }
    check_finite(&x, "solution")?;
    Ok(x)
}

/// Certifies `ρ(A) < 1`, preferring cheap norm bounds over an eigensolve.
fn check_schur_stable(a: &Matrix) -> Result<()> {
    if norm_inf(a) < 1.0 || norm_1(a) < 1.0 || a.norm() < 1.0 {
        return Ok(());
    }
    let rho = spectral_radius(a)?;
    if rho < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "discrete Lyapunov equation requires ρ(A) < 1, got ρ = {rho:.6}"
        )))
    }
}

/// Solves the discrete Lyapunov (Stein) equation `P = A P Aᵀ + S` for Schur-stable
/// `A` and symmetric PSD `S`.
///
/// Symmetric `A` is solved exactly through its eigendecomposition
/// (`P̂_ij = Ŝ_ij / (1 − μ_i μ_j)` in the eigenbasis); general `A` uses the
/// doubling (squared Smith) iteration `P ← P + Aₖ P Aₖᵀ`, `Aₖ ← Aₖ²`, which covers
/// 2^k series terms after k steps and converges quadratically. Either way the
/// residual is verified against `1e-9 ‖S‖_max`.
pub fn solve_discrete_lyapunov(a: &Matrix, s: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n || s.nrows() != n || s.ncols() != n {
        return Err(Error::InvalidInput(
            "solve_discrete_lyapunov: A and S must be square with matching size".into(),
        ));
    }
    check_finite(a, "A")?;
    check_finite(s, "S")?;
    if !is_symmetric(s, 1e-9) {
        return Err(Error::InvalidInput(
            "solve_discrete_lyapunov: S must be symmetric".into(),
        ));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    check_schur_stable(a)?;

    let s_scale = max_abs(s);
    if s_scale == 0.0 {
        return Ok(Matrix::zeros(n, n));
    }

    let mut p = if is_symmetric(a, 1e-12) {
        lyapunov_symmetric(a, s)?
    } else {
        lyapunov_doubling(a, s)?
    };

    // Symmetrize away accumulated rounding asymmetry.
    p = (&p + p.transpose()) * 0.5;
    let residual = &p - a * &p * a.transpose() - s;
    if max_abs(&residual) > LYAPUNOV_RESIDUAL_TOL * s_scale {
        return Err(Error::Numerical(format!(
            "Lyapunov residual {:.3e} exceeds {:.1e} (relative to ‖S‖)",
            max_abs(&residual) / s_scale,
            LYAPUNOV_RESIDUAL_TOL
        )));
    }
    Ok(p)
}

fn lyapunov_symmetric(a: &Matrix, s: &Matrix) -> Result<Matrix> {
    let (mu, x) = eig_sym(a)?;
    let s_hat = x.transpose() * s * &x;
    let n = a.nrows();
    let p_hat = Matrix::from_fn(n, n, |i, j| s_hat[(i, j)] / (1.0 - mu[i] * mu[j]));
    Ok(&x * p_hat * x.transpose())
}

fn lyapunov_doubling(a: &Matrix, s: &Matrix) -> Result<Matrix> {
    let mut p = s.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let term = &ak * &p * ak.transpose();
        p += &term;
        ak = &ak * &ak;
        if max_abs(&term) <= 1e-16 * max_abs(&p) && norm_inf(&ak) < 1.0 {
            return Ok(p);
        }
    }
    Err(Error::NotConverged(
        "discrete Lyapunov doubling iteration exhausted its budget".into(),
    ))
}

/// Direct Kronecker-vectorization Lyapunov solve: `(I − A⊗A) vec(P) = vec(S)`.
///
/// Exact up to one dense solve, but O(n⁶); intended for small systems and as an
/// independent route to cross-check [`solve_discrete_lyapunov`].
pub fn solve_discrete_lyapunov_kron(a: &Matrix, s: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n || s.nrows() != n || s.ncols() != n {
        return Err(Error::InvalidInput(
            "solve_discrete_lyapunov_kron: dimension mismatch".into(),
        ));
    }
    if n > 64 {
        return Err(Error::InvalidInput(
            "solve_discrete_lyapunov_kron: vectorized solve limited to n ≤ 64".into(),
        ));
    }
    check_schur_stable(a)?;
    let lhs = Matrix::identity(n * n, n * n) - a.kronecker(a);
    let vec_s = Matrix::from_column_slice(n * n, 1, s.as_slice());
    let vec_p = solve_linear(&lhs, &vec_s)?;
    let p = Matrix::from_column_slice(n, n, vec_p.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Symmetric eigendecomposition `A = V diag(λ) Vᵀ` with eigenvalues sorted
/// ascending and orthonormal columns in `V`.
pub fn eig_sym(a: &Matrix) -> Result<(Vector, Matrix)> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput("eig_sym: matrix must be square".into()));
    }
    check_finite(a, "A")?;
    if !is_symmetric(a, 1e-9) {
        return Err(Error::InvalidInput("eig_sym: matrix is not symmetric".into()));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok((Vector::zeros(0), Matrix::zeros(0, 0)));
    }
    let decomp = nalgebra::SymmetricEigen::new((a + a.transpose()) * 0.5);
    let mut order: std::vec::Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| decomp.eigenvalues[i].total_cmp(&decomp.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| decomp.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &decomp.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Spectral radius of a square matrix (largest eigenvalue modulus).
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput(
            "spectral_radius: matrix must be square".into(),
        ));
    }
    check_finite(a, "A")?;
    if a.nrows() == 0 || max_abs(a) == 0.0 {
        return Ok(0.0);
    }
    let schur = nalgebra::Schur::try_new(a.clone(), 1e-12, 100_000)
        .ok_or_else(|| Error::NotConverged("Schur iteration for spectral radius".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max))
}

/// Symmetric PSD square root via eigendecomposition; tiny negative eigenvalues
/// (down to `-psd_tol · λ_max`) are clamped to zero, anything lower is an error.
pub fn sym_psd_sqrt(a: &Matrix, psd_tol: f64) -> Result<Matrix> {
    let (values, vectors) = eig_sym(a)?;
    let lam_max = values.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    let floor = -psd_tol * lam_max.max(1.0);
    let mut sqrt_vals = values.clone();
    for v in sqrt_vals.iter_mut() {
        if *v < floor {
            return Err(Error::InvalidInput(format!(
                "matrix is not positive semidefinite (eigenvalue {v:.3e})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&vectors * Matrix::from_diagonal(&sqrt_vals) * vectors.transpose())
}
