//! Dense linear-algebra primitives: pseudo-inverse, symmetric eigenvalues,
//! spectral radius and norm, discrete Lyapunov and Riccati solvers, and the
//! resolvent H-infinity norm on the unit circle.
//!
//! Everything operates on `nalgebra::DMatrix<f64>`. All functions are pure.

use nalgebra::{DMatrix, DVector, Dyn, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Mat = DMatrix<f64>;
/// Dense real column vector.
pub type Vector = DVector<f64>;

const SVD_MAX_ITER: usize = 10_000;
const EIG_MAX_ITER: usize = 10_000;
const SYMMETRY_TOL: f64 = 1e-10;

/// Largest dimension handled by the Kronecker-form Lyapunov solve.
pub const DLYAP_DIRECT_MAX_DIM: usize = 10;
/// Iteration cap of the Riccati value iteration.
pub const DARE_MAX_ITER: usize = 100_000;
/// Relative residual at which the Riccati value iteration stops.
pub const DARE_TOL: f64 = 1e-12;
/// Default number of unit-circle samples for [`hinf_resolvent_norm`].
pub const HINF_DEFAULT_GRID: usize = 1024;

/// Standard SVD cutoff `max(rows, cols) * eps`.
pub fn default_rcond(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

pub(crate) fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Contract(format!("{what} contains non-finite entries")))
    }
}

fn ensure_square(m: &Mat, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Thin SVD whose factors reproduce `m` to rounding level.
///
/// With a convergence threshold of machine epsilon, nalgebra can return
/// factors that do not reconstruct rank-deficient inputs, so the threshold
/// starts slightly looser and the reconstruction is checked.
pub fn checked_svd(m: &Mat) -> Result<SVD<f64, Dyn, Dyn>> {
    let (rows, cols) = m.shape();
    for eps in [1e-15, 1e-14, 1e-13, 1e-12] {
        let Some(svd) = m.clone().try_svd(true, true, eps, SVD_MAX_ITER) else {
            continue;
        };
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let mut err = 0.0f64;
        for j in 0..cols {
            let col = u * v_t.column(j).component_mul(&svd.singular_values);
            err = err.max((col - m.column(j)).amax());
        }
        if err <= 1e-12 * (1.0 + svd.singular_values.max()) {
            return Ok(svd);
        }
    }
    Err(Error::Numerical { op: "svd", rows, cols })
}

/// Moore-Penrose pseudo-inverse through the SVD.
///
/// Singular values `s <= rcond * s_max` are treated as zero, so rank-deficient
/// inputs yield the minimum-norm least-squares operator.
pub fn pinv(m: &Mat, rcond: f64) -> Result<Mat> {
    ensure_finite(m, "pinv input")?;
    if !(rcond >= 0.0) {
        return Err(Error::Contract(format!("rcond must be >= 0, got {rcond}")));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Mat::zeros(cols, rows));
    }
    let svd = checked_svd(m)?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.max();
    let cutoff = rcond * s_max;

    let mut out = Mat::zeros(cols, rows);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_i u_i^T / s_i
            let vi = v_t.row(i).transpose();
            let ui = u.column(i);
            out.ger(1.0 / s, &vi, &ui, 1.0);
        }
    }
    Ok(out)
}

fn check_symmetric(s: &Mat) -> Result<()> {
    ensure_square(s, "symmetric matrix")?;
    ensure_finite(s, "symmetric matrix")?;
    let scale = s.amax().max(1.0);
    let asym = (s - s.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Contract(format!(
            "matrix is not symmetric (max |S - S^T| = {asym:e})"
        )));
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(s: &Mat) -> Result<Vector> {
    check_symmetric(s)?;
    let n = s.nrows();
    if n == 0 {
        return Ok(Vector::zeros(0));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIG_MAX_ITER).ok_or(Error::Numerical {
        op: "symmetric eigen",
        rows: n,
        cols: n,
    })?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok(Vector::from_vec(vals))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_sym(s: &Mat) -> Result<f64> {
    let vals = sym_eigenvalues(s)?;
    vals.iter()
        .copied()
        .next()
        .ok_or_else(|| Error::Dimension("empty matrix has no eigenvalues".into()))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eig_sym(s: &Mat) -> Result<f64> {
    let vals = sym_eigenvalues(s)?;
    vals.iter()
        .copied()
        .last()
        .ok_or_else(|| Error::Dimension("empty matrix has no eigenvalues".into()))
}

/// Symmetric positive semidefinite square root via the eigen-decomposition.
pub(crate) fn sym_sqrt(s: &Mat) -> Result<Mat> {
    check_symmetric(s)?;
    let n = s.nrows();
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIG_MAX_ITER).ok_or(Error::Numerical {
        op: "symmetric eigen",
        rows: n,
        cols: n,
    })?;
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    Ok(q * Mat::from_diagonal(&sqrt_vals) * q.transpose())
}

/// Eigenvalues (complex) of a real square matrix.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    ensure_square(a, "eigenvalue input")?;
    ensure_finite(a, "eigenvalue input")?;
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), f64::EPSILON, EIG_MAX_ITER).ok_or(Error::Numerical {
        op: "schur",
        rows: n,
        cols: n,
    })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Maximum eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Largest singular value (operator 2-norm).
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    checked_svd(m).map(|svd| svd.singular_values.max()).unwrap_or_else(|_| {
        // Frobenius is always an upper bound; only reached on SVD failure.
        m.norm()
    })
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
///
/// Deterministic start vector (all ones, perturbed) so results are reproducible.
pub fn power_iteration(s: &Mat, max_iter: usize, tol: f64) -> f64 {
    let n = s.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Vector::from_fn(n, |i, _| 1.0 + 0.01 * i as f64);
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = s * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs().max(1e-300) {
            return next;
        }
        lambda = next;
    }
    lambda
}

fn ensure_stable(a: &Mat) -> Result<f64> {
    let radius = spectral_radius(a)?;
    if radius >= 1.0 {
        return Err(Error::Unstable { radius });
    }
    Ok(radius)
}

/// Residual matrix `A P A^T - P + Q`.
pub fn dlyap_residual(a: &Mat, p: &Mat, q: &Mat) -> Mat {
    a * p * a.transpose() - p + q
}

/// Solves the discrete Lyapunov equation `A P A^T - P + Q = 0`.
///
/// Requires `spectral_radius(A) < 1`. Dimensions up to
/// [`DLYAP_DIRECT_MAX_DIM`] use the Kronecker-form linear system; larger ones
/// fall back to the doubling form of the series `sum_i A^i Q (A^i)^T`.
pub fn solve_dlyap(a: &Mat, q: &Mat) -> Result<Mat> {
    ensure_square(a, "A")?;
    ensure_square(q, "Q")?;
    if a.nrows() != q.nrows() {
        return Err(Error::Dimension(format!(
            "A is {}x{} but Q is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    ensure_finite(q, "Q")?;
    ensure_stable(a)?;
    let n = a.nrows();
    let p = if n <= DLYAP_DIRECT_MAX_DIM {
        dlyap_kronecker(a, q)?
    } else {
        dlyap_doubling(a, q)
    };
    Ok((&p + p.transpose()) * 0.5)
}

fn dlyap_kronecker(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    // Column-major vec: vec(A P A^T) = (A kron A) vec(P).
    let lhs = Mat::identity(n * n, n * n) - a.kronecker(a);
    let rhs = Vector::from_column_slice(q.as_slice());
    let sol = lhs.lu().solve(&rhs).ok_or(Error::Numerical {
        op: "lyapunov kronecker solve",
        rows: n * n,
        cols: n * n,
    })?;
    Ok(Mat::from_column_slice(n, n, sol.as_slice()))
}

fn dlyap_doubling(a: &Mat, q: &Mat) -> Mat {
    // P_{k+1} = P_k + A_k P_k A_k^T, A_{k+1} = A_k^2 sums 2^k series terms per step.
    let mut p = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let inc = &ak * &p * ak.transpose();
        p += &inc;
        ak = &ak * &ak;
        if inc.amax() <= f64::EPSILON * p.amax() {
            break;
        }
    }
    p
}

/// One Riccati value-iteration step `A^T P A - A^T P B (R + B^T P B)^-1 B^T P A + S`.
pub fn riccati_map(a: &Mat, b: &Mat, s: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let at = a.transpose();
    let bt = b.transpose();
    let gram = r + &bt * p * b;
    let gain_rhs = &bt * p * a;
    let solved = gram.clone().cholesky().map(|c| c.solve(&gain_rhs)).or_else(|| {
        gram.clone().lu().solve(&gain_rhs)
    });
    let solved = solved.ok_or(Error::Numerical {
        op: "riccati gain solve",
        rows: gram.nrows(),
        cols: gram.ncols(),
    })?;
    Ok(&at * p * a - &at * p * b * solved + s)
}

/// Frobenius norm of the DARE fixed-point residual.
pub fn dare_residual(a: &Mat, b: &Mat, s: &Mat, r: &Mat, p: &Mat) -> Result<f64> {
    Ok((riccati_map(a, b, s, r, p)? - p).norm())
}

/// Solves the discrete algebraic Riccati equation by value iteration from
/// `P0 = S`.
///
/// Stops when the fixed-point residual drops below `DARE_TOL * (1 + ||P||)`.
/// Stabilizability is checked afterwards through the closed loop
/// `A + B K`, `K = -(R + B^T P B)^-1 B^T P A`.
pub fn solve_dare(a: &Mat, b: &Mat, s: &Mat, r: &Mat) -> Result<Mat> {
    ensure_square(a, "A")?;
    let n = a.nrows();
    if b.nrows() != n || s.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::Dimension(format!(
            "DARE shapes: A {}x{}, B {}x{}, S {}x{}, R {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            s.nrows(),
            s.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    for (m, name) in [(a, "A"), (b, "B"), (s, "S"), (r, "R")] {
        ensure_finite(m, name)?;
    }
    if min_eig_sym(s)? <= 0.0 {
        return Err(Error::Contract("S must be positive definite".into()));
    }
    if b.ncols() > 0 && min_eig_sym(r)? <= 0.0 {
        return Err(Error::Contract("R must be positive definite".into()));
    }

    let mut p = s.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..DARE_MAX_ITER {
        let next = riccati_map(a, b, s, r, &p)?;
        let next = (&next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonConvergence {
                solver: "DARE value iteration",
                iterations: DARE_MAX_ITER,
                residual,
            });
        }
        residual = (&next - &p).norm();
        p = next;
        if residual <= DARE_TOL * (1.0 + p.norm()) {
            let k = lqr_gain_from(a, b, r, &p)?;
            let radius = spectral_radius(&(a + b * &k))?;
            if radius >= 1.0 {
                return Err(Error::Unstable { radius });
            }
            return Ok(polish_dare(a, b, s, r, p));
        }
    }
    Err(Error::NonConvergence {
        solver: "DARE value iteration",
        iterations: DARE_MAX_ITER,
        residual,
    })
}

/// A few policy-evaluation (Newton) steps from a converged value-iteration
/// solution; keeps whichever iterate has the smallest fixed-point residual.
fn polish_dare(a: &Mat, b: &Mat, s: &Mat, r: &Mat, p: Mat) -> Mat {
    let residual = |p: &Mat| dare_residual(a, b, s, r, p).unwrap_or(f64::INFINITY);
    let mut best_res = residual(&p);
    let mut best = p;
    for _ in 0..4 {
        let Ok(k) = lqr_gain_from(a, b, r, &best) else { break };
        let closed = a + b * &k;
        let Ok(next) = solve_dlyap(&closed.transpose(), &(s + k.transpose() * r * &k)) else { break };
        let next = (&next + next.transpose()) * 0.5;
        let res = residual(&next);
        if !(res < best_res) {
            break;
        }
        best_res = res;
        best = next;
    }
    best
}

/// `K = -(R + B^T P B)^-1 B^T P A`.
pub(crate) fn lqr_gain_from(a: &Mat, b: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let bt = b.transpose();
    let gram = r + &bt * p * b;
    let rhs = &bt * p * a;
    let sol = gram.clone().lu().solve(&rhs).ok_or(Error::Numerical {
        op: "lqr gain solve",
        rows: gram.nrows(),
        cols: gram.ncols(),
    })?;
    Ok(-sol)
}

/// Grid approximation of `sup_{|s|=1} sigma_max((sI - A)^-1)`.
///
/// Evaluates `1 / sigma_min(e^{i theta} I - A)` on `grid_points` equispaced
/// angles starting at `theta = 0`. The result is a lower bound on the true
/// supremum; doubling the grid can only increase it.
pub fn hinf_resolvent_norm(a: &Mat, grid_points: usize) -> Result<f64> {
    ensure_square(a, "A")?;
    if grid_points < 64 {
        return Err(Error::Contract(format!(
            "grid_points must be >= 64, got {grid_points}"
        )));
    }
    ensure_stable(a)?;
    let n = a.nrows();
    let ac = a.map(|v| Complex64::new(v, 0.0));
    let mut best = 0.0_f64;
    for k in 0..grid_points {
        let theta = std::f64::consts::TAU * k as f64 / grid_points as f64;
        let s = Complex64::from_polar(1.0, theta);
        let m = DMatrix::<Complex64>::identity(n, n) * s - &ac;
        let svd = m
            .try_svd(false, false, f64::EPSILON, SVD_MAX_ITER)
            .ok_or(Error::Numerical {
                op: "complex svd",
                rows: n,
                cols: n,
            })?;
        let s_min = svd.singular_values.min();
        best = best.max(1.0 / s_min);
    }
    Ok(best)
}
