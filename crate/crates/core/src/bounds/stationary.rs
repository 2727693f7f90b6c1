use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::numerics::{hinf_resolvent_norm, min_eig_sym, solve_dlyap, spectral_radius, sym_sqrt, Mat};

/// Steady-state quantities of a block under state feedback.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryAnalysis {
    /// Solution of `(A+BK) P (A+BK)^T - P + I = 0`.
    pub p_inf: Mat,
    /// `[I; K] P_inf [I K^T]`.
    pub p_hat: Mat,
    /// Smallest eigenvalue of `p_hat` over the whole space; zero whenever `m >= 1`.
    pub min_eig_full: f64,
    /// Smallest Rayleigh quotient of `p_hat` on the range of `[I; K]`.
    pub min_eig_restricted: f64,
    /// Mixing constant `hinf(rho^-1 (A+BK)) / 2 * sqrt(trace(P_inf) + n / (1 - rho^2))`.
    pub c_m: f64,
    pub rho: f64,
    pub closed_loop_radius: f64,
}

pub fn stationary_analysis(params: &SystemParams, k: &Mat, rho: f64, grid: usize) -> Result<StationaryAnalysis> {
    let (n, m) = (params.n(), params.m());
    if k.shape() != (m, n) {
        return Err(Error::Dimension(format!(
            "K must be {m}x{n}, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    let acl = params.a() + params.b() * k;
    let radius = spectral_radius(&acl)?;
    if !(rho > radius && rho < 1.0) {
        return Err(Error::Contract(format!(
            "rho must lie in ({radius}, 1), got {rho}"
        )));
    }
    let p_inf = solve_dlyap(&acl, &Mat::identity(n, n))?;

    let mut lift = Mat::zeros(n + m, n);
    lift.view_mut((0, 0), (n, n)).fill_with_identity();
    lift.view_mut((n, 0), (m, n)).copy_from(k);
    let p_hat = &lift * &p_inf * lift.transpose();
    let p_hat = (&p_hat + p_hat.transpose()) * 0.5;
    // Rank deficiency shows up as a rounding-level eigenvalue; report it as zero.
    let mut min_eig_full = min_eig_sym(&p_hat)?;
    if min_eig_full.abs() <= 1e-12 * p_hat.norm() {
        min_eig_full = 0.0;
    }

    // On v = [I; K] y the quotient is y^T H P H y / y^T H y with H = I + K^T K,
    // whose minimum is lambda_min(H^1/2 P H^1/2).
    let h = lift.transpose() * &lift;
    let h_half = sym_sqrt(&h)?;
    let restricted = &h_half * &p_inf * &h_half;
    let min_eig_restricted = min_eig_sym(&((&restricted + restricted.transpose()) * 0.5))?;

    let hinf = hinf_resolvent_norm(&(&acl / rho), grid)?;
    let c_m = hinf / 2.0 * (p_inf.trace() + n as f64 / (1.0 - rho * rho)).sqrt();

    Ok(StationaryAnalysis {
        p_inf,
        p_hat,
        min_eig_full,
        min_eig_restricted,
        c_m,
        rho,
        closed_loop_radius: radius,
    })
}
