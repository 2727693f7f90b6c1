//! Online adaptation from a meta-initialization.

use crate::error::{Error, Result};
use crate::meta::inner_adapt;
use crate::model::{gamma_envelopes, BlockTrajectory, NoiseConfig, SystemParams};
use crate::numerics::{checked_svd, default_rcond, pinv, spectral_norm, Mat, Vector};

/// Norm whose ball the parameter iterates are projected onto.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ProjectionNorm {
    /// Radial scaling onto the Frobenius ball.
    #[default]
    Frobenius,
    /// Singular values clipped at the radius.
    Spectral,
}

/// Knobs of the projected stochastic-approximation recursion.
///
/// Radii may be `f64::INFINITY` to disable the corresponding projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptConfig {
    pub alpha: f64,
    pub steps: usize,
    pub c_phi: f64,
    pub c_z: f64,
    pub phi_norm: ProjectionNorm,
}

impl AdaptConfig {
    pub fn new(alpha: f64, steps: usize, c_phi: f64, c_z: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Contract(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if !(c_phi > 0.0) || !(c_z > 0.0) {
            return Err(Error::Contract(format!(
                "projection radii must be > 0, got C_phi = {c_phi}, C_z = {c_z}"
            )));
        }
        Ok(Self {
            alpha,
            steps,
            c_phi,
            c_z,
            phi_norm: ProjectionNorm::Frobenius,
        })
    }

    /// No projections at all.
    pub fn unprojected(alpha: f64, steps: usize) -> Result<Self> {
        Self::new(alpha, steps, f64::INFINITY, f64::INFINITY)
    }

    pub fn with_phi_norm(mut self, norm: ProjectionNorm) -> Self {
        self.phi_norm = norm;
        self
    }
}

/// Iterates and projection statistics of one adaptation run.
#[derive(Clone, Debug)]
pub struct AdaptTrace {
    /// `steps + 1` iterates, starting with the initialization.
    pub iterates: Vec<Mat>,
    pub grad_norms: Vec<f64>,
    pub z_projections: usize,
    pub phi_projections: usize,
}

impl AdaptTrace {
    pub fn last(&self) -> &Mat {
        self.iterates.last().expect("trace holds the initial point")
    }
}

// Points within rounding of the sphere count as inside, which keeps both
// projections exactly idempotent.
const ON_SPHERE: f64 = 1.0 + 4.0 * f64::EPSILON;

/// Frobenius-ball projection `phi * min(1, C / ||phi||_F)`.
pub fn project_phi(phi: &Mat, c_phi: f64) -> Mat {
    let norm = phi.norm();
    if norm <= c_phi * ON_SPHERE {
        phi.clone()
    } else {
        phi * (c_phi / norm)
    }
}

/// Spectral-ball projection: singular values above `c_phi` are clipped.
pub fn project_phi_spectral(phi: &Mat, c_phi: f64) -> Result<Mat> {
    if spectral_norm(phi) <= c_phi * ON_SPHERE {
        return Ok(phi.clone());
    }
    let mut svd = checked_svd(phi)?;
    svd.singular_values.apply(|s| *s = s.min(c_phi));
    svd.recompose().map_err(|e| Error::Contract(e.to_string()))
}

/// Euclidean-ball projection of a regressor.
pub fn project_z(z: &Vector, c_z: f64) -> Vector {
    let norm = z.norm();
    if norm <= c_z * ON_SPHERE {
        z.clone()
    } else {
        z * (c_z / norm)
    }
}

/// Single inner step on the first `steps` transitions of the block, the same
/// computation as the offline inner adaptation.
pub fn one_shot_adapt(phi_star: &Mat, block: &BlockTrajectory, steps: usize, alpha: f64) -> Mat {
    inner_adapt(phi_star, &block.z_columns(0, steps), &block.next_states(0, steps), alpha)
}

/// Projected recursion over the first `cfg.steps` transitions of `traj`:
/// `g_t = z z^T phi - z x_{t+1}^T` with `z` the projected regressor, followed
/// by `phi <- proj(phi - alpha g_t)`.
pub fn lsa_adapt(phi_init: &Mat, traj: &BlockTrajectory, cfg: &AdaptConfig) -> Result<AdaptTrace> {
    if traj.horizon() < cfg.steps {
        return Err(Error::Contract(format!(
            "trajectory has {} transitions, {} steps requested",
            traj.horizon(),
            cfg.steps
        )));
    }
    let dim = traj.n() + traj.m();
    if phi_init.shape() != (dim, traj.n()) {
        return Err(Error::Dimension(format!(
            "phi is {}x{}, expected {dim}x{}",
            phi_init.nrows(),
            phi_init.ncols(),
            traj.n()
        )));
    }
    let mut iterates = Vec::with_capacity(cfg.steps + 1);
    let mut grad_norms = Vec::with_capacity(cfg.steps);
    let mut z_projections = 0;
    let mut phi_projections = 0;
    let mut phi = phi_init.clone();
    iterates.push(phi.clone());
    for t in 0..cfg.steps {
        let z = traj.z(t);
        let zt = project_z(&z, cfg.c_z);
        if zt != z {
            z_projections += 1;
        }
        let zm = Mat::from_column_slice(dim, 1, zt.as_slice());
        let x_next = traj.states.column(t + 1).transpose();
        let g = &zm * (zm.transpose() * &phi - x_next);
        grad_norms.push(g.norm());
        let step = &phi - g * cfg.alpha;
        let projected = match cfg.phi_norm {
            ProjectionNorm::Frobenius => project_phi(&step, cfg.c_phi),
            ProjectionNorm::Spectral => project_phi_spectral(&step, cfg.c_phi)?,
        };
        if projected != step {
            phi_projections += 1;
        }
        phi = projected;
        iterates.push(phi.clone());
    }
    Ok(AdaptTrace {
        iterates,
        grad_norms,
        z_projections,
        phi_projections,
    })
}

/// Default projection radii for a task set: `C_z = 10 sqrt(max_d Tr Gamma_t)`
/// at `t = horizon` and `C_phi = 2 max_d ||phi_d||_F`.
pub fn default_radii(tasks: &[SystemParams], noise: NoiseConfig, horizon: usize) -> Result<(f64, f64)> {
    if tasks.is_empty() {
        return Err(Error::Contract("default radii need at least one task".into()));
    }
    let env = gamma_envelopes(tasks, horizon, noise)?;
    let c_phi = 2.0 * tasks.iter().map(|t| t.phi().norm()).fold(0.0, f64::max);
    Ok((c_phi.max(f64::MIN_POSITIVE), 10.0 * env.max_trace.sqrt().max(f64::MIN_POSITIVE)))
}

/// Least-squares fit `(Z^T)^+ X^T`, minimum-norm when underdetermined.
pub fn lse_fit(z: &Mat, x_next: &Mat, rcond: Option<f64>) -> Result<Mat> {
    if z.ncols() == 0 || z.ncols() != x_next.ncols() {
        return Err(Error::Dimension(format!(
            "need matching non-zero column counts, got {} and {}",
            z.ncols(),
            x_next.ncols()
        )));
    }
    let zt = z.transpose();
    let rcond = rcond.unwrap_or_else(|| default_rcond(zt.nrows(), zt.ncols()));
    Ok(pinv(&zt, rcond)? * x_next.transpose())
}

/// Matrix norm used to report estimation errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GapNorm {
    #[default]
    Spectral,
    Frobenius,
}

pub fn estimation_gap(phi_hat: &Mat, phi_true: &Mat, norm: GapNorm) -> f64 {
    let diff = phi_hat - phi_true;
    match norm {
        GapNorm::Spectral => spectral_norm(&diff),
        GapNorm::Frobenius => diff.norm(),
    }
}
