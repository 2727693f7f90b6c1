//! Certainty-equivalent LQR synthesis and Monte-Carlo closed-loop cost.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{simulate_closed_loop, SystemParams};
use crate::numerics::{lqr_gain_from, min_eig_sym, solve_dare, spectral_radius, Mat, Vector};
use crate::rng::RngStream;

/// Quadratic stage cost `x^T S x + u^T R u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrWeights {
    s: Mat,
    r: Mat,
}

impl LqrWeights {
    pub fn new(s: Mat, r: Mat) -> Result<Self> {
        for (name, w) in [("S", &s), ("R", &r)] {
            if !w.is_square() {
                return Err(Error::Dimension(format!("{name} must be square, got {}x{}", w.nrows(), w.ncols())));
            }
            if (w - w.transpose()).amax() > 1e-12 * (1.0 + w.amax()) {
                return Err(Error::Contract(format!("{name} must be symmetric")));
            }
            if w.nrows() > 0 && !(min_eig_sym(w)? > 0.0) {
                return Err(Error::Contract(format!("{name} must be positive definite")));
            }
        }
        Ok(Self { s, r })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            s: Mat::identity(n, n),
            r: Mat::identity(m, m),
        }
    }

    pub fn s(&self) -> &Mat {
        &self.s
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    pub fn stage_cost(&self, x: &Vector, u: &Vector) -> f64 {
        x.dot(&(&self.s * x)) + u.dot(&(&self.r * u))
    }

    fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        if self.s.nrows() != n || self.r.nrows() != m {
            return Err(Error::Dimension(format!(
                "weights are S {0}x{0}, R {1}x{1}; model has n = {n}, m = {m}",
                self.s.nrows(),
                self.r.nrows()
            )));
        }
        Ok(())
    }
}

/// LQR gain designed for an estimated model as if it were exact.
pub fn cec_gain(a_hat: &Mat, b_hat: &Mat, weights: &LqrWeights) -> Result<Mat> {
    weights.check_dims(a_hat.nrows(), b_hat.ncols())?;
    let p = solve_dare(a_hat, b_hat, &weights.s, &weights.r)?;
    lqr_gain_from(a_hat, b_hat, &weights.r, &p)
}

/// Spectral radius of `A + B K` and whether it is below one.
pub fn is_stabilizing(a: &Mat, b: &Mat, k: &Mat) -> Result<(f64, bool)> {
    if k.shape() != (b.ncols(), a.nrows()) {
        return Err(Error::Dimension(format!(
            "K must be {}x{}, got {}x{}",
            b.ncols(),
            a.nrows(),
            k.nrows(),
            k.ncols()
        )));
    }
    let radius = spectral_radius(&(a + b * k))?;
    Ok((radius, radius < 1.0))
}

/// Average per-stage cost of `u = K x` over `trials` runs of length `horizon`
/// started at the origin.
pub fn lqr_cost_empirical(
    params: &SystemParams,
    k: &Mat,
    weights: &LqrWeights,
    horizon: usize,
    sigma_w2: f64,
    trials: usize,
    rng: &RngStream,
) -> Result<f64> {
    weights.check_dims(params.n(), params.m())?;
    if horizon == 0 || trials == 0 {
        return Err(Error::Contract("horizon and trials must be positive".into()));
    }
    let (radius, stable) = is_stabilizing(params.a(), params.b(), k)?;
    if !stable {
        return Err(Error::Unstable { radius });
    }
    let x0 = Vector::zeros(params.n());
    let costs = (0..trials)
        .into_par_iter()
        .map(|i| {
            let traj = simulate_closed_loop(params, k, horizon, sigma_w2, &x0, &mut rng.child(i as u64))?;
            let total: f64 = (0..horizon)
                .map(|t| {
                    let x = traj.states.column(t).into_owned();
                    let u = traj.inputs.column(t).into_owned();
                    weights.stage_cost(&x, &u)
                })
                .sum();
            Ok(total / horizon as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(costs.iter().sum::<f64>() / trials as f64)
}
