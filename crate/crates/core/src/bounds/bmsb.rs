//! Monte-Carlo check of the block small-ball condition.
//!
//! For a conditioning prefix `z_0..z_j` and a unit direction `u`, the checker
//! estimates `(1/k) sum_{i=1..k} P(|<u, z_{j+i}>| >= sqrt(u^T Gamma_{k/2} u))`
//! over fresh continuations, and reports the minimum over directions and
//! prefixes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{gamma, simulate_block, NoiseConfig, SystemParams};
use crate::numerics::{Mat, Vector};
use crate::rng::RngStream;

/// Sampling effort of [`empirical_bmsb`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BmsbSettings {
    pub k: usize,
    /// Time index `j` of the last conditioned regressor.
    pub window_start: usize,
    pub trials: usize,
    pub directions: usize,
    pub prefixes: usize,
}

impl Default for BmsbSettings {
    fn default() -> Self {
        Self {
            k: 2,
            window_start: 5,
            trials: 4000,
            directions: 32,
            prefixes: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BmsbEstimate {
    /// Smallest averaged probability over directions and prefixes.
    pub min_probability: f64,
    /// Direction attaining the minimum.
    pub worst_direction: Vector,
    /// Set when the envelope covariance vanishes and the condition is vacuous.
    pub degenerate: bool,
}

/// Directions used by the checker: coordinate axes first, then random unit vectors.
fn directions(dim: usize, count: usize, rng: &mut RngStream) -> Vec<Vector> {
    let mut out: Vec<Vector> = (0..dim).map(|i| Vector::from_fn(dim, |r, _| if r == i { 1.0 } else { 0.0 })).collect();
    while out.len() < count.max(dim) {
        out.push(rng.unit_vector(dim));
    }
    out
}

pub fn empirical_bmsb(
    params: &SystemParams,
    noise: NoiseConfig,
    settings: BmsbSettings,
    rng: &RngStream,
) -> Result<BmsbEstimate> {
    let BmsbSettings {
        k,
        window_start,
        trials,
        directions: n_dirs,
        prefixes,
    } = settings;
    if trials < 1000 {
        return Err(Error::Contract(format!("need at least 1000 trials, got {trials}")));
    }
    if k == 0 || prefixes == 0 {
        return Err(Error::Contract("k and the prefix count must be >= 1".into()));
    }
    let (n, m) = (params.n(), params.m());
    let dim = n + m;
    let envelope = gamma(params, k / 2, noise);
    let dirs = directions(dim, n_dirs, &mut rng.child(0));
    if envelope.amax() == 0.0 {
        return Ok(BmsbEstimate {
            min_probability: 0.0,
            worst_direction: dirs[0].clone(),
            degenerate: true,
        });
    }
    let thresholds: Vec<f64> = dirs.iter().map(|u| (u.dot(&(&envelope * u))).sqrt()).collect();

    let mut best = (f64::INFINITY, 0usize);
    for pre in 0..prefixes {
        let pre_rng = rng.child(1 + pre as u64);
        let prefix = simulate_block(params, window_start + 1, noise, &Vector::zeros(n), &mut pre_rng.child(0))?;
        let x_j = prefix.states.column(window_start).into_owned();
        let u_j = prefix.inputs.column(window_start).into_owned();
        let x_next_mean = params.a() * &x_j + params.b() * &u_j;

        // Each trial continues from z_j: draw w_j, then k further steps.
        let hits: Vec<Vec<u32>> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut r = pre_rng.child(1 + trial as u64);
                let x_start = &x_next_mean + r.gaussian_vector(n, noise.sigma_w2);
                let cont = simulate_block(params, k, noise, &x_start, &mut r).expect("dimensions checked");
                let zs: Mat = cont.z_columns(0, k);
                dirs.iter()
                    .zip(&thresholds)
                    .map(|(u, &thr)| (0..k).filter(|&i| u.dot(&zs.column(i)).abs() >= thr).count() as u32)
                    .collect()
            })
            .collect();
        for (di, _) in dirs.iter().enumerate() {
            let total: u64 = hits.iter().map(|h| h[di] as u64).sum();
            let prob = total as f64 / (trials * k) as f64;
            if prob < best.0 {
                best = (prob, di);
            }
        }
    }
    Ok(BmsbEstimate {
        min_probability: best.0,
        worst_direction: dirs[best.1].clone(),
        degenerate: false,
    })
}
