use statrs::function::gamma::ln_gamma;

use crate::bounds::stationary::StationaryAnalysis;
use crate::error::{Error, Result};
use crate::online::AdaptConfig;

/// Which smallest eigenvalue of the lifted stationary covariance to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EigenMode {
    /// Over the full space, as stated; zero whenever there are inputs.
    #[default]
    Literal,
    /// Over the range of `[I; K]`, where the covariance is non-degenerate.
    Restricted,
}

/// Mean of the chi distribution with `n` degrees of freedom,
/// `sqrt(2) Gamma((n+1)/2) / Gamma(n/2)`.
pub fn chi_mean(n: usize) -> f64 {
    let n = n as f64;
    std::f64::consts::SQRT_2 * (ln_gamma((n + 1.0) / 2.0) - ln_gamma(n / 2.0)).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationBound {
    pub lambda: f64,
    pub mu1_prime: f64,
    /// Gradient second-moment constant with `E||w||^2 = n sigma_w` as printed.
    pub c_g: f64,
    /// Same constant with the variance term `n sigma_w^2`.
    pub c_g_corrected: f64,
    pub c_tilde_phi: f64,
    /// `1 - 2 alpha lambda`.
    pub contraction: f64,
    pub rhs: f64,
    pub rhs_corrected: f64,
}

fn assemble(alpha: f64, lambda: f64, steps: usize, gap0: f64, c_g: f64, c_tilde: f64) -> f64 {
    let contraction = 1.0 - 2.0 * alpha * lambda;
    let steady = if lambda > 0.0 {
        alpha * c_g / (2.0 * lambda)
    } else if alpha * c_g > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let m = steps as f64;
    steady + contraction.powi(steps as i32) * (gap0 + 2.0 * alpha * m * c_tilde / contraction)
}

/// Mean-square adaptation error bound after `cfg.steps` projected steps.
///
/// `gap0` is the squared initial distance `||phi_init - phi||^2`.
pub fn adaptation_bound(
    gap0: f64,
    cfg: &AdaptConfig,
    analysis: &StationaryAnalysis,
    mode: EigenMode,
    n: usize,
    sigma_w: f64,
) -> Result<AdaptationBound> {
    let lambda = match mode {
        EigenMode::Literal => analysis.min_eig_full.max(0.0),
        EigenMode::Restricted => analysis.min_eig_restricted,
    };
    let alpha = cfg.alpha;
    if lambda > 0.0 && alpha >= (1.0 - analysis.rho) / (2.0 * lambda) {
        return Err(Error::Precondition(format!(
            "alpha < (1 - rho) / (2 lambda) violated: alpha = {alpha}, limit = {}",
            (1.0 - analysis.rho) / (2.0 * lambda)
        )));
    }
    if !(cfg.c_phi.is_finite() && cfg.c_z.is_finite()) {
        return Err(Error::Contract("the bound needs finite projection radii".into()));
    }
    let (cp, cz) = (cfg.c_phi, cfg.c_z);
    let nf = n as f64;
    let mu1 = chi_mean(n);
    let head = 4.0 * cp * cp * cz.powi(4) + 4.0 * cp * cz.powi(3) * sigma_w * mu1;
    let c_g = head + cz * cz * nf * sigma_w;
    let c_g_corrected = head + cz * cz * nf * sigma_w * sigma_w;
    let c_tilde_phi = 8.0 * nf * cz * cz * cp * cp * analysis.c_m;
    Ok(AdaptationBound {
        lambda,
        mu1_prime: mu1,
        c_g,
        c_g_corrected,
        c_tilde_phi,
        contraction: 1.0 - 2.0 * alpha * lambda,
        rhs: assemble(alpha, lambda, cfg.steps, gap0, c_g, c_tilde_phi),
        rhs_corrected: assemble(alpha, lambda, cfg.steps, gap0, c_g_corrected, c_tilde_phi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::stationary::stationary_analysis;
    use crate::model::SystemParams;
    use crate::numerics::Mat;
    use approx::assert_relative_eq;

    fn analysis() -> StationaryAnalysis {
        stationary_analysis(&SystemParams::scalar(1.2, 1.0), &Mat::from_element(1, 1, -0.7), 0.75, 256).unwrap()
    }

    #[test]
    fn chi_mean_known_values() {
        assert_relative_eq!(chi_mean(1), (2.0 / std::f64::consts::PI).sqrt(), max_relative = 1e-13);
        assert_relative_eq!(chi_mean(2), (std::f64::consts::PI / 2.0).sqrt(), max_relative = 1e-13);
        assert_relative_eq!(chi_mean(3), 2.0 * (2.0 / std::f64::consts::PI).sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn zero_steps_adds_initial_gap() {
        let an = analysis();
        let cfg = AdaptConfig::new(0.01, 0, 2.0, 5.0).unwrap();
        let b = adaptation_bound(0.3, &cfg, &an, EigenMode::Restricted, 1, 0.1).unwrap();
        assert_relative_eq!(b.rhs, 0.01 * b.c_g / (2.0 * b.lambda) + 0.3, max_relative = 1e-14);
    }

    #[test]
    fn contraction_halves_on_schedule() {
        let an = analysis();
        let base = AdaptConfig::new(0.01, 10, 2.0, 5.0).unwrap();
        let b = adaptation_bound(0.0, &base, &an, EigenMode::Restricted, 1, 0.1).unwrap();
        let steps_to_half = (2f64.ln() / -(b.contraction.ln())).round() as usize;
        let f = |m: usize| b.contraction.powi(m as i32);
        assert!((f(10 + steps_to_half) / f(10) - 0.5).abs() < 0.01);
    }

    #[test]
    fn constants_match_hand_arithmetic() {
        let an = analysis();
        let cfg = AdaptConfig::new(0.01, 5, 2.0, 3.0).unwrap();
        let b = adaptation_bound(0.2, &cfg, &an, EigenMode::Restricted, 1, 0.1).unwrap();
        let mu = (2.0 / std::f64::consts::PI).sqrt();
        let cg = 4.0 * 4.0 * 81.0 + 4.0 * 2.0 * 27.0 * 0.1 * mu + 9.0 * 0.1;
        let cgc = 4.0 * 4.0 * 81.0 + 4.0 * 2.0 * 27.0 * 0.1 * mu + 9.0 * 0.01;
        let ct = 8.0 * 9.0 * 4.0 * an.c_m;
        let lam = an.min_eig_restricted;
        let q = 1.0 - 0.02 * lam;
        let rhs = 0.01 * cg / (2.0 * lam) + q.powi(5) * (0.2 + 2.0 * 0.01 * 5.0 * ct / q);
        assert_relative_eq!(b.c_g, cg, max_relative = 1e-14);
        assert_relative_eq!(b.c_g_corrected, cgc, max_relative = 1e-14);
        assert_relative_eq!(b.c_tilde_phi, ct, max_relative = 1e-14);
        assert_relative_eq!(b.rhs, rhs, max_relative = 1e-13);
    }

    #[test]
    fn literal_mode_is_non_contracting() {
        let an = analysis();
        let cfg = AdaptConfig::new(0.01, 20, 2.0, 3.0).unwrap();
        let b = adaptation_bound(0.2, &cfg, &an, EigenMode::Literal, 1, 0.1).unwrap();
        assert_eq!(b.lambda, 0.0);
        assert_eq!(b.contraction, 1.0);
        assert_eq!(b.rhs, f64::INFINITY);
    }

    #[test]
    fn step_size_precondition() {
        let an = analysis();
        let limit = (1.0 - an.rho) / (2.0 * an.min_eig_restricted);
        let cfg = AdaptConfig::new(limit * 1.01, 5, 2.0, 3.0).unwrap();
        assert!(matches!(
            adaptation_bound(0.1, &cfg, &an, EigenMode::Restricted, 1, 0.1),
            Err(Error::Precondition(_))
        ));
    }
}
