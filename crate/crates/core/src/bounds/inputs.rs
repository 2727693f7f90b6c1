use crate::error::{Error, Result};
use crate::model::{gamma, gamma_envelopes, gramians, NoiseConfig, SystemParams};
use crate::numerics::{max_eig_sym, spectral_norm, Mat};

/// Scalars shared by every offline bound.
///
/// Envelope fields are extremes over a finite sample of task parameters; see
/// [`BoundInputs::from_task_set`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInputs {
    pub blocks: usize,
    pub horizon: usize,
    pub train_len: usize,
    /// Mini-block length of the small-ball condition.
    pub k: usize,
    /// Small-ball probability.
    pub p: f64,
    pub delta: f64,
    pub alpha: f64,
    pub noise: NoiseConfig,
    pub n: usize,
    pub m: usize,
    /// Largest `lambda_max(Gamma_{floor(k/2)})`.
    pub gamma_half_max: f64,
    /// Smallest `lambda_min(Gamma_{floor(k/2)})`.
    pub gamma_half_min: f64,
    /// Largest `lambda_max(Gamma_{L-1})`.
    pub gamma_last_max: f64,
    /// Largest `trace(Gamma_{L-1})`.
    pub gamma_last_trace: f64,
    /// Largest `||B||`.
    pub b_norm: f64,
    /// Largest variance of a single state coordinate up to time `L-1`.
    pub state_var_max: f64,
    /// Largest `||sigma_a2 G_{L-1} + sigma_w2 F_{L-1}||`.
    pub state_cov_norm: f64,
    /// `lambda_max(L Gamma_{L-1} - alpha/2 (sum_{t<M} Gamma_under_t)^2)` with the
    /// upper envelope taken at its maximizing parameter and each lower envelope
    /// at its minimizing parameter.
    pub big_lambda: f64,
}

/// Sizes and confidence parameters that accompany a task sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundSettings {
    pub blocks: usize,
    pub horizon: usize,
    pub train_len: usize,
    pub k: usize,
    pub p: f64,
    pub delta: f64,
    pub alpha: f64,
    pub noise: NoiseConfig,
}

impl BoundSettings {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(Error::Contract("D must be >= 1".into()));
        }
        if self.train_len == 0 || self.train_len >= self.horizon {
            return Err(Error::Contract(format!(
                "need 1 <= M < L, got M = {}, L = {}",
                self.train_len, self.horizon
            )));
        }
        let k_max = (self.horizon - self.train_len) / 2;
        if self.k == 0 || self.k > k_max {
            return Err(Error::Contract(format!(
                "k must lie in [1, {k_max}], got {}",
                self.k
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Contract(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Contract(format!("p must lie in (0, 1], got {}", self.p)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Contract(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

impl BoundInputs {
    /// Builds every envelope scalar from a finite task sample.
    pub fn from_task_set(set: &[SystemParams], s: BoundSettings) -> Result<Self> {
        s.validate()?;
        let first = set
            .first()
            .ok_or_else(|| Error::Contract("task sample is empty".into()))?;
        let (n, m) = (first.n(), first.m());
        let half = gamma_envelopes(set, s.k / 2, s.noise)?;
        let last = gamma_envelopes(set, s.horizon - 1, s.noise)?;
        let b_norm = set.iter().map(|p| spectral_norm(p.b())).fold(0.0, f64::max);

        let mut state_var_max = 0.0_f64;
        let mut state_cov_norm = 0.0_f64;
        for p in set {
            let (g, f) = gramians(p, s.horizon - 1);
            let cov = g * s.noise.sigma_a2 + f * s.noise.sigma_w2;
            state_var_max = state_var_max.max(cov.diagonal().max());
            state_cov_norm = state_cov_norm.max(max_eig_sym(&cov)?);
        }

        let mut under_sum = Mat::zeros(n + m, n + m);
        for t in 0..s.train_len {
            let env = gamma_envelopes(set, t, s.noise)?;
            under_sum += gamma(&env.argmin, t, s.noise);
        }
        let upper = gamma(&last.argmax, s.horizon - 1, s.noise);
        let inner = upper * s.horizon as f64 - (&under_sum * &under_sum) * (s.alpha / 2.0);
        let big_lambda = max_eig_sym(&((&inner + inner.transpose()) * 0.5))?;

        Ok(Self {
            blocks: s.blocks,
            horizon: s.horizon,
            train_len: s.train_len,
            k: s.k,
            p: s.p,
            delta: s.delta,
            alpha: s.alpha,
            noise: s.noise,
            n,
            m,
            gamma_half_max: half.max_eig,
            gamma_half_min: half.min_eig,
            gamma_last_max: last.max_eig,
            gamma_last_trace: last.max_trace,
            b_norm,
            state_var_max,
            state_cov_norm,
            big_lambda,
        })
    }

    pub fn settings(&self) -> BoundSettings {
        BoundSettings {
            blocks: self.blocks,
            horizon: self.horizon,
            train_len: self.train_len,
            k: self.k,
            p: self.p,
            delta: self.delta,
            alpha: self.alpha,
            noise: self.noise,
        }
    }

    pub fn test_len(&self) -> usize {
        self.horizon - self.train_len
    }

    /// Number of mini-blocks `floor((L - M) / k)`.
    pub fn mini_blocks(&self) -> usize {
        self.test_len() / self.k
    }

    /// `1 - exp(-p^2 S / 8)`.
    pub fn small_ball_factor(&self) -> f64 {
        -(-self.p * self.p * self.mini_blocks() as f64 / 8.0).exp_m1()
    }

    pub(crate) fn dim(&self) -> f64 {
        (self.n + self.m) as f64
    }

    pub(crate) fn excitation_scale(&self) -> f64 {
        (self.m as f64 * self.noise.sigma_a2).max(self.n as f64 * self.noise.sigma_w2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> BoundSettings {
        BoundSettings {
            blocks: 10,
            horizon: 20,
            train_len: 5,
            k: 2,
            p: 0.15,
            delta: 0.1,
            alpha: 0.01,
            noise: NoiseConfig::new(1.0, 0.5).unwrap(),
        }
    }

    #[test]
    fn settings_validation() {
        assert!(settings().validate().is_ok());
        assert!(BoundSettings { k: 8, ..settings() }.validate().is_err());
        assert!(BoundSettings { k: 7, ..settings() }.validate().is_ok());
        assert!(BoundSettings { delta: 1.0, ..settings() }.validate().is_err());
        assert!(BoundSettings { p: 0.0, ..settings() }.validate().is_err());
        assert!(BoundSettings { train_len: 20, ..settings() }.validate().is_err());
    }

    #[test]
    fn single_scalar_task_envelopes() {
        let p = SystemParams::scalar(0.5, 1.0);
        let inp = BoundInputs::from_task_set(std::slice::from_ref(&p), settings()).unwrap();
        // Gamma_1 = diag(sigma_a2 b^2 + sigma_w2, sigma_a2) = diag(1.5, 1).
        assert_eq!(inp.gamma_half_max, 1.5);
        assert_eq!(inp.gamma_half_min, 1.0);
        assert_eq!(inp.b_norm, 1.0);
        let g = gamma(&p, 19, inp.noise);
        assert!((inp.gamma_last_trace - g.trace()).abs() < 1e-12);
        assert!((inp.state_var_max - g[(0, 0)]).abs() < 1e-12);
        assert_eq!(inp.mini_blocks(), 7);
    }
}
