use crate::bounds::inputs::BoundInputs;
use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::numerics::{spectral_norm, Mat};

fn checked_ln(x: f64, what: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x.ln())
    } else {
        Err(Error::LogDomain(format!("{what} = {x} is outside (0, inf)")))
    }
}

/// `1 + 3 sqrt(log(x))`, requiring `x > 1`.
fn tail_factor(x: f64, what: &str) -> Result<f64> {
    if !(x > 1.0) {
        return Err(Error::LogDomain(format!("{what} = {x} must exceed 1")));
    }
    Ok(1.0 + 3.0 * x.ln().sqrt())
}

/// Curvature cap `M^3 ||B||^2 (1 + 3 sqrt(log(10 D M / delta)))^2 max(m sa2, n sw2)`
/// that the learning rate must stay below.
pub fn bar_lambda(inp: &BoundInputs) -> Result<f64> {
    let (d, m_tr) = (inp.blocks as f64, inp.train_len as f64);
    let tail = tail_factor(10.0 * d * m_tr / inp.delta, "10 D M / delta")?;
    Ok(m_tr.powi(3) * inp.b_norm.powi(2) * tail.powi(2) * inp.excitation_scale())
}

/// Number of blocks the eigenvalue lower bound needs before it applies.
pub fn d_lambda_requirement(inp: &BoundInputs) -> Result<f64> {
    let lo = inp.gamma_half_min;
    if !(lo > 0.0) {
        return Err(Error::DegenerateExcitation(format!(
            "smallest eigenvalue of the excitation envelope at t = {} is {lo}",
            inp.k / 2
        )));
    }
    let dim = inp.dim();
    let prefactor = 9.0 * inp.gamma_half_max.powi(2) / (2.0 * lo * lo);
    let bracket = checked_ln(4.0 / inp.delta, "4 / delta")?
        + 4.0 * dim * checked_ln(6.0 * dim / (inp.delta * inp.p), "6 (m+n) / (delta p)")?
        + dim * checked_ln(inp.gamma_last_trace / lo, "trace ratio")?;
    Ok(prefactor * bracket)
}

/// Left side `D (1 - exp(-p^2 S / 8))^2` of the block-count requirement.
pub fn d_lambda_lhs(inp: &BoundInputs) -> f64 {
    inp.blocks as f64 * inp.small_ball_factor().powi(2)
}

pub fn d_lambda_satisfied(inp: &BoundInputs) -> Result<bool> {
    Ok(d_lambda_lhs(inp) >= d_lambda_requirement(inp)?)
}

fn check_learning_rate(inp: &BoundInputs, bar: f64) -> Result<()> {
    if inp.alpha * bar >= 1.0 {
        return Err(Error::Precondition(format!(
            "alpha < 1 / bar_lambda violated: alpha = {}, 1 / bar_lambda = {}",
            inp.alpha,
            1.0 / bar
        )));
    }
    Ok(())
}

/// High-probability lower bound on `lambda_min(Z Z^T)`:
/// `D (L-M) p^2 (1 - exp(-p^2 S / 8)) (1 - alpha bar_lambda)^2 lambda_min / 48`.
pub fn eig_lower_bound(inp: &BoundInputs) -> Result<f64> {
    let bar = bar_lambda(inp)?;
    check_learning_rate(inp, bar)?;
    let need = d_lambda_requirement(inp)?;
    let have = d_lambda_lhs(inp);
    if have < need {
        return Err(Error::Precondition(format!(
            "D (1 - exp(-p^2 S / 8))^2 >= D_lambda violated: {have} < {need}"
        )));
    }
    Ok(eig_lower_bound_unchecked(inp, bar))
}

pub(crate) fn eig_lower_bound_unchecked(inp: &BoundInputs, bar: f64) -> f64 {
    inp.blocks as f64
        * inp.test_len() as f64
        * inp.p
        * inp.p
        * inp.small_ball_factor()
        * (1.0 - inp.alpha * bar).powi(2)
        * inp.gamma_half_min
        / 48.0
}

/// First and second moments of the parameter distance to a reference task.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityStats {
    pub eta: f64,
    pub v_phi: f64,
    pub phi_ref: Mat,
    pub count: usize,
}

/// Sample means of `||phi_d - phi_ref||` and its square (spectral norm).
pub fn similarity_stats(list: &[SystemParams], phi_ref: &Mat) -> Result<SimilarityStats> {
    if list.is_empty() {
        return Err(Error::Contract("similarity needs at least one block".into()));
    }
    let dists: Vec<f64> = list
        .iter()
        .map(|p| spectral_norm(&(p.phi() - phi_ref)))
        .collect();
    let count = dists.len();
    Ok(SimilarityStats {
        eta: dists.iter().sum::<f64>() / count as f64,
        v_phi: dists.iter().map(|d| d * d).sum::<f64>() / count as f64,
        phi_ref: phi_ref.clone(),
        count,
    })
}

/// Constants of the offline gap bound.
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineBound {
    pub bar_lambda: f64,
    pub big_lambda: f64,
    pub c_v: f64,
    pub c_0: f64,
    pub c_q: f64,
    pub h_w: f64,
    pub c_w: f64,
    pub gamma_te_max: f64,
    pub h_0: f64,
    pub similarity_term: f64,
    pub gap_bound: f64,
    pub lambda_min_zz: f64,
}

/// Fourth-moment constant of the similarity term, with Gaussian moments read
/// off the excitation envelopes.
pub fn c_v(inp: &BoundInputs) -> f64 {
    let (n, m) = (inp.n as f64, inp.m as f64);
    let sa2 = inp.noise.sigma_a2;
    let m2 = inp.state_var_max;
    let m4 = 3.0 * m2 * m2;
    let m2_tilde = (inp.state_cov_norm + sa2).max(m * n * m2 * sa2);
    n * n * m4 + 2.0 * m2_tilde + 3.0 * m * m * sa2 * sa2 + 0.5 * (n * n * m4 * m2_tilde).sqrt()
}

/// Evaluates every offline constant at a given `lambda_min(Z Z^T)`, which may
/// be the eigenvalue lower bound or an observed value.
pub fn offline_bound(inp: &BoundInputs, stats: &SimilarityStats, lambda_min_zz: f64) -> Result<OfflineBound> {
    if !(lambda_min_zz > 0.0) {
        return Err(Error::Contract(format!(
            "lambda_min(Z Z^T) must be > 0, got {lambda_min_zz}"
        )));
    }
    let bar = bar_lambda(inp)?;
    check_learning_rate(inp, bar)?;
    let lo = inp.gamma_half_min;
    if !(lo > 0.0) {
        return Err(Error::DegenerateExcitation(format!(
            "smallest eigenvalue of the excitation envelope is {lo}"
        )));
    }
    let (n, dim) = (inp.n as f64, inp.dim());
    let (d, l, m_tr, te) = (
        inp.blocks as f64,
        inp.horizon as f64,
        inp.train_len as f64,
        inp.test_len() as f64,
    );
    let delta = inp.delta;
    let sw = inp.noise.sigma_w2.sqrt();
    let shrink = (1.0 - inp.alpha * bar).powi(2);
    let sbf = inp.small_ball_factor();
    let big_lambda = inp.big_lambda;

    let c_v = c_v(inp);
    let c_0 = 48.0 * big_lambda / (te * inp.p * inp.p * sbf * shrink * lo);

    let c_q = (4.0 / (3.0 * delta)).ln()
        + n * 5f64.ln()
        + 8.0 * dim * 8f64.ln()
        + 3.0 * dim * checked_ln(dim / delta, "(m+n) / delta")?;
    let h_w_arg = c_q + 2.0 * dim * checked_ln(inp.gamma_last_max / (lo * shrink), "Gamma ratio")?;
    let h_w = 10.0 * sw * h_w_arg.max(0.0).sqrt();

    let c_w = sw
        * (n.sqrt() + ((2.0 / d) * (4.0 / delta).ln()).sqrt())
        * tail_factor(20.0 * te * d / delta, "20 (L-M) D / delta")?
        * tail_factor(20.0 * m_tr * d / delta, "20 M D / delta")?
        * inp.b_norm.powi(2)
        * inp.excitation_scale();
    let gamma_te_max = 1.5
        * te.powi(3)
        * inp.b_norm.powi(2)
        * tail_factor(20.0 * l * d / delta, "20 L D / delta")?.powi(2)
        * inp.excitation_scale()
        * shrink;
    let h_0 = c_w
        * (48.0 / (d * inp.p * inp.p * sbf)).powf(dim)
        * (d * d * m_tr.powi(3) * te.powi(3)).sqrt()
        * (gamma_te_max / (lo * shrink)).powf(dim).sqrt();

    let bracket = d * stats.eta * big_lambda + te * (1.0 / delta).sqrt() * (c_v * d * stats.v_phi).sqrt();
    let sqrt_lz = lambda_min_zz.sqrt();
    let similarity_term = bracket / sqrt_lz;
    let gap_bound = bracket / lambda_min_zz + (h_w + inp.alpha * h_0) / sqrt_lz;

    Ok(OfflineBound {
        bar_lambda: bar,
        big_lambda,
        c_v,
        c_0,
        c_q,
        h_w,
        c_w,
        gamma_te_max,
        h_0,
        similarity_term,
        gap_bound,
        lambda_min_zz,
    })
}
