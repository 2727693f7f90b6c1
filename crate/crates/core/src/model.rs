//! The episodic block model.
//!
//! Each block evolves as `x_{t+1} = A x_t + B u_t + w_t` with Gaussian inputs
//! `u_t ~ N(0, sigma_a2 I_m)` and disturbances `w_t ~ N(0, sigma_w2 I_n)`.
//! The stacked parameter `phi` is `(n + m) x n` with `phi^T = [A B]`, so the
//! one-step prediction is `phi^T z_t` for the regressor `z_t = [x_t; u_t]`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::meta::MetaDataset;
use crate::numerics::{ensure_finite, max_eig_sym, min_eig_sym, spectral_radius, Mat, Vector};
use crate::rng::RngStream;

/// Draws allowed before rejection sampling of stable matrices gives up.
pub const REJECTION_CAP: usize = 10_000;

/// Model `(A, B)` of one block together with its stacked form `phi`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    a: Mat,
    b: Mat,
    phi: Mat,
}

impl SystemParams {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "B has {} rows but A is {n}x{n}",
                b.nrows()
            )));
        }
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        let m = b.ncols();
        let mut phi = Mat::zeros(n + m, n);
        phi.view_mut((0, 0), (n, n)).copy_from(&a.transpose());
        phi.view_mut((n, 0), (m, n)).copy_from(&b.transpose());
        Ok(Self { a, b, phi })
    }

    /// Rebuilds `(A, B)` from a stacked `(n + m) x n` parameter.
    pub fn from_phi(phi: &Mat) -> Result<Self> {
        let n = phi.ncols();
        if n == 0 || phi.nrows() < n {
            return Err(Error::Dimension(format!(
                "phi must be (n+m)xn, got {}x{}",
                phi.nrows(),
                phi.ncols()
            )));
        }
        let m = phi.nrows() - n;
        let a = phi.view((0, 0), (n, n)).transpose();
        let b = phi.view((n, 0), (m, n)).transpose();
        Self::new(a, b)
    }

    /// Scalar state with a scalar input.
    pub fn scalar(a: f64, b: f64) -> Self {
        Self::new(Mat::from_element(1, 1, a), Mat::from_element(1, 1, b)).expect("finite scalars")
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn phi(&self) -> &Mat {
        &self.phi
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// Input and disturbance variances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub sigma_a2: f64,
    pub sigma_w2: f64,
}

impl NoiseConfig {
    pub fn new(sigma_a2: f64, sigma_w2: f64) -> Result<Self> {
        if !(sigma_a2 >= 0.0 && sigma_w2 >= 0.0) || !sigma_a2.is_finite() || !sigma_w2.is_finite() {
            return Err(Error::Contract(format!(
                "variances must be finite and >= 0, got sigma_a2 = {sigma_a2}, sigma_w2 = {sigma_w2}"
            )));
        }
        Ok(Self { sigma_a2, sigma_w2 })
    }
}

/// How block parameters are drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskSampler {
    /// Every entry of `A` and `B` i.i.d. uniform on `[lo, hi]`, optionally
    /// redrawn until `A` is Schur stable.
    IidUniform {
        n: usize,
        m: usize,
        lo: f64,
        hi: f64,
        reject_unstable: bool,
    },
    /// Cycles through the list deterministically: block `d` gets `list[d % len]`.
    HarmonicSwitch(Vec<SystemParams>),
    /// Block `d` gets `list[d]`; running past the end is an error.
    FixedList(Vec<SystemParams>),
}

impl TaskSampler {
    /// Uniform sampler with the default rejection rule: off for scalar states,
    /// on otherwise.
    pub fn uniform(n: usize, m: usize, lo: f64, hi: f64) -> Self {
        TaskSampler::IidUniform {
            n,
            m,
            lo,
            hi,
            reject_unstable: n >= 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TaskSampler::IidUniform { n, lo, hi, .. } => {
                if *n == 0 {
                    return Err(Error::Contract("state dimension must be >= 1".into()));
                }
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::Contract(format!("need lo <= hi, got [{lo}, {hi}]")));
                }
            }
            TaskSampler::HarmonicSwitch(list) | TaskSampler::FixedList(list) => {
                let first = list
                    .first()
                    .ok_or_else(|| Error::Contract("parameter list is empty".into()))?;
                if list.iter().any(|p| p.n() != first.n() || p.m() != first.m()) {
                    return Err(Error::Dimension("parameter list mixes dimensions".into()));
                }
            }
        }
        Ok(())
    }

    /// `(n, m)` of the sampled systems.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            TaskSampler::IidUniform { n, m, .. } => (*n, *m),
            TaskSampler::HarmonicSwitch(list) | TaskSampler::FixedList(list) => {
                list.first().map(|p| (p.n(), p.m())).unwrap_or((0, 0))
            }
        }
    }
}

/// Draws the parameters of block `index`.
pub fn sample_task(sampler: &TaskSampler, index: usize, rng: &mut RngStream) -> Result<SystemParams> {
    sampler.validate()?;
    match sampler {
        TaskSampler::HarmonicSwitch(list) => Ok(list[index % list.len()].clone()),
        TaskSampler::FixedList(list) => list.get(index).cloned().ok_or_else(|| {
            Error::Sampling(format!(
                "fixed list has {} entries, block {index} requested",
                list.len()
            ))
        }),
        &TaskSampler::IidUniform {
            n,
            m,
            lo,
            hi,
            reject_unstable,
        } => {
            for _ in 0..REJECTION_CAP {
                let a = Mat::from_fn(n, n, |_, _| rng.uniform(lo, hi));
                let b = Mat::from_fn(n, m, |_, _| rng.uniform(lo, hi));
                if !reject_unstable || spectral_radius(&a)? < 1.0 {
                    return SystemParams::new(a, b);
                }
            }
            Err(Error::Sampling(format!(
                "no stable A found in {REJECTION_CAP} draws from U[{lo}, {hi}]^({n}x{n})"
            )))
        }
    }
}

/// Finite sample of the task set used for envelope estimates. Deterministic
/// samplers return their list, the uniform sampler `count` fresh draws.
pub fn sample_task_set(sampler: &TaskSampler, count: usize, rng: &RngStream) -> Result<Vec<SystemParams>> {
    match sampler {
        TaskSampler::HarmonicSwitch(list) | TaskSampler::FixedList(list) => {
            sampler.validate()?;
            Ok(list.clone())
        }
        TaskSampler::IidUniform { .. } => (0..count)
            .into_par_iter()
            .map(|i| sample_task(sampler, i, &mut rng.child(i as u64)))
            .collect(),
    }
}

/// States, inputs and disturbances of one simulated block.
///
/// `states` is `n x (L+1)` holding `x_0..x_L`; `inputs` is `m x L` and `noises`
/// is `n x L`. The first `train_len` transitions form the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTrajectory {
    pub states: Mat,
    pub inputs: Mat,
    pub noises: Mat,
    pub train_len: usize,
}

impl BlockTrajectory {
    /// Number of transitions `L`.
    pub fn horizon(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n(&self) -> usize {
        self.states.nrows()
    }

    pub fn m(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn with_train_len(mut self, train_len: usize) -> Result<Self> {
        if train_len > self.horizon() {
            return Err(Error::Contract(format!(
                "train length {train_len} exceeds horizon {}",
                self.horizon()
            )));
        }
        self.train_len = train_len;
        Ok(self)
    }

    /// Regressor `z_t = [x_t; u_t]`.
    pub fn z(&self, t: usize) -> Vector {
        let (n, m) = (self.n(), self.m());
        let mut z = Vector::zeros(n + m);
        z.rows_mut(0, n).copy_from(&self.states.column(t));
        z.rows_mut(n, m).copy_from(&self.inputs.column(t));
        z
    }

    /// Regressors `z_from..z_{to-1}` as columns.
    pub fn z_columns(&self, from: usize, to: usize) -> Mat {
        let (n, m) = (self.n(), self.m());
        let mut out = Mat::zeros(n + m, to - from);
        out.view_mut((0, 0), (n, to - from))
            .copy_from(&self.states.columns(from, to - from));
        out.view_mut((n, 0), (m, to - from))
            .copy_from(&self.inputs.columns(from, to - from));
        out
    }

    /// Successor states `x_{from+1}..x_to` as columns.
    pub fn next_states(&self, from: usize, to: usize) -> Mat {
        self.states.columns(from + 1, to - from).into_owned()
    }

    pub fn noise_columns(&self, from: usize, to: usize) -> Mat {
        self.noises.columns(from, to - from).into_owned()
    }

    pub fn train_z(&self) -> Mat {
        self.z_columns(0, self.train_len)
    }

    pub fn train_x(&self) -> Mat {
        self.next_states(0, self.train_len)
    }

    pub fn train_w(&self) -> Mat {
        self.noise_columns(0, self.train_len)
    }

    pub fn test_z(&self) -> Mat {
        self.z_columns(self.train_len, self.horizon())
    }

    pub fn test_x(&self) -> Mat {
        self.next_states(self.train_len, self.horizon())
    }

    pub fn test_w(&self) -> Mat {
        self.noise_columns(self.train_len, self.horizon())
    }

    pub fn final_state(&self) -> Vector {
        self.states.column(self.horizon()).into_owned()
    }

    /// Largest absolute entry of `x_{t+1} - A x_t - B u_t - w_t` over the block.
    pub fn recursion_residual(&self, params: &SystemParams) -> f64 {
        (0..self.horizon())
            .map(|t| {
                let pred = params.a() * self.states.column(t)
                    + params.b() * self.inputs.column(t)
                    + self.noises.column(t);
                (self.states.column(t + 1) - pred).amax()
            })
            .fold(0.0, f64::max)
    }
}

fn check_x0(params: &SystemParams, x0: &Vector) -> Result<()> {
    if x0.len() != params.n() {
        return Err(Error::Dimension(format!(
            "x0 has length {} but n = {}",
            x0.len(),
            params.n()
        )));
    }
    Ok(())
}

fn check_overflow(states: &Mat) -> Result<()> {
    if states.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical {
            op: "state recursion overflow",
            rows: states.nrows(),
            cols: states.ncols(),
        })
    }
}

/// Runs the recursion on given input and disturbance sequences.
pub fn simulate_with_inputs(
    params: &SystemParams,
    x0: &Vector,
    inputs: &Mat,
    noises: &Mat,
) -> Result<BlockTrajectory> {
    check_x0(params, x0)?;
    let l = inputs.ncols();
    if inputs.nrows() != params.m() || noises.shape() != (params.n(), l) {
        return Err(Error::Dimension(format!(
            "inputs {}x{} and noises {}x{} do not match n = {}, m = {}",
            inputs.nrows(),
            inputs.ncols(),
            noises.nrows(),
            noises.ncols(),
            params.n(),
            params.m()
        )));
    }
    let mut states = Mat::zeros(params.n(), l + 1);
    states.set_column(0, x0);
    for t in 0..l {
        let next = params.a() * states.column(t) + params.b() * inputs.column(t) + noises.column(t);
        states.set_column(t + 1, &next);
    }
    check_overflow(&states)?;
    Ok(BlockTrajectory {
        states,
        inputs: inputs.clone(),
        noises: noises.clone(),
        train_len: 0,
    })
}

/// Open-loop simulation of `L` steps from `x0` with Gaussian excitation.
///
/// Draw order per step: the input vector, then the disturbance vector.
pub fn simulate_block(
    params: &SystemParams,
    horizon: usize,
    noise: NoiseConfig,
    x0: &Vector,
    rng: &mut RngStream,
) -> Result<BlockTrajectory> {
    if horizon == 0 {
        return Err(Error::Contract("horizon must be >= 1".into()));
    }
    check_x0(params, x0)?;
    let (n, m) = (params.n(), params.m());
    let mut inputs = Mat::zeros(m, horizon);
    let mut noises = Mat::zeros(n, horizon);
    for t in 0..horizon {
        inputs.set_column(t, &rng.gaussian_vector(m, noise.sigma_a2));
        noises.set_column(t, &rng.gaussian_vector(n, noise.sigma_w2));
    }
    simulate_with_inputs(params, x0, &inputs, &noises)
}

/// Closed-loop simulation with state feedback `u_t = K x_t`.
///
/// Passing the previous block's final state as `x0` continues a trajectory
/// without reset.
pub fn simulate_closed_loop(
    params: &SystemParams,
    k: &Mat,
    horizon: usize,
    sigma_w2: f64,
    x0: &Vector,
    rng: &mut RngStream,
) -> Result<BlockTrajectory> {
    check_x0(params, x0)?;
    let (n, m) = (params.n(), params.m());
    if k.shape() != (m, n) {
        return Err(Error::Dimension(format!(
            "K must be {m}x{n}, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    let mut states = Mat::zeros(n, horizon + 1);
    let mut inputs = Mat::zeros(m, horizon);
    let mut noises = Mat::zeros(n, horizon);
    states.set_column(0, x0);
    for t in 0..horizon {
        let x = states.column(t).into_owned();
        let u = k * &x;
        let w = rng.gaussian_vector(n, sigma_w2);
        let next = params.a() * &x + params.b() * &u + &w;
        inputs.set_column(t, &u);
        noises.set_column(t, &w);
        states.set_column(t + 1, &next);
    }
    check_overflow(&states)?;
    Ok(BlockTrajectory {
        states,
        inputs,
        noises,
        train_len: 0,
    })
}

/// Finite-horizon Gramians `G_t = sum_{i<t} A^i B B^T (A^i)^T` and
/// `F_t = sum_{i<t} A^i (A^i)^T`. For `t = 0` both sums are empty.
pub fn gramians(params: &SystemParams, t: usize) -> (Mat, Mat) {
    let n = params.n();
    let bbt = params.b() * params.b().transpose();
    let mut g = Mat::zeros(n, n);
    let mut f = Mat::zeros(n, n);
    let mut pow = Mat::identity(n, n);
    for _ in 0..t {
        g += &pow * &bbt * pow.transpose();
        f += &pow * pow.transpose();
        pow = params.a() * pow;
    }
    (g, f)
}

/// Covariance of `z_t` for a block started at rest:
/// `diag(sigma_a2 G_t + sigma_w2 F_t, sigma_a2 I_m)`.
pub fn gamma(params: &SystemParams, t: usize, noise: NoiseConfig) -> Mat {
    let (n, m) = (params.n(), params.m());
    let (g, f) = gramians(params, t);
    let mut out = Mat::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n))
        .copy_from(&(g * noise.sigma_a2 + f * noise.sigma_w2));
    out.view_mut((n, n), (m, m))
        .fill_diagonal(noise.sigma_a2);
    out
}

/// Sample-based extremes of the eigenvalues of `Gamma_t` over a parameter set.
#[derive(Clone, Debug)]
pub struct GammaEnvelope {
    /// Largest `lambda_max(Gamma_t)` over the sample.
    pub max_eig: f64,
    /// Smallest `lambda_min(Gamma_t)` over the sample.
    pub min_eig: f64,
    /// Largest trace over the sample.
    pub max_trace: f64,
    pub argmax: SystemParams,
    pub argmin: SystemParams,
}

pub fn gamma_envelopes(params: &[SystemParams], t: usize, noise: NoiseConfig) -> Result<GammaEnvelope> {
    let first = params
        .first()
        .ok_or_else(|| Error::Contract("envelope needs at least one parameter sample".into()))?;
    let mut env = GammaEnvelope {
        max_eig: f64::NEG_INFINITY,
        min_eig: f64::INFINITY,
        max_trace: f64::NEG_INFINITY,
        argmax: first.clone(),
        argmin: first.clone(),
    };
    for p in params {
        let g = gamma(p, t, noise);
        let hi = max_eig_sym(&g)?;
        let lo = min_eig_sym(&g)?;
        if hi > env.max_eig {
            env.max_eig = hi;
            env.argmax = p.clone();
        }
        if lo < env.min_eig {
            env.min_eig = lo;
            env.argmin = p.clone();
        }
        env.max_trace = env.max_trace.max(g.trace());
    }
    Ok(env)
}

/// Simulates `D` blocks from rest, each with a fresh task draw.
///
/// Block `d` draws its task from `rng.child(d).child(0)` and its excitation
/// from `rng.child(d).child(1)`, so datasets of different sizes share their
/// leading blocks.
pub fn generate_offline_dataset(
    blocks: usize,
    horizon: usize,
    train_len: usize,
    sampler: &TaskSampler,
    noise: NoiseConfig,
    rng: &RngStream,
) -> Result<MetaDataset> {
    if blocks == 0 {
        return Err(Error::Contract("need at least one block".into()));
    }
    if train_len == 0 || train_len >= horizon {
        return Err(Error::Contract(format!(
            "need 1 <= M < L, got M = {train_len}, L = {horizon}"
        )));
    }
    let pairs: Vec<(SystemParams, BlockTrajectory)> = (0..blocks)
        .into_par_iter()
        .map(|d| {
            let stream = rng.child(d as u64);
            let params = sample_task(sampler, d, &mut stream.child(0))?;
            let x0 = Vector::zeros(params.n());
            let traj = simulate_block(&params, horizon, noise, &x0, &mut stream.child(1))?
                .with_train_len(train_len)?;
            Ok((params, traj))
        })
        .collect::<Result<_>>()?;
    let (params, trajectories) = pairs.into_iter().unzip();
    MetaDataset::new(trajectories, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn harmonic() -> TaskSampler {
        TaskSampler::HarmonicSwitch(vec![
            SystemParams::scalar(0.5, 0.7),
            SystemParams::scalar(0.8, 0.8),
        ])
    }

    #[test]
    fn phi_stacks_a_and_b() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = Mat::from_row_slice(2, 1, &[5.0, 6.0]);
        let p = SystemParams::new(a.clone(), b.clone()).unwrap();
        assert_eq!(p.phi().transpose(), Mat::from_row_slice(2, 3, &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]));
        assert_eq!(SystemParams::from_phi(p.phi()).unwrap(), p);
    }

    #[test]
    fn harmonic_cycles() {
        let mut rng = RngStream::new(0);
        let got: Vec<_> = (0..4)
            .map(|i| {
                let p = sample_task(&harmonic(), i, &mut rng).unwrap();
                (p.a()[(0, 0)], p.b()[(0, 0)])
            })
            .collect();
        assert_eq!(got, vec![(0.5, 0.7), (0.8, 0.8), (0.5, 0.7), (0.8, 0.8)]);
    }

    #[test]
    fn fixed_list_index_and_exhaustion() {
        let p = SystemParams::scalar(0.3, 0.2);
        let s = TaskSampler::FixedList(vec![p.clone()]);
        let mut rng = RngStream::new(0);
        assert_eq!(sample_task(&s, 0, &mut rng).unwrap(), p);
        assert!(matches!(sample_task(&s, 1, &mut rng), Err(Error::Sampling(_))));
    }

    #[test]
    fn uniform_draws_stay_in_range() {
        let s = TaskSampler::uniform(1, 1, 0.5, 1.0);
        let mut rng = RngStream::new(17);
        for i in 0..10_000 {
            let p = sample_task(&s, i, &mut rng).unwrap();
            for v in p.phi().iter() {
                assert!((0.5..=1.0).contains(v));
            }
        }
    }

    #[test]
    fn rejection_sampling_yields_stable_or_fails() {
        let s = TaskSampler::uniform(2, 1, 0.0, 0.6);
        let mut rng = RngStream::new(2);
        for i in 0..50 {
            let p = sample_task(&s, i, &mut rng).unwrap();
            assert!(spectral_radius(p.a()).unwrap() < 1.0);
        }
        let impossible = TaskSampler::uniform(3, 1, 0.9, 1.0);
        assert!(matches!(sample_task(&impossible, 0, &mut rng), Err(Error::Sampling(_))));
    }

    #[test]
    fn zero_noise_keeps_rest() {
        let p = SystemParams::scalar(0.9, 0.9);
        let traj = simulate_block(&p, 10, NoiseConfig::new(0.0, 0.0).unwrap(), &Vector::zeros(1), &mut RngStream::new(1)).unwrap();
        assert!(traj.states.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forced_two_step_recursion() {
        let p = SystemParams::scalar(0.5, 1.0);
        let traj = simulate_with_inputs(
            &p,
            &Vector::zeros(1),
            &Mat::from_row_slice(1, 2, &[1.0, 0.0]),
            &Mat::zeros(1, 2),
        )
        .unwrap();
        assert_eq!(traj.states.as_slice(), &[0.0, 1.0, 0.5]);
    }

    #[test]
    fn replay_reproduces_states_bit_exactly() {
        let mut rng = RngStream::new(99);
        let p = sample_task(&TaskSampler::uniform(3, 2, -0.5, 0.5), 0, &mut rng).unwrap();
        let x0 = rng.gaussian_vector(3, 1.0);
        let traj = simulate_block(&p, 25, NoiseConfig::new(0.3, 0.2).unwrap(), &x0, &mut rng).unwrap();
        let replay = simulate_with_inputs(&p, &x0, &traj.inputs, &traj.noises).unwrap();
        assert_eq!(traj.states, replay.states);
        assert_eq!(traj.recursion_residual(&p), 0.0);
    }

    #[test]
    fn closed_loop_examples() {
        let p = SystemParams::new(Mat::zeros(2, 2), Mat::identity(2, 1)).unwrap();
        let traj = simulate_closed_loop(&p, &Mat::zeros(1, 2), 5, 1.0, &Vector::zeros(2), &mut RngStream::new(3)).unwrap();
        for t in 0..5 {
            assert_eq!(traj.states.column(t + 1), traj.noises.column(t));
        }

        let p = SystemParams::scalar(1.2, 1.0);
        let k = Mat::from_element(1, 1, -0.7);
        let traj = simulate_closed_loop(&p, &k, 10, 0.0, &Vector::from_element(1, 1.0), &mut RngStream::new(3)).unwrap();
        for t in 0..=10 {
            assert_relative_eq!(traj.states[(0, t)], 0.5f64.powi(t as i32), epsilon = 1e-14);
        }
    }

    #[test]
    fn closed_loop_stays_inside_stationary_envelope() {
        // a + b k = 0.5 with unit disturbance variance: stationary variance 4/3.
        let p = SystemParams::scalar(1.2, 1.0);
        let k = Mat::from_element(1, 1, -0.7);
        let p_inf = crate::numerics::solve_dlyap(&Mat::from_element(1, 1, 0.5), &Mat::identity(1, 1)).unwrap();
        let level = 6.0 * p_inf[(0, 0)].sqrt();
        let root = RngStream::new(12);
        let inside = (0..1000)
            .filter(|&i| {
                let traj = simulate_closed_loop(&p, &k, 100, 1.0, &Vector::zeros(1), &mut root.child(i)).unwrap();
                traj.states.amax() <= level
            })
            .count();
        assert!(inside >= 990, "{inside}");
    }

    #[test]
    fn gramian_examples() {
        let p = SystemParams::scalar(0.5, 1.0);
        let (g, f) = gramians(&p, 1);
        assert_eq!((g[(0, 0)], f[(0, 0)]), (1.0, 1.0));
        let (g, f) = gramians(&p, 2);
        assert_eq!((g[(0, 0)], f[(0, 0)]), (1.25, 1.25));
    }

    #[test]
    fn gramians_match_naive_sum() {
        let mut rng = RngStream::new(5);
        let p = sample_task(&TaskSampler::uniform(3, 2, -0.6, 0.6), 0, &mut rng).unwrap();
        let (g, f) = gramians(&p, 5);
        let mut g_ref = Mat::zeros(3, 3);
        let mut f_ref = Mat::zeros(3, 3);
        for i in 0..5 {
            let mut ai = Mat::identity(3, 3);
            for _ in 0..i {
                ai = &ai * p.a();
            }
            g_ref += &ai * p.b() * p.b().transpose() * ai.transpose();
            f_ref += &ai * ai.transpose();
        }
        assert!((g - g_ref).amax() < 1e-12);
        assert!((f - f_ref).amax() < 1e-12);
    }

    #[test]
    fn gamma_examples() {
        let p = SystemParams::scalar(0.5, 1.0);
        let g = gamma(&p, 1, NoiseConfig::new(1.0, 1.0).unwrap());
        assert_eq!(g, Mat::from_diagonal(&Vector::from_vec(vec![2.0, 1.0])));
        let g = gamma(&p, 3, NoiseConfig::new(0.0, 1.0).unwrap());
        assert_eq!(g[(1, 1)], 0.0);
    }

    #[test]
    fn gamma_is_diag_assembly_of_gramians() {
        let mut rng = RngStream::new(8);
        let p = sample_task(&TaskSampler::uniform(2, 2, -0.5, 0.5), 0, &mut rng).unwrap();
        let noise = NoiseConfig::new(0.3, 0.7).unwrap();
        let (g, f) = gramians(&p, 4);
        let gm = gamma(&p, 4, noise);
        assert_eq!(gm.view((0, 0), (2, 2)).into_owned(), g * 0.3 + f * 0.7);
        assert_eq!(gm.view((0, 2), (2, 2)).amax(), 0.0);
        assert_eq!(gm.view((2, 0), (2, 2)).amax(), 0.0);
        assert_eq!(gm.view((2, 2), (2, 2)).into_owned(), Mat::identity(2, 2) * 0.3);
    }

    #[test]
    fn envelope_examples() {
        let noise = NoiseConfig::new(1.0, 1.0).unwrap();
        let p1 = SystemParams::scalar(0.5, 1.0);
        let env = gamma_envelopes(std::slice::from_ref(&p1), 1, noise).unwrap();
        assert_eq!((env.max_eig, env.min_eig), (2.0, 1.0));

        let p2 = SystemParams::scalar(0.5, 2.0);
        let env = gamma_envelopes(&[p1, p2.clone()], 1, noise).unwrap();
        assert_eq!(env.max_eig, 5.0);
        assert_eq!(env.min_eig, 1.0);
        assert_eq!(env.argmax, p2);
        assert!(gamma_envelopes(&[], 1, noise).is_err());
    }

    #[test]
    fn envelope_widens_with_nested_samples() {
        let noise = NoiseConfig::new(0.1, 0.01).unwrap();
        let set = sample_task_set(&TaskSampler::uniform(1, 1, 0.5, 1.0), 100, &RngStream::new(4)).unwrap();
        let mut prev: Option<GammaEnvelope> = None;
        for size in [10, 25, 50, 100] {
            let env = gamma_envelopes(&set[..size], 5, noise).unwrap();
            if let Some(p) = &prev {
                assert!(env.max_eig >= p.max_eig && env.min_eig <= p.min_eig);
            }
            prev = Some(env);
        }
    }

    #[test]
    fn empirical_z_covariance_matches_gamma() {
        let p = SystemParams::scalar(0.8, 0.6);
        let noise = NoiseConfig::new(0.5, 0.2).unwrap();
        let t = 4;
        let root = RngStream::new(31);
        let trials = 20_000;
        let zs: Vec<Vector> = (0..trials)
            .into_par_iter()
            .map(|i| {
                simulate_block(&p, t + 1, noise, &Vector::zeros(1), &mut root.child(i as u64))
                    .unwrap()
                    .z(t)
            })
            .collect();
        let mut cov = Mat::zeros(2, 2);
        for z in &zs {
            cov += z * z.transpose();
        }
        cov /= trials as f64;
        let g = gamma(&p, t, noise);
        for i in 0..2 {
            assert!((cov[(i, i)] - g[(i, i)]).abs() / g[(i, i)] < 0.05);
        }
        // Off-diagonal is zero in Gamma; compare against the diagonal scale.
        assert!(cov[(0, 1)].abs() < 0.05 * (g[(0, 0)] * g[(1, 1)]).sqrt());
    }

    #[test]
    fn dataset_shapes_and_determinism() {
        let noise = NoiseConfig::new(0.1, 0.01).unwrap();
        let s = TaskSampler::uniform(1, 1, 0.5, 1.0);
        let ds = generate_offline_dataset(1, 2, 1, &s, noise, &RngStream::new(5)).unwrap();
        assert_eq!(ds.blocks().len(), 1);
        assert_eq!(ds.blocks()[0].train_z().ncols(), 1);
        assert_eq!(ds.blocks()[0].test_z().ncols(), 1);

        let a = generate_offline_dataset(6, 10, 3, &s, noise, &RngStream::new(5)).unwrap();
        let b = generate_offline_dataset(6, 10, 3, &s, noise, &RngStream::new(5)).unwrap();
        assert_eq!(a, b);
        // Leading blocks do not depend on the dataset size.
        let c = generate_offline_dataset(3, 10, 3, &s, noise, &RngStream::new(5)).unwrap();
        assert_eq!(&a.blocks()[..3], c.blocks());
    }

    #[test]
    fn dataset_harmonic_cycles() {
        let ds = generate_offline_dataset(3, 5, 2, &harmonic(), NoiseConfig::new(1.0, 0.0).unwrap(), &RngStream::new(0)).unwrap();
        let a: Vec<f64> = ds.params().iter().map(|p| p.a()[(0, 0)]).collect();
        assert_eq!(a, vec![0.5, 0.8, 0.5]);
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn trajectories_satisfy_recursion(seed in any::<u64>(), n in 1usize..4, m in 0usize..3, l in 1usize..30) {
                let mut rng = RngStream::new(seed);
                let p = sample_task(&TaskSampler::uniform(n, m, -0.7, 0.7), 0, &mut rng).unwrap();
                let traj = simulate_block(&p, l, NoiseConfig::new(0.4, 0.3).unwrap(), &Vector::zeros(n), &mut rng).unwrap();
                prop_assert!(traj.recursion_residual(&p) == 0.0);
            }

            #[test]
            fn gramians_are_monotone(seed in any::<u64>(), n in 1usize..4, t in 0usize..12) {
                let mut rng = RngStream::new(seed);
                let p = sample_task(&TaskSampler::uniform(n, 2, -1.0, 1.0), 0, &mut rng).unwrap();
                let (g0, f0) = gramians(&p, t);
                let (g1, f1) = gramians(&p, t + 1);
                prop_assert!(min_eig_sym(&(g1 - g0)).unwrap() >= -1e-12);
                prop_assert!(min_eig_sym(&(f1 - f0)).unwrap() >= -1e-12);
            }

            #[test]
            fn gamma_block_diagonal_psd(seed in any::<u64>(), n in 1usize..4, m in 1usize..3, t in 1usize..8) {
                let mut rng = RngStream::new(seed);
                let p = sample_task(&TaskSampler::uniform(n, m, -0.8, 0.8), 0, &mut rng).unwrap();
                let g = gamma(&p, t, NoiseConfig::new(0.5, 0.25).unwrap());
                prop_assert!(g.view((0, n), (n, m)).amax() == 0.0);
                prop_assert!(g.view((n, 0), (m, n)).amax() == 0.0);
                prop_assert!(min_eig_sym(&g).unwrap() >= -1e-12);
            }
        }
    }
}
