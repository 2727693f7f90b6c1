//! Monte-Carlo experiment runners. Each run is a pure function of its
//! configuration: trials draw from child streams of the master seed and are
//! reduced in index order, so parallel and sequential runs agree bit for bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bounds::{
    d_lambda_lhs, d_lambda_requirement, empirical_bmsb, eig_lower_bound, offline_bound, adaptation_bound,
    similarity_stats, stationary_analysis, BmsbSettings, BoundInputs, BoundReport, BoundSettings, EigenMode,
};
use crate::control::{cec_gain, LqrWeights};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::table::{mean_stderr, Cell, CsvTable};
use crate::meta::{
    assemble_design, lse_block_weights, meta_block_weights, meta_solve_closed_form, solve_design, MetaDataset,
};
use crate::model::{
    generate_offline_dataset, sample_task, sample_task_set, simulate_block, simulate_closed_loop, NoiseConfig,
    SystemParams, TaskSampler,
};
use crate::numerics::{min_eig_sym, spectral_radius, Mat, Vector, HINF_DEFAULT_GRID};
use crate::online::{default_radii, estimation_gap, lse_fit, lsa_adapt, AdaptConfig, GapNorm};
use crate::rng::RngStream;

/// Named text files produced by one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub files: Vec<(String, String)>,
}

impl ExperimentOutput {
    fn single(name: &str, table: &CsvTable) -> Result<Self> {
        Ok(Self {
            files: vec![(format!("{name}.csv"), table.to_csv_string()?)],
        })
    }

    /// Writes every file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.files
            .iter()
            .map(|(name, body)| {
                let path = dir.join(name);
                std::fs::write(&path, body)?;
                Ok(path)
            })
            .collect()
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_str())
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    match cfg.name.as_str() {
        "fig-gap-vs-D" => gap_vs_d(cfg),
        "fig-gap-vs-dim" => gap_vs_dim(cfg),
        "fig-gap-vs-L" => gap_vs_l(cfg),
        "fig-adapt-vs-D" => adapt_vs_d(cfg),
        "fig-adapt-vs-M" => adapt_vs_m(cfg),
        "fig-lse-vs-meta" => lse_vs_meta(cfg),
        "fig-harmonic" => harmonic(cfg),
        "fig-weighting" => weighting(cfg),
        "bounds-report" => bounds_report(cfg),
        other => Err(Error::Config(format!("unknown experiment `{other}`"))),
    }
}

// Stream layout under each repetition.
const DATA: u64 = 0;
const TEST_TASKS: u64 = 1;
const TEST_TRAJ: u64 = 2;
const DIRECTIONS: u64 = 3;

fn stat_cells(values: &[f64], seed: u64) -> Vec<Cell> {
    let (mean, se) = mean_stderr(values);
    vec![mean.into(), se.into(), values.len().into(), seed.into()]
}

fn with_stats<'a>(header: &[&'a str]) -> Vec<&'a str> {
    let mut h = header.to_vec();
    h.extend(["mean", "stderr", "count", "seed"]);
    h
}

fn sampler_for(cfg: &ExperimentConfig, n: usize, m: usize) -> Result<TaskSampler> {
    cfg.sampler.build(n, m)
}

fn meta_init(cfg: &ExperimentConfig, d: usize, l: usize, split: usize, sampler: &TaskSampler, rep: &RngStream) -> Result<Mat> {
    let ds = generate_offline_dataset(d, l, split, sampler, cfg.noise, &rep.child(DATA))?;
    meta_solve_closed_form(&ds, cfg.meta_alpha, None)
}

fn gaps_to(phi: &Mat, tasks: &[SystemParams]) -> Vec<f64> {
    tasks.iter().map(|t| estimation_gap(phi, t.phi(), GapNorm::Spectral)).collect()
}

/// Offline gap `||phi* - phi_i||` over the test tasks for each repetition.
fn offline_gaps(cfg: &ExperimentConfig, dims: (usize, usize), d: usize, l: usize, split: usize) -> Result<Vec<f64>> {
    let sampler = sampler_for(cfg, dims.0, dims.1)?;
    let master = RngStream::new(cfg.seed);
    let per_rep = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let rep = master.child(r as u64);
            let phi = meta_init(cfg, d, l, split, &sampler, &rep)?;
            let tests = sample_task_set(&sampler, cfg.test_blocks, &rep.child(TEST_TASKS))?;
            Ok(gaps_to(&phi, &tests))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_rep.concat())
}

fn gap_vs_d(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut t = CsvTable::new(&with_stats(&["M", "D"]));
    for &m in &cfg.m_list {
        for &d in &cfg.d_list {
            let v = offline_gaps(cfg, cfg.primary_dims(), d, cfg.horizon, m)?;
            let mut row: Vec<Cell> = vec![m.into(), d.into()];
            row.extend(stat_cells(&v, cfg.seed));
            t.push(row)?;
        }
    }
    ExperimentOutput::single(&cfg.name, &t)
}

fn gap_vs_dim(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut t = CsvTable::new(&with_stats(&["n", "m", "D"]));
    let split = cfg.m_list[0];
    for &(n, m) in &cfg.dims {
        for &d in &cfg.d_list {
            let v = offline_gaps(cfg, (n, m), d, cfg.horizon, split)?;
            let mut row: Vec<Cell> = vec![n.into(), m.into(), d.into()];
            row.extend(stat_cells(&v, cfg.seed));
            t.push(row)?;
        }
    }
    ExperimentOutput::single(&cfg.name, &t)
}

fn gap_vs_l(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut t = CsvTable::new(&with_stats(&["L", "D"]));
    let split = cfg.m_list[0];
    for &l in &cfg.l_list {
        for &d in &cfg.d_list {
            let v = offline_gaps(cfg, cfg.primary_dims(), d, l, split)?;
            let mut row: Vec<Cell> = vec![l.into(), d.into()];
            row.extend(stat_cells(&v, cfg.seed));
            t.push(row)?;
        }
    }
    ExperimentOutput::single(&cfg.name, &t)
}

fn adapt_config(cfg: &ExperimentConfig, tasks: &[SystemParams], alpha: f64, steps: usize) -> Result<AdaptConfig> {
    let (c_phi, c_z) = match (cfg.adapt.c_phi, cfg.adapt.c_z) {
        (Some(p), Some(z)) => (p, z),
        (p, z) => {
            let (dp, dz) = default_radii(tasks, cfg.noise, cfg.horizon)?;
            (p.unwrap_or(dp), z.unwrap_or(dz))
        }
    };
    Ok(AdaptConfig::new(alpha, steps, c_phi, c_z)?.with_phi_norm(cfg.adapt.projection))
}

/// Fresh open-loop test block of `len` transitions started at the origin.
fn test_block(task: &SystemParams, len: usize, noise: NoiseConfig, rng: &RngStream) -> Result<crate::model::BlockTrajectory> {
    simulate_block(task, len, noise, &Vector::zeros(task.n()), &mut rng.clone())
}

/// Post-adaptation errors indexed by `[alpha][M]`, concatenated over
/// repetitions and test blocks.
fn adaptation_errors(cfg: &ExperimentConfig, d: usize, alphas: &[f64]) -> Result<Vec<BTreeMap<usize, Vec<f64>>>> {
    let (n, m) = cfg.primary_dims();
    let sampler = sampler_for(cfg, n, m)?;
    let master = RngStream::new(cfg.seed);
    let steps = *cfg.m_list.iter().max().expect("validated non-empty");
    let mut out: Vec<BTreeMap<usize, Vec<f64>>> = vec![BTreeMap::new(); alphas.len()];
    for r in 0..cfg.repetitions {
        let rep = master.child(r as u64);
        let phi = meta_init(cfg, d, cfg.horizon, cfg.train_split, &sampler, &rep)?;
        let tests = sample_task_set(&sampler, cfg.test_blocks, &rep.child(TEST_TASKS))?;
        for (ai, &alpha) in alphas.iter().enumerate() {
            let acfg = adapt_config(cfg, &tests, alpha, steps)?;
            let traces = tests
                .par_iter()
                .enumerate()
                .map(|(i, task)| {
                    let traj = test_block(task, steps, cfg.noise, &rep.child(TEST_TRAJ).child(i as u64))?;
                    let trace = lsa_adapt(&phi, &traj, &acfg)?;
                    Ok(cfg
                        .m_list
                        .iter()
                        .map(|&mm| estimation_gap(&trace.iterates[mm], task.phi(), GapNorm::Spectral))
                        .collect::<Vec<f64>>())
                })
                .collect::<Result<Vec<_>>>()?;
            for errs in traces {
                for (&mm, e) in cfg.m_list.iter().zip(errs) {
                    out[ai].entry(mm).or_default().push(e);
                }
            }
        }
    }
    Ok(out)
}

fn adapt_vs_d(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let alpha = cfg.adapt.alpha[0];
    let per_d = cfg
        .d_list
        .iter()
        .map(|&d| adaptation_errors(cfg, d, &[alpha]).map(|mut v| v.remove(0)))
        .collect::<Result<Vec<_>>>()?;
    let mut t = CsvTable::new(&with_stats(&["alpha", "M", "D"]));
    for &mm in &cfg.m_list {
        for (&d, errs) in cfg.d_list.iter().zip(&per_d) {
            let mut row: Vec<Cell> = vec![alpha.into(), mm.into(), d.into()];
            row.extend(stat_cells(&errs[&mm], cfg.seed));
            t.push(row)?;
        }
    }
    ExperimentOutput::single(&cfg.name, &t)
}

fn adapt_vs_m(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let d = cfg.d_list[0];
    let errs = adaptation_errors(cfg, d, &cfg.adapt.alpha)?;
    let mut t = CsvTable::new(&with_stats(&["alpha", "D", "M"]));
    for (&alpha, by_m) in cfg.adapt.alpha.iter().zip(&errs) {
        for &mm in &cfg.m_list {
            let mut row: Vec<Cell> = vec![alpha.into(), d.into(), mm.into()];
            row.extend(stat_cells(&by_m[&mm], cfg.seed));
            t.push(row)?;
        }
    }
    ExperimentOutput::single(&cfg.name, &t)
}

/// Random matrix of unit Frobenius norm.
fn unit_direction(rows: usize, cols: usize, rng: &RngStream) -> Mat {
    let v = rng.clone().unit_vector(rows * cols);
    Mat::from_column_slice(rows, cols, v.as_slice())
}

fn lse_vs_meta(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (n, m) = cfg.primary_dims();
    let sampler = sampler_for(cfg, n, m)?;
    let master = RngStream::new(cfg.seed);
    let steps = *cfg.m_list.iter().max().expect("validated non-empty");
    let alpha = cfg.adapt.alpha[0];
    // (epsilon index, M) -> (lse errors, meta errors)
    let mut acc: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in 0..cfg.repetitions {
        let rep = master.child(r as u64);
        let phi = meta_init(cfg, cfg.d_list[0], cfg.horizon, cfg.train_split, &sampler, &rep)?;
        let tests = sample_task_set(&sampler, cfg.test_blocks, &rep.child(TEST_TASKS))?;
        let acfg = adapt_config(cfg, &tests, alpha, steps)?;
        let per_block = tests
            .par_iter()
            .enumerate()
            .map(|(i, task)| {
                let traj = test_block(task, steps, cfg.noise, &rep.child(TEST_TRAJ).child(i as u64))?;
                let dir = unit_direction(n + m, n, &rep.child(DIRECTIONS).child(i as u64));
                let mut lse = Vec::with_capacity(cfg.m_list.len());
                for &mm in &cfg.m_list {
                    let est = lse_fit(&traj.z_columns(0, mm), &traj.next_states(0, mm), None)?;
                    lse.push(estimation_gap(&est, task.phi(), GapNorm::Spectral));
                }
                let mut meta = Vec::with_capacity(cfg.perturbations.len());
                for &eps in &cfg.perturbations {
                    let trace = lsa_adapt(&(&phi + &dir * eps), &traj, &acfg)?;
                    meta.push(
                        cfg.m_list
                            .iter()
                            .map(|&mm| estimation_gap(&trace.iterates[mm], task.phi(), GapNorm::Spectral))
                            .collect::<Vec<_>>(),
                    );
                }
                Ok((lse, meta))
            })
            .collect::<Result<Vec<_>>>()?;
        for (lse, meta) in per_block {
            for (ei, per_m) in meta.iter().enumerate() {
                for (mi, &mm) in cfg.m_list.iter().enumerate() {
                    let cell = acc.entry((ei, mm)).or_default();
                    cell.0.push(lse[mi]);
                    cell.1.push(per_m[mi]);
                }
            }
        }
    }
    let mut t = CsvTable::new(&with_stats(&["epsilon", "M", "estimator"]));
    for (ei, &eps) in cfg.perturbations.iter().enumerate() {
        for &mm in &cfg.m_list {
            let (lse, meta) = &acc[&(ei, mm)];
            for (name, v) in [("lse", lse), ("meta", meta)] {
                let mut row: Vec<Cell> = vec![eps.into(), mm.into(), name.into()];
                row.extend(stat_cells(v, cfg.seed));
                t.push(row)?;
            }
        }
    }
    ExperimentOutput::single(&cfg.name, &t)
}

/// Per-step adaptation errors on a switching model, one trace per trial.
///
/// Trial `i` runs the block after task `i` from where that block left off, so
/// the state carries over as it would online. Adaptation starts from the mean
/// of the listed task parameters.
pub fn harmonic_traces(cfg: &ExperimentConfig) -> Result<Vec<Vec<f64>>> {
    let (n, m) = cfg.primary_dims();
    let sampler = sampler_for(cfg, n, m)?;
    let list = match &sampler {
        TaskSampler::HarmonicSwitch(l) | TaskSampler::FixedList(l) => l.clone(),
        TaskSampler::IidUniform { .. } => {
            return Err(Error::Config(format!("{} needs a harmonic or fixed sampler", cfg.name)))
        }
    };
    let mid = list.iter().fold(Mat::zeros(n + m, n), |acc, p| acc + p.phi()) / list.len() as f64;
    let steps = *cfg.m_list.iter().max().expect("validated non-empty");
    let acfg = adapt_config(cfg, &list, cfg.adapt.alpha[0], steps)?;
    let trials = cfg.test_blocks * cfg.repetitions;
    let master = RngStream::new(cfg.seed);
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let stream = master.child(i as u64);
            let previous = sample_task(&sampler, i % list.len(), &mut stream.child(0))?;
            let active = sample_task(&sampler, (i + 1) % list.len(), &mut stream.child(0))?;
            let warm = simulate_block(&previous, cfg.horizon, cfg.noise, &Vector::zeros(n), &mut stream.child(1))?;
            let traj = simulate_block(&active, steps, cfg.noise, &warm.final_state(), &mut stream.child(2))?;
            let trace = lsa_adapt(&mid, &traj, &acfg)?;
            Ok(trace
                .iterates
                .iter()
                .map(|p| estimation_gap(p, active.phi(), GapNorm::Spectral))
                .collect())
        })
        .collect()
}

fn harmonic(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let traces = harmonic_traces(cfg)?;
    let steps = traces[0].len() - 1;
    let mut t = CsvTable::new(&["step", "mean", "stderr", "count", "frac_below_tol", "seed"]);
    for s in 0..=steps {
        let v: Vec<f64> = traces.iter().map(|tr| tr[s]).collect();
        let (mean, se) = mean_stderr(&v);
        let frac = v.iter().filter(|e| **e < cfg.adapt.tolerance).count() as f64 / v.len() as f64;
        t.push(vec![s.into(), mean.into(), se.into(), v.len().into(), frac.into(), cfg.seed.into()])?;
    }
    ExperimentOutput::single(&cfg.name, &t)
}

fn weighting(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (n, m) = cfg.primary_dims();
    if (n, m) != (1, 1) {
        return Err(Error::Config("fig-weighting needs dims = 1x1".into()));
    }
    let sampler = sampler_for(cfg, n, m)?;
    let rep = RngStream::new(cfg.seed).child(0);
    let ds: MetaDataset = generate_offline_dataset(cfg.d_list[0], cfg.horizon, cfg.m_list[0], &sampler, cfg.noise, &rep.child(DATA))?;
    let phi_meta = meta_solve_closed_form(&ds, cfg.meta_alpha, None)?;
    let (zs, xs): (Vec<Mat>, Vec<Mat>) = ds
        .blocks()
        .iter()
        .map(|b| (b.z_columns(0, b.horizon()), b.next_states(0, b.horizon())))
        .unzip();
    let phi_lse = lse_fit(&hcat(&zs), &hcat(&xs), None)?;
    let normalize = |w: Vec<f64>| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect::<Vec<_>>()
    };
    let wm = normalize(meta_block_weights(&ds, cfg.meta_alpha));
    let wl = normalize(lse_block_weights(&ds));
    let mut t = CsvTable::new(&["kind", "index", "a", "b", "weight_meta", "weight_lse", "seed"]);
    for (d, p) in ds.params().iter().enumerate() {
        t.push(vec![
            "block".into(),
            d.into(),
            p.phi()[(0, 0)].into(),
            p.phi()[(1, 0)].into(),
            wm[d].into(),
            wl[d].into(),
            cfg.seed.into(),
        ])?;
    }
    for (kind, phi) in [("meta", &phi_meta), ("lse", &phi_lse)] {
        t.push(vec![
            kind.into(),
            ds.len().into(),
            phi[(0, 0)].into(),
            phi[(1, 0)].into(),
            "".into(),
            "".into(),
            cfg.seed.into(),
        ])?;
    }
    ExperimentOutput::single(&cfg.name, &t)
}

fn hcat(parts: &[Mat]) -> Mat {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        out.columns_mut(at, p.ncols()).copy_from(p);
        at += p.ncols();
    }
    out
}

/// One Monte-Carlo draw of the offline bound check.
struct OfflineTrial {
    lambda_min_zz: f64,
    gap: f64,
    gap_bound: Option<f64>,
}

/// Evaluates every bound for the configured instance and checks the
/// probabilistic ones by simulation.
/// Named Monte-Carlo sample columns.
pub type McColumns = Vec<(String, Vec<f64>)>;

pub fn bounds_report_data(cfg: &ExperimentConfig) -> Result<(BoundReport, McColumns)> {
    let (n, m) = cfg.primary_dims();
    let sampler = sampler_for(cfg, n, m)?;
    let master = RngStream::new(cfg.seed);
    let b = &cfg.bounds;
    let (d, l, split) = (cfg.d_list[0], cfg.horizon, cfg.m_list[0]);
    let envelope = sample_task_set(&sampler, b.envelope_samples, &master.child(10))?;
    let target = sample_task(&sampler, 0, &mut master.child(11))?;
    let settings = BoundSettings {
        blocks: d,
        horizon: l,
        train_len: split,
        k: b.k,
        p: b.p,
        delta: b.delta,
        alpha: cfg.meta_alpha,
        noise: cfg.noise,
    };
    let inputs = BoundInputs::from_task_set(&envelope, settings)?;
    let mut report = BoundReport {
        inputs: Some(inputs.clone()),
        d_lambda_lhs: Some(d_lambda_lhs(&inputs)),
        ..Default::default()
    };
    match d_lambda_requirement(&inputs) {
        Ok(v) => report.d_lambda = Some(v),
        Err(e) => report.notes.push(format!("D_lambda: {e}")),
    }
    match eig_lower_bound(&inputs) {
        Ok(v) => report.eig_lower_bound = Some(v),
        Err(e) => report.notes.push(format!("eigenvalue lower bound: {e}")),
    }
    let stats = similarity_stats(&envelope, target.phi())?;
    if let Some(lz) = report.eig_lower_bound {
        match offline_bound(&inputs, &stats, lz) {
            Ok(o) => report.offline = Some(o),
            Err(e) => report.notes.push(format!("offline bound: {e}")),
        }
    }
    report.similarity = Some(stats);

    let trials = (0..b.trials)
        .into_par_iter()
        .map(|t| {
            let stream = master.child(20).child(t as u64);
            let ds = generate_offline_dataset(d, l, split, &sampler, cfg.noise, &stream.child(0))?;
            let design = assemble_design(&ds, cfg.meta_alpha)?;
            let lambda_min_zz = min_eig_sym(&(&design.z * design.z.transpose()))?;
            let phi = solve_design(&design, None)?;
            let task = sample_task(&sampler, 0, &mut stream.child(1))?;
            let gap = estimation_gap(&phi, task.phi(), GapNorm::Spectral);
            let gap_bound = match report.eig_lower_bound {
                Some(lz) => {
                    let s = similarity_stats(ds.params(), task.phi())?;
                    offline_bound(&inputs, &s, lz).ok().map(|o| o.gap_bound)
                }
                None => None,
            };
            Ok(OfflineTrial {
                lambda_min_zz,
                gap,
                gap_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mc: McColumns = Vec::new();
    mc.push(("lambda_min_zz".into(), trials.iter().map(|t| t.lambda_min_zz).collect()));
    mc.push(("offline_gap".into(), trials.iter().map(|t| t.gap).collect()));
    if let Some(lz) = report.eig_lower_bound {
        mc.push((
            "eig_bound_holds".into(),
            trials.iter().map(|t| f64::from(u8::from(t.lambda_min_zz >= lz))).collect(),
        ));
    }
    if trials.iter().all(|t| t.gap_bound.is_some()) && report.eig_lower_bound.is_some() {
        mc.push((
            "gap_bound_holds".into(),
            trials
                .iter()
                .map(|t| f64::from(u8::from(t.gap_bound.unwrap_or(f64::NAN) >= t.gap)))
                .collect(),
        ));
    }

    // Online side: the target task under state feedback.
    let gain = match &b.gain {
        Some(g) => Mat::from_row_slice(m, n, g),
        None => cec_gain(target.a(), target.b(), &LqrWeights::identity(n, m))?,
    };
    let radius = spectral_radius(&(target.a() + target.b() * &gain))?;
    let rho = b.rho.unwrap_or((1.0 + radius) / 2.0);
    match stationary_analysis(&target, &gain, rho, HINF_DEFAULT_GRID) {
        Ok(st) => {
            let c_phi = cfg
                .adapt
                .c_phi
                .unwrap_or(2.0 * envelope.iter().map(|p| p.phi().norm()).fold(0.0, f64::max));
            let lifted_trace = st.p_hat.trace() * cfg.noise.sigma_w2;
            let c_z = cfg.adapt.c_z.unwrap_or(10.0 * lifted_trace.sqrt().max(f64::MIN_POSITIVE));
            let acfg = AdaptConfig::new(cfg.adapt.alpha[0], b.steps, c_phi, c_z)?.with_phi_norm(cfg.adapt.projection);
            let phi0 = meta_solve_closed_form(
                &generate_offline_dataset(d, l, split, &sampler, cfg.noise, &master.child(12))?,
                cfg.meta_alpha,
                None,
            )?;
            let gap0 = (&phi0 - target.phi()).norm_squared();
            let sigma_w = cfg.noise.sigma_w2.sqrt();
            for mode in [EigenMode::Literal, EigenMode::Restricted] {
                let bound = match adaptation_bound(gap0, &acfg, &st, mode, n, sigma_w) {
                    Ok(p) => Some(p),
                    Err(e) => {
                        report.notes.push(format!("adaptation bound ({mode:?}): {e}"));
                        None
                    }
                };
                match mode {
                    EigenMode::Literal => report.adaptation_literal = bound,
                    EigenMode::Restricted => report.adaptation_restricted = bound,
                }
            }
            let mse = (0..b.trials)
                .into_par_iter()
                .map(|t| {
                    let mut s = master.child(30).child(t as u64);
                    let traj = simulate_closed_loop(&target, &gain, b.steps, cfg.noise.sigma_w2, &Vector::zeros(n), &mut s)?;
                    let trace = lsa_adapt(&phi0, &traj, &acfg)?;
                    Ok((trace.last() - target.phi()).norm_squared())
                })
                .collect::<Result<Vec<f64>>>()?;
            mc.push(("adapt_sq_error".into(), mse));
            report.stationary = Some(st);
        }
        Err(e) => report.notes.push(format!("stationary analysis: {e}")),
    }

    if b.bmsb_trials >= 1000 {
        let est = empirical_bmsb(
            &target,
            cfg.noise,
            BmsbSettings {
                k: b.k,
                trials: b.bmsb_trials,
                ..Default::default()
            },
            &master.child(40),
        )?;
        report.extra.push(("mc.bmsb_min_probability".into(), est.min_probability));
    } else {
        report.notes.push("small-ball check skipped: bmsb_trials < 1000".into());
    }
    for (name, v) in &mc {
        report.extra.push((format!("mc.{name}.mean"), mean_stderr(v).0));
    }
    report.extra.push(("mc.trials".into(), b.trials as f64));
    Ok((report, mc))
}

fn bounds_report(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (report, mc) = bounds_report_data(cfg)?;
    let mut t = CsvTable::new(&with_stats(&["quantity"]));
    for (name, v) in &mc {
        let mut row: Vec<Cell> = vec![name.as_str().into()];
        row.extend(stat_cells(v, cfg.seed));
        t.push(row)?;
    }
    Ok(ExperimentOutput {
        files: vec![
            (format!("{}.txt", cfg.name), report.to_kv()),
            (format!("{}.csv", cfg.name), t.to_csv_string()?),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config_for;

    fn small(name: &str, extra: &str) -> ExperimentConfig {
        parse_config_for(extra, Some(name)).unwrap()
    }

    #[test]
    fn every_experiment_runs_on_a_small_instance() {
        let cases = [
            ("fig-gap-vs-D", "D = 3, 6\ntest_blocks = 4"),
            ("fig-gap-vs-dim", "D = 3\ndims = 1x1, 2x1\ntest_blocks = 4"),
            ("fig-gap-vs-L", "D = 3\nL_list = 12, 16\ntest_blocks = 4"),
            ("fig-adapt-vs-D", "D = 3, 5\ntest_blocks = 4"),
            ("fig-adapt-vs-M", "D = 4\ntest_blocks = 4"),
            ("fig-lse-vs-meta", "D = 4\ntest_blocks = 4\nperturbations = 0, 0.3"),
            ("fig-harmonic", "test_blocks = 6\nL = 30\nM = 5"),
            ("fig-weighting", "D = 6"),
            ("bounds-report", "D = 30\nL = 41\ntrials = 3\nenvelope_samples = 20\nbmsb_trials = 0"),
        ];
        for (name, extra) in cases {
            let out = run_experiment(&small(name, extra)).unwrap_or_else(|e| panic!("{name}: {e}"));
            let csv = out.file(&format!("{name}.csv")).unwrap();
            let mut lines = csv.lines();
            let header = lines.next().unwrap();
            let width = header.split(',').count();
            assert!(header.contains("seed"), "{name}: {header}");
            for line in lines {
                assert_eq!(line.split(',').count(), width, "{name}: {line}");
            }
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = small("fig-adapt-vs-M", "D = 4\ntest_blocks = 5\nrepetitions = 2");
        assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
        let other = ExperimentConfig { seed: 1, ..cfg.clone() };
        assert_ne!(run_experiment(&cfg).unwrap(), run_experiment(&other).unwrap());
    }

    #[test]
    fn weighting_rows_cover_blocks_and_estimates() {
        let out = run_experiment(&small("fig-weighting", "D = 5")).unwrap();
        let csv = out.file("fig-weighting.csv").unwrap();
        assert_eq!(csv.lines().count(), 1 + 5 + 2);
        let meta_weights: f64 = csv
            .lines()
            .filter(|l| l.starts_with("block"))
            .map(|l| l.split(',').nth(4).unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((meta_weights - 1.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_requires_a_task_list() {
        let cfg = small("fig-harmonic", "kind = uniform");
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }
}
