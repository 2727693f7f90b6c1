use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::config::{parse_config_for, ExperimentConfig};
use crate::harness::experiments::{bounds_report_data, run_experiment, ExperimentOutput};
use crate::harness::table::{mean_stderr, Cell, CsvTable};
use crate::meta::{meta_objective, meta_solve_closed_form};
use crate::model::{generate_offline_dataset, sample_task_set, simulate_block};
use crate::numerics::Vector;
use crate::online::{default_radii, estimation_gap, lse_fit, lsa_adapt, AdaptConfig, GapNorm};
use crate::rng::RngStream;

#[derive(Parser, Debug)]
#[command(name = "metasysid", about = "Meta-learning identification of episodic linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Configuration document (`key = value` lines with `[section]` headers).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate an offline dataset and write its trajectories and tasks.
    Simulate(Common),
    /// Fit the meta-initialization in closed form.
    MetaTrain(Common),
    /// Adapt the meta-initialization online on fresh test blocks.
    Adapt(Common),
    /// Least-squares baseline on fresh test blocks.
    Lse(Common),
    /// Evaluate every bound and its Monte-Carlo check.
    Bounds(Common),
    /// Run a named experiment and write its CSV.
    Experiment {
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common, name: Option<&str>) -> Result<ExperimentConfig> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config_for(&text, name)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn offline_dataset(cfg: &ExperimentConfig) -> Result<crate::meta::MetaDataset> {
    let (n, m) = cfg.primary_dims();
    let sampler = cfg.sampler.build(n, m)?;
    generate_offline_dataset(cfg.d_list[0], cfg.horizon, cfg.train_split, &sampler, cfg.noise, &RngStream::new(cfg.seed).child(0))
}

fn simulate(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let ds = offline_dataset(cfg)?;
    let (n, m) = (ds.n(), ds.m());
    let mut header = vec!["block".to_string(), "t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..n).map(|i| format!("w{i}")));
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut traj = CsvTable::new(&refs);
    for (d, b) in ds.blocks().iter().enumerate() {
        for t in 0..=b.horizon() {
            let mut row: Vec<Cell> = vec![d.into(), t.into()];
            row.extend(b.states.column(t).iter().map(|v| Cell::from(*v)));
            if t < b.horizon() {
                row.extend(b.inputs.column(t).iter().map(|v| Cell::from(*v)));
                row.extend(b.noises.column(t).iter().map(|v| Cell::from(*v)));
            } else {
                row.extend((0..m + n).map(|_| Cell::from("")));
            }
            traj.push(row)?;
        }
    }
    let mut tasks = CsvTable::new(&["block", "row", "col", "phi"]);
    for (d, p) in ds.params().iter().enumerate() {
        for c in 0..p.phi().ncols() {
            for r in 0..p.phi().nrows() {
                tasks.push(vec![d.into(), r.into(), c.into(), p.phi()[(r, c)].into()])?;
            }
        }
    }
    Ok(ExperimentOutput {
        files: vec![
            ("trajectories.csv".into(), traj.to_csv_string()?),
            ("tasks.csv".into(), tasks.to_csv_string()?),
        ],
    })
}

fn meta_train(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let ds = offline_dataset(cfg)?;
    let phi = meta_solve_closed_form(&ds, cfg.meta_alpha, None)?;
    let mut t = CsvTable::new(&["row", "col", "phi", "objective", "D", "seed"]);
    let objective = meta_objective(&ds, cfg.meta_alpha, &phi);
    for c in 0..phi.ncols() {
        for r in 0..phi.nrows() {
            t.push(vec![r.into(), c.into(), phi[(r, c)].into(), objective.into(), ds.len().into(), cfg.seed.into()])?;
        }
    }
    Ok(ExperimentOutput {
        files: vec![("meta_init.csv".into(), t.to_csv_string()?)],
    })
}

fn online(cfg: &ExperimentConfig, use_lse: bool) -> Result<ExperimentOutput> {
    let (n, m) = cfg.primary_dims();
    let sampler = cfg.sampler.build(n, m)?;
    let rep = RngStream::new(cfg.seed).child(0);
    let tests = sample_task_set(&sampler, cfg.test_blocks, &rep.child(1))?;
    let steps = *cfg.m_list.iter().max().expect("validated non-empty");
    let trajs = tests
        .iter()
        .enumerate()
        .map(|(i, task)| simulate_block(task, steps, cfg.noise, &Vector::zeros(n), &mut rep.child(2).child(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    if use_lse {
        let mut t = CsvTable::new(&["block", "M", "error", "seed"]);
        for &mm in &cfg.m_list {
            for (i, (task, traj)) in tests.iter().zip(&trajs).enumerate() {
                let est = lse_fit(&traj.z_columns(0, mm), &traj.next_states(0, mm), None)?;
                let e = estimation_gap(&est, task.phi(), GapNorm::Spectral);
                t.push(vec![i.into(), mm.into(), e.into(), cfg.seed.into()])?;
            }
        }
        return Ok(ExperimentOutput {
            files: vec![("lse.csv".into(), t.to_csv_string()?)],
        });
    }
    let phi = meta_solve_closed_form(&offline_dataset(cfg)?, cfg.meta_alpha, None)?;
    let (dp, dz) = default_radii(&tests, cfg.noise, cfg.horizon)?;
    let acfg = AdaptConfig::new(cfg.adapt.alpha[0], steps, cfg.adapt.c_phi.unwrap_or(dp), cfg.adapt.c_z.unwrap_or(dz))?
        .with_phi_norm(cfg.adapt.projection);
    let mut t = CsvTable::new(&[
        "block",
        "M",
        "gap_init",
        "gap_adapted",
        "z_projections",
        "phi_projections",
        "seed",
    ]);
    for (i, (task, traj)) in tests.iter().zip(&trajs).enumerate() {
        let trace = lsa_adapt(&phi, traj, &acfg)?;
        let g0 = estimation_gap(&phi, task.phi(), GapNorm::Spectral);
        for &mm in &cfg.m_list {
            t.push(vec![
                i.into(),
                mm.into(),
                g0.into(),
                estimation_gap(&trace.iterates[mm], task.phi(), GapNorm::Spectral).into(),
                trace.z_projections.into(),
                trace.phi_projections.into(),
                cfg.seed.into(),
            ])?;
        }
    }
    Ok(ExperimentOutput {
        files: vec![("adapt.csv".into(), t.to_csv_string()?)],
    })
}

fn bounds(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (report, mc) = bounds_report_data(cfg)?;
    let mut t = CsvTable::new(&["quantity", "mean", "stderr", "count", "seed"]);
    for (name, v) in &mc {
        let (mean, se) = mean_stderr(v);
        t.push(vec![name.as_str().into(), mean.into(), se.into(), v.len().into(), cfg.seed.into()])?;
    }
    Ok(ExperimentOutput {
        files: vec![("bounds.txt".into(), report.to_kv()), ("bounds.csv".into(), t.to_csv_string()?)],
    })
}

fn execute(command: Command) -> Result<()> {
    let (cfg, out) = match command {
        Command::Simulate(c) => {
            let cfg = load(&c, None)?;
            let out = simulate(&cfg)?;
            (cfg, out)
        }
        Command::MetaTrain(c) => {
            let cfg = load(&c, None)?;
            let out = meta_train(&cfg)?;
            (cfg, out)
        }
        Command::Adapt(c) => {
            let cfg = load(&c, None)?;
            let out = online(&cfg, false)?;
            (cfg, out)
        }
        Command::Lse(c) => {
            let cfg = load(&c, None)?;
            let out = online(&cfg, true)?;
            (cfg, out)
        }
        Command::Bounds(c) => {
            let cfg = load(&c, Some("bounds-report"))?;
            let out = bounds(&cfg)?;
            (cfg, out)
        }
        Command::Experiment { name, common } => {
            let cfg = load(&common, Some(&name))?;
            let out = run_experiment(&cfg)?;
            (cfg, out)
        }
    };
    for path in out.write_to(&cfg.output)? {
        println!("{}", path.display());
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the command, and returns the
/// process exit code: 0 on success, 1 for usage, configuration or I/O errors,
/// 2 for numerical failures.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
