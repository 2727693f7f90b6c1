// Offline stage: simulate historical blocks, fit the meta-initialization in
// closed form, cross-check it against gradient descent, and measure how far
// it lands from fresh tasks.

use metasysid::error::Result;
use metasysid::meta::{meta_objective, meta_solve_closed_form, meta_solve_gd};
use metasysid::model::{generate_offline_dataset, sample_task_set, NoiseConfig, TaskSampler};
use metasysid::online::{estimation_gap, GapNorm};
use metasysid::rng::RngStream;

pub fn run_example() -> Result<String> {
    let sampler = TaskSampler::uniform(1, 1, 0.5, 1.0);
    let noise = NoiseConfig::new(0.1, 0.01)?;
    let root = RngStream::new(7);
    let tests = sample_task_set(&sampler, 50, &root.child(1))?;
    let mut out = String::from("D      objective      mean gap\n");
    for d in [10, 100, 300] {
        let ds = generate_offline_dataset(d, 20, 5, &sampler, noise, &root.child(0))?;
        let phi = meta_solve_closed_form(&ds, 0.01, None)?;
        let gap = tests.iter().map(|t| estimation_gap(&phi, t.phi(), GapNorm::Spectral)).sum::<f64>() / tests.len() as f64;
        out += &format!("{d:<6} {:<14.6e} {gap:.4}\n", meta_objective(&ds, 0.01, &phi));
    }
    let ds = generate_offline_dataset(50, 20, 5, &sampler, noise, &root.child(0))?;
    let closed = meta_solve_closed_form(&ds, 0.01, None)?;
    let gd = meta_solve_gd(&ds, 0.01, 20_000, None)?;
    out += &format!("closed form vs gradient descent: {:.3e}\n", (&closed - &gd.phi).norm());
    Ok(out)
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
