// Few-sample regime: ordinary least squares on the first M samples of a
// block versus adaptation from the meta-initialization.

use metasysid::error::Result;
use metasysid::meta::meta_solve_closed_form;
use metasysid::model::{generate_offline_dataset, sample_task_set, simulate_block, NoiseConfig, TaskSampler};
use metasysid::numerics::Vector;
use metasysid::online::{default_radii, estimation_gap, lsa_adapt, lse_fit, AdaptConfig, GapNorm};
use metasysid::rng::RngStream;

pub fn run_example() -> Result<String> {
    let sampler = TaskSampler::uniform(1, 1, 0.5, 1.0);
    let noise = NoiseConfig::new(1.0, 1.0)?;
    let root = RngStream::new(11);
    let phi_star = meta_solve_closed_form(&generate_offline_dataset(300, 20, 10, &sampler, noise, &root.child(0))?, 0.01, None)?;
    let tests = sample_task_set(&sampler, 100, &root.child(1))?;
    let (c_phi, c_z) = default_radii(&tests, noise, 20)?;
    let cfg = AdaptConfig::new(0.01, 5, c_phi, c_z)?;
    let mut lse = [0.0; 5];
    let mut meta = [0.0; 5];
    for (i, task) in tests.iter().enumerate() {
        let block = simulate_block(task, 5, noise, &Vector::zeros(1), &mut root.child(2).child(i as u64))?;
        let trace = lsa_adapt(&phi_star, &block, &cfg)?;
        for m in 1..=5 {
            let est = lse_fit(&block.z_columns(0, m), &block.next_states(0, m), None)?;
            lse[m - 1] += estimation_gap(&est, task.phi(), GapNorm::Spectral) / tests.len() as f64;
            meta[m - 1] += estimation_gap(&trace.iterates[m], task.phi(), GapNorm::Spectral) / tests.len() as f64;
        }
    }
    let mut out = String::from("M  lse      meta\n");
    for m in 0..5 {
        out += &format!("{}  {:<8.4} {:.4}\n", m + 1, lse[m], meta[m]);
    }
    Ok(out)
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
