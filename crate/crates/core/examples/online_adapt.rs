// Online stage: start from the meta-initialization and run projected
// stochastic gradient steps on a few samples of a new block.

use metasysid::error::Result;
use metasysid::meta::meta_solve_closed_form;
use metasysid::model::{generate_offline_dataset, sample_task, simulate_block, NoiseConfig, TaskSampler};
use metasysid::numerics::Vector;
use metasysid::online::{default_radii, estimation_gap, lsa_adapt, AdaptConfig, GapNorm};
use metasysid::rng::RngStream;

pub fn run_example() -> Result<String> {
    let sampler = TaskSampler::uniform(1, 1, 0.5, 1.0);
    let noise = NoiseConfig::new(0.1, 0.01)?;
    let root = RngStream::new(3);
    let ds = generate_offline_dataset(300, 20, 10, &sampler, noise, &root.child(0))?;
    let phi_star = meta_solve_closed_form(&ds, 0.01, None)?;
    let task = sample_task(&sampler, 0, &mut root.child(1))?;
    let block = simulate_block(&task, 15, noise, &Vector::zeros(1), &mut root.child(2))?;
    let (c_phi, c_z) = default_radii(ds.params(), noise, 20)?;
    let mut out = String::from("alpha  M   gap\n");
    for alpha in [0.01, 0.1] {
        let trace = lsa_adapt(&phi_star, &block, &AdaptConfig::new(alpha, 15, c_phi, c_z)?)?;
        for m in [0, 5, 10, 15] {
            out += &format!("{alpha:<6} {m:<3} {:.4}\n", estimation_gap(&trace.iterates[m], task.phi(), GapNorm::Spectral));
        }
    }
    Ok(out)
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
