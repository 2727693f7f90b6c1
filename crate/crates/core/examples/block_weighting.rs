// How the meta solution and pooled least squares weight individual blocks
// on a noiseless scalar dataset.

use metasysid::error::Result;
use metasysid::meta::{lse_block_weights, meta_block_weights, meta_solve_closed_form};
use metasysid::model::{generate_offline_dataset, NoiseConfig, TaskSampler};
use metasysid::rng::RngStream;

pub fn run_example() -> Result<String> {
    let sampler = TaskSampler::uniform(1, 1, 0.5, 1.0);
    let ds = generate_offline_dataset(8, 20, 5, &sampler, NoiseConfig::new(0.1, 0.0)?, &RngStream::new(2))?;
    let meta = meta_block_weights(&ds, 0.01);
    let lse = lse_block_weights(&ds);
    let mut out = String::from("a       b       meta    lse\n");
    for (p, (wm, wl)) in ds.params().iter().zip(meta.iter().zip(&lse)) {
        out += &format!("{:<7.4} {:<7.4} {wm:<7.4} {wl:.4}\n", p.a()[(0, 0)], p.b()[(0, 0)]);
    }
    let phi = meta_solve_closed_form(&ds, 0.01, None)?;
    let spread = |w: &[f64]| w.iter().cloned().fold(0.0, f64::max) / w.iter().cloned().fold(f64::INFINITY, f64::min);
    out += &format!("meta solution a = {:.4}, b = {:.4}\n", phi[(0, 0)], phi[(1, 0)]);
    out += &format!("max/min weight: meta {:.2}, lse {:.2}\n", spread(&meta), spread(&lse));
    Ok(out)
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
