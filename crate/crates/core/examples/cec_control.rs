// Certainty-equivalent control: design an LQR gain on an adapted model and
// evaluate it on the true block.

use metasysid::control::{cec_gain, is_stabilizing, lqr_cost_empirical, LqrWeights};
use metasysid::error::Result;
use metasysid::model::{simulate_block, NoiseConfig, SystemParams};
use metasysid::numerics::{Mat, Vector};
use metasysid::online::{estimation_gap, GapNorm};
use metasysid::online::{lsa_adapt, AdaptConfig};
use metasysid::rng::RngStream;

pub fn run_example() -> Result<String> {
    let truth = SystemParams::new(
        Mat::from_row_slice(2, 2, &[0.98, 0.3, 0.0, 0.9]),
        Mat::from_row_slice(2, 1, &[0.0, 1.0]),
    )?;
    let guess = Mat::from_row_slice(3, 2, &[0.9, 0.0, 0.1, 0.9, 0.1, 0.8]);
    let noise = NoiseConfig::new(1.0, 0.01)?;
    let block = simulate_block(&truth, 500, noise, &Vector::zeros(2), &mut RngStream::new(5))?;
    let adapted = lsa_adapt(&guess, &block, &AdaptConfig::new(0.01, 500, 5.0, 10.0)?)?;
    let est = SystemParams::from_phi(adapted.last())?;
    let w = LqrWeights::identity(2, 1);
    let mut out = String::new();
    for (label, model) in [("initial", SystemParams::from_phi(&guess)?), ("adapted", est)] {
        let k = cec_gain(model.a(), model.b(), &w)?;
        let (radius, ok) = is_stabilizing(truth.a(), truth.b(), &k)?;
        out += &format!(
            "{label}: model error {:.4}, closed-loop radius {radius:.4}",
            estimation_gap(model.phi(), truth.phi(), GapNorm::Spectral)
        );
        if ok {
            let cost = lqr_cost_empirical(&truth, &k, &w, 2000, 0.01, 8, &RngStream::new(9))?;
            out += &format!(", average cost {cost:.5}");
        }
        out += "\n";
    }
    Ok(out)
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
