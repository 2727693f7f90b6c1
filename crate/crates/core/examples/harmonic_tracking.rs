// Tracking a system that alternates between two modes: adaptation starts
// from the midpoint of the modes and is run on the active one.

use metasysid::error::Result;
use metasysid::harness::experiments::harmonic_traces;
use metasysid::harness::parse_config_for;

pub fn run_example() -> Result<String> {
    let cfg = parse_config_for("test_blocks = 40", Some("fig-harmonic"))?;
    let traces = harmonic_traces(&cfg)?;
    let tol = cfg.adapt.tolerance;
    let mut out = String::from("step  mean error  share below tolerance\n");
    let steps = traces[0].len();
    for s in (0..steps).step_by(5).chain([steps - 1]) {
        let errs: Vec<f64> = traces.iter().map(|t| t[s]).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let below = errs.iter().filter(|e| **e < tol).count() as f64 / errs.len() as f64;
        out += &format!("{s:<5} {mean:<11.4} {below:.2}\n");
    }
    Ok(out)
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
