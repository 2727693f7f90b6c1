// Evaluates the theoretical guarantees for a small instance and prints the
// key-value report. `cargo run --release --example bounds_report` uses a
// reduced trial count; the `bounds` CLI subcommand runs the full preset.

use metasysid::bounds::BoundReport;
use metasysid::error::Result;
use metasysid::harness::{parse_config_for, ExperimentConfig};
use metasysid::harness::experiments::bounds_report_data;

pub fn config() -> Result<ExperimentConfig> {
    parse_config_for(
        "[bounds]\ntrials = 5\nenvelope_samples = 200\nbmsb_trials = 1000\n",
        Some("bounds-report"),
    )
}

pub fn run_example() -> Result<String> {
    let (report, mc): (BoundReport, _) = bounds_report_data(&config()?)?;
    let mut out = report.to_kv();
    for (name, values) in mc {
        out += &format!("# {name}: {} samples\n", values.len());
    }
    Ok(out)
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
