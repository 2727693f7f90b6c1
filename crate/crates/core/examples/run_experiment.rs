// Runs a named experiment from a configuration document and writes its CSV.
//
// `cargo run --release --example run_experiment -- fig-lse-vs-meta out/`

use metasysid::error::Result;
use metasysid::harness::{parse_config_for, run_experiment};

pub fn run_example() -> Result<String> {
    let cfg = parse_config_for("[experiment]\ntest_blocks = 10\n[data]\nD = 20\n", Some("fig-adapt-vs-M"))?;
    Ok(run_experiment(&cfg)?.files[0].1.clone())
}

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.as_slice() {
        [name, dir] => {
            let mut cfg = parse_config_for("", Some(name))?;
            cfg.output = dir.into();
            for p in run_experiment(&cfg)?.write_to(&cfg.output)? {
                println!("{}", p.display());
            }
        }
        _ => print!("{}", run_example()?),
    }
    Ok(())
}
