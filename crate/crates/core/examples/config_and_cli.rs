//! A key = value experiment config driven through the same runner as the binary.

use stablelab::cli::{run, Command};
use stablelab::config::{schema, ExperimentConfig};

fn main() -> stablelab::Result<()> {
    let out = std::env::temp_dir().join("stablelab_cli");
    let text = format!(
        "alpha = 1.5\ndrift = radial:beta=0.2,c=1,R=1\np = 4\nsteps = 16\npaths = 50000\nout = {}\n",
        out.display()
    );
    let config = ExperimentConfig::from_text(&text, &[])?;
    println!("config hash {}", config.hash());
    for command in [Command::Simulate, Command::Density, Command::SamplerTest] {
        let outcome = run(command, &config)?;
        println!("{command}: {} -> {:?}", outcome.summary, outcome.files);
    }

    for bad in ["alpha = 2.5\n", "alpha = 1.5\ndrift = radial\np = 2\nq = 2\n", "alpah = 1.5\nsteps = x\n"] {
        match ExperimentConfig::from_text(bad, &[]) {
            Err(e) => println!("rejected ({}): {e}", e.kind()),
            Ok(_) => println!("accepted {bad:?}"),
        }
    }
    println!("\n{}", schema().lines().take(5).collect::<Vec<_>>().join("\n"));
    Ok(())
}
