//! A run described by a TOML configuration, written out the same way as the
//! `run` subcommand: series CSV, snapshots and a manifest.

use nematic_flow::cli::{execute_run, read_column, read_snapshot, RunConfig};

const CONFIG: &str = r#"
[atlas]
n = 33

[scheme]
t_end = 0.05
report_every = 20
snapshot_every = 200

[initial_data]
builder = "perturbed_power_map"
seed = 2
params = { k = 1, eps = 0.05, velocity = "random", velocity_amplitude = 0.05 }

[diagnostics]
scan_radius = 0.5
reference = { builder = "power_map" }
"#;

fn main() -> nematic_flow::Result<()> {
    let cfg = RunConfig::parse(CONFIG)?;
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("nematic-flow-example"));
    let art = execute_run(&cfg, &dir)?;
    for f in &art.manifest.files {
        println!("{}  {}", &f.sha256[..16], f.name);
    }
    let err = read_column(&dir.join(&cfg.output.csv), "director_l2_error")?;
    println!(
        "distance to identity: {:.4e} -> {:.4e}",
        err[0].1,
        err.last().unwrap().1
    );
    let last = art
        .manifest
        .files
        .iter()
        .rev()
        .find(|f| f.name.ends_with(".els2"))
        .unwrap();
    let snap = read_snapshot(&dir.join(&last.name))?;
    println!("last snapshot at t = {}, N = {}", snap.state.time, snap.n);
    Ok(())
}
