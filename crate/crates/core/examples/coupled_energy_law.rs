//! Coupled flow: the basic energy law and the monotone functional along a
//! short run. Writes the time series as CSV to stdout with `--csv`.

use nematic_flow::cli::write_series;
use nematic_flow::energetics::energy_law_residual;
use nematic_flow::evolve::{run, SchemeConfig};
use nematic_flow::fields::{make_power_map, make_random_velocity, perturb_director};
use nematic_flow::{build_atlas, FlowState};

fn main() -> nematic_flow::Result<()> {
    let csv = std::env::args().any(|a| a == "--csv");
    let atlas = build_atlas(65, 1.5)?;
    let d0 = perturb_director(&atlas, &make_power_map(&atlas, 1)?, 7, 0.05)?;
    let u0 = make_random_velocity(&atlas, 8, 3, 0.05)?;
    let s0 = FlowState::new(&atlas, d0, u0);
    let cfg = SchemeConfig {
        t_end: 0.1,
        report_every: 1,
        ..Default::default()
    };
    let traj = run(&atlas, &s0, &cfg)?;
    if csv {
        return write_series(std::io::stdout().lock(), &traj);
    }

    let res = energy_law_residual(&traj.reports)?;
    let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let e = traj.total_energy();
    let rise = e
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    let m = traj.series(|r, _| r.monotone);
    let mrise = m
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    println!("{} steps of {:.3e}", traj.steps, traj.dt);
    println!(
        "E_tot: {:.6} -> {:.6}, largest rise {rise:.2e}",
        e[0].1,
        e.last().unwrap().1
    );
    println!(
        "monotone functional: {:.4e} -> {:.4e}, largest rise {mrise:.2e}",
        m[0].1,
        m.last().unwrap().1
    );
    println!("energy-law residual: max {worst:.3e}");
    println!(
        "div ratio max {:.2e}, mean ratio max {:.2e}",
        traj.max_div_ratio, traj.max_mean_ratio
    );
    Ok(())
}
