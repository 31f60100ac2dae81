//! Dirichlet energy and degree of the power maps `z -> z^k`: the energy is
//! `4 pi |k|` and one of the two holomorphic parts vanishes.

use std::f64::consts::PI;

use nematic_flow::build_atlas;
use nematic_flow::energetics::{degree, split_energies, tension, tension_sup};
use nematic_flow::fields::make_power_map;

fn main() -> nematic_flow::Result<()> {
    let n = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(129);
    let atlas = build_atlas(n, 1.5)?;
    println!("N = {n}");
    println!(
        "{:>3} {:>12} {:>12} {:>12} {:>10} {:>11}",
        "k", "E/4pi|k|", "E_del", "E_delbar", "degree", "sup |tau|"
    );
    for k in [1, 2, 3, -1, -2] {
        let d = make_power_map(&atlas, k)?;
        let (a, b) = split_energies(&atlas, &d);
        let deg = degree(&atlas, &d);
        let tau = tension_sup(&atlas, &tension(&atlas, &d));
        println!(
            "{k:>3} {:>12.6} {a:>12.4e} {b:>12.4e} {:>10.5} {tau:>11.3e}",
            (a + b) / (4.0 * PI * k.abs() as f64),
            deg.raw
        );
    }
    Ok(())
}
