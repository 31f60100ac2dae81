//! Quadrature on the two-chart atlas: total area and the second moment of
//! the height function against their exact values, with the observed order.
//!
//! cargo run --release --example atlas_quadrature [N...]

use std::f64::consts::PI;

use nematic_flow::build_atlas;
use nematic_flow::calculus::integrate_fn;

fn main() -> nematic_flow::Result<()> {
    let mut sizes: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|s| s.parse().ok())
        .collect();
    if sizes.is_empty() {
        sizes = vec![33, 65, 129, 257];
    }
    println!(
        "{:>5} {:>10} {:>14} {:>14} {:>7}",
        "N", "h", "area err", "z^2 err", "order"
    );
    let mut prev: Option<(f64, f64)> = None;
    for n in sizes {
        let atlas = build_atlas(n, 1.5)?;
        let area = integrate_fn(&atlas, |_, _| 1.0) / (4.0 * PI) - 1.0;
        let z2 = integrate_fn(&atlas, |c, k| atlas.point(c, k).z.powi(2)) / (4.0 * PI / 3.0) - 1.0;
        let h = atlas.spacing();
        let order = prev.map_or(String::new(), |(hp, ep)| {
            format!("{:.2}", (ep / area.abs()).ln() / (hp / h).ln())
        });
        println!("{n:>5} {h:>10.3e} {area:>14.3e} {z2:>14.3e} {order:>7}");
        prev = Some((h, area.abs()));
    }
    Ok(())
}
