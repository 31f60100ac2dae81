//! Largest local energy over geodesic balls, as a fraction of `8 pi`, for
//! maps of increasing degree and ball radii.

use std::f64::consts::PI;

use nematic_flow::diagnostics::concentration_scan;
use nematic_flow::fields::make_power_map;
use nematic_flow::{build_atlas, FlowState, VelocityField};

fn main() -> nematic_flow::Result<()> {
    let atlas = build_atlas(65, 1.5)?;
    let radii = [0.25, 0.5, 1.0, PI / 2.0, PI];
    print!("{:>3}", "k");
    for r in radii {
        print!(" {:>9}", format!("r={r:.2}"));
    }
    println!();
    for k in [1, 2, 3] {
        let state = FlowState::new(
            &atlas,
            make_power_map(&atlas, k)?,
            VelocityField::zeros(&atlas),
        );
        print!("{k:>3}");
        for r in radii {
            print!(
                " {:>9.4}",
                concentration_scan(&atlas, &state, r).threshold_ratio
            );
        }
        println!();
    }
    Ok(())
}
