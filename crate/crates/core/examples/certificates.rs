//! Condition certificates for a few kinds of initial data, using constants
//! estimated on the grid.

use nalgebra::Vector3;

use nematic_flow::cli::format_certificate;
use nematic_flow::diagnostics::{check_initial_conditions, estimate_constants, DEFAULT_MARGIN};
use nematic_flow::fields::{
    make_constant, make_hemisphere_director, make_power_map, make_random_velocity,
};
use nematic_flow::{build_atlas, FlowState, VelocityField};

fn main() -> nematic_flow::Result<()> {
    let atlas = build_atlas(65, 1.5)?;
    let profile = estimate_constants(&atlas, 100, 1, 1.0)?;
    let still = VelocityField::zeros(&atlas);
    let cases = [
        (
            "constant director",
            FlowState::new(&atlas, make_constant(&atlas, Vector3::z())?, still.clone()),
        ),
        (
            "identity map",
            FlowState::new(&atlas, make_power_map(&atlas, 1)?, still.clone()),
        ),
        (
            "degree 2 map",
            FlowState::new(&atlas, make_power_map(&atlas, 2)?, still),
        ),
        (
            "hemisphere data, moving fluid",
            FlowState::new(
                &atlas,
                make_hemisphere_director(&atlas, 3, 0.4)?,
                make_random_velocity(&atlas, 4, 3, 0.1)?,
            ),
        ),
    ];
    for (name, state) in &cases {
        println!("== {name}");
        print!(
            "{}",
            format_certificate(&check_initial_conditions(
                &atlas,
                state,
                &profile,
                DEFAULT_MARGIN
            ))
        );
    }
    Ok(())
}
