//! Empirical constant of the Topping inequality
//! `min(E_del, E_delbar) <= C0 ||tau||^2` over perturbed identity maps.

use nematic_flow::build_atlas;
use nematic_flow::diagnostics::{empirical_topping, topping_family, topping_tau_floor};

fn main() -> nematic_flow::Result<()> {
    for n in [65, 129] {
        let atlas = build_atlas(n, 1.5)?;
        let maps = topping_family(&atlas, 1)?;
        let study = empirical_topping(&atlas, &maps, 1.0)?;
        let ratios: Vec<String> = study
            .ratios
            .iter()
            .map(|r| r.map_or("-".into(), |r| format!("{r:.3e}")))
            .collect();
        println!(
            "N={n:<4} floor {:.1e}  sup {:.4e} (map {})",
            topping_tau_floor(&atlas),
            study.sup_ratio,
            study.argmax
        );
        println!("        {}", ratios.join(" "));
    }
    Ok(())
}
