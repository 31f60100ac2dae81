//! Discrete operators against spherical harmonics: the Laplacian on degree 1
//! and 2 harmonics, the Bochner Laplacian on a Killing field and the
//! Poisson solve.

use nalgebra::Vector3;

use nematic_flow::calculus::{
    bochner_laplace_vector, laplace_scalar, solve_poisson, EllipticSolveConfig,
};
use nematic_flow::fields::{make_rotation_field, NodeField, NodeValue};
use nematic_flow::{build_atlas, ChartAtlas, ChartId, ScalarField};

fn sup_rel<T: NodeValue>(
    atlas: &ChartAtlas,
    a: &NodeField<T>,
    b: &NodeField<T>,
    norm: impl Fn(T) -> f64,
) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for c in ChartId::ALL {
        for &k in atlas.active_nodes() {
            num = num.max(norm(a.get(c, k) - b.get(c, k)));
            den = den.max(norm(b.get(c, k)));
        }
    }
    num / den
}

fn main() -> nematic_flow::Result<()> {
    for n in [33, 65, 129] {
        let atlas = build_atlas(n, 1.5)?;
        let y1 = ScalarField::from_fn(&atlas, |c, k| atlas.point(c, k).z);
        let y2 = ScalarField::from_fn(&atlas, |c, k| {
            let x = atlas.point(c, k);
            x.x * x.y + 0.5 * x.y * x.z
        });
        let e1 = sup_rel(
            &atlas,
            &laplace_scalar(&atlas, &y1),
            &y1.map(|v| -2.0 * v),
            f64::abs,
        );
        let e2 = sup_rel(
            &atlas,
            &laplace_scalar(&atlas, &y2),
            &y2.map(|v| -6.0 * v),
            f64::abs,
        );

        let u = make_rotation_field(&atlas, Vector3::new(1.0, 2.0, 2.0) / 3.0, 1.0)?;
        let ek = sup_rel(
            &atlas,
            &bochner_laplace_vector(&atlas, &u),
            &u.map(|v| -v),
            |v| v.norm(),
        );

        let phi = solve_poisson(
            &atlas,
            &y2.map(|v| -6.0 * v),
            &EllipticSolveConfig::default(),
        )?;
        let ep = sup_rel(&atlas, &phi, &y2, f64::abs);
        println!("N={n:<4} Y1 {e1:.3e}  Y2 {e2:.3e}  Killing {ek:.3e}  Poisson {ep:.3e}");
    }
    Ok(())
}
