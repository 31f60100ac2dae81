//! Discrete differential operators of the round sphere in conformal chart
//! coordinates, quadrature, and elliptic solvers.
//!
//! Every operator is evaluated with centered second-order differences on the
//! active nodes of each chart; the fringe of the output is then refilled from
//! the other chart, so outputs are always chart-consistent.

mod elliptic;
mod sine;

pub(crate) use sine::PoissonSystem;

pub use elliptic::{
    solve_helmholtz, solve_helmholtz_from, solve_poisson, solve_poisson_with_stats,
    EllipticSolveConfig, HelmholtzField, SolveStats,
};

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::charts::{ChartAtlas, ChartId};
use crate::fields::{
    AmbientField, DirectorField, NodeField, NodeValue, ScalarField, VelocityField,
};

/// Sum in a fixed binary-tree order, independent of thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// `sum over both charts of f(c, k) * quad_weight(k)`.
pub fn integrate_fn<F>(atlas: &ChartAtlas, f: F) -> f64
where
    F: Fn(ChartId, usize) -> f64 + Sync,
{
    let q = atlas.quad_weights();
    let mut total = 0.0;
    let mut buf = vec![0.0; q.len()];
    for c in ChartId::ALL {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = if q[k] == 0.0 { 0.0 } else { f(c, k) * q[k] };
        }
        total += pairwise_sum(&buf);
    }
    total
}

pub fn integrate(atlas: &ChartAtlas, f: &ScalarField) -> f64 {
    integrate_fn(atlas, |c, k| f.get(c, k))
}

/// `||f||_{L^2}`.
pub fn l2_norm(atlas: &ChartAtlas, f: &ScalarField) -> f64 {
    integrate_fn(atlas, |c, k| f.get(c, k).powi(2)).sqrt()
}

/// `||u||_{L^2} = (int g0(u, u) dv)^{1/2} = (int sigma^2 |U|^2 dv)^{1/2}`.
pub fn velocity_norm(atlas: &ChartAtlas, u: &VelocityField) -> f64 {
    let s = atlas.sigma();
    integrate_fn(atlas, |c, k| s[k] * s[k] * u.get(c, k).norm_sqr()).sqrt()
}

/// L2 norm of an ambient R^3-valued field.
pub fn ambient_norm(atlas: &ChartAtlas, v: &AmbientField) -> f64 {
    integrate_fn(atlas, |c, k| v.get(c, k).norm_squared()).sqrt()
}

/// `||a - b||_{L^2}` for two director fields.
pub fn director_distance(atlas: &ChartAtlas, a: &DirectorField, b: &DirectorField) -> f64 {
    integrate_fn(atlas, |c, k| (a.get(c, k) - b.get(c, k)).norm_squared()).sqrt()
}

/// Evaluates `f` on active nodes and fills the fringe from the other chart.
pub(crate) fn active_map<T, F>(atlas: &ChartAtlas, f: F) -> NodeField<T>
where
    T: NodeValue,
    F: Fn(ChartId, usize) -> T + Sync,
{
    let mut out = NodeField::from_fn(atlas, |c, k| {
        if atlas.is_active(k) {
            f(c, k)
        } else {
            T::zero()
        }
    });
    out.sync(atlas);
    out
}

/// Centered first differences `(f_x, f_y)` at an interior node.
#[inline]
pub(crate) fn centered<T: NodeValue>(f: &[T], k: usize, n: usize, inv2h: f64) -> (T, T) {
    ((f[k + 1] - f[k - 1]) * inv2h, (f[k + n] - f[k - n]) * inv2h)
}

/// Compact second differences `(f_xx, f_yy)` at an interior node.
#[inline]
pub(crate) fn second<T: NodeValue>(f: &[T], k: usize, n: usize, invh2: f64) -> (T, T) {
    let c = f[k] * 2.0;
    (
        (f[k + 1] + f[k - 1] - c) * invh2,
        (f[k + n] + f[k - n] - c) * invh2,
    )
}

/// Contravariant gradient `sigma^{-2} (f_x, f_y)`.
pub fn grad_scalar(atlas: &ChartAtlas, f: &ScalarField) -> VelocityField {
    let n = atlas.resolution();
    let inv2h = 0.5 / atlas.spacing();
    let s = atlas.sigma();
    active_map(atlas, |c, k| {
        let (fx, fy) = centered(f.chart(c), k, n, inv2h);
        Complex64::new(fx, fy) / (s[k] * s[k])
    })
}

/// `sigma^{-2} d_i(sigma^2 u^i)`.
pub fn div_vector(atlas: &ChartAtlas, u: &VelocityField) -> ScalarField {
    let n = atlas.resolution();
    let inv2h = 0.5 / atlas.spacing();
    let s = atlas.sigma();
    active_map(atlas, |c, k| {
        let uc = u.chart(c);
        let w = |j: usize| s[j] * s[j];
        let ax = (w(k + 1) * uc[k + 1].re - w(k - 1) * uc[k - 1].re) * inv2h;
        let ay = (w(k + n) * uc[k + n].im - w(k - n) * uc[k - n].im) * inv2h;
        (ax + ay) / w(k)
    })
}

/// Laplace-Beltrami operator `sigma^{-2} (5-point flat Laplacian)`, applied
/// componentwise to scalars or ambient vectors.
pub fn laplace<T: NodeValue>(atlas: &ChartAtlas, f: &NodeField<T>) -> NodeField<T> {
    let n = atlas.resolution();
    let invh2 = 1.0 / atlas.spacing().powi(2);
    let s = atlas.sigma();
    active_map(atlas, |c, k| {
        let (fxx, fyy) = second(f.chart(c), k, n, invh2);
        (fxx + fyy) * (1.0 / (s[k] * s[k]))
    })
}

pub fn laplace_scalar(atlas: &ChartAtlas, f: &ScalarField) -> ScalarField {
    laplace(atlas, f)
}

#[inline]
fn parts(v: Complex64) -> [f64; 2] {
    [v.re, v.im]
}

/// Bochner (rough) Laplacian `tr D^2 u` from the Christoffel symbols:
///
/// `(D^2 u)^k = sigma^{-2} sum_i [d_i^2 u^k + d_i G^k_il u^l + 2 G^k_il d_i u^l
///  + G^k_il G^l_im u^m - G^m_ii d_m u^k - G^m_ii G^k_ml u^l]`.
pub fn bochner_laplace_vector(atlas: &ChartAtlas, u: &VelocityField) -> VelocityField {
    let n = atlas.resolution();
    let h = atlas.spacing();
    let (inv2h, invh2) = (0.5 / h, 1.0 / (h * h));
    let s = atlas.sigma();
    let table = atlas.christoffel();
    active_map(atlas, |c, k| {
        let uc = u.chart(c);
        let g = &table[k];
        let v = parts(uc[k]);
        let (ux, uy) = centered(uc, k, n, inv2h);
        let (uxx, uyy) = second(uc, k, n, invh2);
        let d1 = [parts(ux), parts(uy)];
        let lap = parts(uxx + uyy);
        let mut out = [0.0; 2];
        for kk in 0..2 {
            let mut acc = lap[kk];
            for i in 0..2 {
                for l in 0..2 {
                    acc += g.dgamma[i][kk][i][l] * v[l] + 2.0 * g.gamma[kk][i][l] * d1[i][l];
                    for m in 0..2 {
                        acc += g.gamma[kk][i][l] * g.gamma[l][i][m] * v[m];
                    }
                }
                for m in 0..2 {
                    acc -= g.gamma[m][i][i] * d1[m][kk];
                    for l in 0..2 {
                        acc -= g.gamma[m][i][i] * g.gamma[kk][m][l] * v[l];
                    }
                }
            }
            out[kk] = acc / (s[k] * s[k]);
        }
        Complex64::new(out[0], out[1])
    })
}

/// Covariant derivative `(D_a b)^k = a^i d_i b^k + G^k_ij a^i b^j`.
pub fn covariant_advect(atlas: &ChartAtlas, a: &VelocityField, b: &VelocityField) -> VelocityField {
    let n = atlas.resolution();
    let inv2h = 0.5 / atlas.spacing();
    let table = atlas.christoffel();
    active_map(atlas, |c, k| {
        let g = &table[k];
        let av = parts(a.get(c, k));
        let bv = parts(b.get(c, k));
        let (bx, by) = centered(b.chart(c), k, n, inv2h);
        let mut out = bx * av[0] + by * av[1];
        let mut extra = [0.0; 2];
        for (kk, e) in extra.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    *e += g.gamma[kk][i][j] * av[i] * bv[j];
                }
            }
        }
        out += Complex64::new(extra[0], extra[1]);
        out
    })
}

/// Transport term `(u . grad d)^i = u^j d_j d^i`, an ambient vector per node.
pub fn advect_director(atlas: &ChartAtlas, u: &VelocityField, d: &DirectorField) -> AmbientField {
    let n = atlas.resolution();
    let inv2h = 0.5 / atlas.spacing();
    active_map(atlas, |c, k| {
        let (dx, dy) = centered(d.chart(c), k, n, inv2h);
        let v = u.get(c, k);
        dx * v.re + dy * v.im
    })
}

/// Pointwise `|D u|^2_{g0}`; in conformal coordinates the metric factors
/// cancel and this is `sum_{i,k} ((D_i u)^k)^2`.
pub fn covariant_gradient_sq(atlas: &ChartAtlas, u: &VelocityField) -> ScalarField {
    let n = atlas.resolution();
    let inv2h = 0.5 / atlas.spacing();
    let table = atlas.christoffel();
    active_map(atlas, |c, k| {
        let g = &table[k];
        let v = parts(u.get(c, k));
        let (ux, uy) = centered(u.chart(c), k, n, inv2h);
        let d1 = [parts(ux), parts(uy)];
        let mut total = 0.0;
        for i in 0..2 {
            for kk in 0..2 {
                let mut e = d1[i][kk];
                for l in 0..2 {
                    e += g.gamma[kk][i][l] * v[l];
                }
                total += e * e;
            }
        }
        total
    })
}

/// Chart derivatives `(d_x d, d_y d)` of a director at an active node.
#[inline]
pub(crate) fn director_derivatives(
    d: &[Vector3<f64>],
    k: usize,
    n: usize,
    inv2h: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    centered(d, k, n, inv2h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_power_map, make_random_velocity, make_rotation_field};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn atlas(n: usize) -> ChartAtlas {
        ChartAtlas::new(n, 1.5).unwrap()
    }

    fn height(a: &ChartAtlas) -> ScalarField {
        ScalarField::from_fn(a, |c, k| a.point(c, k).z)
    }

    /// Degree-2 harmonic `x1 x2` (eigenvalue -6).
    fn quadratic(a: &ChartAtlas) -> ScalarField {
        ScalarField::from_fn(a, |c, k| {
            let p = a.point(c, k);
            p.x * p.y
        })
    }

    fn sup_rel(a: &ScalarField, b: &ScalarField) -> f64 {
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for (x, y) in a.charts.iter().flatten().zip(b.charts.iter().flatten()) {
            num = num.max((x - y).abs());
            den = den.max(y.abs());
        }
        num / den
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn quadrature_moments() {
        let a = atlas(129);
        let one = ScalarField::from_fn(&a, |_, _| 1.0);
        assert!((integrate(&a, &one) - 4.0 * PI).abs() / (4.0 * PI) < 5e-3);
        let h = height(&a);
        assert!(integrate(&a, &h).abs() < 1e-6);
        let h2 = h.map(|v| v * v);
        let exact = 4.0 * PI / 3.0;
        assert!((integrate(&a, &h2) - exact).abs() / exact < 5e-3);
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let a = atlas(33);
        let f = ScalarField::from_fn(&a, |_, _| 2.5);
        let g = grad_scalar(&a, &f);
        assert!(g.charts.iter().flatten().all(|v| v.norm() == 0.0));
        let l = laplace_scalar(&a, &f);
        assert!(l.charts.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn dirichlet_integral_of_height() {
        let a = atlas(129);
        let g = grad_scalar(&a, &height(&a));
        let e = velocity_norm(&a, &g).powi(2);
        assert!((e - 8.0 * PI / 3.0).abs() / (8.0 * PI / 3.0) < 5e-3, "{e}");
        let ratio = l2_norm(&a, &height(&a)) / e.sqrt();
        assert!((ratio - 0.5f64.sqrt()).abs() < 5e-3);
    }

    #[test]
    fn laplacian_eigenvalues() {
        let a = atlas(129);
        let h = height(&a);
        let lh = laplace_scalar(&a, &h);
        assert!(sup_rel(&lh, &h.map(|v| -2.0 * v)) < 5e-3);
        let q = quadratic(&a);
        let lq = laplace_scalar(&a, &q);
        assert!(sup_rel(&lq, &q.map(|v| -6.0 * v)) < 5e-3);
    }

    #[test]
    fn laplacian_second_order() {
        let errs: Vec<f64> = [65, 129]
            .iter()
            .map(|&n| {
                let a = atlas(n);
                let q = quadratic(&a);
                sup_rel(&laplace_scalar(&a, &q), &q.map(|v| -6.0 * v))
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.8, "{order}");
    }

    #[test]
    fn divergence_of_killing_and_rotated_gradient() {
        let a = atlas(129);
        let u = make_rotation_field(&a, Vector3::new(0.0, 0.6, 0.8), 1.0).unwrap();
        let div = div_vector(&a, &u);
        let sup = div
            .charts
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup < 5e-3, "{sup}");
        // J grad f is divergence free; grad f has divergence = Laplacian.
        let f = quadratic(&a);
        let g = grad_scalar(&a, &f);
        let jg = g.map(|v| v * Complex64::i());
        let d = div_vector(&a, &jg);
        assert!(l2_norm(&a, &d) < 1e-2);
        let dg = div_vector(&a, &g);
        let lap = laplace_scalar(&a, &f);
        assert!(l2_norm(&a, &dg.add_scaled(-1.0, &lap)) < 1e-2 * l2_norm(&a, &lap));
    }

    #[test]
    fn bochner_on_killing_field() {
        let a = atlas(129);
        let u = make_rotation_field(&a, Vector3::z(), 1.0).unwrap();
        let bu = bochner_laplace_vector(&a, &u);
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        let s = a.sigma();
        for c in ChartId::ALL {
            for k in 0..a.node_count() {
                num = num.max(s[k] * (bu.get(c, k) + u.get(c, k)).norm());
                den = den.max(s[k] * u.get(c, k).norm());
            }
        }
        assert!(num / den < 5e-3, "{}", num / den);
    }

    /// Independent closed form of the rough Laplacian in complex notation:
    /// `sigma^{-2} Delta U - 2 sigma^{-1} conj(z) (U_x + i U_y) - U`.
    #[test]
    fn bochner_matches_complex_closed_form() {
        let a = atlas(129);
        // U = z^2 conj(z) + 0.3 i, with analytic derivatives.
        let field = |z: Complex64| z * z * z.conj() + Complex64::new(0.0, 0.3);
        let u = VelocityField::from_fn(&a, |_, k| field(a.coord(k)));
        let bu = bochner_laplace_vector(&a, &u);
        let mut worst: f64 = 0.0;
        for &k in a.active_nodes() {
            let z = a.coord(k);
            if z.norm() > 1.2 {
                continue;
            }
            let s = a.sigma()[k];
            // U_x = 2 z zb + z^2, U_y = i(2 z zb) - i z^2, Laplacian = 4 (d_z d_zb) = 8 z
            let ux = 2.0 * z * z.conj() + z * z;
            let uy = Complex64::i() * 2.0 * z * z.conj() - Complex64::i() * z * z;
            let lap = 8.0 * z;
            let exact = lap / (s * s) - 2.0 / s * z.conj() * (ux + Complex64::i() * uy) - field(z);
            worst = worst.max((bu.get(ChartId::North, k) - exact).norm());
        }
        assert!(worst < 5e-3, "{worst}");
    }

    #[test]
    fn corrupted_christoffel_breaks_bochner() {
        let mut a = atlas(33);
        a.corrupt_christoffel(1.1);
        let u = make_rotation_field(&a, Vector3::z(), 1.0).unwrap();
        let bu = bochner_laplace_vector(&a, &u);
        let k = a.active_nodes()[a.active_nodes().len() / 3];
        assert!((bu.get(ChartId::North, k) + u.get(ChartId::North, k)).norm() > 1e-2);
    }

    #[test]
    fn geodesic_curvature_of_latitude_rotation() {
        let a = atlas(129);
        let u = make_rotation_field(&a, Vector3::z(), 1.0).unwrap();
        let duu = covariant_advect(&a, &u, &u);
        let amb = crate::fields::velocity_to_ambient(&a, &duu);
        let e3 = Vector3::z();
        let mut worst: f64 = 0.0;
        for c in ChartId::ALL {
            for k in 0..a.node_count() {
                let x = a.point(c, k);
                let exact = (e3 - x * x.z) * x.z;
                worst = worst.max((amb.get(c, k) - exact).norm());
            }
        }
        assert!(worst < 5e-3, "{worst}");
    }

    #[test]
    fn transport_of_identity_by_rotation() {
        let a = atlas(129);
        let u = make_rotation_field(&a, Vector3::z(), 1.0).unwrap();
        let d = make_power_map(&a, 1).unwrap();
        let t = advect_director(&a, &u, &d);
        let mut worst: f64 = 0.0;
        for c in ChartId::ALL {
            for k in 0..a.node_count() {
                let exact = Vector3::z().cross(&d.get(c, k));
                worst = worst.max((t.get(c, k) - exact).norm());
            }
        }
        assert!(worst < 5e-3, "{worst}");
        let zero = VelocityField::zeros(&a);
        let t0 = advect_director(&a, &zero, &d);
        assert!(t0.charts.iter().flatten().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn integration_by_parts_and_self_adjointness() {
        let a = atlas(129);
        let f = quadratic(&a);
        let g = height(&a).map(|v| v * v * v);
        let u = make_random_velocity(&a, 11, 3, 1.0).unwrap();
        let divu = div_vector(&a, &u);
        let gf = grad_scalar(&a, &f);
        let s = a.sigma();
        let lhs = integrate_fn(&a, |c, k| f.get(c, k) * divu.get(c, k));
        let rhs = integrate_fn(&a, |c, k| {
            let (x, y) = (gf.get(c, k), u.get(c, k));
            s[k] * s[k] * (x.re * y.re + x.im * y.im)
        });
        assert!((lhs + rhs).abs() < 1e-2, "{}", lhs + rhs);
        let lg = laplace_scalar(&a, &g);
        let lf = laplace_scalar(&a, &f);
        let asym = integrate_fn(&a, |c, k| {
            f.get(c, k) * lg.get(c, k) - g.get(c, k) * lf.get(c, k)
        });
        assert!(asym.abs() < 1e-2, "{asym}");
    }

    #[test]
    fn killing_field_gradient_norm() {
        // For a Killing field |Du|^2 integrates to ||u||^2 times Ric... on the
        // unit sphere int |Du|^2 = -int <u, D^2 u> = ||u||^2 = 8 pi / 3.
        let a = atlas(129);
        let u = make_rotation_field(&a, Vector3::z(), 1.0).unwrap();
        let g2 = covariant_gradient_sq(&a, &u);
        let val = integrate(&a, &g2);
        assert!(
            (val - 8.0 * PI / 3.0).abs() / (8.0 * PI / 3.0) < 5e-3,
            "{val}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn operators_are_linear(a1 in -3.0f64..3.0, b1 in -3.0f64..3.0, seed in 0u64..50) {
            let at = atlas(17);
            let u = make_random_velocity(&at, seed, 3, 1.0).unwrap();
            let v = make_random_velocity(&at, seed + 100, 2, 1.0).unwrap();
            let mut comb = u.clone();
            comb.scale(a1);
            comb.axpy(b1, &v);
            let lhs = bochner_laplace_vector(&at, &comb);
            let mut rhs = bochner_laplace_vector(&at, &u);
            rhs.scale(a1);
            rhs.axpy(b1, &bochner_laplace_vector(&at, &v));
            for (x, y) in lhs.charts.iter().flatten().zip(rhs.charts.iter().flatten()) {
                prop_assert!((x - y).norm() <= 1e-9 * (1.0 + y.norm()));
            }
            let lhs = covariant_advect(&at, &comb, &v);
            let mut rhs = covariant_advect(&at, &u, &v);
            rhs.scale(a1);
            rhs.axpy(b1, &covariant_advect(&at, &v, &v));
            for (x, y) in lhs.charts.iter().flatten().zip(rhs.charts.iter().flatten()) {
                prop_assert!((x - y).norm() <= 1e-9 * (1.0 + y.norm()));
            }
        }
    }
}
