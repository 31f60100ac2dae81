//! Node fields on the two-chart atlas, initial-data builders and the
//! pointwise constraint `|d| = 1`.
//!
//! Directors are stored as ambient unit vectors in R^3 (identical in both
//! charts). Velocities are stored as contravariant chart components packed
//! into one complex number `U = u^1 + i u^2`; under the transition `w = 1/z`
//! they transform as `U_w = -w^2 U_z`.

use std::ops::{Add, AddAssign, Mul, Sub};

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::calculus::velocity_norm;
use crate::charts::{ChartAtlas, ChartId};
use crate::error::{Error, Result};

/// Values that can live on atlas nodes and be interpolated between charts.
pub trait NodeValue:
    Copy
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + AddAssign
    + Mul<f64, Output = Self>
    + PartialEq
{
    fn zero() -> Self;

    /// Maps a value carried over from the other chart into the chart whose
    /// own coordinate at the receiving node is `zeta`.
    #[inline]
    fn transition(self, _zeta: Complex64) -> Self {
        self
    }
}

impl NodeValue for f64 {
    #[inline]
    fn zero() -> Self {
        0.0
    }
}

impl NodeValue for Vector3<f64> {
    #[inline]
    fn zero() -> Self {
        Vector3::zeros()
    }
}

impl NodeValue for Complex64 {
    #[inline]
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }

    /// Tangent vectors push forward by the derivative of `1/z`, which is
    /// `-zeta^2` when written in the receiving coordinate `zeta`.
    #[inline]
    fn transition(self, zeta: Complex64) -> Self {
        -(zeta * zeta) * self
    }
}

/// A value per node for both charts.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField<T> {
    pub charts: [Vec<T>; 2],
}

pub type ScalarField = NodeField<f64>;
pub type PressureField = ScalarField;
pub type DirectorField = NodeField<Vector3<f64>>;
/// Ambient R^3-valued field (tension, transport terms, embedded velocities).
pub type AmbientField = NodeField<Vector3<f64>>;
pub type VelocityField = NodeField<Complex64>;

impl<T: NodeValue> NodeField<T> {
    pub fn zeros(atlas: &ChartAtlas) -> Self {
        let n = atlas.node_count();
        NodeField {
            charts: [vec![T::zero(); n], vec![T::zero(); n]],
        }
    }

    pub fn from_fn<F>(atlas: &ChartAtlas, f: F) -> Self
    where
        F: Fn(ChartId, usize) -> T + Sync,
    {
        let n = atlas.node_count();
        let charts = ChartId::ALL.map(|c| (0..n).into_par_iter().map(|k| f(c, k)).collect());
        NodeField { charts }
    }

    #[inline]
    pub fn chart(&self, c: ChartId) -> &[T] {
        &self.charts[c.index()]
    }

    #[inline]
    pub fn chart_mut(&mut self, c: ChartId) -> &mut [T] {
        &mut self.charts[c.index()]
    }

    #[inline]
    pub fn get(&self, c: ChartId, node: usize) -> T {
        self.charts[c.index()][node]
    }

    pub fn map<U: NodeValue, F: Fn(T) -> U + Sync>(&self, f: F) -> NodeField<U> {
        NodeField {
            charts: [
                self.charts[0].par_iter().map(|&v| f(v)).collect(),
                self.charts[1].par_iter().map(|&v| f(v)).collect(),
            ],
        }
    }

    /// `self + a * other`, nodewise.
    pub fn add_scaled(&self, a: f64, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(a, other);
        out
    }

    /// `self += a * other`, nodewise.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (dst, src) in self.charts.iter_mut().zip(&other.charts) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s * a;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for chart in self.charts.iter_mut() {
            for v in chart.iter_mut() {
                *v = *v * a;
            }
        }
    }

    /// Refills every fringe node from the other chart (bicubic interpolation
    /// of active values followed by the transition rule). Active values are
    /// never modified, so the operation is idempotent.
    pub fn sync(&mut self, atlas: &ChartAtlas) {
        let [north, south] = &mut self.charts;
        fill_fringe(atlas, north, south);
        fill_fringe(atlas, south, north);
    }

    /// Refills only the fringe of chart `c` from the other chart.
    pub fn sync_chart(&mut self, atlas: &ChartAtlas, c: ChartId) {
        let [north, south] = &mut self.charts;
        match c {
            ChartId::North => fill_fringe(atlas, north, south),
            ChartId::South => fill_fringe(atlas, south, north),
        }
    }
}

fn fill_fringe<T: NodeValue>(atlas: &ChartAtlas, target: &mut [T], source: &[T]) {
    for f in atlas.fringe() {
        let mut acc = T::zero();
        for (&s, &w) in f.sources.iter().zip(&f.weights) {
            acc += source[s] * w;
        }
        target[f.node] = acc.transition(f.zeta);
    }
}

/// Free-function form of [`NodeField::sync`].
pub fn sync_overlap<T: NodeValue>(atlas: &ChartAtlas, field: &NodeField<T>) -> NodeField<T> {
    let mut out = field.clone();
    out.sync(atlas);
    out
}

/// The complete flow state `(t, d, u, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub time: f64,
    pub director: DirectorField,
    pub velocity: VelocityField,
    pub pressure: PressureField,
}

impl FlowState {
    pub fn new(atlas: &ChartAtlas, director: DirectorField, velocity: VelocityField) -> Self {
        FlowState {
            time: 0.0,
            director,
            velocity,
            pressure: ScalarField::zeros(atlas),
        }
    }
}

// ---------------------------------------------------------------------------
// Conversions between chart components and ambient vectors.

/// Ambient R^3 representation `u^1 dP/dx + u^2 dP/dy` of a velocity field.
pub fn velocity_to_ambient(atlas: &ChartAtlas, u: &VelocityField) -> AmbientField {
    AmbientField::from_fn(atlas, |c, k| {
        let [tx, ty] = atlas.tangents(c, k);
        let v = u.get(c, k);
        tx * v.re + ty * v.im
    })
}

/// Chart components of an ambient tangent field (normal parts are dropped).
pub fn ambient_to_velocity(atlas: &ChartAtlas, v: &AmbientField) -> VelocityField {
    VelocityField::from_fn(atlas, |c, k| {
        ambient_vector_to_chart(atlas, c, k, &v.get(c, k))
    })
}

#[inline]
pub fn ambient_vector_to_chart(
    atlas: &ChartAtlas,
    c: ChartId,
    k: usize,
    v: &Vector3<f64>,
) -> Complex64 {
    let [tx, ty] = atlas.tangents(c, k);
    let s2 = atlas.sigma()[k].powi(2);
    Complex64::new(v.dot(&tx) / s2, v.dot(&ty) / s2)
}

// ---------------------------------------------------------------------------
// Builders.

fn unit_check(p: &Vector3<f64>, what: &str) -> Result<Vector3<f64>> {
    if (p.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "{what} must be a unit vector, got |p| = {}",
            p.norm()
        )));
    }
    Ok(*p)
}

/// Inverse stereographic image of `z^k` (k > 0) or `conj(z)^|k|` (k < 0).
pub fn make_power_map(atlas: &ChartAtlas, k: i32) -> Result<DirectorField> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "power map needs k != 0; use make_constant".into(),
        ));
    }
    let m = k.unsigned_abs() as i32;
    Ok(DirectorField::from_fn(atlas, |c, node| {
        let z = atlas.coord(node);
        let base = if k > 0 { z } else { z.conj() };
        // In the South chart the same map reads w -> w^k (resp. conj(w)^|k|),
        // because 1/z^k = w^k.
        crate::charts::chart_point(c, base.powi(m))
    }))
}

pub fn make_constant(atlas: &ChartAtlas, p: Vector3<f64>) -> Result<DirectorField> {
    let p = unit_check(&p, "constant director")?;
    Ok(DirectorField::from_fn(atlas, |_, _| p))
}

/// Rigid rotation `a * axis x X` written in chart components.
pub fn make_rotation_field(
    atlas: &ChartAtlas,
    axis: Vector3<f64>,
    amplitude: f64,
) -> Result<VelocityField> {
    let axis = unit_check(&axis, "rotation axis")?;
    Ok(VelocityField::from_fn(atlas, |c, k| {
        let x = atlas.point(c, k);
        ambient_vector_to_chart(atlas, c, k, &(axis.cross(&x) * amplitude))
    }))
}

/// A random degree-`l` spherical harmonic `Re[e^{i phi} ((q1 + i q2) . x)^l]`
/// with `q1, q2` a random orthonormal pair (the complex vector is null, so the
/// homogeneous polynomial is harmonic).
#[derive(Debug, Clone, Copy)]
pub struct RandomHarmonic {
    pub degree: u32,
    pub coefficient: f64,
    a_re: Vector3<f64>,
    a_im: Vector3<f64>,
    phase: Complex64,
}

impl RandomHarmonic {
    pub fn sample<R: Rng>(rng: &mut R, degree: u32, coefficient: f64) -> Self {
        let mut normal = || -> Vector3<f64> {
            Vector3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            )
        };
        let q1 = normal().normalize();
        let mut q2 = normal();
        q2 -= q1 * q1.dot(&q2);
        let q2 = q2.normalize();
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        RandomHarmonic {
            degree,
            coefficient,
            a_re: q1,
            a_im: q2,
            phase: Complex64::from_polar(1.0, phi),
        }
    }

    #[inline]
    fn ax(&self, x: &Vector3<f64>) -> Complex64 {
        Complex64::new(self.a_re.dot(x), self.a_im.dot(x))
    }

    pub fn value(&self, x: &Vector3<f64>) -> f64 {
        self.coefficient * (self.phase * self.ax(x).powu(self.degree)).re
    }

    /// Gradient of the homogeneous extension to R^3; its tangential part is
    /// the surface gradient on the sphere.
    pub fn ambient_gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        if self.degree == 0 {
            return Vector3::zeros();
        }
        let c = self.phase * self.ax(x).powu(self.degree - 1) * self.degree as f64;
        (self.a_re * c.re - self.a_im * c.im) * self.coefficient
    }
}

/// Stream-function velocity `u = X x grad(psi)`, with `psi` a random sum of
/// harmonics of degrees `1..=modes`, scaled so that `||u|| = amplitude`.
pub fn make_random_velocity(
    atlas: &ChartAtlas,
    seed: u64,
    modes: u32,
    amplitude: f64,
) -> Result<VelocityField> {
    if modes < 1 {
        return Err(Error::InvalidArgument(
            "random velocity needs modes >= 1".into(),
        ));
    }
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidArgument(
            "velocity amplitude must be >= 0".into(),
        ));
    }
    if amplitude == 0.0 {
        return Ok(VelocityField::zeros(atlas));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let harmonics: Vec<RandomHarmonic> = (1..=modes)
        .map(|l| {
            let c: f64 = rng.sample(StandardNormal);
            RandomHarmonic::sample(&mut rng, l, c / l as f64)
        })
        .collect();
    let mut u = VelocityField::from_fn(atlas, |c, k| {
        let x = atlas.point(c, k);
        let grad = harmonics
            .iter()
            .fold(Vector3::zeros(), |acc, h| acc + h.ambient_gradient(&x));
        ambient_vector_to_chart(atlas, c, k, &x.cross(&grad))
    });
    let norm = velocity_norm(atlas, &u);
    u.scale(amplitude / norm);
    Ok(u)
}

/// Adds a smooth tangent perturbation of sup-norm `amplitude` and projects
/// back to the sphere.
///
/// The perturbation is `sum_c e_c F_c(x)` with each `F_c` a random
/// combination of degree 3 and 4 harmonics, projected onto the tangent plane
/// of `d`. For the identity map this content is L2-orthogonal to the
/// infinitesimal Moebius motions, so it excites only decaying modes at first
/// order.
pub fn perturb_director(
    atlas: &ChartAtlas,
    d: &DirectorField,
    seed: u64,
    amplitude: f64,
) -> Result<DirectorField> {
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidArgument(
            "perturbation amplitude must be >= 0".into(),
        ));
    }
    if amplitude == 0.0 {
        return Ok(d.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms: Vec<(usize, RandomHarmonic)> = Vec::new();
    for comp in 0..3 {
        for l in [3u32, 4] {
            let c: f64 = rng.sample(StandardNormal);
            terms.push((comp, RandomHarmonic::sample(&mut rng, l, c)));
        }
    }
    let raw = AmbientField::from_fn(atlas, |c, k| {
        let x = atlas.point(c, k);
        let mut f = Vector3::zeros();
        for (comp, h) in &terms {
            f[*comp] += h.value(&x);
        }
        let dk = d.get(c, k);
        f - dk * dk.dot(&f)
    });
    let sup = raw
        .charts
        .iter()
        .flatten()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    if sup == 0.0 {
        return Ok(d.clone());
    }
    let mut out = d.add_scaled(amplitude / sup, &raw);
    renormalize_in_place(&mut out)?;
    Ok(out)
}

/// Director with values in the open upper hemisphere: `normalize(e3 + F)` with
/// `F` a random horizontal field built from harmonics of degree 1..=3 scaled
/// to sup-norm `tilt`.
pub fn make_hemisphere_director(atlas: &ChartAtlas, seed: u64, tilt: f64) -> Result<DirectorField> {
    if !(tilt >= 0.0) {
        return Err(Error::InvalidArgument("tilt must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms: Vec<(usize, RandomHarmonic)> = Vec::new();
    for comp in 0..2 {
        for l in 1u32..=3 {
            let c: f64 = rng.sample(StandardNormal);
            terms.push((comp, RandomHarmonic::sample(&mut rng, l, c)));
        }
    }
    let raw = AmbientField::from_fn(atlas, |c, k| {
        let x = atlas.point(c, k);
        let mut f = Vector3::zeros();
        for (comp, h) in &terms {
            f[*comp] += h.value(&x);
        }
        f
    });
    let sup = raw
        .charts
        .iter()
        .flatten()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let s = if sup > 0.0 { tilt / sup } else { 0.0 };
    let e3 = Vector3::new(0.0, 0.0, 1.0);
    Ok(raw.map(|f| (e3 + f * s).normalize()))
}

/// Pointwise projection `d / |d|`.
pub fn renormalize(d: &DirectorField) -> Result<DirectorField> {
    let mut out = d.clone();
    renormalize_in_place(&mut out)?;
    Ok(out)
}

pub fn renormalize_in_place(d: &mut DirectorField) -> Result<()> {
    for c in ChartId::ALL {
        for (node, v) in d.chart_mut(c).iter_mut().enumerate() {
            let n = v.norm();
            if !(n >= 0.1) {
                return Err(Error::Singularity {
                    chart: c,
                    node,
                    norm: n,
                });
            }
            *v /= n;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{div_vector, integrate, l2_norm};
    use crate::energetics::split_energies;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn atlas(n: usize) -> ChartAtlas {
        ChartAtlas::new(n, 1.5).unwrap()
    }

    #[test]
    fn constant_builder_checks_norm() {
        let a = atlas(17);
        assert!(make_constant(&a, Vector3::new(0.0, 0.0, 2.0)).is_err());
        let d = make_constant(&a, Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(d.charts.iter().flatten().all(|v| *v == Vector3::x()));
    }

    #[test]
    fn power_map_charts_agree() {
        let a = atlas(33);
        for k in [1, 2, -1, 3] {
            let d = make_power_map(&a, k).unwrap();
            for f in a.fringe().iter().step_by(7) {
                // The analytic value at a fringe node must equal the
                // analytic value of the other chart at 1/zeta.
                let w = f.zeta.inv();
                let base = if k > 0 { w } else { w.conj() };
                let p = crate::charts::chart_point(ChartId::South, base.powi(k.abs()));
                assert!((d.get(ChartId::North, f.node) - p).norm() < 1e-12);
            }
        }
        assert!(make_power_map(&a, 0).is_err());
    }

    #[test]
    fn identity_map_is_the_chart_point() {
        let a = atlas(17);
        let d = make_power_map(&a, 1).unwrap();
        for c in ChartId::ALL {
            for k in 0..a.node_count() {
                assert!((d.get(c, k) - a.point(c, k)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn velocity_transition_round_trip() {
        let zeta = Complex64::new(1.3, -0.4);
        let v = Complex64::new(0.7, 0.2);
        let there = v.transition(zeta.inv());
        let back = there.transition(zeta);
        assert!((back - v).norm() < 1e-12);
    }

    #[test]
    fn velocity_transition_matches_ambient() {
        let a = atlas(33);
        let u = make_rotation_field(&a, Vector3::new(0.0, 0.6, 0.8), 1.0).unwrap();
        let mut synced = u.clone();
        synced.sync(&a);
        let amb = velocity_to_ambient(&a, &synced);
        let exact = velocity_to_ambient(&a, &u);
        let mut worst: f64 = 0.0;
        for c in ChartId::ALL {
            for f in a.fringe() {
                worst = worst.max((amb.get(c, f.node) - exact.get(c, f.node)).norm());
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn rotation_field_transition_consistency_fine_grid() {
        let a = atlas(129);
        let u = make_rotation_field(&a, Vector3::z(), 1.0).unwrap();
        let synced = sync_overlap(&a, &u);
        let amb = velocity_to_ambient(&a, &synced);
        let exact = velocity_to_ambient(&a, &u);
        let worst = ChartId::ALL
            .iter()
            .flat_map(|&c| a.fringe().iter().map(move |f| (c, f.node)))
            .map(|(c, k)| (amb.get(c, k) - exact.get(c, k)).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn sync_is_idempotent() {
        let a = atlas(33);
        let u = make_random_velocity(&a, 3, 4, 1.0).unwrap();
        let once = sync_overlap(&a, &u);
        let twice = sync_overlap(&a, &once);
        assert_eq!(once, twice);
    }

    #[test]
    fn step_scalar_sync_stays_in_unit_interval() {
        let a = atlas(33);
        let mut f = ScalarField::zeros(&a);
        f.chart_mut(ChartId::South)
            .iter_mut()
            .for_each(|v| *v = 1.0);
        f.sync(&a);
        let north = f.chart(ChartId::North);
        assert!(north.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
        // fringe of North now carries the South value
        assert!(a
            .fringe()
            .iter()
            .all(|s| (north[s.node] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rotation_kinetic_energy() {
        let a = atlas(129);
        for axis in [Vector3::z(), Vector3::x()] {
            let u = make_rotation_field(&a, axis, 1.0).unwrap();
            let ke = 0.5 * velocity_norm(&a, &u).powi(2);
            assert!(
                (ke - 4.0 * PI / 3.0).abs() / (4.0 * PI / 3.0) < 5e-3,
                "{ke}"
            );
        }
        let zero = make_rotation_field(&a, Vector3::z(), 0.0).unwrap();
        assert!(zero.charts.iter().flatten().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn random_velocity_contract() {
        let a = atlas(129);
        let u = make_random_velocity(&a, 1, 4, 0.05).unwrap();
        assert!((velocity_norm(&a, &u) - 0.05).abs() < 1e-10);
        let div = l2_norm(&a, &div_vector(&a, &u));
        assert!(div / 0.05 <= 1e-2, "{}", div / 0.05);
        let u2 = make_random_velocity(&a, 2, 4, 0.05).unwrap();
        assert_ne!(u, u2);
        assert!((velocity_norm(&a, &u2) - 0.05).abs() < 1e-10);
        assert_eq!(u, make_random_velocity(&a, 1, 4, 0.05).unwrap());
        let z = make_random_velocity(&a, 1, 4, 0.0).unwrap();
        assert!(z.charts.iter().flatten().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn renormalize_examples() {
        let a = atlas(17);
        let mut d = make_constant(&a, Vector3::z()).unwrap();
        assert_eq!(renormalize(&d).unwrap(), d);
        d.chart_mut(ChartId::North)[5] = Vector3::new(0.0, 0.0, 0.5);
        let r = renormalize(&d).unwrap();
        assert_eq!(r.get(ChartId::North, 5), Vector3::z());
        d.chart_mut(ChartId::South)[9] = Vector3::new(0.05, 0.0, 0.0);
        match renormalize(&d) {
            Err(Error::Singularity { chart, node, .. }) => {
                assert_eq!(chart, ChartId::South);
                assert_eq!(node, 9);
            }
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn perturbation_examples() {
        let a = atlas(65);
        let id = make_power_map(&a, 1).unwrap();
        assert_eq!(perturb_director(&a, &id, 7, 0.0).unwrap(), id);
        let p = perturb_director(&a, &id, 7, 0.05).unwrap();
        let (ed, edb) = split_energies(&a, &p);
        assert!(((ed - edb) / (4.0 * PI) - 1.0).abs() < 0.1);
        assert!(ed + edb >= 4.0 * PI * (1.0 - 1e-3));
        let sup = ChartId::ALL
            .iter()
            .flat_map(|&c| (0..a.node_count()).map(move |k| (c, k)))
            .map(|(c, k)| (p.get(c, k) - id.get(c, k)).norm())
            .fold(0.0, f64::max);
        assert!(sup <= 0.05 + 1e-12 && sup > 0.04);

        let k = make_constant(&a, Vector3::z()).unwrap();
        let pk = perturb_director(&a, &k, 7, 0.05).unwrap();
        let (ed, edb) = split_energies(&a, &pk);
        assert!(((ed - edb) / (4.0 * PI)).abs() < 0.1);
        assert!(ed + edb > 0.0 && ed + edb < 8.0 * PI);
    }

    #[test]
    fn hemisphere_director_is_upper() {
        let a = atlas(33);
        let d = make_hemisphere_director(&a, 4, 0.8).unwrap();
        assert!(d
            .charts
            .iter()
            .flatten()
            .all(|v| v.z > 0.0 && (v.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn random_harmonic_is_eigenfunction_degree() {
        // Homogeneous harmonic of degree l: x . grad = l * value (Euler).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = RandomHarmonic::sample(&mut rng, 3, 1.3);
        let x = Vector3::new(0.3, -0.5, 0.81).normalize();
        assert!((x.dot(&h.ambient_gradient(&x)) - 3.0 * h.value(&x)).abs() < 1e-12);
        let a = atlas(65);
        let f = ScalarField::from_fn(&a, |c, k| h.value(&a.point(c, k)));
        assert!(integrate(&a, &f).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn transition_round_trip_prop(x in -2.0f64..2.0, y in -2.0f64..2.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assume!(x * x + y * y > 1e-4);
            let z = Complex64::new(x, y);
            let v = Complex64::new(a, b);
            let back = v.transition(z.inv()).transition(z);
            prop_assert!((back - v).norm() <= 1e-12 * (1.0 + v.norm()) * (1.0 + z.norm_sqr()) * (1.0 + z.norm_sqr().recip()));
        }

        #[test]
        fn builders_are_deterministic(seed in 0u64..1000) {
            let a = atlas(17);
            let u1 = make_random_velocity(&a, seed, 3, 0.1).unwrap();
            let u2 = make_random_velocity(&a, seed, 3, 0.1).unwrap();
            prop_assert_eq!(u1, u2);
            let id = make_power_map(&a, 1).unwrap();
            prop_assert_eq!(
                perturb_director(&a, &id, seed, 0.05).unwrap(),
                perturb_director(&a, &id, seed, 0.05).unwrap()
            );
        }
    }
}
