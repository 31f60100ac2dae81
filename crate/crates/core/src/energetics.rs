//! Energies, the holomorphic/antiholomorphic split, degree, tension field,
//! dissipation and energy-law bookkeeping.

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    active_map, ambient_norm, covariant_gradient_sq, director_derivatives, integrate, integrate_fn,
    laplace, velocity_norm,
};
use crate::charts::{ChartAtlas, ChartId};
use crate::error::{Error, Result};
use crate::fields::{AmbientField, DirectorField, FlowState, ScalarField, VelocityField};

/// Distance to the nearest integer above which a degree is flagged as
/// under-resolved.
pub const DEGREE_WARN_THRESHOLD: f64 = 0.25;

pub type TensionField = AmbientField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub time: f64,
    pub kinetic: f64,
    pub dirichlet: f64,
    pub e_del: f64,
    pub e_delbar: f64,
    pub degree_raw: f64,
    pub degree: i64,
    pub dissipation: f64,
    pub monotone: f64,
}

impl EnergyReport {
    /// Kinetic plus Dirichlet energy.
    pub fn total(&self) -> f64 {
        self.kinetic + self.dirichlet
    }

    pub fn degree_gap(&self) -> f64 {
        (self.degree_raw - self.degree as f64).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeEstimate {
    pub raw: f64,
    pub rounded: i64,
    /// `|raw - rounded|`.
    pub distance: f64,
    /// Set when `distance > 0.25`.
    pub under_resolved: bool,
}

/// Pointwise `|grad d|^2_{g0}` and the signed Jacobian density
/// `sigma^{-2} d . (d_x x d_y)`.
pub fn gradient_densities(atlas: &ChartAtlas, d: &DirectorField) -> (ScalarField, ScalarField) {
    let n = atlas.resolution();
    let inv2h = 0.5 / atlas.spacing();
    let s = atlas.sigma();
    let grad2 = active_map(atlas, |c, k| {
        let (dx, dy) = director_derivatives(d.chart(c), k, n, inv2h);
        (dx.norm_squared() + dy.norm_squared()) / (s[k] * s[k])
    });
    let jac = active_map(atlas, |c, k| {
        let (dx, dy) = director_derivatives(d.chart(c), k, n, inv2h);
        d.get(c, k).dot(&dx.cross(&dy)) / (s[k] * s[k])
    });
    (grad2, jac)
}

/// `E(d) = 1/2 int |grad d|^2 dv`.
pub fn dirichlet_energy(atlas: &ChartAtlas, d: &DirectorField) -> f64 {
    let (g2, _) = gradient_densities(atlas, d);
    0.5 * integrate(atlas, &g2)
}

/// `(E_del, E_delbar)` from the densities `|grad d|^2/4 +- j/2`.
pub fn split_energies(atlas: &ChartAtlas, d: &DirectorField) -> (f64, f64) {
    let (g2, j) = gradient_densities(atlas, d);
    split_from_densities(atlas, &g2, &j)
}

fn split_from_densities(atlas: &ChartAtlas, g2: &ScalarField, j: &ScalarField) -> (f64, f64) {
    let e_del = integrate_fn(atlas, |c, k| 0.25 * g2.get(c, k) + 0.5 * j.get(c, k));
    let e_delbar = integrate_fn(atlas, |c, k| 0.25 * g2.get(c, k) - 0.5 * j.get(c, k));
    (e_del, e_delbar)
}

pub fn degree_from_split(e_del: f64, e_delbar: f64) -> DegreeEstimate {
    let raw = (e_del - e_delbar) / (4.0 * PI);
    let rounded = raw.round() as i64;
    let distance = (raw - rounded as f64).abs();
    DegreeEstimate {
        raw,
        rounded,
        distance,
        under_resolved: distance > DEGREE_WARN_THRESHOLD,
    }
}

pub fn degree(atlas: &ChartAtlas, d: &DirectorField) -> DegreeEstimate {
    let (a, b) = split_energies(atlas, d);
    degree_from_split(a, b)
}

/// `tau(d) = Delta d + |grad d|^2 d`, projected onto the tangent plane at `d`.
pub fn tension(atlas: &ChartAtlas, d: &DirectorField) -> TensionField {
    let (g2, _) = gradient_densities(atlas, d);
    tension_with(atlas, d, &g2)
}

fn tension_with(atlas: &ChartAtlas, d: &DirectorField, g2: &ScalarField) -> TensionField {
    let lap = laplace(atlas, d);
    TensionField::from_fn(atlas, |c, k| {
        let dk = d.get(c, k);
        let t = lap.get(c, k) + dk * g2.get(c, k);
        t - dk * dk.dot(&t)
    })
}

/// Momentum forcing `-sum_i (grad d^i) tau^i` in chart components.
pub fn forcing(atlas: &ChartAtlas, d: &DirectorField) -> VelocityField {
    forcing_with(atlas, d, &tension(atlas, d))
}

pub(crate) fn forcing_with(
    atlas: &ChartAtlas,
    d: &DirectorField,
    tau: &TensionField,
) -> VelocityField {
    let n = atlas.resolution();
    let inv2h = 0.5 / atlas.spacing();
    let s = atlas.sigma();
    active_map(atlas, |c, k| {
        let (dx, dy) = director_derivatives(d.chart(c), k, n, inv2h);
        let t = tau.get(c, k);
        -Complex64::new(dx.dot(&t), dy.dot(&t)) / (s[k] * s[k])
    })
}

/// `int u dv` as an ambient vector.
pub fn ambient_mean(atlas: &ChartAtlas, u: &VelocityField) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for i in 0..3 {
        out[i] = integrate_fn(atlas, |c, k| {
            let [tx, ty] = atlas.tangents(c, k);
            let v = u.get(c, k);
            tx[i] * v.re + ty[i] * v.im
        });
    }
    out
}

/// All terms of the basic energy law at one state.
pub fn energy_report(atlas: &ChartAtlas, state: &FlowState) -> EnergyReport {
    let d = &state.director;
    let (g2, j) = gradient_densities(atlas, d);
    let (e_del, e_delbar) = split_from_densities(atlas, &g2, &j);
    let dirichlet = 0.5 * integrate(atlas, &g2);
    let tau = tension_with(atlas, d, &g2);
    let du2 = integrate(atlas, &covariant_gradient_sq(atlas, &state.velocity));
    let kinetic = 0.5 * velocity_norm(atlas, &state.velocity).powi(2);
    let deg = degree_from_split(e_del, e_delbar);
    EnergyReport {
        time: state.time,
        kinetic,
        dirichlet,
        e_del,
        e_delbar,
        degree_raw: deg.raw,
        degree: deg.rounded,
        dissipation: du2 + ambient_norm(atlas, &tau).powi(2),
        monotone: kinetic + 2.0 * e_del.min(e_delbar),
    }
}

/// Residuals `(Etot_{n+1} - Etot_n)/dt + (D_n + D_{n+1})/2` of the basic
/// energy law over consecutive reports.
pub fn energy_law_residual(reports: &[EnergyReport]) -> Result<Vec<f64>> {
    if reports.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: reports.len(),
        });
    }
    let dt = reports[1].time - reports[0].time;
    if !(dt > 0.0) {
        return Err(Error::NonUniformGrid { index: 1 });
    }
    let mut out = Vec::with_capacity(reports.len() - 1);
    for (i, w) in reports.windows(2).enumerate() {
        let step = w[1].time - w[0].time;
        if (step - dt).abs() > 1e-6 * dt {
            return Err(Error::NonUniformGrid { index: i + 1 });
        }
        out.push(
            (w[1].total() - w[0].total()) / step + 0.5 * (w[0].dissipation + w[1].dissipation),
        );
    }
    Ok(out)
}

/// `|d| - 1` worst case over all nodes.
pub fn unit_defect(d: &DirectorField) -> f64 {
    d.charts
        .iter()
        .flatten()
        .map(|v| (v.norm() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Largest `|tau . d|` over active nodes.
pub fn tension_normal_defect(atlas: &ChartAtlas, d: &DirectorField, tau: &TensionField) -> f64 {
    let mut worst: f64 = 0.0;
    for c in ChartId::ALL {
        for &k in atlas.active_nodes() {
            worst = worst.max(tau.get(c, k).dot(&d.get(c, k)).abs());
        }
    }
    worst
}

/// Sup norm of the tension over active nodes.
pub fn tension_sup(atlas: &ChartAtlas, tau: &TensionField) -> f64 {
    let mut worst: f64 = 0.0;
    for c in ChartId::ALL {
        for &k in atlas.active_nodes() {
            worst = worst.max(tau.get(c, k).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{
        make_constant, make_power_map, make_random_velocity, make_rotation_field, perturb_director,
    };

    fn atlas(n: usize) -> ChartAtlas {
        ChartAtlas::new(n, 1.5).unwrap()
    }

    #[test]
    fn constant_map_has_no_energy() {
        let a = atlas(33);
        let d = make_constant(&a, Vector3::z()).unwrap();
        assert_eq!(dirichlet_energy(&a, &d), 0.0);
        assert_eq!(split_energies(&a, &d), (0.0, 0.0));
        assert_eq!(degree(&a, &d).rounded, 0);
        assert_eq!(tension_sup(&a, &tension(&a, &d)), 0.0);
        assert!(velocity_norm(&a, &forcing(&a, &d)) == 0.0);
        let d = make_constant(&a, Vector3::x()).unwrap();
        assert_eq!(degree(&a, &d).rounded, 0);
    }

    #[test]
    fn power_map_energies() {
        let a = atlas(129);
        for k in [1, 2, -1] {
            let d = make_power_map(&a, k).unwrap();
            let e = dirichlet_energy(&a, &d);
            let exact = 4.0 * PI * k.abs() as f64;
            assert!((e - exact).abs() / exact < 1e-2, "k={k} E={e}");
            let (ed, edb) = split_energies(&a, &d);
            assert!((ed + edb - e).abs() < 1e-10 * e);
            assert!(ed.min(edb) <= 1e-2 * e);
            if k > 0 {
                assert!(edb.abs() < 1e-2 * e);
            } else {
                assert!(ed.abs() < 1e-2 * e);
            }
            let deg = degree(&a, &d);
            assert_eq!(deg.rounded, k as i64);
            assert!(deg.distance < 1e-2);
        }
    }

    #[test]
    fn pointwise_split_identity() {
        let a = atlas(33);
        let d = perturb_director(&a, &make_power_map(&a, 2).unwrap(), 3, 0.1).unwrap();
        let (g2, j) = gradient_densities(&a, &d);
        for c in ChartId::ALL {
            for &k in a.active_nodes() {
                let (ed, edb) = (
                    0.25 * g2.get(c, k) + 0.5 * j.get(c, k),
                    0.25 * g2.get(c, k) - 0.5 * j.get(c, k),
                );
                assert!(ed >= -1e-12 && edb >= -1e-12);
                assert!((ed + edb - 0.5 * g2.get(c, k)).abs() < 1e-12 * (1.0 + g2.get(c, k)));
            }
        }
    }

    #[test]
    fn tension_is_tangent_and_small_on_harmonic_maps() {
        let sups: Vec<f64> = [65, 129]
            .iter()
            .map(|&n| {
                let a = atlas(n);
                let d = make_power_map(&a, 2).unwrap();
                let tau = tension(&a, &d);
                assert!(tension_normal_defect(&a, &d, &tau) < 1e-10);
                tension_sup(&a, &tau)
            })
            .collect();
        assert!(sups[0] / sups[1] > 3.5, "{sups:?}");
    }

    #[test]
    fn perturbed_map_has_forcing_with_small_mean() {
        let a = atlas(129);
        let d = perturb_director(&a, &make_power_map(&a, 1).unwrap(), 7, 0.05).unwrap();
        let f = forcing(&a, &d);
        let norm = velocity_norm(&a, &f);
        assert!(norm > 1e-3);
        assert!(ambient_mean(&a, &f).norm() <= 1e-3 * (1.0 + norm) * 4.0 * PI);
    }

    #[test]
    fn report_examples() {
        let a = atlas(129);
        let zero_u = VelocityField::zeros(&a);
        let st = FlowState::new(&a, make_constant(&a, Vector3::z()).unwrap(), zero_u.clone());
        let r = energy_report(&a, &st);
        assert_eq!(
            (r.kinetic, r.dirichlet, r.dissipation, r.monotone),
            (0.0, 0.0, 0.0, 0.0)
        );

        let st = FlowState::new(&a, make_power_map(&a, 1).unwrap(), zero_u);
        let r = energy_report(&a, &st);
        assert!((r.dirichlet - 4.0 * PI).abs() < 4e-2 * PI);
        assert!(r.dissipation < 1e-3);

        let u = make_rotation_field(&a, Vector3::z(), 1.0).unwrap();
        let st = FlowState::new(&a, make_constant(&a, Vector3::z()).unwrap(), u);
        let r = energy_report(&a, &st);
        assert!((r.kinetic - 4.0 * PI / 3.0).abs() < 5e-3 * 4.0 * PI / 3.0);
        assert!(r.dissipation > 0.0);
    }

    #[test]
    fn random_velocity_has_small_ambient_mean() {
        let a = atlas(129);
        let u = make_random_velocity(&a, 1, 4, 0.05).unwrap();
        assert!(ambient_mean(&a, &u).norm() <= 1e-3 * 1.05 * 4.0 * PI);
    }

    fn report(t: f64, total: f64, diss: f64) -> EnergyReport {
        EnergyReport {
            time: t,
            kinetic: 0.0,
            dirichlet: total,
            e_del: total,
            e_delbar: 0.0,
            degree_raw: 0.0,
            degree: 0,
            dissipation: diss,
            monotone: 0.0,
        }
    }

    #[test]
    fn residual_series_checks() {
        let steady: Vec<_> = (0..5).map(|i| report(i as f64 * 0.1, 1.0, 0.0)).collect();
        assert!(energy_law_residual(&steady)
            .unwrap()
            .iter()
            .all(|r| *r == 0.0));
        // E = e^{-t}, D = e^{-t}: residual is the trapezoid error.
        let exp: Vec<_> = (0..11)
            .map(|i| {
                let t = i as f64 * 0.01;
                report(t, (-t).exp(), (-t).exp())
            })
            .collect();
        assert!(energy_law_residual(&exp)
            .unwrap()
            .iter()
            .all(|r| r.abs() < 1e-4));
        assert!(matches!(
            energy_law_residual(&steady[..2]),
            Err(Error::TooFewSamples { .. })
        ));
        let mut bad = steady.clone();
        bad[3].time = 0.35;
        assert!(matches!(
            energy_law_residual(&bad),
            Err(Error::NonUniformGrid { index: 3 })
        ));
    }

    #[test]
    fn degree_flagging() {
        let d = degree_from_split(4.0 * PI * 1.3, 0.0);
        assert_eq!(d.rounded, 1);
        assert!(d.under_resolved);
        let d = degree_from_split(4.0 * PI * 2.01, 0.0);
        assert!(!d.under_resolved);
    }
}
