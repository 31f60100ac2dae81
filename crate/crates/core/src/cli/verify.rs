//! Built-in oracle suite: analytic values every build must reproduce.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector3;
use serde::Serialize;

use crate::calculus::{
    bochner_laplace_vector, integrate_fn, laplace_scalar, solve_poisson, EllipticSolveConfig,
};
use crate::charts::{build_atlas, ChartAtlas, ChartId};
use crate::energetics::{energy_law_residual, energy_report, split_energies, tension, tension_sup};
use crate::error::Result;
use crate::evolve::{cfl_dt, run, SchemeConfig};
use crate::fields::{
    make_power_map, make_random_velocity, make_rotation_field, perturb_director, FlowState,
    NodeField, NodeValue, ScalarField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// One row of the verification table. `measured` is compared to
/// `expected` with `|measured - expected| <= tolerance` unless `at_least`
/// is set, in which case `measured >= expected` is required.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub resolution: Option<usize>,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub at_least: bool,
    pub status: Status,
}

impl Check {
    fn close(name: &str, n: usize, measured: f64, expected: f64, tolerance: f64) -> Self {
        let ok = (measured - expected).abs() <= tolerance;
        Check {
            name: name.into(),
            resolution: Some(n),
            measured,
            expected,
            tolerance,
            at_least: false,
            status: if ok { Status::Pass } else { Status::Fail },
        }
    }

    fn at_least(name: &str, n: Option<usize>, measured: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            resolution: n,
            measured,
            expected: bound,
            tolerance: 0.0,
            at_least: true,
            status: if measured >= bound {
                Status::Pass
            } else {
                Status::Fail
            },
        }
    }

    fn skipped(name: &str, bound: f64) -> Self {
        Check {
            name: name.into(),
            resolution: None,
            measured: f64::NAN,
            expected: bound,
            tolerance: 0.0,
            at_least: true,
            status: Status::Skipped,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.resolution.map_or("-".to_string(), |n| n.to_string());
        let target = if self.at_least {
            format!(">= {:.4e}", self.expected)
        } else {
            format!("{:.6e} +- {:.1e}", self.expected, self.tolerance)
        };
        write!(
            f,
            "{:<40} {:>4}  {:>13.6e}  {:<26} {:?}",
            self.name, n, self.measured, target, self.status
        )
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Resolutions to test; order-of-convergence checks need at least two.
    pub resolutions: Vec<usize>,
    /// Test hook: scale every Christoffel symbol by this factor.
    pub christoffel_factor: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            resolutions: vec![65, 129],
            christoffel_factor: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }
}

/// Largest `|a - b|` over active nodes, relative to the largest `|b|`.
fn sup_rel<T: NodeValue, F: Fn(T) -> f64>(
    atlas: &ChartAtlas,
    a: &NodeField<T>,
    b: &NodeField<T>,
    norm: F,
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

struct Single {
    area_error: f64,
    identity_tau_sup: f64,
    law_floor: f64,
}

fn single(atlas: &ChartAtlas, checks: &mut Vec<Check>) -> Result<Single> {
    let n = atlas.resolution();
    let area = integrate_fn(atlas, |_, _| 1.0);
    checks.push(Check::close("area / 4pi", n, area / (4.0 * PI), 1.0, 5e-3));
    let z2 = integrate_fn(atlas, |c, k| atlas.point(c, k).z.powi(2));
    checks.push(Check::close(
        "int z^2 / (4pi/3)",
        n,
        z2 / (4.0 * PI / 3.0),
        1.0,
        5e-3,
    ));

    let y1 = ScalarField::from_fn(atlas, |c, k| atlas.point(c, k).z);
    let err = sup_rel(
        atlas,
        &laplace_scalar(atlas, &y1),
        &y1.map(|v| -2.0 * v),
        f64::abs,
    );
    checks.push(Check::close(
        "laplace Y1 = -2 Y1 (sup rel)",
        n,
        err,
        0.0,
        5e-3,
    ));
    let y2 = ScalarField::from_fn(atlas, |c, k| {
        let x = atlas.point(c, k);
        x.x * x.y + 0.5 * x.y * x.z
    });
    let err = sup_rel(
        atlas,
        &laplace_scalar(atlas, &y2),
        &y2.map(|v| -6.0 * v),
        f64::abs,
    );
    checks.push(Check::close(
        "laplace Y2 = -6 Y2 (sup rel)",
        n,
        err,
        0.0,
        5e-3,
    ));

    let axis = Vector3::new(1.0, 2.0, 2.0) / 3.0;
    let killing = make_rotation_field(atlas, axis, 1.0)?;
    let target = killing.map(|v| -v);
    let err = sup_rel(
        atlas,
        &bochner_laplace_vector(atlas, &killing),
        &target,
        |v| v.norm(),
    );
    checks.push(Check::close(
        "bochner Killing = -u (sup rel)",
        n,
        err,
        0.0,
        5e-3,
    ));

    let rhs = y2.map(|v| -6.0 * v);
    let phi = solve_poisson(atlas, &rhs, &EllipticSolveConfig::default())?;
    let err = sup_rel(atlas, &phi, &y2, f64::abs);
    checks.push(Check::close(
        "poisson recovers Y2 (sup rel)",
        n,
        err,
        0.0,
        5e-3,
    ));

    // Tolerances are set at N = 129 and widened like h^2 on coarser grids.
    let widen = ((128.0 / (n as f64 - 1.0)).powi(2)).max(1.0);
    for k in [1, 2, 3, -1, -2] {
        let d = make_power_map(atlas, k)?;
        let (a, b) = split_energies(atlas, &d);
        let e = a + b;
        let name = format!("power map k={k}: E / 4pi|k|");
        checks.push(Check::close(
            &name,
            n,
            e / (4.0 * PI * k.abs() as f64),
            1.0,
            1e-2 * widen,
        ));
        let name = format!("power map k={k}: degree");
        checks.push(Check::close(
            &name,
            n,
            (a - b) / (4.0 * PI),
            k as f64,
            1e-2 * widen,
        ));
        let name = format!("power map k={k}: min split / E");
        checks.push(Check::close(&name, n, a.min(b) / e, 0.0, 1e-2));
    }

    let id = make_power_map(atlas, 1)?;
    let identity_tau_sup = tension_sup(atlas, &tension(atlas, &id));

    // Short coupled run; the residual of the energy law at fixed step is
    // dominated by the spatial discretization.
    let d0 = perturb_director(atlas, &id, 7, 0.05)?;
    let u0 = make_random_velocity(atlas, 8, 3, 0.05)?;
    let s0 = FlowState::new(atlas, d0, u0);
    let probe = SchemeConfig {
        dt_max: 1.0,
        ..Default::default()
    };
    let dt = cfl_dt(atlas, &s0, &probe);
    let cfg = SchemeConfig {
        dt_max: dt,
        t_end: 8.0 * dt,
        report_every: 1,
        ..Default::default()
    };
    let traj = run(atlas, &s0, &cfg)?;
    let law_floor = energy_law_residual(&traj.reports)?
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    let e = traj.total_energy();
    let rise = e
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    let e0 = energy_report(atlas, &s0).total();
    checks.push(Check::at_least(
        "energy nonincreasing (-max rise / E0)",
        Some(n),
        -rise / e0,
        -1e-6,
    ));

    Ok(Single {
        area_error: (area / (4.0 * PI) - 1.0).abs(),
        identity_tau_sup,
        law_floor,
    })
}

pub fn run_suite(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut per_n = Vec::new();
    for &n in &opts.resolutions {
        let mut atlas = build_atlas(n, 1.5)?;
        if let Some(f) = opts.christoffel_factor {
            atlas.corrupt_christoffel(f);
        }
        per_n.push((n, single(&atlas, &mut checks)?));
    }
    let orders = [
        ("quadrature order", 1.9),
        ("identity tension sup ratio", 3.5),
        ("energy-law residual refinement ratio", 3.0),
    ];
    if per_n.len() < 2 {
        for (name, bound) in orders {
            checks.push(Check::skipped(name, bound));
        }
    } else {
        let (na, a) = &per_n[per_n.len() - 2];
        let (nb, b) = &per_n[per_n.len() - 1];
        let ratio_h = (*nb as f64 - 1.0) / (*na as f64 - 1.0);
        let order = (a.area_error / b.area_error).ln() / ratio_h.ln();
        checks.push(Check::at_least(orders[0].0, None, order, orders[0].1));
        checks.push(Check::at_least(
            orders[1].0,
            None,
            a.identity_tau_sup / b.identity_tau_sup,
            orders[1].1,
        ));
        checks.push(Check::at_least(
            orders[2].0,
            None,
            a.law_floor / b.law_floor,
            orders[2].1,
        ));
    }
    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes_and_skips_orders() {
        let report = run_suite(&VerifyOptions {
            resolutions: vec![65],
            christoffel_factor: None,
        })
        .unwrap();
        for c in &report.checks {
            assert_ne!(c.status, Status::Fail, "{c}");
        }
        assert_eq!(
            report
                .checks
                .iter()
                .filter(|c| c.status == Status::Skipped)
                .count(),
            3
        );
    }

    #[test]
    fn broken_christoffel_is_caught() {
        let report = run_suite(&VerifyOptions {
            resolutions: vec![33],
            christoffel_factor: Some(0.9),
        })
        .unwrap();
        let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        assert!(
            failed.contains(&"bochner Killing = -u (sup rel)"),
            "{failed:?}"
        );
    }
}
