//! Time integration of the coupled flow.
//!
//! One step advances the momentum equation, projects the velocity onto
//! (discretely) divergence-free fields with a pressure Poisson solve, and
//! advances the director by transport plus tension, then renormalizes.
//! [`Scheme::ExplicitRK2`] is the explicit midpoint rule applied to that
//! stage; [`Scheme::ImexEuler`] treats both diffusion operators implicitly.

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    active_map, ambient_norm, bochner_laplace_vector, centered, covariant_advect,
    director_derivatives, div_vector, grad_scalar, integrate_fn, l2_norm, second,
    solve_helmholtz_from, solve_poisson_with_stats, velocity_norm, EllipticSolveConfig, SolveStats,
};
use crate::charts::{ChartAtlas, ChartId};
use crate::diagnostics::concentration_scan;
use crate::energetics::{ambient_mean, energy_report, forcing_with, tension, EnergyReport};
use crate::error::{Error, Result};
use crate::fields::{
    renormalize_in_place, AmbientField, DirectorField, FlowState, ScalarField, VelocityField,
};

/// Guards the advective time step bound against division by zero.
pub const EPS_FLOOR: f64 = 1e-12;

/// Fraction of `8 pi` at which a concentration warning is filed.
pub const CONCENTRATION_WARN: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    ExplicitRK2,
    ImexEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub mode: Scheme,
    pub cfl_safety: f64,
    pub dt_max: f64,
    /// Pressure Poisson solve.
    pub proj_cfg: EllipticSolveConfig,
    /// Implicit diffusion solves of [`Scheme::ImexEuler`].
    pub implicit_cfg: EllipticSolveConfig,
    /// Allowed `||div u|| / max(||u||, EPS_FLOOR)` after a step.
    pub tol_proj: f64,
    pub report_every: usize,
    /// 0 keeps only the initial and final states.
    pub snapshot_every: usize,
    pub t_end: f64,
    /// Freeze `u = 0` and evolve the director by the harmonic map heat flow.
    pub heat_flow_only: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            mode: Scheme::ExplicitRK2,
            cfl_safety: 0.4,
            dt_max: 1e-2,
            proj_cfg: EllipticSolveConfig {
                tol: 1e-6,
                ..Default::default()
            },
            implicit_cfg: EllipticSolveConfig {
                tol: 1e-10,
                ..Default::default()
            },
            tol_proj: 1e-2,
            report_every: 100,
            snapshot_every: 0,
            t_end: 1.0,
            heat_flow_only: false,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!("cfl_safety {} outside (0, 1]", self.cfl_safety));
        }
        if !(self.dt_max > 0.0) {
            return bad(format!("dt_max must be > 0, got {}", self.dt_max));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be finite and >= 0, got {}", self.t_end));
        }
        if !(self.tol_proj > 0.0) {
            return bad(format!("tol_proj must be > 0, got {}", self.tol_proj));
        }
        if self.report_every == 0 {
            return bad("report_every must be >= 1".into());
        }
        self.proj_cfg.validate()?;
        self.implicit_cfg.validate()
    }
}

/// Stable step for `state`: the explicit diffusion bound `(sigma h)^2 / 4`
/// (RK2 only) and the advective bound `sigma h / (|u| + |grad d|)`, scaled
/// by `cfl_safety` and capped by `dt_max`.
pub fn cfl_dt(atlas: &ChartAtlas, state: &FlowState, cfg: &SchemeConfig) -> f64 {
    let n = atlas.resolution();
    let h = atlas.spacing();
    let inv2h = 0.5 / h;
    let s = atlas.sigma();
    let mut bound = f64::INFINITY;
    for c in ChartId::ALL {
        let d = state.director.chart(c);
        let u = state.velocity.chart(c);
        for &k in atlas.active_nodes() {
            let sh = s[k] * h;
            if cfg.mode == Scheme::ExplicitRK2 {
                bound = bound.min(sh * sh / 4.0);
            }
            let (dx, dy) = director_derivatives(d, k, n, inv2h);
            let grad = (dx.norm_squared() + dy.norm_squared()).sqrt() / s[k];
            let speed = s[k] * u[k].norm() + grad + EPS_FLOOR;
            bound = bound.min(sh / speed);
        }
    }
    (cfg.cfl_safety * bound).min(cfg.dt_max)
}

/// What one step did besides producing the new state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub pressure: SolveStats,
    /// `||div u|| / max(||u||, EPS_FLOOR)` of the new velocity.
    pub div_ratio: f64,
}

/// Tendencies evaluated at one state.
struct Rates {
    momentum: VelocityField,
    director: AmbientField,
}

fn explicit_rates(
    atlas: &ChartAtlas,
    u: &VelocityField,
    d: &DirectorField,
    p: &ScalarField,
    heat: bool,
) -> Rates {
    if heat {
        return Rates {
            momentum: VelocityField::zeros(atlas),
            director: tension(atlas, d),
        };
    }
    fused_rates(atlas, u, d, p)
}

/// Single-sweep evaluation of
/// `D^2 u - D_u u + forcing(d) - grad p` and `tau(d) - u . grad d`,
/// identical node by node to composing the individual operators.
fn fused_rates(atlas: &ChartAtlas, u: &VelocityField, d: &DirectorField, p: &ScalarField) -> Rates {
    let n = atlas.resolution();
    let h = atlas.spacing();
    let (inv2h, invh2) = (0.5 / h, 1.0 / (h * h));
    let s = atlas.sigma();
    let table = atlas.christoffel();
    let active = atlas.active_nodes();
    let mut momentum = VelocityField::zeros(atlas);
    let mut director = AmbientField::zeros(atlas);
    for c in ChartId::ALL {
        let (uc, dc, pc) = (u.chart(c), d.chart(c), p.chart(c));
        let vals: Vec<(Complex64, Vector3<f64>)> = active
            .par_iter()
            .map(|&k| {
                let s2 = s[k] * s[k];
                let g = &table[k];
                let (dx, dy) = centered(dc, k, n, inv2h);
                let (dxx, dyy) = second(dc, k, n, invh2);
                let dk = dc[k];
                let g2 = (dx.norm_squared() + dy.norm_squared()) / s2;
                let raw = (dxx + dyy) / s2 + dk * g2;
                let tau = raw - dk * dk.dot(&raw);
                let force = -Complex64::new(dx.dot(&tau), dy.dot(&tau)) / s2;

                let v = [uc[k].re, uc[k].im];
                let (ux, uy) = centered(uc, k, n, inv2h);
                let (uxx, uyy) = second(uc, k, n, invh2);
                let d1 = [[ux.re, ux.im], [uy.re, uy.im]];
                let lap = uxx + uyy;
                let lap = [lap.re, lap.im];
                let mut boch = [0.0; 2];
                let mut adv = [0.0; 2];
                for kk in 0..2 {
                    let mut acc = lap[kk];
                    let mut a = v[0] * d1[0][kk] + v[1] * d1[1][kk];
                    for i in 0..2 {
                        for l in 0..2 {
                            acc +=
                                g.dgamma[i][kk][i][l] * v[l] + 2.0 * g.gamma[kk][i][l] * d1[i][l];
                            a += g.gamma[kk][i][l] * v[i] * v[l];
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
                    boch[kk] = acc / s2;
                    adv[kk] = a;
                }
                let px = (pc[k + 1] - pc[k - 1]) * inv2h;
                let py = (pc[k + n] - pc[k - n]) * inv2h;
                let mom = Complex64::new(boch[0] - adv[0], boch[1] - adv[1]) + force
                    - Complex64::new(px, py) / s2;
                let transport = dx * v[0] + dy * v[1];
                (mom, tau - transport)
            })
            .collect();
        let mc = momentum.chart_mut(c);
        for (&k, (m, _)) in active.iter().zip(&vals) {
            mc[k] = *m;
        }
        let dr = director.chart_mut(c);
        for (&k, (_, r)) in active.iter().zip(&vals) {
            dr[k] = *r;
        }
    }
    momentum.sync(atlas);
    director.sync(atlas);
    Rates { momentum, director }
}

/// Incremental pressure projection. `u` already contains `-h grad P_prev`;
/// the correction `phi` solves `Delta phi = div u`, then `u -= grad phi` and
/// `P = P_prev + phi / h`. Only the pressure increment is solved for, so the
/// Poisson right-hand side is small and a loose relative tolerance suffices.
fn project(
    atlas: &ChartAtlas,
    u: &mut VelocityField,
    h: f64,
    previous: &ScalarField,
    cfg: &SchemeConfig,
) -> Result<(ScalarField, SolveStats)> {
    let div = div_vector(atlas, u);
    let (phi, stats) = solve_poisson_with_stats(atlas, &div, &cfg.proj_cfg)?;
    u.axpy(-1.0, &grad_scalar(atlas, &phi));
    Ok((previous.add_scaled(1.0 / h, &phi), stats))
}

/// `d_base + h * rate`, with the fringe refilled and every node projected
/// back to the sphere.
fn advance_director(
    atlas: &ChartAtlas,
    base: &DirectorField,
    h: f64,
    rate: &AmbientField,
) -> Result<DirectorField> {
    let mut d = base.add_scaled(h, rate);
    d.sync(atlas);
    renormalize_in_place(&mut d)?;
    Ok(d)
}

fn divergence_ratio(atlas: &ChartAtlas, u: &VelocityField) -> f64 {
    let div = l2_norm(atlas, &div_vector(atlas, u));
    if div == 0.0 {
        return 0.0;
    }
    div / velocity_norm(atlas, u).max(EPS_FLOOR)
}

/// One explicit stage from `base` with tendencies evaluated at `eval`.
fn rk_stage(
    atlas: &ChartAtlas,
    base: &FlowState,
    eval: &FlowState,
    h: f64,
    cfg: &SchemeConfig,
) -> Result<(FlowState, SolveStats)> {
    let rates = explicit_rates(
        atlas,
        &eval.velocity,
        &eval.director,
        &eval.pressure,
        cfg.heat_flow_only,
    );
    let director = advance_director(atlas, &base.director, h, &rates.director)?;
    if cfg.heat_flow_only {
        let state = FlowState {
            time: base.time + h,
            director,
            velocity: base.velocity.clone(),
            pressure: base.pressure.clone(),
        };
        return Ok((state, SolveStats::default()));
    }
    let mut velocity = base.velocity.add_scaled(h, &rates.momentum);
    let (pressure, stats) = project(atlas, &mut velocity, h, &eval.pressure, cfg)?;
    Ok((
        FlowState {
            time: base.time + h,
            director,
            velocity,
            pressure,
        },
        stats,
    ))
}

/// Backward Euler for both diffusion operators, written in increment form:
/// `(I - dt Delta) delta = dt * rate(state)` and `new = old + delta`. The
/// increment vanishes exactly where the explicit rate does, so IMEX and
/// explicit runs share their steady states and a relative solver tolerance
/// never stalls the approach to them.
fn imex_step(
    atlas: &ChartAtlas,
    state: &FlowState,
    dt: f64,
    cfg: &SchemeConfig,
) -> Result<(FlowState, SolveStats)> {
    let d = &state.director;
    let tau = tension(atlas, d);
    let (velocity, pressure, stats) = if cfg.heat_flow_only {
        (
            state.velocity.clone(),
            state.pressure.clone(),
            SolveStats::default(),
        )
    } else {
        let u = &state.velocity;
        let mut rate = bochner_laplace_vector(atlas, u);
        rate.axpy(-1.0, &covariant_advect(atlas, u, u));
        rate.axpy(1.0, &forcing_with(atlas, d, &tau));
        rate.axpy(-1.0, &grad_scalar(atlas, &state.pressure));
        rate.scale(dt);
        let (delta, _) = solve_helmholtz_from(atlas, dt, &rate, None, &cfg.implicit_cfg)?;
        let mut next = u.add_scaled(1.0, &delta);
        next.sync(atlas);
        let (p, stats) = project(atlas, &mut next, dt, &state.pressure, cfg)?;
        (next, p, stats)
    };

    let transport = crate::calculus::advect_director(atlas, &velocity, d);
    let rate = tau.add_scaled(-1.0, &transport);
    let mut next = d.clone();
    for i in 0..3 {
        let rhs = rate.map(|v| v[i] * dt);
        let (delta, _) = solve_helmholtz_from(atlas, dt, &rhs, None, &cfg.implicit_cfg)?;
        for c in ChartId::ALL {
            for (out, v) in next.chart_mut(c).iter_mut().zip(delta.chart(c)) {
                out[i] += *v;
            }
        }
    }
    next.sync(atlas);
    renormalize_in_place(&mut next)?;
    Ok((
        FlowState {
            time: state.time + dt,
            director: next,
            velocity,
            pressure,
        },
        stats,
    ))
}

/// Advances `state` by `dt`.
pub fn step(
    atlas: &ChartAtlas,
    state: &FlowState,
    dt: f64,
    cfg: &SchemeConfig,
) -> Result<FlowState> {
    step_with_stats(atlas, state, dt, cfg).map(|(s, _)| s)
}

/// [`step`] plus solver statistics and the divergence of the new velocity.
pub fn step_with_stats(
    atlas: &ChartAtlas,
    state: &FlowState,
    dt: f64,
    cfg: &SchemeConfig,
) -> Result<(FlowState, StepStats)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step size must be > 0, got {dt}"
        )));
    }
    let (mut next, pressure) = match cfg.mode {
        Scheme::ExplicitRK2 => {
            let (mid, _) = rk_stage(atlas, state, state, 0.5 * dt, cfg)?;
            rk_stage(atlas, state, &mid, dt, cfg)?
        }
        Scheme::ImexEuler => imex_step(atlas, state, dt, cfg)?,
    };
    next.time = state.time + dt;
    let div_ratio = if cfg.heat_flow_only {
        0.0
    } else {
        divergence_ratio(atlas, &next.velocity)
    };
    Ok((
        next,
        StepStats {
            pressure,
            div_ratio,
        },
    ))
}

// ---------------------------------------------------------------------------
// Monitors and trajectories.

/// Per-report quantities beyond the energy report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monitors {
    /// `||d - d_ref||`, NaN without a reference.
    pub director_l2_error: f64,
    pub velocity_l2: f64,
    /// `(||d - d_ref||^2 + ||grad (d - d_ref)||^2)^{1/2}`, NaN without a reference.
    pub h1_error: f64,
    pub min_d3: f64,
    /// `|int u dv|` (ambient).
    pub mean_u_norm: f64,
    pub max_local_energy_ratio: f64,
    /// `||tau(d)||`.
    pub tension_l2: f64,
    /// Largest `| |d| - 1 |` over all nodes.
    pub unit_defect: f64,
}

/// Monitor settings for [`run_with`].
#[derive(Debug, Clone, Default)]
pub struct RunMonitors {
    pub reference: Option<DirectorField>,
    /// Geodesic radius of the concentration scan; `None` skips the scan.
    pub scan_radius: Option<f64>,
}

pub fn h1_distance(atlas: &ChartAtlas, a: &DirectorField, b: &DirectorField) -> f64 {
    let n = atlas.resolution();
    let inv2h = 0.5 / atlas.spacing();
    let s = atlas.sigma();
    let e = a.add_scaled(-1.0, b);
    let g2: ScalarField = active_map(atlas, |c, k| {
        let (ex, ey) = director_derivatives(e.chart(c), k, n, inv2h);
        (ex.norm_squared() + ey.norm_squared()) / (s[k] * s[k])
    });
    integrate_fn(atlas, |c, k| e.get(c, k).norm_squared() + g2.get(c, k)).sqrt()
}

pub fn min_d3(d: &DirectorField) -> f64 {
    d.charts
        .iter()
        .flatten()
        .map(|v| v.z)
        .fold(f64::INFINITY, f64::min)
}

pub fn monitors(atlas: &ChartAtlas, state: &FlowState, opts: &RunMonitors) -> Monitors {
    let d = &state.director;
    let (l2, h1) = match &opts.reference {
        Some(r) => (
            crate::calculus::director_distance(atlas, d, r),
            h1_distance(atlas, d, r),
        ),
        None => (f64::NAN, f64::NAN),
    };
    let ratio = match opts.scan_radius {
        Some(r) => concentration_scan(atlas, state, r).threshold_ratio,
        None => f64::NAN,
    };
    Monitors {
        director_l2_error: l2,
        velocity_l2: velocity_norm(atlas, &state.velocity),
        h1_error: h1,
        min_d3: min_d3(d),
        mean_u_norm: ambient_mean(atlas, &state.velocity).norm(),
        max_local_energy_ratio: ratio,
        tension_l2: ambient_norm(atlas, &tension(atlas, d)),
        unit_defect: crate::energetics::unit_defect(d),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WarningKind {
    ConcentrationNear8Pi,
    RenormalizeGuard,
    SolverResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunWarning {
    pub time: f64,
    pub kind: WarningKind,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub reports: Vec<EnergyReport>,
    /// Parallel to `reports`.
    pub monitors: Vec<Monitors>,
    pub snapshots: Vec<FlowState>,
    pub warnings: Vec<RunWarning>,
    /// Set when a step failed; the trajectory ends at the last good state.
    pub aborted: Option<RunWarning>,
    pub steps: usize,
    pub dt: f64,
    /// Largest divergence ratio seen after any step.
    pub max_div_ratio: f64,
    /// Largest ambient velocity mean relative to `(1 + ||u||) 4 pi`.
    pub max_mean_ratio: f64,
    pub pressure_iterations: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&FlowState> {
        self.snapshots.last()
    }

    pub fn total_energy(&self) -> Vec<(f64, f64)> {
        self.reports.iter().map(|r| (r.time, r.total())).collect()
    }

    pub fn series<F: Fn(&EnergyReport, &Monitors) -> f64>(&self, f: F) -> Vec<(f64, f64)> {
        self.reports
            .iter()
            .zip(&self.monitors)
            .map(|(r, m)| (r.time, f(r, m)))
            .collect()
    }
}

/// Uniform step `t_end / ceil(t_end / cfl_dt(initial))`.
pub fn uniform_dt(atlas: &ChartAtlas, initial: &FlowState, cfg: &SchemeConfig) -> f64 {
    let span = cfg.t_end;
    let bound = cfl_dt(atlas, initial, cfg);
    if span <= 0.0 {
        return bound;
    }
    span / (span / bound).ceil()
}

pub fn run(atlas: &ChartAtlas, initial: &FlowState, cfg: &SchemeConfig) -> Result<Trajectory> {
    run_with(atlas, initial, cfg, &RunMonitors::default())
}

/// Steps `initial` to `initial.time + t_end`. Step errors end the run early;
/// the failure is recorded in [`Trajectory::aborted`] and the partial
/// trajectory is returned.
pub fn run_with(
    atlas: &ChartAtlas,
    initial: &FlowState,
    cfg: &SchemeConfig,
    opts: &RunMonitors,
) -> Result<Trajectory> {
    cfg.validate()?;
    let dt = uniform_dt(atlas, initial, cfg);
    let t0 = initial.time;
    let total = if cfg.t_end > 0.0 {
        (cfg.t_end / dt).round() as usize
    } else {
        0
    };
    let mut traj = Trajectory {
        reports: Vec::new(),
        monitors: Vec::new(),
        snapshots: vec![initial.clone()],
        warnings: Vec::new(),
        aborted: None,
        steps: 0,
        dt,
        max_div_ratio: 0.0,
        max_mean_ratio: 0.0,
        pressure_iterations: 0,
    };
    let mut state = initial.clone();
    record(atlas, &state, opts, &mut traj);
    for n in 1..=total {
        let h = dt.min(cfl_dt(atlas, &state, cfg).max(0.5 * dt));
        let result = step_with_stats(atlas, &state, h, cfg);
        let (mut next, stats) = match result {
            Ok(v) => v,
            Err(e) => {
                let kind = match e {
                    Error::Singularity { .. } => WarningKind::RenormalizeGuard,
                    _ => WarningKind::SolverResidual,
                };
                let w = RunWarning {
                    time: state.time,
                    kind,
                    message: e.to_string(),
                };
                traj.warnings.push(w.clone());
                traj.aborted = Some(w);
                break;
            }
        };
        // Keep report times on the uniform grid.
        if h == dt {
            next.time = t0 + n as f64 * dt;
        }
        traj.steps = n;
        traj.pressure_iterations += stats.pressure.iterations;
        traj.max_div_ratio = traj.max_div_ratio.max(stats.div_ratio);
        if stats.div_ratio > cfg.tol_proj {
            traj.warnings.push(RunWarning {
                time: next.time,
                kind: WarningKind::SolverResidual,
                message: format!("divergence ratio {:.3e} above tol_proj", stats.div_ratio),
            });
        }
        state = next;
        if !cfg.heat_flow_only {
            let unorm = velocity_norm(atlas, &state.velocity);
            let mean = ambient_mean(atlas, &state.velocity).norm();
            let bound = (1.0 + unorm) * 4.0 * std::f64::consts::PI;
            traj.max_mean_ratio = traj.max_mean_ratio.max(mean / bound);
        }
        if n % cfg.report_every == 0 || n == total {
            record(atlas, &state, opts, &mut traj);
        }
        if cfg.snapshot_every > 0 && n % cfg.snapshot_every == 0 && n != total {
            traj.snapshots.push(state.clone());
        }
    }
    if traj.steps > 0 {
        traj.snapshots.push(state);
    }
    Ok(traj)
}

fn record(atlas: &ChartAtlas, state: &FlowState, opts: &RunMonitors, traj: &mut Trajectory) {
    let report = energy_report(atlas, state);
    let mon = monitors(atlas, state, opts);
    if mon.max_local_energy_ratio >= CONCENTRATION_WARN {
        traj.warnings.push(RunWarning {
            time: state.time,
            kind: WarningKind::ConcentrationNear8Pi,
            message: format!("local energy at {:.3} of 8 pi", mon.max_local_energy_ratio),
        });
    }
    traj.reports.push(report);
    traj.monitors.push(mon);
}

/// `max |a - b|` over all nodes.
pub fn director_change(a: &DirectorField, b: &DirectorField) -> f64 {
    a.charts
        .iter()
        .flatten()
        .zip(b.charts.iter().flatten())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::advect_director;
    use crate::charts::build_atlas;
    use crate::fields::{
        make_constant, make_power_map, make_random_velocity, make_rotation_field, perturb_director,
    };

    fn max_active<T, F: Fn(&T, &T) -> f64>(
        atlas: &ChartAtlas,
        a: &crate::fields::NodeField<T>,
        b: &crate::fields::NodeField<T>,
        f: F,
    ) -> f64 {
        let mut m: f64 = 0.0;
        for c in ChartId::ALL {
            for &k in atlas.active_nodes() {
                m = m.max(f(&a.charts[c as usize][k], &b.charts[c as usize][k]));
            }
        }
        m
    }

    #[test]
    fn fused_rates_match_composed_operators() {
        let atlas = build_atlas(33, 1.5).unwrap();
        let d = perturb_director(&atlas, &make_power_map(&atlas, 1).unwrap(), 3, 0.1).unwrap();
        let u = make_random_velocity(&atlas, 5, 3, 0.7).unwrap();
        let p = ScalarField::from_fn(&atlas, |c, k| {
            let x = atlas.point(c, k);
            x.x * x.y + x.z
        });
        let fused = fused_rates(&atlas, &u, &d, &p);

        let tau = tension(&atlas, &d);
        let mut mom = bochner_laplace_vector(&atlas, &u);
        mom.axpy(-1.0, &covariant_advect(&atlas, &u, &u));
        mom.axpy(1.0, &forcing_with(&atlas, &d, &tau));
        mom.axpy(-1.0, &grad_scalar(&atlas, &p));
        let dir = tau.add_scaled(-1.0, &advect_director(&atlas, &u, &d));

        let scale = max_active(&atlas, &mom, &VelocityField::zeros(&atlas), |a, b| {
            (a - b).norm()
        });
        let em = max_active(&atlas, &fused.momentum, &mom, |a, b| (a - b).norm());
        let ed = max_active(&atlas, &fused.director, &dir, |a, b| (a - b).norm());
        assert!(em <= 1e-12 * scale.max(1.0), "momentum mismatch {em}");
        assert!(ed <= 1e-10, "director mismatch {ed}");
    }

    #[test]
    fn cfl_examples() {
        let atlas = build_atlas(33, 1.5).unwrap();
        let z = Vector3::z();
        let state = FlowState::new(
            &atlas,
            make_constant(&atlas, z).unwrap(),
            VelocityField::zeros(&atlas),
        );
        let cfg = SchemeConfig {
            dt_max: 1.0,
            ..Default::default()
        };
        let s_min = atlas
            .active_nodes()
            .iter()
            .map(|&k| atlas.sigma()[k])
            .fold(f64::INFINITY, f64::min);
        let expect = cfg.cfl_safety * (s_min * atlas.spacing()).powi(2) / 4.0;
        assert!((cfl_dt(&atlas, &state, &cfg) - expect).abs() <= 1e-15 * expect);

        let fine = build_atlas(65, 1.5).unwrap();
        let fstate = FlowState::new(
            &fine,
            make_constant(&fine, z).unwrap(),
            VelocityField::zeros(&fine),
        );
        let ratio = cfl_dt(&atlas, &state, &cfg) / cfl_dt(&fine, &fstate, &cfg);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");

        let imex = SchemeConfig {
            mode: Scheme::ImexEuler,
            dt_max: 0.3,
            ..Default::default()
        };
        assert_eq!(cfl_dt(&atlas, &state, &imex), 0.3);
    }

    #[test]
    fn config_validation() {
        assert!(SchemeConfig::default().validate().is_ok());
        for bad in [
            SchemeConfig {
                cfl_safety: 1.5,
                ..Default::default()
            },
            SchemeConfig {
                cfl_safety: 0.0,
                ..Default::default()
            },
            SchemeConfig {
                dt_max: 0.0,
                ..Default::default()
            },
            SchemeConfig {
                t_end: -1.0,
                ..Default::default()
            },
            SchemeConfig {
                report_every: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
        let atlas = build_atlas(17, 1.5).unwrap();
        let d = make_constant(&atlas, Vector3::z()).unwrap();
        let state = FlowState::new(&atlas, d, VelocityField::zeros(&atlas));
        assert!(step(&atlas, &state, 0.0, &SchemeConfig::default()).is_err());
    }

    #[test]
    fn constant_state_is_fixed_point() {
        let atlas = build_atlas(33, 1.5).unwrap();
        let p = Vector3::new(1.0, 2.0, -2.0) / 3.0;
        let state = FlowState::new(
            &atlas,
            make_constant(&atlas, p).unwrap(),
            VelocityField::zeros(&atlas),
        );
        for mode in [Scheme::ExplicitRK2, Scheme::ImexEuler] {
            let cfg = SchemeConfig {
                mode,
                ..Default::default()
            };
            let dt = cfl_dt(&atlas, &state, &cfg).min(1e-3);
            let mut s = state.clone();
            for _ in 0..3 {
                s = step(&atlas, &s, dt, &cfg).unwrap();
            }
            assert!(director_change(&s.director, &state.director) <= 1e-12);
            let umax = s
                .velocity
                .charts
                .iter()
                .flatten()
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            assert!(umax <= 1e-12, "{mode:?}: velocity {umax}");
        }
    }

    #[test]
    fn identity_map_is_steady_to_discretization_order() {
        // The per-unit-time change of the identity map is the discrete
        // tension, which is O(h^2).
        let mut rates = Vec::new();
        for n in [33, 65] {
            let atlas = build_atlas(n, 1.5).unwrap();
            let d = make_power_map(&atlas, 1).unwrap();
            let state = FlowState::new(&atlas, d, VelocityField::zeros(&atlas));
            let cfg = SchemeConfig::default();
            let dt = cfl_dt(&atlas, &state, &cfg);
            let next = step(&atlas, &state, dt, &cfg).unwrap();
            let h = atlas.spacing();
            rates.push(
                max_active(&atlas, &next.director, &state.director, |a, b| {
                    (a - b).norm()
                }) / (dt * h * h),
            );
        }
        assert!(rates[1] <= 1.5 * rates[0], "C not bounded: {rates:?}");
        assert!(rates[0] < 10.0, "{rates:?}");
    }

    #[test]
    fn rotation_keeps_constant_director_and_dissipates() {
        let atlas = build_atlas(33, 1.5).unwrap();
        let d = make_constant(&atlas, Vector3::z()).unwrap();
        let u = make_rotation_field(&atlas, Vector3::z(), 1.0).unwrap();
        let mut state = FlowState::new(&atlas, d.clone(), u);
        let cfg = SchemeConfig::default();
        let dt = cfl_dt(&atlas, &state, &cfg);
        let mut kinetic = energy_report(&atlas, &state).kinetic;
        for _ in 0..5 {
            state = step(&atlas, &state, dt, &cfg).unwrap();
            let k = energy_report(&atlas, &state).kinetic;
            assert!(
                k < kinetic,
                "kinetic energy {k} did not drop below {kinetic}"
            );
            kinetic = k;
        }
        assert!(director_change(&state.director, &d) <= 1e-12);
    }

    #[test]
    fn zero_horizon_gives_single_report() {
        let atlas = build_atlas(17, 1.5).unwrap();
        let d = make_power_map(&atlas, 1).unwrap();
        let state = FlowState::new(&atlas, d, VelocityField::zeros(&atlas));
        let cfg = SchemeConfig {
            t_end: 0.0,
            ..Default::default()
        };
        let traj = run(&atlas, &state, &cfg).unwrap();
        assert_eq!(traj.reports.len(), 1);
        assert_eq!(traj.reports[0].time, 0.0);
        assert_eq!(traj.steps, 0);
        assert_eq!(traj.snapshots.len(), 1);
    }

    #[test]
    fn run_reports_on_uniform_grid() {
        let atlas = build_atlas(17, 1.5).unwrap();
        let d = perturb_director(&atlas, &make_power_map(&atlas, 1).unwrap(), 1, 0.05).unwrap();
        let u = make_random_velocity(&atlas, 2, 2, 0.2).unwrap();
        let state = FlowState::new(&atlas, d, u);
        let cfg = SchemeConfig {
            t_end: 0.05,
            report_every: 5,
            snapshot_every: 10,
            ..Default::default()
        };
        let traj = run(&atlas, &state, &cfg).unwrap();
        assert!(traj.aborted.is_none());
        assert!(traj.reports.windows(2).all(|w| w[1].time > w[0].time));
        assert!((traj.reports.last().unwrap().time - 0.05).abs() < 1e-12);
        assert!(traj.max_div_ratio <= cfg.tol_proj);
        assert!(traj.max_mean_ratio <= 1e-3);
        for s in &traj.snapshots {
            assert!(crate::energetics::unit_defect(&s.director) <= 1e-12);
        }
        let e = traj.total_energy();
        assert!(e.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-6), "{e:?}");
    }

    #[test]
    fn renormalize_failure_aborts_run() {
        let atlas = build_atlas(17, 1.5).unwrap();
        let mut d = make_power_map(&atlas, 1).unwrap();
        for v in d.chart_mut(ChartId::North).iter_mut() {
            *v = Vector3::zeros();
        }
        let state = FlowState::new(&atlas, d, VelocityField::zeros(&atlas));
        let cfg = SchemeConfig {
            t_end: 0.01,
            heat_flow_only: true,
            ..Default::default()
        };
        let traj = run(&atlas, &state, &cfg).unwrap();
        let w = traj.aborted.expect("run should abort");
        assert_eq!(w.kind, WarningKind::RenormalizeGuard);
        assert_eq!(traj.steps, 0);
    }
}
