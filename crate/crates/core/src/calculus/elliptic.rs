//! Elliptic solves on the two-chart atlas.
//!
//! Each chart problem is a symmetric positive definite system on the active
//! nodes with Dirichlet data on the fringe; the charts are coupled by
//! alternating (multiplicative) Schwarz sweeps, each chart solved by
//! Jacobi-preconditioned conjugate gradients.
//!
//! Scalar problems `(c - alpha Delta) f = r` are multiplied through by
//! `sigma^2`, giving `c sigma^2 f - alpha L5 f / h^2 = sigma^2 r`. Tangent
//! vector problems are solved for the orthonormal-frame components
//! `v = sigma U`, in which the rough Laplacian is the gauge-covariant flat
//! Laplacian `sigma^{-2} (d + iA)^2` with connection `A = (2y, -2x) / (1+|z|^2)`;
//! its discretization uses exact parallel-transport phases on grid edges.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charts::{ChartAtlas, ChartId};
use crate::error::{Error, Result};
use crate::fields::{NodeValue, ScalarField, VelocityField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipticSolveConfig {
    /// Target relative residual.
    pub tol: f64,
    /// Cap on the total number of CG iterations over all rounds.
    pub max_iter: usize,
    /// Cap on the number of outer chart-alternation rounds.
    pub schwarz_rounds: usize,
}

impl Default for EllipticSolveConfig {
    fn default() -> Self {
        EllipticSolveConfig {
            tol: 1e-8,
            max_iter: 10_000,
            schwarz_rounds: 50,
        }
    }
}

impl EllipticSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return Err(Error::InvalidArgument(format!(
                "elliptic tol {} outside (0, 1e-2]",
                self.tol
            )));
        }
        if self.max_iter < 1 || self.schwarz_rounds < 1 {
            return Err(Error::InvalidArgument(
                "elliptic max_iter and schwarz_rounds must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub rounds: usize,
    pub residual: f64,
}

/// Unknowns of a chart problem: real scalars or frame components.
trait SolverValue: NodeValue {
    fn re_dot(self, other: Self) -> f64;
    fn rotate(self, phase: Complex64) -> Self;
}

impl SolverValue for f64 {
    #[inline]
    fn re_dot(self, other: Self) -> f64 {
        self * other
    }
    #[inline]
    fn rotate(self, _phase: Complex64) -> Self {
        self
    }
}

impl SolverValue for Complex64 {
    #[inline]
    fn re_dot(self, other: Self) -> f64 {
        self.re * other.re + self.im * other.im
    }
    #[inline]
    fn rotate(self, phase: Complex64) -> Self {
        phase * self
    }
}

/// `(M x)_k = mass_k x_k + alpha (4 x_k - sum_j phase_kj x_j) / h^2`.
struct ChartOperator<'a> {
    atlas: &'a ChartAtlas,
    mass: Vec<f64>,
    alpha: f64,
    /// Phases for the edges `k -> k+1` and `k -> k+n`.
    phases: Option<&'a [Vec<Complex64>; 2]>,
}

impl ChartOperator<'_> {
    fn apply<T: SolverValue>(&self, x: &[T], out: &mut [T]) {
        let n = self.atlas.resolution();
        let invh2 = self.alpha / self.atlas.spacing().powi(2);
        match self.phases {
            None => {
                for &k in self.atlas.active_nodes() {
                    let nb = x[k + 1] + x[k - 1] + x[k + n] + x[k - n];
                    out[k] = x[k] * (self.mass[k] + 4.0 * invh2) - nb * invh2;
                }
            }
            Some([px, py]) => {
                for &k in self.atlas.active_nodes() {
                    let nb = x[k + 1].rotate(px[k])
                        + x[k - 1].rotate(px[k - 1].conj())
                        + x[k + n].rotate(py[k])
                        + x[k - n].rotate(py[k - n].conj());
                    out[k] = x[k] * (self.mass[k] + 4.0 * invh2) - nb * invh2;
                }
            }
        }
    }

    fn diagonal(&self, k: usize) -> f64 {
        self.mass[k] + 4.0 * self.alpha / self.atlas.spacing().powi(2)
    }
}

fn active_dot<T: SolverValue>(atlas: &ChartAtlas, a: &[T], b: &[T]) -> f64 {
    let mut s = 0.0;
    for &k in atlas.active_nodes() {
        s += a[k].re_dot(b[k]);
    }
    s
}

/// Residual `b - M x` on active nodes (zero elsewhere); returns its norm.
fn chart_residual<T: SolverValue>(op: &ChartOperator, x: &[T], b: &[T], r: &mut [T]) -> f64 {
    op.apply(x, r);
    for &k in op.atlas.active_nodes() {
        r[k] = b[k] - r[k];
    }
    active_dot(op.atlas, r, r).sqrt()
}

/// Preconditioned CG on one chart; the fringe entries of `x` are Dirichlet
/// data and stay untouched. Returns `(iterations, final residual norm)`.
fn cg_chart<T: SolverValue>(
    op: &ChartOperator,
    x: &mut [T],
    b: &[T],
    target: f64,
    max_iter: usize,
) -> (usize, f64) {
    let atlas = op.atlas;
    let len = x.len();
    let mut r = vec![T::zero(); len];
    let mut res = chart_residual(op, x, b, &mut r);
    if res <= target {
        return (0, res);
    }
    let inv_diag: Vec<f64> = (0..len)
        .map(|k| {
            if atlas.is_active(k) {
                1.0 / op.diagonal(k)
            } else {
                0.0
            }
        })
        .collect();
    let mut z = vec![T::zero(); len];
    for &k in atlas.active_nodes() {
        z[k] = r[k] * inv_diag[k];
    }
    let mut p = z.clone();
    let mut ap = vec![T::zero(); len];
    let mut rz = active_dot(atlas, &r, &z);
    let mut it = 0;
    while it < max_iter {
        it += 1;
        op.apply(&p, &mut ap);
        let pap = active_dot(atlas, &p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for &k in atlas.active_nodes() {
            x[k] += p[k] * alpha;
            r[k] = r[k] - ap[k] * alpha;
        }
        res = active_dot(atlas, &r, &r).sqrt();
        if res <= target {
            break;
        }
        for &k in atlas.active_nodes() {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = active_dot(atlas, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for &k in atlas.active_nodes() {
            p[k] = z[k] + p[k] * beta;
        }
    }
    (it, res)
}

/// Alternating Schwarz driver. `fill(x, c)` refreshes the fringe of chart `c`
/// from the current values of the other chart.
fn schwarz<T, F>(
    ops: [&ChartOperator; 2],
    b: &[Vec<T>; 2],
    x: &mut [Vec<T>; 2],
    fill: F,
    cfg: &EllipticSolveConfig,
) -> Result<SolveStats>
where
    T: SolverValue,
    F: Fn(&mut [Vec<T>; 2], ChartId),
{
    cfg.validate()?;
    let atlas = ops[0].atlas;
    let bnorm = (active_dot(atlas, &b[0], &b[0]) + active_dot(atlas, &b[1], &b[1])).sqrt();
    if bnorm == 0.0 {
        for chart in x.iter_mut() {
            chart.iter_mut().for_each(|v| *v = T::zero());
        }
        return Ok(SolveStats::default());
    }
    let target = cfg.tol * bnorm;
    let len = atlas.node_count();
    let mut scratch = vec![T::zero(); len];
    let global = |x: &mut [Vec<T>; 2], scratch: &mut [T]| {
        fill(x, ChartId::North);
        fill(x, ChartId::South);
        let rn = chart_residual(ops[0], &x[0], &b[0], scratch);
        let rs = chart_residual(ops[1], &x[1], &b[1], scratch);
        (rn * rn + rs * rs).sqrt()
    };
    let mut res = global(x, &mut scratch);
    let mut iterations = 0;
    if res <= target {
        return Ok(SolveStats {
            iterations,
            rounds: 0,
            residual: res / bnorm,
        });
    }
    for round in 1..=cfg.schwarz_rounds {
        let inner = (0.5 * target).max(0.05 * res) / std::f64::consts::SQRT_2;
        for c in ChartId::ALL {
            fill(x, c);
            let budget = cfg.max_iter.saturating_sub(iterations);
            let (it, _) = cg_chart(
                ops[c.index()],
                &mut x[c.index()],
                &b[c.index()],
                inner,
                budget,
            );
            iterations += it;
        }
        res = global(x, &mut scratch);
        if res <= target {
            return Ok(SolveStats {
                iterations,
                rounds: round,
                residual: res / bnorm,
            });
        }
        if iterations >= cfg.max_iter {
            break;
        }
    }
    Err(Error::SolverDiverged {
        iterations,
        residual: res / bnorm,
    })
}

fn scalar_fill(atlas: &ChartAtlas) -> impl Fn(&mut [Vec<f64>; 2], ChartId) + '_ {
    move |x, c| {
        let (tgt, src) = split(x, c);
        for f in atlas.fringe() {
            let mut acc = 0.0;
            for (&s, &w) in f.sources.iter().zip(&f.weights) {
                acc += src[s] * w;
            }
            tgt[f.node] = acc;
        }
    }
}

/// Fringe refresh for frame components `v = sigma U`.
fn frame_fill(atlas: &ChartAtlas) -> impl Fn(&mut [Vec<Complex64>; 2], ChartId) + '_ {
    let s = atlas.sigma();
    move |x, c| {
        let (tgt, src) = split(x, c);
        for f in atlas.fringe() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (&j, &w) in f.sources.iter().zip(&f.weights) {
                acc += src[j] * (w / s[j]);
            }
            tgt[f.node] = acc.transition(f.zeta) * s[f.node];
        }
    }
}

fn split<T>(x: &mut [Vec<T>; 2], c: ChartId) -> (&mut [T], &[T]) {
    let [north, south] = x;
    match c {
        ChartId::North => (north.as_mut_slice(), south.as_slice()),
        ChartId::South => (south.as_mut_slice(), north.as_slice()),
    }
}

fn mean_zero(atlas: &ChartAtlas, f: &mut ScalarField) {
    let mean = super::integrate(atlas, f) / super::integrate_fn(atlas, |_, _| 1.0);
    for chart in f.charts.iter_mut() {
        chart.iter_mut().for_each(|v| *v -= mean);
    }
}

/// Solves `Delta f = rhs` with `int f dv = 0`. The right-hand side is made
/// compatible by subtracting a constant.
///
/// The solve is direct (see [`super::PoissonSystem`]); `cfg.tol` bounds the
/// relative residual of the coupled chart equations, which is checked.
pub fn solve_poisson(
    atlas: &ChartAtlas,
    rhs: &ScalarField,
    cfg: &EllipticSolveConfig,
) -> Result<ScalarField> {
    solve_poisson_with_stats(atlas, rhs, cfg).map(|(f, _)| f)
}

/// [`solve_poisson`] plus the achieved relative residual.
pub fn solve_poisson_with_stats(
    atlas: &ChartAtlas,
    rhs: &ScalarField,
    cfg: &EllipticSolveConfig,
) -> Result<(ScalarField, SolveStats)> {
    cfg.validate()?;
    let system = super::sine::poisson_system(atlas);
    let (charts, shift) = system.solve(
        atlas,
        [rhs.chart(ChartId::North), rhs.chart(ChartId::South)],
    );
    let n = atlas.resolution();
    let invh2 = 1.0 / atlas.spacing().powi(2);
    let s = atlas.sigma();
    let (mut res, mut bnorm) = (0.0, 0.0);
    for c in ChartId::ALL {
        let x = &charts[c.index()];
        let r = rhs.chart(c);
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let k = j * n + i;
                let b = s[k] * s[k] * (r[k] - shift);
                let lap = (x[k + 1] + x[k - 1] + x[k + n] + x[k - n] - 4.0 * x[k]) * invh2;
                res += (lap - b).powi(2);
                bnorm += b * b;
            }
        }
    }
    let residual = if bnorm > 0.0 {
        (res / bnorm).sqrt()
    } else {
        0.0
    };
    if !(residual <= cfg.tol) {
        return Err(Error::SolverDiverged {
            iterations: 0,
            residual,
        });
    }
    let mut f = ScalarField { charts };
    if bnorm == 0.0 {
        f = ScalarField::zeros(atlas);
    }
    mean_zero(atlas, &mut f);
    Ok((
        f,
        SolveStats {
            iterations: 0,
            rounds: 1,
            residual,
        },
    ))
}

/// Fields that admit the implicit diffusion solve `(I - alpha Delta) f = rhs`
/// (Laplace-Beltrami for scalars, rough Laplacian for tangent vectors).
pub trait HelmholtzField: Sized {
    fn helmholtz(
        atlas: &ChartAtlas,
        alpha: f64,
        rhs: &Self,
        guess: Option<&Self>,
        cfg: &EllipticSolveConfig,
    ) -> Result<(Self, SolveStats)>;
}

pub fn solve_helmholtz<F: HelmholtzField>(
    atlas: &ChartAtlas,
    alpha: f64,
    rhs: &F,
    cfg: &EllipticSolveConfig,
) -> Result<F> {
    F::helmholtz(atlas, alpha, rhs, None, cfg).map(|(f, _)| f)
}

pub fn solve_helmholtz_from<F: HelmholtzField>(
    atlas: &ChartAtlas,
    alpha: f64,
    rhs: &F,
    guess: Option<&F>,
    cfg: &EllipticSolveConfig,
) -> Result<(F, SolveStats)> {
    F::helmholtz(atlas, alpha, rhs, guess, cfg)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Helmholtz alpha must be > 0, got {alpha}"
        )));
    }
    Ok(())
}

impl HelmholtzField for ScalarField {
    fn helmholtz(
        atlas: &ChartAtlas,
        alpha: f64,
        rhs: &Self,
        guess: Option<&Self>,
        cfg: &EllipticSolveConfig,
    ) -> Result<(Self, SolveStats)> {
        check_alpha(alpha)?;
        let len = atlas.node_count();
        let s = atlas.sigma();
        let mass: Vec<f64> = s.iter().map(|v| v * v).collect();
        let b: [Vec<f64>; 2] = ChartId::ALL.map(|c| {
            let r = rhs.chart(c);
            (0..len)
                .map(|k| {
                    if atlas.is_active(k) {
                        mass[k] * r[k]
                    } else {
                        0.0
                    }
                })
                .collect()
        });
        let op = ChartOperator {
            atlas,
            mass,
            alpha,
            phases: None,
        };
        let mut x = guess.unwrap_or(rhs).charts.clone();
        let stats = schwarz([&op, &op], &b, &mut x, scalar_fill(atlas), cfg)?;
        let mut f = ScalarField { charts: x };
        f.sync(atlas);
        Ok((f, stats))
    }
}

/// Parallel-transport phases `exp(i int A)` along the edges `k -> k+1`
/// (index 0) and `k -> k+n` (index 1).
fn edge_phases(atlas: &ChartAtlas) -> &[Vec<Complex64>; 2] {
    atlas.edge_phases.get_or_init(|| {
        let n = atlas.resolution();
        let h = atlas.spacing();
        // Antiderivatives of A_x = 2y/(1+x^2+y^2) in x, A_y = -2x/(1+x^2+y^2) in y.
        let ax = |x: f64, y: f64| {
            let c = (1.0 + y * y).sqrt();
            2.0 * y / c * (x / c).atan()
        };
        let ay = |x: f64, y: f64| {
            let c = (1.0 + x * x).sqrt();
            -2.0 * x / c * (y / c).atan()
        };
        let len = n * n;
        let mut px = vec![Complex64::new(1.0, 0.0); len];
        let mut py = vec![Complex64::new(1.0, 0.0); len];
        for k in 0..len {
            let z = atlas.coord(k);
            if k % n + 1 < n {
                px[k] = Complex64::from_polar(1.0, ax(z.re + h, z.im) - ax(z.re, z.im));
            }
            if k / n + 1 < n {
                py[k] = Complex64::from_polar(1.0, ay(z.re, z.im + h) - ay(z.re, z.im));
            }
        }
        [px, py]
    })
}

impl HelmholtzField for VelocityField {
    fn helmholtz(
        atlas: &ChartAtlas,
        alpha: f64,
        rhs: &Self,
        guess: Option<&Self>,
        cfg: &EllipticSolveConfig,
    ) -> Result<(Self, SolveStats)> {
        check_alpha(alpha)?;
        let len = atlas.node_count();
        let s = atlas.sigma();
        let mass: Vec<f64> = s.iter().map(|v| v * v).collect();
        let b: [Vec<Complex64>; 2] = ChartId::ALL.map(|c| {
            let r = rhs.chart(c);
            (0..len)
                .map(|k| {
                    if atlas.is_active(k) {
                        r[k] * s[k].powi(3)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect()
        });
        let op = ChartOperator {
            atlas,
            mass,
            alpha,
            phases: Some(edge_phases(atlas)),
        };
        let start = guess.unwrap_or(rhs);
        let mut x: [Vec<Complex64>; 2] = ChartId::ALL.map(|c| {
            start
                .chart(c)
                .iter()
                .zip(s)
                .map(|(u, sk)| u * *sk)
                .collect()
        });
        let stats = schwarz([&op, &op], &b, &mut x, frame_fill(atlas), cfg)?;
        let charts = x.map(|v| v.iter().zip(s).map(|(w, sk)| w / *sk).collect());
        let mut u = VelocityField { charts };
        u.sync(atlas);
        Ok((u, stats))
    }
}
