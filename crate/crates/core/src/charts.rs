//! Two-chart stereographic atlas of the unit sphere.
//!
//! Both charts use the same square grid `[-R, R]^2` in their own complex
//! coordinate. The North chart coordinate `z` is the stereographic projection
//! from the south pole (so `z = 0` is the north pole); the South chart
//! coordinate is `w = 1/z`. In either chart the round metric is
//! `sigma(z)^2 |dz|^2` with `sigma(z) = 2 / (1 + |z|^2)`.
//!
//! Nodes are split into *active* nodes (interior of the square and inside the
//! disc `|z| <= R`), where the discrete operators are evaluated, and *fringe*
//! nodes, whose values are always interpolated from the other chart. Fringe
//! nodes satisfy `|z| >= R`, so their images `|1/z| <= 1/R` sit deep inside
//! the active disc of the other chart.

use std::sync::OnceLock;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MIN_RESOLUTION: usize = 17;
pub const MIN_EXTENT: f64 = 1.2;
pub const MAX_EXTENT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChartId {
    North,
    South,
}

impl ChartId {
    pub const ALL: [ChartId; 2] = [ChartId::North, ChartId::South];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            ChartId::North => 0,
            ChartId::South => 1,
        }
    }

    #[inline]
    pub fn other(self) -> ChartId {
        match self {
            ChartId::North => ChartId::South,
            ChartId::South => ChartId::North,
        }
    }
}

/// Maps a chart point to the other chart: `(c, z) -> (other(c), 1/z)`.
pub fn transition_point(chart: ChartId, z: Complex64) -> Result<(ChartId, Complex64)> {
    if z.norm_sqr() == 0.0 {
        return Err(Error::PointAtInfinity);
    }
    Ok((chart.other(), z.inv()))
}

#[inline]
pub fn conformal_factor(z: Complex64) -> f64 {
    2.0 / (1.0 + z.norm_sqr())
}

/// Partition-of-unity weight of a chart node at radius `r = |z|`.
///
/// Quintic smoothstep in `ln r`, equal to 1 for `r <= 1/R` and 0 for
/// `r >= R`. Satisfies `w(r) + w(1/r) = 1` exactly.
pub fn partition_weight(r: f64, extent: f64) -> f64 {
    let inner = 1.0 / extent;
    if r <= inner {
        return 1.0;
    }
    if r >= extent {
        return 0.0;
    }
    let ln_r = extent.ln();
    let t = (r.ln() + ln_r) / (2.0 * ln_r);
    // S(t) + S(1 - t) = 1, hence the exact partition identity.
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    1.0 - s
}

/// Inverse stereographic projection of a chart coordinate.
pub fn chart_point(chart: ChartId, z: Complex64) -> Vector3<f64> {
    let q = 1.0 + z.norm_sqr();
    let p = Vector3::new(2.0 * z.re / q, 2.0 * z.im / q, (1.0 - z.norm_sqr()) / q);
    match chart {
        ChartId::North => p,
        ChartId::South => Vector3::new(p.x, -p.y, -p.z),
    }
}

/// Coordinate tangent vectors `(d/dx, d/dy)` of the chart map at `z`.
/// Both are orthogonal with length `sigma(z)`.
pub fn chart_tangents(chart: ChartId, z: Complex64) -> [Vector3<f64>; 2] {
    let (x, y) = (z.re, z.im);
    let q = 1.0 + x * x + y * y;
    let q2 = q * q;
    let tx = Vector3::new(
        (2.0 * q - 4.0 * x * x) / q2,
        -4.0 * x * y / q2,
        -4.0 * x / q2,
    );
    let ty = Vector3::new(
        -4.0 * x * y / q2,
        (2.0 * q - 4.0 * y * y) / q2,
        -4.0 * y / q2,
    );
    match chart {
        ChartId::North => [tx, ty],
        ChartId::South => [
            Vector3::new(tx.x, -tx.y, -tx.z),
            Vector3::new(ty.x, -ty.y, -ty.z),
        ],
    }
}

/// Stereographic coordinate of a sphere point in the given chart, or `None`
/// at the chart's point at infinity.
pub fn chart_coordinate(chart: ChartId, p: &Vector3<f64>) -> Option<Complex64> {
    let (x, y, h) = match chart {
        ChartId::North => (p.x, p.y, p.z),
        ChartId::South => (p.x, -p.y, -p.z),
    };
    let denom = 1.0 + h;
    if denom <= 0.0 {
        return None;
    }
    Some(Complex64::new(x / denom, y / denom))
}

/// Christoffel symbols of `sigma^2 (dx^2 + dy^2)` and their first derivatives.
///
/// `gamma[k][i][j]` is `Γ^k_{ij}`, `dgamma[m][k][i][j]` is `∂_m Γ^k_{ij}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Christoffel {
    pub gamma: [[[f64; 2]; 2]; 2],
    pub dgamma: [[[[f64; 2]; 2]; 2]; 2],
}

impl Christoffel {
    /// Assembles the table from the gradient and Hessian of `λ = ln σ`:
    /// `Γ^k_{ij} = δ^k_i λ_j + δ^k_j λ_i − δ_{ij} λ_k`.
    pub fn from_log_factor(grad: [f64; 2], hess: [[f64; 2]; 2]) -> Self {
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut out = Christoffel::default();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    out.gamma[k][i][j] =
                        delta(k, i) * grad[j] + delta(k, j) * grad[i] - delta(i, j) * grad[k];
                    for m in 0..2 {
                        out.dgamma[m][k][i][j] = delta(k, i) * hess[j][m]
                            + delta(k, j) * hess[i][m]
                            - delta(i, j) * hess[k][m];
                    }
                }
            }
        }
        out
    }

    fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        out.gamma
            .iter_mut()
            .flatten()
            .flatten()
            .for_each(|g| *g *= s);
        out.dgamma
            .iter_mut()
            .flatten()
            .flatten()
            .flatten()
            .for_each(|g| *g *= s);
        out
    }
}

/// Interpolation recipe for one fringe node: a 4x4 Lagrange stencil in the
/// other chart evaluated at `1/zeta`, where `zeta` is the node's own
/// coordinate (needed for the vector transition factor `-zeta^2`).
#[derive(Debug, Clone)]
pub struct FringeStencil {
    pub node: usize,
    pub zeta: Complex64,
    pub sources: [usize; 16],
    pub weights: [f64; 16],
}

#[derive(Debug, Clone)]
pub struct ChartAtlas {
    n: usize,
    extent: f64,
    h: f64,
    coords: Vec<Complex64>,
    sigma: Vec<f64>,
    partition: Vec<f64>,
    quad: Vec<f64>,
    christoffel: Vec<Christoffel>,
    active: Vec<bool>,
    active_nodes: Vec<usize>,
    fringe: Vec<FringeStencil>,
    points: [Vec<Vector3<f64>>; 2],
    tangents: [Vec<[Vector3<f64>; 2]>; 2],
    /// Lazily computed solver data (factorized two-chart Poisson system,
    /// parallel-transport phases along grid edges).
    pub(crate) poisson: OnceLock<crate::calculus::PoissonSystem>,
    pub(crate) edge_phases: OnceLock<[Vec<Complex64>; 2]>,
}

pub fn build_atlas(n: usize, extent: f64) -> Result<ChartAtlas> {
    ChartAtlas::new(n, extent)
}

impl ChartAtlas {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n < MIN_RESOLUTION {
            return Err(Error::ResolutionTooSmall(n));
        }
        if !(MIN_EXTENT..=MAX_EXTENT).contains(&extent) || !extent.is_finite() {
            return Err(Error::ExtentOutOfRange(extent));
        }
        let h = 2.0 * extent / (n - 1) as f64;
        let len = n * n;
        let mut coords = Vec::with_capacity(len);
        for j in 0..n {
            for i in 0..n {
                coords.push(Complex64::new(
                    -extent + i as f64 * h,
                    -extent + j as f64 * h,
                ));
            }
        }
        let sigma: Vec<f64> = coords.iter().map(|&z| conformal_factor(z)).collect();
        let partition: Vec<f64> = coords
            .iter()
            .map(|z| partition_weight(z.norm(), extent))
            .collect();
        let quad = sigma
            .iter()
            .zip(&partition)
            .map(|(s, w)| s * s * h * h * w)
            .collect();
        let christoffel = coords
            .iter()
            .map(|z| {
                let (x, y) = (z.re, z.im);
                let q = 1.0 + x * x + y * y;
                let grad = [-2.0 * x / q, -2.0 * y / q];
                let hess = [
                    [-2.0 / q + 4.0 * x * x / (q * q), 4.0 * x * y / (q * q)],
                    [4.0 * x * y / (q * q), -2.0 / q + 4.0 * y * y / (q * q)],
                ];
                Christoffel::from_log_factor(grad, hess)
            })
            .collect();

        let radius_cut = extent * (1.0 + 1e-12);
        let mut active = vec![false; len];
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let k = j * n + i;
                active[k] = coords[k].norm() <= radius_cut;
            }
        }
        let active_nodes: Vec<usize> = (0..len).filter(|&k| active[k]).collect();

        let points = ChartId::ALL.map(|c| coords.iter().map(|&z| chart_point(c, z)).collect());
        let tangents = ChartId::ALL.map(|c| coords.iter().map(|&z| chart_tangents(c, z)).collect());

        let mut atlas = ChartAtlas {
            n,
            extent,
            h,
            coords,
            sigma,
            partition,
            quad,
            christoffel,
            active,
            active_nodes,
            fringe: Vec::new(),
            points,
            tangents,
            poisson: OnceLock::new(),
            edge_phases: OnceLock::new(),
        };
        let mut fringe = Vec::with_capacity(len - atlas.active_nodes.len());
        for k in 0..len {
            if atlas.active[k] {
                continue;
            }
            let zeta = atlas.coords[k];
            let (sources, weights) = atlas.stencil_at(zeta.inv());
            debug_assert!(sources.iter().all(|&s| atlas.active[s]));
            fringe.push(FringeStencil {
                node: k,
                zeta,
                sources,
                weights,
            });
        }
        atlas.fringe = fringe;
        Ok(atlas)
    }

    /// 4x4 Lagrange stencil around an arbitrary chart point, clamped to the grid.
    pub fn stencil_at(&self, z: Complex64) -> ([usize; 16], [f64; 16]) {
        let n = self.n;
        let sx = (z.re + self.extent) / self.h;
        let sy = (z.im + self.extent) / self.h;
        let i0 = (sx.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let j0 = (sy.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let wx = lagrange_cubic(sx - i0 as f64);
        let wy = lagrange_cubic(sy - j0 as f64);
        let mut sources = [0usize; 16];
        let mut weights = [0.0; 16];
        for b in 0..4 {
            for a in 0..4 {
                sources[b * 4 + a] = (j0 + b) * n + i0 + a;
                weights[b * 4 + a] = wx[a] * wy[b];
            }
        }
        (sources, weights)
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.n
    }
    #[inline]
    pub fn extent(&self) -> f64 {
        self.extent
    }
    #[inline]
    pub fn spacing(&self) -> f64 {
        self.h
    }
    #[inline]
    pub fn node_count(&self) -> usize {
        self.n * self.n
    }
    #[inline]
    pub fn coord(&self, node: usize) -> Complex64 {
        self.coords[node]
    }
    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
    pub fn partition(&self) -> &[f64] {
        &self.partition
    }
    /// Quadrature weights `sigma^2 h^2 w(|z|)`; identical for both charts.
    pub fn quad_weights(&self) -> &[f64] {
        &self.quad
    }
    pub fn christoffel(&self) -> &[Christoffel] {
        &self.christoffel
    }
    pub fn is_active(&self, node: usize) -> bool {
        self.active[node]
    }
    pub fn active_nodes(&self) -> &[usize] {
        &self.active_nodes
    }
    pub fn fringe(&self) -> &[FringeStencil] {
        &self.fringe
    }
    pub fn points(&self, chart: ChartId) -> &[Vector3<f64>] {
        &self.points[chart.index()]
    }
    pub fn point(&self, chart: ChartId, node: usize) -> Vector3<f64> {
        self.points[chart.index()][node]
    }
    pub fn tangents(&self, chart: ChartId, node: usize) -> [Vector3<f64>; 2] {
        self.tangents[chart.index()][node]
    }

    /// Smallest `sigma` over active nodes.
    pub fn min_active_sigma(&self) -> f64 {
        self.active_nodes
            .iter()
            .map(|&k| self.sigma[k])
            .fold(f64::INFINITY, f64::min)
    }

    /// Total area `sum of quadrature weights over both charts` (≈ 4π).
    pub fn total_area(&self) -> f64 {
        2.0 * crate::calculus::pairwise_sum(&self.quad)
    }

    /// Digest of the per-node tables, for run manifests.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n as u64).to_le_bytes());
        hasher.update(self.extent.to_le_bytes());
        for table in [&self.sigma, &self.partition, &self.quad] {
            for v in table.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Test hook: scales every Christoffel symbol (and derivative) by `factor`.
    #[doc(hidden)]
    pub fn corrupt_christoffel(&mut self, factor: f64) {
        for c in self.christoffel.iter_mut() {
            *c = c.scaled(factor);
        }
        self.edge_phases = OnceLock::new();
    }
}

/// Lagrange weights for nodes 0..4 at fractional position `s` (in node units).
fn lagrange_cubic(s: f64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for (k, wk) in w.iter_mut().enumerate() {
        for m in 0..4 {
            if m != k {
                *wk *= (s - m as f64) / (k as f64 - m as f64);
            }
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            ChartAtlas::new(16, 1.5),
            Err(Error::ResolutionTooSmall(16))
        ));
        assert!(matches!(
            ChartAtlas::new(33, 1.1),
            Err(Error::ExtentOutOfRange(_))
        ));
        assert!(ChartAtlas::new(33, 2.5).is_err());
        assert!(ChartAtlas::new(17, 1.5).is_ok());
    }

    #[test]
    fn transition_examples() {
        let (c, w) = transition_point(ChartId::North, Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(c, ChartId::South);
        assert!((w - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let (_, w) = transition_point(ChartId::North, Complex64::new(0.0, 2.0)).unwrap();
        assert!((w - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!(matches!(
            transition_point(ChartId::North, Complex64::new(0.0, 0.0)),
            Err(Error::PointAtInfinity)
        ));
    }

    #[test]
    fn charts_describe_the_same_point() {
        for &(x, y) in &[(0.3, -0.7), (1.2, 0.4), (-0.9, -0.9)] {
            let z = Complex64::new(x, y);
            let p = chart_point(ChartId::North, z);
            let q = chart_point(ChartId::South, z.inv());
            assert!((p - q).norm() < 1e-14);
            assert!((p.norm() - 1.0).abs() < 1e-14);
            let back = chart_coordinate(ChartId::South, &p).unwrap();
            assert!((back - z.inv()).norm() < 1e-13);
        }
    }

    #[test]
    fn conformal_factor_transforms() {
        for &(x, y) in &[(0.3, -0.7), (1.4, 0.2)] {
            let z = Complex64::new(x, y);
            let lhs = conformal_factor(z.inv());
            let rhs = z.norm_sqr() * conformal_factor(z);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn tangents_are_conformal_and_orientation_preserving() {
        for chart in ChartId::ALL {
            let z = Complex64::new(0.4, -0.25);
            let [tx, ty] = chart_tangents(chart, z);
            let s = conformal_factor(z);
            assert!((tx.norm() - s).abs() < 1e-14);
            assert!((ty.norm() - s).abs() < 1e-14);
            assert!(tx.dot(&ty).abs() < 1e-14);
            let p = chart_point(chart, z);
            assert!(p.dot(&tx.cross(&ty)) > 0.0);
            // finite-difference check of the tangent
            let eps = 1e-6;
            let fd = (chart_point(chart, z + eps) - chart_point(chart, z - eps)) / (2.0 * eps);
            assert!((fd - tx).norm() < 1e-8);
        }
    }

    #[test]
    fn partition_of_unity_exact_on_overlap() {
        let atlas = ChartAtlas::new(65, 1.5).unwrap();
        let mut checked = 0;
        for (k, &z) in atlas.coords().iter().enumerate() {
            let r = z.norm();
            if (1.0 / 1.5..=1.5).contains(&r) {
                let other = partition_weight(1.0 / r, 1.5);
                assert!((atlas.partition()[k] + other - 1.0).abs() < 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 100);
        assert_eq!(partition_weight(0.5, 1.5), 1.0);
        assert_eq!(partition_weight(1.6, 1.5), 0.0);
        assert!((partition_weight(1.0, 1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partition_is_monotone() {
        let mut prev = 1.0;
        for i in 0..=400 {
            let r = 0.5 + i as f64 * 0.0035;
            let w = partition_weight(r, 1.5);
            assert!(w <= prev + 1e-15);
            assert!((0.0..=1.0).contains(&w));
            prev = w;
        }
    }

    #[test]
    fn area_converges_to_four_pi() {
        let fine = ChartAtlas::new(129, 1.5).unwrap();
        assert!((fine.total_area() - 4.0 * PI).abs() / (4.0 * PI) < 5e-3);
        let coarse = ChartAtlas::new(17, 1.5).unwrap();
        assert!((coarse.total_area() - 4.0 * PI).abs() / (4.0 * PI) < 0.1);
        assert!((fine.spacing() - 3.0 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn fringe_stencils_only_touch_active_nodes() {
        for n in [17, 33, 65] {
            let atlas = ChartAtlas::new(n, 1.5).unwrap();
            assert_eq!(atlas.fringe().len() + atlas.active_nodes().len(), n * n);
            for f in atlas.fringe() {
                assert!(!atlas.is_active(f.node));
                assert!(f.sources.iter().all(|&s| atlas.is_active(s)));
                let sum: f64 = f.weights.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lagrange_reproduces_cubics() {
        let w = lagrange_cubic(1.37);
        let f = |x: f64| 0.3 * x * x * x - x * x + 2.0 * x - 0.5;
        let interp: f64 = (0..4).map(|k| w[k] * f(k as f64)).sum();
        assert!((interp - f(1.37)).abs() < 1e-12);
    }

    #[test]
    fn christoffel_matches_conformal_formula() {
        let atlas = ChartAtlas::new(33, 1.5).unwrap();
        let k = 40;
        let z = atlas.coord(k);
        let q = 1.0 + z.norm_sqr();
        let g = &atlas.christoffel()[k].gamma;
        assert!((g[0][0][0] + 2.0 * z.re / q).abs() < 1e-14);
        assert!((g[1][0][0] - 2.0 * z.im / q).abs() < 1e-14);
        assert!((g[0][1][1] - 2.0 * z.re / q).abs() < 1e-14);
        assert_eq!(g[0][0][1], g[0][1][0]);
    }
}
