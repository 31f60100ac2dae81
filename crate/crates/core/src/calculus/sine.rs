//! Direct Poisson solve on the two-chart atlas.
//!
//! Each chart problem is posed on the whole chart square: the 5-point
//! Laplacian on the interior nodes with Dirichlet data on the outer ring, which
//! the fast sine transform inverts exactly. The ring values of one chart are
//! interpolated from the interior solution of the other, so the coupled system
//! reduces to a dense system for the two rings,
//!
//! ```text
//! g_N = P y_S + T g_S,   g_S = P y_N + T g_N,   T = P A^{-1} B,
//! ```
//!
//! where `A` is the chart operator, `B` injects ring data and `P` is the ring
//! interpolation. With `s = g_N + g_S` and `d = g_N - g_S` this splits into
//! `(I - T) s = ...` (singular, constants) and `(I + T) d = ...`, both
//! factorized once per atlas.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::charts::ChartAtlas;

/// Exact inverse of `(4 x_k - sum of neighbours) / h^2` on an `m x m` grid
/// with zero Dirichlet data, by the type-I discrete sine transform.
#[derive(Clone)]
pub(crate) struct SineSolver {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
    inv_lambda: Vec<f64>,
}

impl SineSolver {
    pub(crate) fn new(m: usize, h: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * (m + 1));
        let theta = std::f64::consts::PI / (m + 1) as f64;
        let ev: Vec<f64> = (1..=m)
            .map(|p| 2.0 - 2.0 * (p as f64 * theta).cos())
            .collect();
        let norm = (2.0 / (m + 1) as f64).powi(2);
        let mut inv_lambda = Vec::with_capacity(m * m);
        for q in 0..m {
            for p in 0..m {
                inv_lambda.push(norm * h * h / (ev[p] + ev[q]));
            }
        }
        SineSolver { m, fft, inv_lambda }
    }

    /// In-place DST-I of every row of the row-major `m x m` block, two rows
    /// per complex transform.
    fn dst_rows(&self, data: &mut [f64], buf: &mut [Complex<f64>], scratch: &mut [Complex<f64>]) {
        let m = self.m;
        let len = 2 * (m + 1);
        let mut r = 0;
        while r < m {
            let second = r + 1 < m;
            buf.iter_mut().for_each(|v| *v = Complex::new(0.0, 0.0));
            for n in 0..m {
                let a = data[r * m + n];
                let b = if second { data[(r + 1) * m + n] } else { 0.0 };
                buf[n + 1] = Complex::new(a, b);
                buf[len - n - 1] = Complex::new(-a, -b);
            }
            self.fft.process_with_scratch(buf, scratch);
            for k in 0..m {
                let y = buf[k + 1];
                data[r * m + k] = -0.5 * y.im;
                if second {
                    data[(r + 1) * m + k] = 0.5 * y.re;
                }
            }
            r += 2;
        }
    }

    fn transpose(&self, data: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            for j in i + 1..m {
                data.swap(i * m + j, j * m + i);
            }
        }
    }

    /// Overwrites `data` (the right-hand side) with the solution.
    pub(crate) fn solve(&self, data: &mut [f64]) {
        let len = 2 * (self.m + 1);
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        self.dst_rows(data, &mut buf, &mut scratch);
        self.transpose(data);
        self.dst_rows(data, &mut buf, &mut scratch);
        for (v, l) in data.iter_mut().zip(&self.inv_lambda) {
            *v *= l;
        }
        self.dst_rows(data, &mut buf, &mut scratch);
        self.transpose(data);
        self.dst_rows(data, &mut buf, &mut scratch);
    }
}

/// Per-atlas factorization of the coupled two-chart Poisson system.
#[derive(Clone)]
pub(crate) struct PoissonSystem {
    solver: SineSolver,
    /// Ring node indices, in a fixed order.
    ring: Vec<usize>,
    /// Interpolation stencil of each ring node into the other chart.
    stencils: Vec<([usize; 16], [f64; 16])>,
    plus: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    minus: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Left null vector of `I - T`.
    null_left: DVector<f64>,
    /// `A^{-1} sigma^2` on the interior block.
    sigma_response: Vec<f64>,
}

impl std::fmt::Debug for PoissonSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSystem")
            .field("ring", &self.ring.len())
            .finish()
    }
}

impl PoissonSystem {
    pub(crate) fn new(atlas: &ChartAtlas) -> Self {
        let n = atlas.resolution();
        let m = n - 2;
        let solver = SineSolver::new(m, atlas.spacing());
        let mut ring = Vec::with_capacity(4 * (n - 1));
        for i in 0..n {
            ring.push(i);
        }
        for j in 1..n - 1 {
            ring.push(j * n);
            ring.push(j * n + n - 1);
        }
        for i in 0..n {
            ring.push((n - 1) * n + i);
        }
        let mut by_node = vec![None; n * n];
        for f in atlas.fringe() {
            by_node[f.node] = Some((f.sources, f.weights));
        }
        let stencils: Vec<_> = ring
            .iter()
            .map(|&k| by_node[k].expect("ring node in fringe"))
            .collect();

        let r = ring.len();
        let mut t = DMatrix::<f64>::zeros(r, r);
        let mut block = vec![0.0; m * m];
        let mut full = vec![0.0; n * n];
        for (col, &node) in ring.iter().enumerate() {
            block.iter_mut().for_each(|v| *v = 0.0);
            if !inject_ring(n, node, 1.0, atlas.spacing(), &mut block) {
                continue;
            }
            solver.solve(&mut block);
            unpack(n, &block, &mut full);
            for (row, (src, w)) in stencils.iter().enumerate() {
                t[(row, col)] = src.iter().zip(w).map(|(&s, &w)| full[s] * w).sum();
            }
        }
        let id = DMatrix::<f64>::identity(r, r);
        let plus = (&id + &t).lu();
        let avg = DMatrix::<f64>::from_element(r, r, 1.0 / r as f64);
        let minus = (&id - &t + avg).lu();

        // Power iteration for z = T^T z.
        let tt = t.transpose();
        let mut z = DVector::<f64>::from_element(r, 1.0 / r as f64);
        for _ in 0..500 {
            let mut next = &tt * &z;
            let s = next.sum();
            next /= s;
            let diff = (&next - &z).norm();
            z = next;
            if diff <= 1e-15 * z.norm() {
                break;
            }
        }

        let s = atlas.sigma();
        let mut sigma_response = vec![0.0; m * m];
        for j in 0..m {
            for i in 0..m {
                sigma_response[j * m + i] = s[(j + 1) * n + i + 1].powi(2);
            }
        }
        solver.solve(&mut sigma_response);

        PoissonSystem {
            solver,
            ring,
            stencils,
            plus,
            minus,
            null_left: z,
            sigma_response,
        }
    }

    fn interpolate(&self, full: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.ring.len(),
            self.stencils
                .iter()
                .map(|(src, w)| src.iter().zip(w).map(|(&s, &w)| full[s] * w).sum()),
        )
    }

    /// Solves `-L5 x / h^2 = -sigma^2 (rhs - shift)` on both charts, choosing
    /// `shift` so the coupled system is consistent. Returns full-grid chart
    /// arrays (interior solution plus ring values) and the shift.
    pub(crate) fn solve(&self, atlas: &ChartAtlas, rhs: [&[f64]; 2]) -> ([Vec<f64>; 2], f64) {
        let n = atlas.resolution();
        let m = n - 2;
        let s = atlas.sigma();
        let mut y: [Vec<f64>; 2] = [vec![0.0; m * m], vec![0.0; m * m]];
        for c in 0..2 {
            for j in 0..m {
                for i in 0..m {
                    let k = (j + 1) * n + i + 1;
                    y[c][j * m + i] = -s[k] * s[k] * rhs[c][k];
                }
            }
            self.solver.solve(&mut y[c]);
        }
        let mut full = vec![0.0; n * n];
        unpack(n, &y[0], &mut full);
        let py_n = self.interpolate(&full);
        unpack(n, &y[1], &mut full);
        let py_s = self.interpolate(&full);
        unpack(n, &self.sigma_response, &mut full);
        let pe = self.interpolate(&full);

        let base = &py_n + &py_s;
        let shift = -self.null_left.dot(&base) / (2.0 * self.null_left.dot(&pe));
        let sum = base + &pe * (2.0 * shift);
        let diff = &py_s - &py_n;
        let sv = self
            .minus
            .solve(&sum)
            .expect("regularized interface system is nonsingular");
        let dv = self
            .plus
            .solve(&diff)
            .expect("interface system I + T is nonsingular");
        let g = [(&sv + &dv) * 0.5, (&sv - &dv) * 0.5];

        let h = atlas.spacing();
        let mut out: [Vec<f64>; 2] = [vec![0.0; n * n], vec![0.0; n * n]];
        for c in 0..2 {
            let mut block = vec![0.0; m * m];
            for (idx, &node) in self.ring.iter().enumerate() {
                inject_ring(n, node, g[c][idx], h, &mut block);
            }
            self.solver.solve(&mut block);
            for (v, (a, e)) in block.iter_mut().zip(y[c].iter().zip(&self.sigma_response)) {
                *v += a + shift * e;
            }
            unpack(n, &block, &mut out[c]);
            for (idx, &node) in self.ring.iter().enumerate() {
                out[c][node] = g[c][idx];
            }
        }
        (out, shift)
    }
}

/// Adds the contribution of ring value `value` at `node` to the interior
/// right-hand side; false if the node touches no interior node (corners).
fn inject_ring(n: usize, node: usize, value: f64, h: f64, block: &mut [f64]) -> bool {
    let m = n - 2;
    let (i, j) = (node % n, node / n);
    let mut hit = false;
    for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
        let (a, b) = (i as i64 + di, j as i64 + dj);
        if a >= 1 && a <= m as i64 && b >= 1 && b <= m as i64 {
            block[(b as usize - 1) * m + a as usize - 1] += value / (h * h);
            hit = true;
        }
    }
    hit
}

fn unpack(n: usize, block: &[f64], full: &mut [f64]) {
    let m = n - 2;
    for j in 0..m {
        full[(j + 1) * n + 1..(j + 1) * n + 1 + m].copy_from_slice(&block[j * m..(j + 1) * m]);
    }
}

pub(crate) fn poisson_system(atlas: &ChartAtlas) -> &PoissonSystem {
    atlas.poisson.get_or_init(|| PoissonSystem::new(atlas))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_solver_inverts_five_point_operator() {
        let (m, h) = (13, 0.1);
        let solver = SineSolver::new(m, h);
        let x: Vec<f64> = (0..m * m)
            .map(|k| ((k * 37 % 11) as f64 - 5.0) / 3.0)
            .collect();
        let at = |i: i64, j: i64| {
            if i < 0 || j < 0 || i >= m as i64 || j >= m as i64 {
                0.0
            } else {
                x[j as usize * m + i as usize]
            }
        };
        let mut b = vec![0.0; m * m];
        for j in 0..m as i64 {
            for i in 0..m as i64 {
                let nb = at(i + 1, j) + at(i - 1, j) + at(i, j + 1) + at(i, j - 1);
                b[j as usize * m + i as usize] = (4.0 * at(i, j) - nb) / (h * h);
            }
        }
        solver.solve(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12, "{u} vs {v}");
        }
    }
}
