//! Verdicts computed from trajectories and initial data: exponential decay
//! fits, local energy concentration, condition certificates, energy-gap
//! integrality and empirical functional-inequality constants.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{ambient_norm, grad_scalar, integrate, integrate_fn, l2_norm, velocity_norm};
use crate::charts::ChartAtlas;
use crate::energetics::{gradient_densities, split_energies, tension, tension_sup};
use crate::error::{Error, Result};
use crate::evolve::Trajectory;
use crate::fields::{
    make_power_map, perturb_director, renormalize, DirectorField, FlowState, RandomHarmonic,
    ScalarField,
};

// ---------------------------------------------------------------------------
// Decay fits.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayQuantity {
    DirectorL2Error,
    VelocityL2,
    MonotoneFunctional,
}

impl DecayQuantity {
    /// CSV column holding the quantity.
    pub fn column(self) -> &'static str {
        match self {
            DecayQuantity::DirectorL2Error => "director_l2_error",
            DecayQuantity::VelocityL2 => "velocity_l2",
            DecayQuantity::MonotoneFunctional => "monotone_E",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "DirectorL2Error" | "director_l2_error" => Some(DecayQuantity::DirectorL2Error),
            "VelocityL2" | "velocity_l2" => Some(DecayQuantity::VelocityL2),
            "MonotoneFunctional" | "monotone_E" => Some(DecayQuantity::MonotoneFunctional),
            _ => None,
        }
    }
}

/// `value ~ c1 exp(-c2 t)` fitted on a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub c1: f64,
    pub c2: f64,
    /// `None` when the log-values have zero variance.
    pub r_squared: Option<f64>,
    pub samples: usize,
    pub quantity: DecayQuantity,
}

/// Least-squares line through `(t, ln value)` for samples with `t` in the
/// closed window.
pub fn fit_decay(
    series: &[(f64, f64)],
    window: (f64, f64),
    quantity: DecayQuantity,
) -> Result<DecayFit> {
    let slack = 1e-9 * (1.0 + window.1.abs());
    let mut pts = Vec::new();
    for (i, &(t, v)) in series.iter().enumerate() {
        if t < window.0 - slack || t > window.1 + slack {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::NonPositiveSample { index: i, value: v });
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < 5 {
        return Err(Error::TooFewSamples {
            needed: 5,
            got: pts.len(),
        });
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
        syy += (y - ym) * (y - ym);
    }
    if stt == 0.0 {
        return Err(Error::InvalidArgument("all samples share one time".into()));
    }
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let r_squared = if syy > 0.0 {
        let sse: f64 = pts
            .iter()
            .map(|&(t, y)| (y - intercept - slope * t).powi(2))
            .sum();
        Some((1.0 - sse / syy).clamp(0.0, 1.0))
    } else {
        None
    };
    Ok(DecayFit {
        window,
        c1: intercept.exp(),
        c2: -slope,
        r_squared,
        samples: pts.len(),
        quantity,
    })
}

// ---------------------------------------------------------------------------
// Concentration.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// Geodesic radius.
    pub radius: f64,
    pub max_local_energy: f64,
    pub argmax_center: [f64; 3],
    /// `max_local_energy / (8 pi)`.
    pub threshold_ratio: f64,
}

/// Vertices of the twice-subdivided icosahedron (162 points).
pub fn icosahedral_centers() -> Vec<Vector3<f64>> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..2 {
        let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut m = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[e] = *mid.entry(key).or_insert_with(|| {
                    verts.push((verts[a] + verts[b]).normalize());
                    verts.len() - 1
                });
            }
            next.push([f[0], m[0], m[2]]);
            next.push([f[1], m[1], m[0]]);
            next.push([f[2], m[2], m[1]]);
            next.push(m);
        }
        faces = next;
    }
    verts
}

/// Pointwise `|u|^2 + |grad d|^2`.
pub fn local_energy_density(atlas: &ChartAtlas, state: &FlowState) -> ScalarField {
    let (g2, _) = gradient_densities(atlas, &state.director);
    let s = atlas.sigma();
    ScalarField::from_fn(atlas, |c, k| {
        s[k] * s[k] * state.velocity.get(c, k).norm_sqr() + g2.get(c, k)
    })
}

/// Largest `int_{B_r(x)} (|u|^2 + |grad d|^2) dv` over the 162 icosahedral
/// centers `x`. The true maximum over the sphere is only approximated.
pub fn concentration_scan(atlas: &ChartAtlas, state: &FlowState, r: f64) -> ConcentrationReport {
    let density = local_energy_density(atlas, state);
    let centers = icosahedral_centers();
    let cos_r = r.cos();
    let whole = r >= PI;
    let values: Vec<f64> = centers
        .par_iter()
        .map(|x| {
            integrate_fn(atlas, |c, k| {
                if whole || atlas.point(c, k).dot(x) >= cos_r {
                    density.get(c, k)
                } else {
                    0.0
                }
            })
        })
        .collect();
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let x = centers[best];
    ConcentrationReport {
        radius: r,
        max_local_energy: values[best],
        argmax_center: [x.x, x.y, x.z],
        threshold_ratio: values[best] / (8.0 * PI),
    }
}

// ---------------------------------------------------------------------------
// Functional-inequality constants.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsProfile {
    /// Poincare constant `||u|| <= C_p ||grad u||` for mean-zero fields.
    pub c_p: f64,
    pub c_lady1: f64,
    pub c_lady2: f64,
    /// `c_lady1 + c_lady2 sqrt(c_p)`.
    pub c_l: f64,
    pub c0_topping: f64,
    pub eps0_topping: f64,
    /// The Ladyzhenskaya pair is an empirical fit, not a proven bound.
    pub rigorous: bool,
}

impl ConstantsProfile {
    pub fn new(c_p: f64, c_lady1: f64, c_lady2: f64, c0_topping: f64, eps0_topping: f64) -> Self {
        ConstantsProfile {
            c_p,
            c_lady1,
            c_lady2,
            c_l: c_lady1 + c_lady2 * c_p.sqrt(),
            c0_topping,
            eps0_topping,
            rigorous: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c_p,
            self.c_lady1,
            self.c_lady2,
            self.c0_topping,
            self.eps0_topping,
        ];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(
                "constants must be positive and finite".into(),
            ));
        }
        let expect = self.c_lady1 + self.c_lady2 * self.c_p.sqrt();
        if (self.c_l - expect).abs() > 1e-12 * expect {
            return Err(Error::InvalidArgument(format!(
                "c_l = {} inconsistent with c_lady1 + c_lady2 sqrt(c_p) = {expect}",
                self.c_l
            )));
        }
        Ok(())
    }
}

/// One trial of the Ladyzhenskaya fit: `l4 <= c1 * a + c2 * b` with
/// `a = ||f||^{1/2} ||grad f||^{1/2}`, `b = ||f||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadyzhenskayaTrial {
    pub a: f64,
    pub b: f64,
    pub l4: f64,
}

pub fn ladyzhenskaya_trial(atlas: &ChartAtlas, f: &ScalarField) -> LadyzhenskayaTrial {
    let b = l2_norm(atlas, f);
    let g = velocity_norm(atlas, &grad_scalar(atlas, f));
    let l4 = integrate_fn(atlas, |c, k| f.get(c, k).powi(4)).powf(0.25);
    LadyzhenskayaTrial {
        a: (b * g).sqrt(),
        b,
        l4,
    }
}

/// Smallest `c1 + w c2` over `c1, c2 >= 0` satisfying every trial: a
/// two-variable linear program solved by scanning the vertices.
pub fn fit_ladyzhenskaya(trials: &[LadyzhenskayaTrial], w: f64) -> (f64, f64) {
    let feasible = |c1: f64, c2: f64| {
        trials
            .iter()
            .all(|t| c1 * t.a + c2 * t.b >= t.l4 * (1.0 - 1e-12))
    };
    let mut cands: Vec<(f64, f64)> = Vec::new();
    for t in trials {
        if t.a > 0.0 {
            cands.push((t.l4 / t.a, 0.0));
        }
        if t.b > 0.0 {
            cands.push((0.0, t.l4 / t.b));
        }
    }
    for (i, s) in trials.iter().enumerate() {
        for t in &trials[i + 1..] {
            let det = s.a * t.b - s.b * t.a;
            if det.abs() < 1e-14 * (s.a * t.b).abs().max(1e-300) {
                continue;
            }
            let c1 = (s.l4 * t.b - t.l4 * s.b) / det;
            let c2 = (s.a * t.l4 - t.a * s.l4) / det;
            if c1 >= 0.0 && c2 >= 0.0 {
                cands.push((c1, c2));
            }
        }
    }
    let mut best = (f64::INFINITY, f64::INFINITY);
    for (c1, c2) in cands {
        if c1 + w * c2 < best.0 + w * best.1 && feasible(c1, c2) {
            best = (c1, c2);
        }
    }
    best
}

/// Mean-zero trial fields: random harmonic sums of degree up to 6 and
/// geodesic Gaussian bumps of random width, plus the constant field.
pub fn ladyzhenskaya_family(atlas: &ChartAtlas, trials: usize, seed: u64) -> Vec<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = integrate_fn(atlas, |_, _| 1.0);
    let mut out = vec![ScalarField::from_fn(atlas, |_, _| 1.0)];
    for i in 1..trials {
        let f = if i % 2 == 1 {
            let top = rng.gen_range(1..=6u32);
            let hs: Vec<RandomHarmonic> = (1..=top)
                .map(|l| {
                    let c: f64 = rng.sample(StandardNormal);
                    RandomHarmonic::sample(&mut rng, l, c)
                })
                .collect();
            ScalarField::from_fn(atlas, |c, k| {
                let x = atlas.point(c, k);
                hs.iter().map(|h| h.value(&x)).sum()
            })
        } else {
            let v = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
            .normalize();
            let width: f64 = rng.gen_range(0.25..1.5);
            ScalarField::from_fn(atlas, |c, k| {
                let theta = atlas.point(c, k).dot(&v).clamp(-1.0, 1.0).acos();
                (-(theta / width).powi(2)).exp()
            })
        };
        let mean = integrate(atlas, &f) / area;
        out.push(f.map(|v| v - mean));
    }
    out
}

/// Empirical constants at the resolution of `atlas`.
///
/// `c_p` is the exact value `1/sqrt(2)`; see [`poincare_ratio`] for its
/// numerical confirmation. The Ladyzhenskaya pair minimizes `C_L` over the
/// pairs satisfying every trial in [`ladyzhenskaya_family`], and `c0_topping`
/// is the sup ratio of [`empirical_topping`] over perturbed identity maps.
pub fn estimate_constants(
    atlas: &ChartAtlas,
    trials: usize,
    seed: u64,
    eps0: f64,
) -> Result<ConstantsProfile> {
    if trials < 1 {
        return Err(Error::InvalidArgument(
            "estimate_constants needs trials >= 1".into(),
        ));
    }
    let c_p = std::f64::consts::FRAC_1_SQRT_2;
    let fam = ladyzhenskaya_family(atlas, trials, seed);
    let data: Vec<LadyzhenskayaTrial> = fam.iter().map(|f| ladyzhenskaya_trial(atlas, f)).collect();
    let (c1, c2) = fit_ladyzhenskaya(&data, c_p.sqrt());
    let maps = topping_family(atlas, seed)?;
    let top = empirical_topping(atlas, &maps, eps0)?;
    Ok(ConstantsProfile::new(c_p, c1, c2, top.sup_ratio, eps0))
}

/// `||Y1|| / ||grad Y1||` for the height function; equals `1/sqrt(2)` on
/// the sphere.
pub fn poincare_ratio(atlas: &ChartAtlas) -> f64 {
    let y1 = ScalarField::from_fn(atlas, |c, k| atlas.point(c, k).z);
    l2_norm(atlas, &y1) / velocity_norm(atlas, &grad_scalar(atlas, &y1))
}

// ---------------------------------------------------------------------------
// Condition certificates.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    /// Within the discretization margin of equality.
    PassAtMargin,
    Fail,
}

/// `lhs < rhs` (strict) or `lhs <= rhs`; for the non-strict form values
/// within `margin * max(|rhs|, 1)` of equality count as [`Verdict::PassAtMargin`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub strict: bool,
    pub margin: f64,
    pub verdict: Verdict,
}

impl Inequality {
    pub fn new(lhs: f64, rhs: f64, strict: bool, margin: f64) -> Self {
        let mut out = Inequality {
            lhs,
            rhs,
            strict,
            margin,
            verdict: Verdict::Fail,
        };
        out.verdict = out.evaluate();
        out
    }

    pub fn evaluate(&self) -> Verdict {
        if self.strict {
            return if self.lhs < self.rhs {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
        }
        let band = self.margin * self.rhs.abs().max(1.0);
        if (self.lhs - self.rhs).abs() <= band {
            Verdict::PassAtMargin
        } else if self.lhs <= self.rhs {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passes(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCertificate {
    /// `1/2 ||u0||^2 + E(d0) <= 4 pi`.
    pub cond_energy_4pi: Inequality,
    /// `0 <= min d0^3`, written as `-min d0^3 <= 0`.
    pub cond_hemisphere: Inequality,
    pub min_d3: f64,
    /// `exp(108 C_L^8 (||u0||^2 + 1/(8 C_L^4))^2) ||grad d0||^2 <= 1/(8 C_L^4)`,
    /// relative to the configured constants.
    pub cond_xu_zhang: Inequality,
    /// Natural log of the left side of `cond_xu_zhang` (finite even when the
    /// left side overflows).
    pub xu_zhang_log_lhs: f64,
    /// `1/2 ||u0||^2 + 2 min(E_del, E_delbar) < 8 pi`.
    pub cond_dbar_8pi: Inequality,
    /// `1/2 ||u0||^2 + 2 min(E_del, E_delbar) <= eps0`.
    pub cond_lemma_smallness: Inequality,
    pub profile: ConstantsProfile,
}

impl ConditionCertificate {
    pub fn conditions(&self) -> [(&'static str, &Inequality); 5] {
        [
            ("energy_4pi", &self.cond_energy_4pi),
            ("hemisphere", &self.cond_hemisphere),
            ("xu_zhang", &self.cond_xu_zhang),
            ("dbar_8pi", &self.cond_dbar_8pi),
            ("lemma_smallness", &self.cond_lemma_smallness),
        ]
    }

    /// True when every stored verdict is reproduced from its stored sides.
    pub fn consistent(&self) -> bool {
        self.conditions()
            .iter()
            .all(|(_, c)| c.evaluate() == c.verdict)
    }
}

/// Relative band for the non-strict energy comparisons; matches the
/// accuracy of the discrete energies at the working resolutions.
pub const DEFAULT_MARGIN: f64 = 1e-2;

pub fn check_initial_conditions(
    atlas: &ChartAtlas,
    state0: &FlowState,
    profile: &ConstantsProfile,
    margin: f64,
) -> ConditionCertificate {
    let u2 = velocity_norm(atlas, &state0.velocity).powi(2);
    let (e_del, e_delbar) = split_energies(atlas, &state0.director);
    let energy = crate::energetics::dirichlet_energy(atlas, &state0.director);
    let grad2 = 2.0 * energy;
    let min_d3 = crate::evolve::min_d3(&state0.director);
    let monotone = 0.5 * u2 + 2.0 * e_del.min(e_delbar).max(0.0);

    let cl4 = profile.c_l.powi(4);
    let rhs_xz = 1.0 / (8.0 * cl4);
    let expo = 108.0 * profile.c_l.powi(8) * (u2 + rhs_xz).powi(2);
    let (lhs_xz, log_lhs) = if grad2 > 0.0 {
        (expo.exp() * grad2, expo + grad2.ln())
    } else {
        (0.0, f64::NEG_INFINITY)
    };
    ConditionCertificate {
        cond_energy_4pi: Inequality::new(0.5 * u2 + energy, 4.0 * PI, false, margin),
        cond_hemisphere: Inequality::new(-min_d3, 0.0, false, 0.0),
        min_d3,
        cond_xu_zhang: Inequality::new(lhs_xz, rhs_xz, false, 0.0),
        xu_zhang_log_lhs: log_lhs,
        cond_dbar_8pi: Inequality::new(monotone, 8.0 * PI, true, 0.0),
        cond_lemma_smallness: Inequality::new(monotone, profile.eps0_topping, false, 0.0),
        profile: *profile,
    }
}

// ---------------------------------------------------------------------------
// Energy gaps and the empirical topping constant.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyGap {
    /// Gap in units of `4 pi`.
    pub k4: f64,
    /// Gap in units of `8 pi`.
    pub k8: f64,
    pub k4_distance: f64,
    pub k8_distance: f64,
}

/// `(E_tail - E_ref) / 4 pi` and `/ 8 pi` with distances to the nearest
/// integers; both bubble-energy conventions are reported.
pub fn energy_gap_integrality(e_tail: f64, e_reference: f64) -> EnergyGap {
    let gap = e_tail - e_reference;
    let k4 = gap / (4.0 * PI);
    let k8 = k4 / 2.0;
    EnergyGap {
        k4,
        k8,
        k4_distance: (k4 - k4.round()).abs(),
        k8_distance: (k8 - k8.round()).abs(),
    }
}

/// Absolute part of the harmonic guard of [`empirical_topping`].
pub const TOPPING_TAU_FLOOR: f64 = 1e-12;

/// Squared tension norms below this count as harmonic and are excluded.
///
/// The discrete tension of a smooth harmonic map is `O(h^2)` pointwise, so
/// its squared norm is `O(h^4)` and min-energy is of the same order: left in,
/// such maps contribute a 0/0 ratio set by truncation error. A floor of
/// `10 h^2` separates them from genuinely non-harmonic maps at any usable
/// resolution.
pub fn topping_tau_floor(atlas: &ChartAtlas) -> f64 {
    TOPPING_TAU_FLOOR.max(10.0 * atlas.spacing().powi(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToppingStudy {
    pub sup_ratio: f64,
    pub argmax: usize,
    pub ratios: Vec<Option<f64>>,
    /// Indices rejected by the smallness filter or the harmonic guard.
    pub skipped: Vec<usize>,
}

/// `sup min(E_del, E_delbar) / ||tau(d)||^2` over maps with
/// `min(E_del, E_delbar) < eps0` and `||tau||^2 >= topping_tau_floor`.
pub fn empirical_topping(
    atlas: &ChartAtlas,
    maps: &[DirectorField],
    eps0: f64,
) -> Result<ToppingStudy> {
    let mut ratios = Vec::with_capacity(maps.len());
    let mut skipped = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let floor = topping_tau_floor(atlas);
    for (i, d) in maps.iter().enumerate() {
        let (a, b) = split_energies(atlas, d);
        let m = a.min(b).max(0.0);
        let tau2 = ambient_norm(atlas, &tension(atlas, d)).powi(2);
        if !(m < eps0) || tau2 < floor {
            skipped.push(i);
            ratios.push(None);
            continue;
        }
        let r = m / tau2;
        ratios.push(Some(r));
        if best.is_none_or(|(b, _)| r > b) {
            best = Some((r, i));
        }
    }
    match best {
        Some((sup_ratio, argmax)) => Ok(ToppingStudy {
            sup_ratio,
            argmax,
            ratios,
            skipped,
        }),
        None => Err(Error::EmptyAdmittedSet {
            skipped: skipped.len(),
        }),
    }
}

/// Perturbed identity maps with amplitudes 0.02, 0.05, 0.1 and three seeds
/// each.
pub fn topping_family(atlas: &ChartAtlas, seed: u64) -> Result<Vec<DirectorField>> {
    let id = make_power_map(atlas, 1)?;
    let mut out = Vec::new();
    for eps in [0.02, 0.05, 0.1] {
        for s in 0..3 {
            out.push(perturb_director(atlas, &id, seed.wrapping_add(s), eps)?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Limits.

#[derive(Debug, Clone)]
pub struct ReferenceDirector {
    pub director: DirectorField,
    pub time: f64,
    pub tension_l2: f64,
    pub tension_sup: f64,
    /// Set when the trajectory was aborted; the director is the last good
    /// snapshot.
    pub warning: Option<String>,
}

/// The final snapshot of `traj`, renormalized, as the stand-in for the limit
/// map.
pub fn reference_director(atlas: &ChartAtlas, traj: &Trajectory) -> Result<ReferenceDirector> {
    let last = traj.snapshots.last().ok_or(Error::NoSnapshots)?;
    let director = renormalize(&last.director)?;
    let tau = tension(atlas, &director);
    Ok(ReferenceDirector {
        tension_l2: ambient_norm(atlas, &tau),
        tension_sup: tension_sup(atlas, &tau),
        director,
        time: last.time,
        warning: traj.aborted.as_ref().map(|w| w.message.clone()),
    })
}
