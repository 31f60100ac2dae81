//! Run configuration: one TOML document, unknown keys rejected.
//!
//! ```toml
//! [atlas]
//! n = 65
//! extent = 1.5
//!
//! [scheme]
//! mode = "ExplicitRK2"
//! t_end = 0.1
//! report_every = 10
//!
//! [initial_data]
//! builder = "perturbed_power_map"
//! seed = 7
//! params = { k = 1, eps = 0.05, velocity = "random", velocity_amplitude = 0.05 }
//!
//! [diagnostics]
//! decay_window = [1.0, 5.0]
//! scan_radius = 0.5
//! reference = { builder = "power_map", params = { k = 1 } }
//!
//! [output]
//! directory = "out"
//! ```

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::charts::{build_atlas, ChartAtlas};
use crate::diagnostics::{estimate_constants, ConstantsProfile, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::evolve::SchemeConfig;
use crate::fields::{
    make_constant, make_hemisphere_director, make_power_map, make_random_velocity,
    make_rotation_field, perturb_director, DirectorField, FlowState, VelocityField,
};

use super::snapshot::read_snapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub atlas: AtlasConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    pub initial_data: InitialData,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasConfig {
    pub n: usize,
    #[serde(default = "default_extent")]
    pub extent: f64,
}

fn default_extent() -> f64 {
    1.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builder {
    /// `d = direction`.
    Constant,
    /// `z -> z^k` (`k < 0` conjugates).
    PowerMap,
    /// Power map plus a smooth perturbation of sup-norm `eps`.
    PerturbedPowerMap,
    /// Values in the upper hemisphere, tilted by at most `tilt`.
    Hemisphere,
    /// Director and velocity read from `path`.
    Snapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityKind {
    #[default]
    Zero,
    /// Rigid rotation about `rotation_axis` with angular speed `velocity_amplitude`.
    Rotation,
    /// Random stream-function field of L2 norm `velocity_amplitude`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuilderParams {
    pub k: Option<i32>,
    pub eps: Option<f64>,
    pub direction: Option<[f64; 3]>,
    pub tilt: Option<f64>,
    pub path: Option<PathBuf>,
    pub velocity: VelocityKind,
    pub velocity_amplitude: f64,
    pub velocity_modes: u32,
    pub rotation_axis: [f64; 3],
}

impl Default for BuilderParams {
    fn default() -> Self {
        BuilderParams {
            k: None,
            eps: None,
            direction: None,
            tilt: None,
            path: None,
            velocity: VelocityKind::Zero,
            velocity_amplitude: 0.0,
            velocity_modes: 3,
            rotation_axis: [0.0, 0.0, 1.0],
        }
    }
}

/// Builder name, parameters and seed. The random velocity uses `seed + 1`
/// so that director and velocity draws are independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub builder: Builder,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: BuilderParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    pub trials: usize,
    pub seed: u64,
    pub c_p: Option<f64>,
    pub c_lady1: Option<f64>,
    pub c_lady2: Option<f64>,
    pub c0_topping: Option<f64>,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig {
            trials: 200,
            seed: 1,
            c_p: None,
            c_lady1: None,
            c_lady2: None,
            c0_topping: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub decay_window: Option<[f64; 2]>,
    /// Concentration scan at every report; omitted means no scan.
    pub scan_radius: Option<f64>,
    pub eps0_topping: f64,
    /// Relative band for boundary cases of the certificates.
    pub margin: f64,
    pub constants: ConstantsConfig,
    /// Reference map for the `director_l2_error` and `h1_error` columns.
    pub reference: Option<InitialData>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            decay_window: None,
            scan_radius: None,
            eps0_topping: 1.0,
            margin: DEFAULT_MARGIN,
            constants: ConstantsConfig::default(),
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub csv: String,
    pub snapshot_prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            csv: "series.csv".into(),
            snapshot_prefix: "snapshot".into(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that does not need the atlas.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.scheme
            .validate()
            .map_err(|e| Error::Config(format!("scheme: {e}")))?;
        check_params(&self.initial_data)
            .map_err(|e| Error::Config(format!("initial_data: {e}")))?;
        if let Some(r) = &self.diagnostics.reference {
            check_params(r).map_err(|e| Error::Config(format!("diagnostics.reference: {e}")))?;
        }
        if let Some([a, b]) = self.diagnostics.decay_window {
            if !(a < b) {
                return cfg(format!("decay_window [{a}, {b}] is empty"));
            }
        }
        if let Some(r) = self.diagnostics.scan_radius {
            if !(r > 0.0 && r <= std::f64::consts::PI) {
                return cfg(format!("scan_radius {r} outside (0, pi]"));
            }
        }
        if !(self.diagnostics.eps0_topping > 0.0) {
            return cfg("eps0_topping must be > 0".into());
        }
        if !(self.diagnostics.margin >= 0.0) {
            return cfg("margin must be >= 0".into());
        }
        if self.diagnostics.constants.trials < 1 {
            return cfg("constants.trials must be >= 1".into());
        }
        if self.output.csv.is_empty() || self.output.snapshot_prefix.is_empty() {
            return cfg("output file names must be non-empty".into());
        }
        Ok(())
    }

    pub fn build_atlas(&self) -> Result<ChartAtlas> {
        build_atlas(self.atlas.n, self.atlas.extent)
    }

    /// Ladyzhenskaya and topping constants, estimated unless every one of
    /// them is overridden.
    pub fn constants(&self, atlas: &ChartAtlas) -> Result<ConstantsProfile> {
        let d = &self.diagnostics;
        let c = &d.constants;
        let given = (c.c_p, c.c_lady1, c.c_lady2, c.c0_topping);
        let profile = if let (Some(p), Some(l1), Some(l2), Some(c0)) = given {
            ConstantsProfile::new(p, l1, l2, c0, d.eps0_topping)
        } else {
            let est = estimate_constants(atlas, c.trials, c.seed, d.eps0_topping)?;
            ConstantsProfile::new(
                c.c_p.unwrap_or(est.c_p),
                c.c_lady1.unwrap_or(est.c_lady1),
                c.c_lady2.unwrap_or(est.c_lady2),
                c.c0_topping.unwrap_or(est.c0_topping),
                d.eps0_topping,
            )
        };
        profile
            .validate()
            .map_err(|e| Error::Config(format!("constants: {e}")))?;
        Ok(profile)
    }
}

fn check_params(data: &InitialData) -> Result<()> {
    let p = &data.params;
    let bad = |m: &str| {
        Err(Error::InvalidArgument(format!(
            "{m} not used by builder {:?}",
            data.builder
        )))
    };
    let uses = match data.builder {
        Builder::Constant => [false, false, true, false, false],
        Builder::PowerMap => [true, false, false, false, false],
        Builder::PerturbedPowerMap => [true, true, false, false, false],
        Builder::Hemisphere => [false, false, false, true, false],
        Builder::Snapshot => [false, false, false, false, true],
    };
    let set = [
        p.k.is_some(),
        p.eps.is_some(),
        p.direction.is_some(),
        p.tilt.is_some(),
        p.path.is_some(),
    ];
    for (name, (u, s)) in ["k", "eps", "direction", "tilt", "path"]
        .iter()
        .zip(uses.iter().zip(set))
    {
        if s && !u {
            return bad(name);
        }
    }
    if data.builder == Builder::Snapshot {
        if p.path.is_none() {
            return Err(Error::InvalidArgument(
                "snapshot builder needs params.path".into(),
            ));
        }
        if p.velocity != VelocityKind::Zero {
            return Err(Error::InvalidArgument(
                "snapshot builder reads its own velocity".into(),
            ));
        }
    }
    if p.k == Some(0) {
        return Err(Error::InvalidArgument("k must be nonzero".into()));
    }
    if !(p.velocity_amplitude >= 0.0) {
        return Err(Error::InvalidArgument(
            "velocity_amplitude must be >= 0".into(),
        ));
    }
    Ok(())
}

fn director(atlas: &ChartAtlas, data: &InitialData) -> Result<DirectorField> {
    let p = &data.params;
    match data.builder {
        Builder::Constant => {
            let v = p.direction.unwrap_or([0.0, 0.0, 1.0]);
            make_constant(atlas, Vector3::from(v))
        }
        Builder::PowerMap => make_power_map(atlas, p.k.unwrap_or(1)),
        Builder::PerturbedPowerMap => {
            let base = make_power_map(atlas, p.k.unwrap_or(1))?;
            perturb_director(atlas, &base, data.seed, p.eps.unwrap_or(0.05))
        }
        Builder::Hemisphere => make_hemisphere_director(atlas, data.seed, p.tilt.unwrap_or(0.5)),
        Builder::Snapshot => Ok(load_matching(atlas, data)?.director),
    }
}

fn load_matching(atlas: &ChartAtlas, data: &InitialData) -> Result<FlowState> {
    let path = data.params.path.as_ref().expect("checked by validate");
    let snap = read_snapshot(path)?;
    if snap.n != atlas.resolution() || snap.extent != atlas.extent() {
        return Err(Error::Config(format!(
            "{}: snapshot atlas (N={}, R={}) does not match config (N={}, R={})",
            path.display(),
            snap.n,
            snap.extent,
            atlas.resolution(),
            atlas.extent()
        )));
    }
    Ok(snap.state)
}

/// Initial state described by `data`, at `t = 0` unless read from a snapshot.
pub fn build_initial(atlas: &ChartAtlas, data: &InitialData) -> Result<FlowState> {
    if data.builder == Builder::Snapshot {
        return load_matching(atlas, data);
    }
    let p = &data.params;
    let d = director(atlas, data)?;
    let u = match p.velocity {
        VelocityKind::Zero => VelocityField::zeros(atlas),
        VelocityKind::Rotation => {
            make_rotation_field(atlas, Vector3::from(p.rotation_axis), p.velocity_amplitude)?
        }
        VelocityKind::Random => make_random_velocity(
            atlas,
            data.seed.wrapping_add(1),
            p.velocity_modes,
            p.velocity_amplitude,
        )?,
    };
    Ok(FlowState::new(atlas, d, u))
}

/// Reference director for the error columns, if configured.
pub fn build_reference(atlas: &ChartAtlas, cfg: &RunConfig) -> Result<Option<DirectorField>> {
    cfg.diagnostics
        .reference
        .as_ref()
        .map(|r| director(atlas, r))
        .transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [atlas]
        n = 17
        [scheme]
        t_end = 0.1
        [initial_data]
        builder = "constant"
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.atlas.extent, 1.5);
        assert_eq!(cfg.scheme.cfl_safety, 0.4);
        assert_eq!(cfg.output.csv, "series.csv");
        assert_eq!(cfg.diagnostics.eps0_topping, 1.0);
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = MINIMAL.replace("t_end = 0.1", "t_end = 0.1\nt_ned = 3");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("t_ned") && err.contains("line"), "{err}");
        let text = MINIMAL.replace("\"constant\"", "\"constant\"\ncolour = 1");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn builder_params_are_checked() {
        let text = MINIMAL.replace("\"constant\"", "\"constant\"\nparams = { k = 2 }");
        assert!(RunConfig::parse(&text).is_err());
        let text = MINIMAL.replace("\"constant\"", "\"snapshot\"");
        assert!(RunConfig::parse(&text).is_err());
        let text = MINIMAL.replace("\"constant\"", "\"power_map\"\nparams = { k = 0 }");
        assert!(RunConfig::parse(&text).is_err());
        let text = MINIMAL.replace("t_end = 0.1", "t_end = -1.0");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn builders_produce_unit_directors() {
        let atlas = build_atlas(17, 1.5).unwrap();
        for (b, params) in [
            (Builder::Constant, "direction = [0.0, 1.0, 0.0]"),
            (Builder::PowerMap, "k = -2"),
            (
                Builder::PerturbedPowerMap,
                "k = 1, eps = 0.1, velocity = \"random\", velocity_amplitude = 0.3",
            ),
            (
                Builder::Hemisphere,
                "tilt = 0.4, velocity = \"rotation\", velocity_amplitude = 1.0",
            ),
        ] {
            let text = format!(
                "builder = \"{}\"\nseed = 3\nparams = {{ {params} }}",
                serde_json::to_string(&b).unwrap().trim_matches('"')
            );
            let data: InitialData = toml::from_str(&text).unwrap();
            let state = build_initial(&atlas, &data).unwrap();
            assert!(crate::energetics::unit_defect(&state.director) < 1e-12);
        }
    }

    #[test]
    fn full_override_skips_estimation() {
        let text = format!(
            "{MINIMAL}\n[diagnostics.constants]\nc_p = 0.7\nc_lady1 = 0.5\nc_lady2 = 0.4\nc0_topping = 0.02\n"
        );
        let cfg = RunConfig::parse(&text).unwrap();
        let atlas = cfg.build_atlas().unwrap();
        let p = cfg.constants(&atlas).unwrap();
        assert_eq!(
            (p.c_p, p.c_lady1, p.c_lady2, p.c0_topping),
            (0.7, 0.5, 0.4, 0.02)
        );
        assert!((p.c_l - (0.5 + 0.4 * 0.7f64.sqrt())).abs() < 1e-15);
    }
}
