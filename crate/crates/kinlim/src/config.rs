//! Strict TOML configuration for runs and experiments.
//!
//! ```toml
//! [experiment]
//! kind = "landau"
//!
//! [run]
//! model = "vp"
//! delta = 1e-4
//! t_final = 30.0
//! dt = 0.05
//!
//! [grid]
//! n_x = 64
//! kappa = 0.5
//! dim_v = 1
//! n_v = 256
//! v_max = 8.0
//!
//! [equilibrium]
//! kind = "maxwellian"
//! sigma = 1.0
//!
//! [[perturbation]]
//! k = 1
//! amplitude = 1.0
//! ```
//!
//! Unknown keys are rejected. Missing optional keys take the defaults below
//! and the filled-in configuration is echoed into the run manifest.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use kinlim_core::solvers::{
    initial_state, FieldComponent, FieldMode, GridSpec, Model, PerturbationMode, RunConfig, VWeight,
};
use kinlim_core::{Descriptor, Profile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub run: RunSection,
    pub grid: GridSection,
    pub equilibrium: ProfileSection,
    #[serde(default)]
    pub perturbation: Vec<PerturbationSection>,
    #[serde(default)]
    pub field_mode: Vec<FieldModeSection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    PenroseScan,
    Landau,
    TwoStreamTiming,
    Weibel,
    ConvVmVp,
    ConvVmVd,
    HierarchyCheck,
    ScalingCheck,
    Conservation,
    PreparedCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub kind: KindName,
    /// Darwin order for `conv_vm_vd`.
    pub vd_order: usize,
    pub eps_values: Vec<f64>,
    pub dt_values: Vec<f64>,
    /// Velocity resolutions `n_v` for sweeps that refine the grid.
    pub resolutions: Vec<usize>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    /// Threshold on `delta ||E||_2` for the timing experiment.
    pub threshold: f64,
    /// `delta = eps^delta_power` in the timing experiment.
    pub delta_power: i32,
    /// Fit window `[t0, t1]` for rate measurements.
    pub window: [f64; 2],
    pub lambdas: Vec<f64>,
    /// Hierarchy depth for `hierarchy_check`.
    pub levels: usize,
    /// Largest integer wavevector of a Penrose scan.
    pub k_max: i64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: KindName::Landau,
            vd_order: 1,
            eps_values: vec![0.2, 0.1, 0.05, 0.025],
            dt_values: Vec::new(),
            resolutions: Vec::new(),
            output_dir: None,
            seed: 0,
            threshold: 0.1,
            delta_power: 2,
            window: [2.0, 25.0],
            lambdas: vec![0.5, 2.0],
            levels: 4,
            k_max: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Vm,
    Vp,
    Vd,
}

fn default_one() -> usize {
    1
}
fn default_order() -> u32 {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub model: ModelName,
    #[serde(default = "default_one")]
    pub vd_order: usize,
    #[serde(default)]
    pub eps: f64,
    pub delta: f64,
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "default_order")]
    pub prepared_order: u32,
    #[serde(default = "default_one")]
    pub output_every: usize,
    #[serde(default)]
    pub snapshot_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_x: usize,
    /// Box length; alternatively give the fundamental wavenumber `kappa`.
    pub length: Option<f64>,
    pub kappa: Option<f64>,
    pub dim_v: usize,
    pub n_v: usize,
    pub v_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSection {
    Maxwellian { sigma: f64 },
    TwoStream { u: f64, sigma: f64 },
    BumpOnTail { n_b: f64, u_b: f64, sigma_b: f64, sigma: f64 },
    Anisotropic { profiles: Vec<ProfileSection> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightName {
    One,
    V1,
    V2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    pub k: i64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_weight")]
    pub weight: WeightName,
}

fn default_weight() -> WeightName {
    WeightName::One
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentName {
    E1,
    E2,
    B3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldModeSection {
    pub component: ComponentName,
    pub k: i64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Experiment kinds with their parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    PenroseScan,
    Landau,
    TwoStreamTiming,
    Weibel,
    ConvVmVp,
    ConvVmVd(usize),
    HierarchyCheck,
    ScalingCheck,
    Conservation,
    PreparedCheck,
}

impl ExperimentKind {
    pub fn name(&self) -> String {
        match self {
            Self::PenroseScan => "penrose_scan".into(),
            Self::Landau => "landau".into(),
            Self::TwoStreamTiming => "two_stream_timing".into(),
            Self::Weibel => "weibel".into(),
            Self::ConvVmVp => "conv_vm_vp".into(),
            Self::ConvVmVd(n) => format!("conv_vm_vd{n}"),
            Self::HierarchyCheck => "hierarchy_check".into(),
            Self::ScalingCheck => "scaling_check".into(),
            Self::Conservation => "conservation".into(),
            Self::PreparedCheck => "prepared_check".into(),
        }
    }

    fn uses_eps_sweep(&self) -> bool {
        matches!(
            self,
            Self::TwoStreamTiming | Self::ConvVmVp | Self::ConvVmVd(_) | Self::HierarchyCheck | Self::PreparedCheck
        )
    }
}

/// Parsed and validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub base: RunConfig,
    pub eps_values: Vec<f64>,
    pub dt_values: Vec<f64>,
    pub resolutions: Vec<usize>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub threshold: f64,
    pub delta_power: i32,
    pub window: (f64, f64),
    pub lambdas: Vec<f64>,
    pub levels: usize,
    pub k_max: i64,
    /// The configuration with defaults filled in, as TOML.
    pub resolved: String,
    /// SHA-256 of `resolved`, hex.
    pub hash: String,
}

impl ExperimentSpec {
    /// First 12 hex digits of the hash, used in directory names and rows.
    pub fn short_hash(&self) -> &str {
        &self.hash[..12]
    }
}

impl ProfileSection {
    fn to_profile(&self) -> anyhow::Result<Profile> {
        Ok(match *self {
            Self::Maxwellian { sigma } => Profile::Maxwellian { sigma },
            Self::TwoStream { u, sigma } => Profile::TwoStream { u, sigma },
            Self::BumpOnTail { n_b, u_b, sigma_b, sigma } => Profile::BumpOnTail { n_b, u_b, sigma_b, sigma },
            Self::Anisotropic { .. } => bail!("nested anisotropic profiles are not supported"),
        })
    }

    fn to_descriptor(&self) -> anyhow::Result<Descriptor> {
        Ok(match self {
            Self::Maxwellian { sigma } => Descriptor::Maxwellian { sigma: *sigma },
            Self::TwoStream { u, sigma } => Descriptor::TwoStream { u: *u, sigma: *sigma },
            Self::BumpOnTail { n_b, u_b, sigma_b, sigma } => {
                Descriptor::BumpOnTail { n_b: *n_b, u_b: *u_b, sigma_b: *sigma_b, sigma: *sigma }
            }
            Self::Anisotropic { profiles } => {
                Descriptor::AnisotropicProduct(profiles.iter().map(|p| p.to_profile()).collect::<anyhow::Result<_>>()?)
            }
        })
    }
}

impl ConfigFile {
    pub fn run_config(&self) -> anyhow::Result<RunConfig> {
        let r = &self.run;
        let g = &self.grid;
        let length = match (g.length, g.kappa) {
            (Some(l), None) => l,
            (None, Some(k)) if k > 0.0 => 2.0 * PI / k,
            (None, Some(k)) => bail!("grid.kappa must be positive, got {k}"),
            (Some(_), Some(_)) => bail!("give either grid.length or grid.kappa, not both"),
            (None, None) => 2.0 * PI,
        };
        let model = match r.model {
            ModelName::Vm => Model::VM,
            ModelName::Vp => Model::VP,
            ModelName::Vd => Model::VD(r.vd_order),
        };
        Ok(RunConfig {
            model,
            eps: r.eps,
            delta: r.delta,
            t_final: r.t_final,
            dt: r.dt,
            grid: GridSpec { n_x: g.n_x, length, dim_v: g.dim_v, n_v: g.n_v, v_max: g.v_max },
            equilibrium: self.equilibrium.to_descriptor()?,
            perturbation: self
                .perturbation
                .iter()
                .map(|p| PerturbationMode {
                    k: p.k,
                    amplitude: p.amplitude,
                    phase: p.phase,
                    weight: match p.weight {
                        WeightName::One => VWeight::One,
                        WeightName::V1 => VWeight::V1,
                        WeightName::V2 => VWeight::V2,
                    },
                })
                .collect(),
            field_modes: self
                .field_mode
                .iter()
                .map(|m| FieldMode {
                    component: match m.component {
                        ComponentName::E1 => FieldComponent::E1,
                        ComponentName::E2 => FieldComponent::E2,
                        ComponentName::B3 => FieldComponent::B3,
                    },
                    k: m.k,
                    amplitude: m.amplitude,
                    phase: m.phase,
                })
                .collect(),
            prepared_order: r.prepared_order,
            output_every: r.output_every,
            snapshot_every: r.snapshot_every,
        })
    }
}

/// Checks the initial data against Gauss's law and the supported
/// (model, prepared order) combinations.
pub fn check_compatibility(cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.validate().map_err(|e| anyhow!("run configuration: {e}"))?;
    let eq = cfg.equilibrium().map_err(|e| anyhow!("equilibrium: {e}"))?;
    if cfg.prepared_order == 0 && !cfg.field_modes.is_empty() {
        let f0 = cfg.initial_f(&eq)?;
        initial_state(cfg, &eq, &f0).map_err(|e| anyhow!("initial data: {e}"))?;
    }
    Ok(())
}

/// Parses TOML text; `origin` names the source in error messages.
pub fn parse_str(text: &str, origin: &str) -> anyhow::Result<ExperimentSpec> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| anyhow!("{origin}: {e}"))?;
    let x = &file.experiment;
    let kind = match x.kind {
        KindName::PenroseScan => ExperimentKind::PenroseScan,
        KindName::Landau => ExperimentKind::Landau,
        KindName::TwoStreamTiming => ExperimentKind::TwoStreamTiming,
        KindName::Weibel => ExperimentKind::Weibel,
        KindName::ConvVmVp => ExperimentKind::ConvVmVp,
        KindName::ConvVmVd => {
            if x.vd_order == 0 {
                bail!("{origin}: experiment.vd_order must be >= 1");
            }
            ExperimentKind::ConvVmVd(x.vd_order)
        }
        KindName::HierarchyCheck => ExperimentKind::HierarchyCheck,
        KindName::ScalingCheck => ExperimentKind::ScalingCheck,
        KindName::Conservation => ExperimentKind::Conservation,
        KindName::PreparedCheck => ExperimentKind::PreparedCheck,
    };
    if kind.uses_eps_sweep() {
        if x.eps_values.is_empty() {
            bail!("{origin}: experiment.eps_values must be nonempty for {}", kind.name());
        }
        if let Some(e) = x.eps_values.iter().find(|e| !(**e > 0.0)) {
            bail!("{origin}: experiment.eps_values must be strictly positive, found {e}");
        }
    }
    if x.lambdas.iter().any(|l| !(*l > 0.0)) || (kind == ExperimentKind::ScalingCheck && x.lambdas.is_empty()) {
        bail!("{origin}: experiment.lambdas must be nonempty and positive");
    }
    if x.dt_values.iter().any(|d| !(*d > 0.0)) {
        bail!("{origin}: experiment.dt_values must be positive");
    }
    if !(x.window[1] > x.window[0]) {
        bail!("{origin}: experiment.window must be increasing");
    }
    let base = file.run_config().with_context(|| origin.to_string())?;
    check_compatibility(&base).with_context(|| origin.to_string())?;
    let resolved = toml::to_string(&file)?;
    let hash = Sha256::digest(resolved.as_bytes()).iter().map(|b| format!("{b:02x}")).collect::<String>();
    let output_dir = x.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    Ok(ExperimentSpec {
        kind,
        base,
        eps_values: x.eps_values.clone(),
        dt_values: x.dt_values.clone(),
        resolutions: x.resolutions.clone(),
        output_dir,
        seed: x.seed,
        threshold: x.threshold,
        delta_power: x.delta_power,
        window: (x.window[0], x.window[1]),
        lambdas: x.lambdas.clone(),
        levels: x.levels,
        k_max: x.k_max,
        resolved,
        hash,
    })
}

pub fn parse_config(path: &Path) -> anyhow::Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LANDAU: &str = r#"
[run]
model = "vp"
delta = 1e-4
t_final = 1.0
dt = 0.1

[grid]
n_x = 16
kappa = 0.5
dim_v = 1
n_v = 64
v_max = 8.0

[equilibrium]
kind = "maxwellian"
sigma = 1.0

[[perturbation]]
k = 1
amplitude = 1.0
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let s = parse_str(LANDAU, "landau.toml").unwrap();
        assert_eq!(s.kind, ExperimentKind::Landau);
        assert_eq!(s.base.prepared_order, 4);
        assert_eq!(s.base.output_every, 1);
        assert!((s.base.grid.length - 4.0 * PI).abs() < 1e-12);
        assert!(s.resolved.contains("prepared_order = 4"));
        assert!(s.resolved.contains("threshold"));
        assert_eq!(s.hash.len(), 64);
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = parse_str(LANDAU, "a").unwrap();
        let b = parse_str(LANDAU, "b").unwrap();
        assert_eq!(a.hash, b.hash);
        let c = parse_str(&LANDAU.replace("dt = 0.1", "dt = 0.05"), "c").unwrap();
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let text = LANDAU.replace("dt = 0.1", "dt = 0.1\nfoo = 3");
        let err = parse_str(&text, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("foo"), "{err}");
        assert!(err.contains("line 7"), "{err}");
    }

    #[test]
    fn gauss_violation_is_named() {
        let text =
            LANDAU.replace("prepared_order", "x") + "\n[[field_mode]]\ncomponent = \"e1\"\nk = 1\namplitude = 0.5\n";
        let text = text.replace("dt = 0.1", "dt = 0.1\nprepared_order = 0");
        let err = format!("{:#}", parse_str(&text, "gauss.toml").unwrap_err());
        assert!(err.contains("Gauss"), "{err}");
    }

    #[test]
    fn unsupported_order_is_rejected() {
        let text = LANDAU.replace("dt = 0.1", "dt = 0.1\nprepared_order = 6");
        let err = format!("{:#}", parse_str(&text, "p.toml").unwrap_err());
        assert!(err.contains("prepared"), "{err}");
    }

    #[test]
    fn eps_sweeps_must_be_positive() {
        let text = format!("[experiment]\nkind = \"conv_vm_vp\"\neps_values = [0.1, 0.0]\n{LANDAU}");
        assert!(parse_str(&text, "e.toml").unwrap_err().to_string().contains("strictly positive"));
        let text = format!("[experiment]\nkind = \"conv_vm_vp\"\neps_values = []\n{LANDAU}");
        assert!(parse_str(&text, "e.toml").unwrap_err().to_string().contains("nonempty"));
    }

    #[test]
    fn anisotropic_profiles_parse() {
        let text = LANDAU
            .replace("dim_v = 1", "dim_v = 2")
            .replace("n_v = 64", "n_v = 48").replace("v_max = 8.0", "v_max = 10.0")
            .replace(
                "kind = \"maxwellian\"\nsigma = 1.0",
                "kind = \"anisotropic\"\nprofiles = [{ kind = \"two_stream\", u = 2.4, sigma = 1.0 }, { kind = \"maxwellian\", sigma = 1.0 }]",
            );
        let s = parse_str(&text, "a.toml").unwrap();
        assert!(matches!(s.base.equilibrium, Descriptor::AnisotropicProduct(ref p) if p.len() == 2));
    }
}
