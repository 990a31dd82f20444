//! The JSON run-config and its validation.

use std::path::{Path, PathBuf};

use blochhom::bloch::{PlaneWaveBasis, StiffnessRule};
use blochhom::convergence::ReferenceConfig;
use blochhom::grid::FieldKind;
use blochhom::medium::{build_medium, MediumSpec};
use blochhom::quadrature::{QuadratureRule, WavenumberQuadrature};
use blochhom::source::{Envelope, SourceSpec, DEFAULT_K_MAX};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub medium: MediumSpec,
    /// Plane-wave cutoff N: basis |j|_inf <= N.
    pub cutoff: usize,
    #[serde(default = "default_rule")]
    pub stiffness_rule: StiffnessRule,
    #[serde(default)]
    pub p: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_omega_hat")]
    pub omega_hat: f64,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_envelope")]
    pub source: Envelope,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    /// Used when --out is not given. Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub dispersion: DispersionConfig,
    #[serde(default)]
    pub gaps: GapsConfig,
    #[serde(default)]
    pub cell: CellConfig,
    #[serde(default)]
    pub fields: FieldsConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
}

fn default_rule() -> StiffnessRule {
    StiffnessRule::Auto
}
fn default_sigma() -> f64 {
    -1.0
}
fn default_omega_hat() -> f64 {
    1.0
}
fn default_eps() -> Vec<f64> {
    vec![0.5, 0.375, 0.25]
}
fn default_envelope() -> Envelope {
    Envelope::Gaussian { amplitude: 1.0 }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default = "default_quad_rule")]
    pub rule: QuadratureRule,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default = "default_k_max")]
    pub k_max: f64,
}

fn default_quad_rule() -> QuadratureRule {
    QuadratureRule::GaussLegendre
}
fn default_q() -> usize {
    200
}
fn default_k_max() -> f64 {
    DEFAULT_K_MAX
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { rule: default_quad_rule(), q: default_q(), k_max: default_k_max() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Uniform samples of [-pi, pi] in 1D, Gamma-X-M-Gamma in 2D.
    Auto,
    Uniform1d,
    GammaXMGamma,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionConfig {
    #[serde(default = "default_path")]
    pub path: PathKind,
    /// Intervals in 1D, steps per leg in 2D. Defaults to 64 and 12.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Branches to compute. Defaults to 14, capped by the basis size.
    #[serde(default)]
    pub count: Option<usize>,
}

fn default_path() -> PathKind {
    PathKind::Auto
}

impl Default for DispersionConfig {
    fn default() -> Self {
        DispersionConfig { path: PathKind::Auto, samples: None, count: None }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapsConfig {
    /// When set, `gaps` exits with the acceptance code if the count differs.
    #[serde(default)]
    pub expected: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    /// Samples per cell axis for the exported cell functions. Defaults to 64 in 1D, 32 in 2D.
    #[serde(default)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsConfig {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<FieldKind>,
    /// Half-width of the fast grid in cells; the reference rule when absent.
    #[serde(default)]
    pub half_width: Option<usize>,
    #[serde(default = "default_field_samples")]
    pub n_cell: usize,
    /// Bloch modes in the exact solution, capped by the basis size.
    #[serde(default = "default_modes")]
    pub mode_count: usize,
    #[serde(default = "default_true")]
    pub binary: bool,
}

fn default_kinds() -> Vec<FieldKind> {
    vec![FieldKind::Exact, FieldKind::U0, FieldKind::U1, FieldKind::U2]
}
fn default_field_samples() -> usize {
    16
}
fn default_modes() -> usize {
    blochhom::fields::DEFAULT_MODE_COUNT
}
fn default_true() -> bool {
    true
}

impl Default for FieldsConfig {
    fn default() -> Self {
        FieldsConfig {
            kinds: default_kinds(),
            half_width: None,
            n_cell: default_field_samples(),
            mode_count: default_modes(),
            binary: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    /// Accepted slope interval per order m = 0, 1, 2.
    #[serde(default = "default_bands")]
    pub bands: [[f64; 2]; 3],
    #[serde(default)]
    pub m_eval: Option<usize>,
    /// Modes of the second, Bloch-expansion reference, capped by the basis
    /// size. `null` skips it.
    #[serde(default = "default_exact_modes")]
    pub exact_modes: Option<usize>,
    #[serde(default = "default_slope_agreement")]
    pub max_slope_disagreement: f64,
}

fn default_bands() -> [[f64; 2]; 3] {
    [[0.7, 1.7], [1.7, 2.6], [2.7, 3.7]]
}
fn default_exact_modes() -> Option<usize> {
    Some(blochhom::fields::DEFAULT_MODE_COUNT)
}
fn default_slope_agreement() -> f64 {
    0.15
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            bands: default_bands(),
            m_eval: None,
            exact_modes: default_exact_modes(),
            max_slope_disagreement: default_slope_agreement(),
        }
    }
}

fn bad(name: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("config `{name}`: {reason}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn d(&self) -> usize {
        self.medium.d
    }

    pub fn source_spec(&self) -> Result<SourceSpec, CliError> {
        let Envelope::Gaussian { amplitude } = self.source;
        Ok(SourceSpec::gaussian(amplitude)?.with_k_max(self.quadrature.k_max)?)
    }

    pub fn wavenumber_quadrature(&self) -> Result<WavenumberQuadrature, CliError> {
        Ok(WavenumberQuadrature::new(self.d(), self.quadrature.rule, self.quadrature.q, self.quadrature.k_max)?)
    }

    pub fn basis_len(&self) -> usize {
        (2 * self.cutoff + 1).pow(self.d() as u32)
    }

    pub fn branch_count(&self) -> usize {
        self.dispersion.count.unwrap_or(14).min(self.basis_len())
    }

    pub fn mode_count(&self) -> usize {
        self.fields.mode_count.min(self.basis_len())
    }

    pub fn exact_modes(&self) -> Option<usize> {
        self.converge.exact_modes.map(|m| m.min(self.basis_len()))
    }

    pub fn path_samples(&self) -> usize {
        self.dispersion.samples.unwrap_or(if self.d() == 1 { 64 } else { 12 })
    }

    pub fn path(&self) -> PathKind {
        match (self.dispersion.path, self.d()) {
            (PathKind::Auto, 1) => PathKind::Uniform1d,
            (PathKind::Auto, _) => PathKind::GammaXMGamma,
            (p, _) => p,
        }
    }

    pub fn cell_samples(&self) -> usize {
        self.cell.samples.unwrap_or(if self.d() == 1 { 64 } else { 32 })
    }

    /// Everything that can be checked without an eigensolve.
    pub fn validate(&self) -> Result<(), CliError> {
        build_medium(self.medium.clone())?;
        if self.cutoff == 0 {
            return Err(bad("cutoff", "must be positive"));
        }
        PlaneWaveBasis::new(self.d(), self.cutoff)?;
        if self.p + 1 >= self.basis_len() {
            return Err(bad("p", format!("must be below {}", self.basis_len() - 1)));
        }
        if self.sigma != 1.0 && self.sigma != -1.0 {
            return Err(bad("sigma", "must be +1 or -1"));
        }
        if !(self.omega_hat.is_finite() && self.omega_hat > 0.0) {
            return Err(bad("omega_hat", "must be positive"));
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(e.is_finite() && *e > 0.0 && *e <= 1.0)) {
            return Err(bad("eps", "needs at least one value in (0, 1]"));
        }
        self.source_spec()?;
        self.wavenumber_quadrature()?;
        self.reference.validate()?;
        match (self.path(), self.d()) {
            (PathKind::Uniform1d, 2) | (PathKind::GammaXMGamma, 1) => {
                return Err(bad("dispersion.path", "does not match the medium dimension"))
            }
            _ => {}
        }
        if self.path_samples() == 0 {
            return Err(bad("dispersion.samples", "must be positive"));
        }
        if self.branch_count() <= self.p + 1 {
            return Err(bad("dispersion.count", format!("must exceed p + 1 = {}", self.p + 1)));
        }
        if self.cell_samples() == 0 {
            return Err(bad("cell.samples", "must be positive"));
        }
        if self.fields.kinds.is_empty() {
            return Err(bad("fields.kinds", "must not be empty"));
        }
        if self.fields.n_cell == 0 || self.fields.half_width == Some(0) {
            return Err(bad("fields", "n_cell and half_width must be positive"));
        }
        if self.fields.mode_count == 0 {
            return Err(bad("fields.mode_count", "must be positive"));
        }
        if self.converge.bands.iter().any(|b| !(b[0] <= b[1])) {
            return Err(bad("converge.bands", "each band needs lo <= hi"));
        }
        if self.converge.exact_modes == Some(0) {
            return Err(bad("converge.exact_modes", "must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form: defaults filled in, keys sorted,
    /// output location left out.
    pub fn hash(&self) -> String {
        hash_value(&serde_json::to_value(self).expect("config serializes"))
    }

    /// Hash of the parts that determine the dispersion diagram.
    pub fn dispersion_hash(&self) -> String {
        hash_value(&serde_json::json!({
            "medium": self.medium,
            "cutoff": self.cutoff,
            "stiffness_rule": self.stiffness_rule,
            "path": self.path(),
            "samples": self.path_samples(),
            "count": self.branch_count(),
        }))
    }
}

pub fn hash_value(v: &serde_json::Value) -> String {
    let digest = Sha256::digest(v.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const DISK: &str = r#"{"medium":{"d":2,"background":{"G":1.0,"rho":1.0},
        "inclusions":[{"shape":"disk","center":[0,0],"radius":0.3,"G":6.0,"rho":20.0}],"smoothing":0.0},
        "cutoff":4}"#;

    fn parse(s: &str) -> RunConfig {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn defaults_are_filled_in() {
        let c = parse(DISK);
        c.validate().unwrap();
        assert_eq!(c.eps, vec![0.5, 0.375, 0.25]);
        assert_eq!(c.path(), PathKind::GammaXMGamma);
        assert_eq!(c.branch_count(), 14);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = DISK.replace("\"cutoff\"", "\"cutof\"");
        assert!(serde_json::from_str::<RunConfig>(&typo).is_err());
        let nested = DISK.replace("\"cutoff\":4", "\"cutoff\":4,\"fields\":{\"kind\":[]}");
        assert!(serde_json::from_str::<RunConfig>(&nested).is_err());
    }

    #[test]
    fn hash_tracks_semantic_content_only() {
        let a = parse(DISK);
        let explicit = parse(&DISK.replace("\"cutoff\":4", "\"cutoff\":4,\"p\":0,\"sigma\":-1.0,\"output_dir\":\"x\""));
        assert_eq!(a.hash(), explicit.hash());
        let spaced = parse(&DISK.replace(",", " , "));
        assert_eq!(a.hash(), spaced.hash());
        let other = parse(&DISK.replace("\"cutoff\":4", "\"cutoff\":5"));
        assert_ne!(a.hash(), other.hash());
        assert_ne!(a.dispersion_hash(), other.dispersion_hash());
        let eps = parse(&DISK.replace("\"cutoff\":4", "\"cutoff\":4,\"eps\":[0.5]"));
        assert_ne!(a.hash(), eps.hash());
        assert_eq!(a.dispersion_hash(), eps.dispersion_hash());
    }

    #[test]
    fn invalid_values_are_reported() {
        for patch in [
            "\"cutoff\":4,\"sigma\":0.5",
            "\"cutoff\":4,\"eps\":[]",
            "\"cutoff\":4,\"eps\":[1.5]",
            "\"cutoff\":4,\"p\":500",
            "\"cutoff\":4,\"reference\":{\"n_cell\":4}",
            "\"cutoff\":4,\"dispersion\":{\"path\":\"uniform1d\"}",
            "\"cutoff\":0",
        ] {
            let c = parse(&DISK.replace("\"cutoff\":4", patch));
            assert!(matches!(c.validate(), Err(CliError::Validation(_))), "{patch}");
        }
    }
}
