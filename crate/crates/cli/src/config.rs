//! Run configuration: a single TOML file covering kernels, the matching
//! schedule, optimizer settings and batch options. Every field has a
//! default; `--print-config` dumps the resolved values.

use serde::{Deserialize, Serialize};
use shapematch::{DirectionKernel, Error, MatchConfig, OptimSettings, PositionKernel, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub position: PositionKernel,
    pub direction: DirectionKernel,
    /// Gaussian signal kernel scale; enables fshape matching when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal_scale: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            position: PositionKernel::Gaussian,
            direction: DirectionKernel::Linear,
            signal_scale: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchSection {
    /// Position-kernel scales as decreasing fractions of the target extent.
    pub sigma_schedule: Vec<f64>,
    /// Initial Lagrange multiplier; omit for automatic balancing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    pub rho: f64,
    pub max_lambda_stages: usize,
    pub eps_var_rel: f64,
}

impl Default for MatchSection {
    fn default() -> Self {
        let d = MatchConfig::default();
        Self {
            sigma_schedule: d.sigma_schedule,
            lambda0: d.lambda0,
            rho: d.rho,
            max_lambda_stages: d.max_lambda_stages,
            eps_var_rel: d.eps_var_rel,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Recorded in every output for provenance; reserved for tie-breaking.
    pub seed: u64,
    /// Symmetrize the distance command: (d(a,b) + d(b,a)) / 2.
    pub symmetrize: bool,
    /// Target dimension of the MDS embedding.
    pub mds_dim: usize,
    /// `"template"` or a path to a shape with the template's connectivity.
    pub init: String,
    pub kernel: KernelSection,
    pub r#match: MatchSection,
    pub optim: OptimSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            symmetrize: true,
            mds_dim: 2,
            init: "template".to_string(),
            kernel: KernelSection::default(),
            r#match: MatchSection::default(),
            optim: OptimSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = toml::from_str(&text)
            .map_err(|e| Error::ConfigError(format!("{}: {e}", path.display())))?;
        config.match_config().validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            position_kernel: self.kernel.position,
            direction_kernel: self.kernel.direction,
            signal_scale: self.kernel.signal_scale,
            sigma_schedule: self.r#match.sigma_schedule.clone(),
            lambda0: self.r#match.lambda0,
            rho: self.r#match.rho,
            max_lambda_stages: self.r#match.max_lambda_stages,
            eps_var_rel: self.r#match.eps_var_rel,
            optim: self.optim,
        }
    }
}
