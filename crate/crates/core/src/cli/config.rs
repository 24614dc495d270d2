//! Run configuration: strict JSON parsing, validation and default resolution.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continuation::{check_ladder, DEFAULT_LADDER};
use crate::critfinder::SeedPlan;
use crate::error::{LabError, Result};
use crate::fibration::ThimbleOptions;
use crate::scenes::{builtin_scene, Model, SceneParams, SceneSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUT_ENV: &str = "WEINSTEIN_LAB_OUT";
pub const DEFAULT_OUT: &str = "weinstein-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Crit,
    Ladder,
    Thimble,
    Glue,
    Checkall,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Crit => "crit",
            Command::Ladder => "ladder",
            Command::Thimble => "thimble",
            Command::Glue => "glue",
            Command::Checkall => "checkall",
        }
    }

    fn default_eps(self) -> Option<f64> {
        match self {
            Command::Crit => Some(0.05),
            Command::Thimble => Some(0.04),
            Command::Glue => Some(0.02),
            Command::Ladder | Command::Checkall => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

/// Pass thresholds; a row passes when its residual is at most the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub grad_norm: f64,
    pub local_spectrum: f64,
    pub ad_fd_grad: f64,
    pub ad_fd_hess: f64,
    pub omega_eps: f64,
    pub liouville: f64,
    pub morse_bott: f64,
    pub slope: f64,
    pub cauchy: f64,
    pub stratum_spectrum: f64,
    pub value: f64,
    pub hypothesis: f64,
    pub tangency: f64,
    pub stratum_crit: f64,
    pub alignment: f64,
    pub thimble_analytic: f64,
    pub lagrangian: f64,
    pub nesting: f64,
    pub branch: f64,
    pub dlambda: f64,
    pub dxi: f64,
    pub path: f64,
    pub locate: f64,
    pub mesh_tangency: f64,
    pub plane_drift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            grad_norm: 1e-8,
            local_spectrum: 1e-6,
            ad_fd_grad: 1e-6,
            ad_fd_hess: 1e-4,
            omega_eps: 1e-10,
            liouville: 1e-10,
            morse_bott: 1e-8,
            slope: crate::continuation::SLOPE_TOL,
            cauchy: crate::continuation::CAUCHY_TOL,
            stratum_spectrum: crate::continuation::CAUCHY_TOL,
            value: crate::continuation::VALUE_TOL,
            hypothesis: crate::continuation::HYPOTHESIS_TOL,
            tangency: crate::continuation::TANGENCY_TOL,
            stratum_crit: crate::continuation::CRIT_TOL,
            alignment: 1e-8,
            thimble_analytic: 1e-6,
            lagrangian: 1e-6,
            nesting: 1e-8,
            branch: 0.0,
            dlambda: crate::gluing::DLAMBDA_TOL,
            dxi: crate::gluing::DXI_TOL,
            path: crate::gluing::PATH_TOL,
            locate: crate::gluing::LOCATE_TOL,
            mesh_tangency: crate::gluing::TANGENCY_TOL,
            plane_drift: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub grid_points: usize,
    pub grid_dims: usize,
    pub random: usize,
    pub box_radius: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let p = SeedPlan::default();
        SearchConfig {
            grid_points: p.grid_points,
            grid_dims: p.grid_dims,
            random: p.random,
            box_radius: p.box_radius,
        }
    }
}

impl SearchConfig {
    pub fn plan(&self, seed: u64) -> SeedPlan {
        SeedPlan {
            grid_points: self.grid_points,
            grid_dims: self.grid_dims,
            random: self.random,
            seed,
            box_radius: self.box_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub kernel: usize,
    pub alignment: usize,
    pub prop36: usize,
    pub gluing: usize,
    pub plane_trajectories: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            kernel: 20,
            alignment: 100,
            prop36: 100,
            gluing: 1000,
            plane_trajectories: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default = "default_scene")]
    pub scene: String,
    /// Shorthand for `params.n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub params: SceneParams,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_ladder: Option<Vec<f64>>,
    #[serde(default)]
    pub eps0: Option<f64>,
    /// Smaller `eps` of the thimble nesting check; defaults to `eps / 4`.
    #[serde(default)]
    pub nesting_eps: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub thimble: ThimbleOptions,
    #[serde(default)]
    pub samples: SampleConfig,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_scene() -> String {
    "local_nc".into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config parses")
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LabError::Config(format!("`{key}` must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn formats_has(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Validates and fills every default for `command`; the result is what
    /// gets written as the resolved config.
    pub fn resolve(mut self, command: Command, seed: Option<u64>) -> Result<RunConfig> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(LabError::Config(format!(
                "`schema_version` must be {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        self.command = Some(command);
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(n) = self.n.take() {
            match self.params.n {
                Some(m) if m != n => {
                    return Err(LabError::Config(format!("`n` = {n} conflicts with `params.n` = {m}")));
                }
                _ => self.params.n = Some(n),
            }
        }
        if let Some(l) = &self.eps_ladder {
            if l.is_empty() {
                return Err(LabError::Config("`eps_ladder` must not be empty".into()));
            }
            check_ladder(l).map_err(|e| LabError::Config(format!("`eps_ladder`: {e}")))?;
        }
        self.eps_ladder.get_or_insert_with(|| DEFAULT_LADDER.to_vec());
        if self.eps.is_none() {
            self.eps = command.default_eps();
        }
        if let Some(e) = self.eps {
            positive("eps", e)?;
        }
        positive("eps0", *self.eps0.get_or_insert(0.25))?;
        if self.nesting_eps.is_none() {
            self.nesting_eps = self.eps.map(|e| e / 4.0);
        }
        if let (Some(a), Some(b)) = (self.nesting_eps, self.eps) {
            positive("nesting_eps", a)?;
            if a >= b {
                return Err(LabError::Config("`nesting_eps` must be smaller than `eps`".into()));
            }
        }
        if self.thimble.base_step.is_none() {
            self.thimble.base_step = self.eps.map(|e| e / 16.0);
        }
        if let Some(s) = self.thimble.base_step {
            positive("thimble.base_step", s)?;
        }
        if self.thimble.segment_sign.abs() != 1.0 {
            return Err(LabError::Config("`thimble.segment_sign` must be +1 or -1".into()));
        }
        if self.thimble.angular == 0 {
            return Err(LabError::Config("`thimble.angular` must be at least 1".into()));
        }
        if self.formats.is_empty() {
            return Err(LabError::Config("`formats` must not be empty".into()));
        }
        let t = serde_json::to_value(&self.tolerances).map_err(|e| LabError::Config(e.to_string()))?;
        for (k, v) in t.as_object().into_iter().flatten() {
            match v.as_f64() {
                Some(x) if x >= 0.0 => {}
                _ => return Err(LabError::Config(format!("`tolerances.{k}` must be a non-negative number"))),
            }
        }
        // materialize the scene defaults
        if command != Command::Checkall {
            let scene = self.scene()?;
            self.params = materialized_params(&scene, &self.params);
        }
        Ok(self)
    }

    pub fn scene(&self) -> Result<SceneSpec> {
        builtin_scene(&self.scene, &self.params)
    }

    pub fn plan(&self) -> SeedPlan {
        self.search.plan(self.seed)
    }

    pub fn ladder(&self) -> Vec<f64> {
        self.eps_ladder.clone().unwrap_or_else(|| DEFAULT_LADDER.to_vec())
    }
}

fn materialized_params(scene: &SceneSpec, given: &SceneParams) -> SceneParams {
    let mut p = given.clone();
    p.n = Some(scene.n);
    p.box_radius = Some(scene.box_radius);
    match &scene.model {
        Model::LocalNc { psi_b } => p.psi_b = Some(psi_b.clone()),
        Model::CpnO2h { a } => p.a = Some(a.clone()),
        Model::CpnXCpn { a, kappa } => {
            p.a = Some(a.clone());
            p.kappa = Some(*kappa);
        }
        Model::Custom(_) => {}
    }
    p
}

/// Output directory precedence: `--out`, then the environment, then the
/// config, then [`DEFAULT_OUT`].
pub fn output_dir(cli: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"scene": "local_nc", "bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"tolerances": {"slop": 1}}"#).is_err());
    }

    #[test]
    fn empty_ladder_names_the_key() {
        let c = RunConfig::from_json(r#"{"eps_ladder": []}"#).unwrap();
        let e = c.resolve(Command::Ladder, None).unwrap_err();
        assert!(e.to_string().contains("eps_ladder"), "{e}");
    }

    #[test]
    fn defaults_are_materialized() {
        let c = RunConfig::from_json(r#"{"scene": "cpn_x_cpn", "n": 2}"#)
            .unwrap()
            .resolve(Command::Crit, Some(7))
            .unwrap();
        assert_eq!(c.eps, Some(0.05));
        assert_eq!(c.seed, 7);
        assert_eq!(c.params.a, Some(vec![1.1, 1.2]));
        assert_eq!(c.params.kappa, Some(0.0));
        // resolving twice is a fixed point
        let again = RunConfig::from_json(&serde_json::to_string(&c).unwrap())
            .unwrap()
            .resolve(Command::Crit, None)
            .unwrap();
        assert_eq!(again, c);
    }
}
