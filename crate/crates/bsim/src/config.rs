//! Run configuration: the JSON file a user writes from tape-measure values.

use std::path::{Path, PathBuf};

use bsim_core::anatomy::{Anthropometry, StageId};
use bsim_core::energy::{EnergySpec, STANDARD_GRAVITY};
use bsim_core::pipeline::{CalibrationProblem, Parameter, Simulation, StageSettings};
use bsim_core::solver::SolverParams;
use bsim_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Material coefficients. Gravity direction and support belong to stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyBlock {
    pub sigma: f64,
    pub willmore: f64,
    pub compressibility: f64,
    pub rho: f64,
    pub g: f64,
    /// Unloaded content volume of the volume penalty; the anthropometric
    /// rest volume when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rest_volume: Option<f64>,
}

impl Default for EnergyBlock {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            willmore: 0.0,
            compressibility: 0.0,
            rho: 1.0,
            g: STANDARD_GRAVITY,
            rest_volume: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerSpec {
    pub label: String,
    /// Initial position; the marker attaches to the nearest surface point.
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub anthropometry: Anthropometry,
    #[serde(default)]
    pub energy: EnergyBlock,
    #[serde(default)]
    pub solver: SolverParams,
    /// Longest edge of the initial mesh, cm.
    #[serde(default = "default_edge")]
    pub edge_target: f64,
    /// Table distance from the base centre in LAT, cm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_table: Option<f64>,
    #[serde(default = "default_stages")]
    pub stages: Vec<StageSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationProblem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub markers: Vec<MarkerSpec>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_edge() -> f64 {
    1.5
}

fn default_stages() -> Vec<StageSettings> {
    StageId::ALL.iter().map(|&s| StageSettings::new(s)).collect()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Parses and validates a config. Schema errors carry the JSON path of the
/// offending value.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.inner()))
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: bsim_core::Error| CliError::Config(e.to_string());
        self.simulation().validate().map_err(invalid)?;
        if let Some(problem) = &self.calibration {
            problem.validate().map_err(invalid)?;
        }
        Ok(())
    }

    pub fn simulation(&self) -> Simulation {
        let e = &self.energy;
        let spec = EnergySpec {
            sigma: e.sigma,
            willmore: e.willmore,
            compressibility: e.compressibility,
            rho: e.rho,
            g: e.g,
            ..EnergySpec::default()
        };
        let mut sim = Simulation::new(self.anthropometry.clone(), spec, self.solver.clone(), self.edge_target);
        if let Some(v) = e.rest_volume {
            sim.spec.rest_volume = v;
        }
        sim.stages = self.stages.clone();
        sim.d_table = self.d_table;
        sim.markers = self.markers.iter().map(|m| (m.label.clone(), m.position)).collect();
        sim
    }

    /// Copies calibrated values back into the config blocks they came from.
    pub fn absorb(&mut self, sim: &Simulation, free: &[Parameter]) {
        for p in free {
            match p {
                Parameter::Sigma => self.energy.sigma = sim.spec.sigma,
                Parameter::Willmore => self.energy.willmore = sim.spec.willmore,
                Parameter::Compressibility => self.energy.compressibility = sim.spec.compressibility,
                Parameter::RestVolume => self.energy.rest_volume = Some(sim.spec.rest_volume),
                Parameter::DTable => self.d_table = sim.d_table,
                Parameter::SupportSrg => self.stages = sim.stages.clone(),
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
