//! Scenario configuration: a single JSON document with top-level sections
//! `agents`, `plume`, `controller`, `horizon`, `weights`, and `output`.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reference::{DomainBox, VelocityField};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("failed to parse configuration: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerMode {
    Nominal,
    Ff,
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub steps: usize,
    pub agents: AgentsConfig,
    pub plume: PlumeConfig,
    pub controller: ControllerConfig,
    pub horizon: HorizonConfig,
    pub weights: WeightConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    pub count: usize,
    /// Sampling interval, seconds.
    pub dt: f64,
    /// Gravitational acceleration, m/s^2.
    pub gravity: f64,
    /// Attitude time constant, seconds.
    pub tau: f64,
    /// Communication range for min-consensus, meters.
    pub comm_range: f64,
    /// Samples each agent assigns itself per step.
    pub k_nearest: usize,
    /// Selection radius, meters.
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlumeConfig {
    pub samples: usize,
    pub mean: [f64; 2],
    pub sigma: f64,
    /// Operating domain `[x_min, y_min, x_max, y_max]`, meters.
    pub domain: [f64; 4],
    pub field: FieldConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldConfig {
    Constant {
        velocity: [f64; 2],
    },
    Vortex {
        center: [f64; 2],
        /// Angular gain, 1/s.
        gain: f64,
    },
    Waypoints {
        points: Vec<[f64; 2]>,
        /// Drift speed, m/s.
        speed: f64,
        /// Centroid distance at which the next waypoint activates, meters.
        #[serde(default = "default_switch_radius")]
        switch_radius: f64,
        /// Translate the cloud rigidly (default) or steer each sample
        /// toward the waypoint individually.
        #[serde(default = "default_rigid")]
        rigid: bool,
    },
}

fn default_switch_radius() -> f64 {
    1.0
}

fn default_rigid() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: ControllerMode,
    /// Input penalty scale; the penalty matrix is `r_scale * I`.
    pub r_scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    pub length: usize,
    /// Re-plan every step and apply only the first input instead of playing
    /// out the whole sequence.
    #[serde(default)]
    pub receding: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    /// Coverage decay rate per step, in [0, 1].
    pub gamma: f64,
    /// Coverage kernel radius, meters.
    pub sigma_c: f64,
    /// Weights at or below this threshold count as exhausted.
    pub beta_min: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Emit a world snapshot every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
}

impl ScenarioConfig {
    pub fn from_json_str(json: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = serde_json::from_str(json)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.agents.count == 0 {
            return fail("agents.count must be at least 1");
        }
        for (name, v) in [
            ("agents.dt", self.agents.dt),
            ("agents.gravity", self.agents.gravity),
            ("agents.tau", self.agents.tau),
            ("agents.radius", self.agents.radius),
            ("controller.r_scale", self.controller.r_scale),
            ("weights.sigma_c", self.weights.sigma_c),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return fail(&format!("{name} must be positive and finite"));
            }
        }
        if self.agents.comm_range < 0.0 {
            return fail("agents.comm_range must be non-negative");
        }
        if self.agents.k_nearest == 0 {
            return fail("agents.k_nearest must be at least 1");
        }
        if self.plume.samples == 0 {
            return fail("plume.samples must be at least 1");
        }
        if self.plume.sigma < 0.0 {
            return fail("plume.sigma must be non-negative");
        }
        let [x0, y0, x1, y1] = self.plume.domain;
        if x0 >= x1 || y0 >= y1 {
            return fail("plume.domain must satisfy x_min < x_max and y_min < y_max");
        }
        match &self.plume.field {
            FieldConfig::Waypoints {
                points,
                speed,
                switch_radius,
                ..
            } => {
                if points.is_empty() {
                    return fail("plume.field.points must not be empty");
                }
                if *speed < 0.0 {
                    return fail("plume.field.speed must be non-negative");
                }
                if *switch_radius <= 0.0 {
                    return fail("plume.field.switch_radius must be positive");
                }
            }
            FieldConfig::Vortex { gain, .. } => {
                if !gain.is_finite() {
                    return fail("plume.field.gain must be finite");
                }
            }
            FieldConfig::Constant { velocity } => {
                if velocity.iter().any(|v| !v.is_finite()) {
                    return fail("plume.field.velocity must be finite");
                }
            }
        }
        if self.horizon.length == 0 {
            return fail("horizon.length must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.weights.gamma) {
            return fail("weights.gamma must lie in [0, 1]");
        }
        if self.weights.beta_min < 0.0 {
            return fail("weights.beta_min must be non-negative");
        }
        Ok(())
    }

    pub fn domain(&self) -> DomainBox {
        let [x0, y0, x1, y1] = self.plume.domain;
        DomainBox::new([x0, y0], [x1, y1])
    }

    pub fn velocity_field(&self) -> VelocityField {
        match &self.plume.field {
            FieldConfig::Constant { velocity } => VelocityField::Constant {
                velocity: Vector2::new(velocity[0], velocity[1]),
            },
            FieldConfig::Vortex { center, gain } => VelocityField::Vortex {
                center: Vector2::new(center[0], center[1]),
                gain: *gain,
            },
            FieldConfig::Waypoints {
                points,
                speed,
                switch_radius,
                rigid,
            } => VelocityField::WaypointDrift {
                waypoints: points.iter().map(|p| Vector2::new(p[0], p[1])).collect(),
                speed: *speed,
                switch_radius: *switch_radius,
                rigid: *rigid,
            },
        }
    }

    /// The simulation study shipped with the crate: 3 quadcopter agents
    /// chasing a 200-sample plume across a 100 x 100 m domain for 1000
    /// steps, both controllers side by side.
    pub fn paper_scenario() -> Self {
        Self {
            seed: 42,
            steps: 1000,
            agents: AgentsConfig {
                count: 3,
                dt: 0.2,
                gravity: 9.81,
                tau: 0.4,
                comm_range: 25.0,
                k_nearest: 6,
                radius: 30.0,
            },
            plume: PlumeConfig {
                samples: 200,
                mean: [20.0, 20.0],
                sigma: 4.0,
                domain: [0.0, 0.0, 100.0, 100.0],
                field: FieldConfig::Waypoints {
                    points: vec![[80.0, 20.0], [80.0, 80.0], [20.0, 80.0], [20.0, 20.0]],
                    speed: 1.0,
                    switch_radius: 1.0,
                    rigid: true,
                },
            },
            controller: ControllerConfig {
                mode: ControllerMode::Both,
                r_scale: 1e-6,
            },
            horizon: HorizonConfig {
                length: 15,
                receding: false,
            },
            weights: WeightConfig {
                gamma: 0.005,
                sigma_c: 5.0,
                beta_min: 1e-4,
            },
            output: OutputConfig { snapshot_every: 100 },
        }
    }
}
