//! Per-step run records and their CSV renderings.
//!
//! The metrics CSV is the determinism surface of a run: identical
//! configurations must produce byte-identical files. Floats are rendered
//! with Rust's shortest round-trip formatting, undefined quantities as
//! empty cells.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "nominal")]
    Nominal,
    #[serde(rename = "ff")]
    Feedforward,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Nominal => "nominal",
            ControllerKind::Feedforward => "ff",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One agent's record for one step. The optional fields are defined only on
/// planning steps (every step in receding mode, every H-th otherwise);
/// `bound_estimate` is the running ultimate-bound estimate from the
/// disturbance suprema observed so far.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub agent: usize,
    pub controller: ControllerKind,
    pub wasserstein: f64,
    pub e_w_norm: Option<f64>,
    pub e0_norm: Option<f64>,
    pub ratio: Option<f64>,
    pub lambda: Option<f64>,
    pub p_norm: Option<f64>,
    pub bound_estimate: Option<f64>,
    // Internal trajectory fields consumed by the analysis layer; not part
    // of the CSV schema.
    pub qbar: Vector2<f64>,
    pub drift: Vector2<f64>,
    pub variance: f64,
    pub n_selected: usize,
    pub planned: bool,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsLog {
    pub records: Vec<StepRecord>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsLog {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Records of one agent under one controller, in step order.
    pub fn series(&self, agent: usize, controller: ControllerKind) -> Vec<&StepRecord> {
        self.records
            .iter()
            .filter(|r| r.agent == agent && r.controller == controller)
            .collect()
    }

    /// All defined error-norm ratios of one controller, pooled over agents.
    pub fn defined_ratios(&self, controller: ControllerKind) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.controller == controller)
            .filter_map(|r| r.ratio)
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "step,agent,controller,wasserstein,e_w_norm,e0_norm,ratio,lambda,p_norm,bound_estimate\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.step,
                r.agent,
                r.controller,
                r.wasserstein,
                opt_cell(r.e_w_norm),
                opt_cell(r.e0_norm),
                opt_cell(r.ratio),
                opt_cell(r.lambda),
                opt_cell(r.p_norm),
                opt_cell(r.bound_estimate),
            ));
        }
        out
    }
}

/// World state captured every `snapshot_every` steps: sample positions with
/// each population's consensus view of the remaining weights, plus agent
/// positions.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub samples: Vec<Vector2<f64>>,
    /// Elementwise-minimum weight map across each population's agents.
    pub beta: Vec<(ControllerKind, Vec<f64>)>,
    pub agents: Vec<AgentPosition>,
}

#[derive(Debug, Clone, Copy)]
pub struct AgentPosition {
    pub agent: usize,
    pub controller: ControllerKind,
    pub position: Vector2<f64>,
}

impl Snapshot {
    /// Sample CSV (`j,x,y,beta`) for one population's weight view.
    pub fn samples_csv(&self, controller: ControllerKind) -> Option<String> {
        let beta = &self.beta.iter().find(|(c, _)| *c == controller)?.1;
        let mut out = String::from("j,x,y,beta\n");
        for (j, (q, b)) in self.samples.iter().zip(beta).enumerate() {
            out.push_str(&format!("{},{},{},{}\n", j, q.x, q.y, b));
        }
        Some(out)
    }

    pub fn agents_csv(&self) -> String {
        let mut out = String::from("agent,controller,x,y\n");
        for a in &self.agents {
            out.push_str(&format!(
                "{},{},{},{}\n",
                a.agent, a.controller, a.position.x, a.position.y
            ));
        }
        out
    }
}
