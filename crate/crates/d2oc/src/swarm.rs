//! Multi-agent simulation: per-agent horizon planning, coverage weight
//! decay, and range-limited min-consensus, optionally running the nominal
//! and feedforward controllers side by side on one shared reference flow.
//!
//! Step order: the plume advances first, then every agent plans (when its
//! input queue is empty, or every step in receding mode), applies one
//! input, measures its local Wasserstein distance against a fresh
//! assignment, and decays the weights it covers; finally all agent pairs
//! within communication range merge weight maps to a fixpoint. In `both`
//! mode the two populations never interact: separate weight maps, one
//! cloud.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use thiserror::Error;

use crate::analysis::{
    ramp_norm_factor, ultimate_bound, verify_bound, BoundInputs, BoundReport,
    DEFAULT_SETTLE_FRACTION,
};
use crate::config::{ControllerMode, ScenarioConfig};
use crate::control::{
    assemble_qp, build_omega, error_decomposition, predict_drift, solve_feedforward,
    solve_nominal, ControlError, HorizonReference,
};
use crate::dynamics::{build_lifted, make_quadcopter_model, DynamicsError, LiftedSystem, LtiModel};
use crate::metrics::{AgentPosition, ControllerKind, MetricsLog, Snapshot, StepRecord};
use crate::reference::{gaussian_cloud, Plume, VelocityField};
use crate::rng::{seeded_stream, Stream};
use crate::transport::{
    barycenter_and_variance, local_wasserstein, select_local, transport_weights, SelectionParams,
    TransportError,
};

#[derive(Debug, Error)]
pub enum SwarmError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("weight maps have different lengths: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
}

/// Decays the weight of every sample the agent currently covers:
/// `beta_j *= 1 - gamma * exp(-||y - q_j||^2 / (2 sigma_c^2))`, floored at
/// zero.
pub fn update_weights(
    weight_map: &mut [f64],
    y: Vector2<f64>,
    positions: &[Vector2<f64>],
    gamma: f64,
    sigma_c: f64,
) {
    assert!((0.0..=1.0).contains(&gamma));
    assert!(sigma_c > 0.0);
    let denom = 2.0 * sigma_c * sigma_c;
    for (beta, q) in weight_map.iter_mut().zip(positions) {
        let kernel = (-(y - q).norm_squared() / denom).exp();
        *beta = (*beta * (1.0 - gamma * kernel)).max(0.0);
    }
}

/// Pairwise min-consensus: both maps adopt the elementwise minimum.
/// Returns whether anything changed.
pub fn consensus_merge(a: &mut [f64], b: &mut [f64]) -> Result<bool, SwarmError> {
    if a.len() != b.len() {
        return Err(SwarmError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let mut changed = false;
    for (wa, wb) in a.iter_mut().zip(b.iter_mut()) {
        let min = wa.min(*wb);
        changed |= *wa != min || *wb != min;
        *wa = min;
        *wb = min;
    }
    Ok(changed)
}

/// One simulated vehicle: private state, private coverage map, and the
/// input queue left over from its last plan.
#[derive(Debug, Clone)]
pub struct Agent {
    pub id: usize,
    pub state: DVector<f64>,
    pub weight_map: Vec<f64>,
    plan: VecDeque<DVector<f64>>,
}

/// Running suprema feeding the ultimate-bound estimate for one agent.
#[derive(Debug, Clone, Default)]
struct BoundTracker {
    prev: Option<(Vector2<f64>, Vector2<f64>)>,
    max_surprise: f64,
    max_drift: f64,
    max_variance: f64,
    lambda: Option<f64>,
    p_norm: Option<f64>,
}

impl BoundTracker {
    fn observe(&mut self, qbar: Vector2<f64>, drift: Vector2<f64>, variance: f64) {
        if let Some((prev_qbar, prev_drift)) = self.prev {
            self.max_surprise = self.max_surprise.max(((qbar - prev_qbar) - prev_drift).norm());
        }
        self.max_drift = self.max_drift.max(drift.norm());
        self.max_variance = self.max_variance.max(variance);
        self.prev = Some((qbar, drift));
    }

    fn inputs(&self, horizon: usize) -> Option<BoundInputs> {
        Some(BoundInputs {
            lambda: self.lambda?,
            p_norm: self.p_norm?,
            zeta: (horizon as f64).sqrt() * self.max_surprise,
            delta: ramp_norm_factor(horizon) * self.max_drift,
            c_bar: self.max_variance,
        })
    }

    fn bound_estimate(&self, horizon: usize) -> Option<f64> {
        ultimate_bound(&self.inputs(horizon)?).ok()
    }
}

/// A controller population: agents and their bound trackers.
#[derive(Debug)]
pub struct Population {
    pub kind: ControllerKind,
    pub agents: Vec<Agent>,
    trackers: Vec<BoundTracker>,
}

#[derive(Debug)]
pub enum StepOutcome {
    Records(Vec<StepRecord>),
    /// Every sample weight fell to the live threshold: coverage complete.
    Completed,
}

pub struct Simulation {
    pub config: ScenarioConfig,
    pub model: LtiModel,
    pub lifted: LiftedSystem,
    pub plume: Plume,
    pub populations: Vec<Population>,
    r_penalty: DMatrix<f64>,
    step_index: usize,
    completed: bool,
}

fn planar_output(model: &LtiModel, state: &DVector<f64>) -> Vector2<f64> {
    let y = model.output(state);
    Vector2::new(y[0], y[1])
}

impl Simulation {
    pub fn new(config: &ScenarioConfig) -> Result<Self, SwarmError> {
        config.validate()?;
        let model = make_quadcopter_model(
            config.agents.dt,
            config.agents.gravity,
            config.agents.tau,
        )?;
        let lifted = build_lifted(&model, config.horizon.length)?;
        let mh = model.input_dim() * config.horizon.length;
        let r_penalty = DMatrix::identity(mh, mh) * config.controller.r_scale;

        let cloud = gaussian_cloud(
            config.seed,
            config.plume.samples,
            Vector2::new(config.plume.mean[0], config.plume.mean[1]),
            config.plume.sigma,
        );
        let plume = Plume::new(cloud, config.velocity_field(), config.domain());

        // Both populations start from the same drawn states so the
        // controllers are compared like for like.
        let domain = config.domain();
        let mut rng = seeded_stream(config.seed, Stream::Agents);
        let n_samples = config.plume.samples;
        let agents: Vec<Agent> = (0..config.agents.count)
            .map(|id| {
                let px = rng.random_range(domain.min[0]..domain.max[0]);
                let py = rng.random_range(domain.min[1]..domain.max[1]);
                let mut state = DVector::zeros(model.state_dim());
                state[0] = px;
                state[4] = py;
                Agent {
                    id,
                    state,
                    weight_map: vec![1.0 / n_samples as f64; n_samples],
                    plan: VecDeque::new(),
                }
            })
            .collect();

        let kinds: &[ControllerKind] = match config.controller.mode {
            ControllerMode::Nominal => &[ControllerKind::Nominal],
            ControllerMode::Ff => &[ControllerKind::Feedforward],
            ControllerMode::Both => &[ControllerKind::Nominal, ControllerKind::Feedforward],
        };
        let populations = kinds
            .iter()
            .map(|&kind| Population {
                kind,
                agents: agents.clone(),
                trackers: vec![BoundTracker::default(); agents.len()],
            })
            .collect();

        Ok(Self {
            config: config.clone(),
            model,
            lifted,
            plume,
            populations,
            r_penalty,
            step_index: 0,
            completed: false,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn completed(&self) -> bool {
        self.completed
    }

    /// World snapshot of the current state (before the next step runs).
    pub fn snapshot(&self) -> Snapshot {
        let beta = self
            .populations
            .iter()
            .map(|pop| {
                let mut min_map = pop.agents[0].weight_map.clone();
                for agent in &pop.agents[1..] {
                    for (m, &w) in min_map.iter_mut().zip(&agent.weight_map) {
                        *m = m.min(w);
                    }
                }
                (pop.kind, min_map)
            })
            .collect();
        let agents = self
            .populations
            .iter()
            .flat_map(|pop| {
                pop.agents.iter().map(move |a| AgentPosition {
                    agent: a.id,
                    controller: pop.kind,
                    position: planar_output(&self.model, &a.state),
                })
            })
            .collect();
        Snapshot {
            step: self.step_index,
            samples: self.plume.cloud.positions.clone(),
            beta,
            agents,
        }
    }

    /// Runs one full step. Returns `Completed` (discarding the partial
    /// step) once every sample is exhausted for some agent.
    pub fn step(&mut self) -> Result<StepOutcome, SwarmError> {
        if self.completed {
            return Ok(StepOutcome::Completed);
        }
        let k = self.step_index;
        let dt = self.config.agents.dt;
        let horizon = self.config.horizon.length;
        let receding = self.config.horizon.receding;
        let params = SelectionParams {
            k_nearest: self.config.agents.k_nearest,
            radius: self.config.agents.radius,
            beta_min: self.config.weights.beta_min,
        };

        self.plume.advance(dt);
        let positions = &self.plume.cloud.positions;
        let field: &VelocityField = &self.plume.field;
        let ctx = *self.plume.ctx();
        let flow_step = self.plume.step_index();

        let mut records = Vec::new();
        for pop in &mut self.populations {
            for (agent, tracker) in pop.agents.iter_mut().zip(&mut pop.trackers) {
                let mut plan_report = None;
                if agent.plan.is_empty() || receding {
                    let y = planar_output(&self.model, &agent.state);
                    let selected =
                        match select_local(positions, &agent.weight_map, y, &params) {
                            Ok(ids) => ids,
                            Err(TransportError::NoLiveSamples { .. }) => {
                                self.completed = true;
                                return Ok(StepOutcome::Completed);
                            }
                            Err(e) => return Err(e.into()),
                        };
                    let assignment = transport_weights(selected, &agent.weight_map)?;
                    let (qbar, _) = barycenter_and_variance(&assignment, positions);
                    let drift =
                        predict_drift(&assignment, positions, field, &ctx, flow_step, dt);
                    let qbar_block = DVector::from_column_slice(qbar.as_slice());
                    let drift_block = DVector::from_column_slice(drift.as_slice());
                    let omega = build_omega(&vec![assignment.pi_sum(); horizon], 2);
                    let reference = match pop.kind {
                        ControllerKind::Nominal => HorizonReference::nominal(&qbar_block, horizon),
                        ControllerKind::Feedforward => {
                            HorizonReference::feedforward(&qbar_block, &drift_block, horizon)
                        }
                    };
                    let qp =
                        assemble_qp(&self.lifted, &omega, &agent.state, &reference, &self.r_penalty)?;
                    let u_seq = match pop.kind {
                        ControllerKind::Nominal => solve_nominal(&qp),
                        ControllerKind::Feedforward => {
                            solve_feedforward(&qp, &self.lifted, &reference.drift_stack)?
                        }
                    };
                    // The lag decomposition always evaluates the feedforward
                    // law against the predicted drift, whatever input the
                    // agent actually applies.
                    let ff_reference =
                        HorizonReference::feedforward(&qbar_block, &drift_block, horizon);
                    let report = error_decomposition(
                        &self.lifted,
                        &omega,
                        &agent.state,
                        &ff_reference.qbar_stack,
                        &ff_reference.drift_stack,
                        &self.r_penalty,
                    )?;
                    tracker.lambda = Some(report.lambda);
                    tracker.p_norm = Some(report.p_norm);

                    let m = self.model.input_dim();
                    let applied = if receding { 1 } else { horizon };
                    agent.plan.clear();
                    for h in 0..applied {
                        agent.plan.push_back(u_seq.rows(h * m, m).into_owned());
                    }
                    plan_report = Some(report);
                }

                let input = agent.plan.pop_front().expect("plan was just refilled");
                agent.state = self.model.step(&agent.state, &input);
                let y_new = planar_output(&self.model, &agent.state);

                // Fresh assignment for the per-step metrics.
                let selected = match select_local(positions, &agent.weight_map, y_new, &params) {
                    Ok(ids) => ids,
                    Err(TransportError::NoLiveSamples { .. }) => {
                        self.completed = true;
                        return Ok(StepOutcome::Completed);
                    }
                    Err(e) => return Err(e.into()),
                };
                let assignment = transport_weights(selected, &agent.weight_map)?;
                let (qbar, variance) = barycenter_and_variance(&assignment, positions);
                let wasserstein = local_wasserstein(y_new, &assignment, positions);
                let drift = predict_drift(&assignment, positions, field, &ctx, flow_step, dt);

                update_weights(
                    &mut agent.weight_map,
                    y_new,
                    positions,
                    self.config.weights.gamma,
                    self.config.weights.sigma_c,
                );

                tracker.observe(qbar, drift, variance);
                records.push(StepRecord {
                    step: k,
                    agent: agent.id,
                    controller: pop.kind,
                    wasserstein,
                    e_w_norm: plan_report.as_ref().map(|r| r.e_w.norm()),
                    e0_norm: plan_report.as_ref().map(|r| r.e0_total.norm()),
                    ratio: plan_report.as_ref().and_then(|r| r.ratio),
                    lambda: tracker.lambda,
                    p_norm: tracker.p_norm,
                    bound_estimate: tracker.bound_estimate(horizon),
                    qbar,
                    drift,
                    variance,
                    n_selected: assignment.len(),
                    planned: plan_report.is_some(),
                });
            }
        }

        // Synchronous min-consensus for every in-range pair, iterated to a
        // fixpoint (at most one sweep per extra agent).
        let comm_range = self.config.agents.comm_range;
        for pop in &mut self.populations {
            let n = pop.agents.len();
            for _ in 0..n.saturating_sub(1) {
                let mut changed = false;
                for i in 0..n {
                    for j in (i + 1)..n {
                        let yi = planar_output(&self.model, &pop.agents[i].state);
                        let yj = planar_output(&self.model, &pop.agents[j].state);
                        if (yi - yj).norm() <= comm_range {
                            let (left, right) = pop.agents.split_at_mut(j);
                            changed |= consensus_merge(
                                &mut left[i].weight_map,
                                &mut right[0].weight_map,
                            )?;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
        }

        self.step_index += 1;
        Ok(StepOutcome::Records(records))
    }

    /// Final bound verdicts per agent and controller, judged against the
    /// recorded Wasserstein series.
    pub fn bound_reports(&self, log: &MetricsLog) -> Vec<BoundReport> {
        let horizon = self.config.horizon.length;
        let mut reports = Vec::new();
        for pop in &self.populations {
            for (agent, tracker) in pop.agents.iter().zip(&pop.trackers) {
                let Some(inputs) = tracker.inputs(horizon) else {
                    continue;
                };
                let w_series: Vec<f64> = log
                    .series(agent.id, pop.kind)
                    .iter()
                    .map(|r| r.wasserstein)
                    .collect();
                if w_series.is_empty() {
                    continue;
                }
                let (bound, pass, entry_step) = match ultimate_bound(&inputs) {
                    Ok(bound) => {
                        let check = verify_bound(&w_series, bound, DEFAULT_SETTLE_FRACTION);
                        (Some(bound), check.pass, check.entry_step)
                    }
                    Err(_) => (None, false, None),
                };
                reports.push(BoundReport {
                    agent: agent.id,
                    controller: pop.kind.label().to_string(),
                    lambda: inputs.lambda,
                    p_norm: inputs.p_norm,
                    zeta: inputs.zeta,
                    delta: inputs.delta,
                    c_bar: inputs.c_bar,
                    bound,
                    pass,
                    entry_step,
                });
            }
        }
        reports
    }
}

/// Everything a completed run produced.
#[derive(Debug)]
pub struct SimOutput {
    pub metrics: MetricsLog,
    pub snapshots: Vec<Snapshot>,
    pub bound_reports: Vec<BoundReport>,
    /// Step at which coverage completed early, if it did.
    pub completed_early: Option<usize>,
}

/// Runs the configured scenario to the end (or to coverage completion).
/// Deterministic: identical configurations give identical outputs.
pub fn run_simulation(config: &ScenarioConfig) -> Result<SimOutput, SwarmError> {
    let mut sim = Simulation::new(config)?;
    let mut metrics = MetricsLog::default();
    let mut snapshots = Vec::new();
    let mut completed_early = None;
    let every = config.output.snapshot_every;
    for k in 0..config.steps {
        if every > 0 && k % every == 0 {
            snapshots.push(sim.snapshot());
        }
        match sim.step()? {
            StepOutcome::Records(records) => metrics.records.extend(records),
            StepOutcome::Completed => {
                completed_early = Some(k);
                break;
            }
        }
    }
    let bound_reports = sim.bound_reports(&metrics);
    Ok(SimOutput {
        metrics,
        snapshots,
        bound_reports,
        completed_early,
    })
}
