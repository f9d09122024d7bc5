//! Time-varying reference sample clouds transported by a velocity field.
//!
//! The reference density is a cloud of weighted point masses. Each sample
//! moves one forward-Euler step per tick, `q(k+1) = q(k) + dt * v(q(k), k)`,
//! and is clamped to the operating domain. Weights are never touched by
//! advection; coverage bookkeeping lives in the swarm layer.

use nalgebra::Vector2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{seeded_stream, Stream};

/// Weighted reference samples. `beta[j]` is the remaining (uncovered) weight
/// of sample `j`; a fresh cloud carries `1/n` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    pub positions: Vec<Vector2<f64>>,
    pub beta: Vec<f64>,
}

impl SampleCloud {
    pub fn new(positions: Vec<Vector2<f64>>) -> Self {
        let n = positions.len();
        assert!(n >= 1, "a sample cloud needs at least one sample");
        Self {
            positions,
            beta: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn centroid(&self) -> Vector2<f64> {
        let sum: Vector2<f64> = self.positions.iter().sum();
        sum / self.positions.len() as f64
    }
}

/// Isotropic Gaussian cloud, deterministic in the seed. Draws two standard
/// normals per sample (x then y) from the cloud stream.
pub fn gaussian_cloud(seed: u64, n: usize, mean: Vector2<f64>, sigma: f64) -> SampleCloud {
    assert!(n >= 1);
    assert!(sigma >= 0.0);
    let mut rng: ChaCha8Rng = seeded_stream(seed, Stream::Cloud);
    let positions = (0..n)
        .map(|_| {
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            mean + sigma * Vector2::new(zx, zy)
        })
        .collect();
    SampleCloud::new(positions)
}

/// Axis-aligned operating domain; samples leaving it are projected back to
/// the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl DomainBox {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        assert!(min[0] < max[0] && min[1] < max[1], "degenerate domain box");
        Self { min, max }
    }

    pub fn clamp(&self, p: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            p.x.clamp(self.min[0], self.max[0]),
            p.y.clamp(self.min[1], self.max[1]),
        )
    }

    pub fn contains(&self, p: Vector2<f64>) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }
}

/// Velocity field driving the reference flow.
///
/// `WaypointDrift` translates the whole cloud toward the active waypoint at
/// constant speed by default (`rigid`); with `rigid = false` each sample
/// steers toward the waypoint individually.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityField {
    Constant {
        velocity: Vector2<f64>,
    },
    Vortex {
        center: Vector2<f64>,
        gain: f64,
    },
    WaypointDrift {
        waypoints: Vec<Vector2<f64>>,
        speed: f64,
        switch_radius: f64,
        rigid: bool,
    },
}

/// Flow bookkeeping the field itself cannot carry: the cloud centroid and the
/// index of the active waypoint. Inert for constant and vortex fields.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowCtx {
    pub centroid: Vector2<f64>,
    pub waypoint: usize,
}

impl VelocityField {
    /// Velocity at `x` on step `k`. Deterministic: identical arguments give
    /// identical vectors.
    pub fn velocity_at(&self, x: Vector2<f64>, _k: usize, ctx: &FlowCtx) -> Vector2<f64> {
        match self {
            VelocityField::Constant { velocity } => *velocity,
            VelocityField::Vortex { center, gain } => {
                let rel = x - center;
                *gain * Vector2::new(-rel.y, rel.x)
            }
            VelocityField::WaypointDrift {
                waypoints,
                speed,
                rigid,
                ..
            } => {
                let target = waypoints[ctx.waypoint % waypoints.len()];
                let from = if *rigid { ctx.centroid } else { x };
                let dir = target - from;
                let dist = dir.norm();
                if dist < 1e-12 {
                    Vector2::zeros()
                } else {
                    *speed * dir / dist
                }
            }
        }
    }

    /// Next active waypoint after the centroid moved; loops through the list.
    fn advance_waypoint(&self, centroid: Vector2<f64>, current: usize) -> usize {
        match self {
            VelocityField::WaypointDrift {
                waypoints,
                switch_radius,
                ..
            } => {
                let target = waypoints[current % waypoints.len()];
                if (target - centroid).norm() <= *switch_radius {
                    (current + 1) % waypoints.len()
                } else {
                    current
                }
            }
            _ => current,
        }
    }
}

/// One Lagrangian step for every sample, then domain clamping. Weights are
/// untouched. Returns the advanced cloud and the updated flow context.
pub fn advance_samples(
    cloud: &SampleCloud,
    field: &VelocityField,
    ctx: &FlowCtx,
    dt: f64,
    k: usize,
    domain: &DomainBox,
) -> (SampleCloud, FlowCtx) {
    assert!(dt > 0.0);
    let positions: Vec<Vector2<f64>> = cloud
        .positions
        .iter()
        .map(|&q| domain.clamp(q + dt * field.velocity_at(q, k, ctx)))
        .collect();
    let advanced = SampleCloud {
        positions,
        beta: cloud.beta.clone(),
    };
    let centroid = advanced.centroid();
    let next = FlowCtx {
        centroid,
        waypoint: field.advance_waypoint(centroid, ctx.waypoint),
    };
    (advanced, next)
}

/// A reference cloud bound to its field, domain, and flow state; the single
/// mutable copy owned by a simulation loop.
#[derive(Debug, Clone)]
pub struct Plume {
    pub cloud: SampleCloud,
    pub field: VelocityField,
    pub domain: DomainBox,
    ctx: FlowCtx,
    step: usize,
}

impl Plume {
    pub fn new(mut cloud: SampleCloud, field: VelocityField, domain: DomainBox) -> Self {
        for q in &mut cloud.positions {
            *q = domain.clamp(*q);
        }
        let ctx = FlowCtx {
            centroid: cloud.centroid(),
            waypoint: 0,
        };
        Self {
            cloud,
            field,
            domain,
            ctx,
            step: 0,
        }
    }

    pub fn ctx(&self) -> &FlowCtx {
        &self.ctx
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Velocity the flow will apply to a point right now.
    pub fn velocity_at(&self, x: Vector2<f64>) -> Vector2<f64> {
        self.field.velocity_at(x, self.step, &self.ctx)
    }

    pub fn advance(&mut self, dt: f64) {
        let (cloud, ctx) =
            advance_samples(&self.cloud, &self.field, &self.ctx, dt, self.step, &self.domain);
        self.cloud = cloud;
        self.ctx = ctx;
        self.step += 1;
    }
}
