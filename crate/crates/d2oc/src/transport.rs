//! Local sample selection, transport weights, barycenters, and an exact
//! small-instance optimal-transport solver used as a test oracle.
//!
//! Agents never solve a global transport problem: each one picks a handful
//! of nearby live samples, normalizes their remaining weights into transport
//! weights, and tracks the weighted barycenter. `exact_ot_small` solves the
//! full 2-Wasserstein problem on tiny instances by enumerating vertex plans
//! and exists to validate that machinery, not to run inside the loop.

use nalgebra::{DMatrix, Vector2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("every sample weight is at or below the live threshold {beta_min}")]
    NoLiveSamples { beta_min: f64 },
    #[error("selected weights sum to zero")]
    DegenerateWeights,
    #[error("marginal masses differ: {mass_a} vs {mass_b}")]
    InfeasibleMarginals { mass_a: f64, mass_b: f64 },
}

/// Samples assigned to one agent with normalized transport weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAssignment {
    pub indices: Vec<usize>,
    pub pi: Vec<f64>,
}

impl LocalAssignment {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Sum of transport weights; 1 by construction.
    pub fn pi_sum(&self) -> f64 {
        self.pi.iter().sum()
    }
}

/// Parameters steering [`select_local`].
#[derive(Debug, Clone, Copy)]
pub struct SelectionParams {
    pub k_nearest: usize,
    pub radius: f64,
    pub beta_min: f64,
}

/// Picks up to `k_nearest` live samples (`beta > beta_min`) within `radius`
/// of `y`, nearest first; if none lie inside the radius, falls back to the
/// globally nearest live samples. Distance ties break on ascending sample id
/// so runs are reproducible.
pub fn select_local(
    positions: &[Vector2<f64>],
    beta: &[f64],
    y: Vector2<f64>,
    params: &SelectionParams,
) -> Result<Vec<usize>, TransportError> {
    assert!(params.k_nearest >= 1);
    assert_eq!(positions.len(), beta.len());
    let mut live: Vec<(f64, usize)> = positions
        .iter()
        .zip(beta)
        .enumerate()
        .filter(|(_, (_, &b))| b > params.beta_min)
        .map(|(j, (&q, _))| ((q - y).norm_squared(), j))
        .collect();
    if live.is_empty() {
        return Err(TransportError::NoLiveSamples {
            beta_min: params.beta_min,
        });
    }
    live.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let r2 = params.radius * params.radius;
    let in_radius: Vec<usize> = live
        .iter()
        .take_while(|(d2, _)| *d2 <= r2)
        .take(params.k_nearest)
        .map(|&(_, j)| j)
        .collect();
    if !in_radius.is_empty() {
        return Ok(in_radius);
    }
    Ok(live
        .iter()
        .take(params.k_nearest)
        .map(|&(_, j)| j)
        .collect())
}

/// Normalizes the remaining weights of the selected samples into transport
/// weights, `pi_j = beta_j / sum(beta)`.
pub fn transport_weights(
    indices: Vec<usize>,
    beta: &[f64],
) -> Result<LocalAssignment, TransportError> {
    assert!(!indices.is_empty());
    let total: f64 = indices.iter().map(|&j| beta[j]).sum();
    if total <= 0.0 {
        return Err(TransportError::DegenerateWeights);
    }
    let pi = indices.iter().map(|&j| beta[j] / total).collect();
    Ok(LocalAssignment { indices, pi })
}

/// Weighted barycenter and weighted variance (meters squared) of the
/// assigned samples.
pub fn barycenter_and_variance(
    assignment: &LocalAssignment,
    positions: &[Vector2<f64>],
) -> (Vector2<f64>, f64) {
    let pi_sum = assignment.pi_sum();
    let mut qbar = Vector2::zeros();
    for (&j, &pi) in assignment.indices.iter().zip(&assignment.pi) {
        qbar += pi * positions[j];
    }
    qbar /= pi_sum;
    let variance = assignment
        .indices
        .iter()
        .zip(&assignment.pi)
        .map(|(&j, &pi)| pi * (positions[j] - qbar).norm_squared())
        .sum();
    (qbar, variance)
}

/// Local Wasserstein distance of an agent at `y` to its assigned samples,
/// `sqrt(sum_j pi_j ||y - q_j||^2)`. Equals
/// `sqrt(||y - qbar||^2 + variance)` for normalized weights.
pub fn local_wasserstein(
    y: Vector2<f64>,
    assignment: &LocalAssignment,
    positions: &[Vector2<f64>],
) -> f64 {
    assignment
        .indices
        .iter()
        .zip(&assignment.pi)
        .map(|(&j, &pi)| pi * (y - positions[j]).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// An optimal transport plan between two discrete measures.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    /// `plan[(l, j)]` is the mass shipped from source `l` to target `j`.
    pub plan: DMatrix<f64>,
    /// Total squared-distance cost; the 2-Wasserstein distance is its root.
    pub cost: f64,
}

impl TransportPlan {
    pub fn wasserstein2(&self) -> f64 {
        self.cost.sqrt()
    }
}

const MAX_EXACT_POINTS: usize = 8;

/// Exact 2-Wasserstein plan between tiny discrete measures.
///
/// Enumerates every vertex of the transportation polytope via the northwest
/// corner rule with free row/column order (branch and bound on partial
/// cost), so the returned plan is a true global minimum. Exponential; both
/// sides are capped at 8 points. Test oracle only.
pub fn exact_ot_small(
    points_a: &[Vector2<f64>],
    mass_a: &[f64],
    points_b: &[Vector2<f64>],
    mass_b: &[f64],
) -> Result<TransportPlan, TransportError> {
    assert_eq!(points_a.len(), mass_a.len());
    assert_eq!(points_b.len(), mass_b.len());
    assert!(
        points_a.len() <= MAX_EXACT_POINTS && points_b.len() <= MAX_EXACT_POINTS,
        "exact_ot_small is exponential; instances are capped at {MAX_EXACT_POINTS} points per side"
    );
    let (m, n) = (points_a.len(), points_b.len());
    let sum_a: f64 = mass_a.iter().sum();
    let sum_b: f64 = mass_b.iter().sum();
    if (sum_a - sum_b).abs() > 1e-9 {
        return Err(TransportError::InfeasibleMarginals {
            mass_a: sum_a,
            mass_b: sum_b,
        });
    }

    let cost = DMatrix::from_fn(m, n, |l, j| (points_a[l] - points_b[j]).norm_squared());

    struct Search<'a> {
        cost: &'a DMatrix<f64>,
        best_cost: f64,
        best_plan: DMatrix<f64>,
    }

    impl Search<'_> {
        fn cheapest_completion(&self, supply: &[f64], demand: &[f64]) -> f64 {
            // Admissible bound: ship every remaining supply at its cheapest
            // live destination.
            supply
                .iter()
                .enumerate()
                .filter(|(_, &a)| a > 0.0)
                .map(|(l, &a)| {
                    let cheapest = demand
                        .iter()
                        .enumerate()
                        .filter(|(_, &b)| b > 0.0)
                        .map(|(j, _)| self.cost[(l, j)])
                        .fold(f64::INFINITY, f64::min);
                    a * cheapest
                })
                .sum()
        }

        fn recurse(
            &mut self,
            supply: &mut [f64],
            demand: &mut [f64],
            plan: &mut DMatrix<f64>,
            partial: f64,
        ) {
            let live_rows: Vec<usize> =
                (0..supply.len()).filter(|&l| supply[l] > 0.0).collect();
            let live_cols: Vec<usize> =
                (0..demand.len()).filter(|&j| demand[j] > 0.0).collect();
            if live_rows.is_empty() || live_cols.is_empty() {
                if partial < self.best_cost {
                    self.best_cost = partial;
                    self.best_plan.copy_from(plan);
                }
                return;
            }
            if partial + self.cheapest_completion(supply, demand) >= self.best_cost {
                return;
            }
            for &l in &live_rows {
                for &j in &live_cols {
                    let shipped = supply[l].min(demand[j]);
                    supply[l] -= shipped;
                    demand[j] -= shipped;
                    plan[(l, j)] += shipped;
                    self.recurse(supply, demand, plan, partial + shipped * self.cost[(l, j)]);
                    plan[(l, j)] -= shipped;
                    supply[l] += shipped;
                    demand[j] += shipped;
                }
            }
        }
    }

    let mut search = Search {
        cost: &cost,
        best_cost: f64::INFINITY,
        best_plan: DMatrix::zeros(m, n),
    };
    let mut supply = mass_a.to_vec();
    let mut demand = mass_b.to_vec();
    let mut plan = DMatrix::zeros(m, n);
    search.recurse(&mut supply, &mut demand, &mut plan, 0.0);

    Ok(TransportPlan {
        plan: search.best_plan,
        cost: search.best_cost,
    })
}
