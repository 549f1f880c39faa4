use super::instance::{Instance, Locations, Violation, CISTERN};
use thiserror::Error;

const EPS: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-6;

/// A complete bowser schedule: where the bowser sits each period, how much it
/// draws from the cistern, and how much it delivers to each asset.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// Bowser node per period (0-based nodes).
    pub route: Vec<usize>,
    /// Cistern-to-bowser transfer per period.
    pub refills: Vec<f64>,
    /// Delivered liters, indexed `[asset][period]`.
    pub refuels: Vec<Vec<f64>>,
}

impl Plan {
    /// Implied transits `(route[t], route[t+1])`.
    pub fn transits(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.route.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn horizon(&self) -> usize {
        self.route.len()
    }
}

/// Evaluation of a plan against an instance: travel plus penalized shortages.
#[derive(Debug, Clone)]
pub struct PlanEvaluation {
    pub travel_cost: f64,
    pub shortage_cost: f64,
    pub total: f64,
    /// Shortage liters (or expected liters) indexed `[asset][period]`.
    pub shortages: Vec<Vec<f64>>,
}

impl PlanEvaluation {
    pub fn total_shortage(&self) -> f64 {
        self.shortages.iter().flatten().sum()
    }
}

/// Structural mismatch between a plan and an instance. Distinct from
/// infeasibility: a plan of the wrong shape cannot even be checked.
#[derive(Debug, Error, PartialEq)]
pub enum PlanCheckError {
    #[error("plan route covers {got} periods, instance horizon is {want}")]
    RouteLength { got: usize, want: usize },
    #[error("plan has {got} refill entries, instance horizon is {want}")]
    RefillLength { got: usize, want: usize },
    #[error("plan refuels cover {got} assets, instance has {want}")]
    AssetCount { got: usize, want: usize },
    #[error("refuel row for asset {asset} covers {got} periods, instance horizon is {want}")]
    RefuelLength { asset: usize, got: usize, want: usize },
}

/// Checks the plan invariants against an instance. Empty list = feasible.
///
/// The checks mirror the bowser-side model constraints: transits must follow
/// arcs, refills happen only at the cistern, deliveries only under
/// co-location (deterministic-location instances), and the running bowser
/// level stays within `[0, capacity]`.
pub fn check_plan_feasibility(inst: &Instance, plan: &Plan) -> Result<Vec<Violation>, PlanCheckError> {
    let t_len = inst.horizon;
    let a_len = inst.asset_count();
    if plan.route.len() != t_len {
        return Err(PlanCheckError::RouteLength { got: plan.route.len(), want: t_len });
    }
    if plan.refills.len() != t_len {
        return Err(PlanCheckError::RefillLength { got: plan.refills.len(), want: t_len });
    }
    if plan.refuels.len() != a_len {
        return Err(PlanCheckError::AssetCount { got: plan.refuels.len(), want: a_len });
    }
    for (a, row) in plan.refuels.iter().enumerate() {
        if row.len() != t_len {
            return Err(PlanCheckError::RefuelLength { asset: a + 1, got: row.len(), want: t_len });
        }
    }

    let mut v = Vec::new();
    let n = inst.graph.node_count();
    for (t, &node) in plan.route.iter().enumerate() {
        if node >= n {
            v.push(Violation {
                field: "route".into(),
                message: format!("period {}: node {} outside 1..={}", t + 1, node + 1, n),
            });
        }
    }
    if !v.is_empty() {
        return Ok(v);
    }

    for (t, (i, j)) in plan.transits().enumerate() {
        if !inst.graph.can_transit(i, j) {
            v.push(Violation {
                field: "route".into(),
                message: format!(
                    "transit {} -> {} at end of period {} is not an arc",
                    i + 1,
                    j + 1,
                    t + 1
                ),
            });
        }
    }

    for (t, &b) in plan.refills.iter().enumerate() {
        if b < -EPS {
            v.push(Violation {
                field: "refills".into(),
                message: format!("period {}: negative refill {}", t + 1, b),
            });
        } else if b > EPS && plan.route[t] != CISTERN {
            v.push(Violation {
                field: "refills".into(),
                message: format!(
                    "period {}: refill {} away from the cistern (bowser at node {})",
                    t + 1,
                    b,
                    plan.route[t] + 1
                ),
            });
        }
    }

    for (a, asset) in inst.assets.iter().enumerate() {
        for t in 0..t_len {
            let q = plan.refuels[a][t];
            if q < -EPS {
                v.push(Violation {
                    field: format!("refuels[{}]", a + 1),
                    message: format!("period {}: negative delivery {}", t + 1, q),
                });
                continue;
            }
            if q > EPS {
                if let Locations::Deterministic(locs) = &asset.locations {
                    if locs[t] != plan.route[t] {
                        v.push(Violation {
                            field: format!("refuels[{}]", a + 1),
                            message: format!(
                                "period {}: delivery {} but asset at node {} while bowser at node {}",
                                t + 1,
                                q,
                                locs[t] + 1,
                                plan.route[t] + 1
                            ),
                        });
                    }
                }
            }
        }
    }

    let mut level = inst.bowser_initial;
    for t in 0..t_len {
        level += plan.refills[t];
        if level > inst.bowser_capacity + FEAS_TOL {
            v.push(Violation {
                field: "refills".into(),
                message: format!(
                    "period {}: bowser level {} exceeds capacity {}",
                    t + 1,
                    level,
                    inst.bowser_capacity
                ),
            });
        }
        let delivered: f64 = plan.refuels.iter().map(|row| row[t]).sum();
        level -= delivered;
        if level < -FEAS_TOL {
            v.push(Violation {
                field: "refuels".into(),
                message: format!(
                    "period {}: cumulative deliveries overdraw the bowser by {}",
                    t + 1,
                    -level
                ),
            });
        }
    }

    Ok(v)
}
