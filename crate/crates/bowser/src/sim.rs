//! Lost-sales evaluation of fixed plans: exact for deterministic consumption,
//! Monte Carlo with common random numbers for stochastic consumption.
//!
//! Within a period the order of events is: refill at the cistern, deliver to
//! co-located assets (spilling anything beyond tank capacity), consume, pay
//! the penalty on any shortage, then move. Shortages are lost, never
//! backlogged.

use crate::core::{
    check_plan_feasibility, Consumption, Instance, Plan, PlanCheckError, PlanEvaluation,
};
use crate::crn;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Shape(#[from] PlanCheckError),
    #[error("plan is infeasible ({count} violations; first: {first})")]
    Infeasible { count: usize, first: String },
    #[error("exact evaluation needs deterministic consumption")]
    StochasticConsumption,
    #[error("plan evaluation needs deterministic asset locations")]
    StochasticLocations,
    #[error("Monte Carlo evaluation needs at least one replication")]
    NoReplications,
}

/// Sample mean with a Student-t 95% confidence interval.
#[derive(Debug, Clone, Copy)]
pub struct SimEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Absent when fewer than two replications were run.
    pub ci95: Option<(f64, f64)>,
    pub replications: usize,
}

impl SimEstimate {
    pub fn ci_contains(&self, v: f64) -> bool {
        self.ci95.map_or(self.mean == v, |(lo, hi)| lo <= v && v <= hi)
    }
}

fn ensure_feasible(inst: &Instance, plan: &Plan) -> Result<(), EvalError> {
    if !inst.has_deterministic_locations() {
        return Err(EvalError::StochasticLocations);
    }
    let violations = check_plan_feasibility(inst, plan)?;
    if !violations.is_empty() {
        return Err(EvalError::Infeasible {
            count: violations.len(),
            first: violations[0].to_string(),
        });
    }
    Ok(())
}

/// Runs the within-period dynamics of a plan against one consumption matrix
/// (indexed `[asset][period]`) and returns (total cost, shortage matrix).
pub(crate) fn realized_cost(
    inst: &Instance,
    plan: &Plan,
    consumption: &[Vec<f64>],
) -> (f64, Vec<Vec<f64>>) {
    let t_len = inst.horizon;
    let a_len = inst.asset_count();
    let travel: f64 =
        plan.transits().map(|(i, j)| inst.graph.distance(i, j).unwrap_or(f64::INFINITY)).sum();
    let mut level: Vec<f64> = inst.assets.iter().map(|a| a.initial_level).collect();
    let mut shortages = vec![vec![0.0; t_len]; a_len];
    for t in 0..t_len {
        for a in 0..a_len {
            // deliveries spill beyond the tank
            let available =
                (level[a] + plan.refuels[a][t]).min(inst.assets[a].tank_capacity);
            let f = consumption[a][t];
            shortages[a][t] = (f - available).max(0.0);
            level[a] = (available - f).max(0.0);
        }
    }
    let total_short: f64 = shortages.iter().flatten().sum();
    (travel + inst.penalty * total_short, shortages)
}

/// Realized total shortage of one asset for a plan on a fixed consumption
/// path (property-test hook into the shared dynamics).
pub fn realized_shortages_for(
    inst: &Instance,
    plan: &Plan,
    consumption: &[Vec<f64>],
    asset: usize,
) -> f64 {
    let (_, shortages) = realized_cost(inst, plan, consumption);
    shortages[asset].iter().sum()
}

/// Exact evaluation of a feasible plan on a deterministic instance.
pub fn evaluate_plan_deterministic(inst: &Instance, plan: &Plan) -> Result<PlanEvaluation, EvalError> {
    ensure_feasible(inst, plan)?;
    let mut consumption = Vec::with_capacity(inst.asset_count());
    for asset in &inst.assets {
        match &asset.consumption {
            Consumption::Deterministic(f) => consumption.push(f.clone()),
            Consumption::Stochastic(_) => return Err(EvalError::StochasticConsumption),
        }
    }
    let (total, shortages) = realized_cost(inst, plan, &consumption);
    let shortage_total: f64 = shortages.iter().flatten().sum();
    Ok(PlanEvaluation {
        travel_cost: total - inst.penalty * shortage_total,
        shortage_cost: inst.penalty * shortage_total,
        total,
        shortages,
    })
}

/// One replication's consumption matrix under the common-random-numbers
/// contract: entry `(a, t)` depends only on `(seed, replication, a, t)`.
/// Deterministic entries pass through unchanged.
pub fn sample_consumption(inst: &Instance, seed: u64, replication: u64) -> Vec<Vec<f64>> {
    inst.assets
        .iter()
        .enumerate()
        .map(|(a, asset)| match &asset.consumption {
            Consumption::Deterministic(f) => f.clone(),
            Consumption::Stochastic(ds) => ds
                .iter()
                .enumerate()
                .map(|(t, d)| {
                    d.quantile(crn::consumption_u01(seed, replication, a as u64, t as u64)) as f64
                })
                .collect(),
        })
        .collect()
}

/// Monte Carlo evaluation of a feasible plan: sample mean of the realized
/// cost over `replications` common-random-number scenarios, with a Student-t
/// 95% interval.
pub fn evaluate_plan_monte_carlo(
    inst: &Instance,
    plan: &Plan,
    replications: usize,
    seed: u64,
) -> Result<SimEstimate, EvalError> {
    ensure_feasible(inst, plan)?;
    if replications == 0 {
        return Err(EvalError::NoReplications);
    }
    let mut costs = Vec::with_capacity(replications);
    for rep in 0..replications {
        let consumption = sample_consumption(inst, seed, rep as u64);
        let (cost, _) = realized_cost(inst, plan, &consumption);
        costs.push(cost);
    }
    Ok(summarize(&costs))
}

/// Mean / standard error / Student-t interval of a cost sample, folded in a
/// fixed order so results are bit-reproducible.
pub fn summarize(costs: &[f64]) -> SimEstimate {
    let n = costs.len();
    let mean = costs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return SimEstimate { mean, stderr: 0.0, ci95: None, replications: n };
    }
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1) as f64;
    let stderr = (var / n as f64).sqrt();
    let t = t_quantile_975(n - 1);
    SimEstimate { mean, stderr, ci95: Some((mean - t * stderr, mean + t * stderr)), replications: n }
}

/// Two-sided 95% Student-t critical value: tabulated for small degrees of
/// freedom, Cornish-Fisher expansion beyond.
pub fn t_quantile_975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706204736, 4.302652730, 3.182446305, 2.776445105, 2.570581836, 2.446911851,
        2.364624252, 2.306004135, 2.262157163, 2.228138852, 2.200985160, 2.178812830,
        2.160368656, 2.144786688, 2.131449546, 2.119905299, 2.109815578, 2.100922040,
        2.093024054, 2.085963447, 2.079613845, 2.073873068, 2.068657610, 2.063898562,
        2.059538553, 2.055529439, 2.051830516, 2.048407142, 2.045229642, 2.042272456,
    ];
    if df == 0 {
        return f64::INFINITY;
    }
    if df <= 30 {
        return TABLE[df - 1];
    }
    let z = 1.959963984540054_f64;
    let d = df as f64;
    let z3 = z.powi(3);
    let z5 = z.powi(5);
    let z7 = z.powi(7);
    z + (z3 + z) / (4.0 * d)
        + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * d * d)
        + (3.0 * z7 + 19.0 * z5 + 17.0 * z3 - 15.0 * z) / (384.0 * d * d * d)
}
