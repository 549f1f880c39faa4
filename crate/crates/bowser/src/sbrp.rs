//! Stochastic-consumption routing MILP and the receding-horizon protocol.
//!
//! Reuses the deterministic model's routing core verbatim and replaces the
//! inventory rows with expected-value recourse: per asset and period the
//! expected shortage `In_a_t` and expected inventory `Ip_a_t` sit on epigraphs
//! of the piecewise-linearized loss and complementary loss of the cumulative
//! consumption distribution, evaluated at the fuel position
//! `s_a + sum Q - sum spills + sum of earlier expected shortages` (the
//! lost-sales correction: fuel that demand never drew stays usable). Expected
//! spill `E_a_t = max(Ip_{t-1} + Q_t - capacity, 0)` becomes two >= rows.
//! Minimization presses every epigraph onto the function value, reproducing
//! the equality semantics without integer max-encodings.

use crate::core::{Consumption, Instance, Plan, CISTERN};
use crate::dbrp::{
    build_routing_core, extract_plan, BuildError, DbrpBuildOptions, ExtractError,
};
use crate::milp::{
    solve, MilpModel, MilpSolution, Sense, SolveError, SolveLimits, SolveStatus, VarId, VarKind,
};
use crate::stochproc::{linearize_complementary_loss, DiscreteDist};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy)]
pub struct SbrpBuildOptions {
    /// Piecewise-linearization segment count.
    pub segments: usize,
    /// Shared routing options. Valid inequalities are rejected here: their
    /// big-M derivations assume deterministic consumption.
    pub base: DbrpBuildOptions,
}

impl Default for SbrpBuildOptions {
    fn default() -> Self {
        SbrpBuildOptions { segments: 8, base: DbrpBuildOptions::default() }
    }
}

pub(crate) fn ineg_name(a: usize, t: usize) -> String {
    format!("In_{}_{}", a + 1, t + 1)
}
pub(crate) fn ipos_name(a: usize, t: usize) -> String {
    format!("Ip_{}_{}", a + 1, t + 1)
}
pub(crate) fn exc_name(a: usize, t: usize) -> String {
    format!("E_{}_{}", a + 1, t + 1)
}

/// Builds the stochastic model with the bowser starting at the cistern.
pub fn build_sbrp_model(inst: &Instance, opts: &SbrpBuildOptions) -> Result<MilpModel, BuildError> {
    build_sbrp_model_from(inst, opts, CISTERN)
}

/// Stage builder used by the receding-horizon loop: the bowser starts at
/// `start` (pinned through bounds); the end stays pinned at the cistern.
pub(crate) fn build_sbrp_model_from(
    inst: &Instance,
    opts: &SbrpBuildOptions,
    start: usize,
) -> Result<MilpModel, BuildError> {
    if !inst.assets.iter().all(|a| matches!(a.consumption, Consumption::Stochastic(_))) {
        return Err(BuildError::DeterministicConsumption);
    }
    if opts.base.with_valid_inequalities {
        return Err(BuildError::CutsOnStochasticModel);
    }
    assert!(opts.segments >= 1, "at least one linearization segment");
    let mut model = MilpModel::new();
    let vars = build_routing_core(inst, &mut model)?;
    if start != CISTERN {
        // relocate the start pin set by the routing core
        relax_lower_bound(&mut model, vars.v[0][CISTERN]);
        pin_lower_bound(&mut model, vars.v[0][start]);
    }

    let t_len = inst.horizon;
    for (a, asset) in inst.assets.iter().enumerate() {
        let dists = match &asset.consumption {
            Consumption::Stochastic(d) => d,
            Consumption::Deterministic(_) => unreachable!("checked above"),
        };
        // cumulative consumption distributions and a loose finite cap that
        // keeps the relaxation bounded without ever binding
        let mut cum = DiscreteDist::point_mass(0);
        let mut cums = Vec::with_capacity(t_len);
        for d in dists.iter() {
            cum = cum.convolve(d);
            cums.push(cum.clone());
        }
        let big = asset.initial_level
            + cums.last().map(|d| d.mean()).unwrap_or(0.0)
            + t_len as f64 * (asset.tank_capacity + inst.bowser_capacity)
            + 10.0;

        let mut ineg = Vec::with_capacity(t_len);
        let mut ipos = Vec::with_capacity(t_len);
        let mut exc = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let ng = model.add_var(ineg_name(a, t), 0.0, big, VarKind::Continuous).unwrap();
            model.add_objective_term(ng, inst.penalty);
            ineg.push(ng);
            ipos.push(model.add_var(ipos_name(a, t), 0.0, big, VarKind::Continuous).unwrap());
            exc.push(model.add_var(exc_name(a, t), 0.0, big, VarKind::Continuous).unwrap());
        }

        for t in 0..t_len {
            let g = &cums[t];
            let mean = g.mean();
            let pw = linearize_complementary_loss(g, opts.segments);

            // the fuel-position terms of x_{a,t} with coefficient `coef`
            let position_terms = |coef: f64| -> Vec<(VarId, f64)> {
                let mut terms = Vec::new();
                for k in 0..=t {
                    terms.push((vars.q[a][k], coef));
                    terms.push((exc[k], -coef));
                }
                for k in 0..t {
                    terms.push((ineg[k], coef));
                }
                terms
            };

            for (s_idx, seg) in pw.segments.iter().enumerate() {
                // complementary loss epigraph: Ip >= m x + b
                if !(seg.slope == 0.0 && seg.intercept == 0.0) {
                    let mut terms = position_terms(-seg.slope);
                    terms.push((ipos[t], 1.0));
                    model
                        .add_constraint(
                            format!("ipos_{}_{}_{}", a + 1, t + 1, s_idx),
                            dedup(terms),
                            Sense::Ge,
                            seg.intercept + seg.slope * asset.initial_level,
                        )
                        .unwrap();
                }
                // loss epigraph via the identity L = L^ - x + mean
                let slope = seg.slope - 1.0;
                let intercept = seg.intercept + mean;
                if !(slope == 0.0 && intercept.abs() < 1e-12) {
                    let mut terms = position_terms(-slope);
                    terms.push((ineg[t], 1.0));
                    model
                        .add_constraint(
                            format!("ineg_{}_{}_{}", a + 1, t + 1, s_idx),
                            dedup(terms),
                            Sense::Ge,
                            intercept + slope * asset.initial_level,
                        )
                        .unwrap();
                }
            }

            // expected spill: E_t >= Ip_{t-1} + Q_t - capacity (Ip_0 = s_a)
            let mut terms = vec![(exc[t], 1.0), (vars.q[a][t], -1.0)];
            let mut rhs = -asset.tank_capacity;
            if t >= 1 {
                terms.push((ipos[t - 1], -1.0));
            } else {
                rhs += asset.initial_level;
            }
            model
                .add_constraint(format!("spill_{}_{}", a + 1, t + 1), terms, Sense::Ge, rhs)
                .unwrap();
        }
    }
    Ok(model)
}

fn dedup(terms: Vec<(VarId, f64)>) -> Vec<(VarId, f64)> {
    let mut map: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for (v, c) in terms {
        *map.entry(v.index()).or_insert(0.0) += c;
    }
    map.into_iter().filter(|&(_, c)| c != 0.0).map(|(i, c)| (VarId(i), c)).collect()
}

fn pin_lower_bound(model: &mut MilpModel, var: VarId) {
    model.set_var_lb(var, 1.0);
}
fn relax_lower_bound(model: &mut MilpModel, var: VarId) {
    model.set_var_lb(var, 0.0);
}

/// A solved here-and-now plan with its model-predicted economics.
#[derive(Debug, Clone)]
pub struct HereAndNowOutcome {
    pub plan: Plan,
    pub predicted_total: f64,
    pub predicted_travel: f64,
    pub predicted_shortage: f64,
    /// Model-predicted expected shortages indexed `[asset][period]`.
    pub predicted_shortages: Vec<Vec<f64>>,
    pub solution: MilpSolution,
}

#[derive(Debug, Error)]
pub enum SbrpError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("stage {stage}: solver stopped with status {status:?}; partial realized plan attached")]
    StageIncomplete { stage: usize, status: SolveStatus, partial: Plan },
    #[error("solver returned status {0:?}")]
    NotSolved(SolveStatus),
}

/// Builds and solves the here-and-now model, returning the fixed plan and its
/// predicted expected cost split.
pub fn solve_here_and_now(
    inst: &Instance,
    opts: &SbrpBuildOptions,
    limits: &SolveLimits,
) -> Result<HereAndNowOutcome, SbrpError> {
    let model = build_sbrp_model(inst, opts)?;
    let solution = solve(&model, limits)?;
    if !matches!(solution.status, SolveStatus::Optimal | SolveStatus::FeasibleGap) {
        return Err(SbrpError::NotSolved(solution.status));
    }
    let plan = extract_plan(inst, &model, &solution)?;
    let predicted_shortages: Vec<Vec<f64>> = (0..inst.asset_count())
        .map(|a| {
            (0..inst.horizon)
                .map(|t| solution.value_by_name(&model, &ineg_name(a, t)).unwrap())
                .collect()
        })
        .collect();
    let predicted_shortage: f64 = predicted_shortages.iter().flatten().sum();
    let predicted_total = solution.objective;
    Ok(HereAndNowOutcome {
        predicted_travel: predicted_total - inst.penalty * predicted_shortage,
        plan,
        predicted_total,
        predicted_shortage,
        predicted_shortages,
        solution,
    })
}

/// Result of one receding-horizon pass over a consumption scenario.
#[derive(Debug, Clone)]
pub struct RhOutcome {
    pub plan: Plan,
    pub realized_cost: f64,
    pub realized_shortages: Vec<Vec<f64>>,
}

/// First-period decisions of one stage solve, cached per reachable state.
#[derive(Debug, Clone)]
struct StageDecision {
    refill: f64,
    refuels: Vec<f64>,
    next_node: Option<usize>,
    first_node: usize,
}

/// Receding-horizon driver. Stage solves are memoized on the observed state
/// `(stage, position, bowser level, asset levels)`, which collapses the
/// common-random-number replications that share a history prefix.
pub struct RhEvaluator<'a> {
    inst: &'a Instance,
    opts: SbrpBuildOptions,
    limits: SolveLimits,
    cache: HashMap<(usize, usize, u64, Vec<u64>), StageDecision>,
}

impl<'a> RhEvaluator<'a> {
    pub fn new(inst: &'a Instance, opts: SbrpBuildOptions, limits: SolveLimits) -> Self {
        RhEvaluator { inst, opts, limits, cache: HashMap::new() }
    }

    /// Runs the protocol against one realized consumption matrix
    /// (`[asset][period]`): solve over the remaining horizon, implement the
    /// first-period decisions, observe, update lost-sales state, repeat.
    pub fn run(&mut self, realized: &[Vec<f64>]) -> Result<RhOutcome, SbrpError> {
        let inst = self.inst;
        let t_len = inst.horizon;
        let a_len = inst.asset_count();
        let mut pos = CISTERN;
        let mut bowser = inst.bowser_initial;
        let mut levels: Vec<f64> = inst.assets.iter().map(|a| a.initial_level).collect();

        let mut route = Vec::with_capacity(t_len);
        let mut refills = Vec::with_capacity(t_len);
        let mut refuels: Vec<Vec<f64>> = vec![Vec::with_capacity(t_len); a_len];
        let mut shortages: Vec<Vec<f64>> = vec![Vec::with_capacity(t_len); a_len];

        for t in 0..t_len {
            let key = (
                t,
                pos,
                bowser.to_bits(),
                levels.iter().map(|l| l.to_bits()).collect::<Vec<_>>(),
            );
            let decision = match self.cache.get(&key) {
                Some(d) => d.clone(),
                None => {
                    let d = self.solve_stage(t, pos, bowser, &levels).map_err(|e| {
                        self.attach_partial(e, t, &route, &refills, &refuels)
                    })?;
                    self.cache.insert(key, d.clone());
                    d
                }
            };
            // implement the stage decisions
            let node = decision.first_node;
            route.push(node);
            refills.push(decision.refill);
            bowser = (bowser + decision.refill).min(inst.bowser_capacity);
            for a in 0..a_len {
                let q = decision.refuels[a];
                refuels[a].push(q);
                bowser -= q;
                levels[a] = (levels[a] + q).min(inst.assets[a].tank_capacity);
            }
            // observe consumption, lost sales floor at zero
            for a in 0..a_len {
                let f = realized[a][t];
                shortages[a].push((f - levels[a]).max(0.0));
                levels[a] = (levels[a] - f).max(0.0);
            }
            if let Some(next) = decision.next_node {
                pos = next;
            }
        }

        let plan = Plan { route, refills, refuels };
        let travel: f64 =
            plan.transits().map(|(i, j)| inst.graph.distance(i, j).unwrap()).sum();
        let total_short: f64 = shortages.iter().flatten().sum();
        Ok(RhOutcome {
            plan,
            realized_cost: travel + inst.penalty * total_short,
            realized_shortages: shortages,
        })
    }

    fn attach_partial(
        &self,
        err: SbrpError,
        stage: usize,
        route: &[usize],
        refills: &[f64],
        refuels: &[Vec<f64>],
    ) -> SbrpError {
        match err {
            SbrpError::NotSolved(status) => SbrpError::StageIncomplete {
                stage: stage + 1,
                status,
                partial: Plan {
                    route: route.to_vec(),
                    refills: refills.to_vec(),
                    refuels: refuels.to_vec(),
                },
            },
            other => other,
        }
    }

    fn solve_stage(
        &self,
        t: usize,
        pos: usize,
        bowser: f64,
        levels: &[f64],
    ) -> Result<StageDecision, SbrpError> {
        let inst = self.inst;
        let sub = sub_instance(inst, t, bowser, levels);
        let model = build_sbrp_model_from(&sub, &self.opts, pos)?;
        let solution = solve(&model, &self.limits)?;
        if !matches!(solution.status, SolveStatus::Optimal | SolveStatus::FeasibleGap) {
            return Err(SbrpError::NotSolved(solution.status));
        }
        let plan = extract_plan(&sub, &model, &solution)?;
        Ok(StageDecision {
            refill: plan.refills[0],
            refuels: plan.refuels.iter().map(|row| row[0]).collect(),
            next_node: plan.route.get(1).copied(),
            first_node: plan.route[0],
        })
    }
}

/// Remaining-horizon instance with the observed fuel state as the new
/// initial condition.
fn sub_instance(inst: &Instance, from: usize, bowser: f64, levels: &[f64]) -> Instance {
    let assets = inst
        .assets
        .iter()
        .enumerate()
        .map(|(a, asset)| {
            let locations = match &asset.locations {
                crate::core::Locations::Deterministic(l) => {
                    crate::core::Locations::Deterministic(l[from..].to_vec())
                }
                crate::core::Locations::Stochastic(p) => {
                    crate::core::Locations::Stochastic(p[from..].to_vec())
                }
            };
            let consumption = match &asset.consumption {
                Consumption::Deterministic(f) => Consumption::Deterministic(f[from..].to_vec()),
                Consumption::Stochastic(d) => Consumption::Stochastic(d[from..].to_vec()),
            };
            crate::core::AssetSpec {
                tank_capacity: asset.tank_capacity,
                initial_level: levels[a],
                locations,
                consumption,
            }
        })
        .collect();
    Instance {
        horizon: inst.horizon - from,
        graph: inst.graph.clone(),
        assets,
        bowser_capacity: inst.bowser_capacity,
        bowser_initial: bowser,
        penalty: inst.penalty,
    }
}

/// One-shot receding-horizon run over a single scenario.
pub fn receding_horizon_run(
    inst: &Instance,
    opts: &SbrpBuildOptions,
    limits: &SolveLimits,
    realized: &[Vec<f64>],
) -> Result<RhOutcome, SbrpError> {
    RhEvaluator::new(inst, *opts, *limits).run(realized)
}
