//! Deterministic routing-and-refuelling MILP: builder, valid-inequality
//! families, and plan extraction.
//!
//! The model places the bowser with binaries `V_t_i`, tracks transits with
//! binaries `T_t_i_j` over the graph's arcs and self-loops (non-arc transits
//! are forbidden implicitly by creating no variable for them), and uses
//! continuous deliveries `Q_a_t`, cistern draws `B_t`, and per-period
//! shortages `S_a_t`. The bowser starts at the cistern and must be back at the
//! cistern in the final period; both are imposed through variable bounds, so
//! the constraint list matches the routing formulation row for row.

use crate::core::{Consumption, Instance, Plan, CISTERN};
use crate::milp::{MilpModel, MilpSolution, Sense, VarId, VarKind};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("instance has stochastic consumption; build the stochastic model instead")]
    StochasticConsumption,
    #[error("instance has deterministic consumption everywhere; build the deterministic model instead")]
    DeterministicConsumption,
    #[error("routing models need deterministic asset locations")]
    StochasticLocations,
    #[error("valid inequalities requested but no cut family selected")]
    EmptyCutFamilies,
    #[error("valid inequalities need deterministic consumption")]
    CutsNeedDeterministicConsumption,
    #[error("valid inequalities do not apply to the stochastic model")]
    CutsOnStochasticModel,
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("period {period}: {count} nodes carry an active position variable")]
    AmbiguousPosition { period: usize, count: usize },
}

/// Which valid-inequality families to add.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutFamilies {
    pub visit_count: bool,
    pub no_visit_no_delivery: bool,
    pub fuel_level_bound: bool,
}

impl CutFamilies {
    pub fn all() -> Self {
        CutFamilies { visit_count: true, no_visit_no_delivery: true, fuel_level_bound: true }
    }

    pub fn any(&self) -> bool {
        self.visit_count || self.no_visit_no_delivery || self.fuel_level_bound
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DbrpBuildOptions {
    pub with_valid_inequalities: bool,
    pub families: CutFamilies,
}

impl Default for DbrpBuildOptions {
    fn default() -> Self {
        DbrpBuildOptions { with_valid_inequalities: false, families: CutFamilies::all() }
    }
}

pub(crate) fn v_name(t: usize, i: usize) -> String {
    format!("V_{}_{}", t + 1, i + 1)
}
pub(crate) fn t_name(stage: usize, i: usize, j: usize) -> String {
    format!("T_{}_{}_{}", stage + 1, i + 1, j + 1)
}
pub(crate) fn q_name(a: usize, t: usize) -> String {
    format!("Q_{}_{}", a + 1, t + 1)
}
pub(crate) fn b_name(t: usize) -> String {
    format!("B_{}", t + 1)
}
fn s_name(a: usize, t: usize) -> String {
    format!("S_{}_{}", a + 1, t + 1)
}

/// Variable handles shared by the deterministic and stochastic builders.
pub(crate) struct RoutingVars {
    pub v: Vec<Vec<VarId>>,
    pub q: Vec<Vec<VarId>>,
}

/// Merges duplicate variables in a term list (constraint rows stay clean when
/// an asset revisits the same node).
fn combine(terms: Vec<(VarId, f64)>) -> Vec<(VarId, f64)> {
    let mut map: BTreeMap<usize, f64> = BTreeMap::new();
    for (v, c) in terms {
        *map.entry(v.index()).or_insert(0.0) += c;
    }
    map.into_iter().filter(|&(_, c)| c != 0.0).map(|(i, c)| (VarId(i), c)).collect()
}

/// Emits the routing-side variables and constraints shared by both models:
/// position/transit binaries with channeling, bowser refill and stock
/// balance, and delivery-only-under-co-location.
pub(crate) fn build_routing_core(
    inst: &Instance,
    model: &mut MilpModel,
) -> Result<RoutingVars, BuildError> {
    if !inst.has_deterministic_locations() {
        return Err(BuildError::StochasticLocations);
    }
    let t_len = inst.horizon;
    let n = inst.graph.node_count();
    let a_len = inst.asset_count();

    let mut v: Vec<Vec<VarId>> = vec![Vec::with_capacity(n); t_len];
    for t in 0..t_len {
        for i in 0..n {
            // boundary conditions: the bowser starts at the cistern and must
            // be back there in the final period
            let pinned = (t == 0 || t == t_len - 1) && i == CISTERN;
            let lb = if pinned { 1.0 } else { 0.0 };
            v[t].push(model.add_var(v_name(t, i), lb, 1.0, VarKind::Binary).unwrap());
        }
    }

    // transit binaries exist only for arcs and self-loops
    let mut trans: Vec<Vec<(usize, usize, VarId)>> = Vec::with_capacity(t_len.saturating_sub(1));
    for stage in 0..t_len.saturating_sub(1) {
        let mut stage_vars = Vec::new();
        for i in 0..n {
            let id = model.add_var(t_name(stage, i, i), 0.0, 1.0, VarKind::Binary).unwrap();
            stage_vars.push((i, i, id));
            for &j in inst.graph.out_neighbors(i) {
                let id = model.add_var(t_name(stage, i, j), 0.0, 1.0, VarKind::Binary).unwrap();
                stage_vars.push((i, j, id));
            }
        }
        trans.push(stage_vars);
    }

    let mut q: Vec<Vec<VarId>> = vec![Vec::with_capacity(t_len); a_len];
    for (a, asset) in inst.assets.iter().enumerate() {
        for t in 0..t_len {
            q[a].push(
                model.add_var(q_name(a, t), 0.0, asset.tank_capacity, VarKind::Continuous).unwrap(),
            );
        }
    }
    let mut b = Vec::with_capacity(t_len);
    for t in 0..t_len {
        b.push(model.add_var(b_name(t), 0.0, inst.bowser_capacity, VarKind::Continuous).unwrap());
    }

    // objective: travel distance over the chosen transits
    for stage_vars in &trans {
        for &(i, j, id) in stage_vars {
            let d = inst.graph.distance(i, j).unwrap();
            model.add_objective_term(id, d);
        }
    }

    // refills only at the cistern
    for t in 0..t_len {
        model
            .add_constraint(
                format!("refill_{}", t + 1),
                vec![(b[t], 1.0), (v[t][CISTERN], -inst.bowser_capacity)],
                Sense::Le,
                0.0,
            )
            .unwrap();
    }
    // bowser capacity after each refill, and nonnegative stock after deliveries
    for t in 0..t_len {
        let mut cap_terms: Vec<(VarId, f64)> = (0..=t).map(|k| (b[k], 1.0)).collect();
        for k in 0..t {
            for row in q.iter() {
                cap_terms.push((row[k], -1.0));
            }
        }
        model
            .add_constraint(
                format!("bcap_{}", t + 1),
                combine(cap_terms),
                Sense::Le,
                inst.bowser_capacity - inst.bowser_initial,
            )
            .unwrap();
        let mut stock_terms: Vec<(VarId, f64)> = (0..=t).map(|k| (b[k], 1.0)).collect();
        for k in 0..=t {
            for row in q.iter() {
                stock_terms.push((row[k], -1.0));
            }
        }
        model
            .add_constraint(
                format!("bstock_{}", t + 1),
                combine(stock_terms),
                Sense::Ge,
                -inst.bowser_initial,
            )
            .unwrap();
    }
    // the bowser is somewhere each period
    for t in 0..t_len {
        model
            .add_constraint(
                format!("one_{}", t + 1),
                v[t].iter().map(|&id| (id, 1.0)).collect(),
                Sense::Eq,
                1.0,
            )
            .unwrap();
    }
    // leaving a node uses exactly one transit, and channeling both ways
    for (stage, stage_vars) in trans.iter().enumerate() {
        for i in 0..n {
            let mut terms: Vec<(VarId, f64)> = stage_vars
                .iter()
                .filter(|&&(ii, _, _)| ii == i)
                .map(|&(_, _, id)| (id, 1.0))
                .collect();
            terms.push((v[stage][i], -1.0));
            model
                .add_constraint(format!("tout_{}_{}", stage + 1, i + 1), terms, Sense::Eq, 0.0)
                .unwrap();
        }
        for &(i, j, id) in stage_vars {
            model
                .add_constraint(
                    format!("tlo_{}_{}_{}", stage + 1, i + 1, j + 1),
                    combine(vec![(id, 1.0), (v[stage][i], -1.0), (v[stage + 1][j], -1.0)]),
                    Sense::Ge,
                    -1.0,
                )
                .unwrap();
            model
                .add_constraint(
                    format!("tfrom_{}_{}_{}", stage + 1, i + 1, j + 1),
                    vec![(id, 1.0), (v[stage][i], -1.0)],
                    Sense::Le,
                    0.0,
                )
                .unwrap();
            model
                .add_constraint(
                    format!("tto_{}_{}_{}", stage + 1, i + 1, j + 1),
                    combine(vec![(id, 1.0), (v[stage + 1][j], -1.0)]),
                    Sense::Le,
                    0.0,
                )
                .unwrap();
        }
    }
    // deliveries need co-location with the asset
    for (a, asset) in inst.assets.iter().enumerate() {
        for t in 0..t_len {
            let node = inst.location_of(a, t).expect("deterministic locations checked above");
            model
                .add_constraint(
                    format!("coloc_{}_{}", a + 1, t + 1),
                    vec![(q[a][t], 1.0), (v[t][node], -asset.tank_capacity)],
                    Sense::Le,
                    0.0,
                )
                .unwrap();
        }
    }
    Ok(RoutingVars { v, q })
}

/// Builds the deterministic model: routing core plus per-asset inventory
/// conservation with lost-sales shortages.
pub fn build_dbrp_model(inst: &Instance, opts: &DbrpBuildOptions) -> Result<MilpModel, BuildError> {
    if inst.has_stochastic_consumption() {
        return Err(BuildError::StochasticConsumption);
    }
    if opts.with_valid_inequalities && !opts.families.any() {
        return Err(BuildError::EmptyCutFamilies);
    }
    let mut model = MilpModel::new();
    let vars = build_routing_core(inst, &mut model)?;
    let t_len = inst.horizon;

    let mut s: Vec<Vec<VarId>> = vec![Vec::with_capacity(t_len); inst.asset_count()];
    for (a, asset) in inst.assets.iter().enumerate() {
        let f = match &asset.consumption {
            Consumption::Deterministic(f) => f.clone(),
            Consumption::Stochastic(_) => unreachable!("checked above"),
        };
        for t in 0..t_len {
            let id = model.add_var(s_name(a, t), 0.0, f[t], VarKind::Continuous).unwrap();
            model.add_objective_term(id, inst.penalty);
            s[a].push(id);
        }
        // fuel balance: enough delivered (counting lost sales) to cover
        // consumption, and never beyond the tank
        for t in 0..t_len {
            let mut lo: Vec<(VarId, f64)> = (0..=t).map(|k| (vars.q[a][k], 1.0)).collect();
            lo.extend((0..=t).map(|k| (s[a][k], 1.0)));
            let consumed: f64 = f[..=t].iter().sum();
            model
                .add_constraint(
                    format!("invlo_{}_{}", a + 1, t + 1),
                    combine(lo),
                    Sense::Ge,
                    consumed - asset.initial_level,
                )
                .unwrap();
            let mut hi: Vec<(VarId, f64)> = (0..=t).map(|k| (vars.q[a][k], 1.0)).collect();
            hi.extend((0..t).map(|k| (s[a][k], 1.0)));
            let consumed_before: f64 = f[..t].iter().sum();
            model
                .add_constraint(
                    format!("invhi_{}_{}", a + 1, t + 1),
                    combine(hi),
                    Sense::Le,
                    asset.tank_capacity - asset.initial_level + consumed_before,
                )
                .unwrap();
        }
    }

    if opts.with_valid_inequalities {
        add_valid_inequalities(inst, &mut model, &opts.families)?;
    }
    Ok(model)
}

/// Adds the three valid-inequality families to a model built by
/// [`build_dbrp_model`] on the same instance. Big-M values are the
/// consumption sums the families' derivations prescribe, never a generic
/// constant.
pub fn add_valid_inequalities(
    inst: &Instance,
    model: &mut MilpModel,
    families: &CutFamilies,
) -> Result<(), BuildError> {
    if inst.has_stochastic_consumption() {
        return Err(BuildError::CutsNeedDeterministicConsumption);
    }
    if !inst.has_deterministic_locations() {
        return Err(BuildError::StochasticLocations);
    }
    let t_len = inst.horizon;
    let var = |name: String| model.var_by_name(&name).expect("model built on this instance");

    let mut rows: Vec<(String, Vec<(VarId, f64)>, f64)> = Vec::new();
    for (a, asset) in inst.assets.iter().enumerate() {
        let f = match &asset.consumption {
            Consumption::Deterministic(f) => f.clone(),
            Consumption::Stochastic(_) => unreachable!("checked above"),
        };
        let visit = |t: usize| v_name(t, inst.location_of(a, t).unwrap());
        let total: f64 = f.iter().sum();

        if families.visit_count {
            // deliveries are limited by visits times the smaller tank
            let m = asset.tank_capacity.min(inst.bowser_capacity);
            for t in 0..t_len {
                let mut terms: Vec<(VarId, f64)> = (0..=t).map(|k| (var(visit(k)), m)).collect();
                terms.extend((0..=t).map(|k| (var(s_name(a, k)), 1.0)));
                let consumed: f64 = f[..=t].iter().sum();
                rows.push((
                    format!("cutv_{}_{}", a + 1, t + 1),
                    combine(terms),
                    consumed - asset.initial_level,
                ));
            }
        }
        if families.no_visit_no_delivery {
            // a window without visits delivers nothing
            for lo in 0..t_len {
                for hi in lo..t_len {
                    let mut terms: Vec<(VarId, f64)> =
                        (lo..=hi).map(|k| (var(visit(k)), total)).collect();
                    terms.extend((lo..=hi).map(|k| (var(q_name(a, k)), -1.0)));
                    rows.push((format!("cutw_{}_{}_{}", a + 1, lo + 1, hi + 1), combine(terms), 0.0));
                }
            }
        }
        if families.fuel_level_bound {
            // without a visit in j..t the fuel level ignores those deliveries
            for t in 0..t_len {
                let m: f64 = f[..=t].iter().sum();
                for j in 0..=t {
                    let mut terms: Vec<(VarId, f64)> =
                        (0..j).map(|k| (var(q_name(a, k)), 1.0)).collect();
                    terms.extend((0..=t).map(|k| (var(s_name(a, k)), 1.0)));
                    terms.extend((j..=t).map(|k| (var(visit(k)), m)));
                    rows.push((
                        format!("cutf_{}_{}_{}", a + 1, t + 1, j + 1),
                        combine(terms),
                        m - asset.initial_level,
                    ));
                }
            }
        }
    }
    for (name, terms, rhs) in rows {
        model.add_constraint(name, terms, Sense::Ge, rhs).unwrap();
    }
    Ok(())
}

/// Reads a plan out of a solved routing model (deterministic or stochastic):
/// the unique active position per period plus deliveries and refills, with
/// sub-tolerance values snapped to zero.
pub fn extract_plan(
    inst: &Instance,
    model: &MilpModel,
    solution: &MilpSolution,
) -> Result<Plan, ExtractError> {
    let t_len = inst.horizon;
    let n = inst.graph.node_count();
    let mut route = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let active: Vec<usize> = (0..n)
            .filter(|&i| solution.value_by_name(model, &v_name(t, i)).map_or(false, |x| x > 0.5))
            .collect();
        if active.len() != 1 {
            return Err(ExtractError::AmbiguousPosition { period: t + 1, count: active.len() });
        }
        route.push(active[0]);
    }
    let snap = |x: f64| if x.abs() < 1e-6 { 0.0 } else { x };
    let refills =
        (0..t_len).map(|t| snap(solution.value_by_name(model, &b_name(t)).unwrap())).collect();
    let refuels = (0..inst.asset_count())
        .map(|a| {
            (0..t_len)
                .map(|t| snap(solution.value_by_name(model, &q_name(a, t)).unwrap()))
                .collect()
        })
        .collect();
    Ok(Plan { route, refills, refuels })
}
