use super::model::{MilpModel, Sense, VarId, VarKind};
use super::simplex::{BasisSnapshot, Engine, LpCore, LpFailure, LpStatus};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct SolveLimits {
    pub time_limit: Duration,
    pub gap_tol: f64,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits { time_limit: Duration::from_secs(600), gap_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    FeasibleGap,
    Infeasible,
    TimeLimitNoIncumbent,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub nodes: u64,
    pub simplex_iterations: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub assignment: Vec<f64>,
    pub stats: SolveStats,
}

impl MilpSolution {
    pub fn value(&self, id: VarId) -> f64 {
        self.assignment[id.index()]
    }

    pub fn value_by_name(&self, model: &MilpModel, name: &str) -> Option<f64> {
        model.var_by_name(name).map(|id| self.assignment[id.index()])
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("LP relaxation is unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone)]
pub struct LpRelaxation {
    pub status: LpStatus,
    pub objective: f64,
    pub assignment: Vec<f64>,
    pub iterations: u64,
}

/// Solves the LP relaxation (binaries relaxed to their boxes) with the
/// bounded-variable primal simplex.
pub fn solve_lp_relaxation(model: &MilpModel) -> Result<LpRelaxation, SolveError> {
    let mut core = LpCore::from_model(model);
    tighten_singleton_rows(model, &mut core);
    let mut engine = Engine::new(core);
    let status = run_primal(&mut engine)?;
    Ok(LpRelaxation {
        status,
        objective: if status == LpStatus::Optimal { engine.objective_value() } else { f64::NAN },
        assignment: engine.solution(),
        iterations: engine.iterations,
    })
}

fn run_primal(engine: &mut Engine) -> Result<LpStatus, SolveError> {
    match engine.primal() {
        Ok(s) => Ok(s),
        Err(LpFailure::Stalled) => {
            // one retry after a clean refactorization, then report
            engine.refactorize();
            engine.reset_to_slack_basis();
            engine
                .primal()
                .map_err(|_| SolveError::Numerical("primal simplex stalled beyond safeguards".into()))
        }
    }
}

/// Bound tightening from singleton rows: a row with one term is folded into
/// the variable's bounds (the row itself is kept; it just becomes loose).
fn tighten_singleton_rows(model: &MilpModel, core: &mut LpCore) {
    for con in model.constraints() {
        if con.terms.len() != 1 {
            continue;
        }
        let (v, a) = con.terms[0];
        if a == 0.0 {
            continue;
        }
        let j = v.index();
        let b = con.rhs / a;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        match (con.sense, a > 0.0) {
            (Sense::Le, true) | (Sense::Ge, false) => hi = b,
            (Sense::Ge, true) | (Sense::Le, false) => lo = b,
            (Sense::Eq, _) => {
                lo = b;
                hi = b;
            }
        }
        if lo > core.lower[j] {
            core.lower[j] = lo;
        }
        if hi < core.upper[j] {
            core.upper[j] = hi;
        }
    }
}

struct BoundChange {
    col: usize,
    lower: f64,
    upper: f64,
    parent: Option<Arc<BoundChange>>,
}

struct Node {
    bound: f64,
    depth: u32,
    seq: u64,
    chain: Option<Arc<BoundChange>>,
    basis: Arc<BasisSnapshot>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: "greater" means explored earlier.
    // Best bound first; ties broken depth-first, then by insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Exact branch-and-bound solve.
///
/// Branching picks the most fractional binary (ties to the lowest variable
/// index); node selection is best-bound with depth-first tie-breaking. The
/// whole search is deterministic: rerunning yields the same status, objective
/// and node count.
pub fn solve(model: &MilpModel, limits: &SolveLimits) -> Result<MilpSolution, SolveError> {
    let start = Instant::now();
    let mut core = LpCore::from_model(model);
    tighten_singleton_rows(model, &mut core);
    let root_lower = core.lower.clone();
    let root_upper = core.upper.clone();
    let binaries: Vec<usize> = model
        .vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| i)
        .collect();

    let mut engine = Engine::new(core);
    let mut nodes = 0u64;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut best_bound = f64::NEG_INFINITY;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;

    // root node: cold primal solve per the pinned LP algorithm
    nodes += 1;
    match run_primal(&mut engine)? {
        LpStatus::Unbounded => return Err(SolveError::Unbounded),
        LpStatus::Infeasible => {
            return Ok(MilpSolution {
                status: SolveStatus::Infeasible,
                objective: f64::NAN,
                best_bound: f64::INFINITY,
                gap: f64::NAN,
                assignment: Vec::new(),
                stats: stats(nodes, &engine, start),
            });
        }
        LpStatus::Optimal => {}
    }
    let root_obj = engine.objective_value();
    best_bound = best_bound.max(root_obj);
    let root_x = engine.solution();
    match most_fractional(&binaries, &root_x) {
        None => {
            let snapped = snap_binaries(&binaries, root_x);
            return Ok(MilpSolution {
                status: SolveStatus::Optimal,
                objective: root_obj,
                best_bound: root_obj,
                gap: 0.0,
                assignment: snapped,
                stats: stats(nodes, &engine, start),
            });
        }
        Some(j) => {
            let basis = Arc::new(engine.snapshot());
            push_children(&mut heap, &mut seq, None, root_obj, 0, j, &basis);
        }
    }

    let gap_eps = |inc: f64| limits.gap_tol * inc.abs().max(1.0);

    while let Some(node) = heap.pop() {
        // best-bound order: this node's bound is the global lower bound
        best_bound = node.bound;
        if let Some((inc_obj, _)) = &incumbent {
            if node.bound >= *inc_obj - gap_eps(*inc_obj) {
                best_bound = *inc_obj;
                break;
            }
        }
        if start.elapsed() > limits.time_limit {
            break;
        }

        // rebuild this node's bound box from the root box plus its chain
        engine.core.lower.copy_from_slice(&root_lower);
        engine.core.upper.copy_from_slice(&root_upper);
        let mut chain = Vec::new();
        let mut cur = node.chain.clone();
        while let Some(c) = cur {
            chain.push((c.col, c.lower, c.upper));
            cur = c.parent.clone();
        }
        for &(col, lo, hi) in chain.iter().rev() {
            engine.core.lower[col] = engine.core.lower[col].max(lo);
            engine.core.upper[col] = engine.core.upper[col].min(hi);
        }

        engine.normalize_nonbasic_statuses();
        engine.compute_xb();
        nodes += 1;
        let status = match engine.dual() {
            Ok(s) => s,
            Err(LpFailure::Stalled) => {
                if engine.restore(&node.basis) {
                    match engine.dual() {
                        Ok(s) => s,
                        Err(_) => {
                            engine.reset_to_slack_basis();
                            run_primal(&mut engine)?
                        }
                    }
                } else {
                    run_primal(&mut engine)?
                }
            }
        };
        if status == LpStatus::Infeasible {
            continue;
        }
        // the dual ends primal-and-dual feasible; sanity check, then accept
        if engine.primal_infeasibility() > 1e-6 {
            engine.refactorize();
            if engine.dual().is_err() || engine.primal_infeasibility() > 1e-6 {
                engine.reset_to_slack_basis();
                if run_primal(&mut engine)? == LpStatus::Infeasible {
                    continue;
                }
            }
        }
        let obj = engine.objective_value();
        if let Some((inc_obj, _)) = &incumbent {
            if obj >= *inc_obj - gap_eps(*inc_obj) {
                continue;
            }
        }
        let x = engine.solution();
        match most_fractional(&binaries, &x) {
            None => {
                let better = incumbent.as_ref().map_or(true, |(z, _)| obj < z - 1e-12);
                if better {
                    incumbent = Some((obj, snap_binaries(&binaries, x)));
                }
            }
            Some(j) => {
                let basis = Arc::new(engine.snapshot());
                push_children(&mut heap, &mut seq, node.chain.clone(), obj, node.depth + 1, j, &basis);
            }
        }
    }

    let elapsed = start.elapsed();
    let timed_out = elapsed > limits.time_limit && !heap.is_empty();
    if heap.is_empty() && !timed_out {
        if let Some((z, _)) = &incumbent {
            best_bound = *z;
        }
    }
    match incumbent {
        Some((obj, x)) => {
            let gap = ((obj - best_bound) / obj.abs().max(1e-9)).max(0.0);
            let status = if gap <= limits.gap_tol { SolveStatus::Optimal } else { SolveStatus::FeasibleGap };
            Ok(MilpSolution {
                status,
                objective: obj,
                best_bound,
                gap,
                assignment: x,
                stats: stats(nodes, &engine, start),
            })
        }
        None => {
            if timed_out {
                Ok(MilpSolution {
                    status: SolveStatus::TimeLimitNoIncumbent,
                    objective: f64::NAN,
                    best_bound,
                    gap: f64::NAN,
                    assignment: Vec::new(),
                    stats: stats(nodes, &engine, start),
                })
            } else {
                // tree exhausted without an integer point: proven infeasible
                Ok(MilpSolution {
                    status: SolveStatus::Infeasible,
                    objective: f64::NAN,
                    best_bound: f64::INFINITY,
                    gap: f64::NAN,
                    assignment: Vec::new(),
                    stats: stats(nodes, &engine, start),
                })
            }
        }
    }
}

fn stats(nodes: u64, engine: &Engine, start: Instant) -> SolveStats {
    SolveStats { nodes, simplex_iterations: engine.iterations, wall_time: start.elapsed() }
}

fn push_children(
    heap: &mut BinaryHeap<Node>,
    seq: &mut u64,
    parent_chain: Option<Arc<BoundChange>>,
    bound: f64,
    depth: u32,
    branch_col: usize,
    basis: &Arc<BasisSnapshot>,
) {
    for (lo, hi) in [(0.0, 0.0), (1.0, 1.0)] {
        let chain = Some(Arc::new(BoundChange {
            col: branch_col,
            lower: lo,
            upper: hi,
            parent: parent_chain.clone(),
        }));
        heap.push(Node { bound, depth, seq: *seq, chain, basis: basis.clone() });
        *seq += 1;
    }
}

/// Most fractional binary: maximal distance to the nearest integer, ties to
/// the lowest variable index.
fn most_fractional(binaries: &[usize], x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in binaries {
        let frac = x[j] - x[j].floor();
        let dist = frac.min(1.0 - frac);
        if dist > INT_TOL {
            let better = best.map_or(true, |(_, d)| dist > d + 1e-12);
            if better {
                best = Some((j, dist));
            }
        }
    }
    best.map(|(j, _)| j)
}

fn snap_binaries(binaries: &[usize], mut x: Vec<f64>) -> Vec<f64> {
    for &j in binaries {
        x[j] = x[j].round();
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::{MilpModel, Sense, VarKind};

    #[test]
    fn minimizing_a_lone_binary_gives_zero() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 1.0, VarKind::Binary).unwrap();
        m.add_objective_term(x, 1.0);
        let sol = solve(&m, &SolveLimits::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
        assert_eq!(sol.value(x), 0.0);
    }

    /// Brute-force oracle over all 8 assignments of a 3-item knapsack-style toy.
    #[test]
    fn knapsack_toy_matches_exhaustive_enumeration() {
        // min -(8a + 11b + 6c) : 5a + 7b + 4c <= 14
        let values = [8.0, 11.0, 6.0];
        let weights = [5.0, 7.0, 4.0];
        let mut m = MilpModel::new();
        let vars: Vec<_> = (0..3)
            .map(|i| m.add_var(format!("x{i}"), 0.0, 1.0, VarKind::Binary).unwrap())
            .collect();
        for (i, &v) in vars.iter().enumerate() {
            m.add_objective_term(v, -values[i]);
        }
        m.add_constraint(
            "cap",
            vars.iter().enumerate().map(|(i, &v)| (v, weights[i])).collect(),
            Sense::Le,
            14.0,
        )
        .unwrap();
        let sol = solve(&m, &SolveLimits::default()).unwrap();

        let mut oracle = 0.0f64;
        for mask in 0..8u32 {
            let w: f64 = (0..3).filter(|i| mask >> i & 1 == 1).map(|i| weights[i]).sum();
            if w <= 14.0 {
                let v: f64 = (0..3).filter(|i| mask >> i & 1 == 1).map(|i| values[i]).sum();
                oracle = oracle.max(v);
            }
        }
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective + oracle).abs() < 1e-9, "{} vs {}", sol.objective, -oracle);
    }

    #[test]
    fn infeasible_integer_model_is_proven_by_exhausting_the_tree() {
        // x + y = 1.5 with x, y binary has fractional LP solutions only
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 1.0, VarKind::Binary).unwrap();
        let y = m.add_var("y", 0.0, 1.0, VarKind::Binary).unwrap();
        m.add_constraint("half", vec![(x, 1.0), (y, 1.0)], Sense::Eq, 1.5).unwrap();
        let sol = solve(&m, &SolveLimits::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn determinism_same_model_same_node_count() {
        let build = || {
            let mut m = MilpModel::new();
            let vars: Vec<_> = (0..6)
                .map(|i| m.add_var(format!("x{i}"), 0.0, 1.0, VarKind::Binary).unwrap())
                .collect();
            for (i, &v) in vars.iter().enumerate() {
                m.add_objective_term(v, -((i % 3) as f64 + 1.5));
            }
            m.add_constraint(
                "c1",
                vars.iter().enumerate().map(|(i, &v)| (v, 1.0 + (i as f64) * 0.7)).collect(),
                Sense::Le,
                6.3,
            )
            .unwrap();
            m.add_constraint(
                "c2",
                vars.iter().enumerate().map(|(i, &v)| (v, 2.0 - (i as f64) * 0.3)).collect(),
                Sense::Le,
                4.1,
            )
            .unwrap();
            m
        };
        let a = solve(&build(), &SolveLimits::default()).unwrap();
        let b = solve(&build(), &SolveLimits::default()).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.stats.nodes, b.stats.nodes);
    }

    #[test]
    fn weak_duality_bound_never_exceeds_incumbent() {
        let mut m = MilpModel::new();
        let vars: Vec<_> = (0..5)
            .map(|i| m.add_var(format!("x{i}"), 0.0, 1.0, VarKind::Binary).unwrap())
            .collect();
        for (i, &v) in vars.iter().enumerate() {
            m.add_objective_term(v, [3.0, -5.0, 2.0, -4.0, 1.0][i]);
        }
        m.add_constraint(
            "c",
            vars.iter().map(|&v| (v, 1.0)).collect(),
            Sense::Ge,
            2.0,
        )
        .unwrap();
        let sol = solve(&m, &SolveLimits::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.best_bound <= sol.objective + 1e-9);
        assert!(sol.gap <= 1e-6);
    }

    /// Independent dense textbook simplex (big-M, full tableau) used as an
    /// oracle for random LPs. Standard form: min c x, A x <= b, x >= 0.
    fn textbook_simplex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
        let m = a.len();
        let n = c.len();
        // tableau with slack variables; b >= 0 by construction in the test
        let cols = n + m + 1;
        let mut t = vec![vec![0.0; cols]; m + 1];
        for i in 0..m {
            for j in 0..n {
                t[i][j] = a[i][j];
            }
            t[i][n + i] = 1.0;
            t[i][cols - 1] = b[i];
        }
        for j in 0..n {
            t[m][j] = c[j];
        }
        let mut basis: Vec<usize> = (n..n + m).collect();
        loop {
            let mut piv_col = None;
            for j in 0..cols - 1 {
                if t[m][j] < -1e-9 {
                    piv_col = Some(j);
                    break;
                }
            }
            let Some(pc) = piv_col else { break };
            let mut piv_row = None;
            let mut best = f64::INFINITY;
            for i in 0..m {
                if t[i][pc] > 1e-9 {
                    let ratio = t[i][cols - 1] / t[i][pc];
                    if ratio < best - 1e-12 {
                        best = ratio;
                        piv_row = Some(i);
                    }
                }
            }
            let pr = piv_row.expect("bounded test LPs only");
            let pv = t[pr][pc];
            for j in 0..cols {
                t[pr][j] /= pv;
            }
            for i in 0..=m {
                if i != pr && t[i][pc].abs() > 1e-12 {
                    let f = t[i][pc];
                    for j in 0..cols {
                        t[i][j] -= f * t[pr][j];
                    }
                }
            }
            basis[pr] = pc;
        }
        -t[m][cols - 1]
    }

    #[test]
    fn random_lps_match_independent_textbook_simplex() {
        use crate::crn::SeedStream;
        for trial in 0..20u64 {
            let r = |i: u64| SeedStream::new(99).mix(trial).mix(i).u01();
            let n = 5;
            let m = 5;
            let a: Vec<Vec<f64>> =
                (0..m).map(|i| (0..n).map(|j| r((i * n + j) as u64) * 4.0 + 0.5).collect()).collect();
            let b: Vec<f64> = (0..m).map(|i| r(100 + i as u64) * 10.0 + 5.0).collect();
            let c: Vec<f64> = (0..n).map(|j| r(200 + j as u64) * 4.0 - 2.0).collect();

            let mut model = MilpModel::new();
            let vars: Vec<_> = (0..n)
                .map(|j| model.add_var(format!("x{j}"), 0.0, f64::INFINITY, VarKind::Continuous).unwrap())
                .collect();
            for (j, &v) in vars.iter().enumerate() {
                model.add_objective_term(v, c[j]);
            }
            for i in 0..m {
                model
                    .add_constraint(
                        format!("r{i}"),
                        vars.iter().enumerate().map(|(j, &v)| (v, a[i][j])).collect(),
                        Sense::Le,
                        b[i],
                    )
                    .unwrap();
            }
            let ours = solve_lp_relaxation(&model).unwrap();
            assert_eq!(ours.status, LpStatus::Optimal);
            let oracle = textbook_simplex(&a, &b, &c);
            assert!(
                (ours.objective - oracle).abs() < 1e-7,
                "trial {trial}: {} vs oracle {}",
                ours.objective,
                oracle
            );
        }
    }
}
