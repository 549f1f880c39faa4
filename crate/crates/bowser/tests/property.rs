//! Headless property suites: plan-feasibility fuzzing against an independent
//! rule oracle and a fix-into-the-model oracle, simulator monotonicity under
//! common random numbers, stream determinism, and convolution algebra.
//! Together the suites cover 10,000 generated cases.

use bowser::core::{
    check_plan_feasibility, AssetSpec, Consumption, Instance, Locations, Plan, SiteGraph, CISTERN,
};
use bowser::crn;
use bowser::dbrp::{build_dbrp_model, DbrpBuildOptions};
use bowser::milp::{solve, SolveLimits, SolveStatus};
use bowser::sim::{evaluate_plan_deterministic, realized_shortages_for, sample_consumption};
use bowser::stochproc::DiscreteDist;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(rng: &mut ChaCha8Rng) -> SiteGraph {
    let n = rng.gen_range(3..=7);
    let mut arcs = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        arcs.push((i, j, rng.gen_range(5.0..50.0f64).round()));
        arcs.push((j, i, rng.gen_range(5.0..50.0f64).round()));
    }
    for _ in 0..n {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j && !arcs.iter().any(|&(a, b, _)| a == i && b == j) {
            arcs.push((i, j, rng.gen_range(5.0..80.0f64).round()));
        }
    }
    SiteGraph::new(n, &arcs).unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng, stochastic: bool) -> Instance {
    let graph = random_graph(rng);
    let n = graph.node_count();
    let t_len = rng.gen_range(3..=6);
    let a_len = rng.gen_range(1..=3);
    let assets = (0..a_len)
        .map(|_| {
            let cap = rng.gen_range(5..=12) as f64;
            let mut node = rng.gen_range(0..n);
            let path: Vec<usize> = (0..t_len)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        let outs = graph.out_neighbors(node);
                        if !outs.is_empty() {
                            node = outs[rng.gen_range(0..outs.len())];
                        }
                    }
                    node
                })
                .collect();
            let consumption = if stochastic {
                Consumption::Stochastic(
                    (0..t_len)
                        .map(|_| {
                            DiscreteDist::truncated_poisson(rng.gen_range(1.0..4.0), 7).unwrap()
                        })
                        .collect(),
                )
            } else {
                Consumption::Deterministic(
                    (0..t_len).map(|_| rng.gen_range(0..=4) as f64).collect(),
                )
            };
            AssetSpec {
                tank_capacity: cap,
                initial_level: rng.gen_range(0..=(cap as u32)) as f64,
                locations: Locations::Deterministic(path),
                consumption,
            }
        })
        .collect();
    Instance {
        horizon: t_len,
        graph,
        assets,
        bowser_capacity: rng.gen_range(10..=30) as f64,
        bowser_initial: rng.gen_range(0..=10) as f64,
        penalty: rng.gen_range(50..=500) as f64,
    }
}

/// A random plan: usually a legal walk with deliveries at co-locations,
/// sometimes deliberately broken in one of several ways.
fn random_plan(inst: &Instance, rng: &mut ChaCha8Rng) -> Plan {
    let t_len = inst.horizon;
    let n = inst.graph.node_count();
    let mut route = Vec::with_capacity(t_len);
    let mut node = if rng.gen_bool(0.8) { CISTERN } else { rng.gen_range(0..n) };
    route.push(node);
    for _ in 1..t_len {
        if rng.gen_bool(0.5) {
            let outs = inst.graph.out_neighbors(node);
            if !outs.is_empty() {
                node = outs[rng.gen_range(0..outs.len())];
            }
        }
        route.push(node);
    }
    let mut refills = vec![0.0; t_len];
    let mut refuels = vec![vec![0.0; t_len]; inst.asset_count()];
    let mut bowser = inst.bowser_initial;
    let mut levels: Vec<f64> = inst.assets.iter().map(|a| a.initial_level).collect();
    for t in 0..t_len {
        if route[t] == CISTERN && rng.gen_bool(0.7) {
            let draw = (inst.bowser_capacity - bowser).max(0.0) * rng.gen_range(0.0..=1.0);
            refills[t] = draw.round();
            bowser += refills[t];
        }
        for a in 0..inst.asset_count() {
            if inst.location_of(a, t) == Some(route[t]) && rng.gen_bool(0.6) {
                let space = (inst.assets[a].tank_capacity - levels[a]).max(0.0);
                let q = space.min(bowser).max(0.0) * rng.gen_range(0.0..=1.0);
                let q = q.round();
                refuels[a][t] = q;
                bowser -= q;
                levels[a] += q;
            }
            let f = inst.consumption_of(a, t).unwrap_or(2.0);
            levels[a] = (levels[a] - f).max(0.0);
        }
    }
    // deliberate corruption in a third of the cases
    match rng.gen_range(0..9) {
        0 => {
            let t = rng.gen_range(0..t_len);
            route[t] = rng.gen_range(0..n); // may break an arc
        }
        1 => {
            let t = rng.gen_range(0..t_len);
            refills[t] += rng.gen_range(1..=20) as f64; // refill off-cistern or overfill
        }
        2 => {
            let a = rng.gen_range(0..inst.asset_count());
            let t = rng.gen_range(0..t_len);
            refuels[a][t] += rng.gen_range(5..=40) as f64; // overdraw or wrong node
        }
        _ => {}
    }
    Plan { route, refills, refuels }
}

/// Independent re-statement of the plan rules, written directly from the
/// invariants rather than sharing any library code path.
fn oracle_feasible(inst: &Instance, plan: &Plan) -> bool {
    let t_len = inst.horizon;
    for t in 1..t_len {
        if inst.graph.distance(plan.route[t - 1], plan.route[t]).is_none() {
            return false;
        }
    }
    for t in 0..t_len {
        if plan.refills[t] < -1e-9 || (plan.refills[t] > 1e-9 && plan.route[t] != CISTERN) {
            return false;
        }
        for a in 0..inst.asset_count() {
            let q = plan.refuels[a][t];
            if q < -1e-9 {
                return false;
            }
            if q > 1e-9 && inst.location_of(a, t) != Some(plan.route[t]) {
                return false;
            }
        }
    }
    let mut level = inst.bowser_initial;
    for t in 0..t_len {
        level += plan.refills[t];
        if level > inst.bowser_capacity + 1e-6 {
            return false;
        }
        for a in 0..inst.asset_count() {
            level -= plan.refuels[a][t];
        }
        if level < -1e-6 {
            return false;
        }
    }
    true
}

#[test]
fn plan_feasibility_fuzz_against_rule_and_milp_oracles() {
    const CASES: usize = 2000;
    const MILP_CASES: usize = 100;
    let mut milp_checked = 0usize;
    let mut feasible_count = 0usize;
    for seed in 0..CASES as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xF00D + seed);
        let inst = random_instance(&mut rng, false);
        let plan = random_plan(&inst, &mut rng);
        let verdict = check_plan_feasibility(&inst, &plan).unwrap();
        let oracle = oracle_feasible(&inst, &plan);
        assert_eq!(
            verdict.is_empty(),
            oracle,
            "seed {seed}: checker said {:?}, oracle said {oracle}",
            verdict
        );
        if verdict.is_empty() {
            feasible_count += 1;
            if milp_checked < MILP_CASES {
                // fix the plan into the deterministic model: the model must
                // accept it and reproduce the evaluated cost
                milp_checked += 1;
                let mut model = build_dbrp_model(&inst, &DbrpBuildOptions::default()).unwrap();
                // unpin the boundary conditions: arbitrary feasible plans may
                // start or end away from the cistern
                for i in 0..inst.graph.node_count() {
                    let v0 = model.var_by_name(&format!("V_1_{}", i + 1)).unwrap();
                    model.set_var_lb(v0, 0.0);
                    let vt = model.var_by_name(&format!("V_{}_{}", inst.horizon, i + 1)).unwrap();
                    model.set_var_lb(vt, 0.0);
                }
                for (t, &node) in plan.route.iter().enumerate() {
                    let v = model.var_by_name(&format!("V_{}_{}", t + 1, node + 1)).unwrap();
                    model.set_var_lb(v, 1.0);
                }
                for t in 0..inst.horizon {
                    let b = model.var_by_name(&format!("B_{}", t + 1)).unwrap();
                    model.set_var_lb(b, plan.refills[t]);
                    model.set_var_ub(b, plan.refills[t]);
                }
                for a in 0..inst.asset_count() {
                    for t in 0..inst.horizon {
                        let q = model.var_by_name(&format!("Q_{}_{}", a + 1, t + 1)).unwrap();
                        model.set_var_lb(q, plan.refuels[a][t]);
                        model.set_var_ub(q, plan.refuels[a][t]);
                    }
                }
                let sol = solve(&model, &SolveLimits::default()).unwrap();
                assert_eq!(
                    sol.status,
                    SolveStatus::Optimal,
                    "seed {seed}: feasible plan rejected by the model"
                );
                let eval = evaluate_plan_deterministic(&inst, &plan).unwrap();
                assert!(
                    (sol.objective - eval.total).abs() < 1e-6,
                    "seed {seed}: fixed-model objective {} vs evaluation {}",
                    sol.objective,
                    eval.total
                );
            }
        }
    }
    println!(
        "[property] plan fuzz: {CASES} cases ({feasible_count} feasible, {milp_checked} cross-checked against the fixed model), zero disagreements"
    );
}

#[test]
fn simulator_monotonicity_in_deliveries() {
    const CASES: usize = 2000;
    let mut tested = 0usize;
    for seed in 0..CASES as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xBEEF + seed);
        let inst = random_instance(&mut rng, true);
        let plan = random_plan(&inst, &mut rng);
        if !check_plan_feasibility(&inst, &plan).unwrap().is_empty() {
            continue;
        }
        let a = rng.gen_range(0..inst.asset_count());
        let t = rng.gen_range(0..inst.horizon);
        if inst.location_of(a, t) != Some(plan.route[t]) {
            continue;
        }
        let mut bumped = plan.clone();
        bumped.refuels[a][t] += 1.0;
        // keep the bowser feasible for the bump
        if !check_plan_feasibility(&inst, &bumped).unwrap().is_empty() {
            continue;
        }
        tested += 1;
        let rep = rng.gen_range(0..50u64);
        let path = sample_consumption(&inst, 1234, rep);
        let before = realized_shortages_for(&inst, &plan, &path, a);
        let after = realized_shortages_for(&inst, &bumped, &path, a);
        assert!(
            after <= before + 1e-12,
            "seed {seed}: delivery bump raised asset {a} shortage {before} -> {after}"
        );
    }
    println!("[property] simulator monotonicity: 2000 cases ({tested} with a feasible bump), zero violations");
}

#[test]
fn crn_streams_are_deterministic_and_order_free() {
    const CASES: usize = 2000;
    for seed in 0..CASES as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xCAFE + seed);
        let inst = random_instance(&mut rng, true);
        let rep = rng.gen_range(0..100u64);
        let forward = sample_consumption(&inst, seed, rep);
        // re-draw in scrambled order straight from the stream primitive
        let mut scrambled = vec![vec![0.0; inst.horizon]; inst.asset_count()];
        let mut order: Vec<(usize, usize)> = (0..inst.asset_count())
            .flat_map(|a| (0..inst.horizon).map(move |t| (a, t)))
            .collect();
        let k = order.len();
        for i in 0..k {
            order.swap(i, rng.gen_range(0..k));
        }
        for (a, t) in order {
            let d = match &inst.assets[a].consumption {
                Consumption::Stochastic(ds) => &ds[t],
                Consumption::Deterministic(_) => unreachable!(),
            };
            scrambled[a][t] = d.quantile(crn::consumption_u01(seed, rep, a as u64, t as u64)) as f64;
        }
        assert_eq!(forward, scrambled, "seed {seed}: draw order changed the sample");
    }
    println!("[property] CRN determinism: {CASES} cases, bitwise identical across draw orders");
}

#[test]
fn convolution_algebra_holds() {
    const CASES: usize = 4000;
    for seed in 0..CASES as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xD15C + seed);
        let random_dist = |rng: &mut ChaCha8Rng| -> DiscreteDist {
            match rng.gen_range(0..4) {
                0 => DiscreteDist::truncated_poisson(rng.gen_range(0.5..5.0), rng.gen_range(3..9))
                    .unwrap(),
                1 => DiscreteDist::point_mass(rng.gen_range(0..6)),
                2 => {
                    let k = rng.gen_range(2..6);
                    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    DiscreteDist::new(raw.into_iter().map(|p| p / total).collect()).unwrap()
                }
                _ => DiscreteDist::poisson(rng.gen_range(0.2..4.0)).unwrap(),
            }
        };
        let a = random_dist(&mut rng);
        let b = random_dist(&mut rng);
        let c = random_dist(&mut rng);
        let ab = a.convolve(&b);
        let ba = b.convolve(&a);
        for k in 0..=ab.max_support().max(ba.max_support()) {
            assert!((ab.pmf(k) - ba.pmf(k)).abs() < 1e-12, "seed {seed}: commutativity at {k}");
        }
        let ab_c = ab.convolve(&c);
        let a_bc = a.convolve(&b.convolve(&c));
        for k in 0..=ab_c.max_support().max(a_bc.max_support()) {
            assert!((ab_c.pmf(k) - a_bc.pmf(k)).abs() < 1e-12, "seed {seed}: associativity at {k}");
        }
        // loss identity rides along on a random argument
        let q = rng.gen_range(0.0..ab.max_support() as f64 + 2.0);
        let idy = ab.complementary_loss(q) - ab.loss(q) - (q - ab.mean());
        assert!(idy.abs() < 1e-9, "seed {seed}: loss identity off by {idy}");
    }
    println!("[property] convolution algebra: {CASES} cases (commutative, associative, loss identity)");
}
