use crate::core::InstanceFile;
use crate::milp::{solve, SolveLimits, SolveStatus};
use crate::sbrp::{solve_here_and_now, RhEvaluator, SbrpBuildOptions};
use crate::sdp::{simulate_policy, solve_sdp, SdpOptions, SdpVariant};
use crate::sim::{evaluate_plan_monte_carlo, sample_consumption, summarize};
use crate::{dbrp, sim};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMethod {
    /// Deterministic model, plain.
    Mp,
    /// Deterministic model with all valid-inequality families.
    Mpvi,
    /// Stochastic model, here-and-now plan, simulated.
    Hn,
    /// Stochastic model under the receding-horizon protocol.
    Rh,
    /// Dynamic-programming optimum and its simulated policy.
    Sdp,
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BenchMethod::Mp => "mp",
            BenchMethod::Mpvi => "mpvi",
            BenchMethod::Hn => "hn",
            BenchMethod::Rh => "rh",
            BenchMethod::Sdp => "sdp",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for BenchMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mp" => Ok(BenchMethod::Mp),
            "mpvi" => Ok(BenchMethod::Mpvi),
            "hn" => Ok(BenchMethod::Hn),
            "rh" => Ok(BenchMethod::Rh),
            "sdp" => Ok(BenchMethod::Sdp),
            other => Err(format!("unknown method `{other}` (mp|mpvi|hn|rh|sdp)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchLimits {
    pub solve: SolveLimits,
    pub segments: usize,
    pub replications: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for BenchLimits {
    fn default() -> Self {
        BenchLimits {
            solve: SolveLimits::default(),
            segments: 5,
            replications: 500,
            seed: 42,
            jobs: 1,
        }
    }
}

/// One method's outcome on one instance. Timeouts and incompatibilities are
/// recorded, never escalated.
#[derive(Debug, Clone, Default)]
pub struct MethodResult {
    pub status: String,
    pub time_s: f64,
    pub nodes: Option<u64>,
    pub iterations: Option<u64>,
    pub objective: Option<f64>,
    pub solver_gap: Option<f64>,
    /// Model-predicted expected total (stochastic methods).
    pub predicted: Option<f64>,
    /// Simulated expected total.
    pub simulated: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct InstanceRow {
    pub id: String,
    pub labels: BTreeMap<String, String>,
    pub results: BTreeMap<String, MethodResult>,
}

impl InstanceRow {
    /// Relative difference between model prediction and simulation.
    pub fn linearization_gap(&self) -> Option<f64> {
        let hn = self.results.get("hn")?;
        Some((hn.predicted? - hn.simulated?).abs() / hn.simulated?)
    }

    /// Relative excess of a heuristic's simulated cost over the simulated
    /// dynamic-programming optimum.
    pub fn optimality_gap(&self, method: &str) -> Option<f64> {
        let h = self.results.get(method)?.simulated?;
        let opt = self.results.get("sdp")?.simulated?;
        Some((h - opt) / opt)
    }
}

#[derive(Debug, Clone)]
pub struct KpiReport {
    pub methods: Vec<BenchMethod>,
    pub rows: Vec<InstanceRow>,
}

fn run_one(file: &InstanceFile, methods: &[BenchMethod], limits: &BenchLimits) -> InstanceRow {
    let inst = &file.instance;
    let mut results = BTreeMap::new();
    for &method in methods {
        let t0 = Instant::now();
        let mut r = MethodResult::default();
        match method {
            BenchMethod::Mp | BenchMethod::Mpvi => {
                let opts = dbrp::DbrpBuildOptions {
                    with_valid_inequalities: method == BenchMethod::Mpvi,
                    families: dbrp::CutFamilies::all(),
                };
                match dbrp::build_dbrp_model(inst, &opts) {
                    Ok(model) => match solve(&model, &limits.solve) {
                        Ok(sol) => {
                            r.status = format!("{:?}", sol.status);
                            r.nodes = Some(sol.stats.nodes);
                            r.iterations = Some(sol.stats.simplex_iterations);
                            if matches!(sol.status, SolveStatus::Optimal | SolveStatus::FeasibleGap) {
                                r.objective = Some(sol.objective);
                                r.solver_gap = Some(sol.gap);
                            }
                        }
                        Err(e) => r.status = format!("error: {e}"),
                    },
                    Err(e) => r.status = format!("error: {e}"),
                }
            }
            BenchMethod::Hn => {
                let opts = SbrpBuildOptions { segments: limits.segments, ..Default::default() };
                match solve_here_and_now(inst, &opts, &limits.solve) {
                    Ok(outcome) => {
                        r.status = format!("{:?}", outcome.solution.status);
                        r.nodes = Some(outcome.solution.stats.nodes);
                        r.iterations = Some(outcome.solution.stats.simplex_iterations);
                        r.objective = Some(outcome.solution.objective);
                        r.solver_gap = Some(outcome.solution.gap);
                        r.predicted = Some(outcome.predicted_total);
                        match evaluate_plan_monte_carlo(
                            inst,
                            &outcome.plan,
                            limits.replications,
                            limits.seed,
                        ) {
                            Ok(est) => r.simulated = Some(est.mean),
                            Err(e) => r.status = format!("error: {e}"),
                        }
                    }
                    Err(e) => r.status = format!("error: {e}"),
                }
            }
            BenchMethod::Rh => {
                let opts = SbrpBuildOptions { segments: limits.segments, ..Default::default() };
                let mut evaluator = RhEvaluator::new(inst, opts, limits.solve);
                let mut costs = Vec::with_capacity(limits.replications);
                let mut failed = None;
                for rep in 0..limits.replications {
                    let scenario = sample_consumption(inst, limits.seed, rep as u64);
                    match evaluator.run(&scenario) {
                        Ok(out) => costs.push(out.realized_cost),
                        Err(e) => {
                            failed = Some(format!("error: {e}"));
                            break;
                        }
                    }
                }
                match failed {
                    Some(msg) => r.status = msg,
                    None => {
                        let est = summarize(&costs);
                        r.status = "Simulated".into();
                        r.simulated = Some(est.mean);
                    }
                }
            }
            BenchMethod::Sdp => {
                match solve_sdp(inst, &SdpOptions::new(SdpVariant::StochasticFuel)) {
                    Ok(policy) => {
                        r.status = "Optimal".into();
                        r.objective = Some(policy.optimal_expected_cost());
                        r.predicted = Some(policy.optimal_expected_cost());
                        match simulate_policy(inst, &policy, limits.replications, limits.seed) {
                            Ok(est) => r.simulated = Some(est.mean),
                            Err(e) => r.status = format!("error: {e}"),
                        }
                    }
                    Err(e) => r.status = format!("error: {e}"),
                }
            }
        }
        r.time_s = t0.elapsed().as_secs_f64();
        results.insert(method.to_string(), r);
    }
    let id = file.labels.get("id").cloned().unwrap_or_else(|| "instance".into());
    InstanceRow { id, labels: file.labels.clone(), results }
}

/// Runs every method on every instance (optionally in parallel over
/// instances) and returns the per-instance rows. Row order follows the input
/// order regardless of parallelism.
pub fn run_benchmark(
    files: &[InstanceFile],
    methods: &[BenchMethod],
    limits: &BenchLimits,
) -> KpiReport {
    let rows: Vec<InstanceRow> = if limits.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(limits.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| files.par_iter().map(|f| run_one(f, methods, limits)).collect())
    } else {
        files.iter().map(|f| run_one(f, methods, limits)).collect()
    };
    KpiReport { methods: methods.to_vec(), rows }
}

const PIVOT_KEYS: [&str; 6] = ["topology", "bowser", "assets", "itl", "cp", "penalty"];

struct Column {
    header: String,
    values: Vec<Option<f64>>,
}

fn numeric_columns(report: &KpiReport) -> Vec<Column> {
    let mut cols = Vec::new();
    for method in &report.methods {
        let m = method.to_string();
        let get = |f: &dyn Fn(&MethodResult) -> Option<f64>| -> Vec<Option<f64>> {
            report.rows.iter().map(|r| r.results.get(&m).and_then(|x| f(x))).collect()
        };
        cols.push(Column { header: format!("{m}_time_s"), values: get(&|x| Some(x.time_s)) });
        cols.push(Column { header: format!("{m}_nodes"), values: get(&|x| x.nodes.map(|v| v as f64)) });
        cols.push(Column {
            header: format!("{m}_iterations"),
            values: get(&|x| x.iterations.map(|v| v as f64)),
        });
        cols.push(Column { header: format!("{m}_objective"), values: get(&|x| x.objective) });
        cols.push(Column { header: format!("{m}_gap"), values: get(&|x| x.solver_gap) });
        if matches!(method, BenchMethod::Hn | BenchMethod::Rh | BenchMethod::Sdp) {
            cols.push(Column { header: format!("{m}_predicted"), values: get(&|x| x.predicted) });
            cols.push(Column { header: format!("{m}_simulated"), values: get(&|x| x.simulated) });
        }
    }
    if report.methods.contains(&BenchMethod::Hn) {
        cols.push(Column {
            header: "linearization_gap".into(),
            values: report.rows.iter().map(|r| r.linearization_gap()).collect(),
        });
    }
    if report.methods.contains(&BenchMethod::Sdp) {
        for h in ["hn", "rh"] {
            if report.methods.iter().any(|m| m.to_string() == h) {
                cols.push(Column {
                    header: format!("{h}_optimality_gap"),
                    values: report.rows.iter().map(|r| r.optimality_gap(h)).collect(),
                });
            }
        }
    }
    cols
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "-".into(),
    }
}

/// Renders the per-instance table and the pivot sections (one block per
/// grouping key present in the labels, plus an overall row) as
/// tab-separated text.
pub fn render_kpi(report: &KpiReport) -> String {
    use std::fmt::Write as _;
    let cols = numeric_columns(report);
    let mut s = String::new();

    let _ = writeln!(
        s,
        "# per-instance\ninstance\t{}",
        cols.iter().map(|c| c.header.clone()).collect::<Vec<_>>().join("\t")
    );
    for (i, row) in report.rows.iter().enumerate() {
        let vals: Vec<String> = cols.iter().map(|c| fmt_opt(c.values[i])).collect();
        let _ = writeln!(s, "{}\t{}", row.id, vals.join("\t"));
    }

    for key in PIVOT_KEYS {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, row) in report.rows.iter().enumerate() {
            if let Some(v) = row.labels.get(key) {
                groups.entry(v).or_default().push(i);
            }
        }
        if groups.is_empty() {
            continue;
        }
        let _ = writeln!(
            s,
            "\n# pivot: {key}\n{key}\t{}",
            cols.iter().map(|c| c.header.clone()).collect::<Vec<_>>().join("\t")
        );
        for (value, idxs) in &groups {
            let avgs: Vec<String> = cols.iter().map(|c| fmt_opt(mean_of(&c.values, idxs))).collect();
            let _ = writeln!(s, "{value}\t{}", avgs.join("\t"));
        }
    }

    let all: Vec<usize> = (0..report.rows.len()).collect();
    let _ = writeln!(
        s,
        "\n# overall\noverall\t{}",
        cols.iter()
            .map(|c| fmt_opt(mean_of(&c.values, &all)))
            .collect::<Vec<_>>()
            .join("\t")
    );
    s
}

fn mean_of(values: &[Option<f64>], idxs: &[usize]) -> Option<f64> {
    let picked: Vec<f64> = idxs.iter().filter_map(|&i| values[i]).collect();
    if picked.is_empty() {
        None
    } else {
        Some(picked.iter().sum::<f64>() / picked.len() as f64)
    }
}

/// Mean realized receding-horizon cost over common-random-number scenarios;
/// shares the scenario streams with plan and policy simulation.
pub fn simulate_rh(
    inst: &crate::core::Instance,
    opts: &SbrpBuildOptions,
    limits: &SolveLimits,
    replications: usize,
    seed: u64,
) -> Result<sim::SimEstimate, crate::sbrp::SbrpError> {
    let mut evaluator = RhEvaluator::new(inst, *opts, *limits);
    let mut costs = Vec::with_capacity(replications);
    for rep in 0..replications {
        let scenario = sample_consumption(inst, seed, rep as u64);
        costs.push(evaluator.run(&scenario)?.realized_cost);
    }
    Ok(summarize(&costs))
}
