//! Batch command-line interface over the bowser toolkit.

use anyhow::{anyhow, bail, Context, Result};
use bowser::benchgen::{
    generate_testbed, render_kpi, run_benchmark, BenchLimits, BenchMethod, TestbedConfig,
};
use bowser::core::{
    check_plan_feasibility, parse_instance, parse_plan, validate_instance, write_instance,
    write_plan, InstanceFile, Plan,
};
use bowser::dbrp::{build_dbrp_model, extract_plan, CutFamilies, DbrpBuildOptions};
use bowser::milp::{solve, write_mps, write_solution_dump, SolveLimits, SolveStatus};
use bowser::sbrp::{solve_here_and_now, SbrpBuildOptions};
use bowser::sdp::{simulate_policy, solve_sdp, SdpOptions, SdpVariant};
use bowser::sim::{evaluate_plan_deterministic, evaluate_plan_monte_carlo};
use bowser::telemetry::{
    bucket_consumption, dedup_snapshots, fit_asset_distribution, parse_aemp_fleet,
};
use clap::{Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Parser)]
#[command(
    name = "bowser",
    about = "Plan, simulate and benchmark on-site refuelling runs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StoMode {
    Hn,
    Rh,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    Fuel,
    Location,
    Det,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file against every model invariant.
    Validate { instance: PathBuf },
    /// Solve the deterministic routing model.
    SolveDet {
        instance: PathBuf,
        /// Add the valid-inequality families.
        #[arg(long)]
        vi: bool,
        /// Solver time limit in seconds (default 600, or BOWSER_TIME_LIMIT_SECS).
        #[arg(long)]
        time_limit: Option<f64>,
        /// Write the model in MPS interchange form and exit.
        #[arg(long)]
        export: Option<PathBuf>,
        /// Write the optimal plan to a file.
        #[arg(long)]
        plan_out: Option<PathBuf>,
        /// Write a variable dump of the solution.
        #[arg(long)]
        solution_out: Option<PathBuf>,
    },
    /// Solve the stochastic model (here-and-now or receding horizon).
    SolveSto {
        instance: PathBuf,
        /// Piecewise-linearization segments.
        #[arg(long, default_value_t = 8)]
        segments: usize,
        #[arg(long, value_enum, default_value_t = StoMode::Hn)]
        mode: StoMode,
        /// Monte Carlo replications.
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        plan_out: Option<PathBuf>,
    },
    /// Solve the exact dynamic program and print the optimal expected cost.
    Sdp {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Variant::Fuel)]
        variant: Variant,
        /// Write the full policy table to a file.
        #[arg(long)]
        policy_out: Option<PathBuf>,
        /// Also simulate the policy with this many replications.
        #[arg(long, default_value_t = 0)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Enumerate a reduced delivery-quantity action set.
        #[arg(long)]
        reduced_actions: bool,
    },
    /// Evaluate a plan file against an instance.
    Simulate {
        instance: PathBuf,
        plan: PathBuf,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Generate a benchmark testbed from a TOML config.
    GenTestbed {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run benchmark methods over a directory of instances and print KPIs.
    Bench {
        dir: PathBuf,
        /// Comma-separated subset of mp,mpvi,hn,rh,sdp.
        #[arg(long, value_delimiter = ',')]
        method: Vec<BenchMethodArg>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 5)]
        segments: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse AEMP XML feeds, bucket consumption, and fit the demand model.
    Fit {
        /// One or more AEMP v1.2 XML files.
        files: Vec<PathBuf>,
        /// Bucket length in minutes.
        #[arg(long, default_value_t = 15)]
        bucket: u32,
        /// Activity windows as bucket index ranges, e.g. 0..96,192..288.
        #[arg(long)]
        window: Option<String>,
    },
}

#[derive(Clone, Copy)]
struct BenchMethodArg(BenchMethod);

impl std::str::FromStr for BenchMethodArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(BenchMethodArg)
    }
}

fn default_time_limit() -> f64 {
    std::env::var("BOWSER_TIME_LIMIT_SECS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(600.0)
}

fn solve_limits(time_limit: Option<f64>) -> SolveLimits {
    SolveLimits {
        time_limit: Duration::from_secs_f64(time_limit.unwrap_or_else(default_time_limit)),
        ..Default::default()
    }
}

fn load_instance(path: &Path) -> Result<InstanceFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let file = parse_instance(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(file)
}

fn route_table(plan: &Plan) -> String {
    let mut s = String::from("t\ttransition\n");
    for (t, (i, j)) in plan.transits().enumerate() {
        s.push_str(&format!("{}\t{} -> {}\n", t + 1, i + 1, j + 1));
    }
    s
}

fn print_estimate(label: &str, est: &bowser::sim::SimEstimate) {
    match est.ci95 {
        Some((lo, hi)) => println!(
            "{label}: mean {:.4} over {} replications, 95% CI ({:.4}, {:.4})",
            est.mean, est.replications, lo, hi
        ),
        None => println!("{label}: mean {:.4} over {} replications", est.mean, est.replications),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Validate { instance } => {
            let file = load_instance(&instance)?;
            let violations = validate_instance(&file.instance);
            if violations.is_empty() {
                println!("ok: instance satisfies all invariants");
                Ok(())
            } else {
                for v in &violations {
                    println!("violation: {v}");
                }
                bail!("{} violation(s)", violations.len());
            }
        }
        Command::SolveDet { instance, vi, time_limit, export, plan_out, solution_out } => {
            let file = load_instance(&instance)?;
            let inst = &file.instance;
            let opts = DbrpBuildOptions {
                with_valid_inequalities: vi,
                families: CutFamilies::all(),
            };
            let model = build_dbrp_model(inst, &opts)?;
            if let Some(path) = export {
                std::fs::write(&path, write_mps(&model)?)?;
                println!("model written to {}", path.display());
                return Ok(());
            }
            let sol = solve(&model, &solve_limits(time_limit))?;
            println!(
                "status {:?}, objective {:.4}, bound {:.4}, gap {:.2e}, {} nodes, {} simplex iterations, {:.2}s",
                sol.status,
                sol.objective,
                sol.best_bound,
                sol.gap,
                sol.stats.nodes,
                sol.stats.simplex_iterations,
                sol.stats.wall_time.as_secs_f64()
            );
            if !matches!(sol.status, SolveStatus::Optimal | SolveStatus::FeasibleGap) {
                bail!("no plan available for status {:?}", sol.status);
            }
            let plan = extract_plan(inst, &model, &sol)?;
            let eval = evaluate_plan_deterministic(inst, &plan)?;
            print!("{}", route_table(&plan));
            println!(
                "travel {:.4}, shortage {:.4} liters, penalty {:.4}, total {:.4}",
                eval.travel_cost,
                eval.total_shortage(),
                eval.shortage_cost,
                eval.total
            );
            if let Some(path) = plan_out {
                std::fs::write(&path, write_plan(&plan))?;
                println!("plan written to {}", path.display());
            }
            if let Some(path) = solution_out {
                std::fs::write(&path, write_solution_dump(&model, &sol.assignment, sol.objective))?;
            }
            Ok(())
        }
        Command::SolveSto { instance, segments, mode, reps, seed, time_limit, plan_out } => {
            let file = load_instance(&instance)?;
            let inst = &file.instance;
            let opts = SbrpBuildOptions { segments, ..Default::default() };
            let limits = solve_limits(time_limit);
            match mode {
                StoMode::Hn => {
                    let outcome = solve_here_and_now(inst, &opts, &limits)?;
                    println!(
                        "status {:?}, {} nodes, {:.2}s",
                        outcome.solution.status,
                        outcome.solution.stats.nodes,
                        outcome.solution.stats.wall_time.as_secs_f64()
                    );
                    print!("{}", route_table(&outcome.plan));
                    println!(
                        "predicted: travel {:.4} + expected shortage {:.4} x penalty {} = {:.4}",
                        outcome.predicted_travel,
                        outcome.predicted_shortage,
                        inst.penalty,
                        outcome.predicted_total
                    );
                    let est = evaluate_plan_monte_carlo(inst, &outcome.plan, reps, seed)?;
                    print_estimate("simulated", &est);
                    if let Some(path) = plan_out {
                        std::fs::write(&path, write_plan(&outcome.plan))?;
                        println!("plan written to {}", path.display());
                    }
                }
                StoMode::Rh => {
                    if plan_out.is_some() {
                        bail!("--plan-out applies to the here-and-now mode; receding-horizon plans differ per scenario");
                    }
                    let est = bowser::benchgen::simulate_rh(inst, &opts, &limits, reps, seed)?;
                    print_estimate("receding-horizon realized", &est);
                }
            }
            Ok(())
        }
        Command::Sdp { instance, variant, policy_out, reps, seed, reduced_actions } => {
            let file = load_instance(&instance)?;
            let inst = &file.instance;
            let variant = match variant {
                Variant::Fuel => SdpVariant::StochasticFuel,
                Variant::Location => SdpVariant::StochasticLocation,
                Variant::Det => SdpVariant::Deterministic,
            };
            let mut opts = SdpOptions::new(variant);
            opts.reduced_actions = reduced_actions;
            let policy = solve_sdp(inst, &opts)?;
            println!(
                "optimal expected cost {:.6} over {} states ({} state-action pairs)",
                policy.optimal_expected_cost(),
                policy.state_count(),
                policy.state_action_count()
            );
            if reps > 0 {
                let est = simulate_policy(inst, &policy, reps, seed)?;
                print_estimate("simulated policy", &est);
            }
            match policy_out {
                Some(path) => {
                    std::fs::write(&path, policy.dump(inst))?;
                    println!("policy written to {}", path.display());
                }
                None => {
                    let dump = policy.dump(inst);
                    if dump.lines().count() <= 60 {
                        print!("{dump}");
                    } else {
                        println!("(policy covers {} states; use --policy-out to dump it)", policy.state_count());
                    }
                }
            }
            Ok(())
        }
        Command::Simulate { instance, plan, reps, seed } => {
            let file = load_instance(&instance)?;
            let inst = &file.instance;
            let plan_text = std::fs::read_to_string(&plan)
                .with_context(|| format!("reading {}", plan.display()))?;
            let plan = parse_plan(&plan_text)?;
            let violations = check_plan_feasibility(inst, &plan)?;
            if !violations.is_empty() {
                for v in &violations {
                    println!("violation: {v}");
                }
                bail!("plan is infeasible for this instance");
            }
            if inst.is_deterministic() {
                let eval = evaluate_plan_deterministic(inst, &plan)?;
                println!(
                    "deterministic evaluation: travel {:.4}, shortage {:.4}, total {:.4}",
                    eval.travel_cost,
                    eval.total_shortage(),
                    eval.total
                );
                println!("mean {:.4}, 95% CI ({:.4}, {:.4})", eval.total, eval.total, eval.total);
            } else {
                let est = evaluate_plan_monte_carlo(inst, &plan, reps, seed)?;
                print_estimate("simulated", &est);
            }
            Ok(())
        }
        Command::GenTestbed { config, out } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = TestbedConfig::from_toml(&text).context("parsing testbed config")?;
            let files = generate_testbed(&cfg)?;
            std::fs::create_dir_all(&out)?;
            for f in &files {
                let name = f.labels.get("id").cloned().unwrap_or_else(|| "instance".into());
                std::fs::write(out.join(format!("{name}.txt")), write_instance(f))?;
            }
            println!("wrote {} instances to {}", files.len(), out.display());
            Ok(())
        }
        Command::Bench { dir, method, jobs, reps, segments, seed, time_limit, out } => {
            if method.is_empty() {
                bail!("--method requires at least one of mp,mpvi,hn,rh,sdp");
            }
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map_or(false, |x| x == "txt"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                bail!("no .txt instances under {}", dir.display());
            }
            let mut files = Vec::with_capacity(paths.len());
            for p in &paths {
                files.push(load_instance(p)?);
            }
            let methods: Vec<BenchMethod> = method.iter().map(|m| m.0).collect();
            let limits = BenchLimits {
                solve: solve_limits(time_limit),
                segments,
                replications: reps,
                seed,
                jobs,
            };
            let report = run_benchmark(&files, &methods, &limits);
            let rendered = render_kpi(&report);
            match out {
                Some(path) => {
                    std::fs::write(&path, rendered)?;
                    println!("KPI tables written to {}", path.display());
                }
                None => print!("{rendered}"),
            }
            Ok(())
        }
        Command::Fit { files, bucket, window } => {
            if files.is_empty() {
                bail!("at least one XML file required");
            }
            let mut snapshots = Vec::new();
            for path in &files {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                snapshots.extend(parse_aemp_fleet(&text)?);
            }
            let snapshots = dedup_snapshots(snapshots);
            let mut by_id: BTreeMap<String, Vec<_>> = BTreeMap::new();
            for s in snapshots {
                by_id.entry(s.equipment_id.clone()).or_default().push(s);
            }
            println!("equipment\tmodel\tlambda\tjump_mean\tlog_likelihood\tbuckets\tnote");
            for (id, snaps) in &by_id {
                let model = snaps[0].model.clone();
                let series = match bucket_consumption(snaps, bucket) {
                    Ok(s) => s,
                    Err(e) => {
                        println!("{id}\t{model}\t-\t-\t-\t-\t{e}");
                        continue;
                    }
                };
                let windows = match &window {
                    Some(spec) => parse_windows(spec, series.values.len())?,
                    None => vec![0..series.values.len()],
                };
                match fit_asset_distribution(&series, &windows) {
                    Ok(report) => {
                        let note = if report.fit.degenerate { "degenerate (all zero)" } else { "" };
                        println!(
                            "{id}\t{model}\t{:.6}\t{:.6}\t{:.3}\t{}\t{note}",
                            report.fit.lambda,
                            report.fit.jump_mean,
                            report.fit.log_likelihood,
                            report.buckets_used
                        );
                    }
                    Err(e) => println!("{id}\t{model}\t-\t-\t-\t-\t{e}"),
                }
            }
            Ok(())
        }
    }
}

fn parse_windows(spec: &str, len: usize) -> Result<Vec<std::ops::Range<usize>>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let (a, b) = part
            .split_once("..")
            .ok_or_else(|| anyhow!("bad window `{part}`, expected START..END"))?;
        let a: usize = a.trim().parse().context("window start")?;
        let b: usize = b.trim().parse().context("window end")?;
        if a >= b {
            bail!("empty window `{part}`");
        }
        out.push(a..b.min(len));
    }
    Ok(out)
}
