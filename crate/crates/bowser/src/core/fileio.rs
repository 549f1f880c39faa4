use super::instance::{AssetSpec, Consumption, Instance, Locations, SiteGraph};
use super::plan::Plan;
use crate::stochproc::DiscreteDist;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

/// A parsed instance file: the instance plus any `label` metadata lines
/// (used by the benchmark harness for pivot groupings).
#[derive(Debug, Clone)]
pub struct InstanceFile {
    pub instance: Instance,
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, msg: msg.into() })
}

struct AssetBuilder {
    start_line: usize,
    tank: Option<(f64, f64)>,
    locations: Option<Locations>,
    consumption: Option<Consumption>,
}

enum Pending {
    None,
    DistanceRows { collected: Vec<Vec<Option<f64>>>, want: usize },
    PmfRows { collected: Vec<DiscreteDist>, want: usize },
    LocationDistRows { collected: Vec<Vec<(usize, f64)>>, want: usize },
}

/// Parses the plain-text instance grammar.
///
/// The format is line oriented; `#` starts a comment. Header statements:
/// `horizon T`, `nodes N`, `penalty p`, `bowser CAPACITY INITIAL`, optional
/// `cistern K` (the loader relabels node K to node 1), optional
/// `label KEY VALUE`. A `distances` statement is followed by exactly N rows of
/// N whitespace-separated cells, `.` marking a forbidden transit. Each `asset`
/// statement opens a block with `tank CAPACITY INITIAL`, one location form
/// (`location n1 .. nT`, or `location-dist` followed by T rows
/// `p node:prob ...`), and one consumption form (`consumption det v1 .. vT`,
/// `consumption poisson m1 .. mT`, `consumption tpoisson CAP m1 .. mT`, or
/// `consumption pmf` followed by T rows `p p0 p1 ...`).
pub fn parse_instance(text: &str) -> Result<InstanceFile, ParseError> {
    let mut horizon: Option<usize> = None;
    let mut nodes: Option<usize> = None;
    let mut penalty: Option<f64> = None;
    let mut bowser: Option<(f64, f64)> = None;
    let mut cistern_label: usize = 1;
    let mut labels = BTreeMap::new();
    let mut matrix: Option<Vec<Vec<Option<f64>>>> = None;
    let mut assets: Vec<AssetBuilder> = Vec::new();
    let mut pending = Pending::None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();

        match &mut pending {
            Pending::DistanceRows { collected, want } => {
                if tokens.len() != *want {
                    return err(
                        lineno,
                        format!("distance row has {} cells, expected {}", tokens.len(), want),
                    );
                }
                let mut row = Vec::with_capacity(*want);
                for tok in &tokens {
                    if *tok == "." {
                        row.push(None);
                    } else {
                        let d: f64 = tok
                            .parse()
                            .map_err(|_| ParseError { line: lineno, msg: format!("bad distance `{tok}`") })?;
                        row.push(Some(d));
                    }
                }
                collected.push(row);
                if collected.len() == *want {
                    matrix = Some(std::mem::take(collected));
                    pending = Pending::None;
                }
                continue;
            }
            Pending::PmfRows { collected, want } => {
                if tokens.first() != Some(&"p") {
                    return err(lineno, "expected a `p ...` probability row");
                }
                let probs: Result<Vec<f64>, _> = tokens[1..].iter().map(|t| t.parse()).collect();
                let probs = probs.map_err(|_| ParseError { line: lineno, msg: "bad probability".into() })?;
                let dist = DiscreteDist::new(probs)
                    .map_err(|e| ParseError { line: lineno, msg: e.to_string() })?;
                collected.push(dist);
                if collected.len() == *want {
                    let ds = std::mem::take(collected);
                    assets.last_mut().unwrap().consumption = Some(Consumption::Stochastic(ds));
                    pending = Pending::None;
                }
                continue;
            }
            Pending::LocationDistRows { collected, want } => {
                if tokens.first() != Some(&"p") {
                    return err(lineno, "expected a `p node:prob ...` row");
                }
                let mut pmf = Vec::new();
                for tok in &tokens[1..] {
                    let (node, prob) = tok
                        .split_once(':')
                        .ok_or_else(|| ParseError { line: lineno, msg: format!("bad node:prob pair `{tok}`") })?;
                    let node: usize = node
                        .parse()
                        .map_err(|_| ParseError { line: lineno, msg: format!("bad node `{node}`") })?;
                    let prob: f64 = prob
                        .parse()
                        .map_err(|_| ParseError { line: lineno, msg: format!("bad probability `{prob}`") })?;
                    if node < 1 {
                        return err(lineno, "nodes are 1-based");
                    }
                    pmf.push((node - 1, prob));
                }
                collected.push(pmf);
                if collected.len() == *want {
                    let pmfs = std::mem::take(collected);
                    assets.last_mut().unwrap().locations = Some(Locations::Stochastic(pmfs));
                    pending = Pending::None;
                }
                continue;
            }
            Pending::None => {}
        }

        let horizon_needed = |h: &Option<usize>| {
            h.ok_or(ParseError { line: lineno, msg: "horizon must come first".into() })
        };
        match tokens[0] {
            "horizon" => horizon = Some(parse_one(&tokens, lineno)?),
            "nodes" => nodes = Some(parse_one(&tokens, lineno)?),
            "penalty" => penalty = Some(parse_one(&tokens, lineno)?),
            "cistern" => cistern_label = parse_one(&tokens, lineno)?,
            "bowser" => {
                if tokens.len() != 3 {
                    return err(lineno, "expected `bowser CAPACITY INITIAL`");
                }
                let cap = parse_num(tokens[1], lineno)?;
                let init = parse_num(tokens[2], lineno)?;
                bowser = Some((cap, init));
            }
            "label" => {
                if tokens.len() < 3 {
                    return err(lineno, "expected `label KEY VALUE`");
                }
                labels.insert(tokens[1].to_string(), tokens[2..].join(" "));
            }
            "distances" => {
                let n = nodes.ok_or(ParseError { line: lineno, msg: "nodes must come before distances".into() })?;
                pending = Pending::DistanceRows { collected: Vec::with_capacity(n), want: n };
            }
            "asset" => assets.push(AssetBuilder {
                start_line: lineno,
                tank: None,
                locations: None,
                consumption: None,
            }),
            "tank" => {
                if tokens.len() != 3 {
                    return err(lineno, "expected `tank CAPACITY INITIAL`");
                }
                let asset = assets.last_mut().ok_or(ParseError { line: lineno, msg: "tank outside an asset block".into() })?;
                asset.tank = Some((parse_num(tokens[1], lineno)?, parse_num(tokens[2], lineno)?));
            }
            "location" => {
                let t = horizon_needed(&horizon)?;
                let asset = assets.last_mut().ok_or(ParseError { line: lineno, msg: "location outside an asset block".into() })?;
                if tokens.len() != t + 1 {
                    return err(lineno, format!("expected {} locations, got {}", t, tokens.len() - 1));
                }
                let mut locs = Vec::with_capacity(t);
                for tok in &tokens[1..] {
                    let node: usize = tok
                        .parse()
                        .map_err(|_| ParseError { line: lineno, msg: format!("bad node `{tok}`") })?;
                    if node < 1 {
                        return err(lineno, "nodes are 1-based");
                    }
                    locs.push(node - 1);
                }
                asset.locations = Some(Locations::Deterministic(locs));
            }
            "location-dist" => {
                let t = horizon_needed(&horizon)?;
                if assets.is_empty() {
                    return err(lineno, "location-dist outside an asset block");
                }
                pending = Pending::LocationDistRows { collected: Vec::with_capacity(t), want: t };
            }
            "consumption" => {
                let t = horizon_needed(&horizon)?;
                if assets.is_empty() {
                    return err(lineno, "consumption outside an asset block");
                }
                if tokens.len() < 2 {
                    return err(lineno, "expected a consumption form");
                }
                match tokens[1] {
                    "det" => {
                        let vals = parse_nums(&tokens[2..], lineno)?;
                        if vals.len() != t {
                            return err(lineno, format!("expected {} values, got {}", t, vals.len()));
                        }
                        assets.last_mut().unwrap().consumption = Some(Consumption::Deterministic(vals));
                    }
                    "poisson" => {
                        let means = parse_nums(&tokens[2..], lineno)?;
                        if means.len() != t {
                            return err(lineno, format!("expected {} means, got {}", t, means.len()));
                        }
                        let mut ds = Vec::with_capacity(t);
                        for m in means {
                            ds.push(
                                DiscreteDist::poisson(m)
                                    .map_err(|e| ParseError { line: lineno, msg: e.to_string() })?,
                            );
                        }
                        assets.last_mut().unwrap().consumption = Some(Consumption::Stochastic(ds));
                    }
                    "tpoisson" => {
                        if tokens.len() < 3 {
                            return err(lineno, "expected `consumption tpoisson CAP m1 .. mT`");
                        }
                        let cap: usize = tokens[2]
                            .parse()
                            .map_err(|_| ParseError { line: lineno, msg: format!("bad cap `{}`", tokens[2]) })?;
                        let means = parse_nums(&tokens[3..], lineno)?;
                        if means.len() != t {
                            return err(lineno, format!("expected {} means, got {}", t, means.len()));
                        }
                        let mut ds = Vec::with_capacity(t);
                        for m in means {
                            ds.push(
                                DiscreteDist::truncated_poisson(m, cap)
                                    .map_err(|e| ParseError { line: lineno, msg: e.to_string() })?,
                            );
                        }
                        assets.last_mut().unwrap().consumption = Some(Consumption::Stochastic(ds));
                    }
                    "pmf" => {
                        pending = Pending::PmfRows { collected: Vec::with_capacity(t), want: t };
                    }
                    other => return err(lineno, format!("unknown consumption form `{other}`")),
                }
            }
            other => return err(lineno, format!("unknown statement `{other}`")),
        }
    }

    if !matches!(pending, Pending::None) {
        return err(text.lines().count(), "file ended inside a multi-row block");
    }
    let horizon = horizon.ok_or(ParseError { line: 0, msg: "missing horizon".into() })?;
    let n = nodes.ok_or(ParseError { line: 0, msg: "missing nodes".into() })?;
    let penalty = penalty.ok_or(ParseError { line: 0, msg: "missing penalty".into() })?;
    let (bowser_capacity, bowser_initial) =
        bowser.ok_or(ParseError { line: 0, msg: "missing bowser statement".into() })?;
    let matrix = matrix.ok_or(ParseError { line: 0, msg: "missing distances".into() })?;
    if cistern_label < 1 || cistern_label > n {
        return err(0, format!("cistern {} outside 1..={}", cistern_label, n));
    }

    // normalize: relabel so the declared cistern becomes internal node 0
    let c = cistern_label - 1;
    let relabel = |x: usize| -> usize {
        if x == c {
            0
        } else if x == 0 {
            c
        } else {
            x
        }
    };

    let mut arcs = Vec::new();
    for (i, row) in matrix.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if let Some(d) = cell {
                if i == j {
                    if *d != 0.0 {
                        return err(0, format!("diagonal cell ({},{}) must be empty or 0", i + 1, j + 1));
                    }
                    continue;
                }
                arcs.push((relabel(i), relabel(j), *d));
            }
        }
    }
    arcs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let graph = SiteGraph::new(n, &arcs).map_err(|e| ParseError { line: 0, msg: e.to_string() })?;

    let mut specs = Vec::with_capacity(assets.len());
    for b in assets {
        let (tank_capacity, initial_level) =
            b.tank.ok_or(ParseError { line: b.start_line, msg: "asset missing tank".into() })?;
        let locations = b
            .locations
            .ok_or(ParseError { line: b.start_line, msg: "asset missing location data".into() })?;
        let locations = match locations {
            Locations::Deterministic(l) => {
                Locations::Deterministic(l.into_iter().map(relabel).collect())
            }
            Locations::Stochastic(pmfs) => Locations::Stochastic(
                pmfs.into_iter()
                    .map(|pmf| pmf.into_iter().map(|(node, p)| (relabel(node), p)).collect())
                    .collect(),
            ),
        };
        let consumption = b
            .consumption
            .ok_or(ParseError { line: b.start_line, msg: "asset missing consumption data".into() })?;
        specs.push(AssetSpec { tank_capacity, initial_level, locations, consumption });
    }

    Ok(InstanceFile {
        instance: Instance {
            horizon,
            graph,
            assets: specs,
            bowser_capacity,
            bowser_initial,
            penalty,
        },
        labels,
    })
}

fn parse_num(tok: &str, line: usize) -> Result<f64, ParseError> {
    tok.parse().map_err(|_| ParseError { line, msg: format!("bad number `{tok}`") })
}

fn parse_nums(toks: &[&str], line: usize) -> Result<Vec<f64>, ParseError> {
    toks.iter().map(|t| parse_num(t, line)).collect()
}

fn parse_one<T: std::str::FromStr>(tokens: &[&str], line: usize) -> Result<T, ParseError> {
    if tokens.len() != 2 {
        return err(line, format!("expected `{} VALUE`", tokens[0]));
    }
    tokens[1]
        .parse()
        .map_err(|_| ParseError { line, msg: format!("bad value `{}`", tokens[1]) })
}

/// Canonical text form of an instance; parsing it back reproduces the same
/// data. Repeated writes of the same instance are byte-identical.
pub fn write_instance(file: &InstanceFile) -> String {
    let inst = &file.instance;
    let mut s = String::new();
    let _ = writeln!(s, "horizon {}", inst.horizon);
    let n = inst.graph.node_count();
    let _ = writeln!(s, "nodes {}", n);
    let _ = writeln!(s, "penalty {}", inst.penalty);
    let _ = writeln!(s, "bowser {} {}", inst.bowser_capacity, inst.bowser_initial);
    for (k, v) in &file.labels {
        let _ = writeln!(s, "label {} {}", k, v);
    }
    let _ = writeln!(s, "distances");
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| {
                if i == j {
                    ".".to_string()
                } else {
                    match inst.graph.distance(i, j) {
                        Some(d) => format!("{}", d),
                        None => ".".to_string(),
                    }
                }
            })
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    for asset in &inst.assets {
        let _ = writeln!(s, "asset");
        let _ = writeln!(s, "tank {} {}", asset.tank_capacity, asset.initial_level);
        match &asset.locations {
            Locations::Deterministic(locs) => {
                let row: Vec<String> = locs.iter().map(|&l| format!("{}", l + 1)).collect();
                let _ = writeln!(s, "location {}", row.join(" "));
            }
            Locations::Stochastic(pmfs) => {
                let _ = writeln!(s, "location-dist");
                for pmf in pmfs {
                    let row: Vec<String> =
                        pmf.iter().map(|&(node, p)| format!("{}:{}", node + 1, p)).collect();
                    let _ = writeln!(s, "p {}", row.join(" "));
                }
            }
        }
        match &asset.consumption {
            Consumption::Deterministic(vals) => {
                let row: Vec<String> = vals.iter().map(|v| format!("{}", v)).collect();
                let _ = writeln!(s, "consumption det {}", row.join(" "));
            }
            Consumption::Stochastic(ds) => {
                let _ = writeln!(s, "consumption pmf");
                for d in ds {
                    let row: Vec<String> = d.pmf_slice().iter().map(|p| format!("{}", p)).collect();
                    let _ = writeln!(s, "p {}", row.join(" "));
                }
            }
        }
    }
    s
}

/// Parses a plan file: a `route` row, a `refill` row, and one `refuel` row per
/// asset, all 1-based nodes and plain numbers.
pub fn parse_plan(text: &str) -> Result<Plan, ParseError> {
    let mut route = None;
    let mut refills = None;
    let mut refuels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "route" => {
                let mut nodes = Vec::new();
                for tok in &tokens[1..] {
                    let v: usize = tok
                        .parse()
                        .map_err(|_| ParseError { line: lineno, msg: format!("bad node `{tok}`") })?;
                    if v < 1 {
                        return err(lineno, "nodes are 1-based");
                    }
                    nodes.push(v - 1);
                }
                route = Some(nodes);
            }
            "refill" => refills = Some(parse_nums(&tokens[1..], lineno)?),
            "refuel" => refuels.push(parse_nums(&tokens[1..], lineno)?),
            other => return err(lineno, format!("unknown plan statement `{other}`")),
        }
    }
    Ok(Plan {
        route: route.ok_or(ParseError { line: 0, msg: "missing route".into() })?,
        refills: refills.ok_or(ParseError { line: 0, msg: "missing refill row".into() })?,
        refuels,
    })
}

pub fn write_plan(plan: &Plan) -> String {
    let mut s = String::new();
    let route: Vec<String> = plan.route.iter().map(|&n| format!("{}", n + 1)).collect();
    let _ = writeln!(s, "route {}", route.join(" "));
    let refills: Vec<String> = plan.refills.iter().map(|v| format!("{}", v)).collect();
    let _ = writeln!(s, "refill {}", refills.join(" "));
    for row in &plan.refuels {
        let vals: Vec<String> = row.iter().map(|v| format!("{}", v)).collect();
        let _ = writeln!(s, "refuel {}", vals.join(" "));
    }
    s
}
