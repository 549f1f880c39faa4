use crate::stochproc::DiscreteDist;
use std::collections::VecDeque;
use std::fmt;
use thiserror::Error;

/// The cistern's internal node index. File formats label it node 1.
pub const CISTERN: usize = 0;

#[derive(Debug, Error)]
pub enum SiteGraphError {
    #[error("arc ({i}, {j}) references a node outside 0..{n}")]
    NodeOutOfRange { i: usize, j: usize, n: usize },
    #[error("duplicate arc ({i}, {j})")]
    DuplicateArc { i: usize, j: usize },
    #[error("explicit self-loop ({0}, {0}); self-loops are implicit with distance 0")]
    ExplicitSelfLoop(usize),
    #[error("graph needs at least one node")]
    Empty,
}

/// Directed site graph. Every node implicitly carries a zero-distance
/// self-loop; explicit arcs are stored with their travel distance.
#[derive(Debug, Clone)]
pub struct SiteGraph {
    dist: Vec<Vec<Option<f64>>>,
    out: Vec<Vec<usize>>,
}

impl SiteGraph {
    pub fn new(node_count: usize, arcs: &[(usize, usize, f64)]) -> Result<Self, SiteGraphError> {
        if node_count == 0 {
            return Err(SiteGraphError::Empty);
        }
        let mut dist = vec![vec![None; node_count]; node_count];
        let mut out = vec![Vec::new(); node_count];
        for &(i, j, d) in arcs {
            if i >= node_count || j >= node_count {
                return Err(SiteGraphError::NodeOutOfRange { i, j, n: node_count });
            }
            if i == j {
                return Err(SiteGraphError::ExplicitSelfLoop(i));
            }
            if dist[i][j].is_some() {
                return Err(SiteGraphError::DuplicateArc { i, j });
            }
            dist[i][j] = Some(d);
            out[i].push(j);
        }
        for o in &mut out {
            o.sort_unstable();
        }
        Ok(SiteGraph { dist, out })
    }

    pub fn node_count(&self) -> usize {
        self.dist.len()
    }

    /// Travel distance from `i` to `j`: 0 on the implicit self-loop, the arc
    /// distance where an arc exists, `None` otherwise.
    pub fn distance(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            Some(0.0)
        } else {
            self.dist[i][j]
        }
    }

    /// True when the bowser can move from `i` to `j` in one period.
    pub fn can_transit(&self, i: usize, j: usize) -> bool {
        self.distance(i, j).is_some()
    }

    /// Explicit out-neighbors of `i`, ascending, excluding the self-loop.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    /// All explicit arcs `(i, j, distance)` in lexicographic order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.out.iter().enumerate().flat_map(move |(i, outs)| {
            outs.iter().map(move |&j| (i, j, self.dist[i][j].unwrap()))
        })
    }

    /// Strong connectivity in the directed sense: every node reachable from
    /// the cistern and the cistern reachable from every node.
    pub fn strongly_connected(&self) -> bool {
        self.reaches_all(false) && self.reaches_all(true)
    }

    fn reaches_all(&self, reversed: bool) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([CISTERN]);
        seen[CISTERN] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                let arc = if reversed { self.dist[j][i] } else { self.dist[i][j] };
                if arc.is_some() && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }
}

/// Per-period fuel consumption of one asset: a fixed draw per period or a
/// distribution per period.
#[derive(Debug, Clone)]
pub enum Consumption {
    Deterministic(Vec<f64>),
    Stochastic(Vec<DiscreteDist>),
}

/// Per-period location of one asset: a known node per period or a probability
/// mass function over nodes per period.
#[derive(Debug, Clone)]
pub enum Locations {
    Deterministic(Vec<usize>),
    Stochastic(Vec<Vec<(usize, f64)>>),
}

#[derive(Debug, Clone)]
pub struct AssetSpec {
    pub tank_capacity: f64,
    pub initial_level: f64,
    pub locations: Locations,
    pub consumption: Consumption,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub horizon: usize,
    pub graph: SiteGraph,
    pub assets: Vec<AssetSpec>,
    pub bowser_capacity: f64,
    pub bowser_initial: f64,
    pub penalty: f64,
}

impl Instance {
    pub fn asset_count(&self) -> usize {
        self.assets.len()
    }

    /// All consumption deterministic and all locations known.
    pub fn is_deterministic(&self) -> bool {
        self.assets.iter().all(|a| {
            matches!(a.consumption, Consumption::Deterministic(_))
                && matches!(a.locations, Locations::Deterministic(_))
        })
    }

    pub fn has_stochastic_consumption(&self) -> bool {
        self.assets.iter().any(|a| matches!(a.consumption, Consumption::Stochastic(_)))
    }

    pub fn has_deterministic_locations(&self) -> bool {
        self.assets.iter().all(|a| matches!(a.locations, Locations::Deterministic(_)))
    }

    /// Known location of asset `a` in period `t` (0-based period).
    pub fn location_of(&self, a: usize, t: usize) -> Option<usize> {
        match &self.assets[a].locations {
            Locations::Deterministic(l) => Some(l[t]),
            Locations::Stochastic(_) => None,
        }
    }

    /// Deterministic consumption of asset `a` in period `t`, if fixed.
    pub fn consumption_of(&self, a: usize, t: usize) -> Option<f64> {
        match &self.assets[a].consumption {
            Consumption::Deterministic(f) => Some(f[t]),
            Consumption::Stochastic(_) => None,
        }
    }
}

/// A named invariant breach. Violations are data, not failures: an instance
/// that breaks its invariants still parses and prints.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn violation(list: &mut Vec<Violation>, field: impl Into<String>, message: impl Into<String>) {
    list.push(Violation { field: field.into(), message: message.into() });
}

/// Checks every instance invariant; an empty list means the instance is well
/// formed.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut v = Vec::new();
    if inst.horizon < 1 {
        violation(&mut v, "horizon", "must be at least 1 period");
    }
    if inst.assets.is_empty() {
        violation(&mut v, "assets", "at least one asset required");
    }
    if inst.penalty <= 0.0 {
        violation(&mut v, "penalty", format!("must be positive, got {}", inst.penalty));
    }
    if inst.bowser_initial < 0.0 || inst.bowser_initial > inst.bowser_capacity {
        violation(
            &mut v,
            "bowser_initial",
            format!(
                "must lie in [0, {}], got {}",
                inst.bowser_capacity, inst.bowser_initial
            ),
        );
    }
    for (i, j, d) in inst.graph.arcs() {
        if d <= 0.0 {
            violation(
                &mut v,
                "graph.arcs",
                format!("arc ({}, {}) has nonpositive distance {}", i + 1, j + 1, d),
            );
        }
    }
    if !inst.graph.strongly_connected() {
        violation(
            &mut v,
            "graph.connectivity",
            "graph is not strongly connected: every node must reach and be reachable from the cistern",
        );
    }
    let t_len = inst.horizon;
    let n = inst.graph.node_count();
    for (a, asset) in inst.assets.iter().enumerate() {
        let tag = |f: &str| format!("asset[{}].{}", a + 1, f);
        if asset.initial_level < 0.0 || asset.initial_level > asset.tank_capacity {
            violation(
                &mut v,
                tag("initial_level"),
                format!(
                    "must lie in [0, {}], got {}",
                    asset.tank_capacity, asset.initial_level
                ),
            );
        }
        match &asset.locations {
            Locations::Deterministic(locs) => {
                if locs.len() != t_len {
                    violation(
                        &mut v,
                        tag("location"),
                        format!("expected {} periods, got {}", t_len, locs.len()),
                    );
                }
                for (t, &l) in locs.iter().enumerate() {
                    if l >= n {
                        violation(
                            &mut v,
                            tag("location"),
                            format!("period {}: node {} outside 1..={}", t + 1, l + 1, n),
                        );
                    }
                }
            }
            Locations::Stochastic(pmfs) => {
                if pmfs.len() != t_len {
                    violation(
                        &mut v,
                        tag("location_dist"),
                        format!("expected {} periods, got {}", t_len, pmfs.len()),
                    );
                }
                for (t, pmf) in pmfs.iter().enumerate() {
                    let sum: f64 = pmf.iter().map(|&(_, p)| p).sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        violation(
                            &mut v,
                            tag("location_dist"),
                            format!("period {}: probabilities sum to {}", t + 1, sum),
                        );
                    }
                    for &(node, p) in pmf {
                        if node >= n {
                            violation(
                                &mut v,
                                tag("location_dist"),
                                format!("period {}: node {} outside 1..={}", t + 1, node + 1, n),
                            );
                        }
                        if p < 0.0 {
                            violation(
                                &mut v,
                                tag("location_dist"),
                                format!("period {}: negative probability {}", t + 1, p),
                            );
                        }
                    }
                }
            }
        }
        match &asset.consumption {
            Consumption::Deterministic(f) => {
                if f.len() != t_len {
                    violation(
                        &mut v,
                        tag("consumption"),
                        format!("expected {} periods, got {}", t_len, f.len()),
                    );
                }
                for (t, &x) in f.iter().enumerate() {
                    if x < 0.0 {
                        violation(
                            &mut v,
                            tag("consumption"),
                            format!("period {}: negative consumption {}", t + 1, x),
                        );
                    }
                }
            }
            Consumption::Stochastic(ds) => {
                if ds.len() != t_len {
                    violation(
                        &mut v,
                        tag("consumption"),
                        format!("expected {} periods, got {}", t_len, ds.len()),
                    );
                }
            }
        }
    }
    v
}
