use crate::core::{SiteGraph, CISTERN};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("no strongly connected graph on {n} nodes after {attempts} draws at edge probability {p}; raise the probability")]
    ConnectivityRetriesExhausted { n: usize, p: f64, attempts: usize },
}

/// One topology factor level: `sites` Bernoulli graphs of `nodes_per_site`
/// nodes each, chained through their gateway nodes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TopologySpec {
    pub name: String,
    pub sites: usize,
    pub nodes_per_site: usize,
}

/// Directed Bernoulli graph: every ordered pair becomes an arc independently
/// with probability `p_edge`; lengths are Normal(mean, sd) clamped below at
/// 1. The draw repeats wholesale until the graph is strongly connected.
pub fn generate_bernoulli_site_graph(
    n: usize,
    p_edge: f64,
    arc_mean: f64,
    arc_sd: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SiteGraph, GenError> {
    assert!(n >= 2 && p_edge > 0.0 && p_edge < 1.0);
    let normal = Normal::new(arc_mean, arc_sd).expect("valid arc length distribution");
    for _ in 0..MAX_ATTEMPTS {
        let mut arcs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen_bool(p_edge) {
                    let d = normal.sample(rng).max(1.0);
                    arcs.push((i, j, d));
                }
            }
        }
        let graph = SiteGraph::new(n, &arcs).expect("structurally valid by construction");
        if graph.strongly_connected() {
            return Ok(graph);
        }
    }
    Err(GenError::ConnectivityRetriesExhausted { n, p: p_edge, attempts: MAX_ATTEMPTS })
}

/// Multi-site topology: independent site graphs with bidirectional
/// gateway-to-gateway links between consecutive sites. The cistern is site
/// one's gateway.
pub fn generate_topology(
    spec: &TopologySpec,
    p_edge: f64,
    arc_mean: f64,
    arc_sd: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SiteGraph, GenError> {
    let n_site = spec.nodes_per_site;
    let total = spec.sites * n_site;
    let normal = Normal::new(arc_mean, arc_sd).expect("valid arc length distribution");
    let mut arcs = Vec::new();
    for s in 0..spec.sites {
        let site = generate_bernoulli_site_graph(n_site, p_edge, arc_mean, arc_sd, rng)?;
        let off = s * n_site;
        for (i, j, d) in site.arcs() {
            arcs.push((off + i, off + j, d));
        }
        if s > 0 {
            let prev_gate = (s - 1) * n_site + CISTERN;
            let gate = off + CISTERN;
            let d1 = normal.sample(rng).max(1.0);
            let d2 = normal.sample(rng).max(1.0);
            arcs.push((prev_gate, gate, d1));
            arcs.push((gate, prev_gate, d2));
        }
    }
    Ok(SiteGraph::new(total, &arcs).expect("structurally valid by construction"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn same_seed_same_graph() {
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            generate_bernoulli_site_graph(10, 0.1, 100.0, 20.0, &mut rng).unwrap()
        };
        let a = draw();
        let b = draw();
        let arcs_a: Vec<_> = a.arcs().collect();
        let arcs_b: Vec<_> = b.arcs().collect();
        assert_eq!(arcs_a, arcs_b);
    }

    #[test]
    fn generated_graphs_are_strongly_connected() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = generate_bernoulli_site_graph(8, 0.3, 100.0, 20.0, &mut rng).unwrap();
            assert!(g.strongly_connected());
        }
    }

    #[test]
    fn arc_count_matches_binomial_statistics() {
        // conditioning on connectivity is negligible at this density, so the
        // total arc count over many seeds behaves like a binomial sample
        let n = 12;
        let p = 0.5;
        let seeds = 200u64;
        let mut total = 0usize;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let g = generate_bernoulli_site_graph(n, p, 100.0, 20.0, &mut rng).unwrap();
            total += g.arcs().count();
        }
        let trials = (seeds as usize * n * (n - 1)) as f64;
        let expect = trials * p;
        let sd = (trials * p * (1.0 - p)).sqrt();
        assert!(
            ((total as f64) - expect).abs() < 3.0 * sd,
            "{total} arcs vs expected {expect} (sd {sd})"
        );
    }

    #[test]
    fn multi_site_topologies_connect_through_gateways() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = TopologySpec { name: "D".into(), sites: 3, nodes_per_site: 6 };
        let g = generate_topology(&spec, 0.3, 100.0, 20.0, &mut rng).unwrap();
        assert_eq!(g.node_count(), 18);
        assert!(g.strongly_connected());
    }

    #[test]
    fn hopeless_density_reports_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let err = generate_bernoulli_site_graph(40, 0.01, 100.0, 20.0, &mut rng).unwrap_err();
        assert!(err.to_string().contains("raise the probability"));
    }
}
