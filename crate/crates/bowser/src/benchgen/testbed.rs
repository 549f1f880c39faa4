use super::graphs::{generate_topology, GenError, TopologySpec};
use crate::core::{AssetSpec, Consumption, Instance, InstanceFile, Locations, SiteGraph};
use crate::crn::SeedStream;
use crate::stochproc::DiscreteDist;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One deterministic-bed asset type: tank size plus the fitted
/// compound-Poisson consumption parameters (events per bucket, Poisson jump
/// mean).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AssetTypeSpec {
    pub name: String,
    pub tank: f64,
    pub lambda: f64,
    pub jump_mean: f64,
}

/// Configuration of the deterministic full-factorial bed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DbrpConfig {
    pub seed: u64,
    pub horizon: usize,
    pub bowser_capacities: Vec<f64>,
    /// Initial bowser level as a fraction of capacity.
    pub bowser_initial_fraction: f64,
    pub topologies: Vec<TopologySpec>,
    pub edge_probability: f64,
    pub arc_length_mean: f64,
    pub arc_length_sd: f64,
    pub assets_per_site: Vec<usize>,
    pub penalties: Vec<f64>,
    pub asset_types: Vec<AssetTypeSpec>,
    /// Initial tank levels drawn uniformly in [0, fraction * capacity].
    pub initial_fill_max_fraction: f64,
    /// Random-walk stay probability for asset movement.
    pub stay_probability: f64,
    /// Consumption buckets aggregated into one period.
    pub buckets_per_period: usize,
}

impl Default for DbrpConfig {
    fn default() -> Self {
        DbrpConfig {
            seed: 20160620,
            horizon: 50,
            bowser_capacities: vec![500.0, 1000.0, 2000.0],
            bowser_initial_fraction: 1.0,
            topologies: vec![
                TopologySpec { name: "A".into(), sites: 1, nodes_per_site: 10 },
                TopologySpec { name: "B".into(), sites: 1, nodes_per_site: 20 },
                TopologySpec { name: "C".into(), sites: 1, nodes_per_site: 30 },
                TopologySpec { name: "D".into(), sites: 2, nodes_per_site: 10 },
                TopologySpec { name: "E".into(), sites: 2, nodes_per_site: 15 },
                TopologySpec { name: "F".into(), sites: 3, nodes_per_site: 10 },
            ],
            edge_probability: 0.1,
            arc_length_mean: 100.0,
            arc_length_sd: 20.0,
            assets_per_site: vec![5, 10, 15],
            penalties: vec![100.0, 500.0],
            asset_types: vec![
                AssetTypeSpec { name: "telehandler-540-170".into(), tank: 125.0, lambda: 0.502645, jump_mean: 0.602257 },
                AssetTypeSpec { name: "telehandler-531-70".into(), tank: 146.0, lambda: 0.283428, jump_mean: 0.0516331 },
                AssetTypeSpec { name: "excavator-js130".into(), tank: 235.0, lambda: 1.03892, jump_mean: 1.01056 },
                AssetTypeSpec { name: "mini-excavator-86c-1".into(), tank: 112.0, lambda: 0.476964, jump_mean: 0.960902 },
            ],
            initial_fill_max_fraction: 0.2,
            stay_probability: 0.5,
            buckets_per_period: 1,
        }
    }
}

/// Configuration of the small stochastic bed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SbrpConfig {
    pub seed: u64,
    pub horizon: usize,
    pub bowser_capacity: f64,
    pub bowser_initial: f64,
    pub asset_tank: f64,
    /// Truncation cap of the per-period Poisson consumption.
    pub consumption_cap: usize,
    pub topologies: Vec<TopologySpec>,
    pub edge_probability: f64,
    pub arc_length_mean: f64,
    pub arc_length_sd: f64,
    /// Initial-tank-level configurations (one vector per factor level).
    pub initial_levels: Vec<Vec<f64>>,
    /// Consumption patterns: per level, per asset, per period Poisson mean.
    pub consumption_patterns: Vec<Vec<Vec<f64>>>,
    pub penalties: Vec<f64>,
    pub stay_probability: f64,
}

impl Default for SbrpConfig {
    fn default() -> Self {
        let flat = |v: f64| vec![v; 5];
        SbrpConfig {
            seed: 20160624,
            horizon: 5,
            bowser_capacity: 20.0,
            bowser_initial: 0.0,
            asset_tank: 6.0,
            consumption_cap: 7,
            topologies: (0..6)
                .map(|i| TopologySpec {
                    name: ((b'A' + i as u8) as char).to_string(),
                    sites: 1,
                    nodes_per_site: 5 + i,
                })
                .collect(),
            edge_probability: 0.25,
            arc_length_mean: 100.0,
            arc_length_sd: 20.0,
            initial_levels: vec![
                vec![0.0, 0.0, 0.0],
                vec![3.0, 0.0, 5.0],
                vec![5.0, 5.0, 5.0],
            ],
            consumption_patterns: vec![
                vec![flat(3.0), flat(3.0), flat(3.0)],
                vec![flat(2.0), flat(1.0), flat(3.0)],
                vec![
                    vec![1.0, 2.0, 3.0, 4.0, 5.0],
                    vec![5.0, 4.0, 3.0, 2.0, 1.0],
                    vec![3.0, 3.0, 1.0, 1.0, 2.0],
                ],
            ],
            penalties: vec![50.0, 100.0],
            stay_probability: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TestbedConfig {
    Dbrp(DbrpConfig),
    Sbrp(SbrpConfig),
}

impl TestbedConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Random walk on the graph: stay with the configured probability, otherwise
/// a uniform explicit out-neighbor.
fn random_walk(graph: &SiteGraph, horizon: usize, stay: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut node = rng.gen_range(0..graph.node_count());
    let mut path = Vec::with_capacity(horizon);
    path.push(node);
    for _ in 1..horizon {
        let outs = graph.out_neighbors(node);
        if !outs.is_empty() && !rng.gen_bool(stay) {
            node = outs[rng.gen_range(0..outs.len())];
        }
        path.push(node);
    }
    path
}

fn instance_rng(master: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(SeedStream::new(master).mix(tag).mix(index).next_u64())
}

/// Generates the full factorial bed for a config. Instances carry `label`
/// metadata for the KPI pivots and are ordered deterministically.
pub fn generate_testbed(config: &TestbedConfig) -> Result<Vec<InstanceFile>, GenError> {
    match config {
        TestbedConfig::Dbrp(c) => generate_dbrp(c),
        TestbedConfig::Sbrp(c) => generate_sbrp(c),
    }
}

fn generate_dbrp(c: &DbrpConfig) -> Result<Vec<InstanceFile>, GenError> {
    // the six topologies are fixed across the factorial
    let mut graphs = Vec::with_capacity(c.topologies.len());
    for (ti, spec) in c.topologies.iter().enumerate() {
        let mut rng = instance_rng(c.seed, 1, ti as u64);
        graphs.push(generate_topology(spec, c.edge_probability, c.arc_length_mean, c.arc_length_sd, &mut rng)?);
    }
    let type_dists: Vec<DiscreteDist> = c
        .asset_types
        .iter()
        .map(|t| {
            let jump = DiscreteDist::poisson(t.jump_mean).expect("positive jump mean");
            DiscreteDist::compound_poisson(t.lambda, &jump).expect("positive rate")
        })
        .collect();

    let mut out = Vec::new();
    let mut index = 0u64;
    for (ti, spec) in c.topologies.iter().enumerate() {
        for &cb in &c.bowser_capacities {
            for &per_site in &c.assets_per_site {
                for &penalty in &c.penalties {
                    let mut rng = instance_rng(c.seed, 2, index);
                    let graph = graphs[ti].clone();
                    let total_assets = per_site * spec.sites;
                    let mut assets = Vec::with_capacity(total_assets);
                    for _ in 0..total_assets {
                        let ty = rng.gen_range(0..c.asset_types.len());
                        let spec_t = &c.asset_types[ty];
                        let initial = rng.gen_range(0.0..=c.initial_fill_max_fraction) * spec_t.tank;
                        let path = random_walk(&graph, c.horizon, c.stay_probability, &mut rng);
                        let consumption: Vec<f64> = (0..c.horizon)
                            .map(|_| {
                                (0..c.buckets_per_period)
                                    .map(|_| type_dists[ty].quantile(rng.gen::<f64>()) as f64)
                                    .sum()
                            })
                            .collect();
                        assets.push(AssetSpec {
                            tank_capacity: spec_t.tank,
                            initial_level: initial,
                            locations: Locations::Deterministic(path),
                            consumption: Consumption::Deterministic(consumption),
                        });
                    }
                    let mut labels = BTreeMap::new();
                    labels.insert("topology".into(), spec.name.clone());
                    labels.insert("bowser".into(), format!("{cb}"));
                    labels.insert("assets".into(), format!("{per_site}"));
                    labels.insert("penalty".into(), format!("{penalty}"));
                    labels.insert("id".into(), format!("dbrp{:03}", index));
                    out.push(InstanceFile {
                        instance: Instance {
                            horizon: c.horizon,
                            graph,
                            assets,
                            bowser_capacity: cb,
                            bowser_initial: c.bowser_initial_fraction * cb,
                            penalty,
                        },
                        labels,
                    });
                    index += 1;
                }
            }
        }
    }
    Ok(out)
}

fn generate_sbrp(c: &SbrpConfig) -> Result<Vec<InstanceFile>, GenError> {
    let asset_count = c.initial_levels[0].len();
    let mut graphs = Vec::with_capacity(c.topologies.len());
    let mut walks: Vec<Vec<Vec<usize>>> = Vec::with_capacity(c.topologies.len());
    for (ti, spec) in c.topologies.iter().enumerate() {
        let mut rng = instance_rng(c.seed, 1, ti as u64);
        let graph = generate_topology(spec, c.edge_probability, c.arc_length_mean, c.arc_length_sd, &mut rng)?;
        // asset paths are a property of the topology, shared across the
        // other factors so factor comparisons see the same geometry
        let paths = (0..asset_count)
            .map(|_| random_walk(&graph, c.horizon, c.stay_probability, &mut rng))
            .collect();
        graphs.push(graph);
        walks.push(paths);
    }

    let mut out = Vec::new();
    let mut index = 0u64;
    for (ti, spec) in c.topologies.iter().enumerate() {
        for (itl_i, itl) in c.initial_levels.iter().enumerate() {
            for (cp_i, cp) in c.consumption_patterns.iter().enumerate() {
                for &penalty in &c.penalties {
                    let assets = (0..asset_count)
                        .map(|a| {
                            let dists = cp[a]
                                .iter()
                                .map(|&lam| {
                                    DiscreteDist::truncated_poisson(lam, c.consumption_cap)
                                        .expect("positive rates and cap")
                                })
                                .collect();
                            AssetSpec {
                                tank_capacity: c.asset_tank,
                                initial_level: itl[a],
                                locations: Locations::Deterministic(walks[ti][a].clone()),
                                consumption: Consumption::Stochastic(dists),
                            }
                        })
                        .collect();
                    let mut labels = BTreeMap::new();
                    labels.insert("topology".into(), spec.name.clone());
                    labels.insert("itl".into(), format!("ITL{}", itl_i + 1));
                    labels.insert("cp".into(), format!("CP{}", cp_i + 1));
                    labels.insert("penalty".into(), format!("{penalty}"));
                    labels.insert("id".into(), format!("sbrp{:03}", index));
                    out.push(InstanceFile {
                        instance: Instance {
                            horizon: c.horizon,
                            graph: graphs[ti].clone(),
                            assets,
                            bowser_capacity: c.bowser_capacity,
                            bowser_initial: c.bowser_initial,
                            penalty,
                        },
                        labels,
                    });
                    index += 1;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{validate_instance, write_instance};

    #[test]
    fn deterministic_bed_has_108_valid_instances() {
        let files = generate_testbed(&TestbedConfig::Dbrp(DbrpConfig::default())).unwrap();
        assert_eq!(files.len(), 108);
        for f in &files {
            assert!(validate_instance(&f.instance).is_empty(), "{:?}", f.labels);
            for asset in &f.instance.assets {
                assert!(asset.initial_level <= 0.2 * asset.tank_capacity + 1e-12);
            }
        }
    }

    #[test]
    fn stochastic_bed_has_108_instances_with_the_stated_factors() {
        let files = generate_testbed(&TestbedConfig::Sbrp(SbrpConfig::default())).unwrap();
        assert_eq!(files.len(), 108);
        for f in &files {
            assert!(validate_instance(&f.instance).is_empty());
            for asset in &f.instance.assets {
                if let Consumption::Stochastic(ds) = &asset.consumption {
                    for d in ds {
                        assert_eq!(d.max_support(), 7);
                    }
                }
            }
        }
        // CP3 asset 1 ramps 1..5
        let cp3 = files
            .iter()
            .find(|f| f.labels["cp"] == "CP3" && f.labels["itl"] == "ITL1")
            .unwrap();
        if let Consumption::Stochastic(ds) = &cp3.instance.assets[0].consumption {
            for (t, d) in ds.iter().enumerate() {
                let want = DiscreteDist::truncated_poisson((t + 1) as f64, 7).unwrap();
                assert_eq!(d, &want, "period {} should be truncated Poisson({})", t + 1, t + 1);
            }
        }
    }

    #[test]
    fn generation_is_byte_identical_across_runs() {
        let a = generate_testbed(&TestbedConfig::Sbrp(SbrpConfig::default())).unwrap();
        let b = generate_testbed(&TestbedConfig::Sbrp(SbrpConfig::default())).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(write_instance(x), write_instance(y));
        }
    }

    #[test]
    fn consumption_draws_track_the_type_means() {
        // aggregate across the whole bed: per-type sample means within
        // three standard errors of lambda * jump_mean
        let c = DbrpConfig::default();
        let files = generate_testbed(&TestbedConfig::Dbrp(c.clone())).unwrap();
        let mut by_tank: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new(); // tank -> (sum, sumsq, n)
        for f in &files {
            for asset in &f.instance.assets {
                if let Consumption::Deterministic(vals) = &asset.consumption {
                    let e = by_tank.entry(asset.tank_capacity as u64).or_insert((0.0, 0.0, 0));
                    for &v in vals {
                        e.0 += v;
                        e.1 += v * v;
                        e.2 += 1;
                    }
                }
            }
        }
        for ty in &c.asset_types {
            let (sum, sumsq, n) = by_tank[&(ty.tank as u64)];
            let mean = sum / n as f64;
            let var = sumsq / n as f64 - mean * mean;
            let want = ty.lambda * ty.jump_mean;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - want).abs() < 3.0 * se.max(1e-4),
                "{}: sample mean {mean} vs {want} (se {se})",
                ty.name
            );
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = TestbedConfig::Sbrp(SbrpConfig::default());
        let text = cfg.to_toml();
        let back = TestbedConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn shipped_config_files_match_the_builtin_defaults() {
        let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
        let dbrp = std::fs::read_to_string(format!("{root}/dbrp_testbed.toml")).unwrap();
        assert_eq!(
            TestbedConfig::from_toml(&dbrp).unwrap(),
            TestbedConfig::Dbrp(DbrpConfig::default())
        );
        let sbrp = std::fs::read_to_string(format!("{root}/sbrp_testbed.toml")).unwrap();
        assert_eq!(
            TestbedConfig::from_toml(&sbrp).unwrap(),
            TestbedConfig::Sbrp(SbrpConfig::default())
        );
    }
}
