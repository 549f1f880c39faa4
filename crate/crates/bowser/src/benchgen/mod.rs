//! Seeded benchmark generators and the KPI harness.
//!
//! Two canonical test beds are built in: a deterministic 108-instance bed
//! (bowser sizes x six topologies x fleet sizes x penalties, horizon 50,
//! compound-Poisson consumption drawn per period) and a small stochastic
//! 108-instance bed (six topologies x three initial-tank configurations x
//! three consumption patterns x two penalties, horizon 5, truncated-Poisson
//! demand). Generation is a pure function of the config and master seed:
//! rerunning emits byte-identical instance files.

mod graphs;
mod kpi;
mod testbed;

pub use graphs::{generate_bernoulli_site_graph, generate_topology, GenError, TopologySpec};
pub use kpi::{render_kpi, run_benchmark, simulate_rh, BenchLimits, BenchMethod, InstanceRow, KpiReport, MethodResult};
pub use testbed::{
    generate_testbed, AssetTypeSpec, DbrpConfig, SbrpConfig, TestbedConfig,
};
