//! Shared domain model: site graphs, instances, plans, and their validation.
//!
//! Node indices are 0-based in memory with the cistern fixed at node 0; all
//! file formats and display output use 1-based labels with the cistern at
//! node 1.

mod fileio;
mod instance;
mod plan;

pub use fileio::{
    parse_instance, parse_plan, write_instance, write_plan, InstanceFile, ParseError,
};
pub use instance::{
    validate_instance, AssetSpec, Consumption, Instance, Locations, SiteGraph, SiteGraphError,
    Violation, CISTERN,
};
pub use plan::{check_plan_feasibility, Plan, PlanCheckError, PlanEvaluation};
