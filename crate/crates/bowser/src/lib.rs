//! Decision-support toolkit for refuelling mobile assets on work sites with a
//! single fuel bowser.
//!
//! The crate models a site as a directed graph with a cistern node, a fleet of
//! fuel-consuming assets that move between nodes over a discrete horizon, and a
//! bowser that travels the graph delivering fuel. It provides:
//!
//! * exact mixed-integer models for the deterministic routing problem
//!   ([`dbrp`]) and its stochastic-consumption variant ([`sbrp`]), built on a
//!   solver-independent model IR and a built-in branch-and-bound solver
//!   ([`milp`]);
//! * first-order loss functions, compound-Poisson fitting and piecewise
//!   linearization ([`stochproc`]);
//! * exact stochastic dynamic programming for small instances ([`sdp`]);
//! * lost-sales Monte Carlo evaluation with common random numbers ([`sim`]);
//! * seeded benchmark generators and KPI pivot tables ([`benchgen`]);
//! * AEMP v1.2 telematics ingestion and consumption fitting ([`telemetry`]).
//!
//! The `bowser` binary exposes all of this as a batch CLI. The mdbook under
//! `book/` walks through the concepts; its code snippets are compiled and run
//! as doc-tests via the [`book`] module.

pub mod core;
pub mod crn;
pub mod stochproc;

pub mod milp;

pub mod dbrp;
pub mod sbrp;
pub mod sdp;
pub mod sim;

pub mod benchgen;
pub mod telemetry;

mod book;
