//! Prediction-market simulation engine and agent harness.
//!
//! The crate models binary prediction markets run under a logarithmic
//! market scoring rule, with three sequential traders who hold partition
//! knowledge about the state of the world. It provides:
//!
//! - [`knowledge`]: state spaces, signals, partitions, priors, securities,
//!   posterior computation and public-information refinement, plus the
//!   four benchmark information structures and their myopic price traces.
//! - [`lmsr`]: the market maker itself (prices, trade costs, share sizing,
//!   settlement, affordability, price-impact previews).
//! - [`engine`]: the sequential round protocol, decision validation and
//!   execution, resolution and transcript recording.
//! - [`agents`]: the agent abstraction with a myopic Bayesian oracle, a
//!   noise trader, and a remote chat-completion agent (prompt builder,
//!   HTTP client, decision parser).
//! - [`separability`]: certificate/witness classification of securities
//!   under partition structures via small dense linear feasibility.
//! - [`metrics`]: market scoring (log error, squared error, crash rate)
//!   and communication measures (cosine similarity, word gap, deception).
//! - [`runner`]: experiment grid expansion, parallel execution with
//!   seeded reproducibility, CSV persistence and report generation.

pub mod agents;
pub mod engine;
pub mod knowledge;
pub mod lmsr;
pub mod metrics;
pub mod runner;
pub mod separability;
