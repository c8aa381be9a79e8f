//! Reasoning agent that drives the traffic tools through a language model.
//!
//! - [`agent`]: the thought/action/observation loop and its guardrails
//! - [`registry`]: tool descriptors and `k=v;k=v` input handling
//! - [`suite`]: the data-processing and simulation-control tool sets
//! - [`llm`]: HTTP and scripted completion backends

pub mod agent;
pub mod llm;
pub mod registry;
pub mod suite;
