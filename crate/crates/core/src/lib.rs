//! Core library for evaluating image creatives against a structured
//! compliance attribute schema.
//!
//! Candidate ("child") multimodal models produce per-attribute reports for
//! each creative; a supervisory ("mother") judge model scores those reports
//! per attribute; agreement statistics meta-evaluate judges against human
//! annotations; a deterministic augmentation suite stress-tests robustness;
//! and cost/latency accounting drives model-selection recommendations.

pub mod augment;
pub mod backends;
pub mod engine;
pub mod judge;
pub mod metrics;
pub mod schema;
pub mod store;
