//! Language-enhanced bird's-eye-view maps with an LLM-driven spatial query
//! engine and a benchmark harness.

pub mod bench;
pub mod bundle;
pub mod captioning;
pub mod extract;
pub mod geometry;
pub mod grid;
pub mod map;
pub mod orchestrator;
pub mod render;
pub mod spatial;
pub mod synth;
pub mod templates;
