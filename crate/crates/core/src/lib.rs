// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod agent;
pub mod clock;
pub mod episodic;
pub mod features;
pub mod geometry;
pub mod navigation;
pub mod providers;
pub mod scene_graph;
pub mod semantic;
pub(crate) mod serde_pairs;
pub mod sim;
pub mod spatial_grid;
