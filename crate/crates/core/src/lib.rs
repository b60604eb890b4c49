//! Distributed graph-partitioned hot-spot forecasting for cellular networks.
//!
//! Cells become graph nodes linked by geodesic distance; the graph is split
//! into equally sized sub-graphs, and each sub-graph gets its own
//! sub-classifier (one GCN layer feeding a GRU stack and a sigmoid head). A
//! small hierarchical model stacks the sub-classifiers' labels.

pub mod datagen;
pub mod ensemble;
pub mod error;
pub mod evalx;
pub mod experiment;
pub mod geo_graph;
pub mod models;
pub mod numkit;
pub mod prep;

pub use error::{Error, Result};
