//! Throughput maximization for IRS-assisted multi-hop mobile edge computing.
//!
//! A chain of nodes forwards computation tasks from a source to a
//! destination. Every relay splits its power between offloading to the next
//! hop and computing locally, the hops share a bandwidth budget, and
//! reconfigurable surfaces add reflected paths to each link. The end-to-end
//! throughput is the max-flow of the resulting task graph; the optimizer
//! raises it by following the algebraic connectivity of an undirected proxy.

pub mod channel;
pub mod error;
pub mod flowgraph;
pub mod harness;
pub mod optimizer;
pub mod rates;
pub mod scenario;
pub mod spectral;
