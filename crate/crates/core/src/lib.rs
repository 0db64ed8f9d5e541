//! Exact branch-and-bound for the set partitioning problem: instances,
//! dual bounds, node processing, the cluster model and run metrics.

pub mod bounds;
pub mod incumbent;
pub mod instance;
pub mod mcm;
pub mod metrics;
pub mod node;
pub mod search;

pub use incumbent::{Incumbent, LocalIncumbent, SharedIncumbent, NO_INCUMBENT};
pub use instance::{generate, GeneratorParams, InstanceError, ItemId, SppInstance, VarId};
pub use mcm::{ClusterTopology, CoreAddr, McmConfig};
pub use node::BnbNode;
pub use search::{solve_sequential, NodeCounters, Solution, SolveError, SolveStatus, SolverConfig, Traversal};
