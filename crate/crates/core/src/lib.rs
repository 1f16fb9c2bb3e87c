//! Topology construction, physical cost prediction and performance
//! estimation for sparse Hamming graph networks-on-chip.
//!
//! The cost pipeline runs topology → ports → global routing → tile sizing
//! and spacing → unit-cell grid → detailed routing → cost report; see
//! [`pipeline::predict`].

pub mod arch;
pub mod cost;
pub mod error;
pub mod explore;
pub mod floorplan;
pub mod perf;
pub mod pipeline;
pub mod reference;
pub mod routing;
pub mod topology;

pub use arch::{ArchParams, Direction};
pub use cost::CostReport;
pub use error::{Error, Result};
pub use explore::{Candidate, ExploreConfig, Explorer};
pub use perf::{PerfReport, RouterConfig, SimControl, TrafficSpec};
pub use pipeline::{predict, Prediction};
pub use topology::{GridDims, Link, LinkKind, Tile, Topology, TopologySpec};
