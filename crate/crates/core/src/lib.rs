//! Decentralized momentum SGD simulator.
//!
//! Workers hold private data shards, run `K` local steps of the stochastic
//! unified momentum (SUM) update, and then mix their models with neighbours
//! through a doubly stochastic gossip matrix. Two algorithms are provided:
//! D-SUM (local SUM steps plus gossip of the model and its auxiliary
//! sequence) and GT-DSUM (D-SUM driven by a gradient tracker that estimates
//! the global descent direction under heterogeneous data). Plain
//! decentralized SGD is the degenerate configuration.
//!
//! Every run is bit-reproducible from `(config, seed)` regardless of thread
//! count: RNG streams are derived per worker, epoch, and purpose, and all
//! reductions use a fixed ascending-index order.

// `!(x > 0.0)` also rejects NaN; indexed loops mirror the math they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod optim;
pub mod reference;
pub mod topology;
pub mod vector;

pub use data::{Dataset, RngStream, Shard};
pub use diagnostics::MetricsRecord;
pub use error::{Error, Result};
pub use objectives::{GradientOracle, Model};
pub use optim::{Algorithm, Cohort, SumHyper, WorkerState};
pub use topology::{MixingMatrix, TopologySchedule};
pub use vector::ParamVector;
