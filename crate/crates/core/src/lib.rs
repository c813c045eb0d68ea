//! Upper and lower bounds on the feedback capacity of unifilar finite-state
//! channels through Q-graph context quantization, plus a belief-space value
//! iteration from which candidate Q-graphs can be extracted.

pub mod bcjr;
pub mod bound;
pub mod channel;
pub mod coupled;
pub mod dp;
pub mod digraph;
pub mod entropy;
pub mod error;
pub mod io;
pub mod optim;
pub mod qgraph;

pub use channel::{ChannelSpec, UnifilarChannel};
pub use coupled::{CoupledGraph, InputPolicy, PolicySpec, Stationary};
pub use error::{Error, Result};
pub use qgraph::{QGraph, QGraphSpec};
