//! Distributed transceiver coordination for multi-cell MIMO networks.
//!
//! The crate covers the whole pipeline: dense complex linear algebra
//! ([`matrixkit`]), the network model and rate metrics ([`netmodel`]),
//! channel generation ([`chanmodel`]), per-node filter solvers ([`solvers`]),
//! the forward-backward coordination engine ([`coord`]), and the Monte-Carlo
//! experiment harness ([`experiment`]).

pub mod chanmodel;
pub mod coord;
pub mod error;
pub mod experiment;
pub mod matrixkit;
pub mod netmodel;
pub mod solvers;

pub use error::{Error, Phase, Result};
pub use matrixkit::{CMatrix, C64};
pub use netmodel::{ChannelSet, CovariancePair, FilterBank, NetworkConfig, Side};
