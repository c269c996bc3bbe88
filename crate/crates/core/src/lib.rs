//! Joint design of the transmit cross-correlation matrix and the antenna
//! placement of a non-uniform linear MIMO array.
//!
//! Given a grid of `M` candidate positions, `N` antennas and a desired
//! beampattern, the crate alternates a convex covariance step with a relaxed
//! placement step solved by ADMM, then rounds the placement back to a Boolean
//! selection. An exhaustive oracle provides ground truth on small grids.

mod barrier;
pub mod cli;
pub mod covariance;
pub mod desired;
pub mod driver;
pub mod error;
pub mod geometry;
pub mod pattern;
pub mod oracle;
pub mod placement;
pub mod projection;
pub mod qp;

pub use error::{Error, Result};
