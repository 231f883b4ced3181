//! Numerical evaluation of curvature actions on gridded coordinate charts,
//! and of the change of such actions under topology-changing modifications of
//! the underlying space (adding disconnected closed pieces, or gluing pieces
//! in at small scale).

pub mod asymptotics;
pub mod ball;
pub mod blowup;
pub mod catalog;
pub mod curvature;
pub mod disconnected;
pub mod error;
pub mod fd;
pub mod field;
pub mod grid;
pub mod higher_order;
pub mod interp;
pub mod io;
pub mod quad;
pub mod smallmat;
pub mod sobolev;
pub mod surgery;

pub use error::{Error, Result};
pub use field::{MetricField, ScalarField, TensorField};
pub use grid::Grid;
