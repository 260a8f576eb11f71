//! Pedestrian trajectory prediction with social-force-structured neural networks.
//!
//! The crate covers the whole pipeline: ground-truth social force simulation
//! ([`sfm`]), synthetic dataset generation ([`dataset`]), the structured
//! networks and their gradients ([`net`]), Adam training ([`train`]),
//! open-loop rollouts ([`predict`]), multi-goal classification ([`goal`]) and
//! benchmarking against constant-velocity/acceleration baselines ([`eval`]).

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geom;
pub mod goal;
pub mod io;
pub mod net;
pub mod predict;
pub mod scenario;
pub mod sfm;
pub mod train;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use geom::{Vec2, WallSegment};
