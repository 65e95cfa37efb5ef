//! Gaussian-evidential BEV maps over synthetic 2D LiDAR scenes.
//!
//! The crate simulates plan-view LiDAR over road/vehicle scenarios, builds
//! continuous-space evidential maps (per-center spatial Gaussians whose
//! density ratios weight per-class Dirichlet evidence), trains those maps
//! with an evidential loss, and runs an uncertainty-gated collective
//! perception exchange between agents, with IoU and calibration metrics.

pub mod augment;
pub mod boxes;
pub mod coop;
pub mod edl;
pub mod evmap;
pub mod fit;
pub mod geom;
pub mod grid;
pub mod metrics;
pub mod scene_sim;
pub mod seed;

pub use coop::{PipelineConfig, PipelineError, PipelineOutput};
pub use evmap::{DirichletResult, EvidentialMap, MapLayer};
pub use scene_sim::{PointCloud, Scenario};
