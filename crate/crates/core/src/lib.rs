//! Desk-scale LiDAR de-raining toolkit.
//!
//! The pipeline runs in five stages that share the types in [`types`]:
//!
//! 1. [`scene`] ray-casts a calibrated beam pattern against a parametric
//!    scene to produce clean, labeled polar grid maps.
//! 2. [`rainsim`] injects Marshall-Palmer distributed raindrops into those
//!    grids, turning intercepted beams into rain-labeled returns.
//! 3. [`annotate`] re-derives labels from raw points (RANSAC road plane,
//!    box and polygon elimination, nearest-neighbour label transfer).
//! 4. [`filters`] removes rain with ROR, SOR, DROR and DSOR.
//! 5. [`eval`] scores the filters and tunes them by random search.
//!
//! [`pgm`] holds the projection between list-form clouds and polar grid
//! maps, [`io`] the on-disk formats and [`cli`] the command-line frontend.

pub mod annotate;
pub mod cli;
pub mod eval;
pub mod filters;
pub mod geometry;
pub mod io;
pub mod pgm;
pub mod rainsim;
pub mod scene;
pub mod seed;
pub mod types;

pub use types::{Class, ConfusionCounts, LabelSet, PointCloud, SensorCalibration};
