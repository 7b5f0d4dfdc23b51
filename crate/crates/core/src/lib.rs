//! Room occupancy detection from low-rate sound-sensor histograms, and
//! attribution of HVAC cooling energy to occupancy status.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`]: slot records, histogram binning, file ingestion, office-hours
//!   filtering and a seeded synthetic generator.
//! * [`features`]: orthonormal Haar decomposition of histograms followed by
//!   PCA truncated at a target explained variance.
//! * [`cluster`]: Ward agglomerative clustering with the cluster count chosen
//!   by the Calinski-Harabasz index.
//! * [`neural`]: a sparse autoencoder and a feed-forward classifier trained
//!   with full-batch gradient descent.
//! * [`occupancy`]: the threshold, cluster, classifier and semi-supervised
//!   detectors plus evaluation against ground truth.
//! * [`energy`]: per-slot cooling energy and occupancy-conditioned statistics.

pub mod cluster;
pub mod data;
pub mod energy;
mod error;
pub mod features;
pub mod neural;
pub mod occupancy;

pub use error::{Error, Result};

/// Identity of one five-minute slot in one room.
pub type SlotKey = (String, chrono::DateTime<chrono::Utc>);
