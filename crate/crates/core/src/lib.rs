//! Two-scale covariance separation for discretely observed functional data.
//!
//! Curves sampled on a grid of K points are modeled as a smooth process with
//! a low-rank covariance plus a rough short-memory process whose covariance
//! is banded. The crate recovers both parts from one empirical covariance:
//! a band mask hides the entries the rough part can touch, a factorized
//! low-rank completion fits the rest, a scree over candidate ranks picks the
//! rank, alternating projections estimate the banded remainder, and the
//! recovered spectra drive best-linear-prediction splits of individual
//! curves into smooth and rough components.

pub mod banded;
pub mod blp;
pub mod completion;
pub mod covmodel;
pub mod decompose;
pub mod error;
pub mod experiment;
pub mod io;
mod linalg;
pub mod simgen;
pub mod spectra;

pub use error::{Error, Result};
