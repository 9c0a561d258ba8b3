//! Desk-scale person re-identification laboratory.
//!
//! Two feature branches are compared on synthetic multi-camera data:
//!
//! * a hand-crafted branch: [`descriptor`] (LOMO-style stripe histograms)
//!   followed by [`metric`] learning (PCA, KISSME, XQDA);
//! * a neural branch: [`neural`] multilayer perceptrons whose penultimate
//!   activations are used as features, optionally trained by temperature
//!   based knowledge [`distill`]ation from a wider teacher.
//!
//! Both branches are scored with [`eval`] (CMC rank-k, mAP) and timed with
//! [`bench`], which also assembles the speed/accuracy trade-off report.

pub mod bench;
pub mod dataset;
pub mod descriptor;
pub mod distill;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod metric;
pub mod neural;
pub mod rng;

pub use error::{Error, Result};
