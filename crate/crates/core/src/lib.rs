//! Life-cycle management (LCM) of AI/ML models on the RAN air interface.
//!
//! The crate is organised around the closed loop that manages a deployed
//! CSI model:
//!
//! - [`channel`] generates time-correlated synthetic channels with injectable
//!   distribution shifts and noisy CSI measurements.
//! - [`models`] holds the linear surrogate models (CSI predictor, two-sided
//!   autoencoder, beam predictor) and low-rank delta adaptation.
//! - [`kpi`] derives SGCS, NMSE, top-K beam accuracy and input descriptors.
//! - [`monitor`] implements the three UE-assisted monitoring modes.
//! - [`controller`] is the management state machine and decision policy.
//! - [`registry`] is the versioned, integrity-checked model store.
//! - [`intervendor`] covers two-sided model interoperability flows.
//! - [`sim`] wires everything into a deterministic slot-driven simulation.

pub mod channel;
pub mod container;
pub mod controller;
mod error;
pub mod intervendor;
pub mod kpi;
pub mod linalg;
pub mod models;
pub mod monitor;
mod precoder;
pub mod registry;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use precoder::Precoder;
