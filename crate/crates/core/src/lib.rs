//! Physically based simulation and inversion of scenes photographed through a
//! semi-reflector (a glass pane) under a rotating linear polarizer.
//!
//! The crate is organised bottom-up:
//!
//! * [`imagecore`] holds the float raster type, tone curves, metrics, histogram
//!   matching and PNG/PFM I/O.
//! * [`optics`] evaluates Fresnel reflectances, the mixing coefficient and the
//!   forward observation model.
//! * [`geometry`] generates parabolic surface cross-sections and per-column
//!   angle-of-incidence fields.
//! * [`synth`] turns two ordinary images into a polarized training sample.
//! * [`decompose`] inverts the model: canonical projection, residual
//!   recombination and closed-form layer separation.

pub mod decompose;
pub mod error;
pub mod geometry;
pub mod imagecore;
pub mod optics;
pub mod synth;

pub use error::{Error, Result};
pub use imagecore::ImageF;
