//! Simulation and reconstruction toolkit for quantum state tomography of
//! Hermite-Gaussian spatial qudits through randomly structured 1-D metasurfaces.
//!
//! The pipeline runs geometry → transmission matrix → instrument matrix →
//! (noisy) correlation data → constrained maximum-likelihood reconstruction:
//!
//! * [`hg`] samples the truncated Hermite-Gaussian basis.
//! * [`metasurface`] generates and serializes random ridge/gap geometries.
//! * [`forward`] maps a geometry to far-field channel amplitudes through a
//!   pluggable [`forward::TransmissionBackend`].
//! * [`instrument`] builds single- and N-photon instrument matrices, applies
//!   detector and indistinguishability reductions, and analyses conditioning.
//! * [`state`] holds density matrices and the Uhlmann fidelity.
//! * [`measurement`] produces ideal and noisy correlation data.
//! * [`tomography`] reconstructs physical states and calibrates instruments.

pub mod error;
pub mod forward;
pub mod hg;
pub mod instrument;
pub mod linalg;
pub mod matfile;
pub mod measurement;
pub mod metasurface;
pub mod registry;
pub mod rng;
pub mod state;
pub mod tomography;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
