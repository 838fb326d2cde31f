//! Simulation library for a free-space optical link that multiplexes
//! orbital-angular-momentum beams into a few-mode fiber through a receive
//! lens, under random transceiver misalignment.
//!
//! The pipeline has four layers:
//!
//! * [`beam`]: Laguerre-Gaussian free-space modes, their propagation
//!   geometry, the misaligned-field expression, and the back-propagated
//!   fiber eigenmodes they couple into.
//! * [`coupling`]: overlap integrals over the receive aperture, per-mode
//!   coupling coefficients and efficiencies, and their expectations under
//!   the misalignment ensemble (Monte-Carlo or deterministic Rayleigh
//!   quadrature).
//! * [`channel`] / [`capacity`]: the complex channel matrix of a mode
//!   group, its intensity-detection estimate, mean photocurrent
//!   decomposition (signal, interference, amplitude beating), and IM/DD
//!   achievable rates with and without zero-forcing beamforming.
//! * [`optimize`] / [`config`] / [`report`]: sweep drivers over coupling
//!   parameter, aperture diameter and power budget, exhaustive mode-set
//!   search, run configuration, and provenance-stamped CSV output.
//!
//! All physical quantities are SI unless a name says otherwise.

pub mod beam;
pub mod capacity;
pub mod channel;
pub mod config;
pub mod coupling;
mod linalg;
pub mod optimize;
pub mod quad;
pub mod report;
