//! Coherence of hyperfine qubits held in a standing-wave optical dipole trap.
//!
//! The crate covers the full chain from trap parameters to fitted coherence
//! times:
//!
//! * [`trap`]: constants, unit handling and derived trap quantities
//! * [`bloch`]: Bloch-vector pulses, precession and sequence execution
//! * [`dephasing`]: thermal light-shift distribution and Ramsey/echo lineshapes
//! * [`allan`]: Allan-variance analysis of beat records and echo visibility
//! * [`transport`]: classical motion in the accelerated lattice and heating
//! * [`shots`]: shot-level Monte-Carlo experiment simulation
//! * [`fit`]: least-squares extraction of coherence parameters

pub mod allan;
pub mod bloch;
pub mod dephasing;
pub mod error;
pub mod fit;
pub mod shots;
pub mod transport;
pub mod trap;
pub mod units;

pub use error::{Error, Result};
