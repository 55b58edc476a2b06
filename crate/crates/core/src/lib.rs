//! Particle-based simulation of media-modulation molecular communication in
//! a closed-loop duct.
//!
//! Molecules circulate with the flow and diffuse. Zone devices switch their
//! state with light: the TX zone writes bits, the EX zone erases them, and
//! the RX zone counts observable molecules. The [`link`] module turns RX
//! traces into bits and estimates error rates; [`scenarios`] wires complete
//! experiments from a config file.

pub mod devices;
pub mod error;
pub mod io;
pub mod kinetics;
pub mod link;
pub mod par;
pub mod rng;
pub mod scenarios;
pub mod trace;
pub mod transport;

pub use error::{Error, Result};
