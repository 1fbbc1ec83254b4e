//! Confined meson dynamics in the two-particle sector of a one-dimensional,
//! particle-conserving Z2 lattice gauge theory.
//!
//! The gauge field is never stored explicitly: Gauss's law fixes every link
//! spin from the two boson positions, so the sector Hilbert space is the set
//! of ordered pairs `(i1, i2)` on an open chain. On top of that space the
//! crate provides
//!
//! * [`basis`]: pair enumeration, `(r, c)` coordinates, link reconstruction,
//! * [`hamiltonian`]: the sparse sector Hamiltonian and momentum blocks,
//! * [`linalg`]: symmetric eigensolvers and the special functions used by
//!   the analytic limits,
//! * [`dynamics`]: initial states, spectral time evolution and observables,
//! * [`analysis`]: long-time meson size, breathing frequency and speed,
//! * [`theory`]: closed-form limits used as oracles,
//! * [`spinmap`]: the dual spin chain, snapshot sampling and a Trotterized
//!   statevector evolution,
//! * [`cli`]: the experiment runner behind the `z2meson` binary.

pub mod analysis;
pub mod basis;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod spinmap;
pub mod theory;

pub use error::{Error, Result};

/// Version string embedded in every output file.
pub const VERSION: &str = concat!("z2meson ", env!("CARGO_PKG_VERSION"));
