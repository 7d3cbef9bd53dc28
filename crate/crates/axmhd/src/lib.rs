//! Mimetic finite-element toolkit for axisymmetric (r, z) PDEs on
//! unstructured triangular meshes, hosting a globally conservative
//! single-fluid two-temperature MHD solver with plasma/insulator domain
//! coupling and a compact-torus formation/levitation/compression scenario
//! driver.
//!
//! The discrete differential operators are assembled once per mesh as
//! explicit sparse matrices whose algebraic identities (adjointness,
//! interior antisymmetry, divergence annihilation) reproduce the continuum
//! product rule and divergence theorem. Every global conservation law of
//! the MHD solver — particles, toroidal flux, angular momentum, energy —
//! is a direct consequence of those matrix identities, and the test suite
//! checks them at machine-precision tolerances.
//!
//! Module map:
//! - [`mesh`]: mesh ingestion/validation, geometry tables, boundary frames,
//!   plasma/insulator domain splitting;
//! - [`ops`]: the sparse operator set (first-derivative maps between nodes
//!   and elements, volume averaging, Laplacian and the Grad-Shafranov
//!   elliptic operator);
//! - [`mhd`]: closures, right-hand-side assembly, boundary conditions and
//!   explicit time stepping for the eight evolved nodal fields;
//! - [`vacuum`]: the insulator-region vacuum field solve and the per-step
//!   plasma/vacuum coupling, plus the insulating-wall flux constant;
//! - [`scenario`]: time-dependent drives (gun voltage, coil currents) and
//!   initial conditions for formation runs;
//! - [`diagnostics`]: conserved-quantity monitors, semi-discrete balance
//!   residuals, synthetic probe and chord diagnostics;
//! - [`config`]: key=value run configuration and orchestration behind the
//!   thin CLI.

pub mod config;
pub mod diagnostics;
pub mod mesh;
pub mod mhd;
pub mod ops;
pub mod scenario;
pub mod solver;
pub mod sparse;
pub mod vacuum;

/// Vacuum permeability [H/m].
pub const MU0: f64 = 1.256_637_061_435_917_3e-6; // 4*pi*1e-7

/// Proton mass [kg].
pub const M_PROTON: f64 = 1.672_621_923_69e-27;

/// Elementary charge [C]; also J per eV.
pub const QE: f64 = 1.602_176_634e-19;
