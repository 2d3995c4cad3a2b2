//! Structure-preserving solver for viscous and resistive magnetohydrodynamics
//! on tensor-product spline De Rham complexes.
//!
//! The library discretizes the VRMHD equations with a variational
//! bracket-splitting scheme: density, entropy and magnetic flux live in a
//! spline De Rham complex (`complex`), the velocity in vector-valued splines,
//! and the dynamics is advanced by six split propagators (`integrators`)
//! composed with Strang splitting. Mass, the divergence constraint on B and
//! (for the ideal brackets) total energy and entropy are conserved to solver
//! tolerance by construction rather than by penalty terms.
//!
//! Modules mirror the solver pipeline: univariate spline spaces (`splines`),
//! the tensor-product complex with commuting projectors (`complex`), mass and
//! weighted-mass operators (`galerkin`), the perfect-gas EOS with discrete
//! gradients (`eos`), the propagators (`integrators`), artificial dissipation
//! (`stabilization`), conserved-quantity and spectral diagnostics
//! (`diagnostics`), the experiment library (`cases`) and the command line
//! front end (`cli`).

pub mod cases;
pub mod cli;
pub mod complex;
pub mod diagnostics;
pub mod eos;
pub mod error;
pub mod galerkin;
pub mod integrators;
pub mod splines;
pub mod stabilization;

/// Scalar type used throughout the solver.
pub type Real = f64;

pub use error::Error;

/// Convenience result alias for fallible solver operations.
pub type Result<T> = std::result::Result<T, Error>;
