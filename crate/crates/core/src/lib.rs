//! Jump-spliced finite differencing on uniform Cartesian grids.
//!
//! A discontinuity across an implicitly defined interface breaks the accuracy
//! of any fixed finite-difference stencil. Writing `v` for a band-defined
//! extrapolation whose normal derivatives on the interface equal the
//! prescribed jumps, the spliced evaluation
//!
//! ```text
//! D u  ~  D_h u - D_h(v H(phi)) + (D_h v) H(phi)
//! ```
//!
//! recovers the stencil's full interior order everywhere, because the
//! correction exactly cancels the jump seen by the stencil. Everything else
//! here is built from that identity:
//!
//! * [`splice`] constructs `v` from jump data by a bootstrapped normal Taylor
//!   expansion and evaluates spliced operators,
//! * [`elliptic`] folds the correction into the right-hand side of Poisson
//!   solves so standard symmetric multigrid applies unchanged,
//! * [`quadrature`] reads the correction itself as a regularized interface
//!   delta, giving fourth-order surface integrals,
//! * [`ns`] drives a jump-spliced approximate projection method for 2D
//!   incompressible two-phase flow with surface tension.

pub mod elliptic;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod ns;
pub mod quadrature;
pub mod splice;
pub mod stencil;

pub use error::Error;
pub use geometry::{ImplicitShape, NarrowBand};
pub use grid::{Centering, Grid, Mask, ScalarField, VectorField};
