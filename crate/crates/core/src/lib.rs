//! Regularized greedy downward continuation of satellite potential data.
//!
//! The solver approximates a surface potential from samples `y_i = (T f)(σ_i η_i)`
//! of its upward continuation by picking, one per iteration, the trial
//! function that most decreases the Tikhonov functional
//! `‖y - T_ℓ f‖² + λ‖f‖²_{H_2}`. Candidates are spherical harmonics (scanned
//! exhaustively) and Abel–Poisson kernels and wavelets, whose centers are
//! learned by a global division search followed by a projected quasi-Newton
//! refinement. The `H_2` inner products between kernels come from closed
//! forms (see [`sobolev`]), which keep each objective evaluation `O(N)`.
//!
//! Module map:
//! - [`sphere`]: coordinates, moving frame, evaluation and seed grids
//! - [`harmonics`]: Legendre functions and fully normalized harmonics
//! - [`trial`]: dictionary elements and their upward-continued values
//! - [`sobolev`]: closed-form Sobolev products, gradients, series oracle
//! - [`forward`]: coefficient models, synthesis, datasets, operator columns
//! - [`optimize`]: global division search and constrained local refinement
//! - [`solver`]: the greedy iteration
//! - [`evaluation`]: error metrics and gridded fields
//! - [`io`]: file formats

pub mod error;
pub mod evaluation;
pub mod forward;
pub mod harmonics;
pub mod io;
pub mod optimize;
pub mod parallel;
pub mod sobolev;
pub mod solver;
pub mod sphere;
pub mod trial;

pub use error::{Error, Result};
pub use sphere::{BallPoint, Direction, SurfaceGrid, Vec3};
pub use trial::{DictionaryElement, Dictionary, KernelFamily};
