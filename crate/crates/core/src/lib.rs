//! Pointwise classification engine for almost hyper-Hermitian structures.
//!
//! Everything happens on a single tangent space `R^{4n}` carrying three
//! anticommuting orthogonal complex structures `I`, `J`, `K = IJ`.  The crate
//! models covariant-derivative data of the three Kähler forms as dense
//! tensors, decomposes it into Gray-Hervella components per structure and into
//! quaternionic components of the fundamental 4-form, and exhaustively
//! enumerates which combinations of Gray-Hervella classes force reductions.
//!
//! Module map:
//! - [`model`]: the quaternionic frame, dense tensors, slot operators, wedges.
//! - [`torsion`]: the `(lambda, alpha)` parametrization of admissible torsion.
//! - [`gray_hervella`]: `W_1..W_4` projectors, Lee forms, closed-form
//!   component predictors.
//! - [`isotypic`]: quadratic-Casimir isotypic decompositions used as the
//!   independent oracle for every representation-theoretic split.
//! - [`quat_form`]: the fundamental 4-form, its derivative and the
//!   `H`/`S^3H` quaternionic type.
//! - [`classifier`]: constraint subspaces, generic reduction, exhaustive
//!   table generation and theorem verification.

pub mod classifier;
pub mod error;
pub mod gray_hervella;
pub mod isotypic;
pub mod model;
pub mod quat_form;
pub mod torsion;

pub use error::CoreError;
pub use model::{QuatFrame, Structure, Tensor};
