//! Monte Carlo machinery for the mean width of randomly perturbed random
//! polytopes `K_{N,y} = conv{±y_1 X_1, …, ±y_N X_N}`.
//!
//! * [`randsrc`]: seeded substreams and samplers (isotropic clouds, Gaussian,
//!   spherical, `B_p^N`-uniform and symmetric stable perturbations).
//! * [`polytope`]: support function, mean width and `f(y) = E_X w(K_{N,y})`.
//! * [`orlicz`]: Orlicz functions and the Luxemburg norm solver.
//! * [`lawcheck`]: experiments probing scaling, Lipschitz, tail, inclusion and
//!   concentration behaviour.
//! * [`cli`]: configuration, execution and CSV/manifest output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod lawcheck;
pub mod orlicz;
pub mod polytope;
pub mod randsrc;

pub use error::{Error, Result};
