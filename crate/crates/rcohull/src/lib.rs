//! Generalized rank-one convex hulls of singular-value constrained matrix
//! sets, laminate certificates, and piecewise-affine approximate solutions
//! of gradient inclusions `Du ∈ E`.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, scenario
//! parsing and the command-line front end live in the `rcohull-cli` crate.
//!
//! Module map:
//!
//! * [`matcore`]: small dense matrices (n = 2, 3), singular values,
//!   orthogonal decompositions, rank-one tests, minors.
//! * [`sets`]: isotropic target sets described by singular values and a
//!   determinant sign, plus finite matrix lists.
//! * [`laminate`]: laminate chains, the `H_I(U)` verifier, outside mass and
//!   membership certificates.
//! * [`hulls`]: closed-form hull predicates, the polyconvex feasibility test
//!   and the lattice rank-one closure oracle.
//! * [`walker`]: rank-one walks, their conversion to chains, and direction
//!   proposers.
//! * [`pam`]: piecewise-affine maps on triangulated domains.
//! * [`solver`]: oscillation, laminate realization, relaxation step and the
//!   refinement loop.

#![no_std]
#![forbid(unsafe_code)]
// Negated comparisons are deliberate: they reject NaN along with the failing case.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
// Builds that link std (tests, examples) get inherent float methods, which makes the `Float` imports redundant there.
#![allow(unused_imports)]

extern crate alloc;

pub mod hulls;
pub mod laminate;
pub mod lp;
pub mod matcore;
pub mod pam;
pub mod rng;
pub mod sets;
pub mod solver;
pub mod tol;
pub mod walker;

pub use hulls::{HullPredicate, Verdict};
pub use laminate::{LaminateChain, MergeWitness};
pub use matcore::{Dyad, Matrix, MinorsVector, SingularValues};
pub use sets::{DetConstraint, MatrixSetSpec, SingularValueSet, TargetSet};
