//! Semi-explicit compact fourth-order finite-difference solver for the
//! acoustic wave equation `beta u_tt = sum_k d_k((1/sigma) d_k u) + f` with
//! variable density `sigma` and sound speed `c` (`beta = 1/(sigma c^2)`).

pub mod error;
pub mod grid;
pub mod harness;
pub mod medium;
pub mod operators;
pub mod output;
pub mod problems;
pub mod stepper;
pub mod tridiag;

pub use error::{Error, Result};
pub use grid::{Axis, Field, Mesh, TimeAxis};
pub use medium::{CourantPolicy, QuadRule, SchemeParams, SigmaVariant, Version};
pub use stepper::{run, ProblemSpec, RunReport, Scheme, StepperState};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grid.md")]
    mod grid {}
    #[doc = include_str!("../../../book/src/medium.md")]
    mod medium {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/tridiag.md")]
    mod tridiag {}
    #[doc = include_str!("../../../book/src/stepping.md")]
    mod stepping {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/output.md")]
    mod output {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
