//! Holonomy distributions and variational freedom of sprays.
//!
//! A spray is a system of second-order ODEs `x'' + 2 G(x, x') = 0` with `G`
//! 2-homogeneous in the velocities. This crate computes its connection,
//! curvature and holonomy distribution from coefficient expressions, checks
//! candidate Lagrangians, and estimates how many independent Lagrangians the
//! spray admits. The guide in `book/` walks through each step.

pub mod ad;
pub mod analysis;
pub mod builtin;
pub mod config;
mod error;
pub mod expr;
pub mod geometry;
pub mod holonomy;
pub mod linalg;
pub mod transport;
pub mod variational;

pub use error::{Error, Result};

// The guide's code listings run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/expressions.md")]
    mod expressions {}
    #[doc = include_str!("../../../book/src/jets.md")]
    mod jets {}
    #[doc = include_str!("../../../book/src/connection.md")]
    mod connection {}
    #[doc = include_str!("../../../book/src/holonomy.md")]
    mod holonomy {}
    #[doc = include_str!("../../../book/src/lagrangians.md")]
    mod lagrangians {}
    #[doc = include_str!("../../../book/src/transport.md")]
    mod transport {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
}
