//! Generalized Kähler geometry as executable linear algebra.

pub mod error;
pub mod exterior;
pub mod flows;
pub mod biherm;
pub mod gcs;
pub mod su2;
mod linalg;

pub use error::{Error, Result};

/// The guide's code samples, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/forms.md")]
    mod forms {}
    #[doc = include_str!("../../../book/src/gcs.md")]
    mod gcs {}
    #[doc = include_str!("../../../book/src/bihermitian.md")]
    mod bihermitian {}
    #[doc = include_str!("../../../book/src/su2.md")]
    mod su2 {}
    #[doc = include_str!("../../../book/src/flows.md")]
    mod flows {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
