//! Positive-P phase-space model of a driven cavity with two-photon loss.
//!
//! * [`model`]: parameters, drift, noise factor, coefficient and scaled forms.
//! * [`stationary`]: stationary points from the cubic, with linear stability.
//! * [`analytic`]: closed-form solutions with defect certificates.
//! * [`sde`]: Euler–Maruyama trajectories and reproducible ensembles.
//! * [`oracle`]: independent RK4 reference integrator and residuals.
//! * [`verify`]: the property suite behind `tpa-cavity verify`.
//!
//! The guide in `book/` walks through each of these; its code listings are
//! compiled and run as doctests of this crate.

pub mod analytic;
pub mod error;
pub mod model;
pub mod oracle;
pub mod sde;
pub mod stationary;
pub mod verify;

pub use error::{Error, Result};

// mdbook cannot run listings that depend on this crate, so the chapters are
// pulled in here, one module each, and `cargo test --doc` runs them.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/stationary.md")]
    mod stationary {}
    #[doc = include_str!("../../../book/src/analytic.md")]
    mod analytic {}
    #[doc = include_str!("../../../book/src/stochastic.md")]
    mod stochastic {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
