//! The book's chapters, one module each, so `cargo test` runs every listing
//! in `book/src` as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/state-space.md")]
pub mod state_space {}
#[doc = include_str!("../../../book/src/ekf.md")]
pub mod ekf {}
#[doc = include_str!("../../../book/src/ukf.md")]
pub mod ukf {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
