//! The chapters of `book/` as doctests, one module per chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/marginals.md")]
pub mod marginals {}
#[doc = include_str!("../../../book/src/mot.md")]
pub mod mot {}
#[doc = include_str!("../../../book/src/mccormick.md")]
pub mod mccormick {}
#[doc = include_str!("../../../book/src/bicausal.md")]
pub mod bicausal {}
#[doc = include_str!("../../../book/src/calibration.md")]
pub mod calibration {}
#[doc = include_str!("../../../book/src/ratios.md")]
pub mod ratios {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
