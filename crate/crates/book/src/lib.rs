//! The guide in `book/` is plain mdbook Markdown. mdbook can't run listings
//! that depend on workspace crates, so each chapter is pulled in here as the
//! docs of an empty module and `cargo test` checks its code blocks as
//! doctests. One module per chapter keeps failures traceable to a file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/rooms.md")]
pub mod rooms {}
#[doc = include_str!("../../../book/src/scene.md")]
pub mod scene {}
#[doc = include_str!("../../../book/src/pressure-matching.md")]
pub mod pressure_matching {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/datasets.md")]
pub mod datasets {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
