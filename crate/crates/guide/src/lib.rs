//! The guide in `book/`, one module per chapter, so that `cargo test`
//! runs every example in it.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/merkle.md")]
pub mod merkle {}

#[doc = include_str!("../../../book/src/logs.md")]
pub mod logs {}

#[doc = include_str!("../../../book/src/archive.md")]
pub mod archive {}

#[doc = include_str!("../../../book/src/auditing.md")]
pub mod auditing {}

#[doc = include_str!("../../../book/src/monitoring.md")]
pub mod monitoring {}

#[doc = include_str!("../../../book/src/cross-logging.md")]
pub mod cross_logging {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
