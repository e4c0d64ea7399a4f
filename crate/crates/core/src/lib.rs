//! Shared building blocks for a transparency log of software releases.
//!
//! * [`merkle`]: append-only Merkle tree with inclusion and consistency proofs.
//! * [`model`]: release files, indices, sources, key lists and their stanza encoding.
//! * [`version`]: Debian-style version ordering.
//! * [`tlog`]: log entries, inclusion promises and signed tree roots.
//! * [`api`] and [`client`]: the HTTP/JSON interface of a log.
//! * [`bundle`]: what the archive publishes alongside each release.

pub mod api;
pub mod build;
pub mod bundle;
pub mod client;
pub mod clock;
pub mod crypto;
pub mod digest;
pub mod merkle;
pub mod model;
pub mod policy;
pub mod stanza;
pub mod tlog;
pub mod version;

pub use digest::Digest;
