//! Deterministic stand-in for compiling a source package.
//!
//! The archive builds with it and monitors rebuild with it, so a binary is
//! reproducible exactly when its recorded inputs give the same bytes.

use crate::Digest;

pub trait BuilderOracle: Send + Sync {
    fn build(&self, source_payload: &[u8], environment_digest: &Digest, architecture: &str) -> Vec<u8>;
}

/// Header line followed by a SHA-256 counter-mode stream keyed on the
/// source digest, the environment and the architecture.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashBuilder;

const MAGIC: &[u8] = b"SWTBIN1\n";

impl BuilderOracle for HashBuilder {
    fn build(&self, source_payload: &[u8], environment_digest: &Digest, architecture: &str) -> Vec<u8> {
        let source_digest = Digest::of(source_payload);
        let body_len = (source_payload.len() / 2).max(64);
        let mut out = Vec::with_capacity(MAGIC.len() + architecture.len() + 1 + body_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(architecture.as_bytes());
        out.push(b'\n');
        let mut counter = 0u64;
        while out.len() < MAGIC.len() + architecture.len() + 1 + body_len {
            let block = Digest::of_parts(&[
                architecture.as_bytes(),
                environment_digest.as_bytes(),
                source_digest.as_bytes(),
                &counter.to_be_bytes(),
            ]);
            let room = MAGIC.len() + architecture.len() + 1 + body_len - out.len();
            out.extend_from_slice(&block.as_bytes()[..room.min(32)]);
            counter += 1;
        }
        out
    }
}

/// Environment digest for a build: toolchain label, architecture and a
/// rebuild counter (bumped for rebuilds of an unchanged source).
pub fn environment_digest(toolchain: &str, architecture: &str, rebuild: u32) -> Digest {
    Digest::of_parts(&[b"swt-env\n", toolchain.as_bytes(), b"\n", architecture.as_bytes(), &rebuild.to_be_bytes()])
}
