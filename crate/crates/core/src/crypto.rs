//! ECDSA P-256 / SHA-256 signing keys, public keys and signatures.
//!
//! Keys are identified by the SHA-256 of their SEC1 compressed encoding.
//! Signatures are the fixed 64-byte `r || s` form, written as hex.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use p256::ecdsa::signature::{Signer, Verifier};
use p256::ecdsa::{Signature as EcdsaSignature, SigningKey as EcdsaSigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Digest;

#[derive(Debug, thiserror::Error)]
pub enum KeyError {
    #[error("invalid key encoding: {0}")]
    Encoding(String),
    #[error("reading key file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Identifier of a public key: SHA-256 of its compressed SEC1 encoding.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyId(pub Digest);

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({})", &self.0.to_hex()[..16])
    }
}

impl FromStr for KeyId {
    type Err = crate::digest::DigestParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Digest::from_hex(s).map(KeyId)
    }
}

#[derive(Clone)]
pub struct SigningKey(EcdsaSigningKey);

impl SigningKey {
    /// Derives a key deterministically from seed material.
    pub fn from_seed(seed: &[u8]) -> Self {
        let mut counter = 0u32;
        loop {
            let candidate = Digest::of_parts(&[b"swt-key", seed, &counter.to_be_bytes()]);
            if let Ok(key) = EcdsaSigningKey::from_slice(candidate.as_bytes()) {
                return SigningKey(key);
            }
            counter += 1;
        }
    }

    pub fn generate() -> Self {
        let seed: [u8; 32] = rand::random();
        SigningKey::from_seed(&seed)
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(*self.0.verifying_key())
    }

    pub fn key_id(&self) -> KeyId {
        self.public_key().key_id()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        let sig: EcdsaSignature = self.0.sign(message);
        Signature(sig.to_bytes().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, KeyError> {
        let bytes = hex::decode(s.trim()).map_err(|e| KeyError::Encoding(e.to_string()))?;
        EcdsaSigningKey::from_slice(&bytes)
            .map(SigningKey)
            .map_err(|e| KeyError::Encoding(e.to_string()))
    }

    /// Reads a key file: one line of hex holding the secret scalar.
    pub fn load(path: &Path) -> Result<Self, KeyError> {
        let text = std::fs::read_to_string(path).map_err(|source| KeyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SigningKey::from_hex(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), KeyError> {
        std::fs::write(path, format!("{}\n", self.to_hex())).map_err(|source| KeyError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningKey({:?})", self.key_id())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    pub fn to_sec1(&self) -> Vec<u8> {
        self.0.to_encoded_point(true).as_bytes().to_vec()
    }

    pub fn from_sec1(bytes: &[u8]) -> Result<Self, KeyError> {
        VerifyingKey::from_sec1_bytes(bytes)
            .map(PublicKey)
            .map_err(|e| KeyError::Encoding(e.to_string()))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_sec1())
    }

    pub fn from_hex(s: &str) -> Result<Self, KeyError> {
        let bytes = hex::decode(s.trim()).map_err(|e| KeyError::Encoding(e.to_string()))?;
        PublicKey::from_sec1(&bytes)
    }

    pub fn key_id(&self) -> KeyId {
        KeyId(Digest::of(&self.to_sec1()))
    }

    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        match EcdsaSignature::from_slice(&signature.0) {
            Ok(sig) => self.0.verify(message, &sig).is_ok(),
            Err(_) => false,
        }
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        PublicKey::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl Signature {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, KeyError> {
        let mut out = [0u8; 64];
        hex::decode_to_slice(s, &mut out).map_err(|e| KeyError::Encoding(e.to_string()))?;
        Ok(Signature(out))
    }

    /// A copy with one bit flipped, for tamper tests.
    pub fn corrupted(&self) -> Self {
        let mut bytes = self.0;
        bytes[10] ^= 0x01;
        Signature(bytes)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", &self.to_hex()[..16])
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Signature::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_and_verify() {
        let key = SigningKey::from_seed(b"maintainer-1");
        let sig = key.sign(b"payload");
        assert!(key.public_key().verify(b"payload", &sig));
        assert!(!key.public_key().verify(b"payloaD", &sig));
        assert!(!key.public_key().verify(b"payload", &sig.corrupted()));
        let other = SigningKey::from_seed(b"maintainer-2");
        assert!(!other.public_key().verify(b"payload", &sig));
    }

    #[test]
    fn seeded_keys_and_signatures_are_deterministic() {
        let a = SigningKey::from_seed(b"x");
        let b = SigningKey::from_seed(b"x");
        assert_eq!(a.public_key(), b.public_key());
        assert_eq!(a.sign(b"m"), b.sign(b"m"));
    }

    #[test]
    fn key_id_is_hash_of_compressed_point() {
        let key = SigningKey::from_seed(b"k");
        let pk = key.public_key();
        assert_eq!(pk.to_sec1().len(), 33);
        assert_eq!(key.key_id(), KeyId(Digest::of(&pk.to_sec1())));
        assert_eq!(PublicKey::from_hex(&pk.to_hex()).unwrap(), pk);
    }

    #[test]
    fn key_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("swt-key-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("k.key");
        let key = SigningKey::generate();
        key.save(&path).unwrap();
        assert_eq!(SigningKey::load(&path).unwrap().key_id(), key.key_id());
        std::fs::remove_dir_all(dir).ok();
    }
}
