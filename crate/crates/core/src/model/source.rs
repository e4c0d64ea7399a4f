use serde::{Deserialize, Serialize};

use super::{parse_digest, parse_signature, parse_u64, validate_name, Canonical, ModelError, PackageId};
use crate::crypto::{KeyId, PublicKey, Signature, SigningKey};
use crate::stanza::{self, Paragraph};
use crate::version::VersionString;
use crate::Digest;

/// A maintainer-signed source upload.
///
/// The logged form is an envelope: a header paragraph, a blank line, then
/// the raw payload. The maintainer signs name, version and payload digest.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePackage {
    pub name: String,
    pub version: VersionString,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
    pub uploader_key_id: KeyId,
    pub uploader_signature: Signature,
}

impl std::fmt::Debug for SourcePackage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourcePackage")
            .field("name", &self.name)
            .field("version", &self.version)
            .field("payload_len", &self.payload.len())
            .field("uploader_key_id", &self.uploader_key_id)
            .finish()
    }
}

impl SourcePackage {
    pub fn new_signed(name: impl Into<String>, version: VersionString, payload: Vec<u8>, key: &SigningKey) -> Self {
        let name = name.into();
        let message = signing_message(&name, &version, &Digest::of(&payload));
        SourcePackage {
            name,
            version,
            payload,
            uploader_key_id: key.key_id(),
            uploader_signature: key.sign(&message),
        }
    }

    pub fn id(&self) -> PackageId {
        PackageId::new(self.name.clone(), self.version.clone())
    }

    pub fn payload_digest(&self) -> Digest {
        Digest::of(&self.payload)
    }

    pub fn signing_message(&self) -> Vec<u8> {
        signing_message(&self.name, &self.version, &self.payload_digest())
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.key_id() == self.uploader_key_id && key.verify(&self.signing_message(), &self.uploader_signature)
    }

    fn header(&self) -> Paragraph {
        let mut p = Paragraph::new();
        p.push("Package", &self.name)
            .push("Version", &self.version)
            .push("Uploader-Key", self.uploader_key_id)
            .push("Uploader-Signature", self.uploader_signature.to_hex())
            .push("Payload-SHA256", self.payload_digest())
            .push("Payload-Size", self.payload.len());
        p
    }
}

fn signing_message(name: &str, version: &VersionString, payload_digest: &Digest) -> Vec<u8> {
    format!("swt-source\n{name} {version}\n{payload_digest}\n").into_bytes()
}

impl Canonical for SourcePackage {
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = self.header().to_bytes();
        out.push(b'\n');
        out.extend_from_slice(&self.payload);
        out
    }

    fn parse(bytes: &[u8]) -> Result<Self, ModelError> {
        let (head, payload) =
            stanza::split_header(bytes).ok_or_else(|| ModelError::invalid("Package", "missing header terminator"))?;
        let p = stanza::parse_paragraph(head)?;
        if p.fields().len() != 6 {
            return Err(ModelError::invalid("Package", "unexpected header field set"));
        }
        let name = p.require("Package")?.to_string();
        validate_name(&name).map_err(|e| p.error("Package", e))?;
        let size = parse_u64(&p, "Payload-Size")?;
        if size != payload.len() as u64 {
            return Err(p.error("Payload-Size", format!("header says {size}, payload has {}", payload.len())).into());
        }
        let digest = parse_digest(&p, "Payload-SHA256")?;
        if digest != Digest::of(payload) {
            return Err(p.error("Payload-SHA256", "payload digest mismatch").into());
        }
        Ok(SourcePackage {
            name,
            version: p.parse_field("Version")?,
            payload: payload.to_vec(),
            uploader_key_id: p.parse_field("Uploader-Key")?,
            uploader_signature: parse_signature(&p, "Uploader-Signature")?,
        })
    }
}

/// Build environment record for one binary package on one architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildinfoRecord {
    pub package: PackageId,
    pub architecture: String,
    pub environment_digest: Digest,
    pub builder_key_id: KeyId,
    pub builder_signature: Signature,
}

impl BuildinfoRecord {
    pub fn new_signed(package: PackageId, architecture: impl Into<String>, environment_digest: Digest, key: &SigningKey) -> Self {
        let mut record = BuildinfoRecord {
            package,
            architecture: architecture.into(),
            environment_digest,
            builder_key_id: key.key_id(),
            builder_signature: Signature([0; 64]),
        };
        record.builder_signature = key.sign(&record.signed_bytes());
        record
    }

    pub fn signed_bytes(&self) -> Vec<u8> {
        self.paragraph(false).to_bytes()
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.key_id() == self.builder_key_id && key.verify(&self.signed_bytes(), &self.builder_signature)
    }

    fn paragraph(&self, with_signature: bool) -> Paragraph {
        let mut p = Paragraph::new();
        p.push("Package", &self.package)
            .push("Architecture", &self.architecture)
            .push("Environment", self.environment_digest)
            .push("Builder-Key", self.builder_key_id);
        if with_signature {
            p.push("Signature", self.builder_signature.to_hex());
        }
        p
    }

    fn from_paragraph(p: &Paragraph) -> Result<Self, ModelError> {
        if p.fields().len() != 5 {
            return Err(ModelError::invalid("Package", "unexpected buildinfo field set"));
        }
        Ok(BuildinfoRecord {
            package: p.parse_field("Package")?,
            architecture: p.require("Architecture")?.to_string(),
            environment_digest: parse_digest(p, "Environment")?,
            builder_key_id: p.parse_field("Builder-Key")?,
            builder_signature: parse_signature(p, "Signature")?,
        })
    }
}

/// All buildinfo records of one release, sorted by package name and architecture.
/// The release file points at it through `buildinfo_ref`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BuildinfoBundle {
    pub records: Vec<BuildinfoRecord>,
}

impl BuildinfoBundle {
    pub fn sorted(mut records: Vec<BuildinfoRecord>) -> Self {
        records.sort_by(|a, b| (&a.package.name, &a.architecture).cmp(&(&b.package.name, &b.architecture)));
        BuildinfoBundle { records }
    }

    pub fn get(&self, name: &str, architecture: &str) -> Option<&BuildinfoRecord> {
        self.records.iter().find(|r| r.package.name == name && r.architecture == architecture)
    }
}

impl Canonical for BuildinfoBundle {
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut header = Paragraph::new();
        header.push("Buildinfo-Records", self.records.len());
        let mut paragraphs = vec![header];
        paragraphs.extend(self.records.iter().map(|r| r.paragraph(true)));
        stanza::write_paragraphs(&paragraphs)
    }

    fn parse(bytes: &[u8]) -> Result<Self, ModelError> {
        let paragraphs = stanza::parse_paragraphs(bytes)?;
        let Some((header, rest)) = paragraphs.split_first() else {
            return Err(ModelError::invalid("Buildinfo-Records", "empty document"));
        };
        let count = parse_u64(header, "Buildinfo-Records")?;
        if count != rest.len() as u64 {
            return Err(header.error("Buildinfo-Records", format!("header says {count}, found {}", rest.len())).into());
        }
        let records = rest.iter().map(BuildinfoRecord::from_paragraph).collect::<Result<_, _>>()?;
        Ok(BuildinfoBundle { records })
    }
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip() {
        let key = SigningKey::from_seed(b"m");
        let payload: Vec<u8> = (0..=255u8).chain(b"\n\nA: b\n".iter().copied()).collect();
        let src = SourcePackage::new_signed("hello", VersionString::parse("2.10-3").unwrap(), payload, &key);
        assert!(src.verify_signature(&key.public_key()));
        let bytes = src.canonical_bytes();
        let parsed = SourcePackage::parse(&bytes).unwrap();
        assert_eq!(parsed, src);
        assert_eq!(parsed.canonical_bytes(), bytes);
    }

    #[test]
    fn signature_binds_name_and_version() {
        let key = SigningKey::from_seed(b"m");
        let src = SourcePackage::new_signed("hello", VersionString::parse("1.0").unwrap(), b"x".to_vec(), &key);
        let mut renamed = src.clone();
        renamed.name = "other".into();
        assert!(!renamed.verify_signature(&key.public_key()));
        let mut rebumped = src.clone();
        rebumped.version = VersionString::parse("1.1").unwrap();
        assert!(!rebumped.verify_signature(&key.public_key()));
        let mut swapped = src;
        swapped.payload = b"y".to_vec();
        assert!(!swapped.verify_signature(&key.public_key()));
    }

    #[test]
    fn envelope_rejects_payload_mismatch() {
        let key = SigningKey::from_seed(b"m");
        let src = SourcePackage::new_signed("hello", VersionString::parse("1.0").unwrap(), b"abc".to_vec(), &key);
        let mut bytes = src.canonical_bytes();
        *bytes.last_mut().unwrap() = b'd';
        let err = SourcePackage::parse(&bytes).unwrap_err();
        assert!(err.to_string().contains("Payload-SHA256"), "{err}");
        bytes.pop();
        let err = SourcePackage::parse(&bytes).unwrap_err();
        assert!(err.to_string().contains("Payload-Size"), "{err}");
    }

    #[test]
    fn buildinfo_bundle_round_trip() {
        let key = SigningKey::from_seed(b"builder");
        let rec = |n: &str, a: &str| {
            BuildinfoRecord::new_signed(PackageId::new(n, VersionString::parse("1.0").unwrap()), a, Digest::of(a.as_bytes()), &key)
        };
        let bundle = BuildinfoBundle::sorted(vec![rec("zz", "amd64"), rec("aa", "arm64"), rec("aa", "amd64")]);
        assert_eq!(bundle.records[0].architecture, "amd64");
        assert_eq!(bundle.records[2].package.name, "zz");
        let parsed = BuildinfoBundle::parse(&bundle.canonical_bytes()).unwrap();
        assert_eq!(parsed, bundle);
        assert!(parsed.records.iter().all(|r| r.verify_signature(&key.public_key())));
        assert_eq!(BuildinfoBundle::parse(&BuildinfoBundle::default().canonical_bytes()).unwrap().records.len(), 0);
    }
}
