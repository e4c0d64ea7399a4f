use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{parse_digest, parse_u64, validate_name, Canonical, ModelError, PackageId, SOURCE_ARCH};
use crate::stanza::{self, Paragraph};
use crate::version::VersionString;
use crate::Digest;

const RESERVED_FIELDS: &[&str] = &["Package", "Version", "Architecture", "SHA256", "Size", "Depends", "Source"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IndexKind {
    Packages,
    Sources,
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexKind::Packages => "Packages",
            IndexKind::Sources => "Sources",
        })
    }
}

impl FromStr for IndexKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Packages" => Ok(IndexKind::Packages),
            "Sources" => Ok(IndexKind::Sources),
            other => Err(format!("unknown index kind {other:?}")),
        }
    }
}

/// One entry of a Packages or Sources index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageRecord {
    pub name: String,
    pub version: VersionString,
    /// `source` for source records.
    pub architecture: String,
    pub sha256: Digest,
    pub size: u64,
    pub depends: Vec<String>,
    /// Originating source package, on binary records.
    pub source_ref: Option<PackageId>,
    /// Free-form fields such as tags; ignored by [`meta_changed`].
    pub noncritical: BTreeMap<String, String>,
}

impl PackageRecord {
    pub fn is_source(&self) -> bool {
        self.architecture == SOURCE_ARCH
    }

    pub fn id(&self) -> PackageId {
        PackageId::new(self.name.clone(), self.version.clone())
    }

    fn to_paragraph(&self) -> Paragraph {
        let mut p = Paragraph::new();
        p.push("Package", &self.name)
            .push("Version", &self.version)
            .push("Architecture", &self.architecture)
            .push("SHA256", self.sha256)
            .push("Size", self.size);
        if !self.depends.is_empty() {
            p.push("Depends", self.depends.join(", "));
        }
        if let Some(src) = &self.source_ref {
            p.push("Source", src);
        }
        for (k, v) in &self.noncritical {
            p.push(k, v);
        }
        p
    }

    fn from_paragraph(p: &Paragraph) -> Result<Self, ModelError> {
        let name = p.require("Package")?.to_string();
        validate_name(&name).map_err(|e| p.error("Package", e))?;
        let version = p.parse_field("Version")?;
        let architecture = p.require("Architecture")?.to_string();
        let sha256 = parse_digest(p, "SHA256")?;
        let size = parse_u64(p, "Size")?;
        let depends = match p.value("Depends") {
            Some(d) if !d.is_empty() => d.split(", ").map(str::to_string).collect(),
            Some(_) => return Err(p.error("Depends", "empty value").into()),
            None => Vec::new(),
        };
        for dep in &depends {
            validate_name(dep).map_err(|e| p.error("Depends", e))?;
        }
        let source_ref = match p.value("Source") {
            Some(s) => Some(s.parse::<PackageId>().map_err(|e| p.error("Source", e))?),
            None => None,
        };
        let mut noncritical = BTreeMap::new();
        let mut last: Option<&str> = None;
        for field in p.fields() {
            if RESERVED_FIELDS.contains(&field.name.as_str()) {
                continue;
            }
            // Canonical output lists free-form fields in sorted order.
            if last.is_some_and(|l| l >= field.name.as_str()) {
                return Err(p.error(&field.name, "free-form fields must be sorted").into());
            }
            last = Some(&field.name);
            noncritical.insert(field.name.clone(), field.value.clone());
        }
        Ok(PackageRecord { name, version, architecture, sha256, size, depends, source_ref, noncritical })
    }
}

/// Whether any field that changes what a client installs differs.
///
/// The critical fields are version, sha256, size, depends and source_ref;
/// the free-form `noncritical` map is ignored.
pub fn meta_changed(old: &PackageRecord, new: &PackageRecord) -> Result<bool, ModelError> {
    if old.name != new.name || old.architecture != new.architecture {
        return Err(ModelError::Contract(format!(
            "meta_changed on different packages: {}/{} vs {}/{}",
            old.name, old.architecture, new.name, new.architecture
        )));
    }
    // Textual comparison of the version: `1.0` vs `0:1.0` is a metadata change.
    Ok(old.version.to_string() != new.version.to_string()
        || old.sha256 != new.sha256
        || old.size != new.size
        || old.depends != new.depends
        || old.source_ref != new.source_ref)
}

/// A Packages index for one architecture or the Sources index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageIndex {
    pub kind: IndexKind,
    pub architecture: String,
    pub records: Vec<PackageRecord>,
}

impl PackageIndex {
    /// Builds an index with records in name order, as the archive emits them.
    pub fn sorted(kind: IndexKind, architecture: impl Into<String>, mut records: Vec<PackageRecord>) -> Self {
        records.sort_by(|a, b| a.name.cmp(&b.name));
        PackageIndex { kind, architecture: architecture.into(), records }
    }

    pub fn get(&self, name: &str) -> Option<&PackageRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.kind == IndexKind::Sources && self.architecture != SOURCE_ARCH {
            return Err(ModelError::invalid("Architecture", "Sources index must use architecture `source`"));
        }
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if r.architecture != self.architecture {
                return Err(ModelError::invalid(
                    "Architecture",
                    format!("record {} has architecture {}, index has {}", r.name, r.architecture, self.architecture),
                ));
            }
            if !seen.insert((r.name.as_str(), r.architecture.as_str())) {
                return Err(ModelError::invalid("Package", format!("duplicate record {}/{}", r.name, r.architecture)));
            }
            if let Some(key) = r.noncritical.keys().find(|k| RESERVED_FIELDS.contains(&k.as_str())) {
                return Err(ModelError::invalid(key, "reserved field name in free-form fields"));
            }
        }
        Ok(())
    }
}

impl Canonical for PackageIndex {
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut header = Paragraph::new();
        header.push("Index", self.kind).push("Architecture", &self.architecture);
        let mut paragraphs = vec![header];
        paragraphs.extend(self.records.iter().map(PackageRecord::to_paragraph));
        stanza::write_paragraphs(&paragraphs)
    }

    fn parse(bytes: &[u8]) -> Result<Self, ModelError> {
        let paragraphs = stanza::parse_paragraphs(bytes)?;
        let Some((header, records)) = paragraphs.split_first() else {
            return Err(ModelError::invalid("Index", "empty document"));
        };
        let kind = header.parse_field("Index")?;
        let architecture = header.require("Architecture")?.to_string();
        let records = records.iter().map(PackageRecord::from_paragraph).collect::<Result<_, _>>()?;
        let index = PackageIndex { kind, architecture, records };
        index.validate()?;
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(name: &str, version: &str, arch: &str) -> PackageRecord {
        PackageRecord {
            name: name.into(),
            version: VersionString::parse(version).unwrap(),
            architecture: arch.into(),
            sha256: Digest::of(format!("{name}{version}{arch}").as_bytes()),
            size: 100,
            depends: vec!["libc6".into()],
            source_ref: (arch != SOURCE_ARCH).then(|| PackageId::new(name, VersionString::parse(version).unwrap())),
            noncritical: BTreeMap::new(),
        }
    }

    #[test]
    fn meta_changed_ignores_noncritical() {
        let a = record("foo", "1.0-1", "amd64");
        assert!(!meta_changed(&a, &a).unwrap());
        let mut tagged = a.clone();
        tagged.noncritical.insert("Tag".into(), "role::program".into());
        assert!(!meta_changed(&a, &tagged).unwrap());
        let mut rehashed = a.clone();
        rehashed.sha256 = Digest::of(b"other");
        assert!(meta_changed(&a, &rehashed).unwrap());
        let mut sized = a.clone();
        sized.size += 1;
        assert!(meta_changed(&a, &sized).unwrap());
    }

    #[test]
    fn meta_changed_contract() {
        let a = record("foo", "1.0-1", "amd64");
        let b = record("bar", "1.0-1", "amd64");
        assert!(matches!(meta_changed(&a, &b), Err(ModelError::Contract(_))));
        let c = record("foo", "1.0-1", "arm64");
        assert!(matches!(meta_changed(&a, &c), Err(ModelError::Contract(_))));
    }

    #[test]
    fn index_round_trip_and_order_sensitivity() {
        let mut tagged = record("bar", "2.0-1", "amd64");
        tagged.noncritical.insert("Tag".into(), "x".into());
        tagged.noncritical.insert("Homepage".into(), "https://example.org".into());
        let idx = PackageIndex::sorted(IndexKind::Packages, "amd64", vec![record("foo", "1.0-1", "amd64"), tagged]);
        assert_eq!(idx.records[0].name, "bar");
        let bytes = idx.canonical_bytes();
        let parsed = PackageIndex::parse(&bytes).unwrap();
        assert_eq!(parsed, idx);
        assert_eq!(parsed.canonical_bytes(), bytes);

        let again = PackageIndex::sorted(IndexKind::Packages, "amd64", idx.records.clone());
        assert_eq!(again.canonical_bytes(), bytes);

        let mut permuted = idx.clone();
        permuted.records.reverse();
        assert_ne!(permuted.canonical_bytes(), bytes);
    }

    #[test]
    fn index_validation() {
        let dup = PackageIndex {
            kind: IndexKind::Packages,
            architecture: "amd64".into(),
            records: vec![record("foo", "1.0", "amd64"), record("foo", "1.1", "amd64")],
        };
        assert!(PackageIndex::parse(&dup.canonical_bytes()).is_err());
        let wrong_arch = PackageIndex {
            kind: IndexKind::Sources,
            architecture: "amd64".into(),
            records: vec![],
        };
        assert!(PackageIndex::parse(&wrong_arch.canonical_bytes()).is_err());
    }

    #[test]
    fn truncated_index_names_field() {
        let idx = PackageIndex::sorted(IndexKind::Sources, SOURCE_ARCH, vec![record("foo", "1.0", SOURCE_ARCH)]);
        let bytes = idx.canonical_bytes();
        let cut = &bytes[..bytes.len() - 40];
        let err = PackageIndex::parse(cut).unwrap_err();
        assert!(matches!(err, ModelError::Parse(_)), "{err}");
    }
}
