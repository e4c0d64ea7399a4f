//! Debian-style package versions: `[epoch:]upstream[-revision]`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VersionError {
    #[error("empty version string")]
    Empty,
    #[error("invalid epoch {0:?}")]
    Epoch(String),
    #[error("upstream version {0:?} must start with a digit")]
    UpstreamStart(String),
    #[error("invalid character {ch:?} in {part} {value:?}")]
    Character { ch: char, part: &'static str, value: String },
}

/// A parsed version. Equality is textual; use [`compare_versions`] (or
/// `Ord`) for the package-manager ordering, under which e.g. `1.0` and
/// `0:1.0` are equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VersionString {
    pub epoch: u64,
    pub upstream: String,
    pub revision: String,
    // Whether the epoch was written out, so the text round-trips.
    explicit_epoch: bool,
}

impl VersionString {
    pub fn parse(text: &str) -> Result<Self, VersionError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(VersionError::Empty);
        }
        let (epoch, explicit_epoch, rest) = match text.split_once(':') {
            Some((e, rest)) => {
                if e.is_empty() || !e.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(VersionError::Epoch(e.to_string()));
                }
                let epoch = e.parse().map_err(|_| VersionError::Epoch(e.to_string()))?;
                (epoch, true, rest)
            }
            None => (0, false, text),
        };
        let (upstream, revision) = match rest.rsplit_once('-') {
            Some((u, r)) => (u, r),
            None => (rest, ""),
        };
        if !upstream.starts_with(|c: char| c.is_ascii_digit()) {
            return Err(VersionError::UpstreamStart(upstream.to_string()));
        }
        for ch in upstream.chars() {
            if !(ch.is_ascii_alphanumeric() || ".+~-".contains(ch)) {
                return Err(VersionError::Character { ch, part: "upstream", value: upstream.into() });
            }
        }
        if rest.contains('-') && revision.is_empty() {
            return Err(VersionError::Character { ch: '-', part: "revision", value: String::new() });
        }
        for ch in revision.chars() {
            if !(ch.is_ascii_alphanumeric() || "+.~".contains(ch)) {
                return Err(VersionError::Character { ch, part: "revision", value: revision.into() });
            }
        }
        Ok(VersionString {
            epoch,
            upstream: upstream.to_string(),
            revision: revision.to_string(),
            explicit_epoch,
        })
    }
}

impl fmt::Display for VersionString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.explicit_epoch || self.epoch != 0 {
            write!(f, "{}:", self.epoch)?;
        }
        f.write_str(&self.upstream)?;
        if !self.revision.is_empty() {
            write!(f, "-{}", self.revision)?;
        }
        Ok(())
    }
}

impl FromStr for VersionString {
    type Err = VersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VersionString::parse(s)
    }
}

impl Serialize for VersionString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VersionString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        VersionString::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Package-manager ordering of two versions.
pub fn compare_versions(a: &VersionString, b: &VersionString) -> Ordering {
    a.epoch
        .cmp(&b.epoch)
        .then_with(|| compare_part(&a.upstream, &b.upstream))
        .then_with(|| compare_part(&a.revision, &b.revision))
}

/// Weight of a character in a non-digit run: `~` sorts before everything,
/// including the end of the run, letters before other symbols.
fn char_order(c: Option<u8>) -> i32 {
    match c {
        None => 0,
        Some(b'~') => -1,
        Some(c) if c.is_ascii_digit() => 0,
        Some(c) if c.is_ascii_alphabetic() => c as i32,
        Some(c) => c as i32 + 256,
    }
}

fn compare_part(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    while !a.is_empty() || !b.is_empty() {
        // Non-digit run, compared character by character.
        let a_run = a.iter().take_while(|c| !c.is_ascii_digit()).count();
        let b_run = b.iter().take_while(|c| !c.is_ascii_digit()).count();
        for i in 0..a_run.max(b_run) {
            let ca = char_order(a.get(i).copied().filter(|_| i < a_run));
            let cb = char_order(b.get(i).copied().filter(|_| i < b_run));
            if ca != cb {
                return ca.cmp(&cb);
            }
        }
        a = &a[a_run..];
        b = &b[b_run..];

        // Digit run, compared numerically without overflow.
        let a_digits = a.iter().take_while(|c| c.is_ascii_digit()).count();
        let b_digits = b.iter().take_while(|c| c.is_ascii_digit()).count();
        let a_num = trim_zeros(&a[..a_digits]);
        let b_num = trim_zeros(&b[..b_digits]);
        let ord = a_num.len().cmp(&b_num.len()).then_with(|| a_num.cmp(b_num));
        if ord != Ordering::Equal {
            return ord;
        }
        a = &a[a_digits..];
        b = &b[b_digits..];
    }
    Ordering::Equal
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let zeros = digits.iter().take_while(|&&d| d == b'0').count();
    &digits[zeros..]
}

impl PartialOrd for VersionString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Note: `Ord` can report `Equal` for textually different versions.
impl Ord for VersionString {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_versions(self, other)
    }
}
