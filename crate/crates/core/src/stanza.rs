//! A small RFC-822-style stanza format in the spirit of APT control files.
//!
//! ```text
//! Field: value
//! Multi:
//!  first continuation line
//!  second continuation line
//!
//! Next: paragraph
//! ```
//!
//! Paragraphs are separated by one blank line, every line ends with `\n`,
//! and field names are `[A-Za-z0-9-]+`. The writer is canonical: the same
//! paragraphs always produce the same bytes.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct StanzaError {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for StanzaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "line {}: field {:?}: {}", self.line, field, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

impl StanzaError {
    pub fn field(field: &str, message: impl Into<String>) -> Self {
        StanzaError { line: 0, field: Some(field.to_string()), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub value: String,
    pub continuation: Vec<String>,
    line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Paragraph {
    fields: Vec<Field>,
}

impl Paragraph {
    pub fn new() -> Self {
        Paragraph::default()
    }

    pub fn push(&mut self, name: &str, value: impl fmt::Display) -> &mut Self {
        self.fields.push(Field {
            name: name.to_string(),
            value: value.to_string(),
            continuation: Vec::new(),
            line: 0,
        });
        self
    }

    pub fn push_lines<I, S>(&mut self, name: &str, lines: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: fmt::Display,
    {
        self.fields.push(Field {
            name: name.to_string(),
            value: String::new(),
            continuation: lines.into_iter().map(|l| l.to_string()).collect(),
            line: 0,
        });
        self
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn get(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn value(&self, name: &str) -> Option<&str> {
        self.get(name).map(|f| f.value.as_str())
    }

    pub fn require(&self, name: &str) -> Result<&str, StanzaError> {
        match self.get(name) {
            Some(f) if !f.value.is_empty() => Ok(&f.value),
            Some(f) => Err(StanzaError {
                line: f.line,
                field: Some(name.to_string()),
                message: "empty value".into(),
            }),
            None => Err(StanzaError {
                line: self.fields.first().map_or(0, |f| f.line),
                field: Some(name.to_string()),
                message: "missing field".into(),
            }),
        }
    }

    /// Parses a required field with `FromStr`, naming the field on failure.
    pub fn parse_field<T>(&self, name: &str) -> Result<T, StanzaError>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        let raw = self.require(name)?;
        raw.parse().map_err(|e: T::Err| StanzaError {
            line: self.get(name).map_or(0, |f| f.line),
            field: Some(name.to_string()),
            message: e.to_string(),
        })
    }

    pub fn error(&self, name: &str, message: impl Into<String>) -> StanzaError {
        StanzaError {
            line: self.get(name).map_or(0, |f| f.line),
            field: Some(name.to_string()),
            message: message.into(),
        }
    }

    pub fn write_to(&self, out: &mut String) {
        for field in &self.fields {
            out.push_str(&field.name);
            out.push(':');
            if !field.value.is_empty() {
                out.push(' ');
                out.push_str(&field.value);
            }
            out.push('\n');
            for line in &field.continuation {
                out.push(' ');
                out.push_str(line);
                out.push('\n');
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        self.write_to(&mut out);
        out.into_bytes()
    }
}

/// Writes paragraphs separated by blank lines.
pub fn write_paragraphs(paragraphs: &[Paragraph]) -> Vec<u8> {
    let mut out = String::new();
    for (i, p) in paragraphs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        p.write_to(&mut out);
    }
    out.into_bytes()
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

/// Parses a whole document into paragraphs. Strict: rejects CR, missing
/// trailing newline, doubled blank lines and malformed field lines.
pub fn parse_paragraphs(bytes: &[u8]) -> Result<Vec<Paragraph>, StanzaError> {
    let text = std::str::from_utf8(bytes).map_err(|e| StanzaError {
        line: 0,
        field: None,
        message: format!("not UTF-8: {e}"),
    })?;
    if text.is_empty() {
        return Ok(Vec::new());
    }
    if !text.ends_with('\n') {
        return Err(StanzaError {
            line: text.lines().count(),
            field: None,
            message: "truncated: missing final newline".into(),
        });
    }
    let mut paragraphs = Vec::new();
    let mut current = Paragraph::new();
    for (idx, line) in text[..text.len() - 1].split('\n').enumerate() {
        let lineno = idx + 1;
        if line.contains('\r') {
            return Err(StanzaError { line: lineno, field: None, message: "carriage return".into() });
        }
        if line.is_empty() {
            if current.fields.is_empty() {
                return Err(StanzaError { line: lineno, field: None, message: "unexpected blank line".into() });
            }
            paragraphs.push(std::mem::take(&mut current));
            continue;
        }
        if let Some(rest) = line.strip_prefix(' ') {
            match current.fields.last_mut() {
                Some(field) => field.continuation.push(rest.to_string()),
                None => {
                    return Err(StanzaError {
                        line: lineno,
                        field: None,
                        message: "continuation line without field".into(),
                    })
                }
            }
            continue;
        }
        let Some((name, value)) = line.split_once(':') else {
            return Err(StanzaError { line: lineno, field: None, message: format!("expected `Name: value`, got {line:?}") });
        };
        if !valid_name(name) {
            return Err(StanzaError { line: lineno, field: Some(name.to_string()), message: "invalid field name".into() });
        }
        let value = match value.strip_prefix(' ') {
            Some(v) => v,
            None if value.is_empty() => "",
            None => {
                return Err(StanzaError { line: lineno, field: Some(name.to_string()), message: "missing space after colon".into() })
            }
        };
        if current.get(name).is_some() {
            return Err(StanzaError { line: lineno, field: Some(name.to_string()), message: "duplicate field".into() });
        }
        current.fields.push(Field {
            name: name.to_string(),
            value: value.to_string(),
            continuation: Vec::new(),
            line: lineno,
        });
    }
    if current.fields.is_empty() {
        return Err(StanzaError { line: text.lines().count(), field: None, message: "trailing blank line".into() });
    }
    paragraphs.push(current);
    Ok(paragraphs)
}

/// Parses exactly one paragraph.
pub fn parse_paragraph(bytes: &[u8]) -> Result<Paragraph, StanzaError> {
    let mut paragraphs = parse_paragraphs(bytes)?;
    match paragraphs.len() {
        1 => Ok(paragraphs.remove(0)),
        n => Err(StanzaError { line: 0, field: None, message: format!("expected one paragraph, found {n}") }),
    }
}

/// Splits `header paragraph || "\n" || body` at the first blank line.
pub fn split_header(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let pos = bytes.windows(2).position(|w| w == b"\n\n")?;
    Some((&bytes[..pos + 1], &bytes[pos + 2..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut a = Paragraph::new();
        a.push("Package", "foo").push("Version", "1.0-1");
        a.push_lines("Indices", ["Packages amd64 aa 10", "Sources source bb 20"]);
        let mut b = Paragraph::new();
        b.push("Package", "bar");
        let bytes = write_paragraphs(&[a.clone(), b.clone()]);
        assert_eq!(
            std::str::from_utf8(&bytes).unwrap(),
            "Package: foo\nVersion: 1.0-1\nIndices:\n Packages amd64 aa 10\n Sources source bb 20\n\nPackage: bar\n"
        );
        let parsed = parse_paragraphs(&bytes).unwrap();
        assert_eq!(write_paragraphs(&parsed), bytes);
        assert_eq!(parsed[0].value("Version"), Some("1.0-1"));
        assert_eq!(parsed[0].get("Indices").unwrap().continuation.len(), 2);
    }

    #[test]
    fn errors_name_line_and_field() {
        let err = parse_paragraphs(b"Package: foo\nVersion 1.0\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_paragraphs(b"Package: foo\nPackage: bar\n").unwrap_err();
        assert_eq!(err.field.as_deref(), Some("Package"));
        let err = parse_paragraphs(b"Package: foo").unwrap_err();
        assert!(err.message.contains("truncated"));
        assert!(parse_paragraphs(b"A: b\n\n\nC: d\n").is_err());
        assert!(parse_paragraphs(b"A: b\r\n").is_err());
        let p = parse_paragraph(b"A: b\n").unwrap();
        assert_eq!(p.require("Z").unwrap_err().message, "missing field");
    }

    #[test]
    fn header_split() {
        let (h, body) = split_header(b"A: b\n\n\x00\x01binary\n\n").unwrap();
        assert_eq!(h, b"A: b\n");
        assert_eq!(body, b"\x00\x01binary\n\n");
    }
}
