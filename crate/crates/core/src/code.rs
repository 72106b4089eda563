//! Gardiner sign-list codes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A validated Gardiner code such as `A1`, `Aa15`, `T9D` or the composite `G17+M17`.
///
/// Composite codes are treated as atomic classes. Ordering is plain
/// lexicographic string order, which is what every tie-break uses.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GardinerCode(String);

impl GardinerCode {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        if is_valid_code(&code) {
            Ok(Self(code))
        } else {
            Err(Error::InvalidCode(code))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Alphabetic prefix of the code: `"Aa1"` → `"Aa"`, `"A1"` → `"A"`.
    /// Composite codes use their first member.
    pub fn group(&self) -> &str {
        let first = self.0.split('+').next().unwrap_or(&self.0);
        let end = first
            .char_indices()
            .find(|(_, c)| c.is_ascii_digit())
            .map(|(i, _)| i)
            .unwrap_or(first.len());
        &first[..end]
    }
}

/// One atom matches `[A-Z][a-z]?[0-9]+[A-Z]?`.
fn is_valid_atom(atom: &str) -> bool {
    let b = atom.as_bytes();
    let mut i = 0;
    if b.first().is_none_or(|c| !c.is_ascii_uppercase()) {
        return false;
    }
    i += 1;
    if b.get(i).is_some_and(|c| c.is_ascii_lowercase()) {
        i += 1;
    }
    let digits_start = i;
    while b.get(i).is_some_and(|c| c.is_ascii_digit()) {
        i += 1;
    }
    if i == digits_start {
        return false;
    }
    if b.get(i).is_some_and(|c| c.is_ascii_uppercase()) {
        i += 1;
    }
    i == b.len()
}

pub fn is_valid_code(code: &str) -> bool {
    !code.is_empty() && code.split('+').all(is_valid_atom)
}

impl fmt::Display for GardinerCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for GardinerCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(s)
    }
}

impl TryFrom<String> for GardinerCode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::new(s)
    }
}

impl From<GardinerCode> for String {
    fn from(c: GardinerCode) -> Self {
        c.0
    }
}

impl AsRef<str> for GardinerCode {
    fn as_ref(&self) -> &str {
        &self.0
    }
}
