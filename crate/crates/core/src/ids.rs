//! Identifier newtypes and interest-term normalization.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// A platform member (an individual who RSVPs to events).
    MemberId
);
string_id!(
    /// A group hosting events.
    GroupId
);
string_id!(EventId);

/// A normalized interest token: lowercased, trimmed, internal whitespace
/// collapsed to single spaces. Never empty.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct InterestTerm(String);

impl InterestTerm {
    /// Returns `None` when the raw text is blank.
    pub fn new(raw: &str) -> Option<Self> {
        let token = raw
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ");
        (!token.is_empty()).then_some(Self(token))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for InterestTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for InterestTerm {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        InterestTerm::new(&raw).ok_or_else(|| serde::de::Error::custom("empty interest term"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_case_and_whitespace() {
        let t = InterestTerm::new("  Big \t  Data ").unwrap();
        assert_eq!(t.as_str(), "big data");
        assert_eq!(t, InterestTerm::new("big data").unwrap());
    }

    #[test]
    fn blank_term_rejected() {
        assert!(InterestTerm::new("   ").is_none());
        assert!(InterestTerm::new("").is_none());
    }
}
