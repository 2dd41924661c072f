//! Closed enumerations parsed from and rendered to fixed text tokens.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown {what} token `{token}`")]
pub struct ParseTokenError {
    pub what: &'static str,
    pub token: String,
}

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident, $what:literal, { $($variant:ident => $tok:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[derive(serde::Serialize, serde::Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $tok),+ }
            }
        }

        impl std::str::FromStr for $name {
            type Err = $crate::tokens::ParseTokenError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim() {
                    $($tok => Ok($name::$variant),)+
                    other => Err($crate::tokens::ParseTokenError { what: $what, token: other.to_string() }),
                }
            }
        }

        impl TryFrom<String> for $name {
            type Error = $crate::tokens::ParseTokenError;
            fn try_from(s: String) -> Result<Self, Self::Error> { s.parse() }
        }

        impl From<$name> for String {
            fn from(v: $name) -> String { v.as_str().to_string() }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result { f.write_str(self.as_str()) }
        }
    };
}
