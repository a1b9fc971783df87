//! Language extensions: open reduce bodies, conditionals, `foldl` and `map`.
//!
//! The flags only widen the accepted source fragment; the derivative
//! clauses for the extra constructs live in [`crate::diff`].

use std::fmt;

/// Which source extensions are enabled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Extensions {
    /// `reduce` bodies may mention context variables.
    pub reduce_open: bool,
    /// `if` with literal booleans.
    pub cond: bool,
    /// `foldl` and `map`.
    pub foldl: bool,
    /// The non-smooth `gt0` test as a condition (requires `cond`).
    pub gt0: bool,
}

/// An unknown extension name.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown extension `{0}` (expected reduce-open, cond, foldl or gt0)")]
pub struct UnknownExtension(pub String);

impl Extensions {
    pub fn none() -> Self {
        Extensions::default()
    }

    pub fn all() -> Self {
        Extensions {
            reduce_open: true,
            cond: true,
            foldl: true,
            gt0: true,
        }
    }

    /// Parses a comma-separated list such as `reduce-open,cond,foldl`.
    /// `map` is accepted as a synonym for `foldl`; `gt0` implies `cond`.
    pub fn parse(s: &str) -> Result<Self, UnknownExtension> {
        let mut e = Extensions::none();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "reduce-open" => e.reduce_open = true,
                "cond" => e.cond = true,
                "foldl" | "map" => e.foldl = true,
                "gt0" => {
                    e.gt0 = true;
                    e.cond = true;
                }
                "all" => e = Extensions::all(),
                other => return Err(UnknownExtension(other.to_string())),
            }
        }
        Ok(e)
    }
}

impl fmt::Display for Extensions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.reduce_open {
            parts.push("reduce-open");
        }
        if self.cond {
            parts.push("cond");
        }
        if self.foldl {
            parts.push("foldl");
        }
        if self.gt0 {
            parts.push("gt0");
        }
        f.write_str(&parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let e = Extensions::parse("reduce-open,cond,foldl").unwrap();
        assert_eq!(e.to_string(), "reduce-open,cond,foldl");
        assert_eq!(Extensions::parse("").unwrap(), Extensions::none());
        assert!(Extensions::parse("gt0").unwrap().cond);
        assert!(Extensions::parse("loops").is_err());
    }
}
