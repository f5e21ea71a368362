//! Flat `key=value` text files used for manifests and experiment configs.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered `key=value` pairs; `#` starts a comment line.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces an existing key in place or appends.
    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing key '{key}'")))
    }

    pub fn parse<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.get(key)
            .map(|v| {
                v.parse::<V>()
                    .map_err(|_| Error::Config(format!("bad value for '{key}': '{v}'")))
            })
            .transpose()
    }

    pub fn parse_required<V: FromStr>(&self, key: &str) -> Result<V> {
        self.parse(key)?
            .ok_or_else(|| Error::Config(format!("missing key '{key}'")))
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut out = Manifest::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            out.set(k.trim(), v.trim());
        }
        Ok(out)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut m = Manifest::from_text("# comment\nk = 4\nmu=4.5\n\nk=5\n").unwrap();
        assert_eq!(m.parse_required::<u32>("k").unwrap(), 5);
        assert_eq!(m.parse::<f64>("mu").unwrap(), Some(4.5));
        assert!(m.parse::<u32>("mu").is_err());
        m.set("mu", 1);
        assert_eq!(Manifest::from_text(&m.to_text()).unwrap(), m);
        assert!(Manifest::from_text("novalue").is_err());
    }
}
