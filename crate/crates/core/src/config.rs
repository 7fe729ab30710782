//! `key = value` configuration files.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored. Lists
//! are comma separated. Every lookup remembers which line a key came from so
//! parse errors can point at it.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse { line: line_no, msg: format!("expected `key = value`, got `{line}`") });
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Parse { line: line_no, msg: "empty key".into() });
            }
            if entries.insert(key.to_string(), (line_no, v.trim().to_string())).is_some() {
                return Err(Error::Parse { line: line_no, msg: format!("duplicate key `{key}`") });
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|(l, _)| *l)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    /// Parsed value of `key`, or `None` when absent.
    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>>
    where
        V::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| Error::Parse { line: *line, msg: format!("key `{key}`: {e}") }),
        }
    }

    pub fn require<V: FromStr>(&self, key: &str) -> Result<V>
    where
        V::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    pub fn get_list<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>>
    where
        V::Err: std::fmt::Display,
    {
        let Some((line, v)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| Error::Parse { line: *line, msg: format!("key `{key}`: {e}") }))
            .collect::<Result<Vec<V>>>()
            .map(Some)
    }

    /// Errors on the first key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for (k, (line, _)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Parse { line: *line, msg: format!("unknown key `{k}`") });
            }
        }
        Ok(())
    }
}

/// Comma-joined `Debug` forms, which round-trip through `parse` for floats.
pub fn join_list<V: std::fmt::Debug>(values: &[V]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments_and_lists() {
        let kv = KvFile::parse("# header\n a = 1.5 \n\nlist = 1, 2,3 # trailing\nname=x\n").unwrap();
        assert_eq!(kv.require::<f64>("a").unwrap(), 1.5);
        assert_eq!(kv.get_list::<i32>("list").unwrap().unwrap(), vec![1, 2, 3]);
        assert_eq!(kv.line_of("list"), Some(4));
        assert_eq!(kv.require::<String>("name").unwrap(), "x");
    }

    #[test]
    fn errors_carry_context() {
        assert_eq!(
            KvFile::parse("a = 1\nnonsense\n").unwrap_err(),
            Error::Parse { line: 2, msg: "expected `key = value`, got `nonsense`".into() }
        );
        let kv = KvFile::parse("a = 1\nb = x\n").unwrap();
        assert_eq!(kv.require::<f64>("missing").unwrap_err(), Error::MissingKey("missing".into()));
        assert!(matches!(kv.require::<f64>("b"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(kv.reject_unknown(&["a"]), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(KvFile::parse("a=1\na=2"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn float_lists_round_trip() {
        let v = vec![0.1, -2.5e-7, 10.3];
        let kv = KvFile::parse(&format!("x = {}", join_list(&v))).unwrap();
        assert_eq!(kv.get_list::<f64>("x").unwrap().unwrap(), v);
    }
}
