//! Replica catalog: logical file names in a virtual directory tree, each
//! mapped to one or more physical replicas on data hosts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::DataHostId;

pub const LFN_SCHEME: &str = "lfn:";

#[derive(Debug, Error, PartialEq)]
pub enum CatalogError {
    #[error("`{0}` is not a valid logical file name: {1}")]
    InvalidLfn(String, &'static str),
    #[error("`{0}` is not a valid lfn pattern: {1}")]
    MalformedPattern(String, &'static str),
    #[error("file size must be positive for `{0}`")]
    ZeroSize(String),
    #[error("`{0}` must have at least one replica")]
    NoReplicas(String),
    #[error("`{lfn}` is registered with size {existing}, not {requested}")]
    SizeConflict {
        lfn: String,
        existing: u64,
        requested: u64,
    },
    #[error("unknown data host `{0}`")]
    UnknownHost(DataHostId),
    #[error("unknown logical file `{0}`")]
    UnknownLfn(String),
}

/// Normalized absolute logical file name, e.g. `lfn:/users/analyst/a.mdst`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LogicalFileName(String);

impl LogicalFileName {
    pub fn parse(s: &str) -> Result<Self, CatalogError> {
        if s.contains(['*', '?']) {
            return Err(CatalogError::InvalidLfn(
                s.into(),
                "contains wildcard characters",
            ));
        }
        let segments = normalize(s).map_err(|why| CatalogError::InvalidLfn(s.to_owned(), why))?;
        if segments.is_empty() {
            return Err(CatalogError::InvalidLfn(
                s.into(),
                "names the root directory",
            ));
        }
        Ok(Self(join(&segments)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Path part after the scheme, starting with `/`.
    pub fn path(&self) -> &str {
        &self.0[LFN_SCHEME.len()..]
    }

    pub fn file_name(&self) -> &str {
        self.path().rsplit('/').next().unwrap_or_default()
    }

    /// True when this name lies below the virtual directory `dir`.
    pub fn is_in_directory(&self, dir: &str) -> bool {
        match normalize(dir) {
            Ok(segs) if segs.is_empty() => true,
            Ok(segs) => {
                let prefix = join(&segs);
                self.0.len() > prefix.len()
                    && self.0.starts_with(&prefix)
                    && self.0.as_bytes()[prefix.len()] == b'/'
            }
            Err(_) => false,
        }
    }
}

impl fmt::Display for LogicalFileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for LogicalFileName {
    type Error = CatalogError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<LogicalFileName> for String {
    fn from(l: LogicalFileName) -> String {
        l.0
    }
}

/// Splits an `lfn:` path into normalized segments: duplicate slashes and `.`
/// are dropped, `..` pops its parent.
fn normalize(s: &str) -> Result<Vec<&str>, &'static str> {
    let path = s.strip_prefix(LFN_SCHEME).ok_or("missing `lfn:` scheme")?;
    if !path.starts_with('/') {
        return Err("path must be absolute");
    }
    let mut out: Vec<&str> = Vec::new();
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                out.pop().ok_or("`..` escapes the root directory")?;
            }
            s => out.push(s),
        }
    }
    Ok(out)
}

fn join(segments: &[&str]) -> String {
    let mut s = String::from(LFN_SCHEME);
    for seg in segments {
        s.push('/');
        s.push_str(seg);
    }
    if segments.is_empty() {
        s.push('/');
    }
    s
}

/// Glob over logical file names. `*` matches any run of characters inside
/// one path segment and `?` exactly one character; there is no recursive
/// `**` form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LfnPattern {
    raw: String,
    segments: Vec<Vec<char>>,
}

impl LfnPattern {
    pub fn parse(s: &str) -> Result<Self, CatalogError> {
        let bad = |why| CatalogError::MalformedPattern(s.to_owned(), why);
        if s.contains("**") {
            return Err(bad("recursive `**` is not supported"));
        }
        let path = s
            .strip_prefix(LFN_SCHEME)
            .ok_or(bad("missing `lfn:` scheme"))?;
        if !path.starts_with('/') {
            return Err(bad("path must be absolute"));
        }
        let segments: Vec<&str> = path.split('/').skip(1).collect();
        if segments.iter().any(|seg| seg.is_empty()) {
            return Err(bad("empty path segment"));
        }
        if segments.iter().any(|seg| *seg == "." || *seg == "..") {
            return Err(bad("relative segments are not allowed"));
        }
        Ok(Self {
            raw: s.to_owned(),
            segments: segments.iter().map(|seg| seg.chars().collect()).collect(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn matches(&self, lfn: &LogicalFileName) -> bool {
        let mut names = lfn.path().split('/').skip(1);
        let mut count = 0;
        for pat in &self.segments {
            let Some(name) = names.next() else {
                return false;
            };
            let name: Vec<char> = name.chars().collect();
            if !glob_segment(pat, &name) {
                return false;
            }
            count += 1;
        }
        names.next().is_none() && count == self.segments.len()
    }
}

fn glob_segment(pat: &[char], text: &[char]) -> bool {
    let (mut p, mut t) = (0, 0);
    let mut backtrack: Option<(usize, usize)> = None;
    while t < text.len() {
        match pat.get(p) {
            Some('*') => {
                backtrack = Some((p, t));
                p += 1;
            }
            Some(&c) if c == '?' || c == text[t] => {
                p += 1;
                t += 1;
            }
            _ => match backtrack {
                Some((bp, bt)) => {
                    p = bp + 1;
                    t = bt + 1;
                    backtrack = Some((bp, bt + 1));
                }
                None => return false,
            },
        }
    }
    pat[p..].iter().all(|c| *c == '*')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replica {
    pub host: DataHostId,
    pub path: String,
}

impl Replica {
    pub fn new(host: impl Into<String>, path: impl Into<String>) -> Self {
        Self {
            host: DataHostId(host.into()),
            path: path.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaEntry {
    pub lfn: LogicalFileName,
    pub replicas: Vec<Replica>,
    pub size: u64,
}

impl ReplicaEntry {
    pub fn hosts(&self) -> impl Iterator<Item = &DataHostId> {
        self.replicas.iter().map(|r| &r.host)
    }
}

/// In-memory replica catalog bound to a fixed set of known data hosts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    hosts: BTreeSet<DataHostId>,
    entries: BTreeMap<LogicalFileName, ReplicaEntry>,
}

impl Catalog {
    pub fn new(hosts: impl IntoIterator<Item = DataHostId>) -> Self {
        Self {
            hosts: hosts.into_iter().collect(),
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Registers replicas of `lfn`. Registering an existing name again
    /// merges new replica locations, provided the size agrees.
    pub fn register(
        &mut self,
        lfn: LogicalFileName,
        size: u64,
        replicas: Vec<Replica>,
    ) -> Result<&ReplicaEntry, CatalogError> {
        if size == 0 {
            return Err(CatalogError::ZeroSize(lfn.0));
        }
        if replicas.is_empty() {
            return Err(CatalogError::NoReplicas(lfn.0));
        }
        if let Some(r) = replicas.iter().find(|r| !self.hosts.contains(&r.host)) {
            return Err(CatalogError::UnknownHost(r.host.clone()));
        }
        if let Some(existing) = self.entries.get(&lfn) {
            if existing.size != size {
                return Err(CatalogError::SizeConflict {
                    lfn: lfn.0,
                    existing: existing.size,
                    requested: size,
                });
            }
        }
        let entry = self
            .entries
            .entry(lfn.clone())
            .or_insert_with(|| ReplicaEntry {
                lfn,
                replicas: Vec::new(),
                size,
            });
        for r in replicas {
            if !entry.replicas.contains(&r) {
                entry.replicas.push(r);
            }
        }
        Ok(entry)
    }

    pub fn lookup_replicas(&self, lfn: &LogicalFileName) -> Result<&ReplicaEntry, CatalogError> {
        self.entries
            .get(lfn)
            .ok_or_else(|| CatalogError::UnknownLfn(lfn.to_string()))
    }

    /// Registered names matching `pattern`, sorted and duplicate free.
    pub fn resolve_wildcard(&self, pattern: &str) -> Result<Vec<LogicalFileName>, CatalogError> {
        let pattern = LfnPattern::parse(pattern)?;
        Ok(self
            .entries
            .keys()
            .filter(|lfn| pattern.matches(lfn))
            .cloned()
            .collect())
    }

    /// Entries under the virtual directory `dir` (recursively).
    pub fn list_directory(&self, dir: &str) -> Vec<&ReplicaEntry> {
        self.entries
            .values()
            .filter(|e| e.lfn.is_in_directory(dir))
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ReplicaEntry> {
        self.entries.values()
    }

    pub fn hosts(&self) -> impl Iterator<Item = &DataHostId> {
        self.hosts.iter()
    }
}
