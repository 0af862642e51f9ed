use std::fmt;

/// Reserved variable bound to the job name at decomposition time.
pub const JOBNAME_VAR: &str = "jobname";

/// Source line a node was parsed from.
///
/// Line numbers are metadata only: two nodes that differ only in their
/// source lines compare equal, so a pretty-printed and re-parsed plan is
/// structurally equal to the original.
#[derive(Debug, Clone, Copy, Eq)]
pub struct SourceLine(pub usize);

impl SourceLine {
    pub fn get(self) -> usize {
        self.0.max(1)
    }
}

impl Default for SourceLine {
    fn default() -> Self {
        SourceLine(1)
    }
}

impl PartialEq for SourceLine {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl PartialOrd for SourceLine {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SourceLine {
    fn cmp(&self, _other: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl std::hash::Hash for SourceLine {
    fn hash<H: std::hash::Hasher>(&self, _state: &mut H) {}
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanFile {
    pub parameters: Vec<ParameterDecl>,
    pub tasks: Vec<TaskDecl>,
}

impl PlanFile {
    pub fn parameter(&self, name: &str) -> Option<&ParameterDecl> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn task(&self, name: &str) -> Option<&TaskDecl> {
        self.tasks.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDecl {
    pub name: String,
    pub kind: ParameterKind,
    pub line: SourceLine,
}

impl ParameterDecl {
    pub fn new(name: impl Into<String>, kind: ParameterKind) -> Self {
        Self {
            name: name.into(),
            kind,
            line: SourceLine::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParameterKind {
    Single(String),
    Range {
        lo: f64,
        hi: f64,
        step: f64,
    },
    Set(Vec<String>),
    /// Dynamic parameter: an `lfn:` pattern resolved against the replica
    /// catalog at run time.
    Gridfile(String),
}

impl ParameterKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            ParameterKind::Single(_) => "single",
            ParameterKind::Range { .. } => "range",
            ParameterKind::Set(_) => "set",
            ParameterKind::Gridfile(_) => "gridfile",
        }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self, ParameterKind::Gridfile(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDecl {
    pub name: String,
    pub commands: Vec<Command>,
    pub line: SourceLine,
}

impl TaskDecl {
    pub fn new(name: impl Into<String>, commands: Vec<Command>) -> Self {
        Self {
            name: name.into(),
            commands,
            line: SourceLine::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub kind: CommandKind,
    pub line: SourceLine,
}

impl Command {
    pub fn new(kind: CommandKind) -> Self {
        Self {
            kind,
            line: SourceLine::default(),
        }
    }

    pub fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            CommandKind::Copy { src, dst } | CommandKind::MCopy { src, dst } => vec![src, dst],
            CommandKind::Execute { program, args, .. } => {
                std::iter::once(program).chain(args.iter()).collect()
            }
            CommandKind::Substitute { template, output } => vec![template, output],
        }
    }

    pub fn map_exprs(&self, mut f: impl FnMut(&Expr) -> Expr) -> Command {
        let kind = match &self.kind {
            CommandKind::Copy { src, dst } => CommandKind::Copy {
                src: f(src),
                dst: f(dst),
            },
            CommandKind::MCopy { src, dst } => CommandKind::MCopy {
                src: f(src),
                dst: f(dst),
            },
            CommandKind::Execute {
                on_node,
                program,
                args,
            } => CommandKind::Execute {
                on_node: *on_node,
                program: f(program),
                args: args.iter().map(&mut f).collect(),
            },
            CommandKind::Substitute { template, output } => CommandKind::Substitute {
                template: f(template),
                output: f(output),
            },
        };
        Command {
            kind,
            line: self.line,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommandKind {
    Copy {
        src: Expr,
        dst: Expr,
    },
    /// Copy of several files selected by a wildcard source.
    MCopy {
        src: Expr,
        dst: Expr,
    },
    /// Run a program; `on_node` records the `node:execute` spelling.
    Execute {
        on_node: bool,
        program: Expr,
        args: Vec<Expr>,
    },
    Substitute {
        template: Expr,
        output: Expr,
    },
}

/// A path or argument word, possibly carrying a `node:` location prefix and
/// `$NAME` variable references.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Expr(pub String);

impl Expr {
    pub fn new(s: impl Into<String>) -> Self {
        Expr(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True when the word names a location on the remote node.
    pub fn is_node_path(&self) -> bool {
        self.0.starts_with("node:")
    }

    pub fn has_wildcard(&self) -> bool {
        self.0.contains(['*', '?'])
    }

    /// Names of every `$NAME` reference, in order of appearance.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let bytes = self.0.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'$' {
                let len = ident_len(&self.0[i + 1..]);
                if len > 0 {
                    out.push(&self.0[i + 1..i + 1 + len]);
                    i += 1 + len;
                    continue;
                }
            }
            i += 1;
        }
        out
    }

    /// Replaces every resolvable `$NAME` reference using `lookup`.
    /// References `lookup` does not know are left verbatim.
    pub fn substitute<'a>(&self, lookup: impl Fn(&str) -> Option<&'a str>) -> Expr {
        let mut out = String::with_capacity(self.0.len());
        let mut rest = self.0.as_str();
        while let Some(pos) = rest.find('$') {
            out.push_str(&rest[..pos]);
            let after = &rest[pos + 1..];
            let len = ident_len(after);
            match (len > 0).then(|| lookup(&after[..len])).flatten() {
                Some(value) => {
                    out.push_str(value);
                    rest = &after[len..];
                }
                None => {
                    out.push('$');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Expr(out)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn ident_len(s: &str) -> usize {
    let mut chars = s.char_indices();
    match chars.next() {
        Some((_, c)) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return 0,
    }
    chars
        .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
        .map(|(i, _)| i)
        .unwrap_or(s.len())
}

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty() && ident_len(s) == s.len()
}
