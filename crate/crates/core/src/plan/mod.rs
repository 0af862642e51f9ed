//! The declarative parametric plan language.
//!
//! A plan declares parameters and two tasks, `nodestart` (stage-in) and
//! `main`. It is line oriented:
//!
//! ```text
//! parameter INFILE Gridfile lfn:/users/analyst/fsimddks/fsimdata*.mdst;
//! task main
//!   node:execute ./runme.ddksana $INFILE $jobname
//!   copy node:runme.log runme.log.$jobname
//! endtask
//! ```
//!
//! See `docs/plan-language.md` for the full grammar.

mod ast;
mod parser;
mod validate;

use std::fmt;

pub use ast::{
    Command, CommandKind, Expr, ParameterDecl, ParameterKind, PlanFile, SourceLine, TaskDecl,
    JOBNAME_VAR,
};
pub use parser::parse_plan;
pub use validate::{validate_plan, MAIN_TASK, NODESTART_TASK};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub line: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn error(line: usize, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            line: line.max(1),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "line {}: {sev}: {}", self.line, self.message)
    }
}

impl fmt::Display for PlanFile {
    /// Canonical text form; parsing it yields a structurally equal plan.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.parameters {
            write!(f, "parameter {} {}", p.name, p.kind.keyword())?;
            match &p.kind {
                ParameterKind::Single(v) => write!(f, " {v}")?,
                ParameterKind::Range { lo, hi, step } => write!(f, " {lo} {hi} {step}")?,
                ParameterKind::Set(values) => {
                    for v in values {
                        write!(f, " {v}")?;
                    }
                }
                ParameterKind::Gridfile(pattern) => write!(f, " {pattern}")?,
            }
            writeln!(f, ";")?;
        }
        for t in &self.tasks {
            writeln!(f, "task {}", t.name)?;
            for c in &t.commands {
                writeln!(f, "  {c}")?;
            }
            writeln!(f, "endtask")?;
        }
        Ok(())
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CommandKind::Copy { src, dst } => write!(f, "copy {src} {dst}"),
            CommandKind::MCopy { src, dst } => write!(f, "mcopy {src} {dst}"),
            CommandKind::Substitute { template, output } => {
                write!(f, "substitute {template} {output}")
            }
            CommandKind::Execute {
                on_node,
                program,
                args,
            } => {
                let kw = if *on_node { "node:execute" } else { "execute" };
                write!(f, "{kw} {program}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
        }
    }
}
