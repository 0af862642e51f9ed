use std::collections::{BTreeMap, BTreeSet};

use super::ast::{is_identifier, CommandKind, ParameterKind, PlanFile, JOBNAME_VAR};
use super::Diagnostic;

pub const NODESTART_TASK: &str = "nodestart";
pub const MAIN_TASK: &str = "main";

/// Checks every plan invariant. The result is empty iff the plan is well
/// formed and every `$NAME` reference resolves.
pub fn validate_plan(plan: &PlanFile) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut declared: BTreeMap<&str, usize> = BTreeMap::new();

    for p in &plan.parameters {
        let line = p.line.get();
        if !is_identifier(&p.name) {
            diags.push(Diagnostic::error(
                line,
                format!("`{}` is not a valid parameter name", p.name),
            ));
        }
        if p.name == JOBNAME_VAR {
            diags.push(Diagnostic::error(
                line,
                format!("`{JOBNAME_VAR}` is reserved and cannot be declared"),
            ));
        }
        if let Some(first) = declared.get(p.name.as_str()) {
            diags.push(Diagnostic::error(
                line,
                format!(
                    "duplicate parameter `{}` (first declared on line {first})",
                    p.name
                ),
            ));
        } else {
            declared.insert(&p.name, line);
        }
        match &p.kind {
            ParameterKind::Single(_) => {}
            ParameterKind::Range { lo, hi, step } => {
                if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
                    diags.push(Diagnostic::error(line, "range values must be finite"));
                } else {
                    if *step <= 0.0 {
                        diags.push(Diagnostic::error(line, "range step must be positive"));
                    }
                    if lo > hi {
                        diags.push(Diagnostic::error(
                            line,
                            "range lower bound exceeds upper bound",
                        ));
                    }
                }
            }
            ParameterKind::Set(values) => {
                if values.is_empty() {
                    diags.push(Diagnostic::error(line, "set parameter has no values"));
                }
                let mut seen = BTreeSet::new();
                for v in values {
                    if !seen.insert(v) {
                        diags.push(Diagnostic::error(
                            line,
                            format!("duplicate set value `{v}`"),
                        ));
                    }
                }
            }
            ParameterKind::Gridfile(pattern) => {
                if !pattern.starts_with("lfn:") {
                    diags.push(Diagnostic::error(
                        line,
                        format!("gridfile pattern `{pattern}` must start with `lfn:`"),
                    ));
                }
            }
        }
    }

    let mut seen_tasks: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &plan.tasks {
        let line = t.line.get();
        if t.name != NODESTART_TASK && t.name != MAIN_TASK {
            diags.push(Diagnostic::error(
                line,
                format!(
                    "unknown task `{}` (expected `{NODESTART_TASK}` or `{MAIN_TASK}`)",
                    t.name
                ),
            ));
        } else if let Some(first) = seen_tasks.get(t.name.as_str()) {
            diags.push(Diagnostic::error(
                line,
                format!("task `{}` already defined on line {first}", t.name),
            ));
        } else {
            seen_tasks.insert(&t.name, line);
        }

        for cmd in &t.commands {
            let line = cmd.line.get();
            if let CommandKind::MCopy { src, .. } = &cmd.kind {
                if !src.has_wildcard() {
                    diags.push(Diagnostic::error(
                        line,
                        format!("mcopy source `{src}` has no wildcard (`*` or `?`)"),
                    ));
                }
            }
            for expr in cmd.exprs() {
                for name in expr.references() {
                    if name != JOBNAME_VAR && !declared.contains_key(name) {
                        diags.push(Diagnostic::error(
                            line,
                            format!("reference to undeclared parameter `{name}`"),
                        ));
                    }
                }
            }
        }
    }

    if !seen_tasks.contains_key(MAIN_TASK) {
        let line = plan.tasks.first().map(|t| t.line.get()).unwrap_or(1);
        diags.push(Diagnostic::error(line, "plan has no `main` task"));
    }
    diags
}
