use super::ast::{
    is_identifier, Command, CommandKind, Expr, ParameterDecl, ParameterKind, PlanFile, SourceLine,
    TaskDecl,
};
use super::validate::validate_plan;
use super::{Diagnostic, Severity};

/// Parses plan-file text.
///
/// On success every declaration is returned in source order. On failure the
/// result holds at least one error diagnostic and no AST is produced. The
/// parser recovers at line boundaries so that one pass reports as many
/// problems as possible.
pub fn parse_plan(source: &str) -> Result<PlanFile, Vec<Diagnostic>> {
    let mut parser = Parser::default();
    for (idx, raw) in source.lines().enumerate() {
        parser.line(idx + 1, raw);
    }
    parser.finish()
}

#[derive(Default)]
struct Parser {
    plan: PlanFile,
    open_task: Option<TaskDecl>,
    diags: Vec<Diagnostic>,
}

impl Parser {
    fn error(&mut self, line: usize, message: impl Into<String>) {
        self.diags.push(Diagnostic::error(line, message));
    }

    fn line(&mut self, lineno: usize, raw: &str) {
        let tokens = tokenize(raw);
        let Some(first) = tokens.first() else {
            return;
        };
        let keyword = first.to_ascii_lowercase();
        match keyword.as_str() {
            "parameter" => {
                if self.open_task.is_some() {
                    self.error(lineno, "parameter declaration inside a task block");
                    return;
                }
                if let Some(decl) = self.parameter(lineno, &tokens[1..]) {
                    self.plan.parameters.push(decl);
                }
            }
            "task" => {
                if let Some(open) = &self.open_task {
                    let msg = format!(
                        "task `{}` opened before `{}` (line {}) was closed with endtask",
                        tokens.get(1).map(String::as_str).unwrap_or(""),
                        open.name,
                        open.line.get()
                    );
                    self.error(lineno, msg);
                    return;
                }
                match tokens.len() {
                    2 => {
                        self.open_task = Some(TaskDecl {
                            name: tokens[1].clone(),
                            commands: Vec::new(),
                            line: SourceLine(lineno),
                        });
                    }
                    1 => self.error(lineno, "task declaration without a name"),
                    _ => self.error(lineno, "unexpected tokens after task name"),
                }
            }
            "endtask" => {
                if tokens.len() > 1 {
                    self.error(lineno, "unexpected tokens after endtask");
                }
                match self.open_task.take() {
                    Some(task) => self.plan.tasks.push(task),
                    None => self.error(lineno, "endtask without a matching task"),
                }
            }
            _ => {
                let Some(kind) = self.command(lineno, &keyword, &tokens) else {
                    return;
                };
                match &mut self.open_task {
                    Some(task) => task.commands.push(Command {
                        kind,
                        line: SourceLine(lineno),
                    }),
                    None => self.error(lineno, "command outside of a task block"),
                }
            }
        }
    }

    fn parameter(&mut self, lineno: usize, tokens: &[String]) -> Option<ParameterDecl> {
        let mut tokens = tokens.to_vec();
        match tokens.last_mut() {
            Some(last) if last == ";" => {
                tokens.pop();
            }
            Some(last) if last.ends_with(';') => {
                last.pop();
            }
            _ => {
                self.error(lineno, "parameter declaration must end with `;`");
                return None;
            }
        }
        let (name, kind, args) = match tokens.as_slice() {
            [name, kind, args @ ..] => (name, kind.to_ascii_lowercase(), args),
            [_] => {
                self.error(lineno, "parameter declaration without a kind");
                return None;
            }
            [] => {
                self.error(lineno, "parameter declaration without a name");
                return None;
            }
        };
        if !is_identifier(name) {
            self.error(lineno, format!("`{name}` is not a valid parameter name"));
            return None;
        }
        let kind = match kind.as_str() {
            "single" => match args {
                [v] => ParameterKind::Single(v.clone()),
                _ => {
                    self.error(lineno, "single parameter takes exactly one value");
                    return None;
                }
            },
            "range" => {
                let nums: Vec<Option<f64>> = args
                    .iter()
                    .map(|a| a.parse::<f64>().ok().filter(|v| v.is_finite()))
                    .collect();
                match nums.as_slice() {
                    [Some(lo), Some(hi), Some(step)] => ParameterKind::Range {
                        lo: *lo,
                        hi: *hi,
                        step: *step,
                    },
                    [_, _, _] => {
                        self.error(lineno, "range bounds and step must be finite numbers");
                        return None;
                    }
                    _ => {
                        self.error(lineno, "range parameter takes `<lo> <hi> <step>`");
                        return None;
                    }
                }
            }
            "set" => ParameterKind::Set(args.to_vec()),
            "gridfile" => match args {
                [pattern] => ParameterKind::Gridfile(pattern.clone()),
                _ => {
                    self.error(lineno, "gridfile parameter takes exactly one lfn pattern");
                    return None;
                }
            },
            other => {
                self.error(lineno, format!("unknown parameter kind `{other}`"));
                return None;
            }
        };
        Some(ParameterDecl {
            name: name.clone(),
            kind,
            line: SourceLine(lineno),
        })
    }

    fn command(&mut self, lineno: usize, keyword: &str, tokens: &[String]) -> Option<CommandKind> {
        let args: Vec<Expr> = tokens[1..].iter().map(|t| Expr::new(t.as_str())).collect();
        let pair = |this: &mut Self, what: &str| -> Option<(Expr, Expr)> {
            match args.as_slice() {
                [a, b] => Some((a.clone(), b.clone())),
                _ => {
                    this.error(lineno, format!("{what} takes exactly two operands"));
                    None
                }
            }
        };
        match keyword {
            "copy" => pair(self, "copy").map(|(src, dst)| CommandKind::Copy { src, dst }),
            "mcopy" => pair(self, "mcopy").map(|(src, dst)| CommandKind::MCopy { src, dst }),
            "substitute" => pair(self, "substitute")
                .map(|(template, output)| CommandKind::Substitute { template, output }),
            "execute" | "node:execute" => {
                let Some((program, rest)) = args.split_first() else {
                    self.error(lineno, "execute needs a program");
                    return None;
                };
                Some(CommandKind::Execute {
                    on_node: keyword == "node:execute",
                    program: program.clone(),
                    args: rest.to_vec(),
                })
            }
            _ => {
                self.error(lineno, format!("unknown keyword `{}`", tokens[0]));
                None
            }
        }
    }

    fn finish(mut self) -> Result<PlanFile, Vec<Diagnostic>> {
        if let Some(task) = self.open_task.take() {
            let msg = format!("task `{}` is not terminated by endtask", task.name);
            self.error(task.line.get(), msg);
        }
        if self.diags.iter().any(|d| d.severity == Severity::Error) {
            return Err(self.diags);
        }
        let mut diags = validate_plan(&self.plan);
        if diags.is_empty() {
            Ok(self.plan)
        } else {
            diags.sort_by_key(|d| d.line);
            Err(diags)
        }
    }
}

/// Splits a line on whitespace, dropping everything from a `#`-initial token.
fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace()
        .take_while(|t| !t.starts_with('#'))
        .map(str::to_owned)
        .collect()
}
